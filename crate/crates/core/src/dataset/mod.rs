//! Spectral samples, band axis, CSV ingestion, splitting and feature assembly.

mod synth;

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub use synth::{generate_synthetic, SynthConfig, ABSORPTION_CENTER_NM};

/// Channels delivered by the snapshot sensor.
pub const RAW_BANDS: usize = 125;
/// Channels kept after dropping the noisy edges.
pub const BANDS: usize = 115;
/// Channels dropped at each end of the raw cube.
pub const TRIM: usize = 5;
/// Feature width: retained bands plus one LWIR temperature.
pub const FEATURES: usize = BANDS + 1;

pub const RAW_START_NM: f64 = 450.0;
pub const BAND_STEP_NM: f64 = 4.0;

pub const LWIR_COLUMN: &str = "lwir_c";
pub const TARGET_COLUMN: &str = "soil_moisture_pct";
pub const PLOT_COLUMN: &str = "plot_id";
pub const RECORD_COLUMN: &str = "record_id";

/// One plot-averaged acquisition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSample {
    pub reflectance: Vec<f64>,
    /// Surface temperature in degrees Celsius.
    pub lwir: f64,
    /// Volumetric soil moisture in percent.
    pub soil_moisture: f64,
    pub plot_id: u32,
    pub record_id: u64,
}

impl SpectralSample {
    /// Checks the retained-band invariants.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.reflectance.len() != BANDS {
            return Err(format!(
                "expected {BANDS} reflectance values, got {}",
                self.reflectance.len()
            ));
        }
        if let Some((i, v)) = self
            .reflectance
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(format!(
                "reflectance {v} at {} nm outside [0, 1]",
                BandAxis::standard().wavelengths()[i]
            ));
        }
        if !self.lwir.is_finite() {
            return Err(format!("non-finite LWIR value {}", self.lwir));
        }
        if !(self.soil_moisture.is_finite() && self.soil_moisture >= 0.0) {
            return Err(format!("invalid soil moisture {}", self.soil_moisture));
        }
        Ok(())
    }
}

/// Wavelengths of the retained bands: 470, 474, ..., 926 nm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandAxis {
    wavelengths: Vec<f64>,
}

impl BandAxis {
    pub fn standard() -> Self {
        let raw = raw_wavelengths();
        Self {
            wavelengths: raw[TRIM..RAW_BANDS - TRIM].to_vec(),
        }
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }

    /// Index of the retained band closest to `nm`.
    pub fn nearest(&self, nm: f64) -> usize {
        let mut best = 0;
        for (i, w) in self.wavelengths.iter().enumerate() {
            if (w - nm).abs() < (self.wavelengths[best] - nm).abs() {
                best = i;
            }
        }
        best
    }
}

/// Full 125-channel grid starting at 450 nm.
pub fn raw_wavelengths() -> Vec<f64> {
    (0..RAW_BANDS)
        .map(|k| RAW_START_NM + BAND_STEP_NM * k as f64)
        .collect()
}

/// Drops the first and last five channels of a raw spectrum.
pub fn trim_bands(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.len() != RAW_BANDS {
        return Err(Error::DimensionMismatch {
            expected: RAW_BANDS,
            got: raw.len(),
        });
    }
    Ok(raw[TRIM..RAW_BANDS - TRIM].to_vec())
}

/// Requested train/test partition sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_count: usize,
    pub test_count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    samples: Vec<SpectralSample>,
    band_axis: BandAxis,
}

impl Dataset {
    /// Builds a dataset, validating every sample.
    pub fn new(samples: Vec<SpectralSample>) -> Result<Self> {
        for (row, s) in samples.iter().enumerate() {
            s.validate().map_err(|message| Error::Row { row, message })?;
        }
        Ok(Self {
            samples,
            band_axis: BandAxis::standard(),
        })
    }

    pub fn samples(&self) -> &[SpectralSample] {
        &self.samples
    }

    pub fn band_axis(&self) -> &BandAxis {
        &self.band_axis
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.soil_moisture).collect()
    }

    /// Sub-dataset holding the samples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            band_axis: self.band_axis.clone(),
        }
    }

    /// Reads a dataset from a CSV file. See [`Dataset::from_reader`].
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_reader(file)
    }

    /// Parses CSV with `band_<nm>` columns (125 raw or 115 retained), `lwir_c`,
    /// `soil_moisture_pct`, and optional `plot_id` / `record_id`. Columns are
    /// matched by header name. Raw 125-band input is trimmed on load.
    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let layout = ColumnLayout::from_headers(rdr.headers()?)?;

        let mut samples = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::Row {
                row,
                message: e.to_string(),
            })?;
            if record.len() != layout.width {
                return Err(Error::Row {
                    row,
                    message: format!("expected {} columns, got {}", layout.width, record.len()),
                });
            }
            let num = |col: usize| -> Result<f64> {
                let cell = &record[col];
                cell.parse::<f64>().map_err(|_| Error::Row {
                    row,
                    message: format!("non-numeric cell `{cell}` in column {col}"),
                })
            };
            let mut spectrum = Vec::with_capacity(layout.bands.len());
            for &col in &layout.bands {
                spectrum.push(num(col)?);
            }
            let reflectance = if layout.raw { trim_bands(&spectrum)? } else { spectrum };
            let plot_id = match layout.plot {
                Some(col) => record[col].parse::<u32>().map_err(|_| Error::Row {
                    row,
                    message: format!("invalid plot_id `{}`", &record[col]),
                })?,
                None => 0,
            };
            let record_id = match layout.record {
                Some(col) => record[col].parse::<u64>().map_err(|_| Error::Row {
                    row,
                    message: format!("invalid record_id `{}`", &record[col]),
                })?,
                None => row as u64,
            };
            let sample = SpectralSample {
                reflectance,
                lwir: num(layout.lwir)?,
                soil_moisture: num(layout.target)?,
                plot_id,
                record_id,
            };
            sample.validate().map_err(|message| Error::Row { row, message })?;
            samples.push(sample);
        }
        Ok(Self {
            samples,
            band_axis: BandAxis::standard(),
        })
    }

    /// Writes the dataset with 115 retained band columns.
    pub fn to_csv_string(&self) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = self
            .band_axis
            .wavelengths()
            .iter()
            .map(|w| format!("band_{}", *w as u32))
            .collect();
        header.extend(
            [LWIR_COLUMN, TARGET_COLUMN, PLOT_COLUMN, RECORD_COLUMN].map(String::from),
        );
        wtr.write_record(&header)?;
        for s in &self.samples {
            let mut row: Vec<String> = s.reflectance.iter().map(|v| v.to_string()).collect();
            row.push(s.lwir.to_string());
            row.push(s.soil_moisture.to_string());
            row.push(s.plot_id.to_string());
            row.push(s.record_id.to_string());
            wtr.write_record(&row)?;
        }
        let bytes = wtr.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
    }

    /// Random partition into `(train, test)` by a seeded Fisher-Yates shuffle.
    pub fn split_train_test(&self, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
        let idx = split_indices(self.len(), spec)?;
        Ok((self.select(&idx.0), self.select(&idx.1)))
    }

    /// Feature matrix (`n x 116`: bands then LWIR) and target vector.
    pub fn assemble_features(&self) -> Result<(Array2<f64>, Array1<f64>)> {
        if self.is_empty() {
            return Err(Error::invalid("cannot assemble features of an empty dataset"));
        }
        let n = self.len();
        let mut x = Array2::zeros((n, FEATURES));
        let mut y = Array1::zeros(n);
        for (i, s) in self.samples.iter().enumerate() {
            let mut row = x.row_mut(i);
            for (j, &r) in s.reflectance.iter().enumerate() {
                row[j] = r;
            }
            row[BANDS] = s.lwir;
            y[i] = s.soil_moisture;
        }
        Ok((x, y))
    }

    /// Per-feature mean and sample standard deviation over the 116 columns.
    pub fn feature_mean_std(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let (x, _) = self.assemble_features()?;
        let n = x.nrows() as f64;
        let mut mean = Vec::with_capacity(FEATURES);
        let mut std = Vec::with_capacity(FEATURES);
        for col in x.columns() {
            let m = col.sum() / n;
            let var = if x.nrows() > 1 {
                col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            mean.push(m);
            std.push(var.sqrt());
        }
        Ok((mean, std))
    }

    /// Histogram of the soil-moisture targets.
    pub fn target_histogram(&self, n_bins: usize) -> Result<Histogram> {
        if self.is_empty() {
            return Err(Error::invalid("histogram of an empty dataset"));
        }
        Histogram::equal_width(&self.targets(), n_bins)
    }
}

/// Shuffled index partition used by [`Dataset::split_train_test`].
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if spec.train_count + spec.test_count != n {
        return Err(Error::invalid(format!(
            "split counts {} + {} do not sum to dataset size {n}",
            spec.train_count, spec.test_count
        )));
    }
    if spec.train_count == 0 || spec.test_count == 0 {
        return Err(Error::invalid("split counts must both be positive"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    SplitMix64::new(spec.seed).shuffle(&mut idx);
    let test = idx.split_off(spec.train_count);
    Ok((idx, test))
}

struct ColumnLayout {
    width: usize,
    raw: bool,
    bands: Vec<usize>,
    lwir: usize,
    target: usize,
    plot: Option<usize>,
    record: Option<usize>,
}

impl ColumnLayout {
    fn from_headers(headers: &csv::StringRecord) -> Result<Self> {
        let mut bands: BTreeMap<u32, usize> = BTreeMap::new();
        let mut named: BTreeMap<&str, usize> = BTreeMap::new();
        for (col, name) in headers.iter().enumerate() {
            if let Some(nm) = name.strip_prefix("band_") {
                let nm: u32 = nm
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad band column `{name}`")))?;
                if bands.insert(nm, col).is_some() {
                    return Err(Error::invalid(format!("duplicate column `{name}`")));
                }
            } else if named.insert(name, col).is_some() {
                return Err(Error::invalid(format!("duplicate column `{name}`")));
            }
        }
        let raw = match bands.len() {
            RAW_BANDS => true,
            BANDS => false,
            k => {
                return Err(Error::invalid(format!(
                    "expected {RAW_BANDS} or {BANDS} band columns, found {k}"
                )))
            }
        };
        let first = if raw { RAW_START_NM } else { BandAxis::standard().wavelengths[0] };
        for (k, nm) in bands.keys().enumerate() {
            let want = first + BAND_STEP_NM * k as f64;
            if *nm as f64 != want {
                return Err(Error::invalid(format!(
                    "band column band_{nm} does not match the expected grid (band_{want})"
                )));
            }
        }
        let need = |name: &str| {
            named
                .get(name)
                .copied()
                .ok_or_else(|| Error::invalid(format!("missing column `{name}`")))
        };
        Ok(Self {
            width: headers.len(),
            raw,
            bands: bands.values().copied().collect(),
            lwir: need(LWIR_COLUMN)?,
            target: need(TARGET_COLUMN)?,
            plot: named.get(PLOT_COLUMN).copied(),
            record: named.get(RECORD_COLUMN).copied(),
        })
    }
}

/// Equal-width histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Bins spanning `[min, max]` of `values`; the maximum lands in the last bin.
    pub fn equal_width(values: &[f64], n_bins: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("histogram of no values"));
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self::with_edges(values, equal_width_edges(lo, hi, n_bins)?))
    }

    /// Counts on caller-supplied edges (at least two, ascending). Values
    /// outside the edges are clamped into the first or last bin.
    pub fn with_edges(values: &[f64], edges: Vec<f64>) -> Self {
        let mut counts = vec![0; edges.len() - 1];
        for &v in values {
            counts[bin_of(&edges, v)] += 1;
        }
        Self { edges, counts }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_left,bin_right,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", self.edges[i], self.edges[i + 1], c));
        }
        out
    }
}

pub fn equal_width_edges(lo: f64, hi: f64, n_bins: usize) -> Result<Vec<f64>> {
    if n_bins == 0 {
        return Err(Error::invalid("number of bins must be positive"));
    }
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::invalid("non-finite histogram range"));
    }
    let width = (hi - lo) / n_bins as f64;
    let mut edges: Vec<f64> = (0..n_bins).map(|i| lo + width * i as f64).collect();
    edges.push(hi);
    Ok(edges)
}

/// Bin index of `v` on `edges`; values at or beyond the upper edge go to the last bin.
pub fn bin_of(edges: &[f64], v: f64) -> usize {
    let n_bins = edges.len() - 1;
    let lo = edges[0];
    let hi = edges[n_bins];
    if hi <= lo || v <= lo {
        return if hi <= lo && v >= hi { n_bins - 1 } else { 0 };
    }
    let k = ((v - lo) / (hi - lo) * n_bins as f64).floor();
    (k.max(0.0) as usize).min(n_bins - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(v: f64, lwir: f64, m: f64) -> SpectralSample {
        SpectralSample {
            reflectance: vec![v; BANDS],
            lwir,
            soil_moisture: m,
            plot_id: 1,
            record_id: 0,
        }
    }

    fn header(raw: bool) -> String {
        let (start, n) = if raw { (450, RAW_BANDS) } else { (470, BANDS) };
        let mut cols: Vec<String> = (0..n).map(|k| format!("band_{}", start + 4 * k)).collect();
        cols.push(LWIR_COLUMN.into());
        cols.push(TARGET_COLUMN.into());
        cols.join(",")
    }

    #[test]
    fn band_axis_endpoints() {
        let axis = BandAxis::standard();
        let w = axis.wavelengths();
        assert_eq!(w.len(), BANDS);
        assert_eq!(w[0], 470.0);
        assert_eq!(w[BANDS - 1], 926.0);
        assert!(w.windows(2).all(|p| p[1] - p[0] == 4.0));
        assert_eq!(w[axis.nearest(826.0)], 826.0);
    }

    #[test]
    fn trim_index_identity() {
        let raw: Vec<f64> = (0..RAW_BANDS).map(|k| k as f64).collect();
        let out = trim_bands(&raw).unwrap();
        assert_eq!(out, (5..=119).map(|k| k as f64).collect::<Vec<_>>());
    }

    #[test]
    fn trim_constant_and_wavelengths() {
        assert_eq!(trim_bands(&[0.3; RAW_BANDS]).unwrap(), vec![0.3; BANDS]);
        let kept = trim_bands(&raw_wavelengths()).unwrap();
        let expected: Vec<f64> = (5..=119).map(|k| 450.0 + 4.0 * k as f64).collect();
        assert_eq!(kept, expected);
        assert_eq!(kept[0], 470.0);
        assert_eq!(kept[114], 926.0);
    }

    #[test]
    fn trim_rejects_wrong_length() {
        assert!(matches!(
            trim_bands(&[0.0; 115]),
            Err(Error::DimensionMismatch { expected: 125, got: 115 })
        ));
    }

    #[test]
    fn load_single_boundary_row() {
        let mut csv = header(true);
        csv.push('\n');
        let mut row = vec!["0.0".to_string(); RAW_BANDS];
        row.push("20.0".into());
        row.push("0.0".into());
        csv.push_str(&row.join(","));
        csv.push('\n');
        let ds = Dataset::from_reader(csv.as_bytes()).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.samples()[0].reflectance, vec![0.0; BANDS]);
        assert_eq!(ds.samples()[0].lwir, 20.0);
    }

    #[test]
    fn load_columns_by_name_with_crlf() {
        // target first, bands reversed
        let mut cols: Vec<String> = (0..BANDS).rev().map(|k| format!("band_{}", 470 + 4 * k)).collect();
        cols.insert(0, TARGET_COLUMN.into());
        cols.push(LWIR_COLUMN.into());
        let mut vals: Vec<String> = (0..BANDS).rev().map(|k| format!("{}", k as f64 / 1000.0)).collect();
        vals.insert(0, "12.5".into());
        vals.push("21.0".into());
        let csv = format!("{}\r\n{}\r\n", cols.join(","), vals.join(","));
        let ds = Dataset::from_reader(csv.as_bytes()).unwrap();
        let s = &ds.samples()[0];
        assert_eq!(s.soil_moisture, 12.5);
        assert_eq!(s.lwir, 21.0);
        assert_eq!(s.reflectance[0], 0.0);
        assert_eq!(s.reflectance[114], 0.114);
    }

    #[test]
    fn load_rejects_out_of_range_reflectance() {
        let mut csv = header(false);
        csv.push('\n');
        for r in 0..2 {
            let mut row = vec!["0.5".to_string(); BANDS];
            if r == 1 {
                row[40] = "1.5".into();
            }
            row.push("20".into());
            row.push("10".into());
            csv.push_str(&row.join(","));
            csv.push('\n');
        }
        match Dataset::from_reader(csv.as_bytes()) {
            Err(Error::Row { row, message }) => {
                assert_eq!(row, 1);
                assert!(message.contains("1.5"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn raw_edges_are_not_validated() {
        // out-of-range values in the trimmed edge bands are discarded
        let mut csv = header(true);
        csv.push('\n');
        let mut row = vec!["0.5".to_string(); RAW_BANDS];
        row[0] = "3.0".into();
        row[124] = "-1.0".into();
        row.push("20".into());
        row.push("10".into());
        csv.push_str(&row.join(","));
        assert!(Dataset::from_reader(csv.as_bytes()).is_ok());
    }

    #[test]
    fn load_rejects_non_numeric_and_ragged_rows() {
        let mut csv = header(false);
        csv.push('\n');
        let mut row = vec!["0.5".to_string(); BANDS];
        row.push("warm".into());
        row.push("10".into());
        csv.push_str(&row.join(","));
        assert!(matches!(
            Dataset::from_reader(csv.as_bytes()),
            Err(Error::Row { row: 0, .. })
        ));

        let mut csv = header(false);
        csv.push_str("\n0.5,0.5\n");
        assert!(matches!(
            Dataset::from_reader(csv.as_bytes()),
            Err(Error::Row { row: 0, .. })
        ));
    }

    #[test]
    fn load_missing_file() {
        assert!(matches!(
            Dataset::load_csv("/nonexistent/soil.csv"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn load_rejects_wrong_band_count() {
        let csv = format!("band_470,band_474,{LWIR_COLUMN},{TARGET_COLUMN}\n0.1,0.1,20,10\n");
        assert!(matches!(
            Dataset::from_reader(csv.as_bytes()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let ds = Dataset::new(vec![sample(0.25, 18.5, 9.0), sample(0.125, 22.0, 17.25)]).unwrap();
        let text = ds.to_csv_string().unwrap();
        let back = Dataset::from_reader(text.as_bytes()).unwrap();
        assert_eq!(back.samples()[1].reflectance, ds.samples()[1].reflectance);
        assert_eq!(back.targets(), ds.targets());
    }

    #[test]
    fn split_two_samples() {
        let ds = Dataset::new(vec![sample(0.1, 20.0, 1.0), sample(0.2, 20.0, 2.0)]).unwrap();
        for seed in 0..20 {
            let spec = SplitSpec { train_count: 1, test_count: 1, seed };
            let (a, b) = ds.split_train_test(&spec).unwrap();
            assert_eq!(a.len(), 1);
            assert_eq!(b.len(), 1);
            assert_ne!(a.samples()[0], b.samples()[0]);
        }
    }

    #[test]
    fn split_rejects_bad_counts() {
        let spec = SplitSpec { train_count: 3, test_count: 3, seed: 0 };
        assert!(split_indices(5, &spec).is_err());
        let spec = SplitSpec { train_count: 0, test_count: 5, seed: 0 };
        assert!(split_indices(5, &spec).is_err());
    }

    #[test]
    fn assemble_concatenates_bands_and_lwir() {
        let ds = Dataset::new(vec![sample(0.5, 25.0, 3.0)]).unwrap();
        let (x, y) = ds.assemble_features().unwrap();
        assert_eq!(x.dim(), (1, FEATURES));
        assert!(x.row(0).iter().take(BANDS).all(|&v| v == 0.5));
        assert_eq!(x[[0, 115]], 25.0);
        assert_eq!(y[0], 3.0);
    }

    #[test]
    fn assemble_empty_fails() {
        let ds = Dataset::new(vec![]).unwrap();
        assert!(ds.assemble_features().is_err());
        assert!(ds.target_histogram(3).is_err());
    }

    #[test]
    fn histogram_hand_check() {
        let h = Histogram::equal_width(&[0.0, 1.0, 2.0, 3.0], 2).unwrap();
        assert_eq!(h.edges, vec![0.0, 1.5, 3.0]);
        assert_eq!(h.counts, vec![2, 2]);
        assert_eq!(h.to_csv(), "bin_left,bin_right,count\n0,1.5,2\n1.5,3,2\n");
    }

    #[test]
    fn histogram_single_bin_and_constant_values() {
        let h = Histogram::equal_width(&[4.0, 1.0, 9.0], 1).unwrap();
        assert_eq!(h.counts, vec![3]);
        let h = Histogram::equal_width(&[2.0, 2.0, 2.0], 4).unwrap();
        assert_eq!(h.counts.iter().sum::<usize>(), 3);
        assert!(Histogram::equal_width(&[1.0], 0).is_err());
    }
}
