//! Synthetic plot-averaged scenes.
//!
//! Reflectance is a soil/vegetation mixture whose brightness drops with
//! moisture, multiplied by a Gaussian absorption dip at 826 nm whose depth
//! grows with moisture. LWIR temperature falls affinely with moisture.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{BandAxis, Dataset, SpectralSample};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};

pub const ABSORPTION_CENTER_NM: f64 = 826.0;
const ABSORPTION_WIDTH_NM: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub moisture_min: f64,
    pub moisture_max: f64,
    /// Standard deviation of the additive per-band reflectance noise.
    pub noise: f64,
    /// Standard deviation of the target perturbation (percentage points).
    pub target_noise: f64,
    /// Standard deviation of the LWIR noise in degrees Celsius.
    pub lwir_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_samples: 1332,
            moisture_min: 8.0,
            moisture_max: 28.0,
            noise: 0.01,
            target_noise: 1.5,
            lwir_noise: 3.0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::invalid("sample count must be positive"));
        }
        if !(self.moisture_min >= 0.0 && self.moisture_max > self.moisture_min) {
            return Err(Error::invalid(format!(
                "moisture range [{}, {}] is empty or negative",
                self.moisture_min, self.moisture_max
            )));
        }
        for (name, v) in [
            ("noise", self.noise),
            ("target_noise", self.target_noise),
            ("lwir_noise", self.lwir_noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// Moisture rescaled to `[0, 1]` over the configured range.
    fn wetness(&self, moisture: f64) -> f64 {
        ((moisture - self.moisture_min) / (self.moisture_max - self.moisture_min)).clamp(0.0, 1.0)
    }

    /// Relative depth of the 826 nm dip at `moisture`.
    pub fn absorption_depth(&self, moisture: f64) -> f64 {
        let w = self.wetness(moisture);
        0.45 * (1.0 - (-3.0 * w).exp()) / (1.0 - (-3.0f64).exp())
    }

    /// Broadband brightness factor at `moisture` (darker when wet).
    pub fn brightness(&self, moisture: f64) -> f64 {
        let w = self.wetness(moisture);
        1.0 - 0.25 * w * w
    }

    /// Noise-free reflectance at wavelength `nm`.
    pub fn reflectance_at(&self, nm: f64, moisture: f64) -> f64 {
        let soil = 0.12 + 0.22 * (nm - 450.0) / 500.0;
        let green = 0.03 * (-((nm - 550.0) / 35.0).powi(2)).exp();
        let red_edge = 0.40 / (1.0 + (-(nm - 715.0) / 14.0).exp());
        let veg = 0.04 + green + red_edge;
        let mix = 0.6 * soil + 0.4 * veg;
        let dip = 1.0
            - self.absorption_depth(moisture)
                * (-(nm - ABSORPTION_CENTER_NM).powi(2) / (2.0 * ABSORPTION_WIDTH_NM.powi(2))).exp();
        self.brightness(moisture) * mix * dip
    }

    /// Noise-free surface temperature at `moisture`.
    pub fn lwir_at(&self, moisture: f64) -> f64 {
        32.0 - 0.35 * moisture
    }
}

/// Draws a deterministic synthetic dataset.
pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let axis = BandAxis::standard();
    let mut draw = SplitMix64::new(derive_seed(seed, "synth/moisture"));
    let mut band_noise = SplitMix64::new(derive_seed(seed, "synth/band-noise"));
    let mut other_noise = SplitMix64::new(derive_seed(seed, "synth/lwir-target-noise"));
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut samples = Vec::with_capacity(config.n_samples);
    for i in 0..config.n_samples {
        let moisture = config.moisture_min
            + (config.moisture_max - config.moisture_min) * draw.next_f64();
        let reflectance = axis
            .wavelengths()
            .iter()
            .map(|&nm| {
                let noise = config.noise * std_normal.sample(&mut band_noise);
                (config.reflectance_at(nm, moisture) + noise).clamp(0.0, 1.0)
            })
            .collect();
        let lwir = config.lwir_at(moisture) + config.lwir_noise * std_normal.sample(&mut other_noise);
        let measured =
            (moisture + config.target_noise * std_normal.sample(&mut other_noise)).max(0.0);
        samples.push(SpectralSample {
            reflectance,
            lwir,
            soil_moisture: measured,
            plot_id: (i % 8) as u32 + 1,
            record_id: i as u64,
        });
    }
    Dataset::new(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{SplitSpec, BANDS, FEATURES};

    fn noiseless(n: usize) -> SynthConfig {
        SynthConfig {
            n_samples: n,
            noise: 0.0,
            target_noise: 0.0,
            lwir_noise: 0.0,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = SynthConfig { n_samples: 0, ..SynthConfig::default() };
        assert!(generate_synthetic(&cfg, 1).is_err());
        let cfg = SynthConfig { moisture_min: 20.0, moisture_max: 10.0, ..SynthConfig::default() };
        assert!(generate_synthetic(&cfg, 1).is_err());
    }

    #[test]
    fn noiseless_rows_are_a_function_of_moisture() {
        let ds = generate_synthetic(&noiseless(10), 4).unwrap();
        let cfg = noiseless(10);
        // re-evaluate the curve at the same moisture: rows must coincide exactly
        for s in ds.samples() {
            let again: Vec<f64> = BandAxis::standard()
                .wavelengths()
                .iter()
                .map(|&nm| cfg.reflectance_at(nm, s.soil_moisture).clamp(0.0, 1.0))
                .collect();
            assert_eq!(s.reflectance, again);
        }
    }

    #[test]
    fn default_dataset_is_schema_compatible() {
        let ds = generate_synthetic(&SynthConfig::default(), 1).unwrap();
        assert_eq!(ds.len(), 1332);
        let text = ds.to_csv_string().unwrap();
        let back = Dataset::from_reader(text.as_bytes()).unwrap();
        assert_eq!(back, ds);
        let (train, test) = back
            .split_train_test(&SplitSpec { train_count: 641, test_count: 691, seed: 3 })
            .unwrap();
        assert_eq!((train.len(), test.len()), (641, 691));
        let (x, _) = train.assemble_features().unwrap();
        assert_eq!(x.ncols(), FEATURES);
        assert!(ds.samples().iter().all(|s| s.reflectance.len() == BANDS));
    }

    #[test]
    fn bit_reproducible() {
        let cfg = SynthConfig { n_samples: 50, ..SynthConfig::default() };
        assert_eq!(generate_synthetic(&cfg, 9).unwrap(), generate_synthetic(&cfg, 9).unwrap());
        assert_ne!(generate_synthetic(&cfg, 9).unwrap(), generate_synthetic(&cfg, 10).unwrap());
    }

    #[test]
    fn absorption_depth_increases_with_moisture() {
        let cfg = noiseless(200);
        let ds = generate_synthetic(&cfg, 2).unwrap();
        let axis = BandAxis::standard();
        let center = axis.nearest(ABSORPTION_CENTER_NM);
        let left = axis.nearest(778.0);
        let right = axis.nearest(874.0);
        let mut rows: Vec<(f64, f64)> = ds
            .samples()
            .iter()
            .map(|s| {
                let r = &s.reflectance;
                let continuum = 0.5 * (r[left] + r[right]);
                (s.soil_moisture, 1.0 - r[center] / continuum)
            })
            .collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in rows.windows(2) {
            if w[1].0 > w[0].0 {
                assert!(w[1].1 > w[0].1, "depth not increasing at {:?}", w);
            }
        }
        // formula sweep
        let mut prev = -1.0;
        for k in 0..=100 {
            let m = 8.0 + 0.2 * k as f64;
            let d = cfg.absorption_depth(m);
            assert!(d > prev);
            prev = d;
        }
    }

    #[test]
    fn uniform_targets_fill_histogram_evenly() {
        let cfg = SynthConfig { n_samples: 10_000, target_noise: 0.0, ..SynthConfig::default() };
        let ds = generate_synthetic(&cfg, 5).unwrap();
        let hist = ds.target_histogram(10).unwrap();
        let n = 10_000.0;
        let sd = (n * 0.1 * 0.9f64).sqrt();
        for &c in &hist.counts {
            assert!((c as f64 - n / 10.0).abs() <= 5.0 * sd, "count {c}");
        }
        assert_eq!(hist.counts.iter().sum::<usize>(), 10_000);
    }
}
