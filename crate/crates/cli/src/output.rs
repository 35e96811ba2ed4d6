//! All-or-nothing writes into the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

/// Files collected in memory and written only once every one of them exists.
#[derive(Debug, Default)]
pub struct OutputSet {
    files: Vec<(PathBuf, String)>,
}

impl OutputSet {
    pub fn add(&mut self, relative: impl Into<PathBuf>, contents: String) {
        self.files.push((relative.into(), contents));
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    /// Writes every file below `root`. On failure, files written so far are
    /// removed, as is `root` itself when this call created it.
    pub fn commit(self, root: &Path) -> Result<Vec<PathBuf>> {
        for (rel, _) in &self.files {
            if rel.is_absolute() || rel.components().any(|c| matches!(c, std::path::Component::ParentDir)) {
                bail!("refusing to write {} outside the output directory", rel.display());
            }
        }
        let created_root = !root.exists();
        let mut written: Vec<PathBuf> = Vec::new();
        let mut created_dirs: Vec<PathBuf> = Vec::new();
        let result = (|| -> Result<()> {
            fs::create_dir_all(root).with_context(|| format!("cannot create {}", root.display()))?;
            for (rel, contents) in &self.files {
                let path = root.join(rel);
                if let Some(parent) = path.parent() {
                    if !parent.exists() {
                        fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
                        created_dirs.push(parent.to_path_buf());
                    }
                }
                fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
                written.push(path);
            }
            Ok(())
        })();
        if let Err(e) = result {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            for d in created_dirs.iter().rev() {
                let _ = fs::remove_dir(d);
            }
            if created_root {
                let _ = fs::remove_dir(root);
            }
            return Err(e);
        }
        Ok(written)
    }
}
