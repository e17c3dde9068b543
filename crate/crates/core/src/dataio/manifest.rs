//! Corpus manifest (TOML).
//!
//! ```toml
//! max_len = 100
//! labels = "labels.csv"
//!
//! [splits]
//! train = ["s000", "s001"]
//! dev = ["s002"]
//!
//! [[feature_sets]]
//! name = "fs01"
//! path = "fs01.csv"
//! ```
//!
//! Relative paths resolve against the manifest's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{csvio, DataError, DataResult, Dataset, FeatureSet, LabelTrack};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSetEntry {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<String>,
    pub dev: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub max_len: usize,
    pub labels: PathBuf,
    pub splits: Splits,
    pub feature_sets: Vec<FeatureSetEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn read(path: &Path) -> DataResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut m: Manifest = toml::from_str(&text)
            .map_err(|e| DataError::Manifest(format!("{}: {e}", path.display())))?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn to_toml(&self) -> DataResult<String> {
        toml::to_string(self).map_err(|e| DataError::Manifest(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> DataResult<()> {
        std::fs::write(path, self.to_toml()?).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    fn validate(&self) -> DataResult<()> {
        if self.max_len == 0 {
            return Err(DataError::Manifest("max_len must be positive".into()));
        }
        if self.feature_sets.is_empty() {
            return Err(DataError::Manifest("no feature sets declared".into()));
        }
        let mut names: Vec<&str> = self.feature_sets.iter().map(|f| f.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(DataError::Manifest("duplicate feature set name".into()));
        }
        Ok(())
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn has_feature_set(&self, name: &str) -> bool {
        self.feature_sets.iter().any(|f| f.name == name)
    }

    /// Loads every declared CSV and builds the padded dataset.
    pub fn load_dataset(&self) -> DataResult<Dataset> {
        let labels = csvio::load_label_csv(&self.resolve(&self.labels))?;
        let mut sets = Vec::with_capacity(self.feature_sets.len());
        for entry in &self.feature_sets {
            let tracks = csvio::load_feature_csv(&self.resolve(&entry.path), &entry.name)?;
            sets.push(FeatureSet::from_tracks(&entry.name, tracks)?);
        }
        Dataset::new(
            self.max_len,
            sets,
            labels,
            self.splits.train.clone(),
            self.splits.dev.clone(),
        )
    }
}

impl Dataset {
    /// Writes one CSV per feature set, `labels.csv` and `manifest.toml`
    /// into `dir`, returning the manifest.
    pub fn write_corpus(&self, dir: &Path) -> DataResult<Manifest> {
        std::fs::create_dir_all(dir).map_err(|source| DataError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let labels: Vec<LabelTrack> = self.labels.values().cloned().collect();
        csvio::write_label_csv(&dir.join("labels.csv"), &labels)?;
        let mut entries = Vec::new();
        for fs in &self.feature_sets {
            let file = format!("{}.csv", fs.name);
            let tracks: Vec<_> = fs.tracks.values().cloned().collect();
            csvio::write_feature_csv(&dir.join(&file), &tracks)?;
            entries.push(FeatureSetEntry {
                name: fs.name.clone(),
                path: PathBuf::from(file),
            });
        }
        let manifest = Manifest {
            max_len: self.max_len,
            labels: PathBuf::from("labels.csv"),
            splits: Splits {
                train: self.train.clone(),
                dev: self.dev.clone(),
            },
            feature_sets: entries,
            base_dir: dir.to_path_buf(),
        };
        manifest.write(&dir.join("manifest.toml"))?;
        Ok(manifest)
    }
}
