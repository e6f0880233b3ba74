use std::path::PathBuf;

use eosgd_core::datasets::{make_1d_dataset, make_hard_dataset, sample_population, sample_separable, DistributionSpec};
use eosgd_core::{io, Dataset, Result};
use serde::{Deserialize, Serialize};

/// Where a dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Hard { gamma: f64 },
    Separable { n: usize, d: usize, gamma: f64, seed: u64 },
    OneDim { z: Vec<f64> },
    Population { spec: DistributionSpec, n: usize, seed: u64 },
    File { path: PathBuf },
}

impl DatasetSource {
    pub fn load(&self) -> Result<Dataset> {
        self.load_seeded(None)
    }

    /// Loads the dataset; `seed` replaces the seed of random sources.
    pub fn load_seeded(&self, seed: Option<u64>) -> Result<Dataset> {
        match self {
            Self::Hard { gamma } => make_hard_dataset(*gamma),
            Self::Separable { n, d, gamma, seed: s } => sample_separable(*n, *d, *gamma, seed.unwrap_or(*s)),
            Self::OneDim { z } => make_1d_dataset(z),
            Self::Population { spec, n, seed: s } => sample_population(spec, *n, seed.unwrap_or(*s)),
            Self::File { path } => io::read_dataset(path),
        }
    }

    /// Seed of a random source.
    pub fn seed(&self) -> Option<u64> {
        match self {
            Self::Separable { seed, .. } | Self::Population { seed, .. } => Some(*seed),
            _ => None,
        }
    }
}
