//! Epoch and covariance datasets, LOSO splits, and the synthetic generator.

mod covariance;
pub(crate) mod io;
mod loso;
mod synth;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spd::{Mat, SpdMatrix};

pub use covariance::{estimate_covariance, trace_normalize, SHRINKAGE};
pub use io::{
    load_covariances, load_epochs, read_covariances, read_epochs, save_covariances, save_epochs,
    write_covariances, write_epochs, write_labels_csv,
};
pub use loso::{loso_splits, LosoSplit};
pub use synth::{synth_generate, SynthConfig};

/// Largest number of action classes the loaders accept.
pub const MAX_CLASSES: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubjectId(pub u32);

impl std::fmt::Display for SubjectId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// One trial of raw signal, `channels × samples`.
#[derive(Clone, Debug, PartialEq)]
pub struct Epoch {
    pub subject: SubjectId,
    pub label: usize,
    pub samples: Mat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochSet {
    channels: usize,
    epochs: Vec<Epoch>,
}

impl EpochSet {
    pub fn new(channels: usize, epochs: Vec<Epoch>) -> Result<Self> {
        for (i, e) in epochs.iter().enumerate() {
            if e.samples.nrows() != channels {
                return Err(Error::Shape(format!(
                    "epoch {i} has {} channels, expected {channels}",
                    e.samples.nrows()
                )));
            }
            if e.label >= MAX_CLASSES {
                return Err(Error::Config(format!("epoch {i} has label {} out of range", e.label)));
            }
        }
        Ok(Self { channels, epochs })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn epochs(&self) -> &[Epoch] {
        &self.epochs
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> EpochSet {
        EpochSet {
            channels: self.channels,
            epochs: indices.iter().map(|&i| self.epochs[i].clone()).collect(),
        }
    }

    /// Per-epoch covariances; see [`estimate_covariance`].
    pub fn covariances(&self, shrinkage: bool) -> Result<CovarianceSet> {
        let items = self
            .epochs
            .iter()
            .map(|e| {
                Ok(CovItem {
                    subject: e.subject,
                    label: e.label,
                    cov: estimate_covariance(&e.samples, shrinkage)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        CovarianceSet::new(self.channels, items)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CovItem {
    pub subject: SubjectId,
    pub label: usize,
    pub cov: SpdMatrix,
}

/// Labelled SPD trial covariances of a common dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceSet {
    dim: usize,
    items: Vec<CovItem>,
}

impl CovarianceSet {
    pub fn new(dim: usize, items: Vec<CovItem>) -> Result<Self> {
        for (i, it) in items.iter().enumerate() {
            if it.cov.dim() != dim {
                return Err(Error::Shape(format!(
                    "item {i} has dimension {}, expected {dim}",
                    it.cov.dim()
                )));
            }
            if it.label >= MAX_CLASSES {
                return Err(Error::Config(format!("item {i} has label {} out of range", it.label)));
            }
        }
        Ok(Self { dim, items })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn items(&self) -> &[CovItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn covs(&self) -> Vec<SpdMatrix> {
        self.items.iter().map(|i| i.cov.clone()).collect()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.items.iter().map(|i| i.label).collect()
    }

    pub fn subject_ids(&self) -> Vec<SubjectId> {
        self.items.iter().map(|i| i.subject).collect()
    }

    /// Distinct subjects in ascending order.
    pub fn subjects(&self) -> Vec<SubjectId> {
        self.items
            .iter()
            .map(|i| i.subject)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// One more than the largest label present (0 when empty).
    pub fn n_classes(&self) -> usize {
        self.items.iter().map(|i| i.label + 1).max().unwrap_or(0)
    }

    pub fn subset(&self, indices: &[usize]) -> CovarianceSet {
        CovarianceSet {
            dim: self.dim,
            items: indices.iter().map(|&i| self.items[i].clone()).collect(),
        }
    }

    pub fn indices_of(&self, subject: SubjectId) -> Vec<usize> {
        (0..self.items.len()).filter(|&i| self.items[i].subject == subject).collect()
    }

    /// Same labels and subjects with replaced matrices (e.g. after alignment).
    pub fn with_covs(&self, covs: Vec<SpdMatrix>) -> Result<CovarianceSet> {
        if covs.len() != self.items.len() {
            return Err(Error::Shape(format!(
                "{} matrices for {} items",
                covs.len(),
                self.items.len()
            )));
        }
        let dim = covs.first().map_or(self.dim, |c| c.dim());
        let items = self
            .items
            .iter()
            .zip(covs)
            .map(|(it, cov)| CovItem {
                subject: it.subject,
                label: it.label,
                cov,
            })
            .collect();
        CovarianceSet::new(dim, items)
    }
}
