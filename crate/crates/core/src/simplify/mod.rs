//! Simplified proxies for one attention head: low-rank projection of keys
//! and queries, k-means quantization, and one-hot attention.

pub mod apply;
pub mod fit;
pub mod io;

pub use apply::{run_simplified, SimplifiedRunner};
pub use fit::{collect_embeddings, fit, fit_svd_ranks, HeadEmbeddings};
pub use io::{load_fitted, save_fitted};

use serde::{Deserialize, Serialize};

use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SimplifierKind {
    Svd { rank: usize },
    KMeans { clusters: usize },
    OneHot,
}

impl SimplifierKind {
    pub fn name(&self) -> &'static str {
        match self {
            SimplifierKind::Svd { .. } => "svd",
            SimplifierKind::KMeans { .. } => "kmeans",
            SimplifierKind::OneHot => "one_hot",
        }
    }

    /// Rank or cluster count; 0 for one-hot.
    pub fn strength(&self) -> usize {
        match *self {
            SimplifierKind::Svd { rank } => rank,
            SimplifierKind::KMeans { clusters } => clusters,
            SimplifierKind::OneHot => 0,
        }
    }
}

/// Which sequences the simplifier was fitted on.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitSample {
    pub dataset: String,
    pub sequences: usize,
    pub seed: u64,
}

impl Default for FitSample {
    fn default() -> Self {
        Self {
            dataset: "train".into(),
            sequences: 1000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplifierSpec {
    pub layer: usize,
    pub head: usize,
    #[serde(flatten)]
    pub kind: SimplifierKind,
    #[serde(default)]
    pub fit: FitSample,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FittedState {
    /// `basis` is d_h × r with orthonormal columns.
    Svd { basis: Tensor<f64>, singular_values: Vec<f64> },
    /// Each center matrix is k × d_h.
    KMeans {
        key_centers: Tensor<f64>,
        query_centers: Tensor<f64>,
    },
    OneHot,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FittedSimplifier {
    pub spec: SimplifierSpec,
    pub state: FittedState,
    /// Embedding rows (per role) seen during fitting.
    pub fit_rows: usize,
}

impl FittedSimplifier {
    /// The parameterless one-hot rule at a head.
    pub fn one_hot(layer: usize, head: usize) -> Self {
        Self {
            spec: SimplifierSpec {
                layer,
                head,
                kind: SimplifierKind::OneHot,
                fit: FitSample {
                    dataset: String::new(),
                    sequences: 0,
                    seed: 0,
                },
            },
            state: FittedState::OneHot,
            fit_rows: 0,
        }
    }
}
