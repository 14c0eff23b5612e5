use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FittedSimplifier, FittedState, SimplifierSpec};
use crate::container::{read_container, write_container};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const SIMPLIFIER_KIND: &str = "simplifier";

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SimplifierMeta {
    spec: SimplifierSpec,
    fit_rows: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    singular_values: Vec<f64>,
    version: String,
}

pub fn save_fitted(path: &Path, fitted: &FittedSimplifier) -> Result<()> {
    let mut meta = SimplifierMeta {
        spec: fitted.spec.clone(),
        fit_rows: fitted.fit_rows,
        singular_values: Vec::new(),
        version: crate::VERSION.into(),
    };
    let tensors: Vec<(String, &Tensor<f64>)> = match &fitted.state {
        FittedState::Svd { basis, singular_values } => {
            meta.singular_values = singular_values.clone();
            vec![("basis".into(), basis)]
        }
        FittedState::KMeans {
            key_centers,
            query_centers,
        } => vec![("key_centers".into(), key_centers), ("query_centers".into(), query_centers)],
        FittedState::OneHot => Vec::new(),
    };
    write_container(path, SIMPLIFIER_KIND, &meta, &tensors)
}

pub fn load_fitted(path: &Path) -> Result<FittedSimplifier> {
    let (header, tensors) = read_container::<f64>(path)?;
    if header.kind != SIMPLIFIER_KIND {
        return Err(Error::Format(format!("{}: holds a {}, not a simplifier", path.display(), header.kind)));
    }
    let meta: SimplifierMeta = header.meta_as()?;
    let mut named = tensors.into_iter();
    let mut take = |name: &str| -> Result<Tensor<f64>> {
        match named.next() {
            Some((n, t)) if n == name => Ok(t),
            _ => Err(Error::Format(format!("{}: missing tensor `{name}`", path.display()))),
        }
    };
    let state = match meta.spec.kind {
        super::SimplifierKind::Svd { .. } => FittedState::Svd {
            basis: take("basis")?,
            singular_values: meta.singular_values,
        },
        super::SimplifierKind::KMeans { .. } => FittedState::KMeans {
            key_centers: take("key_centers")?,
            query_centers: take("query_centers")?,
        },
        super::SimplifierKind::OneHot => FittedState::OneHot,
    };
    Ok(FittedSimplifier {
        spec: meta.spec,
        state,
        fit_rows: meta.fit_rows,
    })
}
