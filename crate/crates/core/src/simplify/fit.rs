use super::{FitSample, FittedSimplifier, FittedState, SimplifierKind, SimplifierSpec};
use crate::error::{Error, Result};
use crate::model::forward::forward;
use crate::model::ModelParameters;
use crate::numerics::{kmeans, svd, Tensor};
use crate::par;

/// Keys and queries of one head over a set of sequences, rows in sequence
/// order then position order.
#[derive(Clone, Debug)]
pub struct HeadEmbeddings {
    pub keys: Tensor<f64>,
    pub queries: Tensor<f64>,
    /// `(sequence index, position)` for every row.
    pub origin: Vec<(usize, usize)>,
}

fn check_head(params: &ModelParameters, layer: usize, head: usize) -> Result<()> {
    if layer >= params.config.layers || head >= params.config.heads {
        return Err(Error::InvalidArgument(format!(
            "head ({layer}, {head}) outside a {}×{} model",
            params.config.layers, params.config.heads
        )));
    }
    Ok(())
}

pub fn collect_embeddings(
    params: &ModelParameters,
    layer: usize,
    head: usize,
    sequences: &[Vec<u32>],
) -> Result<HeadEmbeddings> {
    check_head(params, layer, head)?;
    let traces: Vec<Result<(Tensor<f32>, Tensor<f32>)>> = par::map(sequences, |s| {
        let tr = forward(params, s, true)?.trace.expect("capture requested");
        let h = tr.get(layer, head);
        Ok((h.keys.clone(), h.queries.clone()))
    });
    let dh = params.config.head_dim;
    let mut keys = Vec::new();
    let mut queries = Vec::new();
    let mut origin = Vec::new();
    for (si, t) in traces.into_iter().enumerate() {
        let (k, q) = t?;
        keys.extend(k.data().iter().map(|&x| x as f64));
        queries.extend(q.data().iter().map(|&x| x as f64));
        origin.extend((0..k.rows()).map(|p| (si, p)));
    }
    let n = origin.len();
    Ok(HeadEmbeddings {
        keys: Tensor::matrix(n, dh, keys)?,
        queries: Tensor::matrix(n, dh, queries)?,
        origin,
    })
}

/// Fits one simplifier on embeddings gathered from `sequences`.
pub fn fit(spec: &SimplifierSpec, params: &ModelParameters, sequences: &[Vec<u32>]) -> Result<FittedSimplifier> {
    check_head(params, spec.layer, spec.head)?;
    if let SimplifierKind::OneHot = spec.kind {
        return Ok(FittedSimplifier {
            spec: spec.clone(),
            state: FittedState::OneHot,
            fit_rows: 0,
        });
    }
    if sequences.is_empty() {
        return Err(Error::InvalidArgument("empty fit dataset".into()));
    }
    let emb = collect_embeddings(params, spec.layer, spec.head, sequences)?;
    match spec.kind {
        SimplifierKind::Svd { rank } => {
            let mut all = fit_svd_from(&emb, &[rank], spec.layer, spec.head, &spec.fit)?;
            Ok(all.remove(0))
        }
        SimplifierKind::KMeans { clusters } => {
            let n = emb.keys.rows();
            if clusters == 0 || clusters > n {
                return Err(Error::InvalidArgument(format!(
                    "{clusters} clusters requested from {n} embedding rows"
                )));
            }
            let km_k = kmeans(&emb.keys, clusters, spec.fit.seed)?;
            let km_q = kmeans(&emb.queries, clusters, spec.fit.seed.wrapping_add(1))?;
            Ok(FittedSimplifier {
                spec: spec.clone(),
                state: FittedState::KMeans {
                    key_centers: km_k.centers,
                    query_centers: km_q.centers,
                },
                fit_rows: n,
            })
        }
        SimplifierKind::OneHot => unreachable!(),
    }
}

/// One SVD of the stacked keys and queries, truncated to each rank.
pub fn fit_svd_ranks(
    params: &ModelParameters,
    layer: usize,
    head: usize,
    ranks: &[usize],
    sequences: &[Vec<u32>],
    fit_sample: &FitSample,
) -> Result<Vec<FittedSimplifier>> {
    if sequences.is_empty() {
        return Err(Error::InvalidArgument("empty fit dataset".into()));
    }
    let emb = collect_embeddings(params, layer, head, sequences)?;
    fit_svd_from(&emb, ranks, layer, head, fit_sample)
}

fn fit_svd_from(
    emb: &HeadEmbeddings,
    ranks: &[usize],
    layer: usize,
    head: usize,
    fit_sample: &FitSample,
) -> Result<Vec<FittedSimplifier>> {
    let stacked = Tensor::vstack(&[&emb.keys, &emb.queries])?;
    let available = stacked.rows().min(stacked.cols());
    if let Some(&r) = ranks.iter().find(|&&r| r > available) {
        return Err(Error::InvalidArgument(format!("rank {r} exceeds the available rank {available}")));
    }
    let dec = svd(&stacked)?;
    Ok(ranks
        .iter()
        .map(|&r| FittedSimplifier {
            spec: SimplifierSpec {
                layer,
                head,
                kind: SimplifierKind::Svd { rank: r },
                fit: fit_sample.clone(),
            },
            state: FittedState::Svd {
                basis: dec.v.take_cols(r),
                singular_values: dec.s[..r].to_vec(),
            },
            fit_rows: emb.keys.rows(),
        })
        .collect())
}
