//! Error breakdowns for Dyck evaluations: accuracy by depth, where wrong
//! predictions attend, projected embeddings, and cluster depth profiles.

use std::collections::BTreeMap;

use crate::dyck::vocab::bracket_type;
use crate::dyck::{closing_eval_positions, DyckSample};
use crate::error::{Error, Result};
use crate::model::eval::{closer_predictions, restricted_closer_argmax, Runner};
use crate::model::forward::{forward, forward_with, Intervention};
use crate::model::ModelParameters;
use crate::numerics::kmeans::nearest;
use crate::numerics::{Scalar, Tensor};
use crate::par;
use crate::simplify::{collect_embeddings, FittedSimplifier, FittedState};

/// Accuracy keyed by (query token depth, sequence max depth). Only cells
/// that received positions are present.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DepthErrorGrid {
    /// `(token depth, max depth) → (correct, total)`.
    pub cells: BTreeMap<(u32, u32), (usize, usize)>,
}

impl DepthErrorGrid {
    pub fn accuracy(&self, token_depth: u32, max_depth: u32) -> Option<f64> {
        self.cells
            .get(&(token_depth, max_depth))
            .map(|&(c, t)| c as f64 / t as f64)
    }

    pub fn count(&self, token_depth: u32, max_depth: u32) -> usize {
        self.cells.get(&(token_depth, max_depth)).map_or(0, |c| c.1)
    }

    pub fn total(&self) -> usize {
        self.cells.values().map(|c| c.1).sum()
    }

    /// Count-weighted mean of the cell accuracies.
    pub fn marginal_accuracy(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| {
            self.cells
                .values()
                .map(|&(c, t)| (c as f64 / t as f64) * t as f64)
                .sum::<f64>()
                / total as f64
        })
    }

    /// Pooled accuracy over the query depths in `depths`.
    pub fn accuracy_over(&self, depths: impl Fn(u32) -> bool) -> Option<f64> {
        let (c, t) = self
            .cells
            .iter()
            .filter(|(k, _)| depths(k.0))
            .fold((0, 0), |acc, (_, v)| (acc.0 + v.0, acc.1 + v.1));
        (t > 0).then(|| c as f64 / t as f64)
    }

    fn merge(&mut self, other: &Self) {
        for (k, v) in &other.cells {
            let e = self.cells.entry(*k).or_default();
            e.0 += v.0;
            e.1 += v.1;
        }
    }
}

pub fn depth_error_grid(
    runner: &dyn Runner,
    samples: &[DyckSample],
    bracket_types: u32,
    min_distance: usize,
) -> Result<DepthErrorGrid> {
    let per = par::map(samples, |s| -> Result<DepthErrorGrid> {
        let mut g = DepthErrorGrid::default();
        if closing_eval_positions(&s.match_index, min_distance).is_empty() {
            return Ok(g);
        }
        let max = s.max_depth();
        for p in closer_predictions(runner, s, bracket_types, min_distance)? {
            let e = g.cells.entry((s.token_depths[p.position], max)).or_default();
            e.0 += usize::from(p.predicted == p.target);
            e.1 += 1;
        }
        Ok(g)
    });
    let mut grid = DepthErrorGrid::default();
    for g in per {
        grid.merge(&g?);
    }
    Ok(grid)
}

/// Where the target head attends at positions the proxy gets wrong.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AttentionErrorProfile {
    /// `(target depth, depth of the argmax-attended key) → count`.
    pub depth_pairs: BTreeMap<(u32, u32), usize>,
    /// Proxy argmax position minus original argmax position → count.
    pub offsets: BTreeMap<i64, usize>,
    pub positions: usize,
}

impl AttentionErrorProfile {
    /// Positions whose attended depth differs from the target by exactly `d`.
    pub fn mass_at_depth_offset(&self, d: u32) -> usize {
        self.depth_pairs
            .iter()
            .filter(|((t, a), _)| t.abs_diff(*a) == d)
            .map(|(_, &c)| c)
            .sum()
    }

    /// Share of nonzero offsets that are even; `None` without nonzero offsets.
    pub fn even_share_of_nonzero_offsets(&self) -> Option<f64> {
        let nonzero: usize = self.offsets.iter().filter(|(o, _)| **o != 0).map(|(_, c)| c).sum();
        let even: usize = self
            .offsets
            .iter()
            .filter(|(o, _)| **o != 0 && *o % 2 == 0)
            .map(|(_, c)| c)
            .sum();
        (nonzero > 0).then(|| even as f64 / nonzero as f64)
    }

    fn merge(&mut self, other: &Self) {
        for (k, v) in &other.depth_pairs {
            *self.depth_pairs.entry(*k).or_default() += v;
        }
        for (k, v) in &other.offsets {
            *self.offsets.entry(*k).or_default() += v;
        }
        self.positions += other.positions;
    }
}

/// Latest position holding the row maximum within the causal prefix.
pub fn attention_argmax<T: Scalar>(attention: &Tensor<T>, row: usize) -> usize {
    let r = attention.row(row);
    let mut best = 0;
    for j in 1..=row {
        if r[j] >= r[best] {
            best = j;
        }
    }
    best
}

/// Profiles the proxy's wrong predictions at long-range closers. Pass
/// [`super::Unchanged`] as the proxy to profile the original model.
pub fn attention_error_profile<I: Intervention<f32>>(
    params: &ModelParameters,
    proxy: &I,
    layer: usize,
    head: usize,
    samples: &[DyckSample],
    bracket_types: u32,
    min_distance: usize,
) -> Result<AttentionErrorProfile> {
    let per = par::map(samples, |s| -> Result<AttentionErrorProfile> {
        let mut prof = AttentionErrorProfile::default();
        let positions = closing_eval_positions(&s.match_index, min_distance);
        if positions.is_empty() {
            return Ok(prof);
        }
        let orig = forward(params, &s.tokens, true)?.trace.expect("capture");
        let simp = forward_with(params, &s.tokens, true, Some(proxy))?;
        let st = simp.trace.expect("capture");
        let (oa, sa) = (&orig.get(layer, head).attention, &st.get(layer, head).attention);
        for p in positions {
            let row = p - 1;
            if restricted_closer_argmax(simp.logits.row(row), bracket_types) == s.tokens[p] {
                continue;
            }
            let attended = attention_argmax(sa, row);
            let target_depth = s.token_depths[p];
            *prof.depth_pairs.entry((target_depth, s.token_depths[attended])).or_default() += 1;
            let offset = attended as i64 - attention_argmax(oa, row) as i64;
            *prof.offsets.entry(offset).or_default() += 1;
            prof.positions += 1;
        }
        Ok(prof)
    });
    let mut total = AttentionErrorProfile::default();
    for p in per {
        total.merge(&p?);
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Role {
    Key,
    Query,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Key => "key",
            Role::Query => "query",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionRow {
    pub sequence: usize,
    pub position: usize,
    pub role: Role,
    pub token: u32,
    pub token_depth: u32,
    /// Zero for BOS and EOS.
    pub bracket_type: u32,
    pub coords: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionTable {
    pub components: Vec<usize>,
    pub rows: Vec<ProjectionRow>,
}

/// Coordinates of a head's keys and queries on selected columns of `basis`
/// (d_h × r, orthonormal columns).
pub fn export_projection(
    params: &ModelParameters,
    layer: usize,
    head: usize,
    basis: &Tensor<f64>,
    samples: &[DyckSample],
    components: &[usize],
) -> Result<ProjectionTable> {
    if let Some(&c) = components.iter().find(|&&c| c >= basis.cols()) {
        return Err(Error::InvalidArgument(format!(
            "component {c} outside a rank-{} basis",
            basis.cols()
        )));
    }
    let seqs: Vec<Vec<u32>> = samples.iter().map(|s| s.tokens.clone()).collect();
    let emb = collect_embeddings(params, layer, head, &seqs)?;
    let coords = |row: &[f64]| -> Vec<f64> {
        components
            .iter()
            .map(|&c| row.iter().enumerate().map(|(j, v)| v * basis.get(j, c)).sum())
            .collect()
    };
    let mut rows = Vec::with_capacity(2 * emb.origin.len());
    for (i, &(si, pos)) in emb.origin.iter().enumerate() {
        let s = &samples[si];
        let token = s.tokens[pos];
        let special = pos == 0 || pos + 1 == s.tokens.len();
        for (role, t) in [(Role::Key, &emb.keys), (Role::Query, &emb.queries)] {
            rows.push(ProjectionRow {
                sequence: si,
                position: pos,
                role,
                token,
                token_depth: s.token_depths[pos],
                bracket_type: if special { 0 } else { bracket_type(token) },
                coords: coords(t.row(i)),
            });
        }
    }
    Ok(ProjectionTable {
        components: components.to_vec(),
        rows,
    })
}

/// Depth histograms of k-means clusters and, for each query cluster, the
/// key cluster with the nearest center.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterDepthProfile {
    pub query_depths: Vec<BTreeMap<u32, usize>>,
    pub key_depths: Vec<BTreeMap<u32, usize>>,
    /// `nearest_key[q]` is the key cluster closest to query cluster `q`.
    pub nearest_key: Vec<usize>,
}

/// Most frequent depth; ties go to the shallower depth.
pub fn modal_depth(hist: &BTreeMap<u32, usize>) -> Option<u32> {
    let mut best: Option<(u32, usize)> = None;
    for (&d, &c) in hist {
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((d, c));
        }
    }
    best.map(|b| b.0)
}

impl ClusterDepthProfile {
    pub fn query_sizes(&self) -> Vec<usize> {
        self.query_depths.iter().map(|h| h.values().sum()).collect()
    }

    pub fn key_sizes(&self) -> Vec<usize> {
        self.key_depths.iter().map(|h| h.values().sum()).collect()
    }

    /// Share of nonempty query clusters whose nearest key cluster has the
    /// same modal depth.
    pub fn modal_agreement(&self) -> Option<f64> {
        let mut n = 0;
        let mut agree = 0;
        for (q, hist) in self.query_depths.iter().enumerate() {
            let Some(qm) = modal_depth(hist) else { continue };
            n += 1;
            agree += usize::from(modal_depth(&self.key_depths[self.nearest_key[q]]) == Some(qm));
        }
        (n > 0).then(|| agree as f64 / n as f64)
    }
}

fn histograms(centers: &Tensor<f64>, rows: &Tensor<f64>, depths: &[u32]) -> Vec<BTreeMap<u32, usize>> {
    let mut out = vec![BTreeMap::new(); centers.rows()];
    for (i, &d) in depths.iter().enumerate() {
        let (c, _) = nearest(centers, rows.row(i));
        *out[c].entry(d).or_default() += 1;
    }
    out
}

/// Profile from explicit embeddings and depth labels.
pub fn cluster_depth_profile_from(
    key_centers: &Tensor<f64>,
    query_centers: &Tensor<f64>,
    keys: &Tensor<f64>,
    key_depths: &[u32],
    queries: &Tensor<f64>,
    query_depths: &[u32],
) -> Result<ClusterDepthProfile> {
    if keys.rows() != key_depths.len() || queries.rows() != query_depths.len() {
        return Err(Error::Shape("one depth label per embedding row".into()));
    }
    let nearest_key = (0..query_centers.rows())
        .map(|q| nearest(key_centers, query_centers.row(q)).0)
        .collect();
    Ok(ClusterDepthProfile {
        query_depths: histograms(query_centers, queries, query_depths),
        key_depths: histograms(key_centers, keys, key_depths),
        nearest_key,
    })
}

pub fn cluster_depth_profile(
    fitted: &FittedSimplifier,
    params: &ModelParameters,
    samples: &[DyckSample],
) -> Result<ClusterDepthProfile> {
    let FittedState::KMeans {
        key_centers,
        query_centers,
    } = &fitted.state
    else {
        return Err(Error::InvalidArgument("cluster profile needs a k-means simplifier".into()));
    };
    let seqs: Vec<Vec<u32>> = samples.iter().map(|s| s.tokens.clone()).collect();
    let emb = collect_embeddings(params, fitted.spec.layer, fitted.spec.head, &seqs)?;
    let depths: Vec<u32> = emb.origin.iter().map(|&(s, p)| samples[s].token_depths[p]).collect();
    cluster_depth_profile_from(key_centers, query_centers, &emb.keys, &depths, &emb.queries, &depths)
}
