//! Cluster-head election probabilities and advertisement ranges.
//!
//! Every probability has the same shape: a quota multiplied by a convex mix
//! of the node's share of residual energy and its share of a reciprocal
//! closeness metric (inverse distance, or inverse MRP level for PAMC).
//! The raw value may exceed one; callers clamp before drawing.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::NodeId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ElectionError {
    #[error("election totals are degenerate (energy {energy}, metric {metric}, members {members})")]
    DegenerateTotals { energy: f64, metric: f64, members: usize },
    #[error("phi must lie in [0, 1], got {0}")]
    PhiOutOfRange(f64),
}

/// Sums the broadcasting party (sink or cluster head) announces before an
/// election.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectionTotals {
    pub total_energy: f64,
    pub total_reciprocal_metric: f64,
    pub member_count: usize,
}

impl ElectionTotals {
    /// Totals over `(energy, reciprocal_metric)` pairs.
    pub fn from_members<I>(members: I) -> Self
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        members.into_iter().fold(
            Self { total_energy: 0.0, total_reciprocal_metric: 0.0, member_count: 0 },
            |acc, (e, m)| Self {
                total_energy: acc.total_energy + e,
                total_reciprocal_metric: acc.total_reciprocal_metric + m,
                member_count: acc.member_count + 1,
            },
        )
    }

    fn check(&self) -> Result<(), ElectionError> {
        if self.total_energy > 0.0 && self.total_reciprocal_metric > 0.0 && self.member_count > 0 {
            Ok(())
        } else {
            Err(ElectionError::DegenerateTotals {
                energy: self.total_energy,
                metric: self.total_reciprocal_metric,
                members: self.member_count,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectionParams {
    /// Weight of residual energy against closeness.
    pub phi: f64,
    /// Target number of level-1 cluster heads.
    pub n_ch1_opt: usize,
}

impl ElectionParams {
    pub fn new(phi: f64, n_ch1_opt: usize) -> Result<Self, ElectionError> {
        if !(0.0..=1.0).contains(&phi) {
            return Err(ElectionError::PhiOutOfRange(phi));
        }
        Ok(Self { phi, n_ch1_opt: n_ch1_opt.max(1) })
    }

    /// Parameters for a network of `n` nodes.
    pub fn for_network(phi: f64, n: usize) -> Result<Self, ElectionError> {
        Self::new(phi, optimal_ch_count(n))
    }
}

/// `round(sqrt(n))`, at least 1.
pub fn optimal_ch_count(n: usize) -> usize {
    ((n as f64).sqrt().round() as usize).max(1)
}

/// Distances below one meter are floored so a co-located node does not get
/// an infinite share.
pub fn reciprocal_distance(d: f64) -> f64 {
    1.0 / d.max(1.0)
}

fn weighted_share(e_u: f64, metric_u: f64, totals: &ElectionTotals, phi: f64) -> f64 {
    phi * (e_u / totals.total_energy)
        + (1.0 - phi) * (metric_u / totals.total_reciprocal_metric)
}

/// Raw probability of becoming a level-1 cluster head.
pub fn level1_probability(
    e_u: f64,
    metric_u: f64,
    totals: &ElectionTotals,
    params: &ElectionParams,
) -> Result<f64, ElectionError> {
    totals.check()?;
    Ok(params.n_ch1_opt as f64 * weighted_share(e_u, metric_u, totals, params.phi))
}

/// Raw probability of a member of a level-(j-1) cluster becoming a level-j
/// cluster head. The quota is `sqrt(member_count)`.
pub fn levelj_probability(
    e_u: f64,
    metric_u: f64,
    cluster_totals: &ElectionTotals,
    params: &ElectionParams,
) -> Result<f64, ElectionError> {
    cluster_totals.check()?;
    let quota = (cluster_totals.member_count as f64).sqrt();
    Ok(quota * weighted_share(e_u, metric_u, cluster_totals, params.phi))
}

pub fn clamp_probability(p: f64) -> f64 {
    p.clamp(0.0, 1.0)
}

pub fn elect<R: Rng + ?Sized>(p: f64, rng: &mut R) -> bool {
    rng.gen_bool(clamp_probability(p))
}

/// Draws for every candidate in the given order. If nobody is elected the
/// candidate with the highest raw probability is promoted (lowest id wins
/// ties), so a non-empty candidate set always yields at least one head.
pub fn run_election<R: Rng + ?Sized>(candidates: &[(NodeId, f64)], rng: &mut R) -> Vec<NodeId> {
    let mut elected: Vec<NodeId> = candidates
        .iter()
        .filter(|(_, p)| elect(*p, rng))
        .map(|(id, _)| *id)
        .collect();
    if elected.is_empty() {
        let best = candidates
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.cmp(&a.0)));
        elected.extend(best.map(|(id, _)| *id));
    }
    elected
}

/// Advertisement range of a cluster head whose ancestor clusters (from
/// level 1 downwards) had the given cardinalities.
pub fn broadcast_range(radius: f64, n_ch1_opt: usize, ancestor_sizes: &[usize]) -> f64 {
    let product: f64 = ancestor_sizes.iter().map(|&n| n as f64).product();
    radius / (n_ch1_opt as f64 * product).sqrt()
}
