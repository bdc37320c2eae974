//! Spike-to-PRB mapping: request and rate EWMAs, delayed-spike suppression,
//! PF weighting, clique-proportional continuous shares and the
//! floor → drop → renormalise → water-fill integer pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::InterferenceGraph;

/// Slack used when flooring `share × PRBs` so that e.g. `0.29 × 100` lands on 29.
pub const FLOOR_SLACK: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum AllocError {
    #[error("unknown scheduler `{0}` (expected nos, pf or bp)")]
    UnknownScheduler(String),
    #[error("invalid allocation parameter `{name}` = {value}: {reason}")]
    InvalidParam { name: &'static str, value: f64, reason: &'static str },
    #[error("{got} per-clique budgets given for {cliques} cliques")]
    GammaLength { got: usize, cliques: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchedulerKind {
    #[serde(rename = "NOS", alias = "nos")]
    Nos,
    #[serde(rename = "PF", alias = "pf")]
    Pf,
    #[serde(rename = "BP", alias = "bp")]
    Bp,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 3] = [SchedulerKind::Nos, SchedulerKind::Pf, SchedulerKind::Bp];

    pub fn as_str(self) -> &'static str {
        match self {
            SchedulerKind::Nos => "NOS",
            SchedulerKind::Pf => "PF",
            SchedulerKind::Bp => "BP",
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchedulerKind {
    type Err = AllocError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nos" => Ok(SchedulerKind::Nos),
            "pf" => Ok(SchedulerKind::Pf),
            "bp" => Ok(SchedulerKind::Bp),
            _ => Err(AllocError::UnknownScheduler(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AllocParams {
    /// Request EWMA gain ζ.
    pub zeta: f64,
    /// Realised-rate EWMA gain ϑ.
    pub vartheta: f64,
    pub eps: f64,
    /// Budget fraction applied to every clique unless overridden.
    pub gamma: f64,
    /// Optional per-clique budgets, in clique order.
    pub clique_gamma: Vec<f64>,
    pub prb_total: u32,
    pub mcs_min_prb: u32,
}

impl Default for AllocParams {
    fn default() -> Self {
        Self {
            zeta: 0.2,
            vartheta: 1.0 / 15.0,
            eps: 1e-9,
            gamma: 0.95,
            clique_gamma: Vec::new(),
            prb_total: 50,
            mcs_min_prb: 1,
        }
    }
}

impl AllocParams {
    pub fn validate(&self, clique_count: usize) -> Result<(), AllocError> {
        for (name, value) in [("zeta", self.zeta), ("vartheta", self.vartheta)] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(AllocError::InvalidParam { name, value, reason: "must lie in (0, 1]" });
            }
        }
        for &value in std::iter::once(&self.gamma).chain(&self.clique_gamma) {
            if !(value > 0.0 && value <= 1.0) {
                return Err(AllocError::InvalidParam { name: "gamma", value, reason: "must lie in (0, 1]" });
            }
        }
        if !self.clique_gamma.is_empty() && self.clique_gamma.len() != clique_count {
            return Err(AllocError::GammaLength { got: self.clique_gamma.len(), cliques: clique_count });
        }
        if self.prb_total == 0 {
            return Err(AllocError::InvalidParam { name: "prb_total", value: 0.0, reason: "must be at least 1" });
        }
        if !(self.eps > 0.0) {
            return Err(AllocError::InvalidParam { name: "eps", value: self.eps, reason: "must be positive" });
        }
        Ok(())
    }

    pub fn gamma_for(&self, clique: usize) -> f64 {
        self.clique_gamma.get(clique).copied().unwrap_or(self.gamma)
    }

    pub fn gammas(&self, clique_count: usize) -> Vec<f64> {
        (0..clique_count).map(|c| self.gamma_for(c)).collect()
    }
}

/// Per-bearer filter state carried between slots.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocState {
    pub r: Vec<f64>,
    pub rbar: Vec<f64>,
    pub last_x: Vec<f64>,
    pub last_mu: Vec<f64>,
}

impl AllocState {
    pub fn new(n: usize) -> Self {
        Self {
            r: vec![0.0; n],
            rbar: vec![0.0; n],
            last_x: vec![0.0; n],
            last_mu: vec![0.0; n],
        }
    }
}

/// `r ← (1 − ζ) r + ζ S`.
pub fn update_request(r: &mut [f64], spikes: &[bool], zeta: f64) {
    for (ri, &s) in r.iter_mut().zip(spikes) {
        *ri = (1.0 - zeta) * *ri + if s { zeta } else { 0.0 };
    }
}

/// `r̃_i = r_i / (1 + Σ_j w_ij S_j(t − Δ))`.
pub fn suppress(r: &[f64], graph: &InterferenceGraph, delayed: &[bool]) -> Vec<f64> {
    graph
        .apply_binary(delayed)
        .iter()
        .zip(r)
        .map(|(p, ri)| ri / (1.0 + p))
        .collect()
}

/// `r̄ ← (1 − ϑ) r̄ + ϑ μ(t−1) x(t−1)`.
pub fn update_rate_ewma(rbar: &mut [f64], mu_prev: &[f64], x_prev: &[f64], vartheta: f64) {
    for ((rb, m), x) in rbar.iter_mut().zip(mu_prev).zip(x_prev) {
        *rb = (1.0 - vartheta) * *rb + vartheta * m * x;
    }
}

/// `w_i = r̃_i μ_i / (r̄_i + ε)`.
pub fn pf_weight(r_tilde: &[f64], mu: &[f64], rbar: &[f64], eps: f64) -> Vec<f64> {
    r_tilde
        .iter()
        .zip(mu)
        .zip(rbar)
        .map(|((r, m), rb)| r * m / (rb + eps))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousShares {
    /// Per-bearer fraction; the minimum across the bearer's cliques.
    pub x: Vec<f64>,
    /// Per clique, per member (same order as the clique), the share computed
    /// within that clique alone.
    pub per_clique: Vec<Vec<f64>>,
    /// Cliques whose weights were all zero and were split uniformly.
    pub uniform_cliques: Vec<usize>,
}

/// `x_i = min{1, γ_C w_i / (Σ_{j∈C} w_j + ε)}` per clique; bearers in several
/// cliques take the smallest of their shares. An all-zero clique is split
/// uniformly and reported in `uniform_cliques`.
pub fn continuous_shares(w: &[f64], cliques: &[Vec<usize>], gamma: &[f64], eps: f64) -> ContinuousShares {
    let mut x = vec![f64::INFINITY; w.len()];
    let mut per_clique = Vec::with_capacity(cliques.len());
    let mut uniform_cliques = Vec::new();
    for (c, members) in cliques.iter().enumerate() {
        let total: f64 = members.iter().map(|&i| w[i]).sum();
        let shares: Vec<f64> = if total == 0.0 {
            uniform_cliques.push(c);
            vec![gamma[c] / members.len() as f64; members.len()]
        } else {
            members
                .iter()
                .map(|&i| (gamma[c] * w[i] / (total + eps)).min(1.0))
                .collect()
        };
        for (&i, &s) in members.iter().zip(&shares) {
            x[i] = x[i].min(s);
        }
        per_clique.push(shares);
    }
    // Bearers outside every clique get nothing (cannot happen for graphs
    // built by `InterferenceGraph`).
    for xi in x.iter_mut() {
        if xi.is_infinite() {
            *xi = 0.0;
        }
    }
    ContinuousShares { x, per_clique, uniform_cliques }
}

/// Integer PRB grants for one clique.
///
/// 1. floor each share to whole PRBs;
/// 2. drop members whose floor is below `mcs_min_prb`;
/// 3. rescale survivors to the clique's pre-drop total share, capped at γ;
/// 4. water-fill the PRBs left under `floor(γ · prb_total)` one at a time to
///    the survivors with the largest residuals (ties to the lowest position).
pub fn integerise(shares: &[f64], prb_total: u32, mcs_min_prb: u32, gamma: f64) -> Vec<u32> {
    let total = prb_total as f64;
    let budget = (gamma * total + FLOOR_SLACK).floor() as u32;
    let floors: Vec<u32> = shares.iter().map(|&x| (x * total + FLOOR_SLACK).floor() as u32).collect();
    let survivors: Vec<usize> = (0..shares.len()).filter(|&i| floors[i] >= mcs_min_prb).collect();
    let mut grants = vec![0u32; shares.len()];
    if survivors.is_empty() || budget < mcs_min_prb {
        return grants;
    }

    let pre_drop: f64 = shares.iter().sum();
    let surviving: f64 = survivors.iter().map(|&i| shares[i]).sum();
    if surviving <= 0.0 {
        return grants;
    }
    let scale = pre_drop.min(gamma) / surviving;
    let targets: Vec<(usize, f64)> = survivors.iter().map(|&i| (i, shares[i] * scale * total)).collect();

    let mut used = 0u32;
    let mut residuals = Vec::with_capacity(targets.len());
    for &(i, t) in &targets {
        let f = (t + FLOOR_SLACK).floor();
        grants[i] = f as u32;
        used += f as u32;
        let residual = t - f;
        if residual > FLOOR_SLACK {
            residuals.push((i, residual));
        }
    }
    // Flooring the rescaled targets can only lower the sum, but guard the
    // budget anyway against the slack.
    while used > budget {
        let i = *survivors.iter().rev().max_by_key(|&&i| grants[i]).expect("survivors non-empty");
        grants[i] -= 1;
        used -= 1;
    }

    residuals.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for (i, _) in residuals {
        if used >= budget {
            break;
        }
        grants[i] += 1;
        used += 1;
    }
    grants
}

/// Integer grants for a whole graph: each clique runs [`integerise`] on its
/// own continuous shares and a bearer in several cliques keeps the smallest
/// grant, so every clique stays within its budget.
pub fn integerise_graph(shares: &ContinuousShares, cliques: &[Vec<usize>], params: &AllocParams) -> Vec<u32> {
    let mut grants = vec![u32::MAX; shares.x.len()];
    for (c, members) in cliques.iter().enumerate() {
        // Each clique sees the bearers' final (cross-clique minimum) shares.
        let local: Vec<f64> = members.iter().map(|&i| shares.x[i]).collect();
        let g = integerise(&local, params.prb_total, params.mcs_min_prb, params.gamma_for(c));
        for (&i, gi) in members.iter().zip(g) {
            grants[i] = grants[i].min(gi);
        }
    }
    grants.iter().map(|&g| if g == u32::MAX { 0 } else { g }).collect()
}

/// Per-cell DU processing cost in microseconds.
pub fn du_cost(kind: SchedulerKind, users_per_cell: f64, edges_per_cell: f64) -> f64 {
    match kind {
        SchedulerKind::Nos => 22.0 + 1.2 * users_per_cell + 0.06 * edges_per_cell,
        SchedulerKind::Pf => 28.0 + 1.8 * users_per_cell,
        SchedulerKind::Bp => 38.0 + 2.7 * users_per_cell + 0.14 * edges_per_cell,
    }
}

/// String-keyed variant for configuration input.
pub fn du_cost_named(kind: &str, users_per_cell: f64, edges_per_cell: f64) -> Result<f64, AllocError> {
    Ok(du_cost(kind.parse()?, users_per_cell, edges_per_cell))
}
