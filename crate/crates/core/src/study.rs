//! Deterministic margin-proxy study: DU headroom, effective delays, gain
//! calibration by p99.9 parity, and the AUC / MaxQ / p99.9 / tail-bound
//! outputs over the named topologies.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::{du_cost, SchedulerKind};
use crate::stability::{k_star_envelope, EnvelopeParams, LocalLinearisation, StabilityError};
use crate::topology::{InterferenceGraph, TopologyError, TopologyName};

/// Guard in the `x̄` denominator.
pub const XBAR_EPS: f64 = 1e-9;
pub const CALIBRATION_REL_TOL: f64 = 1e-9;
pub const CALIBRATION_MAX_ITER: usize = 200;
/// Quantile level behind p99.9: `ln(1000)`.
const LN_1000: f64 = 6.907_755_278_982_137;

#[derive(Debug, Error, PartialEq)]
pub enum StudyError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error("invalid study setting `{name}`: {reason}")]
    InvalidConfig { name: &'static str, reason: String },
    #[error("unknown normalisation mode `{0}` (expected nominal or effective)")]
    UnknownMode(String),
}

/// Which cap normalises `x̄`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalisation {
    #[default]
    Nominal,
    Effective,
}

impl Normalisation {
    pub fn as_str(self) -> &'static str {
        match self {
            Normalisation::Nominal => "nominal",
            Normalisation::Effective => "effective",
        }
    }
}

impl fmt::Display for Normalisation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Normalisation {
    type Err = StudyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nominal" => Ok(Normalisation::Nominal),
            "effective" => Ok(Normalisation::Effective),
            _ => Err(StudyError::UnknownMode(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub a: f64,
    pub b: f64,
    pub dbar: f64,
    pub tau_ctrl: f64,
    pub w: f64,
    pub topologies: Vec<TopologyName>,
    pub delays: Vec<f64>,
    pub kappa_u: f64,
    pub kappa_theta: f64,
    pub mu_min: f64,
    pub gamma_nom: f64,
    pub budget_us: f64,
    pub uc: f64,
    pub phi_obs: f64,
    pub spill_cap_ms: f64,
    pub mode: Normalisation,
    /// Spike slope at threshold; absorbed into the gain.
    pub spike_slope: f64,
    pub tail_tau_max: f64,
    pub tail_tau_step: f64,
    /// Topology and delay at which the gain is calibrated.
    pub calibration_topology: TopologyName,
    pub calibration_delay: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            a: 1.0,
            b: 0.9,
            dbar: 0.30,
            tau_ctrl: 10.0,
            w: 0.60,
            topologies: TopologyName::ALL.to_vec(),
            delays: vec![5.0, 12.0, 20.0],
            kappa_u: 25.0,
            kappa_theta: 4.0,
            mu_min: 0.12,
            gamma_nom: 0.95,
            budget_us: 120.0,
            uc: 8.0,
            phi_obs: 0.15,
            spill_cap_ms: 1.0,
            mode: Normalisation::Nominal,
            spike_slope: 1.0,
            tail_tau_max: 100.0,
            tail_tau_step: 1.0,
            calibration_topology: TopologyName::Ring8,
            calibration_delay: 20.0,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<(), StudyError> {
        let positive = [
            ("a", self.a),
            ("b", self.b),
            ("tau_ctrl", self.tau_ctrl),
            ("w", self.w),
            ("kappa_u", self.kappa_u),
            ("kappa_theta", self.kappa_theta),
            ("mu_min", self.mu_min),
            ("gamma_nom", self.gamma_nom),
            ("budget_us", self.budget_us),
            ("uc", self.uc),
            ("spill_cap_ms", self.spill_cap_ms),
            ("spike_slope", self.spike_slope),
            ("tail_tau_step", self.tail_tau_step),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(StudyError::InvalidConfig { name, reason: format!("must be positive, got {value}") });
            }
        }
        if self.gamma_nom > 1.0 {
            return Err(StudyError::InvalidConfig { name: "gamma_nom", reason: "must not exceed 1".into() });
        }
        if !(self.phi_obs.is_finite() && self.phi_obs >= 0.0) {
            return Err(StudyError::InvalidConfig { name: "phi_obs", reason: "must be non-negative".into() });
        }
        if !(self.tail_tau_max.is_finite() && self.tail_tau_max >= 0.0) {
            return Err(StudyError::InvalidConfig { name: "tail_tau_max", reason: "must be non-negative".into() });
        }
        if self.topologies.is_empty() {
            return Err(StudyError::InvalidConfig { name: "topologies", reason: "at least one is required".into() });
        }
        if self.delays.is_empty() || self.delays.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(StudyError::InvalidConfig {
                name: "delays",
                reason: "need at least one finite, non-negative delay".into(),
            });
        }
        if !(self.calibration_delay.is_finite() && self.calibration_delay >= 0.0) {
            return Err(StudyError::InvalidConfig { name: "calibration_delay", reason: "must be non-negative".into() });
        }
        self.envelope()?;
        Ok(())
    }

    pub fn linearisation(&self) -> Result<LocalLinearisation, StudyError> {
        Ok(LocalLinearisation::new(self.a, self.b, self.dbar)?.with_spike_slope(self.spike_slope))
    }

    pub fn envelope(&self) -> Result<EnvelopeParams, StudyError> {
        Ok(EnvelopeParams::from_linearisation(&self.linearisation()?, self.tau_ctrl)?)
    }

    fn graph(&self, topology: TopologyName) -> Result<InterferenceGraph, StudyError> {
        Ok(InterferenceGraph::build_named(topology, self.w)?)
    }

    /// Time grid for the emitted tail curves.
    pub fn tau_grid(&self) -> Vec<f64> {
        let steps = (self.tail_tau_max / self.tail_tau_step + 1e-9).floor() as usize;
        (0..=steps).map(|i| i as f64 * self.tail_tau_step).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Headroom {
    pub cost_us: f64,
    pub gamma_eff: f64,
    pub du_spill_ms: f64,
}

/// DU cost against the slot budget: the radio cap shrinks in proportion to
/// the cost and any overrun adds a capped spillover delay.
pub fn headroom(kind: SchedulerKind, graph: &InterferenceGraph, config: &StudyConfig) -> Headroom {
    let cost = du_cost(kind, config.uc, graph.edges_per_cell());
    headroom_for_cost(cost, config)
}

pub fn headroom_for_cost(cost_us: f64, config: &StudyConfig) -> Headroom {
    let ratio = cost_us / config.budget_us;
    Headroom {
        cost_us,
        gamma_eff: config.gamma_nom * (1.0 - ratio).max(0.0),
        du_spill_ms: config.spill_cap_ms.min((ratio - 1.0).max(0.0)),
    }
}

/// `Δ + spill` for NOS and PF, `(1 + φ_obs)Δ + spill` for BP.
pub fn delta_eff(kind: SchedulerKind, delta_ms: f64, du_spill_ms: f64, phi_obs: f64) -> f64 {
    match kind {
        SchedulerKind::Bp => (1.0 + phi_obs) * delta_ms + du_spill_ms,
        SchedulerKind::Nos | SchedulerKind::Pf => delta_ms + du_spill_ms,
    }
}

/// `k⋆(Δ_eff) − 1{NOS} g H ρ`; for PF and BP this is a headroom proxy.
pub fn margin_proxy(kind: SchedulerKind, rho: f64, delta_eff_ms: f64, g: f64, env: &EnvelopeParams, spike_slope: f64) -> f64 {
    let coupling = if kind == SchedulerKind::Nos { g * spike_slope * rho } else { 0.0 };
    k_star_envelope(env, delta_eff_ms) - coupling
}

/// `γ_eff κ_u δ / (1 + κ_u δ)`, clamped to `0.05 γ_eff` when `δ ≤ 0`.
pub fn auc_map(delta: f64, gamma_eff: f64, kappa_u: f64) -> f64 {
    if delta <= 0.0 {
        0.05 * gamma_eff
    } else {
        gamma_eff * kappa_u * delta / (1.0 + kappa_u * delta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tails {
    pub xbar: f64,
    pub theta: f64,
    pub p999_ms: f64,
    pub maxq: f64,
    /// Set when `δ ≤ 0`; p999 and MaxQ are then `+∞`.
    pub unstable: bool,
}

/// Tail exponent `θ = κ_θ δ (μ_min x̄)²`, `MaxQ = sqrt(ln 1000 / (κ_θ δ))` and
/// `p99.9 = MaxQ / (μ_min x̄)`, with `x̄ = min{1, AUC/(γ + ε)}`.
pub fn tails(delta: f64, auc: f64, gamma: f64, kappa_theta: f64, mu_min: f64) -> Tails {
    let xbar = (auc / (gamma + XBAR_EPS)).min(1.0);
    let rate = mu_min * xbar;
    let theta = kappa_theta * delta * rate * rate;
    if delta <= 0.0 {
        return Tails { xbar, theta, p999_ms: f64::INFINITY, maxq: f64::INFINITY, unstable: true };
    }
    let maxq = (LN_1000 / (kappa_theta * delta)).sqrt();
    Tails { xbar, theta, p999_ms: maxq / rate, maxq, unstable: false }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyPoint {
    pub topology: TopologyName,
    pub delta_ms: f64,
    pub scheduler: SchedulerKind,
    pub delta_eff_ms: f64,
    pub margin: f64,
    pub gamma_eff: f64,
    pub auc: f64,
    pub xbar: f64,
    pub theta: f64,
    pub p999_ms: f64,
    pub maxq: f64,
    pub unstable: bool,
}

/// Everything the sweep needs about one topology, computed once.
#[derive(Debug, Clone, Copy)]
struct TopologyContext {
    rho: f64,
    edges_per_cell: f64,
}

fn evaluate(
    topology: TopologyName,
    ctx: TopologyContext,
    delta_ms: f64,
    kind: SchedulerKind,
    g: f64,
    env: &EnvelopeParams,
    config: &StudyConfig,
) -> StudyPoint {
    let head = headroom_for_cost(du_cost(kind, config.uc, ctx.edges_per_cell), config);
    let d_eff = delta_eff(kind, delta_ms, head.du_spill_ms, config.phi_obs);
    let margin = margin_proxy(kind, ctx.rho, d_eff, g, env, config.spike_slope);
    let auc = auc_map(margin, head.gamma_eff, config.kappa_u);
    let cap = match config.mode {
        Normalisation::Nominal => config.gamma_nom,
        Normalisation::Effective => head.gamma_eff,
    };
    let t = tails(margin, auc, cap, config.kappa_theta, config.mu_min);
    StudyPoint {
        topology,
        delta_ms,
        scheduler: kind,
        delta_eff_ms: d_eff,
        margin,
        gamma_eff: head.gamma_eff,
        auc,
        xbar: t.xbar,
        theta: t.theta,
        p999_ms: t.p999_ms,
        maxq: t.maxq,
        unstable: t.unstable,
    }
}

fn context(topology: TopologyName, config: &StudyConfig) -> Result<TopologyContext, StudyError> {
    let graph = config.graph(topology)?;
    Ok(TopologyContext { rho: graph.spectral_radius()?, edges_per_cell: graph.edges_per_cell() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub g: f64,
    /// No gain in the bracket reaches PF's p99.9; `g` is the closest one (0).
    pub floor: bool,
    pub iterations: usize,
    pub p999_nos: f64,
    pub p999_pf: f64,
}

/// Bisection on `g ∈ [0, k⋆(Δ_eff^NOS)/ρ)` until NOS p99.9 matches PF p99.9
/// at the calibration point.
///
/// Parity is always taken under nominal normalisation so that the gain, and
/// with it every margin and AUC, is the same in both reporting modes.
pub fn calibrate_gain(config: &StudyConfig) -> Result<Calibration, StudyError> {
    config.validate()?;
    let env = config.envelope()?;
    let nominal = StudyConfig { mode: Normalisation::Nominal, ..config.clone() };
    let ctx = context(config.calibration_topology, config)?;
    let at = |kind, g| evaluate(config.calibration_topology, ctx, config.calibration_delay, kind, g, &env, &nominal);

    let target = at(SchedulerKind::Pf, 0.0).p999_ms;
    let nos_at = |g: f64| at(SchedulerKind::Nos, g).p999_ms;
    let p0 = nos_at(0.0);
    if p0 >= target {
        let floor = p0 > target * (1.0 + CALIBRATION_REL_TOL);
        return Ok(Calibration { g: 0.0, floor, iterations: 0, p999_nos: p0, p999_pf: target });
    }

    let spill = headroom_for_cost(du_cost(SchedulerKind::Nos, config.uc, ctx.edges_per_cell), config).du_spill_ms;
    let d_eff = delta_eff(SchedulerKind::Nos, config.calibration_delay, spill, config.phi_obs);
    let upper = k_star_envelope(&env, d_eff) / (ctx.rho * config.spike_slope);

    // p99.9 of NOS grows monotonically in g and diverges at the upper end.
    // The lower end of the bracket always has p99.9 at or below PF's, so
    // returning it keeps NOS from overshooting the parity point.
    let (mut lo, mut hi) = (0.0, upper);
    let (mut g, mut p) = (0.0, p0);
    let mut iterations = 0;
    while iterations < CALIBRATION_MAX_ITER && target - p > CALIBRATION_REL_TOL * target {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let p_mid = nos_at(mid);
        if p_mid <= target {
            lo = mid;
            (g, p) = (mid, p_mid);
        } else {
            hi = mid;
        }
    }
    Ok(Calibration { g, floor: false, iterations, p999_nos: p, p999_pf: target })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCurve {
    pub scheduler: SchedulerKind,
    pub delta_ms: f64,
    pub theta: f64,
    /// `(τ, exp(−θτ²))`.
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyOutput {
    pub calibration: Calibration,
    pub points: Vec<StudyPoint>,
    /// Tail curves for line4 when it is part of the sweep.
    pub tails_line4: Vec<TailCurve>,
    pub mode: Normalisation,
}

impl StudyOutput {
    pub fn point(&self, topology: TopologyName, delta_ms: f64, kind: SchedulerKind) -> Option<&StudyPoint> {
        self.points
            .iter()
            .find(|p| p.topology == topology && p.delta_ms == delta_ms && p.scheduler == kind)
    }
}

/// Evaluate every (topology, Δ, scheduler) point with a fixed gain.
pub fn sweep_with_gain(config: &StudyConfig, g: f64) -> Result<Vec<StudyPoint>, StudyError> {
    config.validate()?;
    let env = config.envelope()?;
    let contexts = config
        .topologies
        .iter()
        .map(|&t| context(t, config).map(|c| (t, c)))
        .collect::<Result<Vec<_>, _>>()?;
    let grid: Vec<(TopologyName, TopologyContext, f64, SchedulerKind)> = contexts
        .iter()
        .flat_map(|&(t, c)| {
            config
                .delays
                .iter()
                .flat_map(move |&d| SchedulerKind::ALL.into_iter().map(move |k| (t, c, d, k)))
        })
        .collect();
    Ok(grid
        .into_par_iter()
        .map(|(t, c, d, k)| evaluate(t, c, d, k, g, &env, config))
        .collect())
}

pub fn tail_curve(point: &StudyPoint, taus: &[f64]) -> TailCurve {
    TailCurve {
        scheduler: point.scheduler,
        delta_ms: point.delta_ms,
        theta: point.theta,
        points: taus.iter().map(|&tau| (tau, (-point.theta * tau * tau).exp())).collect(),
    }
}

/// Calibrate once, then run the full sweep and the line4 tail curves.
pub fn run_sweep(config: &StudyConfig) -> Result<StudyOutput, StudyError> {
    let calibration = calibrate_gain(config)?;
    let points = sweep_with_gain(config, calibration.g)?;
    let taus = config.tau_grid();
    let tails_line4 = points
        .iter()
        .filter(|p| p.topology == TopologyName::Line4)
        .map(|p| tail_curve(p, &taus))
        .collect();
    Ok(StudyOutput { calibration, points, tails_line4, mode: config.mode })
}
