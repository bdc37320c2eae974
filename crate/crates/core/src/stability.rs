//! Delay-aware loop-gain thresholds, the spectral margin, Lipschitz constants
//! and the explicit-step bound for the two-state kernel.
//!
//! Time is measured in slots of 1 ms throughout, so delays in milliseconds and
//! in slots are interchangeable and all rates are per slot.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{f_sat_slope, KernelParams};

/// Guard added to the spectral norm in the step bound.
pub const STEP_NORM_EPS: f64 = 1e-6;
/// Grid resolution of the crossing-frequency scan.
pub const EXACT_GRID_POINTS: usize = 10_000;
/// Refinement target on the threshold.
pub const EXACT_K_TOL: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum StabilityError {
    #[error(
        "open loop is unstable: a - dbar = {trace_margin}, b - dbar = {det_margin} (both must be positive)"
    )]
    OpenLoopUnstable { trace_margin: f64, det_margin: f64 },
    #[error("recovery constants must be positive (a = {a}, b = {b})")]
    BadRecovery { a: f64, b: f64 },
    #[error("delay must be finite and non-negative, got {0}")]
    BadDelay(f64),
}

/// Small-signal description of one bearer around a subthreshold equilibrium.
///
/// The local Jacobian is `[[dbar, -1], [a*b, -a]]` and the delayed neighbour
/// input enters through `E = [[1, 0], [0, 0]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalLinearisation {
    pub a: f64,
    pub b: f64,
    pub dbar: f64,
    /// Spike slope ∂S/∂v at threshold.
    pub spike_slope: f64,
}

impl LocalLinearisation {
    pub fn new(a: f64, b: f64, dbar: f64) -> Result<Self, StabilityError> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(StabilityError::BadRecovery { a, b });
        }
        Ok(Self { a, b, dbar, spike_slope: 1.0 })
    }

    /// Linearise the kernel at `v_star`: `dbar = f'_sat(v*) + β − χ`.
    pub fn from_kernel(params: &KernelParams, v_star: f64) -> Result<Self, StabilityError> {
        let dbar = f_sat_slope(v_star, params.alpha, params.kappa) + params.beta - params.chi;
        Self::new(params.a, params.b, dbar)
    }

    /// Linearise at the steepest point of `f_sat`, `dbar = L_sat + β − χ`,
    /// which bounds every subthreshold operating point.
    pub fn worst_case(params: &KernelParams) -> Result<Self, StabilityError> {
        let (l_sat, _) = lipschitz_bounds(params);
        Self::new(params.a, params.b, l_sat + params.beta - params.chi)
    }

    pub fn with_spike_slope(mut self, h: f64) -> Self {
        self.spike_slope = h;
        self
    }

    pub fn jacobian(&self) -> [[f64; 2]; 2] {
        [[self.dbar, -1.0], [self.a * self.b, -self.a]]
    }

    /// Lipschitz constant of the linear vector field, `max{|dbar| + 1, ab + a}`.
    pub fn lipschitz(&self) -> f64 {
        (self.dbar.abs() + 1.0).max(self.a * self.b + self.a)
    }

    /// `J_loc + k E`.
    pub fn closed_loop(&self, k: f64) -> [[f64; 2]; 2] {
        let mut m = self.jacobian();
        m[0][0] += k;
        m
    }
}

/// Monotone envelope `k0 · exp(−Δ/τ_ctrl)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeParams {
    pub k0: f64,
    pub tau_ctrl: f64,
}

impl EnvelopeParams {
    pub fn from_linearisation(lin: &LocalLinearisation, tau_ctrl: f64) -> Result<Self, StabilityError> {
        Ok(Self { k0: k_star_zero(lin)?, tau_ctrl })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    pub k_star: f64,
    pub k: f64,
    pub delta: f64,
    pub omega0: f64,
}

/// Zero-delay threshold from the Routh–Hurwitz conditions on `J_loc + kE`.
pub fn k_star_zero(lin: &LocalLinearisation) -> Result<f64, StabilityError> {
    let trace_margin = lin.a - lin.dbar;
    let det_margin = lin.b - lin.dbar;
    if trace_margin <= 0.0 || det_margin <= 0.0 {
        return Err(StabilityError::OpenLoopUnstable { trace_margin, det_margin });
    }
    Ok(trace_margin.min(det_margin))
}

/// Zero-delay crossing frequency: `sqrt(a(b − a))` when `a ≤ b`, else 0.
pub fn omega_zero(lin: &LocalLinearisation) -> f64 {
    if lin.a <= lin.b {
        (lin.a * (lin.b - lin.a)).sqrt()
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PadeBound {
    pub k_star: f64,
    /// Set when `a > b`, where ω0 = 0 and the bound collapses to k⋆(0).
    pub degenerate: bool,
}

/// First-order Padé lower bound `k⋆(0) / (1 + Δ ω0 / 2)`.
pub fn k_star_pade(lin: &LocalLinearisation, delay_ms: f64) -> Result<PadeBound, StabilityError> {
    check_delay(delay_ms)?;
    let k0 = k_star_zero(lin)?;
    if lin.a > lin.b {
        return Ok(PadeBound { k_star: k0, degenerate: true });
    }
    let w0 = omega_zero(lin);
    Ok(PadeBound {
        k_star: k0 / (1.0 + 0.5 * delay_ms * w0),
        degenerate: false,
    })
}

pub fn k_star_envelope(env: &EnvelopeParams, delay_ms: f64) -> f64 {
    env.k0 * (-delay_ms / env.tau_ctrl).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactThreshold {
    pub k_star: f64,
    /// Frequency of the minimising crossing, rad/slot.
    pub omega_star: f64,
    /// No crossing was found inside the scan range; `k_star` is the modulus
    /// at the end of the range.
    pub no_crossing: bool,
}

/// `z(ω) = jω − dbar + ab/(a + jω)`; on the boundary `k e^{−jωΔ} = z(jω)`.
fn crossing_curve(lin: &LocalLinearisation, omega: f64) -> Complex64 {
    let jw = Complex64::new(0.0, omega);
    jw - lin.dbar + lin.a * lin.b / (jw + lin.a)
}

/// Phase mismatch `arg z(ω) + ωΔ`, wrapped to (−π, π].
fn phase_mismatch(lin: &LocalLinearisation, omega: f64, delay: f64) -> f64 {
    let raw = crossing_curve(lin, omega).arg() + omega * delay;
    let two_pi = std::f64::consts::TAU;
    let wrapped = raw - two_pi * (raw / two_pi).round();
    if wrapped <= -std::f64::consts::PI {
        wrapped + two_pi
    } else {
        wrapped
    }
}

/// Smallest positive loop gain that places a root of
/// `det(sI − J_loc − k e^{−sΔ} E)` on the imaginary axis.
///
/// On the boundary the two real equations reduce to `k = |z(ω)|` together
/// with the phase condition `arg z(ω) ≡ −ωΔ (mod 2π)`. The phase mismatch is
/// scanned over `ω ∈ [0, 10·max(a, b)]` and every sign change is refined by
/// bisection.
pub fn k_star_exact(lin: &LocalLinearisation, delay_ms: f64) -> Result<ExactThreshold, StabilityError> {
    check_delay(delay_ms)?;
    k_star_zero(lin)?;
    let omega_max = 10.0 * lin.a.max(lin.b);
    let mut best: Option<(f64, f64)> = None;
    let mut consider = |omega: f64| {
        let k = crossing_curve(lin, omega).norm();
        if k > 0.0 && best.is_none_or(|(bk, _)| k < bk) {
            best = Some((k, omega));
        }
    };

    // ω = 0: z(0) = b − dbar is real; a positive value is a real-root crossing.
    if lin.b - lin.dbar > 0.0 {
        consider(0.0);
    }

    let step = omega_max / EXACT_GRID_POINTS as f64;
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut lo = step;
    let mut f_lo = phase_mismatch(lin, lo, delay_ms);
    for i in 2..=EXACT_GRID_POINTS {
        let hi = step * i as f64;
        let f_hi = phase_mismatch(lin, hi, delay_ms);
        if f_lo == 0.0 {
            consider(lo);
        } else if f_lo.signum() != f_hi.signum() && f_lo.abs() < half_pi && f_hi.abs() < half_pi {
            consider(refine_crossing(lin, delay_ms, lo, hi, f_lo));
        }
        lo = hi;
        f_lo = f_hi;
    }

    Ok(match best {
        Some((k_star, omega_star)) => ExactThreshold { k_star, omega_star, no_crossing: false },
        None => ExactThreshold {
            k_star: crossing_curve(lin, omega_max).norm(),
            omega_star: omega_max,
            no_crossing: true,
        },
    })
}

fn refine_crossing(lin: &LocalLinearisation, delay: f64, mut lo: f64, mut hi: f64, mut f_lo: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f_mid = phase_mismatch(lin, mid, delay);
        if f_mid == 0.0 {
            return mid;
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
        let dk = (crossing_curve(lin, hi).norm() - crossing_curve(lin, lo).norm()).abs();
        if dk <= EXACT_K_TOL * 1e-2 && hi - lo < 1e-12 {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn check_delay(delay_ms: f64) -> Result<(), StabilityError> {
    if delay_ms.is_finite() && delay_ms >= 0.0 {
        Ok(())
    } else {
        Err(StabilityError::BadDelay(delay_ms))
    }
}

/// `δ = k⋆(Δ) − 1{nos} · g H ρ` with `k⋆` from the envelope. Negative margins
/// are reported, not rejected.
pub fn margin(
    lin: &LocalLinearisation,
    env: &EnvelopeParams,
    g: f64,
    rho: f64,
    delay_ms: f64,
    is_nos: bool,
) -> MarginReport {
    let k_star = k_star_envelope(env, delay_ms);
    let k = if is_nos { g * lin.spike_slope * rho } else { 0.0 };
    MarginReport {
        k_star,
        k,
        delta: k_star - k,
        omega0: omega_zero(lin),
    }
}

/// `(L_sat, L)` with `L_sat = (3√3/8) α/√κ` and
/// `L = max{L_sat + |β − χ| + 1, ab + a}`.
pub fn lipschitz_bounds(params: &KernelParams) -> (f64, f64) {
    let l_sat = 3.0 * 3f64.sqrt() / 8.0 * params.alpha / params.kappa.sqrt();
    let l = (l_sat + (params.beta - params.chi).abs() + 1.0).max(params.a * params.b + params.a);
    (l_sat, l)
}

/// Largest singular value of a 2×2 matrix.
pub fn spectral_norm_2x2(m: [[f64; 2]; 2]) -> f64 {
    let fro2: f64 = m.iter().flatten().map(|x| x * x).sum();
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0);
    (0.5 * (fro2 + disc.sqrt())).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepBound {
    pub h_max: f64,
    pub lipschitz: f64,
    pub closed_loop_norm: f64,
    pub omega0: f64,
}

impl StepBound {
    /// `h ω0 ≤ 1`; vacuous when ω0 = 0.
    pub fn frequency_ok(&self, h: f64) -> bool {
        h * self.omega0 <= 1.0
    }

    pub fn admits(&self, h: f64) -> bool {
        h > 0.0 && h < self.h_max && self.frequency_ok(h)
    }
}

/// `h_max = min{1/L, 2/(‖M + kE‖₂ + ε)}` for an arbitrary local Jacobian `M`.
pub fn step_bound_for(jacobian: [[f64; 2]; 2], lipschitz: f64, k: f64, omega0: f64) -> StepBound {
    let mut m = jacobian;
    m[0][0] += k;
    let norm = spectral_norm_2x2(m);
    StepBound {
        h_max: (1.0 / lipschitz).min(2.0 / (norm + STEP_NORM_EPS)),
        lipschitz,
        closed_loop_norm: norm,
        omega0,
    }
}

pub fn step_bound(lin: &LocalLinearisation, params: &KernelParams, k: f64) -> StepBound {
    let (_, l) = lipschitz_bounds(params);
    step_bound_for(lin.jacobian(), l, k, omega_zero(lin))
}

/// Explicit-Euler run of the linearised delayed mode
/// `z ← z + h (J_loc z + k E z(t − Δ))`. Returns the step at which `|z|`
/// left `[0, blowup · |z0|]`, or `None` if it stayed bounded.
pub fn linearised_divergence_step(
    lin: &LocalLinearisation,
    k: f64,
    h: f64,
    delay_slots: usize,
    z0: [f64; 2],
    steps: usize,
    blowup: f64,
) -> Option<usize> {
    let j = lin.jacobian();
    let norm0 = (z0[0] * z0[0] + z0[1] * z0[1]).sqrt();
    let limit = blowup * norm0.max(f64::MIN_POSITIVE);
    let mut history = std::collections::VecDeque::from(vec![z0[0]; delay_slots + 1]);
    let mut z = z0;
    for step in 0..steps {
        let delayed_v = *history.front().expect("non-empty delay line");
        let dv = j[0][0] * z[0] + j[0][1] * z[1] + k * delayed_v;
        let du = j[1][0] * z[0] + j[1][1] * z[1];
        z = [z[0] + h * dv, z[1] + h * du];
        history.pop_front();
        history.push_back(z[0]);
        let norm = (z[0] * z[0] + z[1] * z[1]).sqrt();
        if !norm.is_finite() || norm > limit {
            return Some(step);
        }
    }
    None
}
