//! Two-state spiking kernel: saturating growth, slow recovery, centred leak,
//! delayed neighbour spikes, shot-noise arrival drive and soft reset.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::InterferenceGraph;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("integration diverged at slot {slot}: bearer {bearer} has v = {v}, u = {u}")]
    Divergence { slot: u64, bearer: usize, v: f64, u: f64 },
    #[error("invalid kernel parameter `{name}` = {value}: {reason}")]
    InvalidParam { name: &'static str, value: f64, reason: &'static str },
    #[error("drive has {got} entries for {n} bearers")]
    DriveLength { got: usize, n: usize },
}

/// All kernel constants. Rates are per slot; `h` is the Euler step in slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelParams {
    pub alpha: f64,
    pub kappa: f64,
    pub beta: f64,
    pub chi: f64,
    pub v_ref: f64,
    pub a: f64,
    pub b: f64,
    pub g: f64,
    pub v_th: f64,
    pub eps: f64,
    pub c: f64,
    pub d: f64,
    pub nu: f64,
    pub tau_rst: f64,
    pub tau_s: f64,
    pub varsigma: f64,
    pub delta_slots: usize,
    pub h: f64,
    /// |v| or |u| beyond this is treated as divergence.
    pub divergence_cap: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            kappa: 1.0,
            beta: 0.0,
            chi: 0.15,
            v_ref: 0.0,
            a: 1.0 / 75.0,
            b: 1.0,
            g: 0.0,
            v_th: 1.0 / 30.0,
            eps: 1e-9,
            c: 0.0,
            d: 1.0 / 600.0,
            nu: 0.5,
            tau_rst: 3.0,
            tau_s: 4.0,
            varsigma: 300.0,
            delta_slots: 0,
            h: 0.5,
            divergence_cap: 1e12,
        }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<(), KernelError> {
        let positive: [(&'static str, f64); 9] = [
            ("alpha", self.alpha),
            ("kappa", self.kappa),
            ("chi", self.chi),
            ("a", self.a),
            ("b", self.b),
            ("nu", self.nu),
            ("tau_s", self.tau_s),
            ("varsigma", self.varsigma),
            ("eps", self.eps),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(KernelError::InvalidParam { name, value, reason: "must be positive" });
            }
        }
        if !(self.tau_rst >= 1.0) {
            return Err(KernelError::InvalidParam {
                name: "tau_rst",
                value: self.tau_rst,
                reason: "must be at least one slot",
            });
        }
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(KernelError::InvalidParam { name: "h", value: self.h, reason: "must be positive" });
        }
        if !(self.g.is_finite() && self.g >= 0.0) {
            return Err(KernelError::InvalidParam { name: "g", value: self.g, reason: "must be non-negative" });
        }
        for (name, value) in [("beta", self.beta), ("v_ref", self.v_ref), ("v_th", self.v_th), ("c", self.c), ("d", self.d)] {
            if !value.is_finite() {
                return Err(KernelError::InvalidParam { name, value, reason: "must be finite" });
            }
        }
        Ok(())
    }

    /// Per-step decay of the filtered shot noise, `exp(−h/τ_s)`.
    pub fn noise_decay(&self) -> f64 {
        (-self.h / self.tau_s).exp()
    }

    /// Soft-reset contraction factor `exp(−ν τ_rst)`.
    pub fn reset_factor(&self) -> f64 {
        (-self.nu * self.tau_rst).exp()
    }
}

/// `α v² / (1 + κ v²)`, bounded by `α/κ`.
pub fn f_sat(v: f64, alpha: f64, kappa: f64) -> f64 {
    let v2 = v * v;
    alpha * v2 / (1.0 + kappa * v2)
}

/// `f'_sat(v) = 2αv / (1 + κv²)²`.
pub fn f_sat_slope(v: f64, alpha: f64, kappa: f64) -> f64 {
    let den = 1.0 + kappa * v * v;
    2.0 * alpha * v / (den * den)
}

/// One step of exponentially filtered shot noise:
/// `noise ← noise · decay + amplitude` per bearer.
pub fn shot_noise_step(noise: &mut [f64], decay: f64, amplitudes: &[f64]) {
    for (x, a) in noise.iter_mut().zip(amplitudes) {
        *x = *x * decay + a;
    }
}

/// Shot-noise arrival drive whose stationary mean is `λ/ς` when fed with
/// per-slot arrival bytes of mean `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotNoise {
    decay: f64,
    gain: f64,
    value: Vec<f64>,
}

impl ShotNoise {
    pub fn new(n: usize, params: &KernelParams) -> Self {
        let decay = params.noise_decay();
        Self {
            decay,
            gain: (1.0 - decay) / params.varsigma,
            value: vec![0.0; n],
        }
    }

    /// Amplitude given to one byte of arrivals.
    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn step(&mut self, arrival_bytes: &[f64]) -> &[f64] {
        let gain = self.gain;
        for (x, bytes) in self.value.iter_mut().zip(arrival_bytes) {
            *x = *x * self.decay + gain * bytes;
        }
        &self.value
    }

    pub fn value(&self) -> &[f64] {
        &self.value
    }
}

/// Per-bearer `(v, u)` plus the delay line of past spike vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelState {
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    /// Front is the oldest entry, `S(t − Δ)`; length `max(Δ, 1)`.
    spike_line: VecDeque<Vec<bool>>,
    pub noise: ShotNoise,
}

impl KernelState {
    /// Start every bearer at the reset baseline with recovery in balance.
    pub fn new(n: usize, params: &KernelParams) -> Self {
        Self::with_state(vec![params.c; n], vec![params.b * params.c; n], params)
    }

    pub fn with_state(v: Vec<f64>, u: Vec<f64>, params: &KernelParams) -> Self {
        let n = v.len();
        let depth = params.delta_slots.max(1);
        Self {
            v,
            u,
            spike_line: (0..depth).map(|_| vec![false; n]).collect(),
            noise: ShotNoise::new(n, params),
        }
    }

    pub fn n(&self) -> usize {
        self.v.len()
    }

    /// `S(t − Δ)` as seen by the current slot.
    pub fn delayed_spikes(&self) -> &[bool] {
        self.spike_line.front().expect("delay line is never empty")
    }

    pub fn spike_line_len(&self) -> usize {
        self.spike_line.len()
    }

    /// Explicit Euler update of `(v, u)` using the delayed spike vector.
    /// Returns the neighbour drive `(W S(t−Δ))_i` that was applied (before
    /// multiplying by `g`).
    pub fn integrate(
        &mut self,
        params: &KernelParams,
        drive: &[f64],
        graph: &InterferenceGraph,
        slot: u64,
    ) -> Result<Vec<f64>, KernelError> {
        let n = self.n();
        if drive.len() != n {
            return Err(KernelError::DriveLength { got: drive.len(), n });
        }
        let pressure = graph.apply_binary(self.delayed_spikes());
        let h = params.h;
        for i in 0..n {
            let v = self.v[i];
            let u = self.u[i];
            let dv = f_sat(v, params.alpha, params.kappa) + params.beta * v - u - params.chi * (v - params.v_ref)
                + params.g * pressure[i]
                + drive[i];
            let du = params.a * (params.b * v - u);
            let v_next = v + h * dv;
            let u_next = u + h * du;
            if !v_next.is_finite()
                || !u_next.is_finite()
                || v_next.abs() > params.divergence_cap
                || u_next.abs() > params.divergence_cap
            {
                return Err(KernelError::Divergence { slot, bearer: i, v: v_next, u: u_next });
            }
            self.v[i] = v_next;
            self.u[i] = u_next;
        }
        Ok(pressure)
    }

    /// Trigger `μ_i v_i / (r̄_i + ε) ≥ v_th`; spiking bearers get
    /// `v ← c + (v − c) e^{−ν τ_rst}` and `u ← u + d`.
    pub fn spike_and_reset(&mut self, params: &KernelParams, mu: &[f64], rbar: &[f64]) -> Vec<bool> {
        let factor = params.reset_factor();
        (0..self.n())
            .map(|i| {
                let fire = mu[i] * self.v[i] / (rbar[i] + params.eps) >= params.v_th;
                if fire {
                    self.v[i] = params.c + (self.v[i] - params.c) * factor;
                    self.u[i] += params.d;
                }
                fire
            })
            .collect()
    }

    /// Record this slot's spikes; the oldest entry leaves the line.
    pub fn push_spikes(&mut self, spikes: Vec<bool>) {
        self.spike_line.pop_front();
        self.spike_line.push_back(spikes);
    }

    /// Full per-slot update: integrate, spike test with soft reset, rotate the
    /// delay line. Returns the spike vector emitted this slot.
    pub fn step(
        &mut self,
        params: &KernelParams,
        drive: &[f64],
        graph: &InterferenceGraph,
        mu: &[f64],
        rbar: &[f64],
        slot: u64,
    ) -> Result<Vec<bool>, KernelError> {
        self.integrate(params, drive, graph, slot)?;
        let spikes = self.spike_and_reset(params, mu, rbar);
        self.push_spikes(spikes.clone());
        Ok(spikes)
    }
}
