//! Slot-level simulator: compound-Poisson arrivals, FIFO byte queues, the
//! spiking kernel (or a PF / delayed-BP baseline), clique allocation on
//! integer PRBs, and the empirical metrics used to check the margin.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::{
    continuous_shares, integerise_graph, pf_weight, suppress, update_rate_ewma, update_request, AllocError,
    AllocParams, AllocState, SchedulerKind, FLOOR_SLACK,
};
use crate::kernel::{KernelError, KernelParams, KernelState};
use crate::stability::{k_star_envelope, margin, EnvelopeParams, LocalLinearisation, MarginReport, StabilityError};
use crate::sync::{sync_order, warn, SyncMode, MIN_WINDOW};
use crate::topology::{InterferenceGraph, TopologyError};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("invalid simulation setting `{name}`: {reason}")]
    InvalidConfig { name: &'static str, reason: String },
}

/// `max{0, q + a − s}` per bearer.
pub fn queue_step(q: &[f64], arrivals: &[f64], service: &[f64]) -> Vec<f64> {
    q.iter()
        .zip(arrivals)
        .zip(service)
        .map(|((q, a), s)| (q + a - s).max(0.0))
        .collect()
}

/// Per-bearer service rate at full band, bytes/slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MuModel {
    pub mean: f64,
    /// Relative half-width of i.i.d. uniform fading; 0 gives a constant rate.
    pub fading: f64,
}

impl Default for MuModel {
    fn default() -> Self {
        Self { mean: 50.0, fading: 0.0 }
    }
}

impl MuModel {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.fading == 0.0 {
            self.mean
        } else {
            self.mean * (1.0 + self.fading * rng.random_range(-1.0..=1.0))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyncSettings {
    pub mode: SyncMode,
    pub window: usize,
    /// Consecutive slots above the calibrated percentile before warning.
    pub persistence: usize,
}

impl Default for SyncSettings {
    fn default() -> Self {
        Self { mode: SyncMode::Covariance, window: 64, persistence: 20 }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n_slots: u64,
    /// Mean arrivals per bearer, bytes/slot.
    pub lambda: Vec<f64>,
    /// Mean size of one arrival batch, bytes (exponentially distributed).
    pub mean_batch: f64,
    pub mu: MuModel,
    pub scheduler: SchedulerKind,
    pub seed: u64,
    pub warmup_slots: u64,
    pub graph: InterferenceGraph,
    pub kernel: KernelParams,
    pub alloc: AllocParams,
    pub bp_delay_slots: usize,
    /// Envelope time constant used when reporting the run's margin.
    pub tau_ctrl: f64,
    pub sync: SyncSettings,
    /// Delay thresholds (slots) at which the empirical CCDF is reported.
    pub tau_grid: Vec<f64>,
    /// Fit the leak reference from served load during warm-up.
    pub estimate_v_ref: bool,
    /// R samples defining the light-load distribution; the warm-up R values
    /// are used when empty.
    pub light_load_r: Vec<f64>,
}

impl SimConfig {
    /// Warm-up default: 10% of the run, at least 1000 slots.
    pub fn default_warmup(n_slots: u64) -> u64 {
        (n_slots / 10).max(1000).min(n_slots)
    }

    pub fn new(graph: InterferenceGraph, lambda: Vec<f64>, scheduler: SchedulerKind, n_slots: u64, seed: u64) -> Self {
        Self {
            n_slots,
            lambda,
            mean_batch: 4.0,
            mu: MuModel::default(),
            scheduler,
            seed,
            warmup_slots: Self::default_warmup(n_slots),
            graph,
            kernel: KernelParams::default(),
            alloc: AllocParams::default(),
            bp_delay_slots: 5,
            tau_ctrl: 10.0,
            sync: SyncSettings::default(),
            tau_grid: (0..=50).map(|t| t as f64 * 2.0).collect(),
            estimate_v_ref: true,
            light_load_r: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let n = self.graph.n();
        if self.lambda.len() != n {
            return Err(SimError::InvalidConfig {
                name: "lambda",
                reason: format!("{} rates for {} bearers", self.lambda.len(), n),
            });
        }
        if self.lambda.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(SimError::InvalidConfig { name: "lambda", reason: "rates must be non-negative".into() });
        }
        if !(self.mean_batch > 0.0) {
            return Err(SimError::InvalidConfig { name: "mean_batch", reason: "must be positive".into() });
        }
        if !(self.mu.mean > 0.0 && (0.0..1.0).contains(&self.mu.fading)) {
            return Err(SimError::InvalidConfig {
                name: "mu",
                reason: "mean must be positive and fading in [0, 1)".into(),
            });
        }
        if self.warmup_slots > self.n_slots || self.n_slots == 0 {
            return Err(SimError::InvalidConfig {
                name: "warmup_slots",
                reason: "need 0 < n_slots and warmup_slots <= n_slots".into(),
            });
        }
        if self.sync.window < MIN_WINDOW {
            return Err(SimError::InvalidConfig {
                name: "sync.window",
                reason: format!("must be at least {MIN_WINDOW}"),
            });
        }
        self.kernel.validate()?;
        self.alloc.validate(self.graph.cliques().len())?;
        Ok(())
    }

    /// Margin of the configured kernel on this graph, linearised at the
    /// steepest point of the growth term.
    pub fn margin(&self) -> Result<MarginReport, SimError> {
        let lin = LocalLinearisation::worst_case(&self.kernel)?;
        let env = EnvelopeParams::from_linearisation(&lin, self.tau_ctrl)?;
        let rho = self.graph.spectral_radius()?;
        Ok(margin(&lin, &env, self.kernel.g, rho, self.kernel.delta_slots as f64, self.scheduler == SchedulerKind::Nos))
    }

    /// Gain that puts the NOS margin at `delta` on this graph and delay.
    pub fn gain_for_margin(&self, delta: f64) -> Result<f64, SimError> {
        let lin = LocalLinearisation::worst_case(&self.kernel)?;
        let env = EnvelopeParams::from_linearisation(&lin, self.tau_ctrl)?;
        let rho = self.graph.spectral_radius()?;
        Ok((k_star_envelope(&env, self.kernel.delta_slots as f64) - delta) / (lin.spike_slope * rho))
    }

    /// Cliques whose mean offered load `Σ λ_i / μ̄` reaches the budget γ_C.
    pub fn overloaded_cliques(&self) -> Vec<usize> {
        self.graph
            .cliques()
            .iter()
            .enumerate()
            .filter(|(c, members)| {
                let load: f64 = members.iter().map(|&i| self.lambda[i] / self.mu.mean).sum();
                load >= self.alloc.gamma_for(*c)
            })
            .map(|(c, _)| c)
            .collect()
    }
}

/// Inputs for the baseline weight rules.
pub struct BaselineInputs<'a> {
    pub mu: &'a [f64],
    pub rbar: &'a [f64],
    /// Queue observed `bp_delay_slots` ago.
    pub delayed_queue: &'a [f64],
    pub eps: f64,
}

/// PF: `μ_i / (r̄_i + ε)`. BP: `q_i(t − Δ_obs) · μ_i`. NOS has no baseline
/// rule and yields zeros.
pub fn baseline_weights(kind: SchedulerKind, inputs: &BaselineInputs<'_>) -> Vec<f64> {
    match kind {
        SchedulerKind::Pf => inputs.mu.iter().zip(inputs.rbar).map(|(m, r)| m / (r + inputs.eps)).collect(),
        SchedulerKind::Bp => inputs.delayed_queue.iter().zip(inputs.mu).map(|(q, m)| q * m).collect(),
        SchedulerKind::Nos => vec![0.0; inputs.mu.len()],
    }
}

/// Fixed-lag view of past queue vectors.
#[derive(Debug, Clone)]
pub struct QueueObserver {
    history: VecDeque<Vec<f64>>,
}

impl QueueObserver {
    pub fn new(n: usize, delay: usize) -> Self {
        Self { history: (0..=delay).map(|_| vec![0.0; n]).collect() }
    }

    /// Record the queue at the start of the current slot.
    pub fn push(&mut self, q: &[f64]) {
        self.history.pop_front();
        self.history.push_back(q.to_vec());
    }

    /// Queue as it was `delay` slots before the most recent push.
    pub fn delayed(&self) -> &[f64] {
        self.history.front().expect("observer history is never empty")
    }
}

/// Byte queue with FIFO batch tagging for exact sojourn times.
#[derive(Debug, Clone, Default)]
struct FifoQueue {
    batches: VecDeque<(u64, f64)>,
    backlog: f64,
}

impl FifoQueue {
    fn arrive(&mut self, slot: u64, bytes: f64) {
        if bytes > 0.0 {
            self.batches.push_back((slot, bytes));
            self.backlog += bytes;
        }
    }

    /// Serve up to `capacity` bytes; completed batches report their delay.
    fn serve(&mut self, slot: u64, capacity: f64, mut on_depart: impl FnMut(u64)) -> f64 {
        let mut left = capacity;
        let mut served = 0.0;
        while left > 0.0 {
            let Some(front) = self.batches.front_mut() else { break };
            if front.1 <= left {
                left -= front.1;
                served += front.1;
                on_depart(slot - front.0);
                self.batches.pop_front();
            } else {
                front.1 -= left;
                served += left;
                left = 0.0;
            }
        }
        self.backlog = if self.batches.is_empty() { 0.0 } else { (self.backlog - served).max(0.0) };
        served
    }
}

/// Online least-squares slope of `y` against slot index.
#[derive(Debug, Clone, Copy, Default)]
struct SlopeAccumulator {
    n: f64,
    st: f64,
    stt: f64,
    sy: f64,
    sty: f64,
}

impl SlopeAccumulator {
    fn push(&mut self, t: f64, y: f64) {
        self.n += 1.0;
        self.st += t;
        self.stt += t * t;
        self.sy += y;
        self.sty += t * y;
    }

    fn slope(&self) -> f64 {
        let den = self.n * self.stt - self.st * self.st;
        if self.n < 2.0 || den == 0.0 {
            0.0
        } else {
            (self.n * self.sty - self.st * self.sy) / den
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimMetrics {
    pub scheduler: SchedulerKind,
    /// Post-warm-up mean backlog per bearer, bytes.
    pub mean_queue: Vec<f64>,
    /// 99.9th percentile of FIFO batch delay after warm-up, slots.
    pub p999_delay_slots: f64,
    /// Largest backlog of any bearer after warm-up, bytes.
    pub max_queue: f64,
    /// Per-slot utilisation: served PRB-equivalents over clique capacity,
    /// averaged over cliques.
    pub utilisation: Vec<f64>,
    /// `(τ, Pr{D > τ})` on the configured grid.
    pub delay_ccdf: Vec<(f64, f64)>,
    /// Little's-law delay `E[q] / E[s]` per bearer, slots.
    pub little_delay_slots: Vec<f64>,
    /// Per-slot synchrony order parameter (NOS only; empty otherwise).
    pub sync_r: Vec<f64>,
    pub warnings: Vec<bool>,
    /// Total backlog per slot, bytes.
    pub backlog_trace: Vec<f64>,
    /// Largest per-bearer least-squares backlog slope over the last half of
    /// the run, bytes/slot.
    pub queue_trend_slope: f64,
    pub mean_utilisation: f64,
    pub spike_rate: Vec<f64>,
    /// Post-warm-up mean granted band fraction per bearer.
    pub mean_share: Vec<f64>,
    pub departed_batches: u64,
    pub v_ref: f64,
    pub uniform_split_slots: u64,
}

impl SimMetrics {
    pub fn warn_count(&self) -> usize {
        self.warnings.iter().filter(|&&w| w).count()
    }

    pub fn mean_queue_overall(&self) -> f64 {
        self.mean_queue.iter().sum::<f64>() / self.mean_queue.len().max(1) as f64
    }
}

/// Run one simulation. Deterministic for a given config and seed.
pub fn run(config: &SimConfig) -> Result<SimMetrics, SimError> {
    config.validate()?;
    let n = config.graph.n();
    let graph = &config.graph;
    let cliques = graph.cliques();
    let gammas = config.alloc.gammas(cliques.len());
    let prb_total = f64::from(config.alloc.prb_total);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut kparams = config.kernel.clone();
    let mut kernel = KernelState::new(n, &kparams);
    let mut alloc = AllocState::new(n);
    let mut observer = QueueObserver::new(n, config.bp_delay_slots);
    let mut queues: Vec<FifoQueue> = vec![FifoQueue::default(); n];

    let batch_size = Exp::new(1.0 / config.mean_batch).expect("positive batch mean");
    let batch_counts: Vec<Option<Poisson<f64>>> = config
        .lambda
        .iter()
        .map(|&l| (l > 0.0).then(|| Poisson::new(l / config.mean_batch).expect("positive rate")))
        .collect();

    let warmup = config.warmup_slots;
    let trend_start = warmup.max(config.n_slots / 2);
    let mut delays: Vec<u64> = Vec::new();
    let mut queue_sum = vec![0.0; n];
    let mut served_sum = vec![0.0; n];
    let mut share_sum = vec![0.0; n];
    let mut max_queue: f64 = 0.0;
    let mut slopes = vec![SlopeAccumulator::default(); n];
    let mut utilisation = Vec::with_capacity(config.n_slots as usize);
    let mut backlog_trace = Vec::with_capacity(config.n_slots as usize);
    let mut spike_counts = vec![0u64; n];
    let mut spike_window: VecDeque<Vec<bool>> = VecDeque::with_capacity(config.sync.window);
    let mut sync_r = Vec::new();
    let mut served_warmup = 0.0;
    let mut uniform_split_slots = 0u64;

    for slot in 0..config.n_slots {
        let mu: Vec<f64> = (0..n).map(|_| config.mu.sample(&mut rng)).collect();
        let arrivals: Vec<f64> = batch_counts
            .iter()
            .map(|dist| match dist {
                Some(p) => {
                    let k = p.sample(&mut rng) as u64;
                    (0..k).map(|_| batch_size.sample(&mut rng)).sum()
                }
                None => 0.0,
            })
            .collect();

        let backlog_now: Vec<f64> = queues.iter().map(|q| q.backlog).collect();
        observer.push(&backlog_now);
        update_rate_ewma(&mut alloc.rbar, &alloc.last_mu, &alloc.last_x, config.alloc.vartheta);

        let weights = match config.scheduler {
            SchedulerKind::Nos => {
                let drive = kernel.noise.step(&arrivals).to_vec();
                kernel.integrate(&kparams, &drive, graph, slot)?;
                let spikes = kernel.spike_and_reset(&kparams, &mu, &alloc.rbar);
                let delayed = kernel.delayed_spikes().to_vec();
                kernel.push_spikes(spikes.clone());
                update_request(&mut alloc.r, &spikes, config.alloc.zeta);
                let r_tilde = suppress(&alloc.r, graph, &delayed);
                for (c, &s) in spike_counts.iter_mut().zip(&spikes) {
                    *c += u64::from(s);
                }
                if spike_window.len() == config.sync.window {
                    spike_window.pop_front();
                }
                spike_window.push_back(spikes);
                let r = if spike_window.len() == config.sync.window {
                    sync_order(spike_window.make_contiguous(), config.sync.mode)
                } else {
                    0.0
                };
                sync_r.push(r);
                pf_weight(&r_tilde, &mu, &alloc.rbar, config.alloc.eps)
            }
            kind => baseline_weights(
                kind,
                &BaselineInputs {
                    mu: &mu,
                    rbar: &alloc.rbar,
                    delayed_queue: observer.delayed(),
                    eps: config.alloc.eps,
                },
            ),
        };

        let shares = continuous_shares(&weights, cliques, &gammas, config.alloc.eps);
        if !shares.uniform_cliques.is_empty() {
            uniform_split_slots += 1;
        }
        let grants = integerise_graph(&shares, cliques, &config.alloc);
        debug_assert!(
            cliques.iter().enumerate().all(|(c, clique)| {
                let budget = (config.alloc.gamma_for(c) * prb_total + FLOOR_SLACK).floor() as u32;
                clique.iter().map(|&i| grants[i]).sum::<u32>() <= budget
            }),
            "clique budget exceeded at slot {slot}"
        );

        let mut served_prb = vec![0.0; n];
        for i in 0..n {
            let x = f64::from(grants[i]) / prb_total;
            let capacity = mu[i] * x;
            queues[i].arrive(slot, arrivals[i]);
            let record = slot >= warmup;
            let served = queues[i].serve(slot, capacity, |d| {
                if record {
                    delays.push(d);
                }
            });
            served_prb[i] = served / mu[i] * prb_total;
            alloc.last_x[i] = x;
            alloc.last_mu[i] = mu[i];
            if slot < warmup {
                served_warmup += served;
            } else {
                served_sum[i] += served;
                share_sum[i] += x;
            }
        }

        let util = cliques
            .iter()
            .enumerate()
            .map(|(_, members)| members.iter().map(|&i| served_prb[i]).sum::<f64>() / prb_total)
            .sum::<f64>()
            / cliques.len() as f64;
        utilisation.push(util);
        let total_backlog: f64 = queues.iter().map(|q| q.backlog).sum();
        backlog_trace.push(total_backlog);

        if slot >= warmup {
            for (i, q) in queues.iter().enumerate() {
                queue_sum[i] += q.backlog;
                max_queue = max_queue.max(q.backlog);
                if slot >= trend_start {
                    slopes[i].push(slot as f64, q.backlog);
                }
            }
        }

        if config.estimate_v_ref && config.scheduler == SchedulerKind::Nos && slot < warmup {
            // χ v_ref = ς⁻¹ E[μ x], averaged over bearers and warm-up slots.
            let mean_service = served_warmup / ((slot + 1) as f64 * n as f64);
            kparams.v_ref = mean_service / (kparams.varsigma * kparams.chi);
        }
    }

    let measured = (config.n_slots - warmup).max(1) as f64;
    let mean_queue: Vec<f64> = queue_sum.iter().map(|s| s / measured).collect();
    let little_delay_slots = mean_queue
        .iter()
        .zip(&served_sum)
        .map(|(q, s)| if *s > 0.0 { q / (s / measured) } else { f64::INFINITY })
        .collect();

    delays.sort_unstable();
    let p999_delay_slots = if delays.is_empty() {
        0.0
    } else {
        let idx = ((0.999 * delays.len() as f64).ceil() as usize).clamp(1, delays.len()) - 1;
        delays[idx] as f64
    };
    let delay_ccdf = config
        .tau_grid
        .iter()
        .map(|&tau| {
            let above = delays.len() - delays.partition_point(|&d| (d as f64) <= tau);
            let p = if delays.is_empty() { 0.0 } else { above as f64 / delays.len() as f64 };
            (tau, p)
        })
        .collect();

    let warnings = if sync_r.is_empty() {
        Vec::new()
    } else {
        let calibration: Vec<f64> = if config.light_load_r.is_empty() {
            sync_r[..(warmup as usize).min(sync_r.len())].to_vec()
        } else {
            config.light_load_r.clone()
        };
        if calibration.is_empty() {
            vec![false; sync_r.len()]
        } else {
            warn(&sync_r, &calibration, config.sync.persistence)
        }
    };

    let post = &utilisation[warmup as usize..];
    let mean_utilisation = if post.is_empty() { 0.0 } else { post.iter().sum::<f64>() / post.len() as f64 };

    Ok(SimMetrics {
        scheduler: config.scheduler,
        mean_queue,
        p999_delay_slots,
        max_queue,
        utilisation,
        delay_ccdf,
        little_delay_slots,
        sync_r,
        warnings,
        backlog_trace,
        queue_trend_slope: slopes.iter().map(SlopeAccumulator::slope).fold(f64::NEG_INFINITY, f64::max),
        mean_utilisation,
        spike_rate: spike_counts.iter().map(|&c| c as f64 / config.n_slots as f64).collect(),
        mean_share: share_sum.iter().map(|s| s / measured).collect(),
        departed_batches: delays.len() as u64,
        v_ref: kparams.v_ref,
        uniform_split_slots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::TopologyName;

    #[test]
    fn lindley_examples() {
        assert_eq!(queue_step(&[5.0], &[2.0], &[3.0]), vec![4.0]);
        assert_eq!(queue_step(&[1.0], &[0.0], &[3.0]), vec![0.0]);
        assert_eq!(queue_step(&[0.0], &[0.0], &[0.0]), vec![0.0]);
    }

    #[test]
    fn fifo_queue_matches_lindley_and_tags_delays() {
        let mut q = FifoQueue::default();
        let mut lindley = 0.0;
        let mut delays = Vec::new();
        let script = [(3.0, 1.0), (2.0, 1.0), (0.0, 4.0), (5.0, 0.0), (1.0, 10.0)];
        for (slot, &(a, s)) in script.iter().enumerate() {
            q.arrive(slot as u64, a);
            q.serve(slot as u64, s, |d| delays.push(d));
            lindley = queue_step(&[lindley], &[a], &[s])[0];
            assert!((q.backlog - lindley).abs() < 1e-12);
        }
        assert_eq!(delays, vec![2, 1, 1, 0]);
    }

    #[test]
    fn pf_and_bp_weights() {
        let w = baseline_weights(
            SchedulerKind::Pf,
            &BaselineInputs { mu: &[2.0, 2.0], rbar: &[0.5, 0.5], delayed_queue: &[0.0, 0.0], eps: 1e-9 },
        );
        assert_eq!(w[0], w[1]);
        let w = baseline_weights(
            SchedulerKind::Bp,
            &BaselineInputs { mu: &[2.0, 3.0], rbar: &[0.0, 0.0], delayed_queue: &[0.0, 4.0], eps: 1e-9 },
        );
        assert_eq!(w, vec![0.0, 12.0]);
    }

    #[test]
    fn bp_observer_lags_by_exactly_delta() {
        let mut obs = QueueObserver::new(1, 5);
        let mut seen = Vec::new();
        for t in 0..12 {
            let q = if t == 3 { 7.0 } else { 0.0 };
            obs.push(&[q]);
            seen.push(obs.delayed()[0]);
        }
        let hit = seen.iter().position(|&x| x == 7.0);
        assert_eq!(hit, Some(8));
        assert_eq!(seen.iter().filter(|&&x| x == 7.0).count(), 1);
    }

    #[test]
    fn zero_load_keeps_queues_empty() {
        let graph = InterferenceGraph::build_named(TopologyName::Pair2, 0.6).unwrap();
        for kind in SchedulerKind::ALL {
            let cfg = SimConfig::new(graph.clone(), vec![0.0, 0.0], kind, 3000, 1);
            let m = run(&cfg).unwrap();
            assert_eq!(m.max_queue, 0.0);
            assert!(m.mean_queue.iter().all(|&q| q == 0.0));
        }
    }

    #[test]
    fn validation_catches_shape_errors() {
        let graph = InterferenceGraph::build_named(TopologyName::Pair2, 0.6).unwrap();
        let cfg = SimConfig::new(graph.clone(), vec![1.0], SchedulerKind::Pf, 3000, 1);
        assert!(matches!(run(&cfg), Err(SimError::InvalidConfig { name: "lambda", .. })));
        let mut cfg = SimConfig::new(graph, vec![1.0, 1.0], SchedulerKind::Pf, 3000, 1);
        cfg.sync.window = 8;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn identical_seed_is_bit_identical() {
        let graph = InterferenceGraph::build_named(TopologyName::Line4, 0.6).unwrap();
        let cfg = SimConfig::new(graph, vec![8.0; 4], SchedulerKind::Nos, 4000, 9);
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a, b);
    }
}
