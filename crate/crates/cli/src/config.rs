use std::path::Path;

use anyhow::{Context, Result};
use nos_core::allocation::AllocParams;
use nos_core::kernel::KernelParams;
use nos_core::sim::{MuModel, SimConfig, SyncSettings};
use nos_core::study::StudyConfig;
use nos_core::{InterferenceGraph, SchedulerKind, TopologyName};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Raised for anything the user must fix in the configuration (exit 2).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid configuration: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub n_slots: u64,
    /// Omitted: 10% of the run, at least 1000 slots.
    pub warmup_slots: Option<u64>,
    pub topology: TopologyName,
    pub w: f64,
    /// Per-bearer arrival rates in bytes/slot, repeated cyclically over the
    /// bearers of the topology.
    pub lambda: Vec<f64>,
    pub mean_batch: f64,
    pub mu: MuModel,
    pub schedulers: Vec<SchedulerKind>,
    /// Signalling delays in slots; BP observes queues with the same lag.
    pub delays: Vec<usize>,
    pub seeds: Vec<u64>,
    pub tau_ctrl: f64,
    /// When set, NOS gain is chosen so the run's margin equals this value;
    /// otherwise `kernel.g` is used as given.
    pub target_margin: Option<f64>,
    pub estimate_v_ref: bool,
    pub sync: SyncSettings,
    /// Largest delay (slots) on the reported CCDF grid.
    pub ccdf_tau_max: u32,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            n_slots: 20_000,
            warmup_slots: None,
            topology: TopologyName::Ring8,
            w: 0.6,
            lambda: vec![24.5, 1.0],
            mean_batch: 4.0,
            mu: MuModel::default(),
            schedulers: SchedulerKind::ALL.to_vec(),
            delays: vec![5],
            seeds: vec![1],
            tau_ctrl: 10.0,
            target_margin: None,
            estimate_v_ref: true,
            sync: SyncSettings::default(),
            ccdf_tau_max: 100,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub study: StudyConfig,
    pub kernel: KernelParams,
    pub alloc: AllocParams,
    pub sim: SimSection,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| ConfigError(e.to_string()).into())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration always serialises")
    }

    /// SHA-256 over the canonical serialisation of the effective config.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate_sim(&self) -> Result<(), ConfigError> {
        let s = &self.sim;
        let fail = |m: &str| Err(ConfigError(format!("sim.{m}")));
        if s.lambda.is_empty() {
            return fail("lambda: at least one rate is required");
        }
        if s.schedulers.is_empty() || s.delays.is_empty() || s.seeds.is_empty() {
            return fail("schedulers, delays and seeds must all be non-empty");
        }
        if s.n_slots == 0 {
            return fail("n_slots: must be positive");
        }
        if let Some(m) = s.target_margin {
            if !m.is_finite() {
                return fail("target_margin: must be finite");
            }
        }
        Ok(())
    }

    /// One simulator configuration per (scheduler, delay, seed).
    pub fn sim_runs(&self) -> Result<Vec<SimRun>> {
        self.validate_sim()?;
        let s = &self.sim;
        let graph = InterferenceGraph::build_named(s.topology, s.w).map_err(|e| ConfigError(format!("sim.w: {e}")))?;
        let n = graph.n();
        let lambda: Vec<f64> = s.lambda.iter().copied().cycle().take(n).collect();
        let mut runs = Vec::new();
        for &scheduler in &s.schedulers {
            for &delay in &s.delays {
                for &seed in &s.seeds {
                    let mut cfg = SimConfig::new(graph.clone(), lambda.clone(), scheduler, s.n_slots, seed);
                    if let Some(w) = s.warmup_slots {
                        cfg.warmup_slots = w;
                    }
                    cfg.mean_batch = s.mean_batch;
                    cfg.mu = s.mu;
                    cfg.kernel = KernelParams { delta_slots: delay, ..self.kernel.clone() };
                    cfg.alloc = self.alloc.clone();
                    cfg.bp_delay_slots = delay;
                    cfg.tau_ctrl = s.tau_ctrl;
                    cfg.sync = s.sync.clone();
                    cfg.estimate_v_ref = s.estimate_v_ref;
                    cfg.tau_grid = (0..=s.ccdf_tau_max).map(f64::from).collect();
                    if let (Some(m), SchedulerKind::Nos) = (s.target_margin, scheduler) {
                        let g = cfg.gain_for_margin(m)?;
                        if g < 0.0 {
                            return Err(ConfigError(format!(
                                "sim.target_margin: {m} exceeds the delay threshold at {delay} slots"
                            ))
                            .into());
                        }
                        cfg.kernel.g = g;
                    }
                    runs.push(SimRun { delay, config: cfg });
                }
            }
        }
        Ok(runs)
    }
}

pub struct SimRun {
    pub delay: usize,
    pub config: SimConfig,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = Config::default();
        assert_eq!(Config::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::parse("[study]\nnot_a_key = 1\n").is_err());
        assert!(Config::parse("[study]\ntopologies = [\"ring9\"]\n").is_err());
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let cfg = Config::parse("[study]\nmode = \"effective\"\n[sim]\nseeds = [1, 2]\n").unwrap();
        assert_eq!(cfg.study.a, 1.0);
        assert_eq!(cfg.sim.seeds, vec![1, 2]);
        assert_eq!(cfg.sim_runs().unwrap().len(), 6);
    }

    #[test]
    fn hash_tracks_content() {
        let a = Config::default();
        let mut b = Config::default();
        assert_eq!(a.hash(), b.hash());
        b.sim.seeds = vec![9];
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn lambda_cycles_over_bearers() {
        let runs = Config::default().sim_runs().unwrap();
        assert_eq!(runs[0].config.lambda, vec![24.5, 1.0, 24.5, 1.0, 24.5, 1.0, 24.5, 1.0]);
    }
}
