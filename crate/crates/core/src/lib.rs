//! Delay-aware spiking scheduler lab: interference graphs, stability margins,
//! the spiking kernel, clique-feasible PRB allocation, a slot-level
//! simulator and the deterministic margin-proxy study.

pub mod allocation;
pub mod kernel;
pub mod sim;
pub mod stability;
pub mod study;
pub mod sync;
pub mod topology;

pub use allocation::{AllocError, AllocParams, SchedulerKind};
pub use kernel::{KernelError, KernelParams, KernelState};
pub use sim::{SimConfig, SimError, SimMetrics};
pub use stability::{EnvelopeParams, LocalLinearisation, MarginReport, StabilityError};
pub use study::{Normalisation, StudyConfig, StudyError, StudyOutput, StudyPoint};
pub use sync::SyncMode;
pub use topology::{InterferenceGraph, SurrogateKind, TopologyError, TopologyName};
