//! Constrained black-box design-space exploration for parameterized
//! accelerators: search space, analytical cost model, objectives, search
//! strategies and the study runner.

pub mod analysis;
pub mod costmodel;
pub mod error;
pub mod exhaustive;
pub mod objective;
pub mod optimizers;
pub mod runner;
pub mod space;
pub mod transfer;
pub mod workload;

pub use costmodel::{evaluate, Calibration, Evaluation};
pub use error::{DseError, Result};
pub use exhaustive::{run_exhaustive, PruneFilter};
pub use objective::{ClockMode, Objective, ObjectiveKind, StudySpec};
pub use optimizers::{Optimizer, OptimizerKind, OptimizerSpec, TrialRecord};
pub use runner::{resume_study, run_study, Problem, RunOptions, StudyResult, WarmStart};
pub use space::{AcceleratorConfig, HardwareParam, SearchSpace};
pub use workload::{Baseline, LayerDescriptor, Workload, WorkloadSuite};
