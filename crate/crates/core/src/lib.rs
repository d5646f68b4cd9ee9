//! Distributed adaptive formation control of heterogeneous Brunovsky-form
//! agents under time-triggered topology switching.

pub mod analysis;
pub mod config;
pub mod controller;
pub mod dynamics;
pub mod error;
pub mod expr;
pub mod graph;
pub mod linalg;
pub mod nn;
pub mod report;
pub mod safety;
pub mod scenario;
pub mod sim;
pub mod trace_io;

pub use analysis::{DwellTimeReport, HurwitzDesign, KMatrixReport, VBreakdown};
pub use controller::{ControlParams, FormationSpec, ObstacleSet};
pub use dynamics::{AgentState, DisturbanceModel, DynamicsModel};
pub use error::{Error, Result};
pub use graph::{GraphLyapunov, SwitchingSchedule, Topology};
pub use nn::{BasisSet, BasisSpec, NNBank, TuningGain};
pub use safety::{Barrier, BarrierKind, GainRuleInputs, SafetyReport};
pub use sim::{SimConfig, SimTrace, TraceSample};
