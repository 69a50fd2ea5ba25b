//! Multi-agent navigation by ideal fluid flow.
//!
//! Cooperative agents slide along streamlines of a complex potential in
//! which failed or non-cooperative agents are enclosed by cylinders. Three
//! regimes are supported: stationary failures ([`clusters::sncf_run`]),
//! non-cooperative agents on predefined paths ([`guidance::tvnc_run`]) and
//! several cooperative clusters that exclude each other only when a
//! look-ahead box predicts a conflict ([`guidance::tvc_run`]).

pub mod clusters;
pub mod flow_field;
pub mod guidance;
pub mod io;
pub mod kinematics;
pub mod scenarios;
pub mod sim;

pub use clusters::{AgentId, AgentState, ClusterId, FailureEvent, Partition, Role};
pub use flow_field::{FlowError, FlowField, PotentialStreamPair, Singularity};
pub use guidance::{ClusterSpec, VirtualBox};
pub use kinematics::{StepParams, TangentVector};
pub use num_complex::Complex64;
pub use sim::{
    audit, run, EventFlags, Regime, RunError, SafetyReport, ScenarioSpec, TrajectoryLog,
};
