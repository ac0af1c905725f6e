//! Deterministic simulated grid: in-memory nodes, a virtual cost model and
//! the scaling experiment.

mod bench;
mod fleet;
mod node;

pub use bench::{
    linear_fit, measure_scaling, scaling_csv, BenchError, ConfigTemplate, OpenCcmTemplate,
    ScalingPoint, TextTemplate,
};
pub use fleet::{Fleet, FleetSnapshot, SimClockConfig, SimTransport};
pub use node::{Isolated, NodeState, SimNode, StepResult, World};
