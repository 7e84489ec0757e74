//! Construction-site simulator and task orchestrator.

pub mod blackboard;
pub mod bt;
pub mod comms;
pub mod manip;
pub mod nav;
pub mod orchestrator;
pub mod scalar;
pub mod sim;
pub mod store;

/// Concrete scalar used by the simulator and orchestrator.
pub type Real = f64;
