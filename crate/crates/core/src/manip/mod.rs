//! Excavator arm kinematics and joint trajectories.

pub mod kinematics;
pub mod script;
pub mod servers;
pub mod trajectory;

pub use kinematics::{forward_kinematics, inverse_kinematics, ArmGeometry, IkError, Joints, TipPose};
pub use trajectory::{plan_trajectory, trajectory_to_commands, JointTrajectory, OutOfRange};
