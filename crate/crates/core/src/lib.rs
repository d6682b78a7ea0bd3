//! Core of a vendor-independent robot programming environment for a small
//! suction-cup arm.
//!
//! - [`kinematics`]: FK/IK, reachability, joint-space trajectories.
//! - [`dsl`]: the block program model, its text grammar and edit operations.
//! - [`vendor`]: translation to and from vendor robot code.
//! - [`sim`]: kinematic simulation with collisions and pick-and-place.

pub mod dsl;
pub mod kinematics;
pub mod sim;
pub mod vendor;

pub use dsl::{Command, Diagnostic, Edit, Program, Severity};
pub use kinematics::{ArmProfile, JointState, Pose, Trajectory};
