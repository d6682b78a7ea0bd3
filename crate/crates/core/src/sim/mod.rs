//! Kinematic robot simulation: scene, collision and execution.

mod collision;
mod engine;
mod runner;
mod scene;

pub use collision::{check_collision, segment_aabb_entry};
pub use engine::{
    PhysicsAction, PhysicsState, ProgramStatus, SimError, SimEvent, SimState, Simulator,
    TimedEvent, COLLISION_SUBSTEP_S, HOME_JOINTS, PICK_TOLERANCE_MM, WAYPOINT_RATE_HZ,
};
pub use runner::{run_program, ExecutionReport, RunOptions, RunStatus, REPORT_VERSION};
pub use scene::{
    load_scene, robot_to_world, world_to_robot, RobotBase, Scene, SceneError, SceneObject,
};
