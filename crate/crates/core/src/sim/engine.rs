//! Discrete-time kinematic execution of programs.
//!
//! Time model: `step(dt)` advances the simulation clock by `dt`; an active
//! motion progresses by `dt * speed_factor` seconds of its (unscaled)
//! duration. Command boundaries and collisions are resolved at their exact
//! clock instant inside a step, never at step edges, so the outcome does not
//! depend on how a run is partitioned into steps.
//!
//! Collisions are found when a move is planned: the tip path is sampled on a
//! fixed grid of at most [`COLLISION_SUBSTEP_S`] of motion time and each chord
//! is tested against every box. Objects do not move during a move, except the
//! held one, which is exempt.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{has_errors, validate_program, Command, Diagnostic, Program};
use crate::kinematics::{
    forward_kinematics, inverse_kinematics, move_duration, plan_trajectory, ArmProfile, JointState,
    KinematicsError, Pose, Trajectory, ANGLE_TOLERANCE_DEG,
};

use super::collision::segment_aabb_entry;
use super::scene::{robot_to_world, Scene, SceneObject};

/// Pick range around an object's top-face center (mm).
pub const PICK_TOLERANCE_MM: f64 = 10.0;
/// Collision sampling interval in motion time (s).
pub const COLLISION_SUBSTEP_S: f64 = 0.005;
/// Waypoints per second of planned motion.
pub const WAYPOINT_RATE_HZ: f64 = 50.0;
/// Joint configuration of a fresh simulator.
pub const HOME_JOINTS: JointState = JointState::new(0.0, 45.0, 45.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("simulator is busy executing a program")]
    NotIdle,
    #[error("program failed validation ({} diagnostics)", .0.len())]
    ValidationFailed(Vec<Diagnostic>),
    #[error("invalid speed factor {0}")]
    InvalidFactor(f64),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicsState {
    pub paused: bool,
    pub speed_factor: f64,
}

impl Default for PhysicsState {
    fn default() -> Self {
        PhysicsState {
            paused: false,
            speed_factor: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum PhysicsAction {
    Pause,
    Resume,
    SetSpeed {
        factor: f64,
    },
    /// Doubles the speed factor.
    SpeedUp,
    /// Halves the speed factor.
    SlowDown,
}

/// Snapshot of the observable simulator state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub joints: JointState,
    pub suction: bool,
    pub held_object: Option<String>,
    pub physics: PhysicsState,
    /// Simulated seconds.
    pub clock: f64,
    pub idle: bool,
    pub current_command: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProgramStatus {
    Success,
    Collision,
    Unreachable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SimEvent {
    JointStateChanged {
        joints: JointState,
    },
    CommandStarted {
        index: usize,
    },
    CommandFinished {
        index: usize,
    },
    /// `tip_pose` is the world-frame contact point.
    Collision {
        object_id: String,
        command_index: usize,
        tip_pose: Pose,
    },
    SuctionChanged {
        enabled: bool,
    },
    ObjectPicked {
        id: String,
    },
    ObjectReleased {
        id: String,
        rest_pose: Pose,
    },
    ProgramFinished {
        status: ProgramStatus,
    },
    TrajectoryPlanned {
        command_index: usize,
        duration: f64,
        waypoints: Vec<JointState>,
    },
}

/// An event stamped with the simulation clock at which it happened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub clock: f64,
    #[serde(flatten)]
    pub event: SimEvent,
}

#[derive(Debug, Clone)]
struct Contact {
    progress: f64,
    object_id: String,
    point: Pose,
}

#[derive(Debug, Clone)]
struct Motion {
    trajectory: Trajectory,
    // Progress is measured in unscaled motion seconds.
    progress_at_anchor: f64,
    anchor_clock: f64,
    contact: Option<Contact>,
}

impl Motion {
    fn from(&self) -> &JointState {
        self.trajectory.start()
    }

    fn to(&self) -> &JointState {
        self.trajectory.goal()
    }

    fn duration(&self) -> f64 {
        self.trajectory.duration
    }

    fn clock_at(&self, progress: f64, factor: f64) -> f64 {
        self.anchor_clock + (progress - self.progress_at_anchor) / factor
    }

    fn progress_at(&self, clock: f64, factor: f64) -> f64 {
        (self.progress_at_anchor + (clock - self.anchor_clock) * factor).clamp(0.0, self.duration())
    }

    fn joints_at(&self, progress: f64) -> JointState {
        if self.duration() <= 0.0 {
            return *self.to();
        }
        self.from().lerp(self.to(), progress / self.duration())
    }
}

#[derive(Debug, Clone)]
struct Run {
    program: Program,
    index: usize,
    motion: Option<Motion>,
}

/// Single-owner simulator. All mutation goes through `&mut self`; snapshots
/// returned by [`Simulator::state`] and [`Simulator::detect_objects`] are
/// plain values.
#[derive(Debug, Clone)]
pub struct Simulator {
    profile: ArmProfile,
    scene: Scene,
    state: SimState,
    run: Option<Run>,
    hold_offset: Option<Pose>,
    last_trajectory: Option<(usize, Trajectory)>,
}

impl Simulator {
    /// Starts at [`HOME_JOINTS`], clamped into the profile's limits.
    pub fn new(profile: ArmProfile, scene: Scene) -> Self {
        let mut home = HOME_JOINTS.as_array();
        for (a, [lo, hi]) in home.iter_mut().zip(profile.joint_limits) {
            *a = a.clamp(lo, hi);
        }
        Simulator {
            profile,
            scene,
            state: SimState {
                joints: JointState::from_array(home),
                suction: false,
                held_object: None,
                physics: PhysicsState::default(),
                clock: 0.0,
                idle: true,
                current_command: None,
            },
            run: None,
            hold_offset: None,
            last_trajectory: None,
        }
    }

    pub fn with_joints(mut self, joints: JointState) -> Result<Self, SimError> {
        if !joints.is_finite() || !self.profile.within_limits(&joints) {
            return Err(KinematicsError::Unreachable {
                reason: crate::kinematics::UnreachableReason::JointLimit,
            }
            .into());
        }
        self.state.joints = joints;
        Ok(self)
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn profile(&self) -> &ArmProfile {
        &self.profile
    }

    /// Most recently planned trajectory and the command index it belongs to.
    pub fn last_trajectory(&self) -> Option<(usize, &Trajectory)> {
        self.last_trajectory.as_ref().map(|(i, t)| (*i, t))
    }

    /// Tip position in the robot base frame.
    pub fn tip_robot(&self) -> Pose {
        forward_kinematics(&self.profile, &self.state.joints)
    }

    pub fn tip_world(&self) -> Pose {
        self.tip_world_at(&self.state.joints)
    }

    fn tip_world_at(&self, joints: &JointState) -> Pose {
        robot_to_world(&self.scene, &forward_kinematics(&self.profile, joints))
    }

    pub fn detect_objects(&self) -> Vec<SceneObject> {
        self.scene.objects.clone()
    }

    fn stamp(&self, event: SimEvent) -> TimedEvent {
        TimedEvent {
            clock: self.state.clock,
            event,
        }
    }

    /// Starts executing `program` from command 0. An empty program finishes
    /// immediately and leaves the simulator idle.
    pub fn submit(&mut self, program: &Program) -> Result<Vec<TimedEvent>, SimError> {
        if !self.state.idle {
            return Err(SimError::NotIdle);
        }
        let diagnostics = validate_program(program, &self.profile);
        if has_errors(&diagnostics) {
            return Err(SimError::ValidationFailed(diagnostics));
        }
        let mut events = Vec::new();
        if program.is_empty() {
            events.push(self.stamp(SimEvent::ProgramFinished {
                status: ProgramStatus::Success,
            }));
            return Ok(events);
        }
        self.state.idle = false;
        self.run = Some(Run {
            program: program.clone(),
            index: 0,
            motion: None,
        });
        self.start_command(0, &mut events);
        Ok(events)
    }

    /// Moves the tip to a robot-frame target as a one-command program.
    pub fn move_to(&mut self, target: &Pose) -> Result<Vec<TimedEvent>, SimError> {
        if !self.state.idle {
            return Err(SimError::NotIdle);
        }
        inverse_kinematics(&self.profile, target)?;
        let program = Program::new(
            "move_to",
            vec![Command::move_to(target.x, target.y, target.z)],
        )
        .map_err(|_| KinematicsError::NonFinite)?;
        self.submit(&program)
    }

    pub fn set_physics(&mut self, action: PhysicsAction) -> Result<PhysicsState, SimError> {
        let current = self.state.physics.speed_factor;
        let new_factor = match action {
            PhysicsAction::Pause => {
                self.state.physics.paused = true;
                None
            }
            PhysicsAction::Resume => {
                self.state.physics.paused = false;
                None
            }
            PhysicsAction::SetSpeed { factor } => Some(factor),
            PhysicsAction::SpeedUp => Some(current * 2.0),
            PhysicsAction::SlowDown => Some(current / 2.0),
        };
        if let Some(factor) = new_factor {
            if !factor.is_finite() || factor <= 0.0 {
                return Err(SimError::InvalidFactor(factor));
            }
            // Re-anchor so progress so far is kept at the old rate.
            let clock = self.state.clock;
            if let Some(m) = self.run.as_mut().and_then(|r| r.motion.as_mut()) {
                m.progress_at_anchor = m.progress_at(clock, current);
                m.anchor_clock = clock;
            }
            self.state.physics.speed_factor = factor;
        }
        Ok(self.state.physics)
    }

    /// Switches the suction cup. Enabling picks the nearest unattached object
    /// whose top-face center is within [`PICK_TOLERANCE_MM`] of the tip;
    /// disabling drops the held object straight down onto the floor.
    pub fn set_suction(&mut self, enabled: bool) -> Vec<TimedEvent> {
        let mut events = Vec::new();
        self.apply_suction(enabled, &mut events);
        events
    }

    fn apply_suction(&mut self, enabled: bool, events: &mut Vec<TimedEvent>) {
        if self.state.suction == enabled {
            return;
        }
        self.state.suction = enabled;
        events.push(self.stamp(SimEvent::SuctionChanged { enabled }));
        let tip = self.tip_world();
        if enabled {
            let picked = self
                .scene
                .objects
                .iter()
                .filter(|o| !o.attached)
                .map(|o| (o.top_center().distance(&tip), o))
                .filter(|(d, _)| *d <= PICK_TOLERANCE_MM)
                .min_by(|(da, a), (db, b)| da.total_cmp(db).then_with(|| a.id.cmp(&b.id)))
                .map(|(_, o)| o.id.clone());
            if let Some(id) = picked {
                let obj = self.scene.object_mut(&id).expect("picked object exists");
                obj.attached = true;
                self.hold_offset = Some(obj.center_pose() - tip);
                self.state.held_object = Some(id.clone());
                events.push(self.stamp(SimEvent::ObjectPicked { id }));
            }
        } else if let Some(id) = self.state.held_object.take() {
            self.hold_offset = None;
            let obj = self.scene.object_mut(&id).expect("held object exists");
            obj.attached = false;
            obj.center[2] = obj.size[2] / 2.0;
            let rest_pose = obj.center_pose();
            events.push(self.stamp(SimEvent::ObjectReleased { id, rest_pose }));
        }
    }

    fn set_joints(&mut self, joints: JointState) {
        self.state.joints = joints;
        if let (Some(id), Some(offset)) = (self.state.held_object.clone(), self.hold_offset) {
            let center = self.tip_world() + offset;
            if let Some(obj) = self.scene.object_mut(&id) {
                obj.center = center.as_array();
            }
        }
    }

    fn start_command(&mut self, index: usize, events: &mut Vec<TimedEvent>) {
        self.state.current_command = Some(index);
        events.push(self.stamp(SimEvent::CommandStarted { index }));
        let run = self.run.as_ref().expect("active run");
        let Command::Move { x, y, z } = run.program.commands()[index] else {
            return;
        };
        let next_picks = matches!(
            run.program.commands().get(index + 1),
            Some(Command::Suction { enabled: true })
        ) && self.state.held_object.is_none();

        let target = Pose::new(x, y, z);
        let goal = match inverse_kinematics(&self.profile, &target) {
            // Already there, up to IK round-off.
            Ok(q) if q.max_delta(&self.state.joints) <= ANGLE_TOLERANCE_DEG => self.state.joints,
            Ok(q) => q,
            Err(_) => {
                self.finish_run(ProgramStatus::Unreachable, events);
                return;
            }
        };
        let from = self.state.joints;
        let duration = move_duration(&self.profile, &from, &goal);
        let n = ((duration * WAYPOINT_RATE_HZ).ceil() as usize).max(2);
        let trajectory =
            plan_trajectory(&self.profile, &from, &goal, n).expect("n >= 2, finite joints");

        let mut exempt: Vec<String> = self.state.held_object.iter().cloned().collect();
        if next_picks {
            let tip_goal = self.tip_world_at(&goal);
            exempt.extend(
                self.scene
                    .objects
                    .iter()
                    .filter(|o| o.top_center().distance(&tip_goal) <= PICK_TOLERANCE_MM)
                    .map(|o| o.id.clone()),
            );
        }
        let contact = self.first_contact(&from, &goal, duration, &exempt);

        events.push(self.stamp(SimEvent::TrajectoryPlanned {
            command_index: index,
            duration,
            waypoints: trajectory.waypoints.clone(),
        }));
        self.last_trajectory = Some((index, trajectory.clone()));
        let clock = self.state.clock;
        if let Some(run) = self.run.as_mut() {
            run.motion = Some(Motion {
                trajectory,
                progress_at_anchor: 0.0,
                anchor_clock: clock,
                contact,
            });
        }
    }

    fn first_contact(
        &self,
        from: &JointState,
        to: &JointState,
        duration: f64,
        exempt: &[String],
    ) -> Option<Contact> {
        if duration <= 0.0 {
            return None;
        }
        let segments = ((duration / COLLISION_SUBSTEP_S).ceil() as usize).max(1);
        let obstacles: Vec<&SceneObject> = self
            .scene
            .objects
            .iter()
            .filter(|o| !o.attached && !exempt.contains(&o.id))
            .collect();
        if obstacles.is_empty() {
            return None;
        }
        let tip = |k: usize| self.tip_world_at(&from.lerp(to, k as f64 / segments as f64));
        let mut start = tip(0);
        for k in 0..segments {
            let end = tip(k + 1);
            let hit = obstacles
                .iter()
                .filter_map(|o| {
                    segment_aabb_entry(&start, &end, &o.min_corner(), &o.max_corner())
                        .map(|t| (t, *o))
                })
                .min_by(|(ta, a), (tb, b)| ta.total_cmp(tb).then_with(|| a.id.cmp(&b.id)));
            if let Some((t, obj)) = hit {
                return Some(Contact {
                    progress: duration * (k as f64 + t) / segments as f64,
                    object_id: obj.id.clone(),
                    point: start + (end - start).scale(t),
                });
            }
            start = end;
        }
        None
    }

    fn finish_command(&mut self, events: &mut Vec<TimedEvent>) {
        let run = self.run.as_mut().expect("active run");
        let index = run.index;
        let len = run.program.len();
        run.motion = None;
        events.push(self.stamp(SimEvent::CommandFinished { index }));
        let next = index + 1;
        if next < len {
            if let Some(run) = self.run.as_mut() {
                run.index = next;
            }
            self.start_command(next, events);
        } else {
            self.finish_run(ProgramStatus::Success, events);
        }
    }

    fn finish_run(&mut self, status: ProgramStatus, events: &mut Vec<TimedEvent>) {
        self.run = None;
        self.state.idle = true;
        if status == ProgramStatus::Success {
            self.state.current_command = None;
        }
        events.push(self.stamp(SimEvent::ProgramFinished { status }));
    }

    /// Advances by `dt` seconds. Paused simulators (and invalid `dt`) are
    /// left untouched.
    pub fn step(&mut self, dt: f64) -> Vec<TimedEvent> {
        let mut events = Vec::new();
        if self.state.physics.paused || !dt.is_finite() || dt < 0.0 {
            return events;
        }
        let joints_before = self.state.joints;
        let target = self.state.clock + dt;
        let factor = self.state.physics.speed_factor;
        let mut collided = false;

        while let Some(run) = self.run.as_ref() {
            let index = run.index;
            let cmd = run.program.commands()[index];
            if let Command::Suction { enabled } = cmd {
                self.apply_suction(enabled, &mut events);
                self.finish_command(&mut events);
                continue;
            }
            let motion = run.motion.clone().expect("move command has a motion");
            if let Some(contact) = &motion.contact {
                let at = motion.clock_at(contact.progress, factor);
                if at <= target {
                    self.state.clock = at;
                    self.set_joints(motion.joints_at(contact.progress));
                    events.push(self.stamp(SimEvent::Collision {
                        object_id: contact.object_id.clone(),
                        command_index: index,
                        tip_pose: contact.point,
                    }));
                    self.finish_run(ProgramStatus::Collision, &mut events);
                    self.state.physics.paused = true;
                    collided = true;
                    break;
                }
            }
            let done_at = motion.clock_at(motion.duration(), factor);
            if done_at <= target {
                self.state.clock = done_at;
                self.set_joints(*motion.to());
                self.finish_command(&mut events);
                continue;
            }
            self.state.clock = target;
            self.set_joints(motion.joints_at(motion.progress_at(target, factor)));
            break;
        }
        if !collided {
            self.state.clock = target;
        }
        if self.state.joints != joints_before {
            let joints = self.state.joints;
            events.push(self.stamp(SimEvent::JointStateChanged { joints }));
        }
        events
    }
}
