//! Headless fixed-step execution producing a JSON report.

use serde::{Deserialize, Serialize};

use crate::dsl::{validate_program, Diagnostic, Program};
use crate::kinematics::ArmProfile;

use super::engine::{
    PhysicsAction, ProgramStatus, SimError, SimEvent, SimState, Simulator, TimedEvent,
};
use super::scene::{Scene, SceneObject};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Step size in seconds.
    pub dt: f64,
    pub speed_factor: f64,
    /// Upper bound on simulated seconds before giving up.
    pub max_clock: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            dt: 0.01,
            speed_factor: 1.0,
            max_clock: 3600.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Success,
    Collision,
    Unreachable,
    ValidationFailed,
    Timeout,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Success => 0,
            RunStatus::Collision => 3,
            RunStatus::ValidationFailed => 4,
            RunStatus::Unreachable | RunStatus::Timeout => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub report_version: u32,
    pub program: String,
    pub dt: f64,
    pub speed_factor: f64,
    pub status: RunStatus,
    pub diagnostics: Vec<Diagnostic>,
    pub events: Vec<TimedEvent>,
    pub final_state: SimState,
    pub objects: Vec<SceneObject>,
}

impl ExecutionReport {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Clock of the `ProgramFinished` event, if the run got that far.
    pub fn completion_clock(&self) -> Option<f64> {
        self.events
            .iter()
            .find(|e| matches!(e.event, SimEvent::ProgramFinished { .. }))
            .map(|e| e.clock)
    }
}

/// Validates, submits and steps `program` at a fixed `dt` until the simulator
/// is idle again.
pub fn run_program(
    profile: &ArmProfile,
    scene: &Scene,
    program: &Program,
    options: RunOptions,
) -> Result<ExecutionReport, SimError> {
    let mut sim = Simulator::new(profile.clone(), scene.clone());
    sim.set_physics(PhysicsAction::SetSpeed {
        factor: options.speed_factor,
    })?;
    if !(options.dt.is_finite() && options.dt > 0.0) {
        return Err(SimError::InvalidFactor(options.dt));
    }
    let diagnostics = validate_program(program, profile);
    let report = |sim: &Simulator, status, diagnostics, events| ExecutionReport {
        report_version: REPORT_VERSION,
        program: program.name().to_string(),
        dt: options.dt,
        speed_factor: options.speed_factor,
        status,
        diagnostics,
        events,
        final_state: sim.state().clone(),
        objects: sim.detect_objects(),
    };

    let mut events = match sim.submit(program) {
        Ok(ev) => ev,
        Err(SimError::ValidationFailed(d)) => {
            return Ok(report(&sim, RunStatus::ValidationFailed, d, Vec::new()));
        }
        Err(e) => return Err(e),
    };
    while !sim.state().idle && sim.state().clock <= options.max_clock {
        events.extend(sim.step(options.dt));
    }
    let status = match events.iter().rev().find_map(|e| match e.event {
        SimEvent::ProgramFinished { status } => Some(status),
        _ => None,
    }) {
        Some(ProgramStatus::Success) => RunStatus::Success,
        Some(ProgramStatus::Collision) => RunStatus::Collision,
        Some(ProgramStatus::Unreachable) => RunStatus::Unreachable,
        None => RunStatus::Timeout,
    };
    Ok(report(&sim, status, diagnostics, events))
}
