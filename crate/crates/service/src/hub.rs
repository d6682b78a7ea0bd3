//! Protocol state machine: dispatches calls, tracks subscriptions and fans
//! simulator events out to topics.
//!
//! The hub is synchronous and owns all mutable state, so a transport only has
//! to feed it frames in arrival order and forward the returned deliveries.
//! Within one call the reply always comes first, followed by the events the
//! call caused.

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Map, Value};

use speared_core::dsl::{parse_program, DslError};
use speared_core::kinematics::{KinematicsError, Pose};
use speared_core::sim::{world_to_robot, PhysicsAction, SimError, SimEvent, Simulator, TimedEvent};
use speared_core::vendor::DialectRegistry;
use speared_core::Program;

use crate::channels::*;
use crate::envelope::{Envelope, ErrorCode, Kind};
use crate::store::CodeStore;

pub type ConnId = u64;

/// Upper bound on steps taken to settle one lockstep call.
pub const MAX_LOCKSTEP_STEPS: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stepping {
    /// The transport calls [`Hub::tick`] on a wall-clock timer.
    Realtime,
    /// After every call the simulator is stepped at `dt` until it is idle or
    /// paused. Makes sessions reproducible frame for frame.
    Lockstep { dt: f64 },
}

/// One outgoing envelope for one connection.
#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub conn: ConnId,
    pub envelope: Envelope,
    /// Topic the envelope was published on, for topic events.
    pub topic: Option<&'static str>,
}

#[derive(Debug)]
struct CallError {
    code: ErrorCode,
    message: String,
    extra: Value,
}

impl CallError {
    fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        CallError {
            code,
            message: message.into(),
            extra: Value::Null,
        }
    }

    fn with(mut self, extra: Value) -> Self {
        self.extra = extra;
        self
    }
}

impl From<SimError> for CallError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::NotIdle => CallError::new(ErrorCode::NotIdle, e.to_string()),
            SimError::ValidationFailed(ref d) => {
                let extra = json!({ "diagnostics": d });
                CallError::new(ErrorCode::ValidationFailed, e.to_string()).with(extra)
            }
            SimError::Kinematics(KinematicsError::Unreachable { reason }) => {
                CallError::new(ErrorCode::Unreachable, e.to_string())
                    .with(json!({ "reason": reason.to_string() }))
            }
            SimError::InvalidFactor(_) | SimError::Kinematics(_) => {
                CallError::new(ErrorCode::BadPayload, e.to_string())
            }
        }
    }
}

fn bad(message: impl std::fmt::Display) -> CallError {
    CallError::new(ErrorCode::BadPayload, message.to_string())
}

#[derive(Debug, Deserialize, Default, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum Frame {
    #[default]
    Robot,
    World,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MoveToPayload {
    x: f64,
    y: f64,
    z: f64,
    #[serde(default)]
    frame: Frame,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SuctionPayload {
    enabled: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExecutePayload {
    program: Option<Value>,
    dialect: Option<String>,
    #[serde(default)]
    use_stored: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StorePayload {
    program: Value,
    expected_revision: u64,
    client: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TranslatePayload {
    program: Value,
    dialect: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ParseVendorPayload {
    text: String,
    dialect: String,
    name: Option<String>,
}

fn decode<T: DeserializeOwned>(payload: &Map<String, Value>) -> Result<T, CallError> {
    serde_json::from_value(Value::Object(payload.clone())).map_err(bad)
}

pub struct Hub {
    sim: Simulator,
    store: CodeStore,
    dialects: DialectRegistry,
    stepping: Stepping,
    /// conn -> topic -> subscription id
    subscriptions: BTreeMap<ConnId, BTreeMap<&'static str, String>>,
    // Last published values of derived topics.
    idle: bool,
    suction: bool,
    held_object: Option<String>,
}

impl Hub {
    pub fn new(sim: Simulator, stepping: Stepping) -> Self {
        let state = sim.state().clone();
        Hub {
            sim,
            store: CodeStore::default(),
            dialects: DialectRegistry::default(),
            stepping,
            subscriptions: BTreeMap::new(),
            idle: state.idle,
            suction: state.suction,
            held_object: state.held_object,
        }
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    pub fn store(&self) -> &CodeStore {
        &self.store
    }

    pub fn stepping(&self) -> Stepping {
        self.stepping
    }

    /// Number of live subscriptions of `conn`.
    pub fn subscription_count(&self, conn: ConnId) -> usize {
        self.subscriptions.get(&conn).map_or(0, BTreeMap::len)
    }

    /// Drops all subscriptions of a closed connection. Stored code survives.
    pub fn disconnect(&mut self, conn: ConnId) {
        self.subscriptions.remove(&conn);
    }

    /// Removes one subscription, returning its id.
    pub fn unsubscribe(&mut self, conn: ConnId, topic: &str) -> Option<String> {
        let subs = self.subscriptions.get_mut(&conn)?;
        let key = *subs.keys().find(|k| **k == topic)?;
        subs.remove(key)
    }

    /// Parses and handles one text frame.
    pub fn handle_frame(&mut self, conn: ConnId, text: &str) -> Vec<Delivery> {
        match Envelope::from_frame(text) {
            Ok(env) => self.handle(conn, env),
            Err(e) => vec![Delivery {
                conn,
                envelope: Envelope::error(
                    e.id,
                    e.channel,
                    ErrorCode::BadPayload,
                    e.message,
                    Value::Null,
                ),
                topic: None,
            }],
        }
    }

    pub fn handle(&mut self, conn: ConnId, env: Envelope) -> Vec<Delivery> {
        let mut out = Vec::new();
        match env.kind {
            Kind::Subscribe => self.subscribe(conn, env, &mut out),
            Kind::Call => self.call(conn, env, &mut out),
            Kind::Reply | Kind::Event | Kind::Error => out.push(Delivery {
                conn,
                envelope: Envelope::error(
                    env.id,
                    env.channel,
                    ErrorCode::BadPayload,
                    "clients may only send call or subscribe envelopes",
                    Value::Null,
                ),
                topic: None,
            }),
        }
        out
    }

    /// Advances the simulator by `dt` seconds and publishes what happened.
    pub fn tick(&mut self, dt: f64) -> Vec<Delivery> {
        let mut out = Vec::new();
        let events = self.sim.step(dt);
        self.publish_events(events, &mut out);
        out
    }

    fn subscribe(&mut self, conn: ConnId, env: Envelope, out: &mut Vec<Delivery>) {
        let Some(topic) = TOPICS.iter().copied().find(|t| *t == env.channel) else {
            out.push(Delivery {
                conn,
                envelope: Envelope::error(
                    env.id,
                    env.channel.clone(),
                    ErrorCode::UnknownChannel,
                    format!("no topic named {:?}", env.channel),
                    Value::Null,
                ),
                topic: None,
            });
            return;
        };
        self.subscriptions
            .entry(conn)
            .or_default()
            .insert(topic, env.id.clone());
        out.push(Delivery {
            conn,
            envelope: Envelope::event(env.id, topic, self.snapshot(topic)),
            topic: Some(topic),
        });
    }

    fn call(&mut self, conn: ConnId, env: Envelope, out: &mut Vec<Delivery>) {
        let mut events = Vec::new();
        let mut publications = Vec::new();
        let result = self.dispatch(conn, &env, &mut events, &mut publications);
        let envelope = match result {
            Ok(payload) => Envelope::reply(env.id, env.channel, payload),
            Err(e) => Envelope::error(env.id, env.channel, e.code, e.message, e.extra),
        };
        out.push(Delivery {
            conn,
            envelope,
            topic: None,
        });
        self.publish_events(events, out);
        for (topic, payload) in publications {
            self.broadcast(topic, payload, out);
        }
        if let Stepping::Lockstep { dt } = self.stepping {
            self.settle(dt, out);
        }
    }

    fn settle(&mut self, dt: f64, out: &mut Vec<Delivery>) {
        let mut steps = 0;
        while !self.sim.state().idle
            && !self.sim.state().physics.paused
            && steps < MAX_LOCKSTEP_STEPS
        {
            let events = self.sim.step(dt);
            self.publish_events(events, out);
            steps += 1;
        }
    }

    fn dispatch(
        &mut self,
        conn: ConnId,
        env: &Envelope,
        events: &mut Vec<TimedEvent>,
        publications: &mut Vec<(&'static str, Value)>,
    ) -> Result<Value, CallError> {
        let payload = &env.payload;
        match env.channel.as_str() {
            MOVE_TO => {
                let p: MoveToPayload = decode(payload)?;
                let mut target = Pose::new(p.x, p.y, p.z);
                if p.frame == Frame::World {
                    target = world_to_robot(self.sim.scene(), &target);
                }
                let planned = self.sim.move_to(&target)?;
                let duration = planned
                    .iter()
                    .find_map(|e| match e.event {
                        SimEvent::TrajectoryPlanned { duration, .. } => Some(duration),
                        _ => None,
                    })
                    .unwrap_or(0.0);
                events.extend(planned);
                Ok(json!({ "duration": duration }))
            }
            SET_SUCTION => {
                let p: SuctionPayload = decode(payload)?;
                if !self.sim.state().idle {
                    return Err(SimError::NotIdle.into());
                }
                events.extend(self.sim.set_suction(p.enabled));
                let s = self.sim.state();
                Ok(json!({ "suction": s.suction, "held_object": s.held_object }))
            }
            EXECUTE => {
                let p: ExecutePayload = decode(payload)?;
                let program = match (p.use_stored, p.program) {
                    (true, None) if p.dialect.is_none() => self.store.load().program.clone(),
                    (false, Some(program)) => {
                        self.resolve_program(program, p.dialect.as_deref())?
                    }
                    _ => return Err(bad("expected either `program` or `use_stored: true`")),
                };
                events.extend(self.sim.submit(&program)?);
                Ok(json!({ "program": program.name(), "commands": program.len() }))
            }
            PHYSICS => {
                let action: PhysicsAction = decode(payload)?;
                let physics = self.sim.set_physics(action)?;
                Ok(json!(physics))
            }
            STATE_JOINTS => Ok(json!(self.sim.state().joints)),
            STATE_END_EFFECTOR => {
                let s = self.sim.state();
                let tip = self.sim.tip_robot();
                Ok(json!({
                    "suction": s.suction,
                    "held_object": s.held_object,
                    "x": tip.x,
                    "y": tip.y,
                    "z": tip.z,
                }))
            }
            STATE_IDLE => Ok(json!({ "idle": self.sim.state().idle })),
            DETECT_OBJECTS => {
                let objects = self.sim.detect_objects();
                publications.push((DETECTED_OBJECTS, self.snapshot(DETECTED_OBJECTS)));
                Ok(json!({ "objects": objects }))
            }
            CODE_STORE => {
                let p: StorePayload = decode(payload)?;
                let program = Program::from_json_value(p.program).map_err(bad)?;
                let client = p.client.unwrap_or_else(|| format!("conn-{conn}"));
                match self.store.store(program, p.expected_revision, &client) {
                    Ok(entry) => {
                        let revision = entry.revision;
                        publications.push((CODE, json!(entry)));
                        Ok(json!({ "revision": revision }))
                    }
                    Err(conflict) => {
                        let current = conflict.current;
                        Err(CallError::new(
                            ErrorCode::Conflict,
                            format!(
                                "expected revision {} but the store is at {}",
                                p.expected_revision, current.revision
                            ),
                        )
                        .with(json!({
                            "current_revision": current.revision,
                            "program": current.program,
                            "last_writer": current.last_writer,
                        })))
                    }
                }
            }
            CODE_LOAD => Ok(json!(self.store.load())),
            TRANSLATE => {
                let p: TranslatePayload = decode(payload)?;
                let program = self.resolve_program(p.program, None)?;
                let text = self.dialects.translate(&program, &p.dialect).map_err(bad)?;
                Ok(json!({ "text": text }))
            }
            PARSE_VENDOR => {
                let p: ParseVendorPayload = decode(payload)?;
                let mut program = self.dialects.parse(&p.text, &p.dialect).map_err(bad)?;
                if let Some(name) = p.name {
                    program = program.with_name(name).map_err(bad)?;
                }
                Ok(json!({ "program": program }))
            }
            other => Err(CallError::new(
                ErrorCode::UnknownChannel,
                format!("no service named {other:?}"),
            )),
        }
    }

    /// A program given as an interchange object, DSL text, or vendor text
    /// when `dialect` is set.
    fn resolve_program(&self, value: Value, dialect: Option<&str>) -> Result<Program, CallError> {
        match (value, dialect) {
            (Value::String(text), Some(dialect)) => {
                self.dialects.parse(&text, dialect).map_err(bad)
            }
            (Value::String(text), None) => parse_program(&text).map_err(bad),
            (value @ Value::Object(_), None) => Program::from_json_value(value).map_err(bad),
            (Value::Object(_), Some(_)) => Err(bad("`dialect` applies to vendor text only")),
            _ => Err(bad(DslError::Json(
                "program must be an object or text".into(),
            ))),
        }
    }

    /// Current value of a topic, stamped with the simulation clock.
    fn snapshot(&self, topic: &str) -> Value {
        let s = self.sim.state();
        let clock = s.clock;
        match topic {
            JOINT_STATES => joints_payload(clock, s),
            IDLE => json!({ "clock": clock, "idle": s.idle }),
            END_EFFECTOR => {
                json!({ "clock": clock, "suction": s.suction, "held_object": s.held_object })
            }
            DETECTED_OBJECTS => json!({ "clock": clock, "objects": self.sim.detect_objects() }),
            TRAJECTORY => match self.sim.last_trajectory() {
                Some((index, t)) => json!({
                    "clock": clock,
                    "command_index": index,
                    "duration": t.duration,
                    "waypoints": t.waypoints,
                }),
                None => {
                    json!({ "clock": clock, "command_index": null, "duration": 0.0, "waypoints": [] })
                }
            },
            EXECUTION => json!({
                "clock": clock,
                "type": "state",
                "idle": s.idle,
                "current_command": s.current_command,
                "paused": s.physics.paused,
                "speed_factor": s.physics.speed_factor,
            }),
            CODE => json!(self.store.load()),
            _ => Value::Null,
        }
    }

    fn publish_events(&mut self, events: Vec<TimedEvent>, out: &mut Vec<Delivery>) {
        for ev in events {
            let clock = ev.clock;
            match &ev.event {
                SimEvent::JointStateChanged { joints } => {
                    let payload = json!({
                        "clock": clock,
                        "theta1": joints.theta1,
                        "theta2": joints.theta2,
                        "theta3": joints.theta3,
                    });
                    self.broadcast(JOINT_STATES, payload, out);
                    continue;
                }
                SimEvent::TrajectoryPlanned {
                    command_index,
                    duration,
                    waypoints,
                } => {
                    let payload = json!({
                        "clock": clock,
                        "command_index": command_index,
                        "duration": duration,
                        "waypoints": waypoints,
                    });
                    self.broadcast(TRAJECTORY, payload, out);
                    continue;
                }
                _ => {}
            }
            self.broadcast(EXECUTION, json!(ev), out);
            match ev.event {
                SimEvent::CommandStarted { .. } if self.idle => self.set_idle(false, clock, out),
                SimEvent::ProgramFinished { .. } if !self.idle => self.set_idle(true, clock, out),
                SimEvent::SuctionChanged { enabled } => {
                    self.suction = enabled;
                    self.publish_end_effector(clock, out);
                }
                SimEvent::ObjectPicked { id } => {
                    self.held_object = Some(id);
                    self.publish_end_effector(clock, out);
                }
                SimEvent::ObjectReleased { .. } => {
                    self.held_object = None;
                    self.publish_end_effector(clock, out);
                }
                _ => {}
            }
        }
    }

    fn set_idle(&mut self, idle: bool, clock: f64, out: &mut Vec<Delivery>) {
        self.idle = idle;
        self.broadcast(IDLE, json!({ "clock": clock, "idle": idle }), out);
    }

    fn publish_end_effector(&mut self, clock: f64, out: &mut Vec<Delivery>) {
        let payload =
            json!({ "clock": clock, "suction": self.suction, "held_object": self.held_object });
        self.broadcast(END_EFFECTOR, payload, out);
    }

    fn broadcast(&self, topic: &'static str, payload: Value, out: &mut Vec<Delivery>) {
        for (conn, subs) in &self.subscriptions {
            if let Some(id) = subs.get(topic) {
                out.push(Delivery {
                    conn: *conn,
                    envelope: Envelope::event(id.clone(), topic, payload.clone()),
                    topic: Some(topic),
                });
            }
        }
    }
}

fn joints_payload(clock: f64, s: &speared_core::sim::SimState) -> Value {
    json!({
        "clock": clock,
        "theta1": s.joints.theta1,
        "theta2": s.joints.theta2,
        "theta3": s.joints.theta3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use speared_core::sim::{load_scene, Scene};
    use speared_core::ArmProfile;

    const CUBE: &str = r#"{"robot_base":{"translation":[0,0,-250],"yaw":0},
        "objects":[{"id":"cube","center":[200,0,12.5],"size":[25,25,25],"color":"yellow"}]}"#;

    fn hub(stepping: Stepping) -> Hub {
        let scene: Scene = load_scene(CUBE).unwrap();
        Hub::new(Simulator::new(ArmProfile::default(), scene), stepping)
    }

    fn call(hub: &mut Hub, conn: ConnId, id: &str, channel: &str, payload: Value) -> Vec<Delivery> {
        hub.handle(conn, Envelope::call(id, channel, payload))
    }

    fn first(out: &[Delivery]) -> &Envelope {
        &out[0].envelope
    }

    #[test]
    fn state_joints_reads_through() {
        let mut h = hub(Stepping::Realtime);
        let out = call(&mut h, 1, "a", STATE_JOINTS, json!({}));
        assert_eq!(out.len(), 1);
        assert_eq!(first(&out).kind, Kind::Reply);
        assert_eq!(first(&out).id, "a");
        assert_eq!(
            Value::Object(first(&out).payload.clone()),
            json!(h.simulator().state().joints)
        );
        let keys: Vec<_> = first(&out).payload.keys().cloned().collect();
        assert_eq!(keys, ["theta1", "theta2", "theta3"]);
    }

    #[test]
    fn pause_replies_with_physics_state() {
        let mut h = hub(Stepping::Realtime);
        let out = call(&mut h, 1, "p", PHYSICS, json!({"action": "pause"}));
        assert_eq!(first(&out).payload["paused"], json!(true));
        let out = call(
            &mut h,
            1,
            "s",
            PHYSICS,
            json!({"action": "set_speed", "factor": 0}),
        );
        assert_eq!(first(&out).error_code(), Some("bad_payload"));
    }

    #[test]
    fn far_move_is_unreachable() {
        let mut h = hub(Stepping::Realtime);
        let out = call(&mut h, 1, "m", MOVE_TO, json!({"x": 1000, "y": 0, "z": 0}));
        assert_eq!(first(&out).error_code(), Some("unreachable"));
        assert!(h.simulator().state().idle);
    }

    #[test]
    fn unknown_service_and_topic() {
        let mut h = hub(Stepping::Realtime);
        let out = call(&mut h, 1, "x", "service:teleport", json!({}));
        assert_eq!(first(&out).error_code(), Some("unknown_channel"));
        let out = call(&mut h, 1, "y", IDLE, json!({}));
        assert_eq!(first(&out).error_code(), Some("unknown_channel"));
        let out = h.handle(1, Envelope::subscribe("z", STATE_IDLE));
        assert_eq!(first(&out).error_code(), Some("unknown_channel"));
        assert_eq!(h.subscription_count(1), 0);
    }

    #[test]
    fn quiet_idle_subscription_gets_one_snapshot() {
        let mut h = hub(Stepping::Realtime);
        let out = h.handle(4, Envelope::subscribe("s1", IDLE));
        assert_eq!(out.len(), 1);
        assert_eq!(first(&out).kind, Kind::Event);
        assert_eq!(first(&out).id, "s1");
        assert_eq!(first(&out).payload["idle"], json!(true));
        for _ in 0..10 {
            assert!(h.tick(0.02).is_empty());
        }
    }

    #[test]
    fn client_sent_replies_are_rejected() {
        let mut h = hub(Stepping::Realtime);
        let out = h.handle_frame(
            1,
            r#"{"kind":"reply","id":"r","channel":"service:state.idle","payload":{}}"#,
        );
        assert_eq!(first(&out).error_code(), Some("bad_payload"));
        assert_eq!(first(&out).id, "r");
    }

    #[test]
    fn malformed_frames_become_errors() {
        let mut h = hub(Stepping::Realtime);
        for frame in [
            "{",
            "42",
            r#"{"kind":"call"}"#,
            r#"{"kind":"yell","id":"q","channel":"c","payload":{}}"#,
        ] {
            let out = h.handle_frame(1, frame);
            assert_eq!(out.len(), 1);
            assert_eq!(first(&out).error_code(), Some("bad_payload"), "{frame}");
        }
    }

    #[test]
    fn set_suction_is_refused_while_running() {
        let mut h = hub(Stepping::Realtime);
        let out = call(
            &mut h,
            1,
            "e",
            EXECUTE,
            json!({"program": "move 200 0 330"}),
        );
        assert_eq!(first(&out).kind, Kind::Reply);
        let out = call(&mut h, 1, "s", SET_SUCTION, json!({"enabled": true}));
        assert_eq!(first(&out).error_code(), Some("not_idle"));
        let out = call(&mut h, 1, "e2", EXECUTE, json!({"program": "suction on"}));
        assert_eq!(first(&out).error_code(), Some("not_idle"));
    }

    #[test]
    fn execute_reports_validation_diagnostics() {
        let mut h = hub(Stepping::Realtime);
        let out = call(&mut h, 1, "e", EXECUTE, json!({"program": "move 1000 0 0"}));
        assert_eq!(first(&out).error_code(), Some("validation_failed"));
        assert_eq!(
            first(&out).payload["diagnostics"][0]["command_index"],
            json!(0)
        );
        let out = call(&mut h, 1, "e", EXECUTE, json!({"program": "move 1 2"}));
        assert_eq!(first(&out).error_code(), Some("bad_payload"));
        let out = call(&mut h, 1, "e", EXECUTE, json!({}));
        assert_eq!(first(&out).error_code(), Some("bad_payload"));
    }

    #[test]
    fn execute_vendor_text() {
        let mut h = hub(Stepping::Lockstep { dt: 0.05 });
        let out = call(
            &mut h,
            1,
            "e",
            EXECUTE,
            json!({"program": "G0 X200 Y0 Z330\nM10", "dialect": "gcode-like"}),
        );
        assert_eq!(first(&out).payload["commands"], json!(2));
        assert!(h.simulator().state().idle);
        assert!(h.simulator().state().suction);
    }

    #[test]
    fn lockstep_execute_settles_and_publishes() {
        let mut h = hub(Stepping::Lockstep { dt: 0.05 });
        h.handle(2, Envelope::subscribe("j", JOINT_STATES));
        h.handle(2, Envelope::subscribe("i", IDLE));
        let out = call(
            &mut h,
            2,
            "run",
            EXECUTE,
            json!({"program": "move 200 0 330"}),
        );
        assert_eq!(out[0].envelope.kind, Kind::Reply);
        let idle: Vec<_> = out
            .iter()
            .filter(|d| d.topic == Some(IDLE))
            .map(|d| d.envelope.payload["idle"].clone())
            .collect();
        assert_eq!(idle, [json!(false), json!(true)]);
        let clocks: Vec<f64> = out
            .iter()
            .filter(|d| d.topic == Some(JOINT_STATES))
            .map(|d| d.envelope.payload["clock"].as_f64().unwrap())
            .collect();
        assert!(clocks.len() > 2);
        assert!(clocks.windows(2).all(|w| w[0] < w[1]), "{clocks:?}");
        assert!(h.simulator().state().idle);
    }

    #[test]
    fn two_subscribers_see_the_same_events() {
        let mut h = hub(Stepping::Realtime);
        for conn in [1, 2] {
            for topic in TOPICS {
                h.handle(conn, Envelope::subscribe(format!("sub-{topic}"), topic));
            }
        }
        let mut seen: BTreeMap<ConnId, Vec<Envelope>> = BTreeMap::new();
        let mut record = |out: Vec<Delivery>| {
            for d in out.into_iter().filter(|d| d.topic.is_some()) {
                seen.entry(d.conn).or_default().push(d.envelope);
            }
        };
        record(call(
            &mut h,
            3,
            "e",
            EXECUTE,
            json!({"program": "move 200 0 330\nmove 200 0 280\nsuction on\nmove 200 0 330"}),
        ));
        while !h.simulator().state().idle {
            record(h.tick(0.02));
        }
        record(call(&mut h, 3, "d", DETECT_OBJECTS, json!({})));
        assert!(seen[&1].len() > 20);
        assert_eq!(seen[&1], seen[&2]);
        assert!(!seen.contains_key(&3));
    }

    #[test]
    fn end_effector_follows_pick() {
        let mut h = hub(Stepping::Lockstep { dt: 0.05 });
        h.handle(1, Envelope::subscribe("ee", END_EFFECTOR));
        let out = call(
            &mut h,
            1,
            "e",
            EXECUTE,
            json!({"program": "move 200 0 280\nsuction on"}),
        );
        let last = out
            .iter()
            .rev()
            .find(|d| d.topic == Some(END_EFFECTOR))
            .unwrap();
        assert_eq!(last.envelope.payload["held_object"], json!("cube"));
        let out = call(&mut h, 1, "q", STATE_END_EFFECTOR, json!({}));
        assert_eq!(first(&out).payload["held_object"], json!("cube"));
        assert!((first(&out).payload["z"].as_f64().unwrap() - 280.0).abs() < 1e-6);
    }

    #[test]
    fn store_load_and_conflict() {
        let mut h = hub(Stepping::Realtime);
        h.handle(9, Envelope::subscribe("c", CODE));
        let out = call(&mut h, 1, "l", CODE_LOAD, json!({}));
        assert_eq!(first(&out).payload["revision"], json!(0));
        assert_eq!(first(&out).payload["program"]["commands"], json!([]));

        let program = json!({"name": "demo", "commands": [{"type": "suction", "enabled": true}]});
        let out = call(
            &mut h,
            1,
            "s",
            CODE_STORE,
            json!({"program": program, "expected_revision": 0, "client": "a"}),
        );
        assert_eq!(first(&out).payload["revision"], json!(1));
        let event = out.iter().find(|d| d.conn == 9).unwrap();
        assert_eq!(event.envelope.payload["revision"], json!(1));
        assert_eq!(event.envelope.payload["last_writer"], json!("a"));

        let out = call(
            &mut h,
            2,
            "s",
            CODE_STORE,
            json!({"program": program, "expected_revision": 0}),
        );
        assert_eq!(first(&out).error_code(), Some("conflict"));
        assert_eq!(first(&out).payload["current_revision"], json!(1));
        assert_eq!(first(&out).payload["program"], program);

        let out = call(&mut h, 1, "l", CODE_LOAD, json!({}));
        assert_eq!(first(&out).payload["program"], program);
    }

    #[test]
    fn translate_and_parse_vendor() {
        let mut h = hub(Stepping::Realtime);
        let out = call(
            &mut h,
            1,
            "t",
            TRANSLATE,
            json!({"program": "move 1 2 3\nsuction on", "dialect": "gcode-like"}),
        );
        assert_eq!(first(&out).payload["text"], json!("G0 X1 Y2 Z3\nM10"));
        let out = call(
            &mut h,
            1,
            "p",
            PARSE_VENDOR,
            json!({"text": "PTP 1,2,3", "dialect": "dobot-script", "name": "x"}),
        );
        assert_eq!(
            first(&out).payload["program"],
            json!({"name": "x", "commands": [{"type": "move", "x": 1.0, "y": 2.0, "z": 3.0}]})
        );
        let out = call(
            &mut h,
            1,
            "t",
            TRANSLATE,
            json!({"program": "move 1 2 3", "dialect": "klingon"}),
        );
        assert_eq!(first(&out).error_code(), Some("bad_payload"));
    }

    #[test]
    fn disconnect_drops_subscriptions_only() {
        let mut h = hub(Stepping::Realtime);
        h.handle(1, Envelope::subscribe("c", CODE));
        let program = json!({"name": "demo", "commands": []});
        call(
            &mut h,
            1,
            "s",
            CODE_STORE,
            json!({"program": program, "expected_revision": 0}),
        );
        h.disconnect(1);
        assert_eq!(h.subscription_count(1), 0);
        assert_eq!(h.store().load().revision, 1);
        assert_eq!(h.store().load().last_writer.as_deref(), Some("conn-1"));
    }

    #[test]
    fn world_frame_move() {
        let mut h = hub(Stepping::Lockstep { dt: 0.05 });
        let out = call(
            &mut h,
            1,
            "m",
            MOVE_TO,
            json!({"x": 200, "y": 0, "z": 30, "frame": "world"}),
        );
        assert_eq!(first(&out).kind, Kind::Reply, "{:?}", first(&out));
        let tip = h.simulator().tip_robot();
        assert!((tip.z - 280.0).abs() < 1e-6);
    }
}
