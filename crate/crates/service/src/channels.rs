//! Channel names.

pub const MOVE_TO: &str = "service:move_to";
pub const SET_SUCTION: &str = "service:set_suction";
pub const EXECUTE: &str = "service:execute";
pub const PHYSICS: &str = "service:physics";
pub const STATE_JOINTS: &str = "service:state.joints";
pub const STATE_END_EFFECTOR: &str = "service:state.end_effector";
pub const STATE_IDLE: &str = "service:state.idle";
pub const DETECT_OBJECTS: &str = "service:detect_objects";
pub const CODE_STORE: &str = "service:code.store";
pub const CODE_LOAD: &str = "service:code.load";
pub const TRANSLATE: &str = "service:translate";
pub const PARSE_VENDOR: &str = "service:parse_vendor";

pub const JOINT_STATES: &str = "topic:joint_states";
pub const IDLE: &str = "topic:idle";
pub const END_EFFECTOR: &str = "topic:end_effector";
pub const DETECTED_OBJECTS: &str = "topic:detected_objects";
pub const TRAJECTORY: &str = "topic:trajectory";
pub const EXECUTION: &str = "topic:execution";
pub const CODE: &str = "topic:code";

pub const SERVICES: [&str; 12] = [
    MOVE_TO,
    SET_SUCTION,
    EXECUTE,
    PHYSICS,
    STATE_JOINTS,
    STATE_END_EFFECTOR,
    STATE_IDLE,
    DETECT_OBJECTS,
    CODE_STORE,
    CODE_LOAD,
    TRANSLATE,
    PARSE_VENDOR,
];

pub const TOPICS: [&str; 7] = [
    JOINT_STATES,
    IDLE,
    END_EFFECTOR,
    DETECTED_OBJECTS,
    TRAJECTORY,
    EXECUTION,
    CODE,
];

pub fn is_topic(channel: &str) -> bool {
    TOPICS.contains(&channel)
}

pub fn is_service(channel: &str) -> bool {
    SERVICES.contains(&channel)
}
