use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::kinematics::Pose;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SceneError {
    #[error("scene format error at {path}: {reason}")]
    Format { path: String, reason: String },
    #[error("duplicate object id {0:?}")]
    DuplicateObjectId(String),
}

/// Axis-aligned box in the world frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: String,
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub color: String,
    /// Held by the suction cup.
    pub attached: bool,
}

impl SceneObject {
    pub fn center_pose(&self) -> Pose {
        Pose::from_array(self.center)
    }

    pub fn min_corner(&self) -> Pose {
        Pose::new(
            self.center[0] - self.size[0] / 2.0,
            self.center[1] - self.size[1] / 2.0,
            self.center[2] - self.size[2] / 2.0,
        )
    }

    pub fn max_corner(&self) -> Pose {
        Pose::new(
            self.center[0] + self.size[0] / 2.0,
            self.center[1] + self.size[1] / 2.0,
            self.center[2] + self.size[2] / 2.0,
        )
    }

    pub fn top_center(&self) -> Pose {
        Pose::new(
            self.center[0],
            self.center[1],
            self.center[2] + self.size[2] / 2.0,
        )
    }

    pub fn contains(&self, p: &Pose) -> bool {
        let (lo, hi) = (self.min_corner(), self.max_corner());
        (lo.x..=hi.x).contains(&p.x) && (lo.y..=hi.y).contains(&p.y) && (lo.z..=hi.z).contains(&p.z)
    }
}

/// Where the robot's base frame sits in the world.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RobotBase {
    pub translation: [f64; 3],
    /// Degrees about world z.
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Scene {
    pub robot_base: RobotBase,
    pub objects: Vec<SceneObject>,
}

impl Scene {
    pub fn object(&self, id: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn object_mut(&mut self, id: &str) -> Option<&mut SceneObject> {
        self.objects.iter_mut().find(|o| o.id == id)
    }

    /// Serializes to the same schema [`load_scene`] accepts.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("scene serializes")
    }
}

fn format_err(path: impl Into<String>, reason: impl Into<String>) -> SceneError {
    SceneError::Format {
        path: path.into(),
        reason: reason.into(),
    }
}

fn vec3(v: Option<&Value>, path: &str, positive: bool) -> Result<[f64; 3], SceneError> {
    let arr = v
        .and_then(Value::as_array)
        .ok_or_else(|| format_err(path, "expected an array of 3 numbers"))?;
    if arr.len() != 3 {
        return Err(format_err(
            path,
            format!("expected 3 numbers, got {}", arr.len()),
        ));
    }
    let mut out = [0.0; 3];
    for (i, item) in arr.iter().enumerate() {
        let x = item
            .as_f64()
            .filter(|x| x.is_finite())
            .ok_or_else(|| format_err(format!("{path}[{i}]"), "expected a finite number"))?;
        if positive && x <= 0.0 {
            return Err(format_err(format!("{path}[{i}]"), "must be > 0"));
        }
        out[i] = x;
    }
    Ok(out)
}

/// Parses the scene JSON:
/// `{"robot_base": {"translation": [x,y,z], "yaw": deg},
///   "objects": [{"id", "center": [x,y,z], "size": [sx,sy,sz], "color"}]}`.
/// Loaded objects are never attached.
pub fn load_scene(text: &str) -> Result<Scene, SceneError> {
    let root: Value = serde_json::from_str(text).map_err(|e| format_err("$", e.to_string()))?;
    let root = root
        .as_object()
        .ok_or_else(|| format_err("$", "expected an object"))?;

    let base = root
        .get("robot_base")
        .and_then(Value::as_object)
        .ok_or_else(|| format_err("robot_base", "expected an object"))?;
    let translation = vec3(base.get("translation"), "robot_base.translation", false)?;
    let yaw = base
        .get("yaw")
        .and_then(Value::as_f64)
        .filter(|y| y.is_finite())
        .ok_or_else(|| format_err("robot_base.yaw", "expected a finite number"))?;

    let list = root
        .get("objects")
        .and_then(Value::as_array)
        .ok_or_else(|| format_err("objects", "expected an array"))?;
    let mut seen = BTreeSet::new();
    let mut objects = Vec::with_capacity(list.len());
    for (i, item) in list.iter().enumerate() {
        let path = format!("objects[{i}]");
        let obj = item
            .as_object()
            .ok_or_else(|| format_err(&path, "expected an object"))?;
        let string = |key: &str| {
            obj.get(key)
                .and_then(Value::as_str)
                .map(str::to_string)
                .ok_or_else(|| format_err(format!("{path}.{key}"), "expected a string"))
        };
        let id = string("id")?;
        if id.is_empty() {
            return Err(format_err(format!("{path}.id"), "must not be empty"));
        }
        if !seen.insert(id.clone()) {
            return Err(SceneError::DuplicateObjectId(id));
        }
        objects.push(SceneObject {
            center: vec3(obj.get("center"), &format!("{path}.center"), false)?,
            size: vec3(obj.get("size"), &format!("{path}.size"), true)?,
            color: string("color")?,
            id,
            attached: false,
        });
    }
    Ok(Scene {
        robot_base: RobotBase { translation, yaw },
        objects,
    })
}

/// World point into the robot base frame: subtract the base translation,
/// then rotate by `-yaw` about z.
pub fn world_to_robot(scene: &Scene, p: &Pose) -> Pose {
    let [tx, ty, tz] = scene.robot_base.translation;
    let (s, c) = scene.robot_base.yaw.to_radians().sin_cos();
    let (dx, dy) = (p.x - tx, p.y - ty);
    Pose::new(c * dx + s * dy, -s * dx + c * dy, p.z - tz)
}

pub fn robot_to_world(scene: &Scene, p: &Pose) -> Pose {
    let [tx, ty, tz] = scene.robot_base.translation;
    let (s, c) = scene.robot_base.yaw.to_radians().sin_cos();
    Pose::new(c * p.x - s * p.y + tx, s * p.x + c * p.y + ty, p.z + tz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn base(t: [f64; 3], yaw: f64) -> Scene {
        Scene {
            robot_base: RobotBase {
                translation: t,
                yaw,
            },
            objects: vec![],
        }
    }

    #[test]
    fn loads_empty_and_single_cube() {
        let s =
            load_scene(r#"{"robot_base":{"translation":[0,0,0],"yaw":0},"objects":[]}"#).unwrap();
        assert!(s.objects.is_empty());

        let s = load_scene(
            r#"{"robot_base":{"translation":[0,0,0],"yaw":0},
                "objects":[{"id":"cube","center":[200,0,12.5],"size":[25,25,25],"color":"yellow"}]}"#,
        )
        .unwrap();
        assert_eq!(s.objects.len(), 1);
        let cube = &s.objects[0];
        assert_eq!(cube.top_center(), Pose::new(200.0, 0.0, 25.0));
        assert!(!cube.attached);
    }

    #[test]
    fn rejects_duplicates_and_bad_fields() {
        let dup = r#"{"robot_base":{"translation":[0,0,0],"yaw":0},"objects":[
            {"id":"cube","center":[0,0,0],"size":[1,1,1],"color":"red"},
            {"id":"cube","center":[5,0,0],"size":[1,1,1],"color":"red"}]}"#;
        assert_eq!(
            load_scene(dup),
            Err(SceneError::DuplicateObjectId("cube".into()))
        );

        let bad_size = r#"{"robot_base":{"translation":[0,0,0],"yaw":0},"objects":[
            {"id":"a","center":[0,0,0],"size":[1,0,1],"color":"red"}]}"#;
        match load_scene(bad_size) {
            Err(SceneError::Format { path, .. }) => assert_eq!(path, "objects[0].size[1]"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(load_scene("{"), Err(SceneError::Format { .. })));
        assert!(matches!(
            load_scene(r#"{"robot_base":{"translation":[0,0],"yaw":0},"objects":[]}"#),
            Err(SceneError::Format { .. })
        ));
    }

    #[test]
    fn frame_conversion_examples() {
        let p = Pose::new(1.0, 2.0, 3.0);
        assert_eq!(world_to_robot(&base([0.0; 3], 0.0), &p), p);

        let s = base([100.0, 0.0, 0.0], 0.0);
        assert_eq!(
            world_to_robot(&s, &Pose::new(282.0, 0.0, 138.0)),
            Pose::new(182.0, 0.0, 138.0)
        );

        let s = base([0.0; 3], 90.0);
        let r = world_to_robot(&s, &Pose::new(0.0, 282.0, 138.0));
        assert!(r.distance(&Pose::new(282.0, 0.0, 138.0)) < 1e-9, "{r:?}");
    }

    proptest! {
        #[test]
        fn frame_round_trip(
            t in prop::array::uniform3(-1000.0..1000.0f64),
            yaw in -720.0..720.0f64,
            p in prop::array::uniform3(-1000.0..1000.0f64),
        ) {
            let s = base(t, yaw);
            let p = Pose::from_array(p);
            let back = robot_to_world(&s, &world_to_robot(&s, &p));
            prop_assert!(back.distance(&p) < 1e-9);
        }
    }
}
