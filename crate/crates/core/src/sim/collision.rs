//! Swept-tip collision: segment vs axis-aligned box, slab method.

use crate::kinematics::Pose;

use super::scene::SceneObject;

/// Parametric entry point `t` in `[0, 1]` of the segment `start -> end` into
/// the closed box `[lo, hi]`, or `None` if they do not meet. A segment that
/// starts inside the box enters at `t = 0`.
pub fn segment_aabb_entry(start: &Pose, end: &Pose, lo: &Pose, hi: &Pose) -> Option<f64> {
    let o = start.as_array();
    let d = (*end - *start).as_array();
    let (lo, hi) = (lo.as_array(), hi.as_array());
    let mut t_enter = 0.0f64;
    let mut t_exit = 1.0f64;
    for axis in 0..3 {
        if d[axis] == 0.0 {
            if o[axis] < lo[axis] || o[axis] > hi[axis] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d[axis];
        let mut t0 = (lo[axis] - o[axis]) * inv;
        let mut t1 = (hi[axis] - o[axis]) * inv;
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        t_enter = t_enter.max(t0);
        t_exit = t_exit.min(t1);
        if t_enter > t_exit {
            return None;
        }
    }
    Some(t_enter)
}

/// First contact point of the segment with `object`, if any.
pub fn check_collision(segment: (&Pose, &Pose), object: &SceneObject) -> Option<Pose> {
    let (start, end) = segment;
    segment_aabb_entry(start, end, &object.min_corner(), &object.max_corner())
        .map(|t| *start + (*end - *start).scale(t))
}
