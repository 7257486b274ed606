//! Solver output as text.
//!
//! ```text
//! objba-estimate 1
//! camera <frame> <time> <T_CW pose>
//! object_pose <track> <frame> <time> <T_WO pose>
//! object_twist <track> <frame> <vx vy vz wx wy wz>
//! box <track> <class> <status> <box pose> <dx dy dz>
//! ```

use crate::bbox::Box3D;
use crate::graph::text::{write_pose, Fields, ParseError};
use crate::graph::{Problem, VariableKey};
use crate::manifold::{Pose, Twist};
use std::collections::BTreeMap;
use std::fmt::Write as _;

const HEADER: &str = "objba-estimate 1";

#[derive(Debug, thiserror::Error)]
pub enum EstimateParseError {
    #[error(transparent)]
    Syntax(#[from] ParseError),
    #[error("missing `{HEADER}` header")]
    MissingHeader,
}

/// Fitted box of one track; `status` is `refined` or `ransac`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackBox {
    pub class: String,
    pub bbox: Box3D,
    pub status: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Estimate {
    /// Frame → (time, T_CW).
    pub cameras: BTreeMap<u32, (f64, Pose)>,
    /// (track, frame) → (time, T_WO).
    pub object_poses: BTreeMap<(u32, u32), (f64, Pose)>,
    pub object_twists: BTreeMap<(u32, u32), Twist>,
    pub boxes: BTreeMap<u32, TrackBox>,
}

impl Estimate {
    pub fn from_problem(p: &Problem, boxes: &BTreeMap<u32, TrackBox>) -> Estimate {
        let mut e = Estimate { boxes: boxes.clone(), ..Default::default() };
        let time = |frame: u32| p.timestamps().get(&frame).copied().unwrap_or(f64::NAN);
        for (key, var) in p.variables() {
            match *key {
                VariableKey::Camera { frame } => {
                    e.cameras.insert(frame, (time(frame), *var.value.as_pose().expect("camera is a pose")));
                }
                VariableKey::ObjectPose { track, frame } => {
                    e.object_poses.insert((track, frame), (time(frame), *var.value.as_pose().expect("pose")));
                }
                VariableKey::ObjectTwist { track, frame } => {
                    e.object_twists.insert((track, frame), *var.value.as_twist().expect("twist"));
                }
                _ => {}
            }
        }
        e
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{HEADER}").unwrap();
        for (frame, (t, pose)) in &self.cameras {
            write!(out, "camera {frame} {t} ").unwrap();
            write_pose(&mut out, pose);
            out.push('\n');
        }
        for ((track, frame), (t, pose)) in &self.object_poses {
            write!(out, "object_pose {track} {frame} {t} ").unwrap();
            write_pose(&mut out, pose);
            out.push('\n');
        }
        for ((track, frame), tw) in &self.object_twists {
            let (v, w) = (tw.linear, tw.angular);
            writeln!(out, "object_twist {track} {frame} {} {} {} {} {} {}", v.x, v.y, v.z, w.x, w.y, w.z).unwrap();
        }
        for (track, b) in &self.boxes {
            write!(out, "box {track} {} {} ", b.class, b.status).unwrap();
            write_pose(&mut out, &b.bbox.pose);
            let d = b.bbox.dims;
            writeln!(out, " {} {} {}", d.x, d.y, d.z).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Estimate, EstimateParseError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        if lines.next().map(|(_, l)| l) != Some(HEADER) {
            return Err(EstimateParseError::MissingHeader);
        }
        let mut e = Estimate::default();
        for (n, line) in lines {
            let mut f = Fields::new(n, line);
            match f.word()? {
                "camera" => {
                    let frame = f.u32()?;
                    e.cameras.insert(frame, (f.f64()?, f.pose()?));
                }
                "object_pose" => {
                    let key = (f.u32()?, f.u32()?);
                    e.object_poses.insert(key, (f.f64()?, f.pose()?));
                }
                "object_twist" => {
                    let key = (f.u32()?, f.u32()?);
                    e.object_twists.insert(key, Twist::new(f.vec3()?, f.vec3()?));
                }
                "box" => {
                    let track = f.u32()?;
                    let class = f.word()?.to_string();
                    let status = f.word()?.to_string();
                    let pose = f.pose()?;
                    let bbox = Box3D::new(pose, f.vec3()?).map_err(|err| f.err(err.to_string()))?;
                    e.boxes.insert(track, TrackBox { class, bbox, status });
                }
                w => return Err(f.err(format!("unknown record `{w}`")).into()),
            }
            f.finish()?;
        }
        Ok(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn roundtrip() {
        let mut e = Estimate::default();
        let pose = Pose::from_axis_angle(Vector3::new(0.1, -0.2, 0.3), Vector3::new(1.0, 2.0, 3.0));
        e.cameras.insert(0, (0.0, Pose::identity()));
        e.cameras.insert(1, (0.1, pose));
        e.object_poses.insert((3, 1), (0.1, pose.inverse()));
        e.object_twists.insert((3, 1), Twist::new(Vector3::new(0.0, 0.0, 4.0), Vector3::new(0.0, 0.15, 0.0)));
        let bbox = Box3D::new(pose, Vector3::new(1.8, 1.5, 4.2)).unwrap();
        e.boxes.insert(3, TrackBox { class: "car".into(), bbox, status: "refined".into() });
        let text = e.to_text();
        assert_eq!(Estimate::from_text(&text).unwrap(), e);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Estimate::from_text("objba-dataset 1\n").is_err());
        assert!(Estimate::from_text("objba-estimate 1\ncamera 0 0.0 1 2\n").is_err());
        assert!(Estimate::from_text("objba-estimate 1\nfoo\n").is_err());
    }
}
