//! Line-oriented dataset format.
//!
//! ```text
//! objba-dataset 1
//! intrinsics <fx> <fy> <cx> <cy> <baseline> <width> <height> <z_min> <d_min>
//! timing <frame_dt> <sigma_px>
//! frame <index> <time> <T_CW pose>
//! point <id> <x y z>
//! object <track> <class>
//! box <track> <cx cy cz> <axis-angle> <dx dy dz>
//! object_point <track> <id> <x y z>
//! object_pose <track> <frame> <T_WO pose>
//! object_twist <track> <frame> <vx vy vz wx wy wz>
//! obs static <frame> <point> <uL vL uR> <outlier>
//! obs object <frame> <track> <point> <uL vL uR> <outlier> <labelled>
//! detection <frame> <track> <u_min v_min u_max v_max>
//! ```
//!
//! Poses are written as a translation and nine row-major rotation entries.
//! Records of one kind must appear in index order.

use super::{Dataset, Detection, Frame, ObjectTruth, Observation, Target};
use crate::bbox::{Box2D, Box3D};
use crate::graph::text::{read_intrinsics, write_intrinsics, write_pose, Fields, ParseError};
use crate::manifold::{Pose, Twist};
use std::fmt::Write as _;

const HEADER: &str = "objba-dataset 1";

#[derive(Debug, thiserror::Error)]
pub enum DatasetParseError {
    #[error(transparent)]
    Syntax(#[from] ParseError),
    #[error("missing `{0}` record")]
    Missing(&'static str),
}

fn vec3(out: &mut String, v: &nalgebra::Vector3<f64>) {
    write!(out, "{} {} {}", v.x, v.y, v.z).unwrap();
}

impl Dataset {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{HEADER}").unwrap();
        write_intrinsics(&mut out, &self.intrinsics);
        writeln!(out, "timing {} {}", self.frame_dt, self.sigma_px).unwrap();
        for (i, f) in self.frames.iter().enumerate() {
            write!(out, "frame {i} {} ", f.time).unwrap();
            write_pose(&mut out, &f.t_cw);
            out.push('\n');
        }
        for (i, x) in self.static_points.iter().enumerate() {
            write!(out, "point {i} ").unwrap();
            vec3(&mut out, x);
            out.push('\n');
        }
        for o in &self.objects {
            writeln!(out, "object {} {}", o.track, o.class).unwrap();
            write!(out, "box {} ", o.track).unwrap();
            vec3(&mut out, &o.bbox.pose.translation);
            out.push(' ');
            vec3(&mut out, &o.bbox.pose.axis_angle());
            out.push(' ');
            vec3(&mut out, &o.bbox.dims);
            out.push('\n');
            for (i, x) in o.points.iter().enumerate() {
                write!(out, "object_point {} {i} ", o.track).unwrap();
                vec3(&mut out, x);
                out.push('\n');
            }
            for (i, pose) in o.poses.iter().enumerate() {
                write!(out, "object_pose {} {i} ", o.track).unwrap();
                write_pose(&mut out, pose);
                out.push('\n');
            }
            for (i, t) in o.twists.iter().enumerate() {
                write!(out, "object_twist {} {i} ", o.track).unwrap();
                vec3(&mut out, &t.linear);
                out.push(' ');
                vec3(&mut out, &t.angular);
                out.push('\n');
            }
        }
        for ob in &self.observations {
            let (u, v, r) = (ob.obs.u_left, ob.obs.v_left, ob.obs.u_right);
            match ob.target {
                Target::Static { point } => {
                    writeln!(out, "obs static {} {point} {u} {v} {r} {}", ob.frame, ob.outlier as u8).unwrap()
                }
                Target::Object { track, point } => writeln!(
                    out,
                    "obs object {} {track} {point} {u} {v} {r} {} {}",
                    ob.frame,
                    ob.outlier as u8,
                    ob.instance.is_some() as u8
                )
                .unwrap(),
            }
        }
        for d in &self.detections {
            let e = d.rect;
            writeln!(out, "detection {} {} {} {} {} {}", d.frame, d.track, e.u_min, e.v_min, e.u_max, e.v_max).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Dataset, DatasetParseError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some((_, HEADER)) => {}
            Some((n, l)) => {
                return Err(ParseError::Syntax { line: n, message: format!("expected `{HEADER}`, found `{l}`") }.into())
            }
            None => return Err(DatasetParseError::Missing("header")),
        }
        let mut intrinsics = None;
        let mut timing = None;
        let mut frames = Vec::new();
        let mut static_points = Vec::new();
        let mut objects: Vec<ObjectTruth> = Vec::new();
        let mut observations = Vec::new();
        let mut detections = Vec::new();

        for (n, line) in lines {
            let mut f = Fields::new(n, line);
            let in_order = |f: &Fields, got: u32, expected: usize| -> Result<(), ParseError> {
                if got as usize == expected {
                    Ok(())
                } else {
                    Err(f.err(format!("index {got} out of order, expected {expected}")))
                }
            };
            match f.word()? {
                "intrinsics" => intrinsics = Some(read_intrinsics(&mut f)?),
                "timing" => timing = Some((f.f64()?, f.f64()?)),
                "frame" => {
                    let i = f.u32()?;
                    in_order(&f, i, frames.len())?;
                    frames.push(Frame { time: f.f64()?, t_cw: f.pose()? });
                }
                "point" => {
                    let i = f.u32()?;
                    in_order(&f, i, static_points.len())?;
                    static_points.push(f.vec3()?);
                }
                "object" => {
                    let track = f.u32()?;
                    let class = f.word()?.to_string();
                    objects.push(ObjectTruth {
                        track,
                        class,
                        bbox: Box3D { pose: Pose::identity(), dims: nalgebra::Vector3::repeat(1.0) },
                        points: Vec::new(),
                        poses: Vec::new(),
                        twists: Vec::new(),
                    });
                }
                kind @ ("box" | "object_point" | "object_pose" | "object_twist") => {
                    let track = f.u32()?;
                    let o = objects
                        .iter_mut()
                        .find(|o| o.track == track)
                        .ok_or_else(|| f.err(format!("track {track} used before its `object` record")))?;
                    match kind {
                        "box" => {
                            let t = f.vec3()?;
                            let aa = f.vec3()?;
                            let dims = f.vec3()?;
                            o.bbox =
                                Box3D::new(Pose::from_axis_angle(aa, t), dims).map_err(|e| f.err(e.to_string()))?;
                        }
                        "object_point" => {
                            let i = f.u32()?;
                            in_order(&f, i, o.points.len())?;
                            o.points.push(f.vec3()?);
                        }
                        "object_pose" => {
                            let i = f.u32()?;
                            in_order(&f, i, o.poses.len())?;
                            o.poses.push(f.pose()?);
                        }
                        _ => {
                            let i = f.u32()?;
                            in_order(&f, i, o.twists.len())?;
                            o.twists.push(Twist::new(f.vec3()?, f.vec3()?));
                        }
                    }
                }
                "obs" => {
                    let ob = match f.word()? {
                        "static" => {
                            let frame = f.u32()?;
                            let point = f.u32()?;
                            let obs = f.obs()?;
                            let outlier = f.flag()?;
                            Observation { frame, target: Target::Static { point }, obs, outlier, instance: None }
                        }
                        "object" => {
                            let frame = f.u32()?;
                            let track = f.u32()?;
                            let point = f.u32()?;
                            let obs = f.obs()?;
                            let outlier = f.flag()?;
                            let labelled = f.flag()?;
                            Observation {
                                frame,
                                target: Target::Object { track, point },
                                obs,
                                outlier,
                                instance: labelled.then_some(track),
                            }
                        }
                        w => return Err(f.err(format!("unknown observation kind `{w}`")).into()),
                    };
                    observations.push(ob);
                }
                "detection" => {
                    let frame = f.u32()?;
                    let track = f.u32()?;
                    let rect = Box2D::new(f.f64()?, f.f64()?, f.f64()?, f.f64()?).map_err(|e| f.err(e.to_string()))?;
                    detections.push(Detection { frame, track, rect });
                }
                w => return Err(f.err(format!("unknown record `{w}`")).into()),
            }
            f.finish()?;
        }

        let ds = Dataset {
            intrinsics: intrinsics.ok_or(DatasetParseError::Missing("intrinsics"))?,
            frame_dt: timing.ok_or(DatasetParseError::Missing("timing"))?.0,
            sigma_px: timing.expect("checked").1,
            frames,
            static_points,
            objects,
            observations,
            detections,
        };
        ds.check_references()?;
        Ok(ds)
    }

    fn check_references(&self) -> Result<(), DatasetParseError> {
        let bad = |m: String| DatasetParseError::Syntax(ParseError::Syntax { line: 0, message: m });
        let n = self.frames.len();
        for o in &self.objects {
            if o.poses.len() != n || o.twists.len() != n {
                return Err(bad(format!("track {} needs a pose and a twist for each of the {n} frames", o.track)));
            }
        }
        for ob in &self.observations {
            let ok = (ob.frame as usize) < n
                && match ob.target {
                    Target::Static { point } => (point as usize) < self.static_points.len(),
                    Target::Object { track, point } => {
                        self.object(track).is_some_and(|o| (point as usize) < o.points.len())
                    }
                };
            if !ok {
                return Err(bad(format!("observation {:?} in frame {} references unknown data", ob.target, ob.frame)));
            }
        }
        for d in &self.detections {
            if d.frame as usize >= n || self.object(d.track).is_none() {
                return Err(bad(format!(
                    "detection of track {} in frame {} references unknown data",
                    d.track, d.frame
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use crate::simulator::{generate, Dataset, SceneConfig};

    #[test]
    fn roundtrip_is_exact() {
        let cfg = SceneConfig { sigma_px: 0.5, outlier_fraction: 0.1, id_dropout: 0.2, ..SceneConfig::default() };
        let ds = generate(&cfg).unwrap();
        let text = ds.to_text();
        let back = Dataset::from_text(&text).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Dataset::from_text("").is_err());
        assert!(Dataset::from_text("objba-problem 1\n").is_err());
        let ds = generate(&SceneConfig::default()).unwrap();
        let text = ds.to_text().replace("timing", "timming");
        assert!(Dataset::from_text(&text).is_err());
    }
}
