//! Line-oriented text form of a [`Problem`].
//!
//! ```text
//! objba-problem 1
//! intrinsics <fx> <fy> <cx> <cy> <baseline> <width> <height> <z_min> <d_min>
//! motion <sigma_v> <sigma_w> <sigma_xyz>
//! loss <family> <none|huber> <delta>
//! time <frame> <seconds>
//! var camera <frame> <fixed> <pose>
//! var object_pose <track> <frame> <fixed> <pose>
//! var object_twist <track> <frame> <fixed> <vx vy vz wx wy wz>
//! var map_point <point> <fixed> <x y z>
//! var object_point <track> <point> <fixed> <x y z>
//! factor static <frame> <point> <uL vL uR> <information, 9 values row-major>
//! factor object <frame> <track> <point> <uL vL uR> <information>
//! factor cv <track> <from> <to>
//! factor coupling <track> <from> <to> <point>
//! ```
//!
//! A `<pose>` is `tx ty tz` followed by the nine rotation entries row-major, so
//! values survive a write/read cycle bit for bit.

use super::{Factor, GraphError, LossConfig, Problem, VariableKey};
use crate::camera::{StereoIntrinsics, StereoObservation};
use crate::factors::{MotionNoise, RobustKind, RobustLoss, Value};
use crate::manifold::{Pose, Rotation, Twist};
use nalgebra::{Matrix3, Vector3};
use std::fmt::Write as _;

const HEADER: &str = "objba-problem 1";

#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {source}")]
    Graph { line: usize, source: GraphError },
}

pub(crate) fn write_pose(out: &mut String, p: &Pose) {
    let t = p.translation;
    let r = p.rotation.matrix();
    write!(out, "{} {} {}", t.x, t.y, t.z).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            write!(out, " {}", r[(i, j)]).unwrap();
        }
    }
}

fn write_vec(out: &mut String, v: &[f64]) {
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{x}").unwrap();
    }
}

fn write_info(out: &mut String, m: &Matrix3<f64>) {
    for i in 0..3 {
        for j in 0..3 {
            write!(out, " {}", m[(i, j)]).unwrap();
        }
    }
}

/// Whitespace tokenizer over one record with typed accessors.
pub(crate) struct Fields<'a> {
    line: usize,
    iter: std::str::SplitWhitespace<'a>,
}

impl<'a> Fields<'a> {
    pub(crate) fn new(line: usize, text: &'a str) -> Self {
        Fields { line, iter: text.split_whitespace() }
    }

    pub(crate) fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError::Syntax { line: self.line, message: message.into() }
    }

    pub(crate) fn word(&mut self) -> Result<&'a str, ParseError> {
        self.iter.next().ok_or_else(|| self.err("unexpected end of record"))
    }

    pub(crate) fn f64(&mut self) -> Result<f64, ParseError> {
        let w = self.word()?;
        w.parse().map_err(|_| self.err(format!("expected a number, found `{w}`")))
    }

    pub(crate) fn u32(&mut self) -> Result<u32, ParseError> {
        let w = self.word()?;
        w.parse().map_err(|_| self.err(format!("expected an index, found `{w}`")))
    }

    pub(crate) fn flag(&mut self) -> Result<bool, ParseError> {
        match self.word()? {
            "0" => Ok(false),
            "1" => Ok(true),
            w => Err(self.err(format!("expected 0 or 1, found `{w}`"))),
        }
    }

    pub(crate) fn vec3(&mut self) -> Result<Vector3<f64>, ParseError> {
        Ok(Vector3::new(self.f64()?, self.f64()?, self.f64()?))
    }

    pub(crate) fn mat3(&mut self) -> Result<Matrix3<f64>, ParseError> {
        let mut m = Matrix3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                m[(i, j)] = self.f64()?;
            }
        }
        Ok(m)
    }

    pub(crate) fn pose(&mut self) -> Result<Pose, ParseError> {
        let t = self.vec3()?;
        let m = self.mat3()?;
        let r = Rotation::from_matrix(m).map_err(|e| self.err(e.to_string()))?;
        Ok(Pose::new(r, t))
    }

    pub(crate) fn obs(&mut self) -> Result<StereoObservation, ParseError> {
        Ok(StereoObservation::new(self.f64()?, self.f64()?, self.f64()?))
    }

    pub(crate) fn finish(&mut self) -> Result<(), ParseError> {
        match self.iter.next() {
            None => Ok(()),
            Some(w) => Err(self.err(format!("trailing field `{w}`"))),
        }
    }
}

pub(crate) fn write_intrinsics(out: &mut String, intr: &StereoIntrinsics) {
    writeln!(
        out,
        "intrinsics {} {} {} {} {} {} {} {} {}",
        intr.fx, intr.fy, intr.cx, intr.cy, intr.baseline, intr.width, intr.height, intr.z_min, intr.d_min
    )
    .unwrap();
}

pub(crate) fn read_intrinsics(f: &mut Fields) -> Result<StereoIntrinsics, ParseError> {
    let mut intr = StereoIntrinsics::new(f.f64()?, f.f64()?, f.f64()?, f.f64()?, f.f64()?, f.f64()?, f.f64()?);
    intr.z_min = f.f64()?;
    intr.d_min = f.f64()?;
    intr.validate().map_err(|e| f.err(e.to_string()))?;
    Ok(intr)
}

fn loss_name(l: &RobustLoss) -> &'static str {
    match l.kind {
        RobustKind::None => "none",
        RobustKind::Huber => "huber",
    }
}

impl Problem {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{HEADER}").unwrap();
        write_intrinsics(&mut out, &self.intrinsics);
        let m = &self.motion_noise;
        writeln!(out, "motion {} {} {}", m.sigma_v, m.sigma_w, m.sigma_xyz).unwrap();
        for (name, l) in [
            ("reprojection", &self.losses.reprojection),
            ("constant_velocity", &self.losses.constant_velocity),
            ("velocity_coupling", &self.losses.velocity_coupling),
        ] {
            writeln!(out, "loss {name} {} {}", loss_name(l), l.delta).unwrap();
        }
        for (frame, t) in &self.timestamps {
            writeln!(out, "time {frame} {t}").unwrap();
        }
        for (key, var) in &self.variables {
            let fixed = var.fixed as u8;
            match (key, &var.value) {
                (VariableKey::Camera { frame }, Value::Pose(p)) => {
                    write!(out, "var camera {frame} {fixed} ").unwrap();
                    write_pose(&mut out, p);
                }
                (VariableKey::ObjectPose { track, frame }, Value::Pose(p)) => {
                    write!(out, "var object_pose {track} {frame} {fixed} ").unwrap();
                    write_pose(&mut out, p);
                }
                (VariableKey::ObjectTwist { track, frame }, Value::Twist(t)) => {
                    write!(out, "var object_twist {track} {frame} {fixed} ").unwrap();
                    write_vec(&mut out, t.to_vector().as_slice());
                }
                (VariableKey::MapPoint { point }, Value::Point(x)) => {
                    write!(out, "var map_point {point} {fixed} ").unwrap();
                    write_vec(&mut out, x.as_slice());
                }
                (VariableKey::ObjectPoint { track, point }, Value::Point(x)) => {
                    write!(out, "var object_point {track} {point} {fixed} ").unwrap();
                    write_vec(&mut out, x.as_slice());
                }
                _ => unreachable!("add_variable enforces value kinds"),
            }
            out.push('\n');
        }
        for f in &self.factors {
            match f {
                Factor::StaticReprojection { frame, point, obs, information } => {
                    write!(out, "factor static {frame} {point} {} {} {}", obs.u_left, obs.v_left, obs.u_right).unwrap();
                    write_info(&mut out, information);
                }
                Factor::ObjectReprojection { frame, track, point, obs, information } => {
                    write!(out, "factor object {frame} {track} {point} {} {} {}", obs.u_left, obs.v_left, obs.u_right)
                        .unwrap();
                    write_info(&mut out, information);
                }
                Factor::ConstantVelocity { track, from, to } => write!(out, "factor cv {track} {from} {to}").unwrap(),
                Factor::VelocityCoupling { track, from, to, point } => {
                    write!(out, "factor coupling {track} {from} {to} {point}").unwrap()
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Problem, ParseError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some((_, HEADER)) => {}
            Some((line, other)) => {
                return Err(ParseError::Syntax { line, message: format!("expected `{HEADER}`, found `{other}`") })
            }
            None => return Err(ParseError::Syntax { line: 0, message: "empty input".into() }),
        }
        let mut p: Option<Problem> = None;
        let mut motion = MotionNoise::default();
        let mut losses = LossConfig::default();
        for (line, text) in lines {
            let mut f = Fields::new(line, text);
            let graph = |source: GraphError| ParseError::Graph { line, source };
            let record = f.word()?;
            if record == "intrinsics" {
                p = Some(Problem::new(read_intrinsics(&mut f)?));
                f.finish()?;
                continue;
            }
            let problem = p.as_mut().ok_or_else(|| f.err("`intrinsics` must come first"))?;
            match record {
                "motion" => {
                    motion = MotionNoise { sigma_v: f.f64()?, sigma_w: f.f64()?, sigma_xyz: f.f64()? };
                }
                "loss" => {
                    let family = f.word()?;
                    let kind = f.word()?;
                    let delta = f.f64()?;
                    let loss = match kind {
                        "none" => RobustLoss::none(),
                        "huber" if delta > 0.0 => RobustLoss::huber(delta),
                        _ => return Err(f.err(format!("bad loss `{kind} {delta}`"))),
                    };
                    match family {
                        "reprojection" => losses.reprojection = loss,
                        "constant_velocity" => losses.constant_velocity = loss,
                        "velocity_coupling" => losses.velocity_coupling = loss,
                        _ => return Err(f.err(format!("unknown factor family `{family}`"))),
                    }
                }
                "time" => {
                    let frame = f.u32()?;
                    let t = f.f64()?;
                    problem.set_timestamp(frame, t).map_err(graph)?;
                }
                "var" => {
                    let kind = f.word()?;
                    let (key, value, fixed) = match kind {
                        "camera" => {
                            let frame = f.u32()?;
                            let fixed = f.flag()?;
                            (VariableKey::Camera { frame }, Value::Pose(f.pose()?), fixed)
                        }
                        "object_pose" => {
                            let (track, frame) = (f.u32()?, f.u32()?);
                            let fixed = f.flag()?;
                            (VariableKey::ObjectPose { track, frame }, Value::Pose(f.pose()?), fixed)
                        }
                        "object_twist" => {
                            let (track, frame) = (f.u32()?, f.u32()?);
                            let fixed = f.flag()?;
                            let v = f.vec3()?;
                            let w = f.vec3()?;
                            (VariableKey::ObjectTwist { track, frame }, Value::Twist(Twist::new(v, w)), fixed)
                        }
                        "map_point" => {
                            let point = f.u32()?;
                            let fixed = f.flag()?;
                            (VariableKey::MapPoint { point }, Value::Point(f.vec3()?), fixed)
                        }
                        "object_point" => {
                            let (track, point) = (f.u32()?, f.u32()?);
                            let fixed = f.flag()?;
                            (VariableKey::ObjectPoint { track, point }, Value::Point(f.vec3()?), fixed)
                        }
                        other => return Err(f.err(format!("unknown variable kind `{other}`"))),
                    };
                    problem.add_variable(key, value, fixed).map_err(graph)?;
                }
                "factor" => {
                    let kind = f.word()?;
                    let factor = match kind {
                        "static" => {
                            let (frame, point) = (f.u32()?, f.u32()?);
                            Factor::StaticReprojection { frame, point, obs: f.obs()?, information: f.mat3()? }
                        }
                        "object" => {
                            let (frame, track, point) = (f.u32()?, f.u32()?, f.u32()?);
                            Factor::ObjectReprojection { frame, track, point, obs: f.obs()?, information: f.mat3()? }
                        }
                        "cv" => Factor::ConstantVelocity { track: f.u32()?, from: f.u32()?, to: f.u32()? },
                        "coupling" => {
                            Factor::VelocityCoupling { track: f.u32()?, from: f.u32()?, to: f.u32()?, point: f.u32()? }
                        }
                        other => return Err(f.err(format!("unknown factor kind `{other}`"))),
                    };
                    problem.add_factor(factor).map_err(graph)?;
                }
                other => return Err(f.err(format!("unknown record `{other}`"))),
            }
            f.finish()?;
        }
        let mut p = p.ok_or(ParseError::Syntax { line: 0, message: "missing `intrinsics` record".into() })?;
        p.motion_noise = motion;
        p.losses = losses;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Problem {
        let mut p = Problem::new(StereoIntrinsics::default());
        p.losses.constant_velocity = RobustLoss::none();
        p.set_timestamp(0, 0.0).unwrap();
        p.set_timestamp(1, 0.1).unwrap();
        p.add_camera(0, Pose::identity(), true).unwrap();
        p.add_camera(1, Pose::from_axis_angle(Vector3::new(0.0, 0.1, 0.0), Vector3::new(0.1, 0.0, 0.3)), false)
            .unwrap();
        p.add_map_point(0, Vector3::new(1.0 / 3.0, -0.2, 9.0), false).unwrap();
        let obs = StereoObservation::new(640.5, 180.25, 600.125);
        for frame in 0..2 {
            p.add_factor(Factor::StaticReprojection { frame, point: 0, obs, information: Matrix3::identity() * 0.7 })
                .unwrap();
        }
        p
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let p = small();
        let text = p.to_text();
        let back = Problem::from_text(&text).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let text = small().to_text().replace('\n', "\n\n# note\n");
        assert_eq!(Problem::from_text(&text).unwrap(), small());
    }

    #[test]
    fn errors_name_the_line() {
        assert!(matches!(Problem::from_text(""), Err(ParseError::Syntax { line: 0, .. })));
        assert!(matches!(Problem::from_text("objba-problem 2\n"), Err(ParseError::Syntax { line: 1, .. })));
        let text = small().to_text().replace("var map_point 0 0", "var map_point 0 maybe");
        let err = Problem::from_text(&text).unwrap_err();
        assert!(matches!(err, ParseError::Syntax { line, .. } if line > 1), "{err}");
    }

    #[test]
    fn factor_before_its_variables_is_rejected() {
        let text = small().to_text();
        let (head, rest): (Vec<&str>, Vec<&str>) = text.lines().partition(|l| !l.starts_with("var map_point"));
        let mut reordered = head.join("\n");
        reordered.push('\n');
        reordered.push_str(&rest.join("\n"));
        assert!(Problem::from_text(&reordered).is_err());
    }
}
