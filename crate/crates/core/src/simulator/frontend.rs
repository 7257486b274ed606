use super::SimError;
use crate::camera::{backproject, project_stereo, StereoIntrinsics, StereoObservation};
use crate::manifold::{delta_transform, Pose, Twist};
use nalgebra::Vector3;

/// Observations required before an object track is created.
pub const DEFAULT_MIN_POINTS: usize = 8;

/// Matching gate on the left-image pixel distance.
pub const DEFAULT_GATE_PX: f64 = 8.0;

#[derive(Clone, Debug, PartialEq)]
pub struct InitializedTrack {
    /// Identity rotation, translation at the centroid of the triangulated points.
    pub t_wo: Pose,
    /// Points relative to `t_wo`, one per entry of `used`.
    pub points: Vec<Vector3<f64>>,
    /// Indices of the observations that triangulated.
    pub used: Vec<usize>,
}

/// Starts an object track from the stereo observations of one instance in one frame.
///
/// Observations that do not triangulate (non-positive or tiny disparity) are skipped.
pub fn initialize_object_track(
    observations: &[StereoObservation],
    t_cw: &Pose,
    intr: &StereoIntrinsics,
    min_points: usize,
) -> Result<InitializedTrack, SimError> {
    let t_wc = t_cw.inverse();
    let mut used = Vec::new();
    let mut world = Vec::new();
    for (i, obs) in observations.iter().enumerate() {
        if let Ok(x_c) = backproject(obs, intr) {
            used.push(i);
            world.push(t_wc.transform_point(&x_c));
        }
    }
    if world.len() < min_points {
        return Err(SimError::TooFewPoints { found: world.len(), required: min_points });
    }
    let centroid = world.iter().fold(Vector3::zeros(), |a, x| a + x) / world.len() as f64;
    Ok(InitializedTrack {
        t_wo: Pose::from_translation(centroid),
        points: world.iter().map(|x| x - centroid).collect(),
        used,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Match {
    /// Track point id.
    pub point: u32,
    /// Index into the candidate observations.
    pub observation: usize,
    /// Left-image distance between prediction and observation, pixels.
    pub distance: f64,
}

/// Matches track points to the next frame's observations by predicting the object
/// pose with the constant-velocity model, `T_WO·ΔT(twist, dt)`.
///
/// Pairs closer than `gate_px` are accepted greedily by distance, each point and
/// each observation at most once. Results are sorted by point id.
#[allow(clippy::too_many_arguments)]
pub fn predict_and_match(
    t_wo: &Pose,
    twist: &Twist,
    dt: f64,
    points: &[(u32, Vector3<f64>)],
    t_cw_next: &Pose,
    observations: &[StereoObservation],
    intr: &StereoIntrinsics,
    gate_px: f64,
) -> Result<Vec<Match>, SimError> {
    let predicted = t_wo.compose(&delta_transform(twist, dt)?);
    let t_co = t_cw_next.compose(&predicted);
    let mut pairs = Vec::new();
    for (id, x_o) in points {
        let Ok(pred) = project_stereo(&t_co.transform_point(x_o), intr) else { continue };
        for (j, obs) in observations.iter().enumerate() {
            let d = ((obs.u_left - pred.u_left).powi(2) + (obs.v_left - pred.v_left).powi(2)).sqrt();
            if d < gate_px {
                pairs.push(Match { point: *id, observation: j, distance: d });
            }
        }
    }
    pairs.sort_by(|a, b| {
        a.distance.partial_cmp(&b.distance).unwrap().then(a.point.cmp(&b.point)).then(a.observation.cmp(&b.observation))
    });
    let mut point_taken = std::collections::BTreeSet::new();
    let mut obs_taken = vec![false; observations.len()];
    let mut out = Vec::new();
    for m in pairs {
        if !obs_taken[m.observation] && point_taken.insert(m.point) {
            obs_taken[m.observation] = true;
            out.push(m);
        }
    }
    out.sort_by_key(|m| m.point);
    Ok(out)
}
