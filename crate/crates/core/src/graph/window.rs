use super::{GraphError, Problem, VariableKey, VariableKind};
use std::collections::{BTreeMap, BTreeSet};

/// Length of the temporal tail optimized by a local solve.
pub const DEFAULT_WINDOW_SECONDS: f64 = 2.0;

/// Why a keyframe was inserted; decides which variables a local solve frees.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WindowTrigger {
    /// Cameras in the window and the static points they observe.
    CameraWeak,
    /// Cameras in the window plus pose, twist and points of the listed tracks.
    ObjectWeak(Vec<u32>),
    /// Union of both.
    Both(Vec<u32>),
}

impl WindowTrigger {
    fn frees_static(&self) -> bool {
        matches!(self, WindowTrigger::CameraWeak | WindowTrigger::Both(_))
    }

    fn tracks(&self) -> &[u32] {
        match self {
            WindowTrigger::CameraWeak => &[],
            WindowTrigger::ObjectWeak(t) | WindowTrigger::Both(t) => t,
        }
    }
}

/// Extracts the local sub-problem for a keyframe inserted at `t_now`.
///
/// Frames with timestamp in `(t_now − window_seconds, t_now]` are in the window.
/// Factors touching a frame after `t_now` are ignored, as if not yet observed.
/// Variables referenced by the selected factors but outside the free set are
/// copied in as fixed. The earliest camera is fixed unless a fixed camera is
/// already present, and likewise the earliest pose of every track.
pub fn build_local_window(
    p: &Problem,
    trigger: &WindowTrigger,
    t_now: f64,
    window_seconds: f64,
) -> Result<Problem, GraphError> {
    let in_window =
        |frame: u32| -> bool { p.timestamps.get(&frame).is_some_and(|t| *t > t_now - window_seconds && *t <= t_now) };
    let tracks: BTreeSet<u32> = trigger.tracks().iter().copied().collect();
    let observed = |f: &&super::Factor| {
        f.keys().iter().filter_map(VariableKey::frame).all(|fr| p.timestamps.get(&fr).is_some_and(|t| *t <= t_now))
    };
    let factors: Vec<&super::Factor> = p.factors.iter().filter(observed).collect();

    let mut candidates: BTreeSet<VariableKey> = BTreeSet::new();
    for key in p.variables.keys() {
        let free = match *key {
            VariableKey::Camera { frame } => in_window(frame),
            VariableKey::ObjectPose { track, frame } | VariableKey::ObjectTwist { track, frame } => {
                tracks.contains(&track) && in_window(frame)
            }
            VariableKey::ObjectPoint { track, .. } => tracks.contains(&track),
            VariableKey::MapPoint { .. } => false,
        };
        if free {
            candidates.insert(*key);
        }
    }
    // Static points seen from a window camera.
    if trigger.frees_static() {
        for f in &factors {
            if let super::Factor::StaticReprojection { frame, point, .. } = f {
                if in_window(*frame) {
                    candidates.insert(VariableKey::MapPoint { point: *point });
                }
            }
        }
    }
    // Object points only move if some observation or coupling inside the window touches them.
    let mut touched_object_points = BTreeSet::new();
    for f in &factors {
        let keys = f.keys();
        let anchored_in_window =
            keys.iter().any(|k| matches!(k.kind(), VariableKind::ObjectPose) && candidates.contains(k));
        if anchored_in_window {
            for k in keys.iter().filter(|k| k.kind() == VariableKind::ObjectPoint) {
                touched_object_points.insert(*k);
            }
        }
    }
    candidates.retain(|k| k.kind() != VariableKind::ObjectPoint || touched_object_points.contains(k));
    candidates.retain(|k| p.variables.get(k).is_some_and(|v| !v.fixed));

    let mut sub = p.empty_like();
    let mut referenced: BTreeMap<VariableKey, bool> = BTreeMap::new();
    for f in &factors {
        let keys = f.keys();
        if keys.iter().any(|k| candidates.contains(k)) {
            for k in &keys {
                referenced.insert(*k, candidates.contains(k));
            }
            sub.factors.push((*f).clone());
        }
    }
    if !referenced.values().any(|free| *free) {
        return Err(GraphError::EmptyWindow);
    }
    for (key, free) in &referenced {
        let var = p.variables[key];
        sub.variables.insert(*key, super::Variable { value: var.value, fixed: !free });
    }

    if !sub.variables.iter().any(|(k, v)| k.kind() == VariableKind::CameraPose && v.fixed) {
        if let Some(first) = sub.camera_frames().first() {
            sub.set_fixed(&VariableKey::Camera { frame: *first }, true)?;
        }
    }
    for track in sub.tracks() {
        let frames = sub.track_frames(track);
        let anchored = frames.iter().any(|f| sub.variables[&VariableKey::ObjectPose { track, frame: *f }].fixed);
        if !anchored {
            if let Some(first) = frames.first() {
                sub.set_fixed(&VariableKey::ObjectPose { track, frame: *first }, true)?;
            }
        }
    }
    if sub.free_dof() == 0 {
        return Err(GraphError::EmptyWindow);
    }
    Ok(sub)
}
