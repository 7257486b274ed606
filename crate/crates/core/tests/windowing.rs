use objba::graph::{build_local_window, GraphError, VariableKey, VariableKind, WindowTrigger};
use objba::simulator::{build_problem, generate, perturb, Perturbation, ProblemOptions, SceneConfig};
use objba::solver::{levenberg_marquardt, LmConfig};
use objba::Problem;

fn scene(n_frames: usize) -> Problem {
    let ds = generate(&SceneConfig { n_frames, ..SceneConfig::default() }).unwrap();
    build_problem(&ds, &ProblemOptions::default()).unwrap()
}

fn all_tracks(p: &Problem) -> WindowTrigger {
    WindowTrigger::Both(p.tracks().into_iter().collect())
}

#[test]
fn window_sees_no_factor_from_the_future() {
    let p = scene(20);
    let t_now = 0.95;
    let sub = build_local_window(&p, &all_tracks(&p), t_now, 0.5).unwrap();
    for f in sub.factors() {
        for frame in f.keys().iter().filter_map(VariableKey::frame) {
            assert!(p.timestamp(frame).unwrap() <= t_now, "{:?} reaches frame {frame}", f.family());
        }
    }
    assert!(sub.variables().keys().filter_map(|k| k.frame()).all(|f| p.timestamp(f).unwrap() <= t_now));
}

#[test]
fn free_cameras_are_exactly_the_window() {
    let p = scene(20);
    let sub = build_local_window(&p, &WindowTrigger::CameraWeak, 1.0, 0.35).unwrap();
    let mut free: Vec<u32> = sub
        .variables()
        .iter()
        .filter(|(k, v)| k.kind() == VariableKind::CameraPose && !v.fixed)
        .filter_map(|(k, _)| k.frame())
        .collect();
    free.sort();
    // Window (0.65, 1.0] holds frames 7..=10; without an outside fixed camera the first is the gauge.
    let fixed_outside =
        sub.variables().iter().any(|(k, v)| k.kind() == VariableKind::CameraPose && v.fixed && k.frame() < Some(7));
    let expected: Vec<u32> = if fixed_outside { (7..=10).collect() } else { (8..=10).collect() };
    assert_eq!(free, expected);
}

#[test]
fn every_window_keeps_a_fixed_camera_and_a_fixed_pose_per_track() {
    let p = scene(15);
    for (&frame, &t) in p.timestamps().iter().skip(1) {
        let sub = match build_local_window(&p, &all_tracks(&p), t, 0.3) {
            Ok(s) => s,
            Err(GraphError::EmptyWindow) => continue,
            Err(e) => panic!("frame {frame}: {e}"),
        };
        assert!(sub.variables().iter().any(|(k, v)| k.kind() == VariableKind::CameraPose && v.fixed), "frame {frame}");
        for track in sub.tracks() {
            assert!(
                sub.track_frames(track)
                    .iter()
                    .any(|&f| sub.variable(&VariableKey::ObjectPose { track, frame: f }).unwrap().fixed),
                "frame {frame}, track {track}"
            );
        }
    }
}

#[test]
fn camera_weak_window_leaves_objects_fixed() {
    let p = scene(10);
    let sub = build_local_window(&p, &WindowTrigger::CameraWeak, 0.9, 0.5).unwrap();
    for (k, v) in sub.variables() {
        if matches!(k.kind(), VariableKind::ObjectPose | VariableKind::ObjectTwist | VariableKind::ObjectPoint) {
            assert!(v.fixed, "{k} is free");
        }
    }
}

#[test]
fn absorbing_a_solved_window_changes_only_its_free_variables() {
    let ds = generate(&SceneConfig { n_frames: 12, ..SceneConfig::default() }).unwrap();
    let mut p = perturb(&ds, &Perturbation { seed: 2, ..Default::default() }, &ProblemOptions::default()).unwrap();
    let before = p.clone();
    let mut sub = build_local_window(&p, &all_tracks(&p), 0.6, 0.3).unwrap();
    levenberg_marquardt(&mut sub, &LmConfig { max_iters: 5, ..Default::default() }).unwrap();
    p.absorb(&sub).unwrap();
    for (k, v) in p.variables() {
        let free_in_window = sub.variable(k).is_some_and(|s| !s.fixed);
        if !free_in_window {
            assert_eq!(v.value, before.variable(k).unwrap().value, "{k} changed");
        }
    }
}

#[test]
fn window_before_the_first_frame_is_empty() {
    let p = scene(5);
    assert!(matches!(build_local_window(&p, &WindowTrigger::CameraWeak, -1.0, 0.5), Err(GraphError::EmptyWindow)));
}
