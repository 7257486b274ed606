//! Starts an object track from one stereo frame, then follows it by predicting
//! its points with the constant-velocity model and matching in the next frame.
//!
//! ```text
//! cargo run --release --example data_association
//! ```

use objba::simulator::{
    generate, initialize_object_track, predict_and_match, SceneConfig, Target, DEFAULT_GATE_PX, DEFAULT_MIN_POINTS,
};
use objba::StereoObservation;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = generate(&SceneConfig { sigma_px: 0.5, ..SceneConfig::default() })?;
    let track = ds.objects[0].track;
    let seen = |frame: u32| -> (Vec<u32>, Vec<StereoObservation>) {
        ds.observations_in(frame)
            .filter_map(|o| match o.target {
                Target::Object { track: t, point } if t == track => Some((point, o.obs)),
                _ => None,
            })
            .unzip()
    };

    let (ids, obs) = seen(0);
    let init = initialize_object_track(&obs, &ds.frames[0].t_cw, &ds.intrinsics, DEFAULT_MIN_POINTS)?;
    let truth = &ds.objects[0];
    println!(
        "track {track}: {} of {} observations triangulated, centroid {:.2} m from the true origin",
        init.used.len(),
        obs.len(),
        (init.t_wo.translation - truth.poses[0].translation).norm()
    );

    // Points in the track frame chosen at initialization, keyed by the generating id.
    let mut t_wo = init.t_wo;
    let points: Vec<(u32, nalgebra::Vector3<f64>)> =
        init.used.iter().zip(&init.points).map(|(&i, x)| (ids[i], *x)).collect();
    let twist = truth.twists[0];
    for frame in 1..ds.frames.len() as u32 {
        let (next_ids, next_obs) = seen(frame);
        let matches = predict_and_match(
            &t_wo,
            &twist,
            ds.frame_dt,
            &points,
            &ds.frames[frame as usize].t_cw,
            &next_obs,
            &ds.intrinsics,
            DEFAULT_GATE_PX,
        )?;
        let correct = matches.iter().filter(|m| next_ids[m.observation] == m.point).count();
        let mean_px = matches.iter().map(|m| m.distance).sum::<f64>() / matches.len().max(1) as f64;
        println!("frame {frame}: {} matches, {correct} correct, mean distance {mean_px:.2} px", matches.len());
        t_wo = t_wo.compose(&objba::manifold::delta_transform(&twist, ds.frame_dt)?);
    }
    Ok(())
}
