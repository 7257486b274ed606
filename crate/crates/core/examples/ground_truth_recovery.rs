//! Perturb a noise-free scene and let Levenberg–Marquardt pull it back to ground truth.
//!
//! ```text
//! cargo run --release --example ground_truth_recovery
//! ```

use objba::graph::VariableKey;
use objba::metrics::{ate, Trajectory};
use objba::simulator::{generate, perturb, Perturbation, ProblemOptions, SceneConfig};
use objba::solver::{levenberg_marquardt, LmConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = generate(&SceneConfig::default())?;
    let mut problem = perturb(&ds, &Perturbation { seed: 1, ..Default::default() }, &ProblemOptions::default())?;
    println!(
        "{} variables, {} factors, {} free dof",
        problem.variables().len(),
        problem.factors().len(),
        problem.free_dof()
    );

    let started = std::time::Instant::now();
    let stats = levenberg_marquardt(&mut problem, &LmConfig::default())?;
    println!(
        "{:?} after {} iterations ({} rejected) in {:.2?}: cost {:.3e} -> {:.3e}",
        stats.termination,
        stats.iterations,
        stats.rejected,
        started.elapsed(),
        stats.initial_cost(),
        stats.final_cost()
    );

    let camera_traj = |pose_of: &dyn Fn(u32) -> objba::Pose| {
        Trajectory::new(ds.frames.iter().enumerate().map(|(i, f)| (f.time, pose_of(i as u32).inverse())).collect())
    };
    let est = camera_traj(&|frame| problem.pose(&VariableKey::Camera { frame }).expect("camera"))?;
    let gt = camera_traj(&|frame| ds.frames[frame as usize].t_cw)?;
    println!("camera ATE {:.3e} m", ate(&est, &gt)?);

    for o in &ds.objects {
        let mut worst_t: f64 = 0.0;
        let mut worst_v: f64 = 0.0;
        for frame in problem.track_frames(o.track) {
            let pose = problem.pose(&VariableKey::ObjectPose { track: o.track, frame }).expect("pose");
            let twist = problem.twist(&VariableKey::ObjectTwist { track: o.track, frame }).expect("twist");
            worst_t = worst_t.max((pose.translation - o.poses[frame as usize].translation).norm());
            worst_v = worst_v.max((twist.to_vector() - o.twists[frame as usize].to_vector()).norm());
        }
        println!("track {}: max translation error {:.3e} m, max twist error {:.3e}", o.track, worst_t, worst_v);
    }
    Ok(())
}
