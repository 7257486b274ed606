//! Extracts the local sub-problem a keyframe would optimize, solves it and
//! writes the result back into the full problem.
//!
//! ```text
//! cargo run --release --example local_window
//! ```

use objba::graph::{build_local_window, total_cost, VariableKind, WindowTrigger};
use objba::simulator::{generate, perturb, Perturbation, ProblemOptions, SceneConfig};
use objba::solver::{levenberg_marquardt, LmConfig};
use std::collections::BTreeMap;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = generate(&SceneConfig { n_frames: 30, ..SceneConfig::default() })?;
    let mut problem = perturb(&ds, &Perturbation { seed: 4, ..Default::default() }, &ProblemOptions::default())?;
    println!(
        "full problem: {} variables, {} factors, cost {:.3e}",
        problem.variables().len(),
        problem.factors().len(),
        total_cost(&problem)?
    );

    let triggers = [
        ("camera-weak", WindowTrigger::CameraWeak),
        ("object-weak, track 0", WindowTrigger::ObjectWeak(vec![0])),
        ("both, all tracks", WindowTrigger::Both(problem.tracks().into_iter().collect())),
    ];
    let t_now = 1.5;
    for (name, trigger) in &triggers {
        let sub = build_local_window(&problem, trigger, t_now, 1.0)?;
        let mut free: BTreeMap<VariableKind, usize> = BTreeMap::new();
        let mut fixed = 0;
        for (key, var) in sub.variables() {
            if var.fixed {
                fixed += 1;
            } else {
                *free.entry(key.kind()).or_default() += 1;
            }
        }
        println!("{name}: {} factors, {fixed} fixed variables, free {free:?}", sub.factors().len());
    }

    let (_, trigger) = &triggers[2];
    let mut sub = build_local_window(&problem, trigger, t_now, 1.0)?;
    let stats = levenberg_marquardt(&mut sub, &LmConfig::default())?;
    println!("window solve: {:?}, cost {:.3e} -> {:.3e}", stats.termination, stats.initial_cost(), stats.final_cost());
    problem.absorb(&sub)?;
    println!("full problem cost after absorbing the window {:.3e}", total_cost(&problem)?);
    Ok(())
}
