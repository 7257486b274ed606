//! The whole pipeline from a run configuration: simulate, perturb, optimize,
//! fit boxes and evaluate against ground truth.
//!
//! ```text
//! cargo run --release --example end_to_end
//! cargo run --release --example end_to_end -- crates/core/configs/run_noisy_windowed.toml
//! ```

use objba::app::{evaluate, solve_dataset, RunConfig};
use objba::simulator::generate;
use std::path::PathBuf;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/run.toml"));
    let cfg = RunConfig::load(&path)?;
    cfg.validate()?;
    println!("config {}", path.display());

    let ds = generate(&cfg.scene)?;
    let outliers = ds.observations.iter().filter(|o| o.outlier).count();
    println!(
        "{} frames, {} observations ({outliers} outliers), {} detections",
        ds.frames.len(),
        ds.observations.len(),
        ds.detections.len()
    );

    let started = std::time::Instant::now();
    let out = solve_dataset(&ds, &cfg)?;
    println!(
        "{:?} mode: {} window solves, batch {:?} after {} iterations, cost {:.3e} -> {:.3e}, {:.2?}",
        cfg.solver.mode,
        out.window_stats.len(),
        out.stats.termination,
        out.stats.iterations,
        out.stats.initial_cost(),
        out.stats.final_cost(),
        started.elapsed()
    );
    for (track, b) in &out.estimate.boxes {
        println!(
            "track {track} box ({}): dims {:.3} {:.3} {:.3}",
            b.status, b.bbox.dims.x, b.bbox.dims.y, b.bbox.dims.z
        );
    }

    let report = evaluate(&ds, &out.estimate, &cfg.eval)?;
    print!("{}", report.to_csv());
    Ok(())
}
