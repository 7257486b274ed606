//! Schur complement against a dense solve, then how reduction and the reduced
//! solve scale with the number of map points and cameras.
//!
//! ```text
//! cargo run --release --example schur_complexity
//! ```

use objba::solver::{complexity_probe, probe_table, solve, synthetic_system, ProbeSize};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sys = synthetic_system(ProbeSize::new(6, 2, 10, 80), 3);
    let x = solve(&sys)?;
    let (h, b) = sys.to_dense();
    let dense = h.lu().solve(&b).ok_or("dense system is singular")?;
    println!("dim {}: max |x_schur - x_dense| = {:.2e}", b.len(), (x - dense).amax());

    let sizes = [
        ProbeSize::new(20, 1, 30, 1000),
        ProbeSize::new(20, 1, 30, 2000),
        ProbeSize::new(20, 1, 30, 4000),
        ProbeSize::new(40, 1, 30, 2000),
        ProbeSize::new(80, 1, 30, 2000),
    ];
    let rows = complexity_probe(&sizes, 3)?;
    print!("{}", probe_table(&rows));
    let ratio = |a: usize, b: usize, f: fn(&objba::solver::ProbeRow) -> f64| f(&rows[b]) / f(&rows[a]);
    println!(
        "reduce time, map points x2: x{:.2} then x{:.2}",
        ratio(0, 1, |r| r.reduce_seconds),
        ratio(1, 2, |r| r.reduce_seconds)
    );
    println!(
        "reduced solve, cameras x2: x{:.2} then x{:.2}",
        ratio(1, 3, |r| r.solve_seconds),
        ratio(3, 4, |r| r.solve_seconds)
    );
    Ok(())
}
