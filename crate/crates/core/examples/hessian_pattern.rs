//! Block sparsity of the normal equations for a small scene, printed as a grid
//! in `[cameras | object poses and twists | object points | map points]` order.
//!
//! ```text
//! cargo run --release --example hessian_pattern
//! ```

use objba::graph::JacobianMode;
use objba::simulator::{build_problem, generate, ProblemOptions, SceneConfig};
use objba::solver::{assemble, BlockLayout, Group, Slot};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = SceneConfig { n_frames: 4, ..SceneConfig::default() };
    cfg.static_points.count = 6;
    cfg.objects.truncate(1);
    cfg.objects[0].points = 4;
    let ds = generate(&cfg)?;
    let problem = build_problem(&ds, &ProblemOptions::default())?;
    let layout = BlockLayout::from_problem(&problem);
    let (sys, _) = assemble(&problem, &layout, JacobianMode::Analytic)?;
    let pattern = sys.block_pattern();

    let slots: Vec<Slot> = layout.slots().collect();
    let labels: Vec<String> = slots.iter().map(|s| layout.key(*s).to_string()).collect();
    let width = labels.iter().map(String::len).max().unwrap_or(0);
    println!("{} free blocks, dim {}", slots.len(), layout.dim());
    for (i, row) in pattern.iter().enumerate() {
        if i > 0 && layout.group(slots[i]) != layout.group(slots[i - 1]) {
            println!("{:width$} {}", "", "-".repeat(slots.len() + 3));
        }
        let mut line = String::new();
        for (j, filled) in row.iter().enumerate() {
            if j > 0 && layout.group(slots[j]) != layout.group(slots[j - 1]) {
                line.push('|');
            }
            line.push(if *filled { '#' } else { '.' });
        }
        println!("{:width$} {line}", labels[i]);
    }

    for (a, b) in [
        (Group::C, Group::Mp),
        (Group::O, Group::Mp),
        (Group::Op, Group::Mp),
        (Group::Op, Group::Op),
        (Group::Mp, Group::Mp),
    ] {
        println!("non-zero {a:?}-{b:?} blocks: {}", sys.blocks_between(a, b));
    }
    Ok(())
}
