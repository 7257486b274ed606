//! Timing sweep for the Schur path on synthetic block systems.

use super::layout::{BlockLayout, Slot};
use super::schur::{schur_reduce, solve_reduced};
use super::system::BlockSparseSystem;
use super::SolverError;
use crate::graph::VariableKey;
use nalgebra::{DMatrix, DVector, Matrix3, Matrix3x6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// One problem size: cameras, objects, points per object, map points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeSize {
    pub n_cameras: usize,
    pub n_objects: usize,
    pub n_object_points: usize,
    pub n_map_points: usize,
}

impl ProbeSize {
    pub fn new(n_cameras: usize, n_objects: usize, n_object_points: usize, n_map_points: usize) -> Self {
        ProbeSize { n_cameras, n_objects, n_object_points, n_map_points }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub size: ProbeSize,
    /// Dimension of the reduced camera/object system.
    pub reduced_dim: usize,
    /// Median time of [`schur_reduce`].
    pub reduce_seconds: f64,
    /// Median time of the dense solve of the reduced system.
    pub solve_seconds: f64,
}

/// A system with the connectivity of a full-visibility window: every point seen by
/// every camera, every object point tied to every pose and twist of its object.
pub fn synthetic_system(size: ProbeSize, seed: u64) -> BlockSparseSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cameras: Vec<_> = (0..size.n_cameras as u32).map(|frame| VariableKey::Camera { frame }).collect();
    let mut objects = Vec::new();
    for track in 0..size.n_objects as u32 {
        for frame in 0..size.n_cameras as u32 {
            objects.push(VariableKey::ObjectPose { track, frame });
            objects.push(VariableKey::ObjectTwist { track, frame });
        }
    }
    let object_points: Vec<_> = (0..size.n_objects as u32)
        .flat_map(|track| (0..size.n_object_points as u32).map(move |point| VariableKey::ObjectPoint { track, point }))
        .collect();
    let map_points: Vec<_> = (0..size.n_map_points as u32).map(|point| VariableKey::MapPoint { point }).collect();
    let layout = BlockLayout::from_groups(cameras, objects, object_points, map_points);
    let n_c = size.n_cameras;
    let mut sys = BlockSparseSystem::zeros(layout);

    for i in 0..sys.layout.n_co_blocks() {
        sys.add_block(Slot::Co(i), Slot::Co(i), &DMatrix::identity(6, 6));
    }
    let rand_block = |rng: &mut ChaCha8Rng| -> (Matrix3x6<f64>, Matrix3<f64>) {
        (Matrix3x6::from_fn(|_, _| rng.random_range(-1.0..1.0)), Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0)))
    };
    for p in 0..sys.layout.n_point_blocks() {
        let key = sys.layout.point_keys()[p];
        let mut neighbours: Vec<usize> = (0..n_c).collect();
        if let VariableKey::ObjectPoint { track, .. } = key {
            let base = n_c + 2 * n_c * track as usize;
            neighbours.extend(base..base + 2 * n_c);
        }
        for &a in &neighbours {
            let (jc, jp) = rand_block(&mut rng);
            let hcc = jc.transpose() * jc;
            let hcp = jc.transpose() * jp;
            let hpp = jp.transpose() * jp + Matrix3::identity();
            sys.co_blocks.entry((a, a)).and_modify(|m| *m += hcc);
            *sys.point_links[p].entry(a).or_insert_with(nalgebra::Matrix6x3::zeros) += hcp;
            sys.point_diag[p] += hpp;
            sys.b_co[a] += jc.transpose() * nalgebra::Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        }
        sys.b_p[p] = nalgebra::Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
    }
    sys
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite timings"));
    v[v.len() / 2]
}

/// Times reduce and reduced-solve for each size; `repeats` runs per size, median kept.
pub fn complexity_probe(sizes: &[ProbeSize], repeats: usize) -> Result<Vec<ProbeRow>, SolverError> {
    let repeats = repeats.max(1);
    let mut rows = Vec::with_capacity(sizes.len());
    for (n, size) in sizes.iter().enumerate() {
        let sys = synthetic_system(*size, 0x5eed + n as u64);
        let mut reduce_t = Vec::with_capacity(repeats);
        let mut solve_t = Vec::with_capacity(repeats);
        let mut reduced_dim = 0;
        for _ in 0..repeats {
            let started = Instant::now();
            let reduced = schur_reduce(&sys)?;
            reduce_t.push(started.elapsed().as_secs_f64());
            let started = Instant::now();
            let x: DVector<f64> = solve_reduced(&reduced)?;
            solve_t.push(started.elapsed().as_secs_f64());
            reduced_dim = x.len();
        }
        rows.push(ProbeRow {
            size: *size,
            reduced_dim,
            reduce_seconds: median(reduce_t),
            solve_seconds: median(solve_t),
        });
    }
    Ok(rows)
}

/// CSV with one row per probed size.
pub fn probe_table(rows: &[ProbeRow]) -> String {
    let mut out =
        String::from("n_cameras,n_objects,n_object_points,n_map_points,reduced_dim,reduce_seconds,solve_seconds\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{:.6e},{:.6e}\n",
            r.size.n_cameras,
            r.size.n_objects,
            r.size.n_object_points,
            r.size.n_map_points,
            r.reduced_dim,
            r.reduce_seconds,
            r.solve_seconds
        ));
    }
    out
}
