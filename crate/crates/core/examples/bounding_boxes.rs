//! 3D boxes from object points: RANSAC over two perpendicular faces in one view,
//! then refinement against the 2D detections of every view. The points carry
//! 2 cm of Gaussian noise, as a triangulated cloud would.
//!
//! ```text
//! cargo run --release --example bounding_boxes
//! ```

use objba::bbox::{
    fit_box_ransac, iou_3d, orientation_error_deg, refine_box, BoxView, ClassPrior, RansacConfig, RefineConfig,
};
use objba::simulator::{generate, SceneConfig};
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = generate(&SceneConfig { n_frames: 20, ..SceneConfig::default() })?;
    let prior = ClassPrior::car();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let noise = Normal::new(0.0, 0.02)?;
    for o in &ds.objects {
        let views: Vec<BoxView> = ds
            .detections
            .iter()
            .filter(|d| d.track == o.track)
            .map(|d| BoxView {
                t_wo: o.poses[d.frame as usize],
                t_cw: ds.frames[d.frame as usize].t_cw,
                detection: d.rect,
            })
            .collect();
        let Some(first) = views.first() else { continue };
        let t_ct = first.t_cw.compose(&first.t_wo);
        let truth = o.bbox.aligned_to(&prior.mean_dims);
        let score = |name: &str, b: &objba::bbox::Box3D| {
            let b = b.aligned_to(&prior.mean_dims);
            println!(
                "  {name:<8} dims {:.3} {:.3} {:.3}  truth {:.3} {:.3} {:.3}  heading error {:.2} deg  3D IoU {:.3}",
                b.dims.x,
                b.dims.y,
                b.dims.z,
                truth.dims.x,
                truth.dims.y,
                truth.dims.z,
                orientation_error_deg(&b, &truth),
                iou_3d(&b.in_world(&first.t_wo), &truth.in_world(&first.t_wo))
            );
        };

        println!("track {} ({}), {} points, {} views", o.track, o.class, o.points.len(), views.len());
        let points: Vec<_> =
            o.points.iter().map(|x| x + nalgebra::Vector3::from_fn(|_, _| noise.sample(&mut rng))).collect();
        let initial =
            fit_box_ransac(&points, &t_ct, &ds.intrinsics, &first.detection, &prior, &RansacConfig::default())?;
        score("ransac", &initial);
        let refined = refine_box(&initial, &views, &ds.intrinsics, &prior, &RefineConfig::default())?;
        score("refined", &refined.refined);
        println!(
            "  refinement: {} iterations, cost {:.3e} -> {:.3e}, worst edge error {:.3} px",
            refined.iterations, refined.initial_cost, refined.final_cost, refined.max_edge_error
        );
        if let Err(e) = refine_box(&initial, &views[..2], &ds.intrinsics, &prior, &RefineConfig::default()) {
            println!("  with two views: {e}");
        }
    }
    Ok(())
}
