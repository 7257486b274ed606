//! Trajectory error (ATE, RPE) and box tracking scores (TP rate, MOTP) in the
//! image, bird's-eye view and 3D.
//!
//! ```text
//! cargo run --release --example tracking_metrics
//! ```

use nalgebra::Vector3;
use objba::bbox::{iou_2d, iou_3d, iou_bev, Box2D, Box3D};
use objba::metrics::{ate, mot_report, rpe, EvalBox, RpeInterval, Trajectory};
use objba::{Pose, Twist};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Ground truth drives a gentle arc; the estimate drifts sideways and rolls slowly.
    let step =
        objba::manifold::delta_transform(&Twist::new(Vector3::new(0.0, 0.0, 5.0), Vector3::new(0.0, 0.05, 0.0)), 0.1)?;
    let mut gt = vec![(0.0, Pose::identity())];
    for k in 1..50 {
        let last = gt[k - 1].1;
        gt.push((0.1 * k as f64, last.compose(&step)));
    }
    let est: Vec<(f64, Pose)> = gt
        .iter()
        .enumerate()
        .map(|(k, (t, p))| {
            (
                *t,
                p.compose(&Pose::from_axis_angle(
                    Vector3::new(0.0, 0.0, 1e-3 * k as f64),
                    Vector3::new(0.01 * k as f64, 0.0, 0.0),
                )),
            )
        })
        .collect();
    let (gt, est) = (Trajectory::new(gt)?, Trajectory::new(est)?);
    println!("path length {:.2} m", gt.length());
    println!("ATE {:.4} m", ate(&est, &gt)?);
    let moved = est.transformed(&Pose::from_axis_angle(Vector3::new(0.2, 1.0, -0.3), Vector3::new(5.0, -2.0, 7.0)));
    println!("ATE after moving the estimate rigidly {:.4} m", ate(&moved, &gt)?);
    for interval in [RpeInterval::PerFrame, RpeInterval::PerDistance(5.0)] {
        let r = rpe(&est, &gt, interval)?;
        println!("RPE {interval:?}: {:.4} m, {:.4} deg over {} segments", r.translation, r.rotation_deg, r.segments);
    }

    let a = Box2D::new(0.0, 0.0, 10.0, 10.0)?;
    let b = Box2D::new(5.0, 0.0, 15.0, 10.0)?;
    println!("image IoU of two half-overlapping squares {:.4}", iou_2d(&a, &b));
    let car = Box3D::new(Pose::identity(), Vector3::new(1.8, 1.5, 4.2))?;
    let shifted = Pose::from_axis_angle(Vector3::new(0.0, 0.3, 0.0), Vector3::new(0.3, 0.2, 0.5));
    let (wa, wb) = (car.in_world(&Pose::identity()), car.in_world(&shifted));
    println!(
        "car against a shifted, turned copy: bird's-eye IoU {:.4}, 3D IoU {:.4}",
        iou_bev(&wa, &wb),
        iou_3d(&wa, &wb)
    );

    let gt_boxes: Vec<Vec<EvalBox>> = (0..10)
        .map(|k| {
            let pose = Pose::from_translation(Vector3::new(0.0, 0.0, 10.0 + k as f64));
            vec![EvalBox { track: 0, image: None, world: car.in_world(&pose) }]
        })
        .collect();
    let est_boxes: Vec<Vec<EvalBox>> = gt_boxes
        .iter()
        .enumerate()
        .map(|(k, g)| {
            if k % 4 == 3 {
                return Vec::new();
            }
            let mut e = g[0];
            e.world.pose.translation.x += 0.05 * k as f64;
            vec![e]
        })
        .collect();
    let report = mot_report(&est_boxes, &gt_boxes, 0.25)?;
    println!(
        "tracking over 10 frames, 2 missed: bird's-eye TP {:.1}% MOTP {:.1}%, 3D TP {:.1}% MOTP {:.1}%",
        report.bird_view.tp_percent,
        report.bird_view.motp_percent,
        report.volume.tp_percent,
        report.volume.motp_percent
    );
    Ok(())
}
