//! Rectified stereo projection, its Jacobian and back-projection.
//!
//! ```text
//! cargo run --release --example stereo_projection
//! ```

use nalgebra::Vector3;
use objba::camera::{backproject, project_stereo, projection_jacobian};
use objba::StereoIntrinsics;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let intr = StereoIntrinsics::default();
    println!(
        "fx {:.1} fy {:.1} cx {:.1} cy {:.1} baseline {:.3} m, image {}x{}",
        intr.fx, intr.fy, intr.cx, intr.cy, intr.baseline, intr.width, intr.height
    );

    for x_c in [
        Vector3::new(0.0, 0.0, 5.0),
        Vector3::new(2.0, -0.5, 12.0),
        Vector3::new(-6.0, 1.0, 40.0),
        Vector3::new(30.0, 0.0, 10.0),
    ] {
        let obs = project_stereo(&x_c, &intr)?;
        let back = backproject(&obs, &intr)?;
        println!(
            "X_C {:>6.2} {:>6.2} {:>6.2} -> uL {:>8.2} v {:>7.2} uR {:>8.2} disparity {:>6.2} in image {:<5} back-projection error {:.1e}",
            x_c.x,
            x_c.y,
            x_c.z,
            obs.u_left,
            obs.v_left,
            obs.u_right,
            obs.disparity(),
            intr.in_image(&obs),
            (back - x_c).norm()
        );
    }

    let x_c = Vector3::new(1.0, 0.4, 8.0);
    let j = projection_jacobian(&x_c, &intr)?;
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for k in 0..3 {
        let mut d = Vector3::zeros();
        d[k] = h;
        let col = (project_stereo(&(x_c + d), &intr)?.to_vector() - project_stereo(&(x_c - d), &intr)?.to_vector())
            / (2.0 * h);
        worst = worst.max((j.column(k) - col).amax());
    }
    println!("projection Jacobian at {x_c:?}:\n{j:.3}max deviation from central differences {worst:.2e}");

    match project_stereo(&Vector3::new(0.0, 0.0, -1.0), &intr) {
        Ok(_) => println!("a point behind the camera projected"),
        Err(e) => println!("point behind the camera: {e}"),
    }
    Ok(())
}
