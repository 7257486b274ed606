use nalgebra::Vector3;
use objba::bbox::{iou_2d, iou_3d, iou_bev, Box2D, WorldBox};
use objba::manifold::{exp_so3, Pose};
use proptest::prelude::*;

fn rect() -> impl Strategy<Value = Box2D> {
    (0.0f64..100.0, 0.0f64..100.0, 1.0f64..50.0, 1.0f64..50.0)
        .prop_map(|(u, v, w, h)| Box2D::new(u, v, u + w, v + h).unwrap())
}

fn world_box() -> impl Strategy<Value = WorldBox> {
    (-2.0f64..2.0, -0.3f64..0.3, -2.0f64..2.0, -3.2f64..3.2, 0.5f64..3.0, 0.5f64..2.0, 0.5f64..5.0).prop_map(
        |(x, y, z, yaw, w, h, l)| WorldBox {
            pose: Pose::new(exp_so3(&Vector3::new(0.0, yaw, 0.0)), Vector3::new(x, y, z)),
            dims: Vector3::new(w, h, l),
        },
    )
}

proptest! {
    #[test]
    fn image_iou_is_symmetric_and_bounded(a in rect(), b in rect()) {
        let (ab, ba) = (iou_2d(&a, &b), iou_2d(&b, &a));
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((iou_2d(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn world_iou_is_symmetric_and_bounded(a in world_box(), b in world_box()) {
        for f in [iou_bev, iou_3d] {
            let (ab, ba) = (f(&a, &b), f(&b, &a));
            prop_assert!((ab - ba).abs() < 1e-9, "{} vs {}", ab, ba);
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&ab));
            prop_assert!((f(&a, &a) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn world_iou_ignores_a_common_yaw_and_shift(a in world_box(), b in world_box(), yaw in -3.0f64..3.0, shift in prop::array::uniform3(-10.0f64..10.0)) {
        let g = Pose::new(exp_so3(&Vector3::new(0.0, yaw, 0.0)), Vector3::from(shift));
        let moved = |w: &WorldBox| WorldBox { pose: g.compose(&w.pose), dims: w.dims };
        prop_assert!((iou_bev(&a, &b) - iou_bev(&moved(&a), &moved(&b))).abs() < 1e-9);
        prop_assert!((iou_3d(&a, &b) - iou_3d(&moved(&a), &moved(&b))).abs() < 1e-9);
    }

    #[test]
    fn stacked_boxes_share_bird_view_but_not_volume(a in world_box()) {
        let mut above = a;
        above.pose.translation.y += a.dims.y;
        prop_assert!((iou_bev(&a, &above) - 1.0).abs() < 1e-9);
        prop_assert!(iou_3d(&a, &above) < 1e-9);
    }
}
