use super::{Box2D, WorldBox};
use nalgebra::Vector2;

/// Intersection over union of two image rectangles.
pub fn iou_2d(a: &Box2D, b: &Box2D) -> f64 {
    let w = (a.u_max.min(b.u_max) - a.u_min.max(b.u_min)).max(0.0);
    let h = (a.v_max.min(b.v_max) - a.v_min.max(b.v_min)).max(0.0);
    let inter = w * h;
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        (inter / union).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Signed area; positive for counter-clockwise vertices.
pub fn polygon_area(poly: &[Vector2<f64>]) -> f64 {
    let n = poly.len();
    (0..n).map(|i| poly[i].perp(&poly[(i + 1) % n])).sum::<f64>() * 0.5
}

/// Sutherland–Hodgman clip of `subject` by the convex counter-clockwise polygon `clip`.
pub fn clip_convex(subject: &[Vector2<f64>], clip: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let edge = b - a;
        let side = |p: &Vector2<f64>| edge.perp(&(p - a));
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let (p, q) = (input[j], input[(j + 1) % input.len()]);
            let (sp, sq) = (side(&p), side(&q));
            if sp >= 0.0 {
                out.push(p);
            }
            if (sp >= 0.0) != (sq >= 0.0) {
                out.push(p + (q - p) * (sp / (sp - sq)));
            }
        }
    }
    out
}

/// Counter-clockwise convex hull (monotone chain).
fn convex_hull(mut pts: Vec<Vector2<f64>>) -> Vec<Vector2<f64>> {
    pts.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap().then(a.y.partial_cmp(&b.y).unwrap()));
    pts.dedup_by(|a, b| (*a - *b).norm() < 1e-12);
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>| (a - o).perp(&(b - o));
    let mut hull: Vec<Vector2<f64>> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Vector2<f64>>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for p in iter {
            while hull.len() >= start + 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    hull
}

/// Bird-view footprint on the `x`–`z` plane and vertical extent along `y`.
fn footprint(b: &WorldBox) -> (Vec<Vector2<f64>>, f64, f64) {
    let corners = b.corners();
    let hull = convex_hull(corners.iter().map(|c| Vector2::new(c.x, c.z)).collect());
    let (lo, hi) = corners.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| (lo.min(c.y), hi.max(c.y)));
    (hull, lo, hi)
}

fn bev_areas(a: &WorldBox, b: &WorldBox) -> (f64, f64, f64, (f64, f64), (f64, f64)) {
    let (pa, a_lo, a_hi) = footprint(a);
    let (pb, b_lo, b_hi) = footprint(b);
    let inter = if pa.len() < 3 || pb.len() < 3 { 0.0 } else { polygon_area(&clip_convex(&pa, &pb)).abs() };
    (inter, polygon_area(&pa).abs(), polygon_area(&pb).abs(), (a_lo, a_hi), (b_lo, b_hi))
}

/// Rotated-rectangle IoU in bird view.
pub fn iou_bev(a: &WorldBox, b: &WorldBox) -> f64 {
    let (inter, area_a, area_b, _, _) = bev_areas(a, b);
    let union = area_a + area_b - inter;
    if union > 0.0 {
        (inter / union).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// 3D IoU: bird-view intersection times vertical overlap over the union volume.
pub fn iou_3d(a: &WorldBox, b: &WorldBox) -> f64 {
    let (inter, area_a, area_b, (a_lo, a_hi), (b_lo, b_hi)) = bev_areas(a, b);
    let overlap = (a_hi.min(b_hi) - a_lo.max(b_lo)).max(0.0);
    let inter_v = inter * overlap;
    let union = area_a * (a_hi - a_lo) + area_b * (b_hi - b_lo) - inter_v;
    if union > 0.0 {
        (inter_v / union).clamp(0.0, 1.0)
    } else {
        0.0
    }
}
