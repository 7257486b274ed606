use super::system::BlockSparseSystem;
use super::SolverError;
use nalgebra::{DMatrix, DVector, Matrix3, Matrix6x3, Vector3};

/// `H' = H_{CO,CO} − H_{CO,P}·H_{P,P}⁻¹·H_{P,CO}` and `b' = b_CO − H_{CO,P}·H_{P,P}⁻¹·b_P`.
#[derive(Clone, Debug)]
pub struct ReducedSystem {
    pub h: DMatrix<f64>,
    pub b: DVector<f64>,
    /// `H_{pp}⁻¹` per point; reused by [`back_substitute`].
    pub point_inverses: Vec<Matrix3<f64>>,
    /// Number of `3×3` inversions performed (one per point).
    pub inversions: usize,
}

/// Eliminates every point block. `H_{P,P}` is block diagonal, so its inverse
/// costs one `3×3` inversion per point.
pub fn schur_reduce(sys: &BlockSparseSystem) -> Result<ReducedSystem, SolverError> {
    let n_co = sys.layout.n_co();
    let mut h = DMatrix::zeros(n_co, n_co);
    for (&(i, j), m) in &sys.co_blocks {
        h.view_mut((6 * i, 6 * j), (6, 6)).copy_from(m);
    }
    let mut b = DVector::zeros(n_co);
    for (i, v) in sys.b_co.iter().enumerate() {
        b.rows_mut(6 * i, 6).copy_from(v);
    }

    let mut point_inverses = Vec::with_capacity(sys.point_diag.len());
    let mut scratch: Vec<(usize, Matrix6x3<f64>)> = Vec::new();
    for (p, (diag, links)) in sys.point_diag.iter().zip(&sys.point_links).enumerate() {
        let inv = invert_point_block(diag).ok_or(SolverError::SingularPoint(sys.layout.point_keys()[p]))?;
        point_inverses.push(inv);

        // W_a = H_{a,p}·H_pp⁻¹
        scratch.clear();
        scratch.extend(links.iter().map(|(&a, h_ap)| (a, h_ap * inv)));
        let b_p = &sys.b_p[p];
        for (idx, (a, w_a)) in scratch.iter().enumerate() {
            let mut rows = b.fixed_rows_mut::<6>(6 * a);
            rows -= w_a * b_p;
            for (bidx, h_bp) in links.values().enumerate().skip(idx) {
                let c = scratch[bidx].0;
                let update = w_a * h_bp.transpose();
                let mut view = h.fixed_view_mut::<6, 6>(6 * a, 6 * c);
                view -= update;
            }
        }
    }
    // Only the upper block triangle was written; mirror it.
    let nb = n_co / 6;
    for bi in 0..nb {
        for bj in (bi + 1)..nb {
            let upper = h.fixed_view::<6, 6>(6 * bi, 6 * bj).transpose();
            h.fixed_view_mut::<6, 6>(6 * bj, 6 * bi).copy_from(&upper);
        }
    }
    let inversions = point_inverses.len();
    Ok(ReducedSystem { h, b, point_inverses, inversions })
}

fn invert_point_block(m: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let scale = m.abs().max();
    if !(scale > 0.0) || !scale.is_finite() {
        return None;
    }
    // Relative determinant test; a single stereo observation already gives a full-rank block.
    let det = m.determinant();
    if det.abs() <= 1e-14 * scale.powi(3) {
        return None;
    }
    m.try_inverse()
}

/// Solves the reduced camera/object system by Cholesky, falling back to LU.
pub fn solve_reduced(reduced: &ReducedSystem) -> Result<DVector<f64>, SolverError> {
    if reduced.h.nrows() == 0 {
        return Ok(DVector::zeros(0));
    }
    if let Some(chol) = reduced.h.clone().cholesky() {
        return Ok(chol.solve(&reduced.b));
    }
    reduced.h.clone().lu().solve(&reduced.b).ok_or(SolverError::SingularReducedSystem)
}

/// `x_P = H_{P,P}⁻¹·(b_P − H_{P,CO}·x_CO)`, one point at a time.
pub fn back_substitute(sys: &BlockSparseSystem, reduced: &ReducedSystem, x_co: &DVector<f64>) -> Vec<Vector3<f64>> {
    sys.point_links
        .iter()
        .enumerate()
        .map(|(p, links)| {
            let mut rhs = sys.b_p[p];
            for (&a, h_ap) in links {
                rhs -= h_ap.transpose() * x_co.fixed_rows::<6>(6 * a);
            }
            reduced.point_inverses[p] * rhs
        })
        .collect()
}

/// Full Schur solve of `H·x = b`, returned as `[x_CO; x_P]`.
pub fn solve(sys: &BlockSparseSystem) -> Result<DVector<f64>, SolverError> {
    let reduced = schur_reduce(sys)?;
    let x_co = solve_reduced(&reduced)?;
    let x_p = back_substitute(sys, &reduced, &x_co);
    let mut x = DVector::zeros(sys.layout.dim());
    x.rows_mut(0, x_co.len()).copy_from(&x_co);
    for (j, v) in x_p.iter().enumerate() {
        x.fixed_rows_mut::<3>(x_co.len() + 3 * j).copy_from(v);
    }
    Ok(x)
}
