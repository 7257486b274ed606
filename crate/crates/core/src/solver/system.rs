use super::layout::{BlockLayout, Group, Slot};
use super::SolverError;
use crate::factors::FactorError;
use crate::graph::{Factor, GraphError, JacobianMode, Problem};
use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Matrix6x3, Vector3, Vector6};
use rayon::prelude::*;
use std::collections::BTreeMap;

/// Damped or undamped normal equations `H·x = b` in `[C | O | Op | Mp]` order.
///
/// Only structurally non-zero blocks are stored: the upper triangle of
/// `H_{CO,CO}`, one `3×3` diagonal block per point and, per point, its links to
/// `CO` variables. Point-point off-diagonal blocks do not exist because no
/// factor touches two points, which also keeps `H_{O,Mp}` and `H_{Op,Mp}` empty.
/// `b` is the negative gradient `−Σ Jᵀ W r`.
#[derive(Clone, Debug)]
pub struct BlockSparseSystem {
    pub layout: BlockLayout,
    /// Upper-triangular `(a, b)` with `a ≤ b` over `CO` block indices.
    pub co_blocks: BTreeMap<(usize, usize), Matrix6<f64>>,
    pub point_diag: Vec<Matrix3<f64>>,
    /// `H_{CO,P}` column of each point: `(co index, block)` sorted by co index.
    pub point_links: Vec<BTreeMap<usize, Matrix6x3<f64>>>,
    pub b_co: Vec<Vector6<f64>>,
    pub b_p: Vec<Vector3<f64>>,
}

/// What [`assemble`] saw while linearizing.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AssemblyInfo {
    pub cost: f64,
    pub invalid_factors: usize,
    pub residual_dims: usize,
}

impl BlockSparseSystem {
    pub fn zeros(layout: BlockLayout) -> Self {
        let n_co = layout.n_co_blocks();
        let n_p = layout.n_point_blocks();
        BlockSparseSystem {
            layout,
            co_blocks: BTreeMap::new(),
            point_diag: vec![Matrix3::zeros(); n_p],
            point_links: vec![BTreeMap::new(); n_p],
            b_co: vec![Vector6::zeros(); n_co],
            b_p: vec![Vector3::zeros(); n_p],
        }
    }

    /// Adds `block` at `(a, b)` of `H` (and its transpose at `(b, a)`).
    pub fn add_block(&mut self, a: Slot, b: Slot, block: &DMatrix<f64>) {
        match (a, b) {
            (Slot::Co(i), Slot::Co(j)) => {
                let (key, m) = if i <= j {
                    ((i, j), Matrix6::from_iterator(block.iter().copied()))
                } else {
                    ((j, i), Matrix6::from_iterator(block.transpose().iter().copied()))
                };
                *self.co_blocks.entry(key).or_insert_with(Matrix6::zeros) += m;
            }
            (Slot::Co(i), Slot::Point(j)) => {
                *self.point_links[j].entry(i).or_insert_with(Matrix6x3::zeros) +=
                    Matrix6x3::from_iterator(block.iter().copied());
            }
            (Slot::Point(j), Slot::Co(i)) => {
                *self.point_links[j].entry(i).or_insert_with(Matrix6x3::zeros) +=
                    Matrix6x3::from_iterator(block.transpose().iter().copied());
            }
            (Slot::Point(i), Slot::Point(j)) => {
                assert_eq!(i, j, "no factor connects two distinct points");
                self.point_diag[i] += Matrix3::from_iterator(block.iter().copied());
            }
        }
    }

    pub fn add_rhs(&mut self, a: Slot, g: &DVector<f64>) {
        match a {
            Slot::Co(i) => self.b_co[i] += Vector6::from_iterator(g.iter().copied()),
            Slot::Point(j) => self.b_p[j] += Vector3::from_iterator(g.iter().copied()),
        }
    }

    /// `H + λ·diag(H)`, with a floor on tiny diagonal entries so unconstrained directions stay bounded.
    pub fn damped(&self, lambda: f64) -> Self {
        const FLOOR: f64 = 1e-9;
        let mut out = self.clone();
        for i in 0..self.layout.n_co_blocks() {
            let block = out.co_blocks.entry((i, i)).or_insert_with(Matrix6::zeros);
            for d in 0..6 {
                block[(d, d)] += lambda * block[(d, d)].max(FLOOR);
            }
        }
        for block in &mut out.point_diag {
            for d in 0..3 {
                block[(d, d)] += lambda * block[(d, d)].max(FLOOR);
            }
        }
        out
    }

    /// Dense `H` and `b`.
    pub fn to_dense(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.layout.dim();
        let n_co = self.layout.n_co();
        let mut h = DMatrix::zeros(n, n);
        let mut b = DVector::zeros(n);
        for (&(i, j), m) in &self.co_blocks {
            h.view_mut((6 * i, 6 * j), (6, 6)).copy_from(m);
            if i != j {
                h.view_mut((6 * j, 6 * i), (6, 6)).copy_from(&m.transpose());
            }
        }
        for (p, links) in self.point_links.iter().enumerate() {
            let po = n_co + 3 * p;
            h.view_mut((po, po), (3, 3)).copy_from(&self.point_diag[p]);
            for (&i, m) in links {
                h.view_mut((6 * i, po), (6, 3)).copy_from(m);
                h.view_mut((po, 6 * i), (3, 6)).copy_from(&m.transpose());
            }
        }
        for (i, v) in self.b_co.iter().enumerate() {
            b.rows_mut(6 * i, 6).copy_from(v);
        }
        for (j, v) in self.b_p.iter().enumerate() {
            b.rows_mut(n_co + 3 * j, 3).copy_from(v);
        }
        (h, b)
    }

    /// Structural block pattern over all slots in system order.
    pub fn block_pattern(&self) -> Vec<Vec<bool>> {
        let n_co = self.layout.n_co_blocks();
        let n = n_co + self.layout.n_point_blocks();
        let mut pat = vec![vec![false; n]; n];
        for &(i, j) in self.co_blocks.keys() {
            pat[i][j] = true;
            pat[j][i] = true;
        }
        for (p, links) in self.point_links.iter().enumerate() {
            pat[n_co + p][n_co + p] = true;
            for &i in links.keys() {
                pat[i][n_co + p] = true;
                pat[n_co + p][i] = true;
            }
        }
        pat
    }

    /// Number of stored blocks coupling two groups.
    pub fn blocks_between(&self, a: Group, b: Group) -> usize {
        let pat = self.block_pattern();
        let slots: Vec<Slot> = self.layout.slots().collect();
        let mut count = 0;
        for (r, row) in pat.iter().enumerate() {
            for (c, set) in row.iter().enumerate() {
                if *set && self.layout.group(slots[r]) == a && self.layout.group(slots[c]) == b {
                    count += 1;
                }
            }
        }
        count
    }
}

/// Builds `H = Σ JᵀWJ` and `b = −Σ JᵀWr` with the robust IRLS weight folded into `W`.
///
/// Factors whose point falls behind a camera are skipped and counted.
pub fn assemble(
    p: &Problem,
    layout: &BlockLayout,
    mode: JacobianMode,
) -> Result<(BlockSparseSystem, AssemblyInfo), SolverError> {
    let evaluations: Vec<_> = p.factors().par_iter().map(|f| (f, f.linearize(p, mode))).collect();

    let mut sys = BlockSparseSystem::zeros(layout.clone());
    let mut info = AssemblyInfo::default();
    for (index, (factor, result)) in evaluations.into_iter().enumerate() {
        let eval = match result {
            Ok(e) => e,
            Err(GraphError::Factor(FactorError::Camera(_))) => {
                info.invalid_factors += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let finite = eval.residual.iter().all(|x| x.is_finite())
            && eval.jacobians.iter().all(|j| j.iter().all(|x| x.is_finite()));
        if !finite {
            return Err(SolverError::NonFiniteJacobian { index, factor: describe(factor) });
        }
        let s = eval.squared_whitened_norm();
        let (cost, weight) = factor.robust_loss(&p.losses).apply(s);
        info.cost += cost;
        info.residual_dims += eval.residual.len();

        let w = &eval.information * weight;
        let keys = factor.keys();
        let slots: Vec<Option<Slot>> = keys.iter().map(|k| layout.slot(k)).collect();
        let wj: Vec<DMatrix<f64>> = eval.jacobians.iter().map(|j| &w * j).collect();
        for (a, slot_a) in slots.iter().enumerate() {
            let Some(sa) = slot_a else { continue };
            let ja_t = eval.jacobians[a].transpose();
            sys.add_rhs(*sa, &(-&ja_t * &w * &eval.residual));
            for (b, slot_b) in slots.iter().enumerate().skip(a) {
                let Some(sb) = slot_b else { continue };
                sys.add_block(*sa, *sb, &(&ja_t * &wj[b]));
            }
        }
    }
    Ok((sys, info))
}

fn describe(f: &Factor) -> String {
    let keys: Vec<String> = f.keys().iter().map(|k| k.to_string()).collect();
    format!("{:?} [{}]", f.family(), keys.join(", "))
}

/// Dense `JᵀWJ`, `−JᵀWr` for the same problem, built row by row. Test oracle for [`assemble`].
pub fn dense_normal_equations(
    p: &Problem,
    layout: &BlockLayout,
    mode: JacobianMode,
) -> Result<(DMatrix<f64>, DVector<f64>), SolverError> {
    let mut rows: Vec<(DMatrix<f64>, DMatrix<f64>, DVector<f64>)> = Vec::new();
    for f in p.factors() {
        let eval = match f.linearize(p, mode) {
            Ok(e) => e,
            Err(GraphError::Factor(FactorError::Camera(_))) => continue,
            Err(e) => return Err(e.into()),
        };
        let (_, weight) = f.robust_loss(&p.losses).apply(eval.squared_whitened_norm());
        let mut j = DMatrix::zeros(eval.residual.len(), layout.dim());
        for (key, jac) in f.keys().iter().zip(&eval.jacobians) {
            if let Some(slot) = layout.slot(key) {
                j.view_mut((0, layout.offset(slot)), (jac.nrows(), jac.ncols())).copy_from(jac);
            }
        }
        rows.push((j, eval.information * weight, eval.residual));
    }
    let n = layout.dim();
    let mut h = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    for (j, w, r) in rows {
        h += j.transpose() * &w * &j;
        b -= j.transpose() * &w * r;
    }
    Ok((h, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::VariableKey;
    use crate::simulator::{build_problem, generate, perturb, Perturbation, ProblemOptions, SceneConfig};

    #[test]
    fn transposed_insertions_land_in_the_same_block() {
        let layout = BlockLayout::from_groups(
            vec![VariableKey::Camera { frame: 1 }, VariableKey::Camera { frame: 2 }],
            vec![],
            vec![],
            vec![VariableKey::MapPoint { point: 0 }],
        );
        let m = DMatrix::from_fn(6, 3, |r, c| (r * 3 + c) as f64);
        let mut a = BlockSparseSystem::zeros(layout.clone());
        a.add_block(Slot::Co(1), Slot::Point(0), &m);
        let mut b = BlockSparseSystem::zeros(layout);
        b.add_block(Slot::Point(0), Slot::Co(1), &m.transpose());
        assert_eq!(a.to_dense().0, b.to_dense().0);
        let (h, _) = a.to_dense();
        assert_eq!(h, h.transpose());
    }

    #[test]
    fn damping_scales_the_diagonal_with_a_floor() {
        let layout = BlockLayout::from_groups(vec![VariableKey::Camera { frame: 1 }], vec![], vec![], vec![]);
        let mut sys = BlockSparseSystem::zeros(layout);
        sys.add_block(
            Slot::Co(0),
            Slot::Co(0),
            &DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0, 0.0, 2.0, 2.0, 2.0])),
        );
        let (h, _) = sys.damped(0.5).to_dense();
        let diag: Vec<f64> = h.diagonal().iter().copied().collect();
        assert_eq!(diag, vec![6.0, 1.5, 0.5e-9, 3.0, 3.0, 3.0]);
    }

    #[test]
    fn sparse_assembly_matches_the_dense_builder() {
        let ds =
            generate(&SceneConfig { n_frames: 4, sigma_px: 1.0, outlier_fraction: 0.05, ..SceneConfig::default() })
                .unwrap();
        let p = perturb(&ds, &Perturbation { seed: 3, ..Default::default() }, &ProblemOptions::default()).unwrap();
        let layout = BlockLayout::from_problem(&p);
        let (sys, info) = assemble(&p, &layout, JacobianMode::Analytic).unwrap();
        let (h, b) = sys.to_dense();
        let (hd, bd) = dense_normal_equations(&p, &layout, JacobianMode::Analytic).unwrap();
        assert!((&h - &hd).amax() <= 1e-9 * hd.amax());
        assert!((&b - &bd).amax() <= 1e-9 * (1.0 + bd.amax()));
        assert!((info.cost - p.cost_report().unwrap().cost).abs() <= 1e-9 * info.cost);
    }

    #[test]
    fn pattern_has_no_point_to_point_coupling() {
        let ds = generate(&SceneConfig { n_frames: 3, ..SceneConfig::default() }).unwrap();
        let p = build_problem(&ds, &ProblemOptions::default()).unwrap();
        let layout = BlockLayout::from_problem(&p);
        let (sys, _) = assemble(&p, &layout, JacobianMode::Analytic).unwrap();
        let pat = sys.block_pattern();
        let n_co = layout.n_co_blocks();
        for (i, row) in pat.iter().enumerate().skip(n_co) {
            for (j, set) in row.iter().enumerate().skip(n_co) {
                assert_eq!(*set, i == j);
            }
        }
    }
}
