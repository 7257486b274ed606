use super::layout::{BlockLayout, Slot};
use super::schur::{back_substitute, schur_reduce, solve_reduced};
use super::system::assemble;
use super::SolverError;
use crate::graph::{JacobianMode, Problem, VariableKey};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmConfig {
    pub max_iters: usize,
    pub lambda_init: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub lambda_max: f64,
    /// Stop once an accepted step lowers the cost by less than this fraction.
    pub tol: f64,
    /// Stop when the cost itself falls below this.
    pub cost_floor: f64,
    pub jacobian_mode: JacobianMode,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            max_iters: 50,
            lambda_init: 1e-4,
            lambda_up: 10.0,
            lambda_down: 0.1,
            lambda_max: 1e16,
            tol: 1e-12,
            cost_floor: 1e-24,
            jacobian_mode: JacobianMode::Analytic,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Relative cost decrease fell below `tol`.
    Converged,
    /// Cost at or below `cost_floor`.
    ZeroCost,
    MaxIterations,
    /// Damping reached `lambda_max` without an improving step.
    NoImprovingStep,
    /// Nothing to optimize.
    NoFreeVariables,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub accepted: usize,
    pub rejected: usize,
    /// Cost at the initial values followed by the cost after every accepted step.
    pub cost_trace: Vec<f64>,
    /// Wall time of each reduce + solve + back-substitution, in seconds.
    pub linear_solve_seconds: Vec<f64>,
    /// Behind-camera factors skipped at each linearization.
    pub invalid_factors: Vec<usize>,
    pub residual_dims: usize,
    pub free_dof: usize,
    pub termination: Termination,
}

impl SolveStats {
    pub fn initial_cost(&self) -> f64 {
        self.cost_trace[0]
    }

    pub fn final_cost(&self) -> f64 {
        *self.cost_trace.last().expect("trace holds the initial cost")
    }

    /// JSON with the timing fields left out when `timings` is false.
    pub fn to_json(&self, timings: bool) -> String {
        let mut v = serde_json::to_value(self).expect("stats serialize");
        if !timings {
            v.as_object_mut().expect("object").remove("linear_solve_seconds");
        }
        serde_json::to_string_pretty(&v).expect("stats serialize")
    }
}

/// Applies a `[x_CO; x_P]` step to the free variables.
pub fn apply_step(p: &Problem, layout: &BlockLayout, step: &DVector<f64>) -> Result<Problem, SolverError> {
    let mut out = p.clone();
    for slot in layout.slots() {
        let key = layout.key(slot);
        let off = layout.offset(slot);
        let dof = layout.dof(slot);
        let value = p.value(&key)?.retract(step.rows(off, dof).as_slice());
        out.set_value(&key, value)?;
    }
    Ok(out)
}

/// Damped Gauss-Newton step `(H + λ·diag H)⁻¹ b` through the Schur complement.
pub fn damped_step(
    p: &Problem,
    layout: &BlockLayout,
    lambda: f64,
    mode: JacobianMode,
) -> Result<DVector<f64>, SolverError> {
    let (sys, _) = assemble(p, layout, mode)?;
    let damped = sys.damped(lambda);
    let reduced = schur_reduce(&damped)?;
    let x_co = solve_reduced(&reduced)?;
    let x_p = back_substitute(&damped, &reduced, &x_co);
    Ok(stack(&x_co, &x_p))
}

fn stack(x_co: &DVector<f64>, x_p: &[nalgebra::Vector3<f64>]) -> DVector<f64> {
    let mut x = DVector::zeros(x_co.len() + 3 * x_p.len());
    x.rows_mut(0, x_co.len()).copy_from(x_co);
    for (j, v) in x_p.iter().enumerate() {
        x.fixed_rows_mut::<3>(x_co.len() + 3 * j).copy_from(v);
    }
    x
}

/// Levenberg–Marquardt over the free variables of `p`, updating it in place.
pub fn levenberg_marquardt(p: &mut Problem, cfg: &LmConfig) -> Result<SolveStats, SolverError> {
    let layout = BlockLayout::from_problem(p);
    let mut stats = SolveStats {
        iterations: 0,
        accepted: 0,
        rejected: 0,
        cost_trace: Vec::new(),
        linear_solve_seconds: Vec::new(),
        invalid_factors: Vec::new(),
        residual_dims: 0,
        free_dof: layout.dim(),
        termination: Termination::MaxIterations,
    };

    let (mut sys, mut info) = assemble(p, &layout, cfg.jacobian_mode)?;
    check_cost(info.cost, &stats)?;
    stats.cost_trace.push(info.cost);
    stats.invalid_factors.push(info.invalid_factors);
    stats.residual_dims = info.residual_dims;

    if layout.dim() == 0 {
        stats.termination = Termination::NoFreeVariables;
        return Ok(stats);
    }

    let mut lambda = cfg.lambda_init;
    while stats.iterations < cfg.max_iters {
        if info.cost <= cfg.cost_floor {
            stats.termination = Termination::ZeroCost;
            return Ok(stats);
        }
        stats.iterations += 1;
        loop {
            let started = Instant::now();
            let damped = sys.damped(lambda);
            let solved = schur_reduce(&damped).and_then(|reduced| {
                let x_co = solve_reduced(&reduced)?;
                let x_p = back_substitute(&damped, &reduced, &x_co);
                Ok(stack(&x_co, &x_p))
            });
            stats.linear_solve_seconds.push(started.elapsed().as_secs_f64());

            let candidate = match solved {
                Ok(step) if step.iter().all(|x| x.is_finite()) => Some(apply_step(p, &layout, &step)?),
                Ok(_) | Err(SolverError::SingularPoint(_)) | Err(SolverError::SingularReducedSystem) => None,
                Err(e) => return Err(e),
            };
            let new_cost = match &candidate {
                Some(c) => c.cost_report()?.cost,
                None => f64::INFINITY,
            };
            if new_cost < info.cost {
                let old_cost = info.cost;
                *p = candidate.expect("finite cost implies a candidate");
                let (s, i) = assemble(p, &layout, cfg.jacobian_mode)?;
                check_cost(i.cost, &stats)?;
                sys = s;
                info = i;
                stats.accepted += 1;
                stats.cost_trace.push(info.cost);
                stats.invalid_factors.push(info.invalid_factors);
                stats.residual_dims = info.residual_dims;
                lambda = (lambda * cfg.lambda_down).max(1e-15);
                if (old_cost - info.cost) <= cfg.tol * old_cost {
                    stats.termination = Termination::Converged;
                    return Ok(stats);
                }
                break;
            }
            stats.rejected += 1;
            lambda *= cfg.lambda_up;
            if lambda > cfg.lambda_max {
                stats.termination = Termination::NoImprovingStep;
                return Ok(stats);
            }
        }
    }
    if info.cost <= cfg.cost_floor {
        stats.termination = Termination::ZeroCost;
    }
    Ok(stats)
}

fn check_cost(cost: f64, stats: &SolveStats) -> Result<(), SolverError> {
    if cost.is_finite() {
        Ok(())
    } else {
        Err(SolverError::NonFiniteCost { iteration: stats.iterations, last_finite: stats.cost_trace.last().copied() })
    }
}

/// Marginal covariances of camera/object variables from the reduced (undamped) system.
pub fn marginal_covariances(
    p: &Problem,
    keys: &[VariableKey],
) -> Result<BTreeMap<VariableKey, DMatrix<f64>>, SolverError> {
    let layout = BlockLayout::from_problem(p);
    let (sys, _) = assemble(p, &layout, JacobianMode::Analytic)?;
    let reduced = schur_reduce(&sys)?;
    let inverse = reduced.h.clone().cholesky().ok_or(SolverError::SingularReducedSystem)?.inverse();
    let mut out = BTreeMap::new();
    for key in keys {
        match layout.slot(key) {
            Some(Slot::Co(i)) => {
                out.insert(*key, inverse.view((6 * i, 6 * i), (6, 6)).into_owned());
            }
            _ => return Err(SolverError::NotMarginalizable(*key)),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{build_problem, generate, perturb, Perturbation, ProblemOptions, SceneConfig};

    fn scene() -> crate::simulator::Dataset {
        generate(&SceneConfig { n_frames: 4, ..SceneConfig::default() }).unwrap()
    }

    #[test]
    fn ground_truth_start_stays_put() {
        let ds = scene();
        let mut p = build_problem(&ds, &ProblemOptions::default()).unwrap();
        let stats = levenberg_marquardt(&mut p, &LmConfig::default()).unwrap();
        assert!(stats.initial_cost() < 1e-18, "{}", stats.initial_cost());
        assert!(stats.iterations <= 3, "{:?}", stats.termination);
        for (f, frame) in ds.frames.iter().enumerate() {
            let cam = p.pose(&VariableKey::Camera { frame: f as u32 }).unwrap();
            assert!(cam.local(&frame.t_cw).norm() < 1e-9);
        }
    }

    #[test]
    fn all_fixed_problem_has_nothing_to_do() {
        let mut p = build_problem(&scene(), &ProblemOptions::default()).unwrap();
        let keys: Vec<_> = p.variables().keys().copied().collect();
        for k in keys {
            p.set_fixed(&k, true).unwrap();
        }
        let stats = levenberg_marquardt(&mut p, &LmConfig::default()).unwrap();
        assert_eq!(stats.termination, Termination::NoFreeVariables);
        assert_eq!(stats.free_dof, 0);
    }

    #[test]
    fn perturbed_start_is_pulled_back() {
        let ds = scene();
        let mut p = perturb(&ds, &Perturbation { seed: 8, ..Default::default() }, &ProblemOptions::default()).unwrap();
        let stats = levenberg_marquardt(&mut p, &LmConfig::default()).unwrap();
        assert!(stats.final_cost() < 1e-12 * stats.initial_cost(), "{:?}", stats.cost_trace);
        assert_eq!(stats.cost_trace.len(), stats.accepted + 1);
        let cam = p.pose(&VariableKey::Camera { frame: 3 }).unwrap();
        assert!(cam.local(&ds.frames[3].t_cw).norm() < 1e-6);
    }

    #[test]
    fn iteration_cap_is_respected() {
        let mut p =
            perturb(&scene(), &Perturbation { seed: 1, ..Default::default() }, &ProblemOptions::default()).unwrap();
        let stats = levenberg_marquardt(&mut p, &LmConfig { max_iters: 2, ..Default::default() }).unwrap();
        assert_eq!(stats.iterations, 2);
        assert_eq!(stats.termination, Termination::MaxIterations);
    }

    #[test]
    fn stats_json_omits_timings_on_request() {
        let mut p =
            perturb(&scene(), &Perturbation { seed: 1, ..Default::default() }, &ProblemOptions::default()).unwrap();
        let stats = levenberg_marquardt(&mut p, &LmConfig { max_iters: 1, ..Default::default() }).unwrap();
        assert!(!stats.to_json(false).contains("linear_solve_seconds"));
        assert!(stats.to_json(true).contains("linear_solve_seconds"));
    }
}
