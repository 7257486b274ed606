//! Normal-equation assembly, Schur-complement reduction and Levenberg–Marquardt.

mod layout;
mod lm;
mod probe;
mod schur;
mod system;

pub use layout::{BlockLayout, Group, Slot};
pub use lm::{apply_step, damped_step, levenberg_marquardt, marginal_covariances, LmConfig, SolveStats, Termination};
pub use probe::{complexity_probe, probe_table, synthetic_system, ProbeRow, ProbeSize};
pub use schur::{back_substitute, schur_reduce, solve, solve_reduced, ReducedSystem};
pub use system::{assemble, dense_normal_equations, AssemblyInfo, BlockSparseSystem};

use crate::graph::{Factor, GraphError, Problem, VariableKey, VariableKind};

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("factor #{index} produced non-finite Jacobian entries: {factor}")]
    NonFiniteJacobian { index: usize, factor: String },
    #[error("point block of {0} is singular (insufficient observations)")]
    SingularPoint(VariableKey),
    #[error("reduced camera/object system is singular")]
    SingularReducedSystem,
    #[error("cost became non-finite at iteration {iteration} (last finite cost {last_finite:?})")]
    NonFiniteCost { iteration: usize, last_finite: Option<f64> },
    #[error("{0} is not a camera/object variable of the reduced system")]
    NotMarginalizable(VariableKey),
    #[error("factor {0:?} connects groups whose Hessian block is declared zero")]
    DeclaredZeroViolated(Box<Factor>),
}

fn group_of_kind(kind: VariableKind) -> Group {
    match kind {
        VariableKind::CameraPose => Group::C,
        VariableKind::ObjectPose | VariableKind::ObjectTwist => Group::O,
        VariableKind::ObjectPoint => Group::Op,
        VariableKind::MapPoint => Group::Mp,
    }
}

/// Scans every factor and fails if one would fill `H_{O,Mp}` or `H_{Op,Mp}`.
pub fn check_declared_zero_blocks(p: &Problem) -> Result<(), SolverError> {
    for f in p.factors() {
        let groups: Vec<Group> = f.keys().iter().map(|k| group_of_kind(k.kind())).collect();
        let has = |g: Group| groups.contains(&g);
        if has(Group::Mp) && (has(Group::O) || has(Group::Op)) {
            return Err(SolverError::DeclaredZeroViolated(Box::new(f.clone())));
        }
    }
    Ok(())
}
