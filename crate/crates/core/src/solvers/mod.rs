//! Numerical solvers shared by the learners.

mod bias;
mod line_search;
mod lp;
mod lstsq;
mod partitioned;
mod qp;
mod smo;

pub use bias::{optimal_bias, weighted_hinge};
pub use line_search::minimize_1d_convex;
pub use lp::{solve_lp, LpProblem, LpSolution, LP_FEASIBILITY_TOLERANCE, LP_PIVOT_TOLERANCE};
pub use lstsq::lstsq_svd;
pub use partitioned::{solve_partitioned, PartitionedQp, PartitionedSolution};
pub use qp::{
    solve_qp, solve_qp_warm, QpProblem, QpSolution, QP_FEASIBILITY_TOLERANCE,
    QP_MULTIPLIER_TOLERANCE, QP_SYMMETRY_TOLERANCE,
};
pub use smo::{
    dual_objective, smo_solve, train_weighted_svm, DualSolution, SvmModel, WeightedBinaryProblem,
    SMO_TOLERANCE,
};
