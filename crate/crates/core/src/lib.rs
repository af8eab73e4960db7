//! Frank-Wolfe solvers (vanilla, away-step, blended pairwise) with an
//! optional pivoting cleanup that keeps every active set at most `n + 1`
//! vertices, plus identification diagnostics and an experiment harness.

pub mod error;
pub mod fw_core;
pub mod geometry;
pub mod harness;
pub mod identification;
pub mod linalg;
pub mod objectives;
pub mod pivot;

pub use error::{Error, Result};
pub use fw_core::{
    fw_gap, run_plain, run_with, ActiveSet, Algorithm, Budget, CcuOutcome, Cleanup, IterationView, RunOptions,
    StepKind, TrajectoryRecord,
};
pub use geometry::{extend, ExtendedVector, FeasibleRegion, RegionKind, Vertex, VertexKey};
pub use harness::{ExperimentConfig, ExperimentOutcome, Method, ObjectiveSpec};
pub use identification::{identification_monitor, multipliers, partition_report, IdentificationSummary, MultiplierReport};
pub use linalg::{DenseMatrix, Factorization, SparseColumn, SquareMatrix};
pub use objectives::{LeastSquares, Logistic, Objective, SquaredDistance, StepRule};
pub use pivot::{init_pivot, project_simplex, run_pm, PivotState, ReducedDecomposition};
