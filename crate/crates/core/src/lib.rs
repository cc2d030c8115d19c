//! Finite-element solver for 2D nonlinear magnetostatics in the vector
//! potential formulation, with fixed-point, Kačanov and damped Newton
//! iterations under Armijo backtracking, and a checker for guaranteed
//! energy-contraction rates.

pub mod assembly;
pub mod certify;
pub mod config;
pub mod descent;
pub mod error;
pub mod linsolve;
pub mod material;
pub mod mesh;
pub mod study;

pub use assembly::{Coefficients, FeProblem, MaterialTable, MetricChoice, SourceSpec};
pub use certify::{check_decay, contraction_factor, derive_metric_bounds, CertReport, ConvergenceCertificate};
pub use descent::{run, DescentState, IterationRecord, LinearSolverKind, SolverConfig, Termination};
pub use error::{Error, Result};
pub use material::{estimate_bounds, CurvatureBounds, MaterialLaw, MonotoneSpline};
pub use mesh::{generate_benchmark_mesh, GeometrySpec, RegionId, TriMesh};
