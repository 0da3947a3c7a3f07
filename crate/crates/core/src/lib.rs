//! Numerical toolkit for singular integral operators over finite atomic
//! measures: layered-mass coefficients between nested cubes, doubling-cube
//! geometry, oscillation norms estimated by difference-constraint
//! feasibility, truncated kernel operators, and end-to-end boundedness
//! reports.
//!
//! All measures are finite lists of weighted points, so every integral is an
//! exact finite sum and every reported number is reproducible from the
//! inputs and seeds.

pub mod czo;
pub mod geometry;
pub mod measure;
pub mod rbmo;
pub mod verify;

pub use czo::{
    apply_truncated, builtin_kernel, cancellation_at, kernel_condition_report, l2_opnorm,
    t_one, CzoError, Kernel, KernelConditionReport, TruncationGrid,
};
pub use geometry::{
    dyadic_side_grid, enumerate_cubes, is_doubling, k_cap, k_coefficient, pair_coefficients,
    smallest_doubling_dilate, Cube, CubeFamily, DoublingParams, FamilyParams, GeometryError,
};
pub use measure::{
    build_measure, AtomicMeasure, MeasureError, MeasureSpec, Metric, Point, GEOM_TOL,
};
pub use rbmo::{
    average, direct_norms, feasibility_norm, jn_profile, lp_oscillation, oscillation,
    sublevel_interval, FeasibilityTag, JnFit, JnProfile, NormEstimate, NormTag, RbmoError,
    SampledFunction, SublevelSet,
};
pub use verify::{
    b_constants, boundedness_report, decompose, doubled_witnesses, lemma23_report,
    lemma23k_report, measure_sha256, t1_report, DecompositionParts, DoubledWitnesses,
    FunctionEpsRow, FunctionReport, Lemma23KReport, Lemma23Report, Provenance, T1Point,
    T1Report, TheoremReport, VerifyError,
};
