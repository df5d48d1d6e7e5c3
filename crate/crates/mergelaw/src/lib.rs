//! Merging many fine-tuned experts into one base model, and the
//! empirical laws that describe what happens as you merge more of them.
//!
//! The crate covers the full loop:
//!
//! - [`checkpoint`]: a minimal safetensors-style container for float
//!   checkpoints, with canonical byte-stable serialization.
//! - [`merge`]: weight-space merging of expert task vectors under one
//!   unified rule (uniform averaging, scaled task arithmetic,
//!   trim/elect/disjoint sign resolution, random drop-and-rescale).
//! - [`law`]: the floor+tail curve `L(k) = L_inf + A/(k+b)` and its
//!   joint form over model size `N`, plus derived planning quantities.
//! - [`fit`]: separable least-squares fitters for the curve, the joint
//!   law, the variance analogue, and across-order dispersion.
//! - [`plan`]: three-point forecasting and expert-budget
//!   recommendations (early-stop `k*`, experts-to-floor).
//! - [`sim`]: Monte-Carlo checks of the second-order loss expansion on
//!   synthetic quadratic losses with exact closed-form oracles.
//! - [`traj`]: diverse merge-order generation, donor-to-domain synergy
//!   matrices, and across-order dispersion summaries.
//! - [`table`] / [`report`]: long-format measurement tables, CSV
//!   ingestion, and report/plot serialization.
//!
//! Every random procedure takes an explicit seed and derives
//! per-element streams from stable identifiers, so results are
//! reproducible and independent of iteration or partitioning order.

pub mod checkpoint;
pub mod error;
pub mod fit;
pub mod law;
pub mod merge;
pub mod optim;
pub mod plan;
pub mod report;
pub mod sim;
pub mod table;
pub mod traj;

pub use checkpoint::{
    check_compatible, load_checkpoint, save_checkpoint, Checkpoint, CompatReport, Dtype, Tensor,
};
pub use error::{Error, Result};
pub use fit::{
    fit_curve, fit_dispersion, fit_joint, fit_variance, r_squared, DispersionParams, FitParams,
    FitReport, WeightsMode,
};
pub use law::{
    eval_curve, eval_joint, experts_to_floor, fractional_return, marginal_gain,
    BoundedTermParams, CurveParams, FractionalReturn, JointParams,
};
pub use merge::{merge, merge_labeled, task_vector, MergeKind, MergeRecipe, MergedModel, TaskVector};
pub use plan::{plan, recommend_k, three_point_fit, PlanReport, StopRule, ThreePointInput};
pub use sim::{
    closed_form_floor, closed_form_tail, closed_form_variance_gaussian, simulate, slope_check,
    world_from_json, QuadraticWorld, SampleKind, SimRecord, SimResult,
};
pub use table::{ingest_csv, k_from_model, ColumnMap, MeasurementRow, MeasurementTable, Trajectory};
pub use traj::{
    generate_permutations, hamming, order_dispersion, synergy_matrix, DispersionRecord,
    SynergyMatrix,
};
