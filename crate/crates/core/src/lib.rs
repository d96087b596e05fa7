//! Distributed high-dimensional sparse quantile regression.
//!
//! The estimator turns the non-smooth check-loss problem into a sequence of
//! kernel-weighted penalized least-squares problems. Each round, worker
//! machines upload two `(p+1)`-vectors computed from their shard; the central
//! machine combines them with a local Hessian surrogate built at a second,
//! wider bandwidth and solves one lasso problem by coordinate descent.
//!
//! Module map:
//!
//! - [`datagen`]: synthetic designs (AR(1) covariates, three noise laws) and
//!   the quantile-level ground truth.
//! - [`kernel`]: Gaussian kernel and the global/local bandwidth schedules.
//! - [`transform`]: pseudo covariates/responses and the division-free shard
//!   aggregates workers actually compute.
//! - [`select`]: picking a grid point from validation losses.
//! - [`lasso`]: coordinate-descent solver for `½βᵀAβ − βᵀa + λ|β|₁` with a
//!   KKT certificate.
//! - [`init`]: convolution-smoothed ℓ₁-penalized quantile regression used as
//!   the initial estimator.
//! - [`engine`]: the coordinator/worker loop with an in-process message bus
//!   and an exact communication ledger.
//! - [`baselines`]: averaged divide-and-conquer and the pooled single-machine
//!   estimator.
//! - [`metrics`]: ℓ₂ error, support recovery scores, check loss and PQE.
//!
//! Data-parallel loops (per-shard work, row chunks, independent local fits)
//! go through [`par`], which runs on rayon when the `parallel` feature is
//! enabled and falls back to plain iteration otherwise. Reductions are always
//! performed in a fixed order, so both modes give bit-identical results.

pub mod baselines;
pub mod coeffs;
pub mod datagen;
pub mod engine;
pub mod error;
pub mod init;
pub mod kernel;
pub mod lasso;
pub mod metrics;
pub mod par;
pub mod select;
pub mod transform;

pub use coeffs::CoefficientVector;
pub use datagen::{Dataset, DatasetShard};
pub use error::{DhsqrError, Result};
pub use par::Execution;
