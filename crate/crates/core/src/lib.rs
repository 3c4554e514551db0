//! Group-fairness auditing for survival models.
//!
//! The crate covers the full pipeline needed to ask "does this survival
//! measure notice bias?":
//!
//! * [`data`] – the `(X, T, Δ, S)` survival tuple, CSV ingestion, a Weibull
//!   synthetic generator and seeded split/fold primitives.
//! * [`km`] – Kaplan–Meier / Nelson–Aalen step curves, including the
//!   censoring distribution used for IPCW weights.
//! * [`rsf`] – a random survival forest with log-rank splitting that emits
//!   both distribution and risk predictions.
//! * [`metrics`] – eight survival measures (scoring rules, concordance,
//!   calibration) and ERV standardisation against a Kaplan–Meier baseline.
//! * [`fairness`] – per-group losses and the gap `F_L = |L_A - L_D|`.
//! * [`biasing`] – permutation / undersampling bias injection and the
//!   repeated split / cross-validation procedure that turns a bias
//!   proportion `σ` into an `F_L` value.
//! * [`experiment`] – σ sweeps, Spearman / OLS / Holm statistics and report
//!   tables.

pub mod biasing;
pub mod data;
pub mod error;
pub mod experiment;
pub mod fairness;
pub mod km;
pub mod metrics;
pub mod rsf;
pub mod seed;

mod par;

pub use error::{Error, Result};
