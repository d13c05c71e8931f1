//! Link-level simulation of an uplink massive MIMO system whose base station
//! quantizes every receive sample with one-bit ADCs.
//!
//! The crate provides:
//!
//! - [`linalg`]: dense complex kernels (PSD matrix square root, Hermitian
//!   solves, Kronecker products, the entrywise arcsin map).
//! - [`channel`]: exponentially correlated user channels evolving as a
//!   first-order Gauss-Markov process, with Jakes' model for the temporal
//!   coefficient.
//! - [`pilots`]: DFT pilots, the one-bit quantizer, and the Bussgang
//!   decomposition quantities (linear operator, arcsin-law covariance,
//!   effective-noise covariance) shared by the estimators.
//! - [`estimation`]: the single-shot Bussgang-LMMSE channel estimator and the
//!   successive Kalman estimator that exploits spatio-temporal correlation.
//! - [`rate`]: the data-stage Bussgang model, zero-forcing combining, and the
//!   per-user achievable-rate lower bound.
//! - [`harness`]: declarative experiment configs, deterministic substreamed
//!   RNG, parallel Monte-Carlo execution, and CSV/JSON output.
//!
//! Every runnable capability has a corresponding example under `examples/`;
//! the `onebit-mimo` binary exposes `run`, `validate`, and `presets`
//! subcommands on top of the same harness.

pub mod channel;
pub mod estimation;
pub mod error;
pub mod linalg;
pub mod pilots;
pub mod rate;

pub use error::{Error, Result};
