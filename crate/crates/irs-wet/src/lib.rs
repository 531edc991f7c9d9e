//! Simulator and optimization library for a reflecting-surface-aided wireless
//! energy transfer link where the transmitter learns its configuration from
//! nothing but one-bit energy comparisons fed back by the receiver.
//!
//! Two complete design schemes are provided:
//!
//! - **Channel-estimation-based**: per-pattern cutting-plane learning of the
//!   scaled effective channel ([`accpm`]), Hadamard reflection patterns with
//!   amplitude-ratio bisection and phase-offset search to stitch patterns into
//!   a cascaded channel estimate ([`estimator`]), then a closed-form transmit
//!   covariance and coordinate-descent phase design ([`beamforming`]).
//! - **Distributed-beamforming-based**: random phase perturbations kept or
//!   undone from a single comparison bit ([`distributed`]), followed by one
//!   cutting-plane pass for the transmit side.
//!
//! The physical layer lives in [`channel`], the simulated receiver in
//! [`oracle`], comparison metrics and reference schemes in [`metrics`], and a
//! batch experiment runner with CSV/SVG output in [`scenario`] and [`plot`].
//!
//! Every randomized routine takes an explicit RNG so that runs are exactly
//! reproducible; see the `examples/` directory for one runnable walkthrough
//! per capability.

pub mod accpm;
pub mod beamforming;
pub mod channel;
pub mod distributed;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod metrics;
pub mod oracle;
pub mod plot;
pub mod scenario;

pub use error::{Error, Result};
pub use linalg::{C64, CMat, CVec};
