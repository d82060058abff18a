//! Rate and estimation analysis for a two-source, two-relay, two-sink
//! amplify-and-forward network.
//!
//! The library models the network as an equivalent two-user MAC channel at
//! each sink and provides, on top of it:
//!
//! - closed-form Gaussian-input rates for successive-cancellation
//!   ("piggybacking") reception, the joint rate, the MAC cut-set bound and
//!   the interference rate-loss term ([`rates`]);
//! - estimation-theoretic diagnostics: conditional-mean estimators,
//!   per-input MMSE, the cross-term linking the two input estimates, and
//!   finite-difference verification of the mutual-information/MMSE
//!   derivative identity, for Gaussian and discrete inputs ([`immse`]);
//! - KKT power allocation: closed-form waterfilling for Gaussian inputs and
//!   a bisection solver driven by an arbitrary MMSE function ([`powalloc`]);
//! - deterministic grid sweeps with CSV emission and a CLI ([`sweep`]).
//!
//! All rates are in nats internally; output layers convert to bits on
//! request. The channel convention is real-valued, so the
//! mutual-information derivative identity carries a factor 1/2:
//! `dI/ds = (mmse + psi) / 2` with `s` the noise-normalized snr.
//!
//! # Example
//!
//! ```
//! use afnet::{equivalent_channel, rates, PowerProfile, Sink, SnrConfig, Topology};
//!
//! let topology = Topology::uniform(1.0);
//! let snr = SnrConfig::new(1.0);
//! // one source hot, the other cold: the forwarded relay noise collapses
//! let powers = PowerProfile::new(100.0, 0.01, 1.0, 1.0);
//! let equiv = equivalent_channel(&topology, &powers, &snr, Sink::Node5)?;
//! assert!(equiv.sigma_zeq < 1.05);
//!
//! // ... and the joint rate sits within a hundredth of a nat of the bound
//! let joint = rates::rate_joint(&equiv, &powers, &snr);
//! let cutset = rates::cutset_bound(&topology, &powers, &snr, Sink::Node5);
//! assert!(cutset - joint < 0.01);
//! # Ok::<(), afnet::NetworkError>(())
//! ```

pub mod immse;
pub mod network;
pub mod powalloc;
pub mod rates;
pub mod sweep;

pub use network::{
    amplification_gains, classify_regime, equivalent_channel, noise_variance_closed_form,
    EquivChannel, NetworkError, PowerProfile, RegimeLabel, RegimeThresholds, Sink, SnrConfig,
    Topology,
};
pub use rates::{
    cutset_bound, multicast_rates, psi_integral_closed_form, rate_joint, rate_joint_asymptotic,
    rate_r1_treat_as_noise, rate_r2_after_cancellation, rate_report, MulticastRates, RateReport,
};

/// Nats-to-bits conversion factor (`1/ln 2`).
pub const NATS_TO_BITS: f64 = std::f64::consts::LOG2_E;
