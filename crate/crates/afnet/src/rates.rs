//! Closed-form Gaussian-input information measures on the equivalent MAC
//! channel: per-input rates of the successive-cancellation chain, the joint
//! rate, the cut-set bound, its high-power asymptote, and the interference
//! rate-loss term.
//!
//! All values are in nats. Two distinct "gap" notions are exposed and never
//! conflated: `gap_cutset` is the cut-set bound minus the joint rate, while
//! `psi_integral` is the (signed, nonpositive for independent inputs) rate
//! loss of treating input 2 as noise when estimating input 1.

use crate::network::{
    classify_regime, equivalent_channel, EquivChannel, NetworkError, PowerProfile, RegimeLabel,
    RegimeThresholds, Sink, SnrConfig, Topology,
};

/// All closed-form rate quantities at one sink for one power pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateReport {
    pub sink: Sink,
    /// Rate of input 1 with input 2 treated as noise, nats.
    pub r1_tin: f64,
    /// Rate of input 2 after perfect cancellation of input 1, nats.
    pub r2_sic: f64,
    /// Joint (sum) rate, nats. Equals `r1_tin + r2_sic` by the chain rule.
    pub joint: f64,
    /// MAC cut-set bound at this sink, nats.
    pub cutset: f64,
    /// `cutset - joint`, nonnegative up to rounding.
    pub gap_cutset: f64,
    /// Interference rate loss `I(x1;y) - I(x1;y|x2)`, nats, <= 0.
    pub psi_integral: f64,
    pub regime: RegimeLabel,
}

/// Per-sink reports plus the multicast minima across the two sinks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MulticastRates {
    pub sink5: RateReport,
    pub sink6: RateReport,
    pub min_joint: f64,
    pub min_cutset: f64,
}

/// Received signal powers `(a, b) = (snr*s1*h1eq^2*p1, snr*s2*h2eq^2*p2)`.
fn signal_terms(equiv: &EquivChannel, powers: &PowerProfile, snr_cfg: &SnrConfig) -> (f64, f64) {
    let a = snr_cfg.snr * snr_cfg.s1 * equiv.h1eq * equiv.h1eq * powers.p1;
    let b = snr_cfg.snr * snr_cfg.s2 * equiv.h2eq * equiv.h2eq * powers.p2;
    (a, b)
}

/// Rate of input 1 while input 2 is treated as noise:
/// `ln(1 + a / (sigma_zeq + b)) / 2`.
pub fn rate_r1_treat_as_noise(
    equiv: &EquivChannel,
    powers: &PowerProfile,
    snr_cfg: &SnrConfig,
) -> f64 {
    let (a, b) = signal_terms(equiv, powers, snr_cfg);
    0.5 * (1.0 + a / (equiv.sigma_zeq + b)).ln()
}

/// Rate of input 2 assuming input 1 has been perfectly removed:
/// `ln(1 + b / sigma_zeq) / 2`.
pub fn rate_r2_after_cancellation(
    equiv: &EquivChannel,
    powers: &PowerProfile,
    snr_cfg: &SnrConfig,
) -> f64 {
    let (_, b) = signal_terms(equiv, powers, snr_cfg);
    0.5 * (1.0 + b / equiv.sigma_zeq).ln()
}

/// Joint rate of both inputs: `ln(1 + (a + b) / sigma_zeq) / 2`.
pub fn rate_joint(equiv: &EquivChannel, powers: &PowerProfile, snr_cfg: &SnrConfig) -> f64 {
    let (a, b) = signal_terms(equiv, powers, snr_cfg);
    0.5 * (1.0 + (a + b) / equiv.sigma_zeq).ln()
}

/// High-source-power limit of the joint rate at sink 5:
/// `ln(1 + (h35*sqrt(p3*snr) + h45*sqrt(p4*snr))^2) / 2`.
///
/// Valid as the limit of [`rate_joint`] when `sigma_zeq -> 1`.
pub fn rate_joint_asymptotic(
    topology: &Topology,
    powers: &PowerProfile,
    snr_cfg: &SnrConfig,
) -> f64 {
    cutset_bound(topology, powers, snr_cfg, Sink::Node5)
}

/// MAC cut-set bound at `sink`.
///
/// Coincides with the joint-rate asymptote; kept as a distinct named
/// operation so the gap to the bound is always stated against the bound.
pub fn cutset_bound(
    topology: &Topology,
    powers: &PowerProfile,
    snr_cfg: &SnrConfig,
    sink: Sink,
) -> f64 {
    let (g3, g4) = topology.second_hop(sink);
    let amplitude = g3 * (powers.p3 * snr_cfg.snr).sqrt() + g4 * (powers.p4 * snr_cfg.snr).sqrt();
    0.5 * (1.0 + amplitude * amplitude).ln()
}

/// Interference rate loss `I(x1;y) - I(x1;y|x2)`, nats.
///
/// Equals `rate_joint - I(x1;y|x2) - rate_r2_after_cancellation` by the
/// chain rule; nonpositive for independent inputs and zero when input 2 is
/// silent.
pub fn psi_integral_closed_form(
    equiv: &EquivChannel,
    powers: &PowerProfile,
    snr_cfg: &SnrConfig,
) -> f64 {
    let (a, b) = signal_terms(equiv, powers, snr_cfg);
    if b == 0.0 {
        return 0.0;
    }
    let r1_tin = 0.5 * (1.0 + a / (equiv.sigma_zeq + b)).ln();
    let r1_conditional = 0.5 * (1.0 + a / equiv.sigma_zeq).ln();
    r1_tin - r1_conditional
}

/// Full rate report at one sink, regime-labelled with the given thresholds.
pub fn rate_report(
    topology: &Topology,
    powers: &PowerProfile,
    snr_cfg: &SnrConfig,
    sink: Sink,
    thresholds: &RegimeThresholds,
) -> Result<RateReport, NetworkError> {
    let equiv = equivalent_channel(topology, powers, snr_cfg, sink)?;
    let r1_tin = rate_r1_treat_as_noise(&equiv, powers, snr_cfg);
    let r2_sic = rate_r2_after_cancellation(&equiv, powers, snr_cfg);
    let joint = rate_joint(&equiv, powers, snr_cfg);
    let cutset = cutset_bound(topology, powers, snr_cfg, sink);
    Ok(RateReport {
        sink,
        r1_tin,
        r2_sic,
        joint,
        cutset,
        gap_cutset: cutset - joint,
        psi_integral: psi_integral_closed_form(&equiv, powers, snr_cfg),
        regime: classify_regime(powers, &equiv, thresholds),
    })
}

/// Evaluate both sinks and take the element-wise multicast minima.
///
/// Uses the default regime thresholds; build per-sink reports with
/// [`rate_report`] to control them.
pub fn multicast_rates(
    topology: &Topology,
    powers: &PowerProfile,
    snr_cfg: &SnrConfig,
) -> Result<MulticastRates, NetworkError> {
    let thresholds = RegimeThresholds::default();
    let sink5 = rate_report(topology, powers, snr_cfg, Sink::Node5, &thresholds)?;
    let sink6 = rate_report(topology, powers, snr_cfg, Sink::Node6, &thresholds)?;
    Ok(MulticastRates {
        sink5,
        sink6,
        min_joint: sink5.joint.min(sink6.joint),
        min_cutset: sink5.cutset.min(sink6.cutset),
    })
}
