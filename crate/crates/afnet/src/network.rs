//! Equivalent single-hop MAC channel induced at a sink by the two-hop
//! amplify-and-forward topology, plus the operating-regime classifier.
//!
//! The physical network has sources 1 and 2, relays 3 and 4 and sinks 5
//! and 6. Each relay retransmits a scaled copy of its received signal
//! (amplification gain `beta_i`), so a sink observes a two-user MAC with
//! equivalent gains `h_jeq` and an equivalent noise variance `sigma_zeq`
//! that folds in the forwarded relay noise.

use thiserror::Error;

/// Errors raised while deriving the equivalent channel.
#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    /// A relay transmits (`p_i > 0`) but receives zero signal power, so its
    /// amplification gain has a zero denominator. Only possible when the
    /// relay-noise term is excluded from the gain normalization.
    #[error("relay {relay} transmits with power {power} but receives no signal")]
    DegenerateDenominator { relay: u8, power: f64 },
    /// A parameter violates its domain (negative gain, nonpositive snr, ...).
    #[error("invalid {field}: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
}

/// The eight deterministic channel gains of the two-hop topology.
///
/// Gains are real amplitudes: finite and nonnegative, zero meaning a
/// disconnected edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Topology {
    pub h13: f64,
    pub h14: f64,
    pub h23: f64,
    pub h24: f64,
    pub h35: f64,
    pub h45: f64,
    pub h36: f64,
    pub h46: f64,
}

impl Topology {
    /// All eight gains set to the same value. `Topology::uniform(1.0)` is the
    /// canonical unit-gain setup.
    pub fn uniform(gain: f64) -> Self {
        Self {
            h13: gain,
            h14: gain,
            h23: gain,
            h24: gain,
            h35: gain,
            h45: gain,
            h36: gain,
            h46: gain,
        }
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        let fields = [
            ("h13", self.h13),
            ("h14", self.h14),
            ("h23", self.h23),
            ("h24", self.h24),
            ("h35", self.h35),
            ("h45", self.h45),
            ("h36", self.h36),
            ("h46", self.h46),
        ];
        for (name, value) in fields {
            if !value.is_finite() || value < 0.0 {
                return Err(NetworkError::InvalidParameter {
                    field: name,
                    reason: format!("gain must be finite and >= 0, got {value}"),
                });
            }
        }
        Ok(())
    }

    /// Second-hop gains seen by the given sink.
    pub fn second_hop(&self, sink: Sink) -> (f64, f64) {
        match sink {
            Sink::Node5 => (self.h35, self.h45),
            Sink::Node6 => (self.h36, self.h46),
        }
    }
}

/// Transmit powers of the four transmitting nodes, linear scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerProfile {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub p4: f64,
}

impl PowerProfile {
    pub fn new(p1: f64, p2: f64, p3: f64, p4: f64) -> Self {
        Self { p1, p2, p3, p4 }
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        for (name, value) in [
            ("p1", self.p1),
            ("p2", self.p2),
            ("p3", self.p3),
            ("p4", self.p4),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(NetworkError::InvalidParameter {
                    field: name,
                    reason: format!("power must be finite and >= 0, got {value}"),
                });
            }
        }
        Ok(())
    }
}

/// Base snr and per-source multipliers.
///
/// `snr` is the common linear scale factor of the received signal power.
/// `s1` and `s2` scale each source individually; the defaults (1, 1)
/// recover the single-snr model. `include_relay_noise_in_beta` adds the
/// unit relay-noise variance to the amplification-gain denominator; the
/// default (off) matches the high-snr normalization under which the
/// closed-form noise variance of [`noise_variance_closed_form`] is exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrConfig {
    pub snr: f64,
    pub s1: f64,
    pub s2: f64,
    pub include_relay_noise_in_beta: bool,
}

impl SnrConfig {
    pub fn new(snr: f64) -> Self {
        Self {
            snr,
            s1: 1.0,
            s2: 1.0,
            include_relay_noise_in_beta: false,
        }
    }

    pub fn with_multipliers(snr: f64, s1: f64, s2: f64) -> Self {
        Self {
            snr,
            s1,
            s2,
            include_relay_noise_in_beta: false,
        }
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        for (name, value) in [("snr", self.snr), ("s1", self.s1), ("s2", self.s2)] {
            if !value.is_finite() || value <= 0.0 {
                return Err(NetworkError::InvalidParameter {
                    field: name,
                    reason: format!("must be finite and > 0, got {value}"),
                });
            }
        }
        Ok(())
    }
}

impl Default for SnrConfig {
    fn default() -> Self {
        Self::new(1.0)
    }
}

/// Which sink the equivalent channel describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sink {
    Node5,
    Node6,
}

impl Sink {
    pub fn node_id(self) -> u8 {
        match self {
            Sink::Node5 => 5,
            Sink::Node6 => 6,
        }
    }

    pub fn from_node_id(id: u8) -> Option<Self> {
        match id {
            5 => Some(Sink::Node5),
            6 => Some(Sink::Node6),
            _ => None,
        }
    }
}

impl std::fmt::Display for Sink {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.node_id())
    }
}

/// Equivalent two-user MAC channel at one sink.
///
/// `sigma_zeq = 1 + (g3*beta3)^2 + (g4*beta4)^2` where `g3, g4` are the
/// second-hop gains; `sigma_eq = sigma_zeq + snr*s2*h2eq^2*p2` is the
/// noise-plus-interference variance seen when estimating input 1 with
/// input 2 treated as noise. `snr_high` and `snr_low` are the scaled
/// per-input snrs of the cancellation chain: input 1 normalized by
/// `sigma_eq`, input 2 by `sigma_zeq`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivChannel {
    pub beta3: f64,
    pub beta4: f64,
    pub h1eq: f64,
    pub h2eq: f64,
    pub sigma_zeq: f64,
    pub sigma_eq: f64,
    pub snr_high: f64,
    pub snr_low: f64,
    pub sink: Sink,
}

impl EquivChannel {
    /// Inverse of the noise-plus-interference variance (`1/sigma_eq`).
    pub fn gamma(&self) -> f64 {
        1.0 / self.sigma_eq
    }

    /// Inverse of the equivalent noise variance (`1/sigma_zeq`).
    pub fn zeta(&self) -> f64 {
        1.0 / self.sigma_zeq
    }
}

/// Thresholds deciding when a source power counts as high or low, and how
/// close `sigma_zeq` must be to 1 for a mixed regime to be declared.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeThresholds {
    pub theta_hi: f64,
    pub theta_lo: f64,
    pub epsilon_sigma: f64,
}

impl RegimeThresholds {
    pub fn validate(&self) -> Result<(), NetworkError> {
        if !(self.theta_hi.is_finite() && self.theta_lo.is_finite() && self.theta_hi > self.theta_lo)
            || self.theta_lo <= 0.0
        {
            return Err(NetworkError::InvalidParameter {
                field: "regime thresholds",
                reason: format!(
                    "need theta_hi > theta_lo > 0, got {} and {}",
                    self.theta_hi, self.theta_lo
                ),
            });
        }
        if !self.epsilon_sigma.is_finite() || self.epsilon_sigma <= 0.0 {
            return Err(NetworkError::InvalidParameter {
                field: "epsilon_sigma",
                reason: format!("must be > 0, got {}", self.epsilon_sigma),
            });
        }
        Ok(())
    }
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        Self {
            theta_hi: 10.0,
            theta_lo: 0.1,
            epsilon_sigma: 0.05,
        }
    }
}

/// Operating-regime label of a `(p1, p2)` pair under a threshold set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeLabel {
    HighLow,
    LowHigh,
    HighHigh,
    LowLow,
    Indeterminate,
}

impl std::fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let token = match self {
            RegimeLabel::HighLow => "HighLow",
            RegimeLabel::LowHigh => "LowHigh",
            RegimeLabel::HighHigh => "HighHigh",
            RegimeLabel::LowLow => "LowLow",
            RegimeLabel::Indeterminate => "Indeterminate",
        };
        f.write_str(token)
    }
}

/// Amplification gains `(beta3, beta4)` of the two relays.
///
/// Each gain is the square root of the power ratio
/// `p_i * snr / (h1i^2*s1*p1*snr + h2i^2*s2*p2*snr [+ 1])`, the form under
/// which `sigma_zeq = 1 + (g3*beta3)^2 + (g4*beta4)^2` reproduces the
/// closed-form noise variance exactly when the relay-noise term is off.
/// A silent relay (`p_i = 0`) has gain 0 regardless of its input.
pub fn amplification_gains(
    topology: &Topology,
    powers: &PowerProfile,
    snr_cfg: &SnrConfig,
) -> Result<(f64, f64), NetworkError> {
    let beta3 = relay_gain(
        3,
        powers.p3,
        topology.h13,
        topology.h23,
        powers,
        snr_cfg,
    )?;
    let beta4 = relay_gain(
        4,
        powers.p4,
        topology.h14,
        topology.h24,
        powers,
        snr_cfg,
    )?;
    Ok((beta3, beta4))
}

fn relay_gain(
    relay: u8,
    relay_power: f64,
    h1i: f64,
    h2i: f64,
    powers: &PowerProfile,
    snr_cfg: &SnrConfig,
) -> Result<f64, NetworkError> {
    if relay_power == 0.0 {
        return Ok(0.0);
    }
    let mut denom = (h1i * h1i * snr_cfg.s1 * powers.p1 + h2i * h2i * snr_cfg.s2 * powers.p2)
        * snr_cfg.snr;
    if snr_cfg.include_relay_noise_in_beta {
        denom += 1.0;
    }
    if denom <= 0.0 {
        return Err(NetworkError::DegenerateDenominator {
            relay,
            power: relay_power,
        });
    }
    Ok((relay_power * snr_cfg.snr / denom).sqrt())
}

/// Build the equivalent MAC channel seen at `sink`.
pub fn equivalent_channel(
    topology: &Topology,
    powers: &PowerProfile,
    snr_cfg: &SnrConfig,
    sink: Sink,
) -> Result<EquivChannel, NetworkError> {
    let (beta3, beta4) = amplification_gains(topology, powers, snr_cfg)?;
    let (g3, g4) = topology.second_hop(sink);

    let h1eq = g3 * topology.h13 * beta3 + g4 * topology.h14 * beta4;
    let h2eq = g3 * topology.h23 * beta3 + g4 * topology.h24 * beta4;
    let fwd3 = g3 * beta3;
    let fwd4 = g4 * beta4;
    let sigma_zeq = 1.0 + fwd3 * fwd3 + fwd4 * fwd4;

    let sig1 = snr_cfg.snr * snr_cfg.s1 * h1eq * h1eq * powers.p1;
    let sig2 = snr_cfg.snr * snr_cfg.s2 * h2eq * h2eq * powers.p2;
    let sigma_eq = sigma_zeq + sig2;

    Ok(EquivChannel {
        beta3,
        beta4,
        h1eq,
        h2eq,
        sigma_zeq,
        sigma_eq,
        snr_high: sig1 / sigma_eq,
        snr_low: sig2 / sigma_zeq,
        sink,
    })
}

/// Closed-form equivalent noise variance at sink 5:
///
/// `1 + h35^2*p3/(h13^2*s1*p1 + h23^2*s2*p2) + h45^2*p4/(h14^2*s1*p1 + h24^2*s2*p2)`
///
/// Matches [`equivalent_channel`]'s `sigma_zeq` exactly when the relay-noise
/// term is excluded from the amplification gains. A silent relay contributes
/// no forwarded noise even if its own denominator would vanish.
pub fn noise_variance_closed_form(
    topology: &Topology,
    powers: &PowerProfile,
    snr_cfg: &SnrConfig,
) -> Result<f64, NetworkError> {
    let term = |relay: u8, g: f64, p: f64, h1i: f64, h2i: f64| -> Result<f64, NetworkError> {
        if p == 0.0 {
            return Ok(0.0);
        }
        let denom = h1i * h1i * snr_cfg.s1 * powers.p1 + h2i * h2i * snr_cfg.s2 * powers.p2;
        if denom <= 0.0 {
            return Err(NetworkError::DegenerateDenominator { relay, power: p });
        }
        Ok(g * g * p / denom)
    };
    let t3 = term(3, topology.h35, powers.p3, topology.h13, topology.h23)?;
    let t4 = term(4, topology.h45, powers.p4, topology.h14, topology.h24)?;
    Ok(1.0 + t3 + t4)
}

/// Classify the operating regime of a `(p1, p2)` pair.
///
/// A source is "high" when its power is at or above `theta_hi` and "low"
/// when at or below `theta_lo`. The mixed labels additionally require the
/// equivalent noise to have collapsed (`sigma_zeq <= 1 + epsilon_sigma`),
/// since that is what makes a mixed pair an operating point. Anything else
/// is `Indeterminate`. Pure function of its inputs.
pub fn classify_regime(
    powers: &PowerProfile,
    equiv: &EquivChannel,
    thresholds: &RegimeThresholds,
) -> RegimeLabel {
    let hi = |p: f64| p >= thresholds.theta_hi;
    let lo = |p: f64| p <= thresholds.theta_lo;
    let sigma_ok = equiv.sigma_zeq <= 1.0 + thresholds.epsilon_sigma;

    match (hi(powers.p1), lo(powers.p1), hi(powers.p2), lo(powers.p2)) {
        (true, _, true, _) => RegimeLabel::HighHigh,
        (_, true, _, true) => RegimeLabel::LowLow,
        (true, _, _, true) if sigma_ok => RegimeLabel::HighLow,
        (_, true, true, _) if sigma_ok => RegimeLabel::LowHigh,
        _ => RegimeLabel::Indeterminate,
    }
}
