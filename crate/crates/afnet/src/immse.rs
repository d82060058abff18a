//! Estimation-theoretic core: conditional-mean estimators, per-input MMSE,
//! the cross-term coupling the two input estimates, and numerical
//! verification of the mutual-information/MMSE derivative identity.
//!
//! # Conventions
//!
//! The channel is real-valued and rates are in nats, so the derivative
//! identity carries a factor 1/2: `dI/ds = (mmse + psi) / 2`, where `s` is
//! the noise-normalized snr of the estimation stage. All estimation happens
//! in the `sigma_zeq`-normalized model
//!
//! `y = sqrt(g1) u1 + sqrt(g2) u2 + z`,  `z ~ N(0, 1)`,
//!
//! with unit-power inputs `u_j` and per-input normalized snrs
//! `g_j = snr * s_j * h_jeq^2 * p_j / sigma_zeq`. Under successive
//! cancellation the first stage additionally folds the untreated input into
//! the noise, which rescales its snr by `sigma_eq` instead (`snr_high`).
//!
//! Under joint estimation the cross-term `psi` is the minus-signed
//! cross-correlation of the two conditional-mean estimates; by the
//! orthogonality principle this equals the cross-correlation of the two
//! estimation errors for independent inputs. Under successive cancellation
//! the surviving cross-term is the error cross-correlation, which vanishes
//! identically when the second stage subtracts the true first input, so the
//! reported `psi` is computed in error form there.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::network::{EquivChannel, PowerProfile, SnrConfig};
use crate::rates;

/// Minimum Monte-Carlo sample count accepted by the estimators.
pub const SAMPLE_FLOOR: usize = 10_000;

/// Default Monte-Carlo sample count.
pub const DEFAULT_SAMPLES: usize = 100_000;

/// Default Monte-Carlo seed; per-scenario substreams are derived from it.
pub const DEFAULT_SEED: u64 = 42;

const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Error, PartialEq)]
pub enum ImmseError {
    #[error("{samples} samples requested, floor is {floor}")]
    InsufficientSamples { samples: usize, floor: usize },
    #[error("non-finite value encountered in {context}")]
    NonFiniteSample { context: &'static str },
    #[error("central-difference truncation {truncation:e} exceeds half the tolerance {tolerance:e} at step {step:e}")]
    StepTooLarge {
        step: f64,
        truncation: f64,
        tolerance: f64,
    },
    #[error("invalid distribution: {reason}")]
    InvalidDistribution { reason: String },
}

/// Input distribution of one source, normalized to unit power.
///
/// The transmit power is carried separately by the power profile, so a
/// discrete constellation must have unit second moment.
#[derive(Debug, Clone, PartialEq)]
pub enum InputDistribution {
    Gaussian,
    /// Constellation points as `(amplitude, probability)` pairs.
    Discrete(Vec<(f64, f64)>),
}

impl InputDistribution {
    pub fn gaussian() -> Self {
        InputDistribution::Gaussian
    }

    /// Equiprobable antipodal constellation `{-1, +1}`.
    pub fn bpsk() -> Self {
        InputDistribution::Discrete(vec![(-1.0, 0.5), (1.0, 0.5)])
    }

    /// Validated discrete constellation: probabilities sum to 1 (1e-12) and
    /// the second moment is 1 (1e-9).
    pub fn discrete(points: Vec<(f64, f64)>) -> Result<Self, ImmseError> {
        if points.is_empty() {
            return Err(ImmseError::InvalidDistribution {
                reason: "constellation is empty".into(),
            });
        }
        let mut prob_sum = 0.0;
        let mut second_moment = 0.0;
        for &(x, p) in &points {
            if !x.is_finite() || !p.is_finite() || p < 0.0 {
                return Err(ImmseError::InvalidDistribution {
                    reason: format!("bad point ({x}, {p})"),
                });
            }
            prob_sum += p;
            second_moment += p * x * x;
        }
        if (prob_sum - 1.0).abs() > 1e-12 {
            return Err(ImmseError::InvalidDistribution {
                reason: format!("probabilities sum to {prob_sum}, expected 1"),
            });
        }
        if (second_moment - 1.0).abs() > 1e-9 {
            return Err(ImmseError::InvalidDistribution {
                reason: format!("second moment is {second_moment}, expected 1"),
            });
        }
        Ok(InputDistribution::Discrete(points))
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, InputDistribution::Gaussian)
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            InputDistribution::Gaussian => StandardNormal.sample(rng),
            InputDistribution::Discrete(points) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for &(x, p) in points {
                    acc += p;
                    if u < acc {
                        return x;
                    }
                }
                points.last().expect("validated nonempty").0
            }
        }
    }
}

/// How the sink forms its input estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimationScheme {
    /// Both inputs estimated jointly from the raw observation.
    Joint,
    /// Successive cancellation: the first input is estimated with the other
    /// treated as Gaussian noise, then subtracted before the second stage.
    Sic(SicOrder),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SicOrder {
    FirstThenSecond,
    SecondThenFirst,
}

/// Monte-Carlo MMSE decomposition for one scenario and scheme.
///
/// `mmse1` and `mmse2` are the weighted per-input terms `a_j * E_j` with
/// `a_j = s_j * h_jeq^2 * p_j`; `psi` is the cross-term and
/// `total_derivative = (mmse1 + mmse2 + psi) / 2` estimates the derivative
/// of the scheme's mutual information in its normalized-snr
/// parameterization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmseReport {
    pub mmse1: f64,
    pub mmse2: f64,
    pub psi: f64,
    pub total_derivative: f64,
    pub mmse1_stderr: f64,
    pub mmse2_stderr: f64,
    pub psi_stderr: f64,
    pub total_stderr: f64,
    pub sample_count: usize,
    pub seed: u64,
}

/// Mutual-information estimate; `per_input` carries the per-stage split
/// mapped back to input indices under successive cancellation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiReport {
    pub nats: f64,
    pub stderr: f64,
    pub per_input: Option<PerInputMi>,
    pub sample_count: usize,
    pub seed: u64,
    pub closed_form: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerInputMi {
    pub input1: f64,
    pub input1_stderr: f64,
    pub input2: f64,
    pub input2_stderr: f64,
}

/// Closed-form Gaussian derivative decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianDerivative {
    pub mmse1: f64,
    pub mmse2: f64,
    pub psi: f64,
    /// `(mmse1 + mmse2 + psi) / 2`.
    pub value: f64,
}

/// Outcome of a finite-difference check of the derivative identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityCheck {
    pub derivative: f64,
    pub finite_difference: f64,
    pub residual: f64,
    /// Pass threshold actually applied: the caller's tolerance for the
    /// deterministic branch, three combined standard errors for Monte-Carlo.
    pub threshold: f64,
    pub passed: bool,
    pub monte_carlo: bool,
    pub step: f64,
}

/// Scenario bundle for the Monte-Carlo estimators and identity checks.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub equiv: EquivChannel,
    pub powers: PowerProfile,
    pub snr: SnrConfig,
    pub dist1: InputDistribution,
    pub dist2: InputDistribution,
    pub samples: usize,
    pub seed: u64,
}

/// Unit-power Gaussian MMSE at the given scaled snr: `1 / (1 + s)`.
pub fn gaussian_mmse(scaled_snr: f64) -> f64 {
    1.0 / (1.0 + scaled_snr)
}

/// Linear conditional-mean estimate `sqrt(s)/(1+s) * y` for a unit-power
/// Gaussian input observed through `y = sqrt(s) x + z` with unit noise.
pub fn gaussian_conditional_mean(scaled_snr: f64, observation: f64) -> f64 {
    scaled_snr.sqrt() / (1.0 + scaled_snr) * observation
}

/// Posterior-mean estimate of a discrete input observed through
/// `y = sqrt(s) x + z` with unit Gaussian noise, stabilized by max
/// subtraction in the exponent. For BPSK this is `tanh(sqrt(s) y)`.
///
/// Delegates to [`gaussian_conditional_mean`] for a Gaussian input.
pub fn discrete_conditional_mean(
    dist: &InputDistribution,
    scaled_snr: f64,
    observation: f64,
) -> f64 {
    match dist {
        InputDistribution::Gaussian => gaussian_conditional_mean(scaled_snr, observation),
        InputDistribution::Discrete(points) => {
            let root = scaled_snr.sqrt();
            let mut max_logw = f64::NEG_INFINITY;
            for &(x, p) in points {
                if p == 0.0 {
                    continue;
                }
                let d = observation - root * x;
                let logw = p.ln() - 0.5 * d * d;
                if logw > max_logw {
                    max_logw = logw;
                }
            }
            let mut num = 0.0;
            let mut den = 0.0;
            for &(x, p) in points {
                if p == 0.0 {
                    continue;
                }
                let d = observation - root * x;
                let w = (p.ln() - 0.5 * d * d - max_logw).exp();
                num += x * w;
                den += w;
            }
            num / den
        }
    }
}

/// Deterministic unit-power MMSE of a distribution in AWGN at the given
/// scaled snr. Gaussian inputs use the closed form; discrete constellations
/// are integrated by composite Simpson over the observation density.
///
/// This backs the power-allocation solvers for non-Gaussian inputs and is
/// intentionally a different numerical route from any quadrature used to
/// cross-check it.
pub fn awgn_mmse(dist: &InputDistribution, scaled_snr: f64) -> f64 {
    match dist {
        InputDistribution::Gaussian => gaussian_mmse(scaled_snr),
        InputDistribution::Discrete(points) => {
            let root = scaled_snr.sqrt();
            let lo = points
                .iter()
                .map(|&(x, _)| root * x)
                .fold(f64::INFINITY, f64::min)
                - 10.0;
            let hi = points
                .iter()
                .map(|&(x, _)| root * x)
                .fold(f64::NEG_INFINITY, f64::max)
                + 10.0;
            let n = 4000; // even
            let h = (hi - lo) / n as f64;
            let integrand = |y: f64| {
                let mut density = 0.0;
                for &(x, p) in points {
                    let d = y - root * x;
                    density += p * (-0.5 * d * d).exp();
                }
                density /= (2.0 * std::f64::consts::PI).sqrt();
                let estimate = discrete_conditional_mean(dist, scaled_snr, y);
                density * estimate * estimate
            };
            let mut acc = integrand(lo) + integrand(hi);
            for i in 1..n {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * integrand(lo + i as f64 * h);
            }
            let estimate_power = acc * h / 3.0;
            (1.0 - estimate_power).max(0.0)
        }
    }
}

/// Per-input normalized snrs `(g1, g2)` and the mmse weights `(a, b)`.
fn normalized_terms(
    equiv: &EquivChannel,
    powers: &PowerProfile,
    snr_cfg: &SnrConfig,
) -> (f64, f64, f64, f64) {
    let a = snr_cfg.s1 * equiv.h1eq * equiv.h1eq * powers.p1;
    let b = snr_cfg.s2 * equiv.h2eq * equiv.h2eq * powers.p2;
    let s = snr_cfg.snr / equiv.sigma_zeq;
    (a, b, a * s, b * s)
}

/// Closed-form cross-term for jointly estimated Gaussian inputs:
/// `-2ab*s / (1 + s(a + b))` with `a = s1*h1eq^2*p1`, `b = s2*h2eq^2*p2`
/// and `s = snr / sigma_zeq`.
pub fn psi_closed_form_gaussian_joint(
    equiv: &EquivChannel,
    powers: &PowerProfile,
    snr_cfg: &SnrConfig,
) -> f64 {
    let (a, b, _, _) = normalized_terms(equiv, powers, snr_cfg);
    let s = snr_cfg.snr / equiv.sigma_zeq;
    -2.0 * a * b * s / (1.0 + s * (a + b))
}

/// Closed-form Gaussian derivative decomposition for a scheme.
///
/// The derivative is taken in the noise-normalized snr of each estimation
/// stage: `sigma_zeq`-normalized for joint estimation and for the cancelled
/// stage, `sigma_eq`-normalized for the stage that treats the other input
/// as noise.
pub fn gaussian_derivative_parts(
    equiv: &EquivChannel,
    powers: &PowerProfile,
    snr_cfg: &SnrConfig,
    scheme: EstimationScheme,
) -> GaussianDerivative {
    let (a, b, g1, g2) = normalized_terms(equiv, powers, snr_cfg);
    let (mmse1, mmse2, psi) = match scheme {
        EstimationScheme::Joint => {
            let denom = 1.0 + g1 + g2;
            let mmse1 = a * (1.0 + g2) / denom;
            let mmse2 = b * (1.0 + g1) / denom;
            (mmse1, mmse2, psi_closed_form_gaussian_joint(equiv, powers, snr_cfg))
        }
        EstimationScheme::Sic(SicOrder::FirstThenSecond) => {
            let mmse1 = a * gaussian_mmse(g1 / (1.0 + g2));
            let mmse2 = b * gaussian_mmse(g2);
            (mmse1, mmse2, 0.0)
        }
        EstimationScheme::Sic(SicOrder::SecondThenFirst) => {
            let mmse1 = a * gaussian_mmse(g1);
            let mmse2 = b * gaussian_mmse(g2 / (1.0 + g1));
            (mmse1, mmse2, 0.0)
        }
    };
    GaussianDerivative {
        mmse1,
        mmse2,
        psi,
        value: 0.5 * (mmse1 + mmse2 + psi),
    }
}

/// Closed-form derivative of the scheme's mutual information for Gaussian
/// inputs, `(mmse + psi) / 2`. Discrete inputs route through
/// [`mmse_monte_carlo`], whose `total_derivative` is the estimate of the
/// same quantity.
pub fn mi_derivative(
    equiv: &EquivChannel,
    powers: &PowerProfile,
    snr_cfg: &SnrConfig,
    scheme: EstimationScheme,
) -> f64 {
    gaussian_derivative_parts(equiv, powers, snr_cfg, scheme).value
}

// ── Monte-Carlo machinery ──────────────────────────────────────────────────

/// Running mean/variance accumulator (Welford).
#[derive(Debug, Clone, Copy, Default)]
struct Stats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Stats {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn mean(&self) -> f64 {
        self.mean
    }

    fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.m2 / ((self.n - 1) as f64 * self.n as f64)).sqrt()
    }
}

fn fnv1a(mut hash: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn hash_f64(hash: u64, x: f64) -> u64 {
    fnv1a(hash, &x.to_bits().to_le_bytes())
}

fn hash_dist(mut hash: u64, dist: &InputDistribution) -> u64 {
    match dist {
        InputDistribution::Gaussian => fnv1a(hash, &[0]),
        InputDistribution::Discrete(points) => {
            hash = fnv1a(hash, &[1]);
            for &(x, p) in points {
                hash = hash_f64(hash, x);
                hash = hash_f64(hash, p);
            }
            hash
        }
    }
}

/// Stable per-scenario stream id, so grid points draw independent
/// substreams regardless of evaluation order.
fn scenario_stream(g1: f64, g2: f64, dist1: &InputDistribution, dist2: &InputDistribution) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325; // FNV offset basis
    h = hash_f64(h, g1);
    h = hash_f64(h, g2);
    h = hash_dist(h, dist1);
    hash_dist(h, dist2)
}

fn substream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One mixture component of an observation density, variance-aware.
#[derive(Debug, Clone, Copy)]
struct Component {
    log_weight: f64,
    mean: f64,
    var: f64,
}

fn log_density(y: f64, shift: f64, comps: &[Component]) -> f64 {
    let mut max_term = f64::NEG_INFINITY;
    for c in comps {
        let d = y - shift - c.mean;
        let t = c.log_weight - 0.5 * d * d / c.var - 0.5 * (LN_2PI + c.var.ln());
        if t > max_term {
            max_term = t;
        }
    }
    if max_term == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut acc = 0.0;
    for c in comps {
        let d = y - shift - c.mean;
        let t = c.log_weight - 0.5 * d * d / c.var - 0.5 * (LN_2PI + c.var.ln());
        acc += (t - max_term).exp();
    }
    max_term + acc.ln()
}

/// Mixture components of `sqrt(g) u + noise(var)` for `u ~ dist`.
fn marginal_components(dist: &InputDistribution, g: f64, var: f64) -> Vec<Component> {
    match dist {
        InputDistribution::Gaussian => vec![Component {
            log_weight: 0.0,
            mean: 0.0,
            var: var + g,
        }],
        InputDistribution::Discrete(points) => points
            .iter()
            .filter(|&&(_, p)| p > 0.0)
            .map(|&(x, p)| Component {
                log_weight: p.ln(),
                mean: g.sqrt() * x,
                var,
            })
            .collect(),
    }
}

/// Exact conditional means of both inputs from the joint posterior given
/// `y = sqrt(g1) u1 + sqrt(g2) u2 + z`.
fn joint_conditional_means(
    dist1: &InputDistribution,
    dist2: &InputDistribution,
    g1: f64,
    g2: f64,
    y: f64,
) -> (f64, f64) {
    use InputDistribution::{Discrete, Gaussian};
    match (dist1, dist2) {
        (Gaussian, Gaussian) => {
            let denom = 1.0 + g1 + g2;
            (g1.sqrt() * y / denom, g2.sqrt() * y / denom)
        }
        (Discrete(p1), Discrete(p2)) => {
            let (r1, r2) = (g1.sqrt(), g2.sqrt());
            let mut max_logw = f64::NEG_INFINITY;
            for &(x1, w1) in p1 {
                for &(x2, w2) in p2 {
                    if w1 == 0.0 || w2 == 0.0 {
                        continue;
                    }
                    let d = y - r1 * x1 - r2 * x2;
                    let logw = w1.ln() + w2.ln() - 0.5 * d * d;
                    if logw > max_logw {
                        max_logw = logw;
                    }
                }
            }
            let (mut num1, mut num2, mut den) = (0.0, 0.0, 0.0);
            for &(x1, w1) in p1 {
                for &(x2, w2) in p2 {
                    if w1 == 0.0 || w2 == 0.0 {
                        continue;
                    }
                    let d = y - r1 * x1 - r2 * x2;
                    let w = (w1.ln() + w2.ln() - 0.5 * d * d - max_logw).exp();
                    num1 += x1 * w;
                    num2 += x2 * w;
                    den += w;
                }
            }
            (num1 / den, num2 / den)
        }
        (Discrete(points), Gaussian) => {
            let (u1, u2) = discrete_gaussian_means(points, g1, g2, y);
            (u1, u2)
        }
        (Gaussian, Discrete(points)) => {
            let (u2, u1) = discrete_gaussian_means(points, g2, g1, y);
            (u1, u2)
        }
    }
}

/// Conditional means when the first listed input is discrete (gain `gd`)
/// and the other is Gaussian (gain `gg`): the Gaussian input is
/// marginalized into the per-point likelihood variance.
fn discrete_gaussian_means(points: &[(f64, f64)], gd: f64, gg: f64, y: f64) -> (f64, f64) {
    let rd = gd.sqrt();
    let var = 1.0 + gg;
    let mut max_logw = f64::NEG_INFINITY;
    for &(x, p) in points {
        if p == 0.0 {
            continue;
        }
        let d = y - rd * x;
        let logw = p.ln() - 0.5 * d * d / var;
        if logw > max_logw {
            max_logw = logw;
        }
    }
    let (mut num_d, mut num_g, mut den) = (0.0, 0.0, 0.0);
    for &(x, p) in points {
        if p == 0.0 {
            continue;
        }
        let d = y - rd * x;
        let w = (p.ln() - 0.5 * d * d / var - max_logw).exp();
        num_d += x * w;
        // E[u_gaussian | y, x] = sqrt(gg) (y - sqrt(gd) x) / (1 + gg)
        num_g += gg.sqrt() * d / var * w;
        den += w;
    }
    (num_d / den, num_g / den)
}

fn conditional_mean(dist: &InputDistribution, scaled_snr: f64, y: f64) -> f64 {
    match dist {
        InputDistribution::Gaussian => gaussian_conditional_mean(scaled_snr, y),
        d @ InputDistribution::Discrete(_) => discrete_conditional_mean(d, scaled_snr, y),
    }
}

fn ensure_samples(samples: usize) -> Result<(), ImmseError> {
    if samples < SAMPLE_FLOOR {
        return Err(ImmseError::InsufficientSamples {
            samples,
            floor: SAMPLE_FLOOR,
        });
    }
    Ok(())
}

/// Monte-Carlo estimate of the per-input MMSE terms and the cross-term.
///
/// Draws `(u1, u2, z)` from the `sigma_zeq`-normalized model. Under
/// successive cancellation the first stage estimates its input with the
/// other treated as Gaussian noise of matched variance, and the second
/// stage sees the observation after exact subtraction of the true first
/// input. Reports are bit-identical for identical seeds; the RNG substream
/// is derived from `(seed, scenario)` so grid points are reproducible
/// independently of evaluation order.
#[allow(clippy::too_many_arguments)]
pub fn mmse_monte_carlo(
    dist1: &InputDistribution,
    dist2: &InputDistribution,
    equiv: &EquivChannel,
    powers: &PowerProfile,
    snr_cfg: &SnrConfig,
    scheme: EstimationScheme,
    samples: usize,
    seed: u64,
) -> Result<MmseReport, ImmseError> {
    ensure_samples(samples)?;
    let (a, b, g1, g2) = normalized_terms(equiv, powers, snr_cfg);
    let mut rng = substream_rng(seed, scenario_stream(g1, g2, dist1, dist2));

    let (r1, r2) = (g1.sqrt(), g2.sqrt());
    let cross = 2.0 * (a * b).sqrt();
    let mut stats = [Stats::default(); 4]; // mmse1, mmse2, psi, total

    for _ in 0..samples {
        let u1 = dist1.sample(&mut rng);
        let u2 = dist2.sample(&mut rng);
        let z: f64 = StandardNormal.sample(&mut rng);
        let y = r1 * u1 + r2 * u2 + z;

        let (e1, e2, psi_i) = match scheme {
            EstimationScheme::Joint => {
                let (u1_hat, u2_hat) = joint_conditional_means(dist1, dist2, g1, g2, y);
                (u1 - u1_hat, u2 - u2_hat, -cross * u1_hat * u2_hat)
            }
            EstimationScheme::Sic(SicOrder::FirstThenSecond) => {
                let u1_hat =
                    conditional_mean(dist1, g1 / (1.0 + g2), y / (1.0 + g2).sqrt());
                let u2_hat = conditional_mean(dist2, g2, y - r1 * u1);
                let (e1, e2) = (u1 - u1_hat, u2 - u2_hat);
                (e1, e2, cross * e1 * e2)
            }
            EstimationScheme::Sic(SicOrder::SecondThenFirst) => {
                let u2_hat =
                    conditional_mean(dist2, g2 / (1.0 + g1), y / (1.0 + g1).sqrt());
                let u1_hat = conditional_mean(dist1, g1, y - r2 * u2);
                let (e1, e2) = (u1 - u1_hat, u2 - u2_hat);
                (e1, e2, cross * e1 * e2)
            }
        };

        let m1 = a * e1 * e1;
        let m2 = b * e2 * e2;
        let total = 0.5 * (m1 + m2 + psi_i);
        if !total.is_finite() {
            return Err(ImmseError::NonFiniteSample {
                context: "mmse_monte_carlo",
            });
        }
        stats[0].push(m1);
        stats[1].push(m2);
        stats[2].push(psi_i);
        stats[3].push(total);
    }

    Ok(MmseReport {
        mmse1: stats[0].mean(),
        mmse2: stats[1].mean(),
        psi: stats[2].mean(),
        total_derivative: stats[3].mean(),
        mmse1_stderr: stats[0].stderr(),
        mmse2_stderr: stats[1].stderr(),
        psi_stderr: stats[2].stderr(),
        total_stderr: stats[3].stderr(),
        sample_count: samples,
        seed,
    })
}

/// Mutual information of the scheme, in nats.
///
/// Gaussian/Gaussian scenarios short-circuit to the closed forms. Otherwise
/// the estimate is a sample average of log-likelihood ratios with the true
/// mixture densities: the joint rate under [`EstimationScheme::Joint`], and
/// the sum of the first-stage (interference-present) and second-stage
/// (post-subtraction) rates under successive cancellation, so the
/// cancellation order moves the per-input split but not the expected sum.
#[allow(clippy::too_many_arguments)]
pub fn mi_monte_carlo(
    dist1: &InputDistribution,
    dist2: &InputDistribution,
    equiv: &EquivChannel,
    powers: &PowerProfile,
    snr_cfg: &SnrConfig,
    scheme: EstimationScheme,
    samples: usize,
    seed: u64,
) -> Result<MiReport, ImmseError> {
    ensure_samples(samples)?;
    let (_, _, g1, g2) = normalized_terms(equiv, powers, snr_cfg);

    if dist1.is_gaussian() && dist2.is_gaussian() {
        let report = match scheme {
            EstimationScheme::Joint => MiReport {
                nats: rates::rate_joint(equiv, powers, snr_cfg),
                stderr: 0.0,
                per_input: None,
                sample_count: samples,
                seed,
                closed_form: true,
            },
            EstimationScheme::Sic(order) => {
                let (i1, i2) = match order {
                    SicOrder::FirstThenSecond => (
                        rates::rate_r1_treat_as_noise(equiv, powers, snr_cfg),
                        rates::rate_r2_after_cancellation(equiv, powers, snr_cfg),
                    ),
                    SicOrder::SecondThenFirst => (
                        0.5 * (1.0 + g1).ln(),
                        0.5 * (1.0 + g2 / (1.0 + g1)).ln(),
                    ),
                };
                MiReport {
                    nats: i1 + i2,
                    stderr: 0.0,
                    per_input: Some(PerInputMi {
                        input1: i1,
                        input1_stderr: 0.0,
                        input2: i2,
                        input2_stderr: 0.0,
                    }),
                    sample_count: samples,
                    seed,
                    closed_form: true,
                }
            }
        };
        return Ok(report);
    }

    let mut rng = substream_rng(seed, scenario_stream(g1, g2, dist1, dist2));
    let (r1, r2) = (g1.sqrt(), g2.sqrt());
    let marginal = joint_marginal_components(dist1, dist2, g1, g2);
    // residual mixture of the trailing input, also the leading stage's
    // conditional density once shifted by the known lead contribution
    let trail_mixture = match scheme {
        EstimationScheme::Joint => Vec::new(),
        EstimationScheme::Sic(SicOrder::FirstThenSecond) => marginal_components(dist2, g2, 1.0),
        EstimationScheme::Sic(SicOrder::SecondThenFirst) => marginal_components(dist1, g1, 1.0),
    };
    let mut total = Stats::default();
    let mut stage_a = Stats::default();
    let mut stage_b = Stats::default();

    for _ in 0..samples {
        let u1 = dist1.sample(&mut rng);
        let u2 = dist2.sample(&mut rng);
        let z: f64 = StandardNormal.sample(&mut rng);
        let y = r1 * u1 + r2 * u2 + z;

        match scheme {
            EstimationScheme::Joint => {
                let cond = -0.5 * z * z - 0.5 * LN_2PI;
                let llr = cond - log_density(y, 0.0, &marginal);
                if !llr.is_finite() {
                    return Err(ImmseError::NonFiniteSample {
                        context: "mi_monte_carlo joint",
                    });
                }
                total.push(llr);
            }
            EstimationScheme::Sic(order) => {
                // first stage: true rate of the leading input with the
                // trailing one as (mixture) interference; second stage:
                // single-input rate on the residual after exact subtraction
                let lead_term = match order {
                    SicOrder::FirstThenSecond => r1 * u1,
                    SicOrder::SecondThenFirst => r2 * u2,
                };
                let first =
                    log_density(y, lead_term, &trail_mixture) - log_density(y, 0.0, &marginal);
                let resid = y - lead_term;
                let second =
                    -0.5 * z * z - 0.5 * LN_2PI - log_density(resid, 0.0, &trail_mixture);
                if !first.is_finite() || !second.is_finite() {
                    return Err(ImmseError::NonFiniteSample {
                        context: "mi_monte_carlo sic",
                    });
                }
                stage_a.push(first);
                stage_b.push(second);
                total.push(first + second);
            }
        }
    }

    let per_input = match scheme {
        EstimationScheme::Joint => None,
        EstimationScheme::Sic(SicOrder::FirstThenSecond) => Some(PerInputMi {
            input1: stage_a.mean(),
            input1_stderr: stage_a.stderr(),
            input2: stage_b.mean(),
            input2_stderr: stage_b.stderr(),
        }),
        EstimationScheme::Sic(SicOrder::SecondThenFirst) => Some(PerInputMi {
            input1: stage_b.mean(),
            input1_stderr: stage_b.stderr(),
            input2: stage_a.mean(),
            input2_stderr: stage_a.stderr(),
        }),
    };

    Ok(MiReport {
        nats: total.mean(),
        stderr: total.stderr(),
        per_input,
        sample_count: samples,
        seed,
        closed_form: false,
    })
}

/// Components of the full observation marginal `p(y)`.
fn joint_marginal_components(
    dist1: &InputDistribution,
    dist2: &InputDistribution,
    g1: f64,
    g2: f64,
) -> Vec<Component> {
    use InputDistribution::{Discrete, Gaussian};
    match (dist1, dist2) {
        (Gaussian, Gaussian) => vec![Component {
            log_weight: 0.0,
            mean: 0.0,
            var: 1.0 + g1 + g2,
        }],
        (Discrete(_), Gaussian) => marginal_components(dist1, g1, 1.0 + g2),
        (Gaussian, Discrete(_)) => marginal_components(dist2, g2, 1.0 + g1),
        (Discrete(p1), Discrete(p2)) => {
            let (r1, r2) = (g1.sqrt(), g2.sqrt());
            let mut comps = Vec::with_capacity(p1.len() * p2.len());
            for &(x1, w1) in p1 {
                for &(x2, w2) in p2 {
                    if w1 == 0.0 || w2 == 0.0 {
                        continue;
                    }
                    comps.push(Component {
                        log_weight: w1.ln() + w2.ln(),
                        mean: r1 * x1 + r2 * x2,
                        var: 1.0,
                    });
                }
            }
            comps
        }
    }
}

/// Check `dI/ds = (mmse + psi) / 2` by central finite difference in the
/// scheme's normalized-snr parameterization.
///
/// Gaussian/Gaussian scenarios are deterministic: the closed-form rate is
/// differenced and compared against [`mi_derivative`] within `tolerance`,
/// with a Richardson step-halving probe rejecting steps whose truncation
/// error would exceed half the tolerance. Scenarios with a discrete input
/// difference a paired Monte-Carlo rate estimate instead and pass within
/// three combined standard errors; under successive cancellation each
/// stage is checked in its own single-input model at its operating snr.
pub fn fd_identity_check(
    scenario: &Scenario,
    scheme: EstimationScheme,
    step: f64,
    tolerance: f64,
) -> Result<IdentityCheck, ImmseError> {
    let (a, b, g1, g2) = normalized_terms(&scenario.equiv, &scenario.powers, &scenario.snr);

    if scenario.dist1.is_gaussian() && scenario.dist2.is_gaussian() {
        // each stage's rate as a function of its own noise-normalized snr,
        // all stages advanced by the same offset delta
        let rate = |delta: f64| -> f64 {
            match scheme {
                EstimationScheme::Joint => 0.5 * (1.0 + g1 + g2 + (a + b) * delta).ln(),
                EstimationScheme::Sic(SicOrder::FirstThenSecond) => {
                    let s_high = g1 / (1.0 + g2);
                    0.5 * (1.0 + s_high + a * delta).ln() + 0.5 * (1.0 + g2 + b * delta).ln()
                }
                EstimationScheme::Sic(SicOrder::SecondThenFirst) => {
                    let s_high = g2 / (1.0 + g1);
                    0.5 * (1.0 + s_high + b * delta).ln() + 0.5 * (1.0 + g1 + a * delta).ln()
                }
            }
        };
        let central = |h: f64| (rate(h) - rate(-h)) / (2.0 * h);
        let fd = central(step);
        let fd_half = central(0.5 * step);
        let truncation = (fd - fd_half).abs() * 4.0 / 3.0;
        if truncation >= 0.5 * tolerance {
            return Err(ImmseError::StepTooLarge {
                step,
                truncation,
                tolerance,
            });
        }
        let derivative = mi_derivative(&scenario.equiv, &scenario.powers, &scenario.snr, scheme);
        let residual = (fd - derivative).abs();
        return Ok(IdentityCheck {
            derivative,
            finite_difference: fd,
            residual,
            threshold: tolerance,
            passed: residual <= tolerance,
            monte_carlo: false,
            step,
        });
    }

    ensure_samples(scenario.samples)?;
    // decorrelate the FD stream from the derivative-estimate stream
    let stream = scenario_stream(g1, g2, &scenario.dist1, &scenario.dist2);
    let mut rng = substream_rng(scenario.seed, stream ^ 0x00fd_00fd_00fd_00fd);
    let mut diffs = Stats::default();

    let (derivative, deriv_stderr) = match scheme {
        EstimationScheme::Joint => {
            for _ in 0..scenario.samples {
                let u1 = scenario.dist1.sample(&mut rng);
                let u2 = scenario.dist2.sample(&mut rng);
                let z: f64 = StandardNormal.sample(&mut rng);
                // shift both per-input snrs by delta in lockstep
                let llr = |delta: f64| -> f64 {
                    let (h1, h2) = (g1 + a * delta, g2 + b * delta);
                    let y = h1.sqrt() * u1 + h2.sqrt() * u2 + z;
                    let marginal =
                        joint_marginal_components(&scenario.dist1, &scenario.dist2, h1, h2);
                    -0.5 * z * z - 0.5 * LN_2PI - log_density(y, 0.0, &marginal)
                };
                let d = (llr(step) - llr(-step)) / (2.0 * step);
                if !d.is_finite() {
                    return Err(ImmseError::NonFiniteSample {
                        context: "fd_identity_check joint",
                    });
                }
                diffs.push(d);
            }
            let report = mmse_monte_carlo(
                &scenario.dist1,
                &scenario.dist2,
                &scenario.equiv,
                &scenario.powers,
                &scenario.snr,
                scheme,
                scenario.samples,
                scenario.seed,
            )?;
            (report.total_derivative, report.total_stderr)
        }
        EstimationScheme::Sic(order) => {
            // per-stage single-input models at their operating snrs
            let (lead_dist, trail_dist, lead_w, trail_w, lead_g, trail_g) = match order {
                SicOrder::FirstThenSecond => {
                    (&scenario.dist1, &scenario.dist2, a, b, g1 / (1.0 + g2), g2)
                }
                SicOrder::SecondThenFirst => {
                    (&scenario.dist2, &scenario.dist1, b, a, g2 / (1.0 + g1), g1)
                }
            };
            for _ in 0..scenario.samples {
                let ul = lead_dist.sample(&mut rng);
                let zl: f64 = StandardNormal.sample(&mut rng);
                let ut = trail_dist.sample(&mut rng);
                let zt: f64 = StandardNormal.sample(&mut rng);
                let stage = |dist: &InputDistribution, gamma: f64, u: f64, z: f64| -> f64 {
                    let y = gamma.sqrt() * u + z;
                    let comps = marginal_components(dist, gamma, 1.0);
                    -0.5 * z * z - 0.5 * LN_2PI - log_density(y, 0.0, &comps)
                };
                let f = |delta: f64| -> f64 {
                    stage(lead_dist, lead_g + lead_w * delta, ul, zl)
                        + stage(trail_dist, trail_g + trail_w * delta, ut, zt)
                };
                let d = (f(step) - f(-step)) / (2.0 * step);
                if !d.is_finite() {
                    return Err(ImmseError::NonFiniteSample {
                        context: "fd_identity_check sic",
                    });
                }
                diffs.push(d);
            }
            let mut deriv_rng = substream_rng(scenario.seed, stream ^ 0x00de_00de_00de_00de);
            let (m_lead, se_lead) =
                awgn_mmse_mc(lead_dist, lead_g, scenario.samples, &mut deriv_rng)?;
            let (m_trail, se_trail) =
                awgn_mmse_mc(trail_dist, trail_g, scenario.samples, &mut deriv_rng)?;
            let value = 0.5 * (lead_w * m_lead + trail_w * m_trail);
            let se = 0.5 * (lead_w * lead_w * se_lead * se_lead
                + trail_w * trail_w * se_trail * se_trail)
                .sqrt();
            (value, se)
        }
    };

    let fd = diffs.mean();
    let threshold = 3.0 * (diffs.stderr().powi(2) + deriv_stderr.powi(2)).sqrt();
    let residual = (fd - derivative).abs();
    Ok(IdentityCheck {
        derivative,
        finite_difference: fd,
        residual,
        threshold,
        passed: residual <= threshold,
        monte_carlo: true,
        step,
    })
}

/// Monte-Carlo unit-power MMSE of `dist` in AWGN at `gamma`; Gaussian
/// inputs return the closed form with zero standard error.
fn awgn_mmse_mc<R: Rng>(
    dist: &InputDistribution,
    gamma: f64,
    samples: usize,
    rng: &mut R,
) -> Result<(f64, f64), ImmseError> {
    if dist.is_gaussian() {
        return Ok((gaussian_mmse(gamma), 0.0));
    }
    let root = gamma.sqrt();
    let mut stats = Stats::default();
    for _ in 0..samples {
        let u = dist.sample(rng);
        let z: f64 = StandardNormal.sample(rng);
        let y = root * u + z;
        let e = u - discrete_conditional_mean(dist, gamma, y);
        let sq = e * e;
        if !sq.is_finite() {
            return Err(ImmseError::NonFiniteSample {
                context: "awgn_mmse_mc",
            });
        }
        stats.push(sq);
    }
    Ok((stats.mean(), stats.stderr()))
}
