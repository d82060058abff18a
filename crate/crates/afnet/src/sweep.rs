//! Scenario ingestion, deterministic power-grid sweeps and data emission.
//!
//! A scenario lives in a single TOML file with a `schema_version` field;
//! unknown keys are rejected so stale fixtures fail loudly. Grid sweeps
//! evaluate the closed-form rate quantities at sink 5 over a cartesian
//! `(p1, p2)` grid, in row-major order (`p1` outer), and may run
//! concurrently per point; output ordering and content are deterministic
//! for a fixed config.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::immse::{EstimationScheme, InputDistribution, SicOrder, DEFAULT_SAMPLES, DEFAULT_SEED};
use crate::network::{
    equivalent_channel, classify_regime, NetworkError, PowerProfile, RegimeLabel,
    RegimeThresholds, Sink, SnrConfig, Topology,
};
use crate::rates;

/// Exact column order of the emitted CSV.
pub const CSV_HEADER: &str =
    "p1,p2,beta3,beta4,h1eq,h2eq,sigma_zeq,r1_tin,r2_sic,joint,cutset,gap_cutset,psi_integral,regime";

const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid config field `{field}`: {reason}")]
    ConfigInvalid { field: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("record {index} violates `{detail}`")]
    InvariantViolation { index: usize, detail: String },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

fn invalid(field: &str, reason: impl Into<String>) -> SweepError {
    SweepError::ConfigInvalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

// ── raw (serde) layer ──────────────────────────────────────────────────────

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: u64,
    topology: RawTopology,
    power: RawPower,
    #[serde(default)]
    snr: RawSnr,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    inputs: RawInputs,
    #[serde(default)]
    estimation: RawEstimation,
    #[serde(default)]
    monte_carlo: RawMonteCarlo,
    #[serde(default)]
    regime: RawRegime,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopology {
    h13: f64,
    h14: f64,
    h23: f64,
    h24: f64,
    h35: f64,
    h45: f64,
    h36: f64,
    h46: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPower {
    p1: Option<f64>,
    p2: Option<f64>,
    p3: f64,
    p4: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSnr {
    snr: f64,
    s1: f64,
    s2: f64,
    include_relay_noise_in_beta: bool,
}

impl Default for RawSnr {
    fn default() -> Self {
        Self {
            snr: 1.0,
            s1: 1.0,
            s2: 1.0,
            include_relay_noise_in_beta: false,
        }
    }
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    p1: Option<RawAxis>,
    p2: Option<RawAxis>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAxis {
    min: f64,
    max: f64,
    steps: usize,
    #[serde(default = "default_scale")]
    scale: String,
}

fn default_scale() -> String {
    "linear".to_string()
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawInputs {
    dist1: Option<RawDist>,
    dist2: Option<RawDist>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawDist {
    Named(String),
    Custom { points: Vec<[f64; 2]> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawEstimation {
    scheme: String,
    order: String,
}

impl Default for RawEstimation {
    fn default() -> Self {
        Self {
            scheme: "sic".to_string(),
            order: "first-then-second".to_string(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawMonteCarlo {
    samples: usize,
    seed: u64,
}

impl Default for RawMonteCarlo {
    fn default() -> Self {
        Self {
            samples: DEFAULT_SAMPLES,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawRegime {
    theta_hi: f64,
    theta_lo: f64,
    epsilon_sigma: f64,
}

impl Default for RawRegime {
    fn default() -> Self {
        let t = RegimeThresholds::default();
        Self {
            theta_hi: t.theta_hi,
            theta_lo: t.theta_lo,
            epsilon_sigma: t.epsilon_sigma,
        }
    }
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    csv: Option<String>,
    plot: Option<String>,
    plot_column: Option<String>,
}

// ── validated layer ────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridScale {
    Linear,
    Log,
}

/// One swept power axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridAxis {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
    pub scale: GridScale,
}

impl GridAxis {
    fn validate(&self, field: &str) -> Result<(), SweepError> {
        if self.steps < 2 {
            return Err(invalid(field, format!("steps must be >= 2, got {}", self.steps)));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.min < self.max) {
            return Err(invalid(
                field,
                format!("need min < max, got [{}, {}]", self.min, self.max),
            ));
        }
        if self.scale == GridScale::Log && self.min <= 0.0 {
            return Err(invalid(field, "log axes require min > 0"));
        }
        if self.min < 0.0 {
            return Err(invalid(field, "powers cannot be negative"));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        let n = self.steps;
        (0..n)
            .map(|i| {
                if i == 0 {
                    return self.min;
                }
                if i == n - 1 {
                    return self.max;
                }
                let t = i as f64 / (n - 1) as f64;
                match self.scale {
                    GridScale::Linear => self.min + t * (self.max - self.min),
                    GridScale::Log => {
                        (self.min.ln() + t * (self.max.ln() - self.min.ln())).exp()
                    }
                }
            })
            .collect()
    }
}

/// Fully validated scenario.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub topology: Topology,
    pub source_p1: Option<f64>,
    pub source_p2: Option<f64>,
    pub relay_p3: f64,
    pub relay_p4: f64,
    pub snr: SnrConfig,
    pub grid_p1: Option<GridAxis>,
    pub grid_p2: Option<GridAxis>,
    pub dist1: InputDistribution,
    pub dist2: InputDistribution,
    pub scheme: EstimationScheme,
    pub samples: usize,
    pub seed: u64,
    pub thresholds: RegimeThresholds,
    pub output_csv: Option<PathBuf>,
    pub output_plot: Option<PathBuf>,
    pub output_plot_column: Option<String>,
}

impl ScenarioConfig {
    pub fn from_path(path: &Path) -> Result<Self, SweepError> {
        let text = fs::read_to_string(path).map_err(|source| SweepError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SweepError> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| invalid("config", e.to_string()))?;
        Self::from_raw(raw)
    }

    fn from_raw(raw: RawConfig) -> Result<Self, SweepError> {
        if raw.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", raw.schema_version),
            ));
        }

        let topology = Topology {
            h13: raw.topology.h13,
            h14: raw.topology.h14,
            h23: raw.topology.h23,
            h24: raw.topology.h24,
            h35: raw.topology.h35,
            h45: raw.topology.h45,
            h36: raw.topology.h36,
            h46: raw.topology.h46,
        };
        topology
            .validate()
            .map_err(|e| invalid("topology", e.to_string()))?;

        for (name, value) in [
            ("power.p3", Some(raw.power.p3)),
            ("power.p4", Some(raw.power.p4)),
            ("power.p1", raw.power.p1),
            ("power.p2", raw.power.p2),
        ] {
            if let Some(v) = value {
                if !v.is_finite() || v < 0.0 {
                    return Err(invalid(name, format!("must be finite and >= 0, got {v}")));
                }
            }
        }

        let snr = SnrConfig {
            snr: raw.snr.snr,
            s1: raw.snr.s1,
            s2: raw.snr.s2,
            include_relay_noise_in_beta: raw.snr.include_relay_noise_in_beta,
        };
        snr.validate().map_err(|e| invalid("snr", e.to_string()))?;

        let parse_axis = |axis: &Option<RawAxis>, field: &str| -> Result<Option<GridAxis>, SweepError> {
            let Some(axis) = axis else { return Ok(None) };
            let scale = match axis.scale.as_str() {
                "linear" => GridScale::Linear,
                "log" => GridScale::Log,
                other => {
                    return Err(invalid(
                        field,
                        format!("scale must be `linear` or `log`, got `{other}`"),
                    ))
                }
            };
            let parsed = GridAxis {
                min: axis.min,
                max: axis.max,
                steps: axis.steps,
                scale,
            };
            parsed.validate(field)?;
            Ok(Some(parsed))
        };
        let grid_p1 = parse_axis(&raw.grid.p1, "grid.p1")?;
        let grid_p2 = parse_axis(&raw.grid.p2, "grid.p2")?;

        let parse_dist = |dist: &Option<RawDist>, field: &str| -> Result<InputDistribution, SweepError> {
            match dist {
                None => Ok(InputDistribution::gaussian()),
                Some(RawDist::Named(name)) => match name.as_str() {
                    "gaussian" => Ok(InputDistribution::gaussian()),
                    "bpsk" => Ok(InputDistribution::bpsk()),
                    other => Err(invalid(
                        field,
                        format!("unknown distribution `{other}` (use `gaussian`, `bpsk` or points)"),
                    )),
                },
                Some(RawDist::Custom { points }) => InputDistribution::discrete(
                    points.iter().map(|&[x, p]| (x, p)).collect(),
                )
                .map_err(|e| invalid(field, e.to_string())),
            }
        };
        let dist1 = parse_dist(&raw.inputs.dist1, "inputs.dist1")?;
        let dist2 = parse_dist(&raw.inputs.dist2, "inputs.dist2")?;

        let order = match raw.estimation.order.as_str() {
            "first-then-second" => SicOrder::FirstThenSecond,
            "second-then-first" => SicOrder::SecondThenFirst,
            other => {
                return Err(invalid(
                    "estimation.order",
                    format!("expected `first-then-second` or `second-then-first`, got `{other}`"),
                ))
            }
        };
        let scheme = match raw.estimation.scheme.as_str() {
            "joint" => EstimationScheme::Joint,
            "sic" => EstimationScheme::Sic(order),
            other => {
                return Err(invalid(
                    "estimation.scheme",
                    format!("expected `joint` or `sic`, got `{other}`"),
                ))
            }
        };

        if raw.monte_carlo.samples < crate::immse::SAMPLE_FLOOR {
            return Err(invalid(
                "monte_carlo.samples",
                format!(
                    "must be >= {}, got {}",
                    crate::immse::SAMPLE_FLOOR,
                    raw.monte_carlo.samples
                ),
            ));
        }

        let thresholds = RegimeThresholds {
            theta_hi: raw.regime.theta_hi,
            theta_lo: raw.regime.theta_lo,
            epsilon_sigma: raw.regime.epsilon_sigma,
        };
        thresholds
            .validate()
            .map_err(|e| invalid("regime", e.to_string()))?;

        Ok(ScenarioConfig {
            topology,
            source_p1: raw.power.p1,
            source_p2: raw.power.p2,
            relay_p3: raw.power.p3,
            relay_p4: raw.power.p4,
            snr,
            grid_p1,
            grid_p2,
            dist1,
            dist2,
            scheme,
            samples: raw.monte_carlo.samples,
            seed: raw.monte_carlo.seed,
            thresholds,
            output_csv: raw.output.csv.map(PathBuf::from),
            output_plot: raw.output.plot.map(PathBuf::from),
            output_plot_column: raw.output.plot_column,
        })
    }

    /// Source powers for single-point commands: CLI overrides win, then the
    /// config's `[power]` entries.
    pub fn source_powers(
        &self,
        p1_override: Option<f64>,
        p2_override: Option<f64>,
    ) -> Result<PowerProfile, SweepError> {
        let p1 = p1_override
            .or(self.source_p1)
            .ok_or_else(|| invalid("power.p1", "required (set in config or pass --p1)"))?;
        let p2 = p2_override
            .or(self.source_p2)
            .ok_or_else(|| invalid("power.p2", "required (set in config or pass --p2)"))?;
        let powers = PowerProfile::new(p1, p2, self.relay_p3, self.relay_p4);
        powers
            .validate()
            .map_err(|e| invalid("power", e.to_string()))?;
        Ok(powers)
    }
}

// ── sweep records ──────────────────────────────────────────────────────────

/// Regime label or the degenerate-point marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordTag {
    Regime(RegimeLabel),
    /// The point could not be evaluated because a transmitting relay
    /// receives no signal (only possible with the relay-noise term off).
    DegenerateDenominator,
}

impl std::fmt::Display for RecordTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RecordTag::Regime(label) => write!(f, "{label}"),
            RecordTag::DegenerateDenominator => f.write_str("DegenerateDenominator"),
        }
    }
}

/// One grid point. Numeric fields are NaN on degenerate points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord {
    pub p1: f64,
    pub p2: f64,
    pub beta3: f64,
    pub beta4: f64,
    pub h1eq: f64,
    pub h2eq: f64,
    pub sigma_zeq: f64,
    pub r1_tin: f64,
    pub r2_sic: f64,
    pub joint: f64,
    pub cutset: f64,
    pub gap_cutset: f64,
    pub psi_integral: f64,
    pub tag: RecordTag,
}

fn evaluate_point(config: &ScenarioConfig, p1: f64, p2: f64) -> Result<SweepRecord, SweepError> {
    let powers = PowerProfile::new(p1, p2, config.relay_p3, config.relay_p4);
    let equiv = match equivalent_channel(&config.topology, &powers, &config.snr, Sink::Node5) {
        Ok(eq) => eq,
        Err(NetworkError::DegenerateDenominator { .. }) => {
            return Ok(SweepRecord {
                p1,
                p2,
                beta3: f64::NAN,
                beta4: f64::NAN,
                h1eq: f64::NAN,
                h2eq: f64::NAN,
                sigma_zeq: f64::NAN,
                r1_tin: f64::NAN,
                r2_sic: f64::NAN,
                joint: f64::NAN,
                cutset: f64::NAN,
                gap_cutset: f64::NAN,
                psi_integral: f64::NAN,
                tag: RecordTag::DegenerateDenominator,
            })
        }
        Err(e) => return Err(e.into()),
    };

    let r1_tin = rates::rate_r1_treat_as_noise(&equiv, &powers, &config.snr);
    let r2_sic = rates::rate_r2_after_cancellation(&equiv, &powers, &config.snr);
    let joint = rates::rate_joint(&equiv, &powers, &config.snr);
    let cutset = rates::cutset_bound(&config.topology, &powers, &config.snr, Sink::Node5);
    Ok(SweepRecord {
        p1,
        p2,
        beta3: equiv.beta3,
        beta4: equiv.beta4,
        h1eq: equiv.h1eq,
        h2eq: equiv.h2eq,
        sigma_zeq: equiv.sigma_zeq,
        r1_tin,
        r2_sic,
        joint,
        cutset,
        gap_cutset: cutset - joint,
        psi_integral: rates::psi_integral_closed_form(&equiv, &powers, &config.snr),
        tag: RecordTag::Regime(classify_regime(&powers, &equiv, &config.thresholds)),
    })
}

/// Evaluate the full `(p1, p2)` grid at sink 5, row-major with `p1` outer.
///
/// Grid points are evaluated in parallel; the record order is fixed by the
/// grid index, never by completion order.
pub fn run_sweep(config: &ScenarioConfig) -> Result<Vec<SweepRecord>, SweepError> {
    let axis1 = config
        .grid_p1
        .ok_or_else(|| invalid("grid.p1", "required for sweeps"))?;
    let axis2 = config
        .grid_p2
        .ok_or_else(|| invalid("grid.p2", "required for sweeps"))?;
    let points1 = axis1.points();
    let points2 = axis2.points();

    let pairs: Vec<(f64, f64)> = points1
        .iter()
        .flat_map(|&p1| points2.iter().map(move |&p2| (p1, p2)))
        .collect();
    pairs
        .par_iter()
        .map(|&(p1, p2)| evaluate_point(config, p1, p2))
        .collect()
}

fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.8e}")
    }
}

fn check_record(record: &SweepRecord, index: usize) -> Result<(), SweepError> {
    if record.tag == RecordTag::DegenerateDenominator {
        return Ok(());
    }
    let sum = record.r1_tin + record.r2_sic;
    if (sum - record.joint).abs() > 1e-12 * record.joint.abs().max(1.0) {
        return Err(SweepError::InvariantViolation {
            index,
            detail: format!("chain rule: r1+r2 = {sum}, joint = {}", record.joint),
        });
    }
    if record.gap_cutset < -1e-12 {
        return Err(SweepError::InvariantViolation {
            index,
            detail: format!("gap sign: {}", record.gap_cutset),
        });
    }
    Ok(())
}

/// Write records as CSV: exact header, 9 significant digits, `\n` endings.
///
/// The chain-rule and gap-sign invariants are re-checked per record at
/// emission time rather than trusted from upstream.
pub fn emit_csv(records: &[SweepRecord], path: &Path) -> Result<(), SweepError> {
    let io_err = |source| SweepError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    write_csv(records, &mut out).map_err(io_err)?;
    out.flush().map_err(io_err)
}

fn write_csv<W: Write>(records: &[SweepRecord], out: &mut W) -> std::io::Result<()> {
    for (index, record) in records.iter().enumerate() {
        if let Err(e) = check_record(record, index) {
            return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()));
        }
    }
    out.write_all(CSV_HEADER.as_bytes())?;
    out.write_all(b"\n")?;
    for record in records {
        let fields = [
            record.p1,
            record.p2,
            record.beta3,
            record.beta4,
            record.h1eq,
            record.h2eq,
            record.sigma_zeq,
            record.r1_tin,
            record.r2_sic,
            record.joint,
            record.cutset,
            record.gap_cutset,
            record.psi_integral,
        ];
        let mut row = fields.map(fmt_float).join(",");
        row.push(',');
        row.push_str(&record.tag.to_string());
        row.push('\n');
        out.write_all(row.as_bytes())?;
    }
    Ok(())
}

/// Numeric columns selectable for plot emission.
pub const PLOT_COLUMNS: &[&str] = &[
    "beta3",
    "beta4",
    "h1eq",
    "h2eq",
    "sigma_zeq",
    "r1_tin",
    "r2_sic",
    "joint",
    "cutset",
    "gap_cutset",
    "psi_integral",
];

fn column_value(record: &SweepRecord, column: &str) -> Option<f64> {
    Some(match column {
        "beta3" => record.beta3,
        "beta4" => record.beta4,
        "h1eq" => record.h1eq,
        "h2eq" => record.h2eq,
        "sigma_zeq" => record.sigma_zeq,
        "r1_tin" => record.r1_tin,
        "r2_sic" => record.r2_sic,
        "joint" => record.joint,
        "cutset" => record.cutset,
        "gap_cutset" => record.gap_cutset,
        "psi_integral" => record.psi_integral,
        _ => return None,
    })
}

/// Emit `(p1, p2, value)` triplets for one column, with a blank line
/// between `p1` blocks so generic surface plotters can grid the data.
pub fn emit_plot_data(records: &[SweepRecord], column: &str, path: &Path) -> Result<(), SweepError> {
    if !PLOT_COLUMNS.contains(&column) {
        return Err(invalid(
            "column",
            format!("unknown column `{column}`, expected one of {PLOT_COLUMNS:?}"),
        ));
    }
    let io_err = |source| SweepError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    writeln!(out, "# p1 p2 {column}").map_err(io_err)?;
    let mut current_p1 = f64::NAN;
    for record in records {
        if current_p1.to_bits() != record.p1.to_bits() {
            if !current_p1.is_nan() {
                out.write_all(b"\n").map_err(io_err)?;
            }
            current_p1 = record.p1;
        }
        let value = column_value(record, column).expect("validated column");
        writeln!(
            out,
            "{} {} {}",
            fmt_float(record.p1),
            fmt_float(record.p2),
            fmt_float(value)
        )
        .map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}
