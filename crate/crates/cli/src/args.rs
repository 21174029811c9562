//! Command-line and config-file arguments. Every subcommand's flags double as the `params`
//! object of a JSON experiment config, so the structs derive both `clap::Args` and `Deserialize`.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::{DeserializeOwned, Error as _};
use serde::{Deserialize, Deserializer};
use serde_json::Value;

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "kirlab", version, about = "Kirchhoff divergences and Laplacians on graphs, lattices and beyond")]
pub struct Cli {
    /// Write `<name>.csv` and `<name>.json` here instead of printing the CSV.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Seed for the randomised checks.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Operators on a finite weighted graph.
    Graph(GraphArgs),
    /// Finite-difference and fractional operators on hZ^n.
    Lattice(LatticeArgs),
    /// Dyadic metric, Laplacians and the Haar-diagonal operator.
    Dyadic(DyadicArgs),
    /// Operators on one level of a metric measure net.
    Metric(MetricArgs),
    /// Continuum fractional Kirchhoff divergence.
    Frac(FracArgs),
    /// Truncated Hilbert-kernel Kirchhoff divergence and its limit.
    Hilbert(HilbertArgs),
    /// Operators induced by couplings.
    Coupling(CouplingArgs),
    /// Limit estimation along h -> 0 for a family of quotients.
    Converge(ConvergeArgs),
    /// Run a JSON experiment config.
    Run(RunArgs),
    /// Run every acceptance check plus any configs in a directory.
    ReproduceAll(ReproduceArgs),
}

/// A JSON value given inline, or `@path` to read it from a file.
#[derive(Debug, Clone, PartialEq)]
pub struct JsonArg(pub Value);

impl JsonArg {
    pub fn decode<T: DeserializeOwned>(&self, what: &str) -> CliResult<T> {
        serde_json::from_value(self.0.clone()).map_err(|e| CliError::Usage(format!("bad {what}: {e}")))
    }
}

fn load_json(s: &str) -> Result<Value, String> {
    let text = match s.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path).map_err(|e| format!("cannot read {path}: {e}"))?,
        None => s.to_string(),
    };
    serde_json::from_str(&text).map_err(|e| format!("malformed JSON: {e}"))
}

impl FromStr for JsonArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        load_json(s).map(JsonArg)
    }
}

impl<'de> Deserialize<'de> for JsonArg {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match Value::deserialize(d)? {
            Value::String(s) => load_json(&s).map(JsonArg).map_err(D::Error::custom),
            v => Ok(JsonArg(v)),
        }
    }
}

/// A point: `0.5` or `0.5,-1` on the command line; a number or an array in configs.
#[derive(Debug, Clone, PartialEq)]
pub struct PointArg(pub Vec<f64>);

impl FromStr for PointArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let v: Result<Vec<f64>, _> = s.split(',').map(|c| c.trim().parse::<f64>()).collect();
        match v {
            Ok(v) if v.iter().all(|c| c.is_finite()) => Ok(PointArg(v)),
            _ => Err(format!("'{s}' is not a point (expected numbers separated by commas)")),
        }
    }
}

impl<'de> Deserialize<'de> for PointArg {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            One(f64),
            Many(Vec<f64>),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::One(x) => Ok(PointArg(vec![x])),
            Raw::Many(v) => Ok(PointArg(v)),
            Raw::Text(s) => s.parse().map_err(D::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphOp {
    #[default]
    Kirchhoff,
    Laplacian,
    Harmonic,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphArgs {
    /// `{"measure":{"nodes":[[..]],"weights":[..]},"coupling":{"entries":[[k,j,w],..]}}` or @file.
    #[arg(long)]
    pub system: Option<JsonArg>,
    #[arg(long, value_enum)]
    pub op: Option<GraphOp>,
    /// Two-point field for `kirchhoff` (default sq-diff).
    #[arg(long)]
    pub phi: Option<String>,
    /// Scalar field for `laplacian` and `harmonic` (default sq).
    #[arg(long)]
    pub func: Option<String>,
    /// Tolerance of the mean-value test.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatticeOp {
    #[default]
    Fd,
    Kirchhoff,
    Harmonic,
    Frac,
    Constant,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeArgs {
    #[arg(long, value_enum)]
    pub op: Option<LatticeOp>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub h: Option<f64>,
    /// Half-width of the index window.
    #[arg(long)]
    pub window: Option<i64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Truncation radius of the fractional sum.
    #[arg(long)]
    pub radius: Option<i64>,
    #[arg(long)]
    pub func: Option<String>,
    #[arg(long)]
    pub phi: Option<String>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DyadicOp {
    Rho,
    #[default]
    Laplacian,
    Frac,
    Spectral,
    Delta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectralConstant {
    /// `c_s = 2^{2s} / (2^{2s} - 1)`.
    #[default]
    Stated,
    /// The eigenvalue read off the kernel itself.
    Kernel,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DyadicArgs {
    #[arg(long, value_enum)]
    pub op: Option<DyadicOp>,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Scale: nodes are `k 2^{-j}`.
    #[arg(long, allow_negative_numbers = true)]
    pub j: Option<i32>,
    /// Last node index.
    #[arg(long)]
    pub window: Option<u64>,
    /// Haar coefficients `[{"j":0,"k":0,"coef":1}, ..]` or @file.
    #[arg(long)]
    pub coef: Option<JsonArg>,
    #[arg(long)]
    pub x: Vec<f64>,
    #[arg(long)]
    pub y: Option<f64>,
    #[arg(long)]
    pub func: Option<String>,
    #[arg(long, value_enum)]
    pub constant: Option<SpectralConstant>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricOp {
    #[default]
    Kirchhoff,
    Laplacian,
    Frac,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricArgs {
    /// `{"delta","j","C","points","masses"}` (optional `metric`, `ball_mass`) or @file.
    #[arg(long)]
    pub net: Option<JsonArg>,
    #[arg(long, value_enum)]
    pub op: Option<MetricOp>,
    /// Symmetric matrix `H` as nested arrays; defaults to all ones.
    #[arg(long)]
    pub hmatrix: Option<JsonArg>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub phi: Option<String>,
    #[arg(long)]
    pub func: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FracMode {
    /// Pick by `s`.
    #[default]
    Auto,
    Regular,
    Pv,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FracArgs {
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Evaluation point, repeatable; `a,b` in two dimensions.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(default)]
    pub x: Vec<PointArg>,
    #[arg(long, value_enum)]
    pub mode: Option<FracMode>,
    #[arg(long)]
    pub phi: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HilbertArgs {
    #[arg(long)]
    pub eps_start: Option<f64>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(default)]
    pub x: Vec<f64>,
    #[arg(long)]
    pub phi: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingKind {
    #[default]
    Indep,
    Det,
    PosOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    #[default]
    X,
    Y,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingArgs {
    #[arg(long, value_enum)]
    pub kind: Option<CouplingKind>,
    /// Map of the deterministic coupling.
    #[arg(long = "F")]
    #[serde(rename = "F")]
    pub map: Option<String>,
    /// Density of the first marginal.
    #[arg(long)]
    pub g: Option<String>,
    /// Scale of the deterministic coupling.
    #[arg(long)]
    pub h: Option<f64>,
    /// Second marginal of `indep` is Lebesgue on `[-L, L]`.
    #[arg(long = "L")]
    #[serde(rename = "L")]
    pub half_width: Option<f64>,
    /// Which positive-order operator.
    #[arg(long, value_enum)]
    pub side: Option<Side>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(default)]
    pub x: Vec<f64>,
    #[arg(long)]
    pub phi: Option<String>,
    /// Scalar field; switches to the Laplacian.
    #[arg(long)]
    pub func: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    #[default]
    Fd,
    Frac,
    Poisson,
    Coupling,
    Dichotomy,
    Area,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeArgs {
    #[arg(long, value_enum)]
    pub family: Option<Family>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub h0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<PointArg>,
    #[arg(long)]
    pub phi: Option<String>,
    #[arg(long = "F")]
    #[serde(rename = "F")]
    pub map: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Radius of the far point in the fractional family.
    #[arg(long)]
    pub far_radius: Option<f64>,
    /// Tail density of the dichotomy family: compact or cauchy.
    #[arg(long)]
    pub zeta: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// `{"module", "operation"?, "params"?, "output"?, "seed"?}`.
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReproduceArgs {
    /// Replace c_s by this value in the Haar check (default 1 when given bare).
    #[arg(long, num_args = 0..=1, default_missing_value = "1.0")]
    pub inject_cs: Option<f64>,
    /// Also run every `*.json` experiment config found here.
    #[arg(long)]
    pub config_dir: Option<PathBuf>,
    /// Comma-separated criterion ids; all by default.
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<usize>,
}

/// A JSON experiment config.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub module: String,
    #[serde(default)]
    pub operation: Option<String>,
    #[serde(default)]
    pub params: Option<serde_json::Map<String, Value>>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl ExperimentConfig {
    /// The subcommand this config describes.
    pub fn command(&self) -> CliResult<Command> {
        let key = match self.module.as_str() {
            "graph" | "lattice" | "dyadic" | "metric" => Some("op"),
            "frac" => Some("mode"),
            "coupling" => Some("kind"),
            "converge" => Some("family"),
            "hilbert" => None,
            other => {
                return Err(CliError::Usage(format!(
                    "unknown module '{other}' (expected graph, lattice, dyadic, metric, frac, hilbert, coupling or converge)"
                )))
            }
        };
        let mut params = self.params.clone().unwrap_or_default();
        if let Some(op) = &self.operation {
            let key = key.ok_or_else(|| CliError::Usage(format!("module '{}' takes no operation", self.module)))?;
            if params.contains_key(key) {
                return Err(CliError::Usage(format!("'operation' and params.{key} are both set")));
            }
            params.insert(key.to_string(), Value::String(op.clone()));
        }
        let v = Value::Object(params);
        fn parse<T: DeserializeOwned>(v: Value) -> CliResult<T> {
            serde_json::from_value(v).map_err(|e| CliError::Usage(format!("bad params: {e}")))
        }
        Ok(match self.module.as_str() {
            "graph" => Command::Graph(parse(v)?),
            "lattice" => Command::Lattice(parse(v)?),
            "dyadic" => Command::Dyadic(parse(v)?),
            "metric" => Command::Metric(parse(v)?),
            "frac" => Command::Frac(parse(v)?),
            "hilbert" => Command::Hilbert(parse(v)?),
            "coupling" => Command::Coupling(parse(v)?),
            _ => Command::Converge(parse(v)?),
        })
    }
}
