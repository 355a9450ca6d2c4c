use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use netloc::frequency::Rect;
use netloc::perturbation::Scenario;
use netloc::spectral::{LocalizationParams, Metric};

#[derive(Debug, Parser)]
#[command(name = "netloc", version, about = "Eigenvector localization and robustness of oscillator networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Write machine-readable JSON to stdout.
    #[arg(long, global = true)]
    pub json: bool,

    /// Output directory (output file for `gen`).
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,

    /// Seed for randomized sampling.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads (default: available cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: Option<u32>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate or convert a graph.
    Gen(GenArgs),
    /// Laplacian spectrum.
    Spectrum(SpectrumArgs),
    /// Classify eigenvectors as localized or delocalized.
    Localize(LocalizeArgs),
    /// Worst-case node/edge sensitivity maps and per-eigenvalue profiles.
    Sensitivity(SensitivityArgs),
    /// Transfer-function magnitude grid and pseudospectrum masks.
    Pspec(PspecArgs),
    /// H-infinity norm, peak frequency and robust margin.
    Margin(MarginArgs),
    /// Perturbations at the margin and their verification.
    Destabilize(DestabilizeArgs),
    /// Time-domain simulation with optional feedback.
    Simulate(SimulateArgs),
    /// Run an experiment described by a JSON file.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    /// Edge list or Matrix Market (.mtx) file.
    #[arg(long, value_name = "PATH", conflicts_with = "banded")]
    pub graph: Option<PathBuf>,

    /// Banded path graph on N nodes with edges for 1 <= |i - j| <= B.
    #[arg(long, num_args = 2, value_names = ["N", "B"])]
    pub banded: Option<Vec<usize>>,

    /// Read B in `--banded` as the total band width (half-width B / 2).
    #[arg(long, requires = "banded")]
    pub width: bool,
}

#[derive(Debug, Args)]
pub struct ClassifierArgs {
    /// Peak-set threshold relative to the largest entry.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Largest decay ratio counted as localized.
    #[arg(long)]
    pub qmax: Option<f64>,
    /// Smallest fit quality counted as localized.
    #[arg(long)]
    pub r2min: Option<f64>,
    /// Smallest inverse participation ratio counted as localized.
    #[arg(long)]
    pub iprmin: Option<f64>,
    /// Distance used for the decay fit.
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
}

impl ClassifierArgs {
    pub fn apply(&self, mut p: LocalizationParams) -> LocalizationParams {
        if let Some(a) = self.alpha {
            p.alpha = a;
        }
        if let Some(q) = self.qmax {
            p.q_max = q;
        }
        if let Some(r) = self.r2min {
            p.r2_min = r;
        }
        if let Some(i) = self.iprmin {
            p.ipr_min = Some(i);
        }
        if let Some(m) = self.metric {
            p.metric = m.into();
        }
        p
    }

    pub fn params(&self) -> LocalizationParams {
        self.apply(LocalizationParams::default())
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MetricArg {
    Index,
    Hop,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Metric {
        match m {
            MetricArg::Index => Metric::Index,
            MetricArg::Hop => Metric::Hop,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Also report second-order eigenvalues for this damping.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Write the eigenvector matrix when `--out` is given.
    #[arg(long)]
    pub eigenvectors: bool,
}

#[derive(Debug, Args)]
pub struct LocalizeArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub classifier: ClassifierArgs,
}

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub classifier: ClassifierArgs,
    /// Per-eigenvalue profile for this scenario.
    #[arg(long, value_parser = parse_scenario)]
    pub scenario: Option<Scenario>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum OrderArg {
    /// Second-order network with damping `--beta`.
    #[default]
    Second,
    /// First-order system with A = -L.
    FirstMinus,
    /// First-order system with A = +L (grids only).
    FirstPlus,
}

#[derive(Debug, Args)]
pub struct SystemArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Damping of the second-order network.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Perturbation channel: edge:K,L | global-node:K | local-node:K | local-reciprocal:K.
    #[arg(long, value_parser = parse_scenario)]
    pub scenario: Scenario,
    #[arg(long, value_enum, default_value_t)]
    pub order: OrderArg,
}

#[derive(Debug, Args)]
pub struct PspecArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// re0,re1,im0,im1 (default from beta and the spectrum).
    #[arg(long, value_parser = parse_rect)]
    pub rect: Option<Rect>,
    /// NX,NY.
    #[arg(long, value_parser = parse_grid, default_value = "60,60")]
    pub grid: (usize, usize),
    /// Pseudospectrum levels.
    #[arg(long, value_delimiter = ',', default_value = "0.2,1")]
    pub eps: Vec<f64>,
    /// Logarithmically spaced imaginary axis.
    #[arg(long)]
    pub log_im: bool,
    /// Include mask boundary points per level in the JSON.
    #[arg(long)]
    pub contours: bool,
}

#[derive(Debug, Args)]
pub struct MarginArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// Report the rightmost pseudospectrum reach for these levels.
    #[arg(long, value_delimiter = ',')]
    pub eps: Vec<f64>,
    /// Random static perturbations at 0.95 of the margin to check.
    #[arg(long, default_value_t = 0)]
    pub samples: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Static,
    Delay,
    Allpass,
    All,
}

#[derive(Debug, Args)]
pub struct DestabilizeArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long, value_enum, default_value = "all")]
    pub kind: KindArg,
    /// Skip verification (and its time-domain growth check).
    #[arg(long)]
    pub no_verify: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    /// Uniform random angles in [-1, 1] from `--seed`, at rest.
    #[default]
    Random,
    /// Angles along the scenario output vector, at rest.
    Output,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[arg(long)]
    pub beta: f64,
    #[arg(long, value_parser = parse_scenario)]
    pub scenario: Option<Scenario>,
    /// Static real feedback gain.
    #[arg(long, group = "feedback")]
    pub gain: Option<f64>,
    /// Delayed feedback GAIN,T.
    #[arg(long, value_parser = parse_pair, group = "feedback")]
    pub delay: Option<(f64, f64)>,
    /// All-pass feedback GAIN,A.
    #[arg(long, value_parser = parse_pair, group = "feedback")]
    pub allpass: Option<(f64, f64)>,
    /// Destabilizer JSON written by `destabilize`.
    #[arg(long, value_name = "PATH", group = "feedback")]
    pub destabilizer: Option<PathBuf>,
    /// Multiplier on the feedback gain.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Horizon (default max(40 / beta, 60 periods of a destabilizer's frequency)).
    #[arg(long)]
    pub t_final: Option<f64>,
    /// Step size (default 0.9 of the stability limit).
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long, default_value_t = 10)]
    pub record_every: usize,
    #[arg(long, value_enum, default_value_t)]
    pub init: InitArg,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Experiment description (JSON).
    pub spec: PathBuf,
    #[command(flatten)]
    pub classifier: ClassifierArgs,
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse::<Scenario>().map_err(|e| e.to_string())
}

fn floats(s: &str, want: usize) -> Result<Vec<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}")))
        .collect::<Result<_, _>>()?;
    if v.len() != want {
        return Err(format!("expected {want} comma-separated numbers, got {}", v.len()));
    }
    Ok(v)
}

fn parse_rect(s: &str) -> Result<Rect, String> {
    let v = floats(s, 4)?;
    Rect::new(v[0], v[1], v[2], v[3]).map_err(|e| e.to_string())
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let parts: Vec<&str> = s.split(',').collect();
    let [nx, ny] = parts.as_slice() else {
        return Err("expected NX,NY".into());
    };
    let p = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("`{x}`: {e}"));
    let (nx, ny) = (p(nx)?, p(ny)?);
    if nx < 2 || ny < 2 {
        return Err("grid must be at least 2 x 2".into());
    }
    Ok((nx, ny))
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let v = floats(s, 2)?;
    Ok((v[0], v[1]))
}
