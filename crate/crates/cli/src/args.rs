use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cml_core::{Arithmetic, LatticeConfig, LocalMap, MapKind, Node};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "cml", version, about = "Coupled map lattice bit generator and analysis tools")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Where to write the run manifest (default: next to the output, or ./<command>.manifest.json).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Extract bits from a pair of lattice instances.
    Gen(GenArgs),
    /// Analytic Lyapunov spectrum, optionally checked against Wolf's method.
    Le(LeArgs),
    /// Orbit points of one node over a parameter sweep.
    Bifurcation(BifurcationArgs),
    /// Histogram of a node orbit or of values read from a file.
    Hist(HistArgs),
    /// Battery plus two-level evaluation over many sequences.
    Test(TestArgs),
    /// Time generation of a fixed number of bytes.
    Bench(BenchArgs),
    /// Re-run a command from its manifest.
    #[serde(skip)]
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gen(_) => "gen",
            Command::Le(_) => "le",
            Command::Bifurcation(_) => "bifurcation",
            Command::Hist(_) => "hist",
            Command::Test(_) => "test",
            Command::Bench(_) => "bench",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapArg {
    Logistic,
    Tent,
    Plm,
}

impl From<MapArg> for MapKind {
    fn from(m: MapArg) -> Self {
        match m {
            MapArg::Logistic => MapKind::Logistic,
            MapArg::Tent => MapKind::Tent,
            MapArg::Plm => MapKind::Plm,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArithmeticArg {
    Fixed,
    Float,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Raw,
    Ascii,
}

/// A 1-based lattice node written as `u,v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeArg(pub usize, pub usize);

impl FromStr for NodeArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (u, v) = s
            .split_once(',')
            .ok_or_else(|| format!("expected u,v but got '{s}'"))?;
        let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("'{t}': {e}"));
        Ok(NodeArg(parse(u)?, parse(v)?))
    }
}

impl fmt::Display for NodeArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.0, self.1)
    }
}

impl From<NodeArg> for Node {
    fn from(n: NodeArg) -> Self {
        Node::new(n.0, n.1)
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct LatticeArgs {
    #[arg(long, value_enum, default_value_t = MapArg::Logistic)]
    pub map: MapArg,
    /// Map parameter (default: 4 for logistic and PLM, 2 for tent).
    #[arg(long)]
    pub mu: Option<f64>,
    /// PLM segment count.
    #[arg(long, default_value_t = 64)]
    pub segments: u32,
    #[arg(long, default_value_t = 8)]
    pub rows: usize,
    #[arg(long, default_value_t = 8)]
    pub cols: usize,
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    #[arg(long, value_enum, default_value_t = ArithmeticArg::Fixed)]
    pub arithmetic: ArithmeticArg,
    /// Fraction bits of fixed-point state.
    #[arg(long, default_value_t = 64)]
    pub precision: u32,
}

impl LatticeArgs {
    pub fn local_map(&self) -> cml_core::Result<LocalMap> {
        let kind = MapKind::from(self.map);
        LocalMap::new(kind, self.mu.unwrap_or(kind.mu_max()), self.segments)
    }

    pub fn config(&self) -> cml_core::Result<LatticeConfig> {
        let arithmetic = match self.arithmetic {
            ArithmeticArg::Fixed => Arithmetic::Fixed { z: self.precision },
            ArithmeticArg::Float => Arithmetic::Float64,
        };
        LatticeConfig::new(self.rows, self.cols, self.epsilon, self.local_map()?, arithmetic)
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub lattice: LatticeArgs,
    /// Bits taken from each tap value per step.
    #[arg(long, default_value_t = 64)]
    pub z: u32,
    #[arg(long, default_value_t = 1)]
    pub seed_a: u64,
    /// Seed for instance B. Without it, B is A's grid shifted by --perturb.
    #[arg(long, conflicts_with = "perturb")]
    pub seed_b: Option<u64>,
    /// Per-node offset (mod 1) deriving B from A.
    #[arg(long)]
    pub perturb: Option<f64>,
    /// Independence test window length.
    #[arg(long, default_value_t = 1000)]
    pub window: usize,
    /// Independence test significance level.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 16)]
    pub max_windows: usize,
    /// Tap node of both instances.
    #[arg(long, default_value_t = NodeArg(1, 1))]
    pub tap: NodeArg,
    /// Take z bits from every node pair per step instead of one tap.
    #[arg(long)]
    pub round_robin: bool,
    /// Re-run the independence test after this many steps.
    #[arg(long)]
    pub retest_every: Option<u64>,
}

pub const DEFAULT_PERTURBATION: f64 = 1e-3;

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct GenArgs {
    #[command(flatten)]
    pub extract: ExtractArgs,
    /// Bits per stream.
    #[arg(long, default_value_t = 1_000_000)]
    pub bits: usize,
    #[arg(long, value_enum, default_value_t = Format::Raw)]
    pub format: Format,
    /// Output file; `.N` is appended per stream when --streams > 1.
    #[arg(long)]
    pub out: PathBuf,
    /// Independent streams, stream i seeded with seed + i.
    #[arg(long, default_value_t = 1)]
    pub streams: usize,
    /// Worker threads for multiple streams (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct LeArgs {
    #[command(flatten)]
    pub lattice: LatticeArgs,
    /// Iterations for the local map exponent.
    #[arg(long, default_value_t = 1_000_000)]
    pub local_iterations: usize,
    /// Also estimate the spectrum with Wolf's method.
    #[arg(long)]
    pub numeric: bool,
    /// Iterations for Wolf's method.
    #[arg(long, default_value_t = 100_000)]
    pub iterations: usize,
    /// Run Wolf's method on a seeded free orbit instead of the synchronized one.
    #[arg(long)]
    pub free_orbit: bool,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct BifurcationArgs {
    #[command(flatten)]
    pub lattice: LatticeArgs,
    #[arg(long)]
    pub mu_min: f64,
    #[arg(long)]
    pub mu_max: f64,
    #[arg(long, default_value_t = 300)]
    pub steps: usize,
    #[arg(long, default_value_t = 200)]
    pub points: usize,
    #[arg(long, default_value_t = 1000)]
    pub discard: usize,
    #[arg(long, default_value_t = NodeArg(1, 1))]
    pub node: NodeArg,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct HistArgs {
    #[command(flatten)]
    pub lattice: LatticeArgs,
    /// Values in [0, 1], one per line, instead of a lattice orbit.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
    #[arg(long, default_value_t = 1_000_000)]
    pub points: usize,
    #[arg(long, default_value_t = 1000)]
    pub discard: usize,
    #[arg(long, default_value_t = NodeArg(1, 1))]
    pub node: NodeArg,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct TestArgs {
    #[command(flatten)]
    pub extract: ExtractArgs,
    #[arg(long, default_value_t = 1000)]
    pub sequences: usize,
    /// Bits per sequence.
    #[arg(long, default_value_t = 1_000_000)]
    pub length: usize,
    /// ASCII bit file to split into sequences instead of generating them.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Per-sequence significance level.
    #[arg(long = "test-alpha", default_value_t = 0.01)]
    pub test_alpha: f64,
    #[arg(long, default_value_t = 128)]
    pub block_len: usize,
    /// Two-level summary CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-sequence results CSV.
    #[arg(long)]
    pub details: Option<PathBuf>,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct BenchArgs {
    #[command(flatten)]
    pub extract: ExtractArgs,
    #[arg(long, default_value_t = 1_048_576)]
    pub bytes: usize,
    #[arg(long, default_value_t = 1000)]
    pub repeats: usize,
    /// Timing report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ReplayArgs {
    pub manifest_path: PathBuf,
    /// Write the main output here instead of the recorded path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Command {
    /// Primary output path, if the command has one.
    pub fn out(&self) -> Option<&std::path::Path> {
        match self {
            Command::Gen(a) => Some(&a.out),
            Command::Le(a) => a.out.as_deref(),
            Command::Bifurcation(a) => a.out.as_deref(),
            Command::Hist(a) => a.out.as_deref(),
            Command::Test(a) => a.out.as_deref(),
            Command::Bench(a) => a.out.as_deref(),
            Command::Replay(a) => a.out.as_deref(),
        }
    }

    pub fn set_out(&mut self, path: PathBuf) {
        match self {
            Command::Gen(a) => a.out = path,
            Command::Le(a) => a.out = Some(path),
            Command::Bifurcation(a) => a.out = Some(path),
            Command::Hist(a) => a.out = Some(path),
            Command::Test(a) => a.out = Some(path),
            Command::Bench(a) => a.out = Some(path),
            Command::Replay(a) => a.out = Some(path),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_parsing() {
        assert_eq!("2,3".parse::<NodeArg>().unwrap(), NodeArg(2, 3));
        assert_eq!(" 1 , 8 ".parse::<NodeArg>().unwrap(), NodeArg(1, 8));
        assert!("2".parse::<NodeArg>().is_err());
        assert!("a,1".parse::<NodeArg>().is_err());
        assert_eq!(NodeArg(4, 5).to_string(), "4,5");
    }

    #[test]
    fn default_mu_follows_map() {
        let cli = Cli::try_parse_from(["cml", "le", "--map", "tent"]).unwrap();
        let Command::Le(args) = cli.command else { panic!("parsed {:?}", cli.command) };
        assert_eq!(args.lattice.local_map().unwrap().mu(), 2.0);
        assert_eq!(args.lattice.config().unwrap().nodes(), 64);
    }

    #[test]
    fn seed_b_conflicts_with_perturb() {
        let parsed = Cli::try_parse_from(["cml", "gen", "--out", "x", "--seed-b", "3", "--perturb", "0.1"]);
        assert!(parsed.is_err());
    }

    #[test]
    fn commands_round_trip_through_json() {
        let cli = Cli::try_parse_from(["cml", "gen", "--out", "x", "--map", "plm", "--bits", "77"]).unwrap();
        let json = serde_json::to_string(&cli.command).unwrap();
        let back: Command = serde_json::from_str(&json).unwrap();
        let (Command::Gen(a), Command::Gen(b)) = (&cli.command, &back) else { panic!() };
        assert_eq!(a.bits, b.bits);
        assert_eq!(a.extract.lattice.map, b.extract.lattice.map);
        assert_eq!(back.out(), Some(std::path::Path::new("x")));
    }
}
