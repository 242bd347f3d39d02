//! Command-line front end.
//!
//! ```text
//! kthprice bid      --dist uniform --n 5 --k 3 [--grid 101] [--format csv|report] [--pretty]
//! kthprice verify   --dist exp:lambda=1 --n 10 --k 5
//! kthprice simulate --dist uniform --n 5 --k 3 --auctions 1000000 --seed 42 \
//!                   [--best-response --x0 0.5 [--dev-min 0.4 --dev-max 0.9 --dev-count 21]]
//! ```
//!
//! Every option may instead come from a TOML file given with `--config`;
//! command-line flags win over file values. Exit codes: 0 success, 1 a
//! check failed, 2 bad configuration, 3 numerical domain error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::dists::{linear_grid, Distribution, GRID_HI, GRID_LO};
use crate::equilibrium::{bid_asymptotic, bid_curve, AuctionSpec};
use crate::error::{Error, Result};
use crate::simulate::{self, SimConfig};
use crate::verify;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DOMAIN: i32 = 3;

const DEFAULT_AUCTIONS: u64 = 1_000_000;
const DEFAULT_DEV_COUNT: usize = 21;

#[derive(Parser, Debug)]
#[command(name = "kthprice", version, about = "Equilibrium bidding in kth-price auctions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tabulate the equilibrium bid function over a quantile grid.
    Bid(RunArgs),
    /// Check the equilibrium against independent criteria.
    Verify(RunArgs),
    /// Monte Carlo revenue and best-response checks.
    Simulate(RunArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Report,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubcommandKind {
    Bid,
    Verify,
    Simulate,
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// TOML file whose keys mirror these options (dashes become underscores).
    #[arg(long)]
    config: Option<PathBuf>,
    /// uniform | power:alpha=A | exp:lambda=L | fattail:c=C | custom:file=PATH | custom:expr=Q
    #[arg(long)]
    dist: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// Number of quantile grid points on [0.005, 0.995].
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Six-digit CSV output for people.
    #[arg(long)]
    pretty: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    auctions: Option<u64>,
    /// Valuation of the deviating bidder (best-response mode).
    #[arg(long)]
    x0: Option<f64>,
    #[arg(long)]
    best_response: bool,
    #[arg(long, allow_negative_numbers = true)]
    dev_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    dev_max: Option<f64>,
    #[arg(long)]
    dev_count: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Exit 1 if the equilibrium bid is beaten by a grid bid beyond 3 standard errors.
    #[arg(long)]
    assert_equilibrium: bool,
    /// Also write the best-response payoff table as CSV to this path.
    #[arg(long)]
    payoff_csv: Option<PathBuf>,
}

/// Configuration as read from a `--config` file. Every key is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub subcommand: Option<SubcommandKind>,
    pub dist: Option<String>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub grid: Option<usize>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    pub pretty: Option<bool>,
    pub seed: Option<u64>,
    pub num_auctions: Option<u64>,
    pub x0: Option<f64>,
    pub best_response: Option<bool>,
    pub dev_min: Option<f64>,
    pub dev_max: Option<f64>,
    pub dev_count: Option<usize>,
    pub workers: Option<usize>,
    pub assert_equilibrium: Option<bool>,
    pub payoff_csv: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config file: {}", e.message())))
    }

    fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read '{}': {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Command-line values override file values.
    fn overlay(self, a: RunArgs) -> Self {
        let flag = |set: bool, file: Option<bool>| if set { Some(true) } else { file };
        RunConfig {
            subcommand: self.subcommand,
            dist: a.dist.or(self.dist),
            n: a.n.or(self.n),
            k: a.k.or(self.k),
            grid: a.grid.or(self.grid),
            output: a.output.or(self.output),
            format: a.format.or(self.format),
            pretty: flag(a.pretty, self.pretty),
            seed: a.seed.or(self.seed),
            num_auctions: a.auctions.or(self.num_auctions),
            x0: a.x0.or(self.x0),
            best_response: flag(a.best_response, self.best_response),
            dev_min: a.dev_min.or(self.dev_min),
            dev_max: a.dev_max.or(self.dev_max),
            dev_count: a.dev_count.or(self.dev_count),
            workers: a.workers.or(self.workers),
            assert_equilibrium: flag(a.assert_equilibrium, self.assert_equilibrium),
            payoff_csv: a.payoff_csv.or(self.payoff_csv),
        }
    }

    fn spec(&self) -> Result<AuctionSpec> {
        let n = self.n.ok_or_else(|| Error::Config("missing --n".into()))?;
        let k = self.k.ok_or_else(|| Error::Config("missing --k".into()))?;
        AuctionSpec::new(n, k)
    }

    fn distribution(&self) -> Result<Distribution> {
        self.dist.as_deref().ok_or_else(|| Error::Config("missing --dist".into()))?.parse()
    }

    fn grid(&self) -> Result<Vec<f64>> {
        let len = self.grid.unwrap_or(crate::dists::GRID_LEN);
        if len < 2 {
            return Err(Error::Config(format!("grid size must be at least 2, got {len}")));
        }
        Ok(linear_grid(GRID_LO, GRID_HI, len))
    }

    fn pretty(&self) -> bool {
        self.pretty.unwrap_or(false)
    }
}

fn num(v: f64, pretty: bool) -> String {
    if pretty {
        format!("{v:.6}")
    } else {
        format!("{v:.16e}")
    }
}

#[derive(Serialize)]
struct BidRow {
    u: f64,
    x: f64,
    beta: f64,
    beta_asymptotic: f64,
}

#[derive(Serialize)]
struct BidReport {
    distribution: String,
    spec: AuctionSpec,
    points: Vec<BidRow>,
}

/// `bid`: CSV `u,x,beta,beta_asymptotic` (or a TOML report) over the grid.
pub fn cmd_bid(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let spec = cfg.spec()?;
    let d = cfg.distribution()?;
    let grid = cfg.grid()?;
    let curve = bid_curve(&spec, &d, &grid)?;
    let rows = curve
        .points
        .iter()
        .enumerate()
        .map(|(index, p)| {
            let asym = bid_asymptotic(&spec, &d, p.u).map_err(|e| Error::AtGridPoint { index, u: p.u, source: Box::new(e) })?;
            Ok(BidRow { u: p.u, x: p.x, beta: p.beta, beta_asymptotic: asym })
        })
        .collect::<Result<Vec<_>>>()?;
    match cfg.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let pretty = cfg.pretty();
            writeln!(out, "u,x,beta,beta_asymptotic")?;
            for r in &rows {
                writeln!(out, "{},{},{},{}", num(r.u, pretty), num(r.x, pretty), num(r.beta, pretty), num(r.beta_asymptotic, pretty))?;
            }
        }
        Format::Report => {
            let report = BidReport { distribution: d.id(), spec, points: rows };
            out.write_all(toml::to_string(&report).expect("serializable").as_bytes())?;
        }
    }
    Ok(EXIT_OK)
}

/// `verify`: exit 0 when every check is within tolerance, 1 otherwise.
pub fn cmd_verify(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let spec = cfg.spec()?;
    let d = cfg.distribution()?;
    let report = verify::full_report_on(&spec, &d, &cfg.grid()?)?;
    match cfg.format.unwrap_or(Format::Report) {
        Format::Report => out.write_all(report.to_toml().as_bytes())?,
        Format::Csv => {
            let pretty = cfg.pretty();
            writeln!(out, "u,residual")?;
            for (u, r) in report.grid.iter().zip(&report.residuals) {
                writeln!(out, "{},{}", num(*u, pretty), num(*r, pretty))?;
            }
        }
    }
    Ok(if report.passed { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn sim_config(cfg: &RunConfig) -> Result<SimConfig> {
    let spec = cfg.spec()?;
    let dist = cfg.distribution()?;
    let seed = cfg.seed.ok_or_else(|| Error::Config("simulate needs an explicit --seed".into()))?;
    let mut sim = SimConfig::new(spec, dist, cfg.num_auctions.unwrap_or(DEFAULT_AUCTIONS), seed);
    sim.workers = cfg.workers.unwrap_or(1);
    if cfg.best_response.unwrap_or(false) {
        let x0 = cfg.x0.ok_or_else(|| Error::Config("--best-response needs --x0".into()))?;
        let u0 = sim.dist.cdf(x0)?;
        let beta0 = crate::equilibrium::bid_generic(&spec, &sim.dist, u0)?;
        let lo = cfg.dev_min.unwrap_or(0.5 * beta0);
        let hi = cfg.dev_max.unwrap_or(1.5 * beta0);
        let count = cfg.dev_count.unwrap_or(DEFAULT_DEV_COUNT);
        if count < 1 || !(lo <= hi) || (count > 1 && lo == hi) {
            return Err(Error::Config(format!("bad deviation range [{lo}, {hi}] x {count}")));
        }
        sim.x0 = Some(x0);
        sim.deviations = if count == 1 { vec![lo] } else { linear_grid(lo, hi, count) };
    }
    Ok(sim)
}

/// `simulate`: TOML report (or the payoff CSV with `--format csv`).
pub fn cmd_simulate(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let sim = sim_config(cfg)?;
    let report = simulate::simulate(&sim)?;
    if let (Some(path), Some(br)) = (&cfg.payoff_csv, &report.best_response) {
        std::fs::write(path, br.to_csv())?;
    }
    match cfg.format.unwrap_or(Format::Report) {
        Format::Report => out.write_all(report.to_toml().as_bytes())?,
        Format::Csv => match &report.best_response {
            Some(br) => out.write_all(br.to_csv().as_bytes())?,
            None => return Err(Error::Config("--format csv for simulate needs --best-response".into())),
        },
    }
    let failed = cfg.assert_equilibrium.unwrap_or(false)
        && report.best_response.as_ref().is_some_and(|br| !br.equilibrium_within_noise);
    Ok(if failed { EXIT_CHECK_FAILED } else { EXIT_OK })
}

fn exit_code(e: &Error) -> i32 {
    if e.is_config() {
        EXIT_CONFIG
    } else {
        EXIT_DOMAIN
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let (kind, args) = match cli.command {
        Command::Bid(a) => (SubcommandKind::Bid, a),
        Command::Verify(a) => (SubcommandKind::Verify, a),
        Command::Simulate(a) => (SubcommandKind::Simulate, a),
    };
    let result = (|| -> Result<i32> {
        let base = match &args.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(file_kind) = base.subcommand {
            if file_kind != kind {
                return Err(Error::Config(format!("config file is for '{file_kind:?}', not '{kind:?}'").to_lowercase()));
            }
        }
        let cfg = base.overlay(args);
        let mut buf = Vec::new();
        let code = match kind {
            SubcommandKind::Bid => cmd_bid(&cfg, &mut buf)?,
            SubcommandKind::Verify => cmd_verify(&cfg, &mut buf)?,
            SubcommandKind::Simulate => cmd_simulate(&cfg, &mut buf)?,
        };
        match &cfg.output {
            Some(path) => std::fs::write(path, &buf)?,
            None => stdout.write_all(&buf)?,
        }
        Ok(code)
    })();
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run() -> i32 {
    run_with(std::env::args_os(), &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}
