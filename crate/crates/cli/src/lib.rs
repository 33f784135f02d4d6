//! `stratq`: sweeps over the strategic-server models, written as CSV or JSON
//! with a JSON sidecar describing the run.

pub mod commands;
pub mod sweep;
pub mod table;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use strategic_queue::{CostFunction, EconomicParams, ModelConfig};

pub use sweep::{IntSweep, Sweep};
pub use table::{Cell, Table};

pub const DEFAULT_COST: &str = "poly:1:2";

#[derive(Parser, Debug, Clone, Serialize)]
#[command(
    name = "stratq",
    version,
    about = "Equilibria, staffing, routing and price of anarchy for strategic-server queues"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct Common {
    /// Effort cost: `poly:<c_E>:<p>` or `poa:<q>` [default: poly:1:2]
    #[arg(long, global = true)]
    pub cost: Option<String>,
    /// Staffing cost per server [default: 1]
    #[arg(long = "c-s", global = true)]
    pub c_s: Option<f64>,
    /// Waiting cost per unit time [default: 1]
    #[arg(long, global = true)]
    pub w: Option<f64>,
    /// JSON model file, e.g. {"family":"polynomial","c_E":1,"p":2,"c_S":1,"w":1}.
    /// Explicit flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output file; the sidecar goes next to it with extension `.run.json`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum Command {
    /// Symmetric equilibria over a grid of arrival rates and staffing levels.
    Equilibrium(commands::EquilibriumArgs),
    /// Optimal and asymptotically optimal staffing over arrival rates.
    Staffing(commands::StaffingArgs),
    /// Two-server r-routing equilibria over a sweep of r.
    Routing(commands::RoutingArgs),
    /// Exact steady states under several dispatch rules against the product form.
    Collapse(commands::CollapseArgs),
    /// Price-of-anarchy curve, or the table of minima for c(μ) = μ^q/q.
    Poa(commands::PoaArgs),
    /// Raw discrete-event simulation runs.
    Simulate(commands::SimulateArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Equilibrium(_) => "equilibrium",
            Command::Staffing(_) => "staffing",
            Command::Routing(_) => "routing",
            Command::Collapse(_) => "collapse",
            Command::Poa(_) => "poa",
            Command::Simulate(_) => "simulate",
        }
    }
}

/// Cost and economics after merging the config file with explicit flags.
#[derive(Debug, Clone)]
pub struct Model {
    pub cost: CostFunction,
    pub econ: EconomicParams,
}

impl Model {
    pub fn resolve(common: &Common) -> anyhow::Result<Self> {
        let file = match &common.config {
            Some(path) => {
                let text =
                    fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
                Some(
                    ModelConfig::from_json(&text)
                        .with_context(|| format!("parsing config {}", path.display()))?,
                )
            }
            None => None,
        };
        let cost = match (&common.cost, &file) {
            (Some(text), _) => CostFunction::parse(text)?,
            (None, Some(cfg)) => cfg.cost()?,
            (None, None) => CostFunction::parse(DEFAULT_COST)?,
        };
        let c_s = common.c_s.or(file.map(|f| f.c_s)).unwrap_or(1.0);
        let w = common.w.or(file.map(|f| f.w)).unwrap_or(1.0);
        Ok(Self {
            cost,
            econ: EconomicParams::new(c_s, w)?,
        })
    }
}

/// Everything a subcommand produces.
#[derive(Debug, Clone)]
pub struct Output {
    pub table: Table,
    /// Subcommand-specific values that do not fit the table.
    pub extra: Value,
}

pub fn execute(cli: &Cli) -> anyhow::Result<Output> {
    let model = Model::resolve(&cli.common)?;
    match &cli.command {
        Command::Equilibrium(a) => commands::equilibrium(a, &model),
        Command::Staffing(a) => commands::staffing(a, &model),
        Command::Routing(a) => commands::routing(a, &model),
        Command::Collapse(a) => commands::collapse(a, &model, cli.common.seed),
        Command::Poa(a) => commands::poa(a, &model),
        Command::Simulate(a) => commands::simulate(a, cli.common.seed),
    }
}

/// The sidecar document: the full invocation, the resolved model, the columns
/// and the crate versions.
pub fn run_spec(cli: &Cli, output: &Output) -> anyhow::Result<Value> {
    let model = Model::resolve(&cli.common)?;
    Ok(json!({
        "command": cli.command.name(),
        "invocation": cli,
        "model": {
            "cost": model.cost.to_string(),
            "cost_spec": model.cost.spec(),
            "c_S": model.econ.c_s,
            "w": model.econ.w,
        },
        "columns": output.table.header,
        "rows": output.table.rows.len(),
        "extra": output.extra,
        "versions": {
            "stratq": env!("CARGO_PKG_VERSION"),
            "strategic-queue": strategic_queue::VERSION,
        },
    }))
}

pub fn render(output: &Output, format: Format) -> anyhow::Result<String> {
    match format {
        Format::Csv => output.table.to_csv(),
        Format::Json => Ok(serde_json::to_string_pretty(&output.table.to_json())? + "\n"),
    }
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("run.json")
}

/// Runs the command and writes the table and sidecar.
pub fn run(cli: &Cli) -> anyhow::Result<()> {
    let output = execute(cli)?;
    let body = render(&output, cli.common.format)?;
    let spec = serde_json::to_string_pretty(&run_spec(cli, &output)?)? + "\n";
    match &cli.common.out {
        Some(path) => {
            fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
            let side = sidecar_path(path);
            fs::write(&side, spec).with_context(|| format!("writing {}", side.display()))?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(body.as_bytes())?;
        }
    }
    Ok(())
}
