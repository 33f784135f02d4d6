use anyhow::{bail, Context};
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use strategic_queue::ctmc::{collapse_check, product_form};
use strategic_queue::equilibrium::solve_with_grid;
use strategic_queue::routing::{bounds, equilibrium_for_r};
use strategic_queue::sim::{self, SimConfig};
use strategic_queue::special::{mean_wait, y_star};
use strategic_queue::staffing::{a_star, bmr_staffing, cost_of, n_opt_search, staff_ao, Selection};
use strategic_queue::{poa as poa_mod, Routing, SystemConfig};

use crate::sweep::{IntSweep, Sweep};
use crate::table::{Cell, Table};
use crate::{Model, Output};

#[derive(Args, Debug, Clone, Serialize)]
pub struct EquilibriumArgs {
    /// Arrival rates: `x`, a list, or `lo:hi:steps`.
    #[arg(long)]
    pub lambda: Sweep,
    /// Staffing levels: `n`, a list, or `lo:hi`.
    #[arg(long = "N", visible_alias = "n")]
    pub n: IntSweep,
    /// Grid points used to bracket first-order-condition roots.
    #[arg(long, default_value_t = strategic_queue::equilibrium::FOC_GRID)]
    pub grid: usize,
}

/// Columns: `lambda,N,count,index,mu,mean_wait,utility,idle,rejected_roots`.
/// One row per verified equilibrium; a point without any gets one `NA` row.
pub fn equilibrium(a: &EquilibriumArgs, model: &Model) -> anyhow::Result<Output> {
    let points: Vec<(f64, usize)> = a
        .lambda
        .values
        .iter()
        .flat_map(|&l| a.n.values.iter().map(move |&n| (l, n)))
        .collect();
    if let Some(&(_, n)) = points.iter().find(|p| p.1 < 2) {
        bail!("the N-server game needs N >= 2, got N = {n}");
    }
    let blocks = points
        .par_iter()
        .map(|&(lambda, n)| -> anyhow::Result<Vec<Vec<Cell>>> {
            let cfg = SystemConfig::new(lambda, n)?;
            let report = solve_with_grid(&cfg, &model.cost, a.grid)?;
            let count = report.equilibria.len();
            let rejected = Cell::count(report.rejected.len());
            if count == 0 {
                return Ok(vec![vec![
                    lambda.into(),
                    Cell::count(n),
                    Cell::count(0),
                    Cell::Na,
                    Cell::Na,
                    Cell::Na,
                    Cell::Na,
                    Cell::Na,
                    rejected,
                ]]);
            }
            report
                .equilibria
                .iter()
                .enumerate()
                .map(|(i, eq)| {
                    Ok(vec![
                        lambda.into(),
                        Cell::count(n),
                        Cell::count(count),
                        Cell::count(i + 1),
                        eq.mu.into(),
                        mean_wait(&cfg, eq.mu)?.into(),
                        eq.utility.into(),
                        eq.idle.into(),
                        rejected.clone(),
                    ])
                })
                .collect()
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let mut table = Table::new(vec![
        "lambda",
        "N",
        "count",
        "index",
        "mu",
        "mean_wait",
        "utility",
        "idle",
        "rejected_roots",
    ]);
    blocks.into_iter().flatten().for_each(|r| table.push(r));
    Ok(Output {
        table,
        extra: Value::Null,
    })
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct StaffingArgs {
    /// Arrival rates: `x`, a list, or `lo:hi:steps`.
    #[arg(long)]
    pub lambda: Sweep,
}

/// Columns: `lambda,n_opt,n_ao,cost_opt,cost_ao,cost_opt_per_lambda,
/// cost_ao_per_lambda,limit_per_lambda,mu_opt,mu_ao,n_bmr`.
pub fn staffing(a: &StaffingArgs, model: &Model) -> anyhow::Result<Output> {
    let star = a_star(&model.cost)?;
    let limit = model.econ.c_s / star.a_star;
    let rows = a
        .lambda
        .values
        .par_iter()
        .map(|&lambda| -> anyhow::Result<Vec<Cell>> {
            let n_ao = staff_ao(lambda, &model.cost)?;
            let ao = if n_ao >= 2 {
                Some(cost_of(
                    n_ao,
                    lambda,
                    &model.cost,
                    &model.econ,
                    Selection::LowestCost,
                )?)
            } else {
                None
            };
            let search = n_opt_search(lambda, &model.cost, &model.econ)?;
            let best = search.best.as_ref();
            let cost_opt = best.and_then(|b| b.cost);
            let cost_ao = ao.as_ref().and_then(|r| r.cost);
            Ok(vec![
                lambda.into(),
                best.map_or(Cell::Na, |b| Cell::count(b.n)),
                Cell::count(n_ao),
                Cell::opt(cost_opt),
                Cell::opt(cost_ao),
                Cell::opt(cost_opt.map(|c| c / lambda)),
                Cell::opt(cost_ao.map(|c| c / lambda)),
                limit.into(),
                Cell::opt(best.and_then(|b| b.mu)),
                Cell::opt(ao.as_ref().and_then(|r| r.mu)),
                bmr_staffing(lambda, star.mu_star, &model.econ)?.into(),
            ])
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let mut table = Table::new(vec![
        "lambda",
        "n_opt",
        "n_ao",
        "cost_opt",
        "cost_ao",
        "cost_opt_per_lambda",
        "cost_ao_per_lambda",
        "limit_per_lambda",
        "mu_opt",
        "mu_ao",
        "n_bmr",
    ]);
    rows.into_iter().for_each(|r| table.push(r));
    Ok(Output {
        table,
        extra: json!({ "a_star": star.a_star, "mu_star": star.mu_star, "y_star": y_star(&model.econ).y_star }),
    })
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct RoutingArgs {
    #[arg(long, default_value_t = 0.25)]
    pub lambda: f64,
    /// Routing exponents: `x`, a list, or `lo:hi:steps`.
    #[arg(long, allow_hyphen_values = true)]
    pub r: Sweep,
}

/// Columns: `lambda,r,exists,mu,mean_response,utility`.
pub fn routing(a: &RoutingArgs, model: &Model) -> anyhow::Result<Output> {
    let b = bounds(a.lambda, &model.cost)?;
    let rows =
        a.r.values
            .par_iter()
            .map(|&r| -> anyhow::Result<Vec<Cell>> {
                let eq = equilibrium_for_r(r, a.lambda, &model.cost)?;
                Ok(vec![
                    a.lambda.into(),
                    r.into(),
                    Cell::count(eq.is_some() as usize),
                    Cell::opt(eq.map(|e| e.mu)),
                    Cell::opt(eq.map(|e| e.mean_response)),
                    Cell::opt(eq.map(|e| e.utility)),
                ])
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
    let mut table = Table::new(vec!["lambda", "r", "exists", "mu", "mean_response", "utility"]);
    rows.into_iter().for_each(|r| table.push(r));
    Ok(Output {
        table,
        extra: json!({ "mu_dagger": b.mu_dagger, "mu_bar": b.mu_bar, "r_low": b.r_low }),
    })
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CollapseArgs {
    /// Service rates, comma separated.
    #[arg(long, default_value = "1,1.5,2.3")]
    pub rates: Sweep,
    #[arg(long, default_value_t = 2.0)]
    pub lambda: f64,
    /// Dispatch rules: random, lisf, sisf, weighted, fsf, ssf, r:<x>.
    #[arg(long, value_delimiter = ',', default_value = "random,lisf,sisf,weighted")]
    pub policies: Vec<String>,
    /// Also simulate every policy with common random numbers.
    #[arg(long)]
    pub simulate: bool,
    #[arg(long, default_value_t = 1e5)]
    pub horizon: f64,
    #[arg(long, default_value_t = 10)]
    pub replications: usize,
}

fn parse_policies(names: &[String]) -> anyhow::Result<Vec<Routing>> {
    names
        .iter()
        .map(|p| p.parse::<Routing>().with_context(|| format!("policy '{p}'")))
        .collect()
}

/// Columns: `policy,method,server,idle,half_width,max_deviation`.
/// `method` is `product_form`, `generator` or `simulation`.
pub fn collapse(a: &CollapseArgs, _model: &Model, seed: u64) -> anyhow::Result<Output> {
    let rates = &a.rates.values;
    let policies = parse_policies(&a.policies)?;
    let report = collapse_check(rates, a.lambda, &policies)?;
    let mut table = Table::new(vec![
        "policy",
        "method",
        "server",
        "idle",
        "half_width",
        "max_deviation",
    ]);
    for (j, &idle) in report.product_form_idle.iter().enumerate() {
        table.push(vec![
            "-".into(),
            "product_form".into(),
            Cell::count(j + 1),
            idle.into(),
            Cell::Na,
            Cell::Num(0.0),
        ]);
    }
    for row in &report.policies {
        for (j, &idle) in row.idle_fractions.iter().enumerate() {
            table.push(vec![
                row.policy.clone().into(),
                "generator".into(),
                Cell::count(j + 1),
                idle.into(),
                Cell::Na,
                row.max_deviation.into(),
            ]);
        }
    }
    if a.simulate {
        let base = SimConfig::new(a.lambda, rates.clone(), Routing::random())
            .horizon(a.horizon)
            .replications(a.replications)
            .seed(seed);
        let exact = product_form(rates, a.lambda)?;
        for (policy, est) in sim::compare_policies(&base, &policies)? {
            for (j, ci) in est.idle_fractions.iter().enumerate() {
                table.push(vec![
                    policy.to_string().into(),
                    "simulation".into(),
                    Cell::count(j + 1),
                    ci.mean.into(),
                    ci.half_width.into(),
                    (ci.mean - exact.idle_fractions[j]).abs().into(),
                ]);
            }
        }
    }
    Ok(Output {
        table,
        extra: json!({ "max_deviation": report.max_deviation, "passed": report.passed }),
    })
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct PoaArgs {
    /// Minimum price of anarchy for c(μ) = μ^q/q instead of a curve.
    #[arg(long)]
    pub table: bool,
    /// Exponents for the table [default: 1.001,1.01,1.1].
    #[arg(long)]
    pub q: Option<Sweep>,
    /// Rates for the curve under `--cost`.
    #[arg(long, default_value = "0.01:10:200")]
    pub mu: Sweep,
}

/// Table columns: `q,mu,beta,f_poa,strategic_cost,foc_residual`.
/// Curve columns: `mu,beta,gamma,f_poa,strategic_cost,conventional_cost`.
pub fn poa(a: &PoaArgs, model: &Model) -> anyhow::Result<Output> {
    let reference = y_star(&model.econ);
    if a.table {
        let qs =
            a.q.as_ref()
                .map_or(poa_mod::TABLE_Q.to_vec(), |s| s.values.clone());
        let rows = poa_mod::q_table(&qs, &model.econ)?;
        let mut table = Table::new(vec!["q", "mu", "beta", "f_poa", "strategic_cost", "foc_residual"]);
        for r in &rows {
            table.push(vec![
                r.q.into(),
                r.minimum.mu.into(),
                r.minimum.beta.into(),
                r.minimum.f_poa.into(),
                r.minimum.strategic_cost.into(),
                r.minimum.foc_residual.into(),
            ]);
        }
        return Ok(Output {
            table,
            extra: json!({ "y_star": reference.y_star, "gamma_y_star": reference.objective }),
        });
    }
    let curve = poa_mod::poa_curve(&a.mu.values, &model.cost, &model.econ)?;
    let mut table = Table::new(vec![
        "mu",
        "beta",
        "gamma",
        "f_poa",
        "strategic_cost",
        "conventional_cost",
    ]);
    for i in 0..curve.mu.len() {
        table.push(vec![
            curve.mu[i].into(),
            curve.beta[i].into(),
            curve.gamma[i].into(),
            curve.f_poa[i].into(),
            curve.strategic_cost[i].into(),
            curve.conventional_cost[i].into(),
        ]);
    }
    Ok(Output {
        table,
        extra: json!({ "y_star": reference.y_star, "minimum": curve.minimum }),
    })
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub lambda: f64,
    /// Service rates, comma separated.
    #[arg(long)]
    pub rates: Sweep,
    /// random, lisf, sisf, weighted, fsf, ssf or r:<x>.
    #[arg(long, default_value = "random", allow_hyphen_values = true)]
    pub policy: String,
    #[arg(long, default_value_t = 1e5)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0.1)]
    pub warmup: f64,
    #[arg(long, default_value_t = 10)]
    pub replications: usize,
    /// One row per replication instead of the pooled summary.
    #[arg(long)]
    pub raw: bool,
}

/// Summary columns: `metric,server,mean,half_width`.
/// Raw columns: `replication,seed,served,mean_wait,mean_queue,idle_1,…`.
pub fn simulate(a: &SimulateArgs, seed: u64) -> anyhow::Result<Output> {
    let routing: Routing = a
        .policy
        .parse()
        .with_context(|| format!("policy '{}'", a.policy))?;
    let cfg = SimConfig::new(a.lambda, a.rates.values.clone(), routing)
        .horizon(a.horizon)
        .warmup(a.warmup)
        .replications(a.replications)
        .seed(seed);
    let est = sim::run(&cfg)?;
    let n = a.rates.values.len();
    let extra = json!({ "served": est.served, "littles_law_3ci": est.littles_law_holds(a.lambda, 3.0) });
    if a.raw {
        let idle_names: Vec<&'static str> = (1..=n)
            .map(|j| &*Box::leak(format!("idle_{j}").into_boxed_str()))
            .collect();
        let mut header = vec!["replication", "seed", "served", "mean_wait", "mean_queue"];
        header.extend(idle_names);
        let mut table = Table::new(header);
        for r in &est.replications {
            let mut row = vec![
                Cell::count(r.index),
                Cell::Int(r.seed as i64),
                Cell::Int(r.served as i64),
                r.mean_wait.into(),
                r.mean_queue.into(),
            ];
            row.extend(r.idle_fractions.iter().map(|&f| Cell::Num(f)));
            table.push(row);
        }
        return Ok(Output { table, extra });
    }
    let mut table = Table::new(vec!["metric", "server", "mean", "half_width"]);
    for (j, ci) in est.idle_fractions.iter().enumerate() {
        table.push(vec![
            "idle".into(),
            Cell::count(j + 1),
            ci.mean.into(),
            ci.half_width.into(),
        ]);
    }
    table.push(vec![
        "mean_wait".into(),
        Cell::Na,
        est.mean_wait.mean.into(),
        est.mean_wait.half_width.into(),
    ]);
    table.push(vec![
        "mean_queue".into(),
        Cell::Na,
        est.mean_queue.mean.into(),
        est.mean_queue.half_width.into(),
    ]);
    Ok(Output { table, extra })
}
