use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clearing_core::convex::solve_convexified;
use clearing_core::demand::{demand_set, MoneyClass};
use clearing_core::equilibrium::{
    clear_euphemia_style, convex_hull_pricing, detect_equilibrium, find_equilibrium, lost_opportunity_cost,
};
use clearing_core::exact::solve_welfare;
use clearing_core::io::{emit_figure_csv, figure_data, parse_market, FigureRow, OutcomeReport};
use clearing_core::lp::LpError;
use clearing_core::random::{monte_carlo_equilibrium_probability, SimpleRandomMarketSpec};
use clearing_core::{Error, Market, Settings};
use rayon::prelude::*;
use serde::Serialize;

use crate::{Cli, Command, Format, GlobalOpts, Mode};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_INFEASIBLE: u8 = 2;
pub const EXIT_BUDGET: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    fn usage(error: anyhow::Error) -> Self {
        Self { code: EXIT_USAGE, error }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Lp(LpError::Infeasible { .. }) | Error::Lp(LpError::Unbounded) | Error::Internal(_) => {
                EXIT_INFEASIBLE
            }
            Error::Lp(LpError::IterationLimit(_)) | Error::TooManyBlocks { .. } => EXIT_BUDGET,
            _ => EXIT_USAGE,
        };
        Self { code, error: e.into() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        match error.downcast::<Error>() {
            Ok(e) => e.into(),
            Err(error) => Self::usage(error),
        }
    }
}

type Outcome = Result<(), Failure>;

/// Run parameters echoed into every output.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub tool: String,
    pub command: String,
    pub inputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    pub tol: f64,
    pub node_budget: usize,
    pub norm: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
}

impl RunConfig {
    fn new(command: &str, global: &GlobalOpts) -> Self {
        Self {
            tool: format!("clearing {}", env!("CARGO_PKG_VERSION")),
            command: command.to_string(),
            inputs: Vec::new(),
            output: None,
            tol: global.tol,
            node_budget: global.node_budget,
            norm: global.norm.to_string(),
            seed: None,
            trials: None,
            mode: None,
        }
    }

    fn provenance(&self) -> BTreeMap<String, String> {
        let value = serde_json::to_value(self).expect("config serialises");
        let mut out = BTreeMap::new();
        if let serde_json::Value::Object(map) = value {
            for (k, v) in map {
                let text = match v {
                    serde_json::Value::String(s) => s,
                    serde_json::Value::Array(items) => {
                        items.iter().map(|i| i.as_str().map_or_else(|| i.to_string(), str::to_string)).collect::<Vec<_>>().join(";")
                    }
                    other => other.to_string(),
                };
                out.insert(k, text);
            }
        }
        out
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

pub fn run(cli: &Cli) -> Outcome {
    let global = &cli.global;
    if !(global.tol.is_finite() && global.tol > 0.0) {
        return Err(Failure::usage(anyhow!("tolerance must be positive, got {}", global.tol)));
    }
    let settings = global.settings();
    match &cli.command {
        Command::Clear { input, mode, output, format } => clear(global, &settings, input, *mode, output.as_deref(), *format),
        Command::Analyze { input, price, output } => analyze(global, &settings, input, price.as_deref(), output.as_deref()),
        Command::Simulate { n, k, trials, seed, log, output } => {
            simulate(global, &settings, *n, *k, *trials, *seed, log.as_deref(), output.as_deref())
        }
        Command::Report { dir, output } => report(global, dir, output.as_deref()),
    }
}

fn load_market(path: &Path) -> Result<Market, Failure> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display())).map_err(Failure::usage)?;
    parse_market(&bytes).map_err(|e| Failure::usage(anyhow!("{}: {e}", path.display())))
}

fn write_output(path: Option<&Path>, text: &str) -> Outcome {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())).map_err(Failure::usage),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serialisable output");
    s.push('\n');
    s
}

fn clear(
    global: &GlobalOpts,
    settings: &Settings,
    input: &Path,
    mode: Mode,
    output: Option<&Path>,
    format: Format,
) -> Outcome {
    let market = load_market(input)?;
    let mut config = RunConfig::new("clear", global);
    config.inputs.push(display(input));
    config.output = output.map(display);
    let mode_name = match mode {
        Mode::Exact => "exact",
        Mode::Euphemia => "euphemia",
        Mode::Chp => "chp",
    };
    config.mode = Some(mode_name.to_string());
    let mut provenance = config.provenance();

    let (prices, allocation, equilibrium) = match mode {
        Mode::Exact => {
            let best = solve_welfare(&market, settings)?;
            if best.gap > 0.0 {
                return Err(Failure {
                    code: EXIT_BUDGET,
                    error: anyhow!(
                        "node budget {} exhausted with optimality gap {} (best welfare {})",
                        settings.node_budget,
                        best.gap,
                        best.welfare
                    ),
                });
            }
            provenance.insert("nodes".into(), best.nodes.to_string());
            match find_equilibrium(&market, settings)? {
                Some(cert) => (cert.prices, cert.allocation, true),
                None => {
                    let prices = solve_convexified(&market, settings)?.prices;
                    (prices, best.allocation, false)
                }
            }
        }
        Mode::Euphemia => {
            let outcome = clear_euphemia_style(&market, settings)?
                .ok_or_else(|| Failure { code: EXIT_INFEASIBLE, error: anyhow!("no block pattern admits supporting prices") })?;
            let cert = detect_equilibrium(&market, &outcome.prices, &outcome.allocation, settings)?;
            let rejected: Vec<String> = outcome
                .paradoxically_rejected
                .iter()
                .map(|&(a, b)| market.agents[a].bids[b].id.clone())
                .collect();
            provenance.insert("paradoxically_rejected".into(), rejected.join(";"));
            (outcome.prices, outcome.allocation, cert.is_exact())
        }
        Mode::Chp => {
            let chp = convex_hull_pricing(&market, settings)?;
            provenance.insert("dual_value".into(), chp.dual_value.to_string());
            provenance.insert("search_gap".into(), chp.search_gap.to_string());
            let cert = detect_equilibrium(&market, &chp.prices, &chp.allocation, settings)?;
            (chp.prices, chp.allocation, cert.is_exact())
        }
    };
    let loc = lost_opportunity_cost(&market, &allocation, &prices, settings)?;
    let report = OutcomeReport::from_allocation(&market, mode_name, &prices, &allocation, equilibrium, &loc, provenance)?;
    let text = match format {
        Format::Json => report.to_json() + "\n",
        Format::Csv => report.to_csv(),
    };
    write_output(output, &text)
}

#[derive(Debug, Serialize)]
struct AgentDemand {
    agent: String,
    convex: bool,
    /// The demand set is a single bundle.
    singleton: bool,
    /// Singleton demand, or a convex agent (whose demand needs no such condition).
    singleton_condition: bool,
    cells: usize,
    rho: f64,
    in_the_money: usize,
    at_the_money: usize,
    out_of_the_money: usize,
}

#[derive(Debug, Serialize)]
struct Analysis {
    config: RunConfig,
    label: String,
    prices: Vec<f64>,
    /// Agents with nonconvex demand at the prices.
    nonconvex_demand: usize,
    /// Largest `ρ_i`, one per commodity, descending.
    top_rho: Vec<f64>,
    agents: Vec<AgentDemand>,
}

fn analyze(
    global: &GlobalOpts,
    settings: &Settings,
    input: &Path,
    price: Option<&[f64]>,
    output: Option<&Path>,
) -> Outcome {
    let market = load_market(input)?;
    let prices = match price {
        Some(p) if p.len() != market.num_commodities => {
            return Err(Failure::usage(anyhow!(
                "--price has {} entries but the market has {} commodities",
                p.len(),
                market.num_commodities
            )))
        }
        Some(p) => p.to_vec(),
        None => solve_convexified(&market, settings)?.prices,
    };
    let classes = clearing_core::demand::classify_money(&market, &prices, settings.tol);
    let mut agents = Vec::with_capacity(market.agents.len());
    for (agent, cls) in market.agents.iter().zip(&classes) {
        let set = demand_set(agent, &prices, settings)?;
        let count = |c: MoneyClass| cls.iter().filter(|x| **x == c).count();
        let singleton = set.is_singleton(settings.tol);
        agents.push(AgentDemand {
            agent: agent.id.clone(),
            convex: agent.is_convex(),
            singleton,
            singleton_condition: singleton || agent.is_convex(),
            cells: set.cells.len(),
            rho: set.rho(settings.norm, settings.tol),
            in_the_money: count(MoneyClass::InTheMoney),
            at_the_money: count(MoneyClass::AtTheMoney),
            out_of_the_money: count(MoneyClass::OutOfTheMoney),
        });
    }
    let mut rhos: Vec<f64> = agents.iter().map(|a| a.rho).collect();
    rhos.sort_by(|a, b| b.total_cmp(a));
    rhos.resize(market.num_commodities.max(rhos.len()), 0.0);
    rhos.truncate(market.num_commodities);
    let mut config = RunConfig::new("analyze", global);
    config.inputs.push(display(input));
    config.output = output.map(display);
    let analysis = Analysis {
        config,
        label: market.label.clone(),
        prices,
        nonconvex_demand: agents.iter().filter(|a| a.rho > 0.0).count(),
        top_rho: rhos,
        agents,
    };
    write_output(output, &to_json(&analysis))
}

#[derive(Debug, Serialize)]
struct Simulation {
    config: RunConfig,
    n: usize,
    k: usize,
    trials: usize,
    equilibria: usize,
    estimate: f64,
    ci_low: f64,
    ci_high: f64,
    /// Trials where the solver disagrees with the marginal-supplier rule.
    disagreements: usize,
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    global: &GlobalOpts,
    settings: &Settings,
    n: usize,
    k: usize,
    trials: u64,
    seed: u64,
    log: Option<&Path>,
    output: Option<&Path>,
) -> Outcome {
    let spec = SimpleRandomMarketSpec::new(n, k, seed);
    spec.validate().map_err(|e| Failure::usage(e.into()))?;
    let est = monte_carlo_equilibrium_probability(&spec, trials as usize, settings)?;
    if let Some(path) = log {
        let mut text = String::from("trial,equilibrium\n");
        for (t, v) in est.verdicts.iter().enumerate() {
            text.push_str(&format!("{t},{v}\n"));
        }
        write_output(Some(path), &text)?;
    }
    let mut config = RunConfig::new("simulate", global);
    config.seed = Some(seed);
    config.trials = Some(trials);
    config.output = output.map(display);
    let sim = Simulation {
        config,
        n,
        k,
        trials: est.trials,
        equilibria: est.equilibria,
        estimate: est.estimate,
        ci_low: est.ci_low,
        ci_high: est.ci_high,
        disagreements: est.disagreements,
    };
    write_output(output, &to_json(&sim))
}

#[derive(Debug, Serialize)]
struct Figure<'a> {
    config: RunConfig,
    rows: &'a [FigureRow],
}

const MARKET_SUFFIXES: [&str; 2] = [".market.csv", ".market.json"];
const OUTCOME_SUFFIX: &str = ".outcome.json";

/// `(name, market file, outcome file)` for every instance in `dir`, sorted by name.
fn instances(dir: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>, Failure> {
    let entries = fs::read_dir(dir).with_context(|| format!("cannot read directory {}", dir.display()))?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .collect();
    names.sort();
    let mut out = Vec::new();
    for file in &names {
        let Some((name, _)) = MARKET_SUFFIXES.iter().find_map(|s| file.strip_suffix(s).map(|n| (n, s))) else {
            continue;
        };
        let outcome = format!("{name}{OUTCOME_SUFFIX}");
        if !names.contains(&outcome) {
            return Err(Failure::usage(anyhow!("{file} has no matching {outcome}")));
        }
        out.push((name.to_string(), dir.join(file), dir.join(outcome)));
    }
    if out.is_empty() {
        return Err(Failure::usage(anyhow!("no market/outcome pairs in {}", dir.display())));
    }
    Ok(out)
}

fn report(global: &GlobalOpts, dir: &Path, output: Option<&Path>) -> Outcome {
    let pairs = instances(dir)?;
    let entries = pairs
        .par_iter()
        .map(|(_, market_path, outcome_path)| {
            let market = load_market(market_path)?;
            let text = fs::read_to_string(outcome_path)
                .with_context(|| format!("cannot read {}", outcome_path.display()))
                .map_err(Failure::usage)?;
            let outcome = OutcomeReport::from_json(&text)
                .map_err(|e| Failure::usage(anyhow!("{}: {e}", outcome_path.display())))?;
            Ok((market, outcome))
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let k = entries[0].0.num_commodities;
    if let Some((m, _)) = entries.iter().find(|(m, _)| m.num_commodities != k) {
        return Err(Failure::usage(anyhow!(
            "inconsistent commodity count: {} has {} commodities, expected {k}",
            m.label,
            m.num_commodities
        )));
    }
    let rows = figure_data(&entries)?;
    let csv = emit_figure_csv(&rows);
    match output {
        None => write_output(None, &csv),
        Some(prefix) => {
            let mut config = RunConfig::new("report", global);
            config.inputs = pairs.iter().map(|(n, _, _)| n.clone()).collect();
            config.output = Some(display(prefix));
            let json = to_json(&Figure { config, rows: &rows });
            write_output(Some(&with_suffix(prefix, "csv")), &csv)?;
            write_output(Some(&with_suffix(prefix, "json")), &json)
        }
    }
}

fn with_suffix(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_errors_map_to_exit_codes() {
        let code = |e: Error| Failure::from(e).code;
        assert_eq!(code(Error::Lp(LpError::Infeasible { residual: 1.0 })), EXIT_INFEASIBLE);
        assert_eq!(code(Error::TooManyBlocks { count: 30, limit: 20 }), EXIT_BUDGET);
        assert_eq!(code(Error::Parse { line: 3, message: "bad".into() }), EXIT_USAGE);
        assert_eq!(Failure::from(anyhow::Error::from(Error::Internal("x".into()))).code, EXIT_INFEASIBLE);
    }
}
