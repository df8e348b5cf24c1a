use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use netprice::binary::{binary_pricing_pipeline, BinaryPricingProblem, DEFAULT_DEVIATION};
use netprice::harness::{run_and_write, worker_pool, ExperimentConfig, ExperimentKind, OutputFormat};
use netprice::monopoly::{
    optimal_differentiated_prices, optimal_uniform_price, profit_ratio_bounds, profits_p0_p1,
    PricingOutcome,
};
use netprice::network::{read_network, TopologyKind};
use netprice::{Error, Result};

#[derive(Parser)]
#[command(name = "netprice", version, about = "Security product pricing on consumer externality networks")]
struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for tables and charts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
    /// Also write SVG charts.
    #[arg(long, global = true)]
    plots: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Topology {
    Pa,
    Tree,
}

#[derive(Subcommand)]
enum Command {
    /// Monopoly profit ratio P0/P1 across the influence grid.
    Sweep {
        #[arg(long, value_enum)]
        topology: Option<Topology>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Two-vendor market run to convergence and truncated.
    Duopoly {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Prices against centrality and total consumer cost.
    Fairness {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        instances: Option<usize>,
    },
    /// Two-price study with the exact optimum for small networks.
    Binary {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Price a single network read from a file.
    Solve {
        network: PathBuf,
        /// Rounding trials for the two-price solution.
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = DEFAULT_DEVIATION)]
        deviation: f64,
    },
    /// Run the experiment named in the configuration file.
    Run,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(format) = cli.format {
        cfg.format = format;
    }
    cfg.plots |= cli.plots;
    Ok(cfg)
}

#[derive(Serialize)]
struct ScenarioReport {
    scenario: String,
    prices: Vec<f64>,
    investments: Vec<f64>,
    profit: f64,
}

impl From<&PricingOutcome> for ScenarioReport {
    fn from(o: &PricingOutcome) -> Self {
        Self {
            scenario: o.scenario.to_string(),
            prices: o.prices.0.iter().copied().collect(),
            investments: o.investments.0.iter().copied().collect(),
            profit: o.profit,
        }
    }
}

#[derive(Serialize)]
struct SolveReport {
    consumers: usize,
    scenarios: Vec<ScenarioReport>,
    binary_optimum: Option<f64>,
    p0: f64,
    p1: f64,
    profit_ratio: f64,
    lower_bound: Option<f64>,
    upper_bound: Option<f64>,
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

fn solve(cfg: &ExperimentConfig, path: &PathBuf, trials: usize, deviation: f64) -> Result<()> {
    let net = read_network(BufReader::new(File::open(path)?))?;
    let diff = optimal_differentiated_prices(&net)?;
    let uniform = optimal_uniform_price(&net)?;
    let prob = BinaryPricingProblem::around_uniform(net.clone(), deviation)?;
    let binary = binary_pricing_pipeline(&prob, trials, cfg.seed)?;
    let pair = profits_p0_p1(&net)?;
    let bounds = profit_ratio_bounds(&net).ok();
    let report = SolveReport {
        consumers: net.n(),
        scenarios: [&diff, &uniform, &binary.outcome].into_iter().map(Into::into).collect(),
        binary_optimum: binary.exact.as_ref().map(|e| e.w_opt),
        p0: pair.p0,
        p1: pair.p1,
        profit_ratio: pair.ratio(),
        lower_bound: bounds.map(|b| b.theorem.lower),
        upper_bound: bounds.map(|b| b.theorem.upper),
    };
    match cfg.format {
        OutputFormat::Json => println!("{}", serde_json::to_string_pretty(&report)?),
        OutputFormat::Csv => {
            println!("consumers: {}", report.consumers);
            for s in &report.scenarios {
                println!("{} prices: {}", s.scenario, join(&s.prices));
                println!("{} investments: {}", s.scenario, join(&s.investments));
                println!("{} profit: {}", s.scenario, s.profit);
            }
            if let Some(opt) = report.binary_optimum {
                println!("binary optimum: {opt}");
            }
            println!("p0: {}", report.p0);
            println!("p1: {}", report.p1);
            println!("profit ratio: {}", report.profit_ratio);
            match (report.lower_bound, report.upper_bound) {
                (Some(lo), Some(hi)) => println!("ratio bounds: {lo} {hi}"),
                _ => println!("ratio bounds: unavailable (symmetric response not positive definite)"),
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    let kind = match cli.command {
        Command::Solve {
            ref network,
            trials,
            deviation,
        } => return solve(&cfg, network, trials, deviation),
        Command::Sweep {
            topology,
            n,
            replicates,
        } => {
            if let Some(t) = topology {
                cfg.topology.kind = match t {
                    Topology::Pa => TopologyKind::PreferentialAttachment,
                    Topology::Tree => TopologyKind::PoissonTree,
                };
            }
            cfg.topology.n = n.unwrap_or(cfg.topology.n);
            cfg.topology.replicates = replicates.unwrap_or(cfg.topology.replicates);
            match cfg.topology.kind {
                TopologyKind::PreferentialAttachment => ExperimentKind::ProfitRatioSweepPa,
                TopologyKind::PoissonTree => ExperimentKind::ProfitRatioSweepTree,
            }
        }
        Command::Duopoly { n, replicates } => {
            cfg.topology.n = n.unwrap_or(cfg.topology.n);
            cfg.topology.replicates = replicates.unwrap_or(cfg.topology.replicates);
            ExperimentKind::DuopolyProfitRatio
        }
        Command::Fairness { n, instances } => {
            cfg.fairness.n = n.unwrap_or(cfg.fairness.n);
            cfg.fairness.instances = instances.unwrap_or(cfg.fairness.instances);
            ExperimentKind::TotalCostFairness
        }
        Command::Binary { n, instances, trials } => {
            cfg.binary.n = n.unwrap_or(cfg.binary.n);
            cfg.binary.instances = instances.unwrap_or(cfg.binary.instances);
            cfg.binary.rounding_trials = trials.unwrap_or(cfg.binary.rounding_trials);
            ExperimentKind::BinaryPricingStudy
        }
        Command::Run => cfg.experiment.ok_or_else(|| Error::Config {
            key: "experiment".into(),
            message: "required by the `run` subcommand".into(),
        })?,
    };
    cfg.validate()?;
    let written = worker_pool()?.install(|| run_and_write(&cfg, kind))?;
    for path in written {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
