//! Batch experiments over random topologies, with CSV/JSON tables and
//! optional SVG charts.

pub mod config;
pub mod experiments;
pub mod output;
pub mod plot;

use std::path::PathBuf;

use log::info;

pub use config::{ExperimentConfig, ExperimentKind, OutputFormat};
pub use experiments::{
    fairness_instance, outward_centrality, run_binary_study, run_duopoly_sweep,
    run_fairness_study, run_profit_ratio_sweep, BinaryStudyRow, DuopolyOutput, DuopolyRow,
    DuopolySummaryRow, FairnessConsumerRow, FairnessOutput, FairnessSummaryRow, SweepOutput,
    SweepReplicateRow, SweepSummaryRow,
};

use crate::error::{Error, Result};
use crate::monopoly::PricingScenario;
use crate::network::TopologyKind;
use output::{write_table, write_text};
use plot::{Chart, Series, Style};

/// Environment variable overriding the number of worker threads.
pub const WORKERS_ENV: &str = "NETPRICE_WORKERS";

/// SplitMix64 finalizer folded over `parts`.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    parts.iter().fold(mix(base.wrapping_add(0x9e37_79b9_7f4a_7c15)), |acc, &p| {
        mix(acc ^ p.wrapping_add(0x9e37_79b9_7f4a_7c15))
    })
}

/// Thread pool sized by `NETPRICE_WORKERS` when set, else by rayon's default.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v.trim().parse().map_err(|_| Error::Config {
            key: WORKERS_ENV.into(),
            message: format!("`{v}` is not a thread count"),
        })?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

fn shape_label(shape: f64) -> String {
    shape.to_string().replace('.', "_")
}

fn sweep_chart(out: &SweepOutput, shape: f64) -> Chart {
    let rows = out.summary_for(shape);
    let line = |name: &str, f: &dyn Fn(&SweepSummaryRow) -> Option<f64>| Series {
        name: name.into(),
        points: rows.iter().filter_map(|r| f(r).map(|y| (r.mu, y))).collect(),
        style: Style::Line,
    };
    Chart {
        title: format!("Profit ratio P0/P1, {:?} {shape}", out.kind),
        x_label: "influence mu".into(),
        y_label: "P0/P1".into(),
        series: vec![
            line("mean ratio", &|r| Some(r.mean_ratio)),
            line("lower bound", &|r| r.mean_theorem_lower),
            line("upper bound", &|r| r.mean_theorem_upper),
        ],
    }
}

/// Runs one experiment and writes its tables (and charts if configured) to
/// `cfg.output_dir`. Returns the written paths.
pub fn run_and_write(cfg: &ExperimentConfig, kind: ExperimentKind) -> Result<Vec<PathBuf>> {
    let dir = cfg.output_dir.as_path();
    let fmt = cfg.format;
    let mut written = Vec::new();
    match kind {
        ExperimentKind::ProfitRatioSweepPa | ExperimentKind::ProfitRatioSweepTree => {
            let topo = if kind == ExperimentKind::ProfitRatioSweepPa {
                TopologyKind::PreferentialAttachment
            } else {
                TopologyKind::PoissonTree
            };
            let (prefix, shape_name) = match topo {
                TopologyKind::PreferentialAttachment => ("profit_ratio_pa", "exponent"),
                TopologyKind::PoissonTree => ("profit_ratio_tree", "lambda"),
            };
            let out = run_profit_ratio_sweep(cfg, topo)?;
            info!("{prefix}: {} replicate failures", out.failures);
            written.push(write_table(dir, &format!("{prefix}_replicates"), &out.replicates, fmt)?);
            let mut shapes: Vec<f64> = out.summary.iter().map(|r| r.shape).collect();
            shapes.dedup();
            for shape in shapes {
                let stem = format!("{prefix}_{shape_name}_{}", shape_label(shape));
                let rows: Vec<&SweepSummaryRow> = out.summary_for(shape);
                written.push(write_table(dir, &stem, &rows, fmt)?);
                if cfg.plots {
                    written.push(write_text(dir, &format!("{stem}.svg"), &sweep_chart(&out, shape).to_svg())?);
                }
            }
        }
        ExperimentKind::DuopolyProfitRatio => {
            let out = run_duopoly_sweep(cfg)?;
            info!("duopoly: {} replicate failures", out.failures);
            written.push(write_table(dir, "duopoly_runs", &out.runs, fmt)?);
            written.push(write_table(dir, "duopoly_summary", &out.summary, fmt)?);
            if cfg.plots {
                let mut series = Vec::new();
                for mode in ["truncated", "converged"] {
                    for (name, pick) in [
                        ("SV1", (|r: &DuopolySummaryRow| r.mean_ratio_sv1) as fn(&DuopolySummaryRow) -> f64),
                        ("SV2", |r: &DuopolySummaryRow| r.mean_ratio_sv2),
                    ] {
                        series.push(Series {
                            name: format!("{name} {mode}"),
                            points: out
                                .summary
                                .iter()
                                .filter(|r| r.mode == mode)
                                .map(|r| (r.mu, pick(r)))
                                .collect(),
                            style: Style::Line,
                        });
                    }
                }
                let chart = Chart {
                    title: "Duopoly profit ratio per vendor".into(),
                    x_label: "influence mu".into(),
                    y_label: "P0/P1".into(),
                    series,
                };
                written.push(write_text(dir, "duopoly_summary.svg", &chart.to_svg())?);
            }
        }
        ExperimentKind::PriceVsCentrality | ExperimentKind::TotalCostFairness => {
            let out = run_fairness_study(cfg)?;
            written.push(write_table(dir, "fairness_consumers", &out.consumers, fmt)?);
            written.push(write_table(dir, "fairness_summary", &out.summary, fmt)?);
            if cfg.plots {
                for topo in [TopologyKind::PreferentialAttachment, TopologyKind::PoissonTree] {
                    let rows = |s: PricingScenario| {
                        out.consumers
                            .iter()
                            .filter(move |r| r.topology == topo && r.instance == 0 && r.scenario == s)
                    };
                    let label = match topo {
                        TopologyKind::PreferentialAttachment => "pa",
                        TopologyKind::PoissonTree => "tree",
                    };
                    let price = Chart {
                        title: format!("Differentiated price vs centrality ({label})"),
                        x_label: "outward Bonacich centrality".into(),
                        y_label: "per-unit price".into(),
                        series: vec![Series {
                            name: "consumers".into(),
                            points: rows(PricingScenario::Differentiated)
                                .map(|r| (r.centrality, r.price))
                                .collect(),
                            style: Style::Scatter,
                        }],
                    };
                    written.push(write_text(dir, &format!("fairness_price_{label}.svg"), &price.to_svg())?);
                    let cost = Chart {
                        title: format!("Total cost per consumer ({label})"),
                        x_label: "consumer".into(),
                        y_label: "price x investment".into(),
                        series: [
                            PricingScenario::Differentiated,
                            PricingScenario::Uniform,
                            PricingScenario::Binary,
                        ]
                        .into_iter()
                        .map(|s| Series {
                            name: s.to_string(),
                            points: rows(s).map(|r| (r.consumer as f64, r.total_cost)).collect(),
                            style: Style::Scatter,
                        })
                        .collect(),
                    };
                    written.push(write_text(dir, &format!("fairness_cost_{label}.svg"), &cost.to_svg())?);
                }
            }
        }
        ExperimentKind::BinaryPricingStudy => {
            let rows = run_binary_study(cfg)?;
            written.push(write_table(dir, "binary_study", &rows, fmt)?);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_differ_across_parts() {
        let a = derive_seed(1, &[0, 0]);
        assert_ne!(a, derive_seed(1, &[0, 1]));
        assert_ne!(a, derive_seed(2, &[0, 0]));
        assert_ne!(derive_seed(1, &[1, 0]), derive_seed(1, &[0, 1]));
        assert_eq!(a, derive_seed(1, &[0, 0]));
    }

    #[test]
    fn shape_labels_are_file_safe() {
        assert_eq!(shape_label(3.0), "3");
        assert_eq!(shape_label(2.5), "2_5");
    }
}
