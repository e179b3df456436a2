//! `netcorr`: average correlation on the network, null-model benchmarks and
//! distance decay, for the rescaled and the cleaned panel.

use prodnet::netstats::{avg_corr_on_network, benchmark_avg_corr, distance_decay, BenchmarkStat, NullModel, NullModelKind};
use prodnet::spectral::corr_matrix;
use serde::Serialize;

use super::{min_overlap, model_name, n_draws, parse_model, read_network, read_panel, read_partition_for};
use crate::{fmt_opt, stage_seed, CliError, Config, OutDir, StageExt};

#[derive(Serialize)]
struct Benchmark {
    model: &'static str,
    #[serde(flatten)]
    stat: BenchmarkStat,
}

#[derive(Serialize)]
struct Entry {
    panel: &'static str,
    lag: i64,
    network_mean: f64,
    network_entries: usize,
    benchmarks: Vec<Benchmark>,
    /// Mean correlation at distance 1..=k_max.
    decay: Vec<Option<f64>>,
}

#[derive(Serialize)]
struct NetcorrReport {
    firms: usize,
    edges: usize,
    n_draws: usize,
    entries: Vec<Entry>,
}

pub fn run(cfg: &Config) -> Result<(), CliError> {
    let growth_path = cfg.required_path("data", "growth")?;
    let cleaned_path = cfg.required_path("data", "cleaned")?;
    let edges_path = cfg.required_path("data", "edges")?;
    let partition_path = cfg.existing_path("data", "partition")?;

    let sec = cfg.section_or_default("netcorr");
    let lags: Vec<i64> = sec.list("lags")?.unwrap_or_else(|| vec![0]);
    let k_max: usize = sec.get_or("k_max", 3)?;
    if k_max == 0 {
        return Err(CliError::Config("[netcorr] k_max must be at least 1".into()));
    }
    let n_draws = n_draws(cfg, 100)?;
    let models: Vec<NullModelKind> = match cfg.section_or_default("benchmark").list::<String>("models")? {
        Some(names) => names.iter().map(|s| parse_model(s)).collect::<Result<_, _>>()?,
        None if partition_path.is_some() => vec![NullModelKind::Er, NullModelKind::Sbm, NullModelKind::Config],
        None => vec![NullModelKind::Er, NullModelKind::Config],
    };
    let min_overlap = min_overlap(cfg)?;
    let out = OutDir::create(cfg.output_dir()?)?;

    let growth = read_panel(&growth_path, true)?;
    let cleaned = read_panel(&cleaned_path, true)?;
    if growth.firm_ids != cleaned.firm_ids {
        return Err(CliError::Config("growth and cleaned panels list different firms".into()));
    }
    let net = read_network(&edges_path, &growth.firm_ids)?;
    if net.edge_count() == 0 {
        return Err(CliError::Config(format!("{}: no edges between known firms", edges_path.display())));
    }
    let partition = partition_path
        .map(|p| read_partition_for(&p, &growth.firm_ids))
        .transpose()?;
    let nulls = models
        .iter()
        .map(|&kind| {
            NullModel::matching(kind, &net, partition.as_ref())
                .stage("null model")
                .map(|m| (kind, m))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut entries = Vec::new();
    for (name, panel) in [("rescaled", &growth), ("cleaned", &cleaned)] {
        for &lag in &lags {
            let c = corr_matrix(panel, lag, min_overlap).stage("correlation")?;
            let avg = avg_corr_on_network(&c, &net).stage("network average")?;
            let benchmarks = nulls
                .iter()
                .map(|(kind, model)| {
                    // the same draws serve every panel and lag
                    let seed = stage_seed(cfg.seed, &format!("netcorr.{}", model_name(*kind)));
                    benchmark_avg_corr(&c, model, n_draws, seed)
                        .stage("benchmark")
                        .map(|stat| Benchmark {
                            model: model_name(*kind),
                            stat,
                        })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let decay = distance_decay(&c, &net, k_max).stage("distance decay")?;
            entries.push(Entry {
                panel: name,
                lag,
                network_mean: avg.mean,
                network_entries: avg.count,
                benchmarks,
                decay,
            });
        }
    }

    let mut rows = Vec::new();
    for e in &entries {
        rows.push(vec![
            e.panel.to_string(),
            e.lag.to_string(),
            "network".into(),
            e.network_mean.to_string(),
            String::new(),
            e.network_entries.to_string(),
        ]);
        for b in &e.benchmarks {
            rows.push(vec![
                e.panel.to_string(),
                e.lag.to_string(),
                b.model.to_string(),
                b.stat.mean.to_string(),
                b.stat.std.to_string(),
                n_draws.to_string(),
            ]);
        }
    }
    out.csv("network_corr.csv", &["panel", "lag", "series", "mean", "std", "count"], &rows)?;

    let rows: Vec<Vec<String>> = entries
        .iter()
        .flat_map(|e| {
            e.decay
                .iter()
                .enumerate()
                .map(|(k, d)| vec![e.panel.to_string(), e.lag.to_string(), (k + 1).to_string(), fmt_opt(*d)])
        })
        .collect();
    out.csv("decay.csv", &["panel", "lag", "k", "mean"], &rows)?;

    out.json(
        "netcorr.json",
        &NetcorrReport {
            firms: net.n(),
            edges: net.edge_count(),
            n_draws,
            entries,
        },
    )
}
