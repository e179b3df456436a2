//! `reconstruct`: block-wise network reconstruction from the cleaned panel.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use prodnet::evalx::{benchmark_comparison, write_comparison_csv};
use prodnet::netstats::write_edgelist;
use prodnet::pipeline::{reconstruct_network, ReconstructionPlan, ReconstructionReport};
use prodnet::sgl::SolverConfig;
use prodnet::spectral::corr_matrix;
use prodnet::{Network, Partition};
use serde::Serialize;

use super::{min_overlap, n_draws, read_network, read_panel, read_partition_for};
use crate::{open, stage_seed, CliError, Config, OutDir, StageExt};

#[derive(Serialize)]
struct RunReport<'a> {
    #[serde(flatten)]
    report: &'a ReconstructionReport,
    failures: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_seconds: Option<f64>,
}

/// Reads `block_a,block_b,density`. Every sector needs a within-sector row;
/// sector pairs without a row get density 0.
pub(crate) fn read_densities(path: &Path, partition: &Partition) -> Result<(Vec<f64>, DMatrix<f64>), CliError> {
    #[derive(serde::Deserialize)]
    struct Rec {
        block_a: String,
        block_b: String,
        density: f64,
    }
    let err = |msg: String| CliError::Config(format!("{}: {msg}", path.display()));
    let index: BTreeMap<&str, usize> = partition.names.iter().enumerate().map(|(k, s)| (s.as_str(), k)).collect();
    let b = partition.n_blocks();
    let mut table: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    for (k, rec) in rdr.deserialize::<Rec>().enumerate() {
        let rec = rec.map_err(|e| err(format!("line {}: {e}", k + 2)))?;
        let lookup = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| err(format!("line {}: unknown sector `{name}`", k + 2)))
        };
        let (a, c) = (lookup(&rec.block_a)?, lookup(&rec.block_b)?);
        let key = (a.min(c), a.max(c));
        if let Some(old) = table.insert(key, rec.density) {
            if old != rec.density {
                return Err(err(format!(
                    "line {}: conflicting densities for {}|{}",
                    k + 2,
                    rec.block_a,
                    rec.block_b
                )));
            }
        }
    }
    let diag = (0..b)
        .map(|a| {
            table
                .get(&(a, a))
                .copied()
                .ok_or_else(|| err(format!("no within-sector density for `{}`", partition.names[a])))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let offdiag = DMatrix::from_fn(b, b, |a, c| table.get(&(a.min(c), a.max(c))).copied().unwrap_or(0.0));
    Ok((diag, offdiag))
}

pub(crate) fn solver_config(cfg: &Config) -> Result<SolverConfig, CliError> {
    let sec = cfg.section_or_default("solver");
    let d = SolverConfig::default();
    Ok(SolverConfig {
        beta: sec.get_or("beta", d.beta)?,
        max_iter: sec.get_or("max_iter", d.max_iter)?,
        tol: sec.get_or("tol", d.tol)?,
        ..d
    })
}

pub fn run(cfg: &Config) -> Result<(), CliError> {
    let cleaned_path = cfg.required_path("data", "cleaned")?;
    let partition_path = cfg.required_path("data", "partition")?;
    let truth_path = cfg.existing_path("data", "truth")?;
    let densities_path = cfg.required_path("plan", "densities")?;
    let spectra_samples = cfg.section("plan")?.get_or("spectra_samples", 1000)?;
    let solver = solver_config(cfg)?;
    let min_overlap = min_overlap(cfg)?;
    let n_draws = n_draws(cfg, 50)?;
    let timing = cfg.timing()?;
    let out = OutDir::create(cfg.output_dir()?)?;

    let cleaned = read_panel(&cleaned_path, true)?;
    let partition = read_partition_for(&partition_path, &cleaned.firm_ids)?;
    let (diag, offdiag) = read_densities(&densities_path, &partition)?;
    let truth = truth_path.map(|p| read_network(&p, &cleaned.firm_ids)).transpose()?;
    let plan = ReconstructionPlan {
        partition: partition.clone(),
        target_density_diag: diag,
        target_density_offdiag: offdiag,
        spectra_samples,
        solver,
        seed: stage_seed(cfg.seed, "reconstruct"),
    };

    let start = Instant::now();
    let c = corr_matrix(&cleaned, 0, min_overlap).stage("correlation")?;
    let result = reconstruct_network(&c, &plan);
    let wall_time_seconds = timing.then(|| start.elapsed().as_secs_f64());

    let write = |net: &Network, report: &ReconstructionReport, failures: &[String]| -> Result<(), CliError> {
        out.write_with("network.csv", "writing network", |w| write_edgelist(net, w))?;
        out.json(
            "reconstruction.json",
            &RunReport {
                report,
                failures,
                wall_time_seconds,
            },
        )
    };
    let net = match result {
        Ok((net, report)) => {
            write(&net, &report, &[])?;
            net
        }
        Err(prodnet::Error::PartialResult { reason, partial }) => {
            write(&partial.network, &partial.report, &partial.failures)?;
            return Err(prodnet::Error::PartialResult { reason, partial }).stage("reconstruction");
        }
        Err(e) => return Err(e).stage("reconstruction"),
    };

    if let Some(truth) = truth {
        let seed = stage_seed(cfg.seed, "reconstruct.benchmark");
        let cmp = benchmark_comparison(&truth, &net, &partition, n_draws, seed).stage("evaluation")?;
        out.json("comparison.json", &cmp)?;
        out.write_with("comparison.csv", "writing comparison", |w| write_comparison_csv(&cmp, w))?;
    }
    Ok(())
}
