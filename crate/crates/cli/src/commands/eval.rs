//! `eval`: score a predicted network against the truth and random benchmarks.

use prodnet::evalx::{benchmark_comparison, write_comparison_csv};

use super::{n_draws, partition_ids, read_network, read_partition_for};
use crate::{stage_seed, CliError, Config, OutDir, StageExt};

pub fn run(cfg: &Config) -> Result<(), CliError> {
    let truth_path = cfg.required_path("data", "truth")?;
    let predicted_path = cfg.required_path("data", "predicted")?;
    let partition_path = cfg.required_path("data", "partition")?;
    let n_draws = n_draws(cfg, 50)?;
    let out = OutDir::create(cfg.output_dir()?)?;

    // the partition file fixes the node set
    let ids = partition_ids(&partition_path)?;
    let partition = read_partition_for(&partition_path, &ids)?;
    let truth = read_network(&truth_path, &ids)?;
    let predicted = read_network(&predicted_path, &ids)?;
    let cmp = benchmark_comparison(&truth, &predicted, &partition, n_draws, stage_seed(cfg.seed, "eval"))
        .stage("evaluation")?;
    out.json("comparison.json", &cmp)?;
    out.write_with("comparison.csv", "writing comparison", |w| write_comparison_csv(&cmp, w))
}
