//! One module per subcommand, plus the loaders they share.

use std::path::Path;

use prodnet::netstats::{read_edgelist, read_partition, NullModelKind};
use prodnet::panel::read_growth_csv;
use prodnet::spectral::DEFAULT_MIN_OVERLAP;
use prodnet::{GrowthPanel, Network, Partition};

use crate::{open, CliError, Config, StageExt};

pub mod clean;
pub mod eval;
pub mod netcorr;
pub mod reconstruct;
pub mod synth;

pub(crate) fn read_panel(path: &Path, rescaled: bool) -> Result<GrowthPanel, CliError> {
    read_growth_csv(open(path)?, rescaled).stage("reading panel")
}

pub(crate) fn read_network(path: &Path, ids: &[String]) -> Result<Network, CliError> {
    let (net, dropped) = read_edgelist(open(path)?, ids).stage("reading edge list")?;
    if dropped > 0 {
        eprintln!("{}: dropped {dropped} rows with unknown firms or self-loops", path.display());
    }
    Ok(net)
}

pub(crate) fn read_partition_for(path: &Path, ids: &[String]) -> Result<Partition, CliError> {
    read_partition(open(path)?, ids).stage("reading partition")
}

/// Firm ids in order of first appearance in a `firm_id,block` file.
pub(crate) fn partition_ids(path: &Path) -> Result<Vec<String>, CliError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let headers = rdr.headers().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let col = headers
        .iter()
        .position(|h| h == "firm_id")
        .ok_or_else(|| CliError::Config(format!("{}: missing column `firm_id`", path.display())))?;
    let mut seen = std::collections::HashSet::new();
    let mut ids = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let id = rec.get(col).unwrap_or_default().to_string();
        if seen.insert(id.clone()) {
            ids.push(id);
        }
    }
    Ok(ids)
}

pub(crate) fn min_overlap(cfg: &Config) -> Result<usize, CliError> {
    let m = cfg.section_or_default("clean").get_or("min_overlap", DEFAULT_MIN_OVERLAP)?;
    if m < 2 {
        return Err(CliError::Config(format!("[clean] min_overlap = {m} must be at least 2")));
    }
    Ok(m)
}

pub(crate) fn n_draws(cfg: &Config, default: usize) -> Result<usize, CliError> {
    let n = cfg.section_or_default("benchmark").get_or("n_draws", default)?;
    if n == 0 {
        return Err(CliError::Config("[benchmark] n_draws must be at least 1".into()));
    }
    Ok(n)
}

pub(crate) fn parse_model(name: &str) -> Result<NullModelKind, CliError> {
    match name {
        "er" => Ok(NullModelKind::Er),
        "sbm" => Ok(NullModelKind::Sbm),
        "config" => Ok(NullModelKind::Config),
        other => Err(CliError::Config(format!("[benchmark] unknown model `{other}` (er, sbm, config)"))),
    }
}

pub(crate) fn model_name(kind: NullModelKind) -> &'static str {
    match kind {
        NullModelKind::Er => "er",
        NullModelKind::Sbm => "sbm",
        NullModelKind::Config => "config",
    }
}
