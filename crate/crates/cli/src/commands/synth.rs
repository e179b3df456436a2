//! `synth`: planted test instances.

use nalgebra::DMatrix;
use prodnet::netstats::{generate_sbm, BlockScheme};
use prodnet::panel::write_growth_csv;
use prodnet::synth::{apply_missingness, gen_factor_panel, gen_gmrf_panel, CommonMode, FactorModelSpec, Loadings, MissingPattern};
use prodnet::{GrowthPanel, Partition};
use serde::Serialize;

use crate::config::Section;
use crate::{stage_seed, CliError, Config, OutDir, StageExt};

#[derive(Serialize)]
struct Manifest {
    kind: &'static str,
    nodes: usize,
    quarters: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    edges: Option<usize>,
    common_mode: bool,
}

fn missing_pattern(sec: &Section) -> Result<MissingPattern, CliError> {
    match sec.get_or("missing", "none".to_string())?.as_str() {
        "none" => Ok(MissingPattern::None),
        "random" => Ok(MissingPattern::Random {
            p_miss: sec.require("p_miss")?,
        }),
        "staggered" => Ok(MissingPattern::Staggered),
        other => Err(CliError::Config(format!("[synth] missing = {other:?} (none, random, staggered)"))),
    }
}

fn with_missingness(cfg: &Config, panel: GrowthPanel, pattern: MissingPattern) -> Result<GrowthPanel, CliError> {
    if pattern == MissingPattern::None {
        return Ok(panel);
    }
    apply_missingness(&panel, pattern, stage_seed(cfg.seed, "synth.missing")).stage("missingness")
}

fn firm_ids(n: usize) -> Vec<String> {
    let width = n.saturating_sub(1).to_string().len();
    (0..n).map(|i| format!("f{i:0width$}")).collect()
}

pub fn run(cfg: &Config) -> Result<(), CliError> {
    let sec = cfg.section("synth")?;
    match sec.get_or("kind", "gmrf".to_string())?.as_str() {
        "gmrf" => gmrf(cfg, sec),
        "factor" => factor(cfg, sec),
        other => Err(CliError::Config(format!("[synth] kind = {other:?} (gmrf, factor)"))),
    }
}

fn gmrf(cfg: &Config, sec: &Section) -> Result<(), CliError> {
    let n: usize = sec.require("nodes")?;
    let sectors: usize = sec.get_or("sectors", 1)?;
    if sectors == 0 || sectors > n {
        return Err(CliError::Config(format!("[synth] sectors = {sectors} must be in 1..={n}")));
    }
    let rho_in: f64 = sec.require("density_in")?;
    let rho_out: f64 = sec.get_or("density_out", 0.0)?;
    let t: usize = sec.require("t")?;
    let eps: f64 = sec.get_or("eps", 0.5)?;
    let sigma_common: f64 = sec.get_or("sigma_common", 0.0)?;
    let pattern = missing_pattern(sec)?;
    let out = OutDir::create(cfg.output_dir()?)?;

    let partition = Partition::from_labels((0..n).map(|i| i * sectors / n).collect());
    let densities = DMatrix::from_fn(sectors, sectors, |a, b| if a == b { rho_in } else { rho_out });
    let scheme = BlockScheme::new(partition.clone(), densities).stage("block model")?;
    let mut net = generate_sbm(&scheme, stage_seed(cfg.seed, "synth.network")).stage("network")?;
    let ids = firm_ids(n);
    net.set_node_ids(ids.clone());

    let mut inst = gen_gmrf_panel(&net, t, eps, sigma_common, stage_seed(cfg.seed, "synth.panel")).stage("panel")?;
    inst.panel = with_missingness(cfg, inst.panel, pattern)?;
    inst.params.missing = pattern;
    inst.write(out.path()).stage("writing instance")?;

    let rows: Vec<Vec<String>> = ids
        .iter()
        .zip(&partition.labels)
        .map(|(id, &l)| vec![id.clone(), partition.names[l].clone()])
        .collect();
    out.csv("partition.csv", &["firm_id", "block"], &rows)?;
    let rows: Vec<Vec<String>> = (0..sectors)
        .flat_map(|a| (a..sectors).map(move |b| (a, b)))
        .map(|(a, b)| {
            let rho = if a == b { rho_in } else { rho_out };
            vec![partition.names[a].clone(), partition.names[b].clone(), rho.to_string()]
        })
        .collect();
    out.csv("densities.csv", &["block_a", "block_b", "density"], &rows)?;

    if !inst.params.has_common_mode() {
        eprintln!("note: sigma_common = 0, the instance has no common mode");
    }
    out.json(
        "synth.json",
        &Manifest {
            kind: "gmrf",
            nodes: n,
            quarters: t,
            edges: Some(net.edge_count()),
            common_mode: inst.params.has_common_mode(),
        },
    )
}

fn factor(cfg: &Config, sec: &Section) -> Result<(), CliError> {
    let mode = match sec.get_or("mode", "gaussian".to_string())?.as_str() {
        "gaussian" => CommonMode::Gaussian,
        "sine" => CommonMode::Sine {
            period: sec.require("period")?,
            phase: sec.get_or("phase", 0.0)?,
        },
        other => return Err(CliError::Config(format!("[synth] mode = {other:?} (gaussian, sine)"))),
    };
    let spec = FactorModelSpec {
        n: sec.require("nodes")?,
        t: sec.require("t")?,
        sigma: sec.require("sigma")?,
        loadings: Loadings::Uniform,
        mode,
    };
    let pattern = missing_pattern(sec)?;
    let out = OutDir::create(cfg.output_dir()?)?;

    let (mut panel, v) = gen_factor_panel(&spec, stage_seed(cfg.seed, "synth.panel")).stage("panel")?;
    panel.firm_ids = firm_ids(spec.n);
    let panel = with_missingness(cfg, panel, pattern)?;
    out.write_with("panel.csv", "writing panel", |w| write_growth_csv(&panel, w))?;
    let rows: Vec<Vec<String>> = panel
        .timestamps
        .iter()
        .zip(&v)
        .map(|(q, x)| vec![q.to_string(), x.to_string()])
        .collect();
    out.csv("mode.csv", &["quarter", "mode"], &rows)?;
    if spec.sigma == 0.0 {
        eprintln!("note: sigma = 0, the panel has no common mode");
    }
    out.json(
        "synth.json",
        &Manifest {
            kind: "factor",
            nodes: spec.n,
            quarters: spec.t,
            edges: None,
            common_mode: spec.sigma > 0.0,
        },
    )
}
