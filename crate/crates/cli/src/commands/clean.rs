//! `clean`: growth rates, leave-one-out rescaling and market-mode removal.

use prodnet::panel::{growth_rates, load_sales_csv, rescale_loo, write_growth_csv};
use prodnet::spectral::{clean_market_mode, mp_edges, BulkBenchmark, CleanOptions, SpectrumSummary, SurrogateSource};
use serde::Serialize;

use super::{min_overlap, read_panel};
use crate::{fmt_opt, stage_seed, CliError, Config, OutDir, StageExt};

#[derive(Serialize)]
struct CleanReport {
    firms: usize,
    quarters: usize,
    modes_removed: usize,
    benchmark: &'static str,
    mp_lo: f64,
    mp_hi: f64,
    #[serde(flatten)]
    spectrum: SpectrumSummary,
    surrogate_mean: Option<Vec<f64>>,
}

fn options(cfg: &Config) -> Result<CleanOptions, CliError> {
    let sec = cfg.section_or_default("clean");
    let benchmark = match sec.get_or("benchmark", "surrogate".to_string())?.as_str() {
        "mp" => BulkBenchmark::MarchenkoPastur,
        "surrogate" => BulkBenchmark::Surrogate {
            n_sets: sec.get_or("surrogate_sets", 10)?,
            seed: stage_seed(cfg.seed, "clean.surrogate"),
            source: match sec.get_or("surrogate_source", "empirical".to_string())?.as_str() {
                "empirical" => SurrogateSource::Empirical,
                "gaussian" => SurrogateSource::Gaussian,
                other => {
                    return Err(CliError::Config(format!(
                        "[clean] surrogate_source = {other:?} (empirical, gaussian)"
                    )))
                }
            },
        },
        other => return Err(CliError::Config(format!("[clean] benchmark = {other:?} (mp, surrogate)"))),
    };
    Ok(CleanOptions {
        modes: sec.get_or("modes_to_remove", 1)?,
        min_overlap: min_overlap(cfg)?,
        benchmark,
    })
}

pub fn run(cfg: &Config) -> Result<(), CliError> {
    cfg.section("data")?;
    let sales = cfg.existing_path("data", "sales")?;
    let panel = cfg.existing_path("data", "panel")?;
    let opts = options(cfg)?;
    let out = OutDir::create(cfg.output_dir()?)?;

    let growth = match (sales, panel) {
        (Some(sales), None) => {
            let sec = cfg.section_or_default("panel");
            let sales = load_sales_csv(&sales, sec.get_or("min_years", 8)?).stage("reading sales")?;
            growth_rates(&sales, sec.get_or("horizon", 4)?).stage("growth rates")?
        }
        (None, Some(panel)) => read_panel(&panel, false)?,
        _ => return Err(CliError::Config("[data] needs exactly one of `sales` or `panel`".into())),
    };
    let rescaled = rescale_loo(&growth).stage("rescaling")?;
    let res = clean_market_mode(&rescaled, &opts).stage("cleaning")?;
    if res.report.top_inside_bulk {
        eprintln!("warning: the top eigenvalue lies inside the noise bulk; removing it is not supported by the data");
    }

    out.write_with("growth.csv", "writing growth panel", |w| write_growth_csv(&rescaled, w))?;
    out.write_with("cleaned.csv", "writing cleaned panel", |w| write_growth_csv(&res.cleaned, w))?;

    let mut header = vec!["quarter".to_string()];
    header.extend((1..=res.modes.len()).map(|k| format!("mode_{k}")));
    let rows: Vec<Vec<String>> = rescaled
        .timestamps
        .iter()
        .enumerate()
        .map(|(c, q)| std::iter::once(q.to_string()).chain(res.modes.iter().map(|m| fmt_opt(m[c]))).collect())
        .collect();
    out.csv("modes.csv", &header.iter().map(String::as_str).collect::<Vec<_>>(), &rows)?;

    let n = res.report.eigenvalues.len();
    let rows: Vec<Vec<String>> = (0..n)
        .map(|k| {
            vec![
                (k + 1).to_string(),
                res.report.eigenvalues[n - 1 - k].to_string(),
                fmt_opt(res.surrogate_mean.as_ref().map(|s| s[n - 1 - k])),
            ]
        })
        .collect();
    out.csv("spectrum.csv", &["rank", "eigenvalue", "surrogate_mean"], &rows)?;

    let (mp_lo, mp_hi) = mp_edges(res.report.aspect_ratio).stage("spectrum report")?;
    out.json(
        "spectrum.json",
        &CleanReport {
            firms: rescaled.n_firms(),
            quarters: rescaled.n_times(),
            modes_removed: opts.modes,
            benchmark: match opts.benchmark {
                BulkBenchmark::MarchenkoPastur => "mp",
                BulkBenchmark::Surrogate { .. } => "surrogate",
            },
            mp_lo,
            mp_hi,
            spectrum: res.report.summary(),
            surrogate_mean: res.surrogate_mean.clone(),
        },
    )
}
