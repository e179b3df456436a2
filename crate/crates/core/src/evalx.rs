//! Link-prediction scores over unordered node pairs, and comparison against
//! random-graph benchmarks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netstats::{block_densities, generate_er, generate_sbm, summary, BlockScheme, Network, Partition};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Pair-level confusion counts, an edge being the positive class.
pub fn confusion(truth: &Network, pred: &Network) -> Result<ConfusionCounts> {
    if truth.n() != pred.n() || truth.node_ids() != pred.node_ids() {
        return Err(Error::Contract("networks are defined on different node sets".into()));
    }
    let tp = pred.edges().filter(|&(i, j)| truth.has_edge(i, j)).count();
    let fp = pred.edge_count() - tp;
    let fn_ = truth.edge_count() - tp;
    Ok(ConfusionCounts {
        tp,
        fp,
        fn_,
        tn: truth.pair_count() - tp - fp - fn_,
    })
}

/// Scores with `None` wherever a denominator vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tpr: Option<f64>,
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(c: &ConfusionCounts) -> Metrics {
    Metrics {
        tpr: ratio(c.tp, c.tp + c.fn_),
        accuracy: ratio(c.tp + c.tn, c.total()),
        f1: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
    }
}

pub fn precision(c: &ConfusionCounts) -> Option<f64> {
    ratio(c.tp, c.tp + c.fp)
}

pub const METRIC_NAMES: [&str; 3] = ["tpr", "accuracy", "f1"];

impl Metrics {
    pub fn values(&self) -> [Option<f64>; 3] {
        [self.tpr, self.accuracy, self.f1]
    }
}

/// Mean and sample standard deviation of a metric over the draws where it is defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStat {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub defined: usize,
}

impl MetricStat {
    fn from_samples(xs: impl Iterator<Item = Option<f64>>) -> MetricStat {
        let xs: Vec<f64> = xs.flatten().collect();
        let n = xs.len();
        if n == 0 {
            return MetricStat {
                mean: None,
                std: None,
                defined: 0,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std = (n > 1).then(|| (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
        MetricStat {
            mean: Some(mean),
            std: std.or(Some(0.0)),
            defined: n,
        }
    }

    /// `value > mean + 2·std`; false when either side is undefined.
    pub fn exceeded_by(&self, value: Option<f64>) -> bool {
        match (value, self.mean, self.std) {
            (Some(v), Some(m), Some(s)) => v > m + 2.0 * s,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricFlags {
    pub tpr: bool,
    pub accuracy: bool,
    pub f1: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub model: String,
    pub tpr: MetricStat,
    pub accuracy: MetricStat,
    pub f1: MetricStat,
    /// Whether the prediction beats this benchmark's mean by more than two standard deviations.
    pub exceeded: MetricFlags,
}

impl BenchmarkResult {
    pub fn stats(&self) -> [&MetricStat; 3] {
        [&self.tpr, &self.accuracy, &self.f1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub confusion: ConfusionCounts,
    pub predicted: Metrics,
    pub benchmarks: Vec<BenchmarkResult>,
}

fn benchmark(
    name: &str,
    truth: &Network,
    predicted: &Metrics,
    n_draws: usize,
    draw: impl Fn(u64) -> Result<Network> + Sync,
) -> Result<BenchmarkResult> {
    let scores = (0..n_draws as u64)
        .into_par_iter()
        .map(|k| {
            let mut net = draw(k)?;
            net.set_node_ids(truth.node_ids().to_vec());
            Ok(metrics(&confusion(truth, &net)?))
        })
        .collect::<Result<Vec<Metrics>>>()?;
    let tpr = MetricStat::from_samples(scores.iter().map(|m| m.tpr));
    let accuracy = MetricStat::from_samples(scores.iter().map(|m| m.accuracy));
    let f1 = MetricStat::from_samples(scores.iter().map(|m| m.f1));
    Ok(BenchmarkResult {
        model: name.to_string(),
        exceeded: MetricFlags {
            tpr: tpr.exceeded_by(predicted.tpr),
            accuracy: accuracy.exceeded_by(predicted.accuracy),
            f1: f1.exceeded_by(predicted.f1),
        },
        tpr,
        accuracy,
        f1,
    })
}

/// Scores `pred` against `truth`, alongside density-matched Erdős–Rényi draws
/// and block-model draws with the true network's sector densities.
///
/// ER draw `k` uses seed `seed + k`; block-model draw `k` uses `seed + 2³² + k`.
pub fn benchmark_comparison(
    truth: &Network,
    pred: &Network,
    partition: &Partition,
    n_draws: usize,
    seed: u64,
) -> Result<ComparisonReport> {
    if n_draws == 0 {
        return Err(Error::Domain("n_draws must be at least 1".into()));
    }
    let c = confusion(truth, pred)?;
    let predicted = metrics(&c);
    let n = truth.n();
    let p = summary(truth).density;
    let er = benchmark("er", truth, &predicted, n_draws, |k| generate_er(n, p, rng::derived(seed, k)))?;
    let scheme = BlockScheme::new(partition.clone(), block_densities(truth, partition)?)?;
    let sbm = benchmark("sbm", truth, &predicted, n_draws, |k| {
        generate_sbm(&scheme, rng::derived(seed, (1u64 << 32) + k))
    })?;
    Ok(ComparisonReport {
        confusion: c,
        predicted,
        benchmarks: vec![er, sbm],
    })
}

/// One `method,metric,value,std` row per method and metric; missing values are empty fields.
pub fn write_comparison_csv<W: std::io::Write>(report: &ComparisonReport, writer: W) -> Result<()> {
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["method", "metric", "value", "std"])?;
    for (name, v) in METRIC_NAMES.iter().zip(report.predicted.values()) {
        w.write_record(["reconstruction", name, &fmt(v), ""])?;
    }
    for b in &report.benchmarks {
        for (name, s) in METRIC_NAMES.iter().zip(b.stats()) {
            w.write_record([b.model.as_str(), name, &fmt(s.mean), &fmt(s.std)])?;
        }
    }
    w.flush().map_err(|e| Error::io("<comparison csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> Network {
        Network::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    #[test]
    fn confusion_examples() {
        let t = triangle();
        let c = confusion(&t, &t).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));

        let net = Network::from_edges(5, [(0, 1), (2, 3), (1, 4)]).unwrap();
        let complement = Network::from_edges(
            5,
            (0..5).flat_map(|j| (0..j).map(move |i| (i, j))).filter(|&(i, j)| !net.has_edge(i, j)),
        )
        .unwrap();
        let c = confusion(&net, &complement).unwrap();
        assert_eq!((c.tp, c.tn), (0, 0));

        let single = Network::from_edges(3, [(0, 1)]).unwrap();
        let c = confusion(&t, &single).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 1, fn_: 2, fp: 0, tn: 0 });
        assert!(confusion(&t, &Network::empty(4)).is_err());
    }

    #[test]
    fn metric_examples() {
        let perfect = metrics(&ConfusionCounts { tp: 4, fp: 0, tn: 6, fn_: 0 });
        assert_eq!(perfect.values(), [Some(1.0); 3]);

        let m = metrics(&ConfusionCounts { tp: 1, fp: 0, tn: 0, fn_: 2 });
        assert!((m.tpr.unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.accuracy.unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.f1, Some(0.5));

        let empty = confusion(&Network::empty(4), &Network::empty(4)).unwrap();
        let m = metrics(&empty);
        assert_eq!((m.tpr, m.accuracy, m.f1), (None, Some(1.0), None));
    }

    #[test]
    fn f1_is_harmonic_mean() {
        let c = ConfusionCounts { tp: 7, fp: 3, tn: 40, fn_: 5 };
        let (p, r) = (precision(&c).unwrap(), metrics(&c).tpr.unwrap());
        assert!((metrics(&c).f1.unwrap() - 2.0 * p * r / (p + r)).abs() < 1e-12);
    }

    #[test]
    fn relabeling_leaves_metrics_unchanged() {
        let truth = generate_er(30, 0.2, 1).unwrap();
        let pred = generate_er(30, 0.2, 2).unwrap();
        let perm: Vec<usize> = (0..30).map(|i| (i * 11 + 5) % 30).collect();
        let a = metrics(&confusion(&truth, &pred).unwrap());
        let b = metrics(&confusion(&truth.relabel(&perm), &pred.relabel(&perm)).unwrap());
        assert_eq!(a, b);
    }

    fn sectors(n: usize, b: usize) -> Partition {
        Partition::from_labels((0..n).map(|i| i * b / n).collect())
    }

    fn planted(seed: u64) -> (Network, Partition) {
        let part = sectors(90, 3);
        let rho = nalgebra::DMatrix::from_fn(3, 3, |a, b| if a == b { 0.2 } else { 0.02 });
        let net = generate_sbm(&BlockScheme::new(part.clone(), rho).unwrap(), seed).unwrap();
        (net, part)
    }

    #[test]
    fn truth_beats_both_benchmarks() {
        let (truth, part) = planted(3);
        let r = benchmark_comparison(&truth, &truth, &part, 50, 4).unwrap();
        assert_eq!(r.benchmarks.len(), 2);
        for b in &r.benchmarks {
            assert_eq!(b.exceeded, MetricFlags { tpr: true, accuracy: true, f1: true }, "{}", b.model);
        }
        assert_eq!(r, benchmark_comparison(&truth, &truth, &part, 50, 4).unwrap());
    }

    #[test]
    fn er_draw_is_indistinguishable_from_er_benchmark() {
        let mut inside = 0;
        for seed in 0..5 {
            let (truth, part) = planted(10 + seed);
            let p = summary(&truth).density;
            let mut pred = generate_er(90, p, 1000 + seed).unwrap();
            pred.set_node_ids(truth.node_ids().to_vec());
            let r = benchmark_comparison(&truth, &pred, &part, 50, seed).unwrap();
            let er = &r.benchmarks[0];
            let ok = er.stats().iter().zip(r.predicted.values()).all(|(s, v)| {
                (v.unwrap() - s.mean.unwrap()).abs() <= 3.0 * s.std.unwrap()
            });
            inside += ok as usize;
        }
        assert!(inside >= 3, "{inside}/5");
    }

    #[test]
    fn comparison_csv_shape() {
        let (truth, part) = planted(5);
        let r = benchmark_comparison(&truth, &Network::with_ids(truth.node_ids().to_vec()), &part, 5, 1).unwrap();
        let mut buf = Vec::new();
        write_comparison_csv(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 9);
        // empty prediction: f1 is 0 and precision-free metrics remain defined
        assert!(text.contains("reconstruction,f1,0,"));
    }
}
