//! Pairwise-complete correlation matrices, their spectra, random-matrix
//! benchmarks and common-mode removal.
//!
//! Correlations are Pearson coefficients computed on the set of times at which
//! both series are observed. For a fully observed panel this is exactly the
//! ordinary sample correlation, and the diagonal is identically one.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::panel::{rescale_loo, GrowthPanel};
use crate::rng;

/// Pairs co-observed on fewer quarters than this get correlation zero.
pub const DEFAULT_MIN_OVERLAP: usize = 8;

/// Correlation matrix at a given lag, with co-observation counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrMatrix {
    pub lag: i64,
    pub values: DMatrix<f64>,
    pub overlap: DMatrix<usize>,
    /// Number of time columns in the panel the matrix was computed from.
    pub n_times: usize,
    pub ids: Vec<String>,
}

impl CorrMatrix {
    pub fn size(&self) -> usize {
        self.values.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    /// Principal submatrix on `rows` (in that order).
    pub fn submatrix(&self, rows: &[usize]) -> CorrMatrix {
        let k = rows.len();
        CorrMatrix {
            lag: self.lag,
            values: DMatrix::from_fn(k, k, |a, b| self.values[(rows[a], rows[b])]),
            overlap: DMatrix::from_fn(k, k, |a, b| self.overlap[(rows[a], rows[b])]),
            n_times: self.n_times,
            ids: rows.iter().map(|&r| self.ids[r].clone()).collect(),
        }
    }

    /// Builds a lag-0 matrix from explicit values; every pair counts as fully overlapping.
    pub fn from_values(values: DMatrix<f64>, n_times: usize) -> CorrMatrix {
        let n = values.nrows();
        CorrMatrix {
            lag: 0,
            overlap: DMatrix::from_element(n, n, n_times),
            values,
            n_times,
            ids: (0..n).map(|i| format!("f{i}")).collect(),
        }
    }
}

#[derive(Default, Clone, Copy)]
struct Moments {
    n: usize,
    sx: f64,
    sy: f64,
    sxx: f64,
    syy: f64,
    sxy: f64,
}

impl Moments {
    fn push(&mut self, x: f64, y: f64) {
        self.n += 1;
        self.sx += x;
        self.sy += y;
        self.sxx += x * x;
        self.syy += y * y;
        self.sxy += x * y;
    }

    fn pearson(&self) -> f64 {
        let n = self.n as f64;
        let vx = self.sxx - self.sx * self.sx / n;
        let vy = self.syy - self.sy * self.sy / n;
        if !(vx > 0.0 && vy > 0.0) {
            return 0.0;
        }
        ((self.sxy - self.sx * self.sy / n) / (vx * vy).sqrt()).clamp(-1.0, 1.0)
    }
}

/// Time window `[start, end)` of series `i` that pairs with `[start+lag, end+lag)` of `j`.
fn lag_window(t: usize, lag: i64) -> (usize, usize) {
    if lag >= 0 {
        (0, t.saturating_sub(lag as usize))
    } else {
        ((-lag) as usize, t)
    }
}

fn standardized_window(g: &GrowthPanel, i: usize, start: usize, end: usize) -> Vec<f64> {
    let row = &g.row(i)[start..end];
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let ss: f64 = row.iter().map(|v| (v - mean).powi(2)).sum();
    if !(ss > 0.0) {
        return vec![0.0; row.len()];
    }
    let s = ss.sqrt();
    row.iter().map(|v| (v - mean) / s).collect()
}

/// `C_ij(lag)`: correlation of `g_i(t)` with `g_j(t + lag)` over co-observed times.
pub fn corr_matrix(g: &GrowthPanel, lag: i64, min_overlap: usize) -> Result<CorrMatrix> {
    if !g.rescaled {
        return Err(Error::Contract("correlation requires a rescaled panel".into()));
    }
    if min_overlap < 2 {
        return Err(Error::Contract("min_overlap must be at least 2".into()));
    }
    let n = g.n_firms();
    let t = g.n_times();
    let (start, end) = lag_window(t, lag);
    let span = end.saturating_sub(start);
    let shift = |c: usize| (c as i64 + lag) as usize;

    let mut values = DMatrix::zeros(n, n);
    let mut overlap = DMatrix::zeros(n, n);

    if g.is_fully_observed() && span >= 2 {
        let (js, je) = (shift(start), shift(end - 1) + 1);
        let mut head = DMatrix::zeros(span, n);
        let mut tail = DMatrix::zeros(span, n);
        for i in 0..n {
            head.column_mut(i)
                .copy_from_slice(&standardized_window(g, i, start, end));
            tail.column_mut(i).copy_from_slice(&standardized_window(g, i, js, je));
        }
        values = head.tr_mul(&tail);
        overlap.fill(span);
        if span < min_overlap {
            values.fill(0.0);
        }
        if lag == 0 {
            for i in 0..n {
                let live = head.column(i).iter().any(|v| *v != 0.0);
                values[(i, i)] = if live { 1.0 } else { 0.0 };
            }
            values = (&values + values.transpose()) * 0.5;
        }
        values.apply(|v| *v = v.clamp(-1.0, 1.0));
    } else {
        let rows: Vec<Vec<(usize, f64)>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut row = vec![(0usize, 0.0f64); n];
                let j0 = if lag == 0 { i } else { 0 };
                for (j, cell) in row.iter_mut().enumerate().skip(j0) {
                    let (mi, mj) = (g.mask_row(i), g.mask_row(j));
                    let (ri, rj) = (g.row(i), g.row(j));
                    let mut m = Moments::default();
                    for c in start..end {
                        let d = shift(c);
                        if mi[c] && mj[d] {
                            m.push(ri[c], rj[d]);
                        }
                    }
                    let r = if lag == 0 && i == j {
                        if m.n >= 2 && m.pearson() != 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    } else if m.n >= min_overlap {
                        m.pearson()
                    } else {
                        0.0
                    };
                    *cell = (m.n, r);
                }
                row
            })
            .collect();
        for (i, row) in rows.iter().enumerate() {
            let j0 = if lag == 0 { i } else { 0 };
            for (j, &(o, r)) in row.iter().enumerate().skip(j0) {
                values[(i, j)] = r;
                overlap[(i, j)] = o;
                if lag == 0 {
                    values[(j, i)] = r;
                    overlap[(j, i)] = o;
                }
            }
        }
    }

    Ok(CorrMatrix {
        lag,
        values,
        overlap,
        n_times: t,
        ids: g.firm_ids.clone(),
    })
}

/// Full eigen-decomposition of a lag-0 correlation matrix.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the unit eigenvector of `eigenvalues[k]`, oriented so its entries sum to `>= 0`.
    pub eigenvectors: DMatrix<f64>,
    pub bulk_lo: f64,
    pub bulk_hi: f64,
    pub outlier_indices: Vec<usize>,
    /// `q = N / T`.
    pub aspect_ratio: f64,
    /// Set when the largest eigenvalue does not clear the noise bulk.
    pub top_inside_bulk: bool,
}

impl SpectrumReport {
    /// Replaces the benchmark interval and recomputes outliers and the warning flag.
    pub fn set_bulk(&mut self, lo: f64, hi: f64) {
        self.bulk_lo = lo;
        self.bulk_hi = hi;
        self.outlier_indices = self
            .eigenvalues
            .iter()
            .enumerate()
            .filter(|(_, &l)| l < lo || l > hi)
            .map(|(k, _)| k)
            .collect();
        self.top_inside_bulk = self.eigenvalues.last().map_or(true, |&l| l <= hi);
    }

    pub fn top_eigenvector(&self) -> Vec<f64> {
        self.eigenvector(self.eigenvalues.len() - 1)
    }

    pub fn eigenvector(&self, k: usize) -> Vec<f64> {
        self.eigenvectors.column(k).iter().copied().collect()
    }

    pub fn summary(&self) -> SpectrumSummary {
        SpectrumSummary {
            eigenvalues: self.eigenvalues.clone(),
            aspect_ratio: self.aspect_ratio,
            bulk_lo: self.bulk_lo,
            bulk_hi: self.bulk_hi,
            outlier_indices: self.outlier_indices.clone(),
            top_inside_bulk: self.top_inside_bulk,
        }
    }
}

/// JSON form of a [`SpectrumReport`] (eigenvectors omitted).
#[derive(Debug, Clone, Serialize, serde::Deserialize, PartialEq)]
pub struct SpectrumSummary {
    pub eigenvalues: Vec<f64>,
    pub aspect_ratio: f64,
    pub bulk_lo: f64,
    pub bulk_hi: f64,
    pub outlier_indices: Vec<usize>,
    pub top_inside_bulk: bool,
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
pub(crate) fn sorted_eigen(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite matrix entry".into()));
    }
    let eig = m.clone().symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.column_mut(dst).copy_from(&eig.eigenvectors.column(src));
    }
    Ok((vals, vecs))
}

pub(crate) fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn eigendecompose(c: &CorrMatrix) -> Result<SpectrumReport> {
    if c.lag != 0 {
        return Err(Error::Contract(format!(
            "eigendecomposition needs a symmetric lag-0 matrix, got lag {}",
            c.lag
        )));
    }
    let (eigenvalues, mut eigenvectors) = sorted_eigen(&c.values)?;
    for mut col in eigenvectors.column_iter_mut() {
        if col.sum() < 0.0 {
            col.neg_mut();
        }
    }
    let n = c.size();
    let q = if c.n_times > 0 {
        n as f64 / c.n_times as f64
    } else {
        f64::INFINITY
    };
    let (lo, hi) = mp_edges(q).unwrap_or((0.0, f64::INFINITY));
    let mut report = SpectrumReport {
        eigenvalues,
        eigenvectors,
        bulk_lo: lo,
        bulk_hi: hi,
        outlier_indices: Vec::new(),
        aspect_ratio: q,
        top_inside_bulk: false,
    };
    report.set_bulk(lo, hi);
    Ok(report)
}

/// Marčenko–Pastur bulk edges `((1-√q)², (1+√q)²)` for unit-variance noise.
pub fn mp_edges(q: f64) -> Result<(f64, f64)> {
    if !(q >= 0.0) || !q.is_finite() {
        return Err(Error::Domain(format!("aspect ratio must be >= 0, got {q}")));
    }
    let s = q.sqrt();
    Ok(((1.0 - s).powi(2), (1.0 + s).powi(2)))
}

/// Marčenko–Pastur density at `x` (continuous part only).
pub fn mp_density(q: f64, x: f64) -> f64 {
    let Ok((lo, hi)) = mp_edges(q) else {
        return 0.0;
    };
    if x <= lo || x >= hi || q == 0.0 {
        return 0.0;
    }
    ((hi - x) * (x - lo)).sqrt() / (2.0 * std::f64::consts::PI * q * x)
}

/// Marčenko–Pastur cumulative distribution, including the atom at zero when `q > 1`.
pub fn mp_cdf(q: f64, x: f64) -> f64 {
    let Ok((lo, hi)) = mp_edges(q) else {
        return f64::NAN;
    };
    let atom = if q > 1.0 { 1.0 - 1.0 / q } else { 0.0 };
    if x < 0.0 {
        return 0.0;
    }
    if q == 0.0 {
        return if x >= 1.0 { 1.0 } else { 0.0 };
    }
    if x <= lo {
        return atom;
    }
    if x >= hi {
        return 1.0;
    }
    // λ = m - r cos θ removes the square-root endpoint singularities
    let m = 0.5 * (lo + hi);
    let r = 0.5 * (hi - lo);
    let theta_x = ((m - x) / r).clamp(-1.0, 1.0).acos();
    let f = |th: f64| {
        let s = th.sin();
        r * r * s * s / (2.0 * std::f64::consts::PI * q * (m - r * th.cos()))
    };
    let steps = 2048;
    let h = theta_x / steps as f64;
    let mut acc = f(0.0) + f(theta_x);
    for k in 1..steps {
        acc += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    (atom + acc * h / 3.0).min(1.0)
}

/// Kolmogorov–Smirnov distance between an empirical sample and the MP law.
pub fn ks_distance_mp(eigenvalues: &[f64], q: f64) -> f64 {
    let mut xs = eigenvalues.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = mp_cdf(q, x);
            (f - k as f64 / n).abs().max((f - (k + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

/// Distribution used to redraw observed entries of a surrogate panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurrogateSource {
    /// Uniform resampling of the pooled observed values.
    Empirical,
    /// Standard normal draws.
    Gaussian,
}

/// Sorted correlation spectra of `n_sets` surrogate panels sharing `g`'s mask.
///
/// Set `k` is drawn from seed `seed + k`.
pub fn surrogate_spectrum(
    g: &GrowthPanel,
    n_sets: usize,
    seed: u64,
    source: SurrogateSource,
    min_overlap: usize,
) -> Result<Vec<Vec<f64>>> {
    if n_sets == 0 {
        return Err(Error::Domain("n_sets must be at least 1".into()));
    }
    let pool: Vec<f64> = (0..g.n_firms())
        .flat_map(|i| g.observed(i).map(|(_, v)| v))
        .collect();
    if pool.is_empty() {
        return Err(Error::EmptyPanel("no observed entries to resample".into()));
    }
    (0..n_sets as u64)
        .into_par_iter()
        .map(|k| {
            let surrogate = surrogate_panel(g, &pool, rng::derived(seed, k), source);
            let c = corr_matrix(&rescale_loo(&surrogate)?, 0, min_overlap)?;
            Ok(sorted_eigenvalues(&c.values))
        })
        .collect()
}

fn surrogate_panel(g: &GrowthPanel, pool: &[f64], seed: u64, source: SurrogateSource) -> GrowthPanel {
    use rand::Rng;
    let mut r = rng::seeded(seed);
    let mut out = g.clone();
    out.rescaled = false;
    let mask = g.mask().to_vec();
    for (v, m) in out.values_mut().iter_mut().zip(mask) {
        if m {
            *v = match source {
                SurrogateSource::Gaussian => StandardNormal.sample(&mut r),
                SurrogateSource::Empirical => pool[r.random_range(0..pool.len())],
            };
        }
    }
    out
}

/// Element-wise mean of equally long sorted spectra.
pub fn average_spectrum(spectra: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = spectra.first() else {
        return Vec::new();
    };
    let mut acc = vec![0.0; first.len()];
    for s in spectra {
        for (a, v) in acc.iter_mut().zip(s) {
            *a += v;
        }
    }
    let k = spectra.len() as f64;
    acc.iter().map(|a| a / k).collect()
}

/// Benchmark interval from surrogate spectra: mean smallest and mean largest eigenvalue.
pub fn surrogate_bulk(spectra: &[Vec<f64>]) -> (f64, f64) {
    let k = spectra.len() as f64;
    let lo = spectra.iter().map(|s| s[0]).sum::<f64>() / k;
    let hi = spectra.iter().map(|s| s[s.len() - 1]).sum::<f64>() / k;
    (lo, hi)
}

fn check_unit(u: &[f64], n: usize) -> Result<()> {
    if u.len() != n {
        return Err(Error::Contract(format!(
            "vector of length {} for a panel of {} firms",
            u.len(),
            n
        )));
    }
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Domain("mode vector is zero".into()));
    }
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("mode vector has norm {norm}, expected 1")));
    }
    Ok(())
}

/// Projection of the panel on `u`: at each `t`, `Σ u_i g_i(t) / Σ u_i²` over observed firms.
pub fn extract_mode(g: &GrowthPanel, u: &[f64]) -> Result<Vec<Option<f64>>> {
    check_unit(u, g.n_firms())?;
    Ok((0..g.n_times())
        .map(|t| {
            let (mut num, mut den, mut seen) = (0.0, 0.0, false);
            for (i, ui) in u.iter().enumerate() {
                if let Some(v) = g.get(i, t) {
                    num += ui * v;
                    den += ui * ui;
                    seen = true;
                }
            }
            match (seen, den > 0.0) {
                (true, true) => Some(num / den),
                (true, false) => Some(0.0),
                _ => None,
            }
        })
        .collect())
}

/// `y_i(t) = g_i(t) - u_i v̂(t)` on observed entries.
pub fn remove_mode(g: &GrowthPanel, u: &[f64]) -> Result<GrowthPanel> {
    let mode = extract_mode(g, u)?;
    Ok(g.map_observed(|i, t, v| v - u[i] * mode[t].unwrap_or(0.0)))
}

/// Noise benchmark used to judge whether the removed modes are genuine outliers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BulkBenchmark {
    MarchenkoPastur,
    Surrogate {
        n_sets: usize,
        seed: u64,
        source: SurrogateSource,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CleanOptions {
    /// Number of leading eigenmodes to remove.
    pub modes: usize,
    pub min_overlap: usize,
    pub benchmark: BulkBenchmark,
}

impl Default for CleanOptions {
    fn default() -> Self {
        CleanOptions {
            modes: 1,
            min_overlap: DEFAULT_MIN_OVERLAP,
            benchmark: BulkBenchmark::MarchenkoPastur,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CleanResult {
    /// Cleaned and re-rescaled panel.
    pub cleaned: GrowthPanel,
    /// Extracted mode series, largest eigenvalue first.
    pub modes: Vec<Vec<Option<f64>>>,
    pub report: SpectrumReport,
    /// Averaged surrogate spectrum, when a surrogate benchmark was used.
    pub surrogate_mean: Option<Vec<f64>>,
}

/// Removes the leading eigenmode(s) of the lag-0 correlation from a rescaled panel.
pub fn clean_market_mode(g: &GrowthPanel, opts: &CleanOptions) -> Result<CleanResult> {
    if !g.rescaled {
        return Err(Error::Contract("cleaning requires a rescaled panel".into()));
    }
    let n = g.n_firms();
    if opts.modes == 0 || opts.modes > n {
        return Err(Error::Domain(format!(
            "cannot remove {} modes from {} series",
            opts.modes, n
        )));
    }
    let c = corr_matrix(g, 0, opts.min_overlap)?;
    let mut report = eigendecompose(&c)?;
    let mut surrogate_mean = None;
    if let BulkBenchmark::Surrogate {
        n_sets,
        seed,
        source,
    } = opts.benchmark
    {
        let spectra = surrogate_spectrum(g, n_sets, seed, source, opts.min_overlap)?;
        let (lo, hi) = surrogate_bulk(&spectra);
        report.set_bulk(lo, hi);
        surrogate_mean = Some(average_spectrum(&spectra));
    }

    let mut current = g.clone();
    let mut modes = Vec::with_capacity(opts.modes);
    for k in 0..opts.modes {
        let u = report.eigenvector(n - 1 - k);
        modes.push(extract_mode(&current, &u)?);
        current = remove_mode(&current, &u)?;
    }
    let cleaned = rescale_loo(&current)?;
    Ok(CleanResult {
        cleaned,
        modes,
        report,
        surrogate_mean,
    })
}

/// Removes, from every firm, its sector aggregate scaled by their correlation.
///
/// Returns the cleaned panel and one warning per firm left untouched because
/// it is alone in its sector.
pub fn sector_clean(g: &GrowthPanel, sectors: &[String]) -> Result<(GrowthPanel, Vec<String>)> {
    let n = g.n_firms();
    let t = g.n_times();
    if sectors.len() != n {
        return Err(Error::Contract(format!(
            "{} sector labels for {} firms",
            sectors.len(),
            n
        )));
    }
    let mut groups: std::collections::BTreeMap<&str, Vec<usize>> = Default::default();
    for (i, s) in sectors.iter().enumerate() {
        groups.entry(s.as_str()).or_default().push(i);
    }
    let mut out = g.clone();
    let mut warnings = Vec::new();
    for (label, members) in &groups {
        if members.len() == 1 {
            warnings.push(format!(
                "firm {} is the only member of sector {label}; left unchanged",
                g.firm_ids[members[0]]
            ));
            continue;
        }
        let aggregate: Vec<Option<f64>> = (0..t)
            .map(|c| {
                let vals: Vec<f64> = members.iter().filter_map(|&i| g.get(i, c)).collect();
                (!vals.is_empty()).then(|| vals.iter().sum())
            })
            .collect();
        for &i in members {
            let mut m = Moments::default();
            for (c, v) in g.observed(i) {
                if let Some(s) = aggregate[c] {
                    m.push(v, s);
                }
            }
            let k = if m.n >= 2 { m.pearson() } else { 0.0 };
            let vals = out.values_mut();
            for c in 0..t {
                if g.is_observed(i, c) {
                    vals[i * t + c] -= k * aggregate[c].unwrap_or(0.0);
                }
            }
        }
    }
    Ok((out, warnings))
}

/// `C(0) + ½[C(1) + C(-1)]`, symmetric by construction.
pub fn sym_lag_corr(g: &GrowthPanel, min_overlap: usize) -> Result<CorrMatrix> {
    let c0 = corr_matrix(g, 0, min_overlap)?;
    let c1 = corr_matrix(g, 1, min_overlap)?;
    // C(-1)_ij = corr(g_i(t), g_j(t-1)) = C(1)_ji
    let lagged = (&c1.values + c1.values.transpose()) * 0.5;
    let mut values = &c0.values + lagged;
    values = (&values + values.transpose()) * 0.5;
    Ok(CorrMatrix { values, ..c0 })
}

/// Writes a dense matrix as CSV with firm ids as the first row and column.
pub fn write_matrix_csv<W: std::io::Write, T: std::fmt::Display + nalgebra::Scalar>(
    ids: &[String],
    m: &DMatrix<T>,
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["firm_id".to_string()];
    header.extend(ids.iter().cloned());
    w.write_record(&header)?;
    for (i, id) in ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(m.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<matrix csv>", e))?;
    Ok(())
}
