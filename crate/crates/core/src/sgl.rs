//! Laplacian operator algebra and the spectrally constrained graph learner.
//!
//! A graph on `p` nodes is parametrised by its edge weights `w`, one entry
//! per unordered pair, stored in column-major order of the strict lower
//! triangle. `lap_op` maps `w` to its Laplacian and `lap_adjoint` is the
//! adjoint of that map under the Frobenius inner product.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netstats::Network;

/// Default threshold below which a learned weight counts as zero.
pub const NUMERICAL_ZERO: f64 = 1e-8;

pub fn n_pairs(p: usize) -> usize {
    p * p.saturating_sub(1) / 2
}

/// Position of pair `(i, j)`, `i > j`, in a weight vector for `p` nodes.
pub fn pair_index(i: usize, j: usize, p: usize) -> Result<usize> {
    if i <= j || i >= p {
        return Err(Error::Domain(format!("pair ({i}, {j}) is not in the strict lower triangle for p = {p}")));
    }
    Ok(pair_index_unchecked(i, j, p))
}

#[inline]
fn pair_index_unchecked(i: usize, j: usize, p: usize) -> usize {
    j * p - j * (j + 1) / 2 + (i - j) - 1
}

/// All pairs `(i, j)`, `i > j`, in weight-vector order.
pub fn pairs(p: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..p).flat_map(move |j| (j + 1..p).map(move |i| (i, j)))
}

/// Nonnegative edge weights of a graph on `p` nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    p: usize,
    w: Vec<f64>,
}

impl WeightVector {
    pub fn new(p: usize, w: Vec<f64>) -> Result<WeightVector> {
        if w.len() != n_pairs(p) {
            return Err(Error::Contract(format!(
                "weight vector of length {} for p = {p} (expected {})",
                w.len(),
                n_pairs(p)
            )));
        }
        if let Some(v) = w.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Domain(format!("weight {v} is not a finite nonnegative number")));
        }
        Ok(WeightVector { p, w })
    }

    pub fn zeros(p: usize) -> WeightVector {
        WeightVector {
            p,
            w: vec![0.0; n_pairs(p)],
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = (i.max(j), i.min(j));
        self.w[pair_index_unchecked(i, j, self.p)]
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.w
    }
}

/// Ascending nonzero Laplacian eigenvalues a learned graph should reproduce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralTarget {
    lambdas: Vec<f64>,
}

impl SpectralTarget {
    pub fn new(lambdas: Vec<f64>) -> Result<SpectralTarget> {
        if lambdas.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::Domain("spectral target entries must be positive".into()));
        }
        if lambdas.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Domain("spectral target must be sorted ascending".into()));
        }
        Ok(SpectralTarget { lambdas })
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Number of nodes the target describes.
    pub fn p(&self) -> usize {
        self.lambdas.len() + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub alpha: f64,
    pub beta: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// Weight positions allowed to move; all of them when `None`.
    pub free_indices: Option<Vec<usize>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            alpha: 0.0,
            beta: 100.0,
            max_iter: 5000,
            tol: 1e-6,
            free_indices: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Domain(format!("alpha = {} must be >= 0", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Domain(format!("beta = {} must be > 0", self.beta)));
        }
        if self.max_iter == 0 {
            return Err(Error::Domain("max_iter must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Domain(format!("tol = {} must be > 0", self.tol)));
        }
        Ok(())
    }
}

/// Laplacian of the weighted graph `w`.
pub fn lap_op(w: &WeightVector) -> DMatrix<f64> {
    let p = w.p;
    let mut l = DMatrix::zeros(p, p);
    lap_op_into(&w.w, p, &mut l);
    l
}

fn lap_op_into(w: &[f64], p: usize, l: &mut DMatrix<f64>) {
    l.fill(0.0);
    let mut k = 0;
    for j in 0..p {
        for i in j + 1..p {
            let v = w[k];
            l[(i, j)] = -v;
            l[(j, i)] = -v;
            l[(i, i)] += v;
            l[(j, j)] += v;
            k += 1;
        }
    }
}

fn check_symmetric(y: &DMatrix<f64>, what: &str) -> Result<()> {
    if !y.is_square() {
        return Err(Error::Contract(format!("{what} is {}x{}, not square", y.nrows(), y.ncols())));
    }
    let p = y.nrows();
    for j in 0..p {
        for i in j + 1..p {
            if (y[(i, j)] - y[(j, i)]).abs() > 1e-9 {
                return Err(Error::Contract(format!("{what} is not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// Adjoint of [`lap_op`]: entry `(i, j)` is `y_ii - y_ij - y_ji + y_jj`.
pub fn lap_adjoint(y: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_symmetric(y, "matrix")?;
    Ok(lap_adjoint_unchecked(y))
}

fn lap_adjoint_unchecked(y: &DMatrix<f64>) -> Vec<f64> {
    let p = y.nrows();
    let mut out = Vec::with_capacity(n_pairs(p));
    for j in 0..p {
        let yjj = y[(j, j)];
        for i in j + 1..p {
            out.push(y[(i, i)] - y[(i, j)] - y[(j, i)] + yjj);
        }
    }
    out
}

/// Gradient of `f(w) = ½‖Lw‖²_F − cᵀw`.
pub fn grad_f(w: &WeightVector, c: &[f64]) -> Result<Vec<f64>> {
    if c.len() != w.w.len() {
        return Err(Error::Contract(format!("c has length {}, w has {}", c.len(), w.w.len())));
    }
    let g = lap_adjoint_unchecked(&lap_op(w));
    Ok(g.iter().zip(c).map(|(a, b)| a - b).collect())
}

/// `K = S + α(2I − J)`, so that `tr(Lw S) + α‖Lw‖₁ = tr(Lw K)` for `w ≥ 0`.
#[allow(non_snake_case)]
pub fn build_K(s: &DMatrix<f64>, alpha: f64) -> Result<DMatrix<f64>> {
    check_symmetric(s, "covariance")?;
    let p = s.nrows();
    Ok(DMatrix::from_fn(p, p, |i, j| s[(i, j)] + alpha * if i == j { 1.0 } else { -1.0 }))
}

/// One solver iteration as recorded in the trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iter: usize,
    pub objective: f64,
    /// `‖w^{t+1} − w^t‖_∞`.
    pub step: f64,
    /// The objective rose by more than the slack relative to the previous iteration.
    pub increased: bool,
}

#[derive(Debug, Clone)]
pub struct SolverOutput {
    pub w: WeightVector,
    /// Eigenvectors of `lap_op(w)` for its `p − 1` largest eigenvalues, ascending.
    pub u: DMatrix<f64>,
    pub trace: Vec<TraceEntry>,
    pub converged: bool,
}

impl SolverOutput {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn monotone(&self) -> bool {
        !self.trace.iter().any(|t| t.increased)
    }
}

/// Initial weights: `max(0, −(S⁺)_ij)`, rescaled so that `tr(Lw)` equals the
/// target's eigenvalue sum.
pub fn initial_weights(s: &DMatrix<f64>, target: &SpectralTarget) -> Result<WeightVector> {
    let p = s.nrows();
    let pinv = s
        .clone()
        .pseudo_inverse(1e-10)
        .map_err(|e| Error::Numerical(format!("pseudo-inverse failed: {e}")))?;
    let mut w: Vec<f64> = pairs(p).map(|(i, j)| (-0.5 * (pinv[(i, j)] + pinv[(j, i)])).max(0.0)).collect();
    let total: f64 = w.iter().sum();
    let want = 0.5 * target.lambdas().iter().sum::<f64>();
    if total > 0.0 && total.is_finite() {
        w.iter_mut().for_each(|v| *v *= want / total);
    } else {
        let v = want / w.len().max(1) as f64;
        w.iter_mut().for_each(|x| *x = v);
    }
    WeightVector::new(p, w)
}

/// Reusable buffers for the per-iteration Laplacian eigendecomposition.
struct EigenWorkspace {
    p: usize,
    s: faer::diag::Diag<f64>,
    u: faer::Mat<f64>,
    buf: faer::dyn_stack::MemBuffer,
}

impl EigenWorkspace {
    fn new(p: usize) -> EigenWorkspace {
        use faer::linalg::evd;
        let req = evd::self_adjoint_evd_scratch::<f64>(p, evd::ComputeEigenvectors::Yes, faer::Par::Seq, Default::default());
        EigenWorkspace {
            p,
            s: faer::diag::Diag::zeros(p),
            u: faer::Mat::zeros(p, p),
            buf: faer::dyn_stack::MemBuffer::new(req),
        }
    }

    /// Top `p − 1` eigenpairs of a Laplacian, ascending, plus the discarded smallest eigenvalue.
    fn top(&mut self, l: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, f64)> {
        let p = self.p;
        if l.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite Laplacian entry".into()));
        }
        let a = faer::MatRef::from_column_major_slice(l.as_slice(), p, p);
        faer::linalg::evd::self_adjoint_evd(
            a,
            self.s.as_mut(),
            Some(self.u.as_mut()),
            faer::Par::Seq,
            faer::dyn_stack::MemStack::new(&mut self.buf),
            Default::default(),
        )
        .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
        let vals: Vec<f64> = self.s.column_vector().iter().copied().collect();
        debug_assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let u = &self.u;
        Ok((DMatrix::from_fn(p, p - 1, |i, k| u[(i, k + 1)]), vals[1..].to_vec(), vals[0]))
    }
}

/// Learns a graph whose Laplacian has the target spectrum while fitting `S`.
///
/// Alternates a projected gradient step on `w` (step `1/(2p)`, clamped at 0)
/// with a refresh of `U` from the eigenvectors of the current Laplacian.
/// `init` defaults to [`initial_weights`]. Stops when `‖Δw‖_∞ < tol`; if
/// `max_iter` is reached first the iterate with the lowest objective is
/// returned with `converged = false`.
pub fn solve_sgl(
    s: &DMatrix<f64>,
    target: &SpectralTarget,
    cfg: &SolverConfig,
    init: Option<&WeightVector>,
) -> Result<SolverOutput> {
    cfg.validate()?;
    let p = s.nrows();
    if p < 2 {
        return Err(Error::Domain("graph learning needs at least two nodes".into()));
    }
    if target.p() != p {
        return Err(Error::Contract(format!("target has {} eigenvalues for p = {p}", target.lambdas().len())));
    }
    let k = build_K(s, cfg.alpha)?;
    let mut w = match init {
        Some(w0) if w0.p != p => {
            return Err(Error::Contract(format!("initial weights for p = {}, problem has p = {p}", w0.p)))
        }
        Some(w0) => w0.clone(),
        None => initial_weights(s, target)?,
    };
    let m = n_pairs(p);
    let all_pairs: Vec<(usize, usize)> = pairs(p).collect();
    let free: Vec<(usize, usize, usize)> = match &cfg.free_indices {
        None => all_pairs.iter().enumerate().map(|(k, &(i, j))| (k, i, j)).collect(),
        Some(idx) => {
            if let Some(bad) = idx.iter().find(|&&k| k >= m) {
                return Err(Error::Contract(format!("free index {bad} out of range {m}")));
            }
            idx.iter().map(|&k| (k, all_pairs[k].0, all_pairs[k].1)).collect()
        }
    };

    let lambdas = target.lambdas();
    let log_det: f64 = lambdas.iter().map(|l| l.ln()).sum();
    let k_adj = lap_adjoint_unchecked(&k);
    let inv_beta = 1.0 / cfg.beta;
    let step = 1.0 / (2.0 * p as f64);

    let mut lw = DMatrix::zeros(p, p);
    lap_op_into(&w.w, p, &mut lw);
    let mut eigen = EigenWorkspace::new(p);
    let (mut u, mut mu, mut mu0) = eigen.top(&lw)?;

    let objective = |w: &[f64], mu: &[f64], mu0: f64| -> f64 {
        let fit: f64 = w.iter().zip(&k_adj).map(|(a, b)| a * b).sum();
        let resid: f64 = mu.iter().zip(lambdas).map(|(a, b)| (a - b).powi(2)).sum::<f64>() + mu0 * mu0;
        -log_det + fit + 0.5 * cfg.beta * resid
    };

    let mut prev_obj = objective(&w.w, &mu, mu0);
    let mut best = (prev_obj, w.clone(), u.clone());
    let mut trace = Vec::new();
    let mut converged = false;
    let mut ul = DMatrix::zeros(p, p - 1);
    let mut target_mat = DMatrix::zeros(p, p);

    for iter in 0..cfg.max_iter {
        // c = L*(U Λ Uᵀ − K/β)
        ul.copy_from(&u);
        for (c, l) in lambdas.iter().enumerate() {
            ul.column_mut(c).scale_mut(*l);
        }
        target_mat.gemm(1.0, &ul, &u.transpose(), 0.0);
        let grad_lw = lap_adjoint_unchecked(&lw);
        let mut delta: f64 = 0.0;
        for &(idx, i, j) in &free {
            let c = target_mat[(i, i)] - 2.0 * target_mat[(i, j)] + target_mat[(j, j)] - inv_beta * k_adj[idx];
            let new = (w.w[idx] - step * (grad_lw[idx] - c)).max(0.0);
            delta = delta.max((new - w.w[idx]).abs());
            w.w[idx] = new;
        }
        lap_op_into(&w.w, p, &mut lw);
        (u, mu, mu0) = eigen.top(&lw)?;
        let obj = objective(&w.w, &mu, mu0);
        let increased = obj > prev_obj + 1e-8 * prev_obj.abs().max(1.0);
        trace.push(TraceEntry {
            iter,
            objective: obj,
            step: delta,
            increased,
        });
        prev_obj = obj;
        if obj <= best.0 {
            best = (obj, w.clone(), u.clone());
        }
        if delta < cfg.tol {
            converged = true;
            break;
        }
    }
    if converged {
        return Ok(SolverOutput { w, u, trace, converged });
    }
    let (_, w, u) = best;
    Ok(SolverOutput { w, u, trace, converged })
}

/// Graph with an edge wherever the weight exceeds `threshold`.
pub fn adjacency_from_w(w: &WeightVector, threshold: f64) -> Result<Network> {
    if !(threshold >= 0.0) {
        return Err(Error::Domain(format!("threshold {threshold} must be >= 0")));
    }
    Network::from_edges(
        w.p,
        pairs(w.p).zip(&w.w).filter(|(_, v)| **v > threshold).map(|((i, j), _)| (j, i)),
    )
}

/// Threshold leaving (about) `density · p(p−1)/2` weights strictly above it.
pub fn quantile_threshold(w: &[f64], density: f64) -> f64 {
    let mut sorted: Vec<f64> = w.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let keep = (density * w.len() as f64).round() as usize;
    if keep == 0 {
        return sorted.first().copied().unwrap_or(0.0).max(0.0);
    }
    if keep >= sorted.len() {
        return 0.0f64.min(sorted.last().copied().unwrap_or(0.0));
    }
    // midpoint keeps exactly `keep` entries unless there are ties
    let (hi, lo) = (sorted[keep - 1], sorted[keep]);
    if hi > lo {
        0.5 * (hi + lo)
    } else {
        lo
    }
}

/// Weight vector serialised as `i,j,w` rows (`i > j`).
pub fn write_weights<W: std::io::Write>(w: &WeightVector, writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["i", "j", "w"])?;
    for ((i, j), v) in pairs(w.p).zip(&w.w) {
        out.write_record([i.to_string(), j.to_string(), format!("{v:e}")])?;
    }
    out.flush().map_err(|e| Error::io("<weights>", e))?;
    Ok(())
}

pub fn write_trace<W: std::io::Write>(trace: &[TraceEntry], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    for t in trace {
        out.serialize(t)?;
    }
    out.flush().map_err(|e| Error::io("<trace>", e))?;
    Ok(())
}
