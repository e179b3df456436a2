//! Block-wise network reconstruction.
//!
//! Firms are split by sector. Each sector's principal submatrix is solved on
//! its own against an Erdős–Rényi spectral target; then every pair of
//! sectors is solved jointly with the within-sector weights frozen, so only
//! the cross-sector links move. The sparsity strength `α` of every
//! subproblem is calibrated so the learned graph hits a prescribed density.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netstats::{generate_er, generate_sbm, BlockScheme, Network, Partition};
use crate::rng;
use crate::sgl::{
    self, adjacency_from_w, initial_weights, quantile_threshold, solve_sgl, SolverConfig, SolverOutput,
    SpectralTarget, WeightVector, NUMERICAL_ZERO,
};
use crate::spectral::CorrMatrix;
use crate::synth::laplacian;

/// Floor applied to averaged target eigenvalues.
pub const TARGET_EPS: f64 = 1e-9;
/// Relative density tolerance accepted by the calibration.
pub const DENSITY_BAND: f64 = 0.1;
/// Maximum number of solves per calibration.
pub const MAX_PROBES: usize = 20;
/// First `α_max` tried, as a multiple of `β`.
pub const ALPHA_START: f64 = 0.25;

fn averaged_target(n: usize, n_samples: usize, seed: u64, draw: impl Fn(u64) -> Result<Network> + Sync) -> Result<SpectralTarget> {
    if n < 2 {
        return Err(Error::Domain("spectral target needs at least two nodes".into()));
    }
    if n_samples == 0 {
        return Err(Error::Domain("n_samples must be at least 1".into()));
    }
    let spectra = (0..n_samples as u64)
        .into_par_iter()
        .map(|k| {
            let net = draw(rng::derived(seed, k))?;
            let mut ev: Vec<f64> = laplacian(&net).symmetric_eigenvalues().iter().copied().collect();
            ev.sort_unstable_by(f64::total_cmp);
            Ok(ev)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut mean = vec![0.0; n];
    for ev in &spectra {
        for (m, v) in mean.iter_mut().zip(ev) {
            *m += v;
        }
    }
    SpectralTarget::new(mean[1..].iter().map(|m| (m / n_samples as f64).max(TARGET_EPS)).collect())
}

/// Mean sorted Laplacian spectrum of `G(n, p)` draws, zero eigenvalue dropped.
pub fn spectral_target_er(n: usize, p: f64, n_samples: usize, seed: u64) -> Result<SpectralTarget> {
    averaged_target(n, n_samples, seed, |s| generate_er(n, p, s))
}

/// Mean sorted Laplacian spectrum of block-model draws with consecutive blocks of the given sizes.
pub fn spectral_target_block(sizes: &[usize], densities: &DMatrix<f64>, n_samples: usize, seed: u64) -> Result<SpectralTarget> {
    let labels: Vec<usize> = sizes.iter().enumerate().flat_map(|(b, &s)| std::iter::repeat_n(b, s)).collect();
    let n = labels.len();
    let scheme = BlockScheme::new(Partition::from_labels(labels), densities.clone())?;
    if scheme.partition.n_blocks() != sizes.len() {
        return Err(Error::Domain("empty block in spectral target".into()));
    }
    averaged_target(n, n_samples, seed, |s| generate_sbm(&scheme, s))
}

/// One solve made while calibrating `α`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub alpha: f64,
    pub density: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationStatus {
    /// Density within the band at the numerical-zero threshold.
    Matched,
    /// Weights of the densest solve thresholded at a quantile.
    QuantileFallback,
    /// Probe budget exhausted; the probe closest to the goal is returned.
    ProbeLimit,
}

#[derive(Debug, Clone)]
pub struct Calibration {
    pub alpha: f64,
    pub threshold: f64,
    pub density: f64,
    pub status: CalibrationStatus,
    pub solution: SolverOutput,
    pub probes: Vec<Probe>,
}

impl Calibration {
    pub fn network(&self) -> Network {
        adjacency_from_w(&self.solution.w, self.threshold).expect("threshold is nonnegative")
    }
}

fn density_over(w: &WeightVector, counted: &[usize], threshold: f64) -> f64 {
    let w = w.as_slice();
    counted.iter().filter(|&&k| w[k] > threshold).count() as f64 / counted.len() as f64
}

fn within_band(density: f64, goal: f64) -> bool {
    (density - goal).abs() <= DENSITY_BAND * goal
}

/// Chooses `α` so the learned graph has the requested density.
///
/// Density is measured over the `counted` weight positions (all of them when
/// `None`). Bisection runs over `[0, α_max]`, where `α_max` grows by factors
/// of 4 until the solve at `α_max` is no denser than the goal.
pub fn calibrate(
    s: &DMatrix<f64>,
    target: &SpectralTarget,
    density_goal: f64,
    cfg: &SolverConfig,
    init: Option<&WeightVector>,
    counted: Option<&[usize]>,
) -> Result<Calibration> {
    if !(density_goal > 0.0 && density_goal < 1.0) {
        return Err(Error::Domain(format!("density goal {density_goal} outside (0, 1)")));
    }
    let p = s.nrows();
    let init = match init {
        Some(w) => w.clone(),
        None => initial_weights(s, target)?,
    };
    let all: Vec<usize>;
    let counted = match counted {
        Some(c) if c.is_empty() => return Err(Error::Domain("no weight positions to calibrate on".into())),
        Some(c) => c,
        None => {
            all = (0..sgl::n_pairs(p)).collect();
            &all
        }
    };

    let mut probes: Vec<Probe> = Vec::new();
    let mut solutions: Vec<SolverOutput> = Vec::new();
    let mut run = |alpha: f64, probes: &mut Vec<Probe>| -> Result<f64> {
        let out = solve_sgl(s, target, &SolverConfig { alpha, ..cfg.clone() }, Some(&init))?;
        let density = density_over(&out.w, counted, NUMERICAL_ZERO);
        probes.push(Probe {
            alpha,
            density,
            iterations: out.iterations(),
            converged: out.converged,
        });
        solutions.push(out);
        Ok(density)
    };
    let finish = |k: usize, probes: Vec<Probe>, solutions: &mut Vec<SolverOutput>, status| Calibration {
        alpha: probes[k].alpha,
        threshold: NUMERICAL_ZERO,
        density: probes[k].density,
        status,
        solution: solutions.swap_remove(k),
        probes,
    };

    let d0 = run(0.0, &mut probes)?;
    if within_band(d0, density_goal) {
        return Ok(finish(0, probes, &mut solutions, CalibrationStatus::Matched));
    }
    if d0 < density_goal {
        // α only removes links; the unpenalised solve is the densest available
        return quantile_fallback(0, probes, solutions, counted, density_goal);
    }

    // α enters the step as a uniform shrinkage of 4α/β, so α_max starts on the scale of β
    let mut lo = 0.0;
    let mut hi = ALPHA_START * cfg.beta;
    let mut d_lo = d0;
    loop {
        if probes.len() >= MAX_PROBES {
            return Ok(closest(probes, solutions, density_goal));
        }
        let d = run(hi, &mut probes)?;
        if d > d_lo {
            return quantile_fallback(densest(&probes), probes, solutions, counted, density_goal);
        }
        if within_band(d, density_goal) {
            let k = probes.len() - 1;
            return Ok(finish(k, probes, &mut solutions, CalibrationStatus::Matched));
        }
        if d < density_goal {
            break;
        }
        lo = hi;
        d_lo = d;
        hi *= 4.0;
    }
    let mut d_hi = probes.last().unwrap().density;
    while probes.len() < MAX_PROBES {
        let mid = 0.5 * (lo + hi);
        let d = run(mid, &mut probes)?;
        if d > d_lo || d < d_hi {
            return quantile_fallback(densest(&probes), probes, solutions, counted, density_goal);
        }
        if within_band(d, density_goal) {
            let k = probes.len() - 1;
            return Ok(finish(k, probes, &mut solutions, CalibrationStatus::Matched));
        }
        if d > density_goal {
            lo = mid;
            d_lo = d;
        } else {
            hi = mid;
            d_hi = d;
        }
    }
    Ok(closest(probes, solutions, density_goal))
}

fn densest(probes: &[Probe]) -> usize {
    (0..probes.len())
        .max_by(|&a, &b| probes[a].density.total_cmp(&probes[b].density).then(b.cmp(&a)))
        .unwrap()
}

fn closest(probes: Vec<Probe>, mut solutions: Vec<SolverOutput>, goal: f64) -> Calibration {
    let k = (0..probes.len())
        .min_by(|&a, &b| (probes[a].density - goal).abs().total_cmp(&(probes[b].density - goal).abs()).then(a.cmp(&b)))
        .unwrap();
    Calibration {
        alpha: probes[k].alpha,
        threshold: NUMERICAL_ZERO,
        density: probes[k].density,
        status: CalibrationStatus::ProbeLimit,
        solution: solutions.swap_remove(k),
        probes,
    }
}

fn quantile_fallback(
    k: usize,
    probes: Vec<Probe>,
    mut solutions: Vec<SolverOutput>,
    counted: &[usize],
    goal: f64,
) -> Result<Calibration> {
    let w = &solutions[k].w;
    let values: Vec<f64> = counted.iter().map(|&i| w.as_slice()[i]).collect();
    let threshold = quantile_threshold(&values, goal).max(NUMERICAL_ZERO);
    let density = density_over(w, counted, threshold);
    if !within_band(density, goal) {
        return Err(Error::Calibration {
            reason: format!(
                "density goal {goal} out of reach: densest solve reaches {:.4} after thresholding",
                density
            ),
            probes,
        });
    }
    Ok(Calibration {
        alpha: probes[k].alpha,
        threshold,
        density,
        status: CalibrationStatus::QuantileFallback,
        solution: solutions.swap_remove(k),
        probes,
    })
}

/// [`calibrate`] over all node pairs, returning `α` and the learned network.
pub fn calibrate_alpha(
    s: &DMatrix<f64>,
    target: &SpectralTarget,
    density_goal: f64,
    cfg: &SolverConfig,
) -> Result<(f64, Network)> {
    let c = calibrate(s, target, density_goal, cfg, None, None)?;
    Ok((c.alpha, c.network()))
}

/// Sector partition, density goals and solver settings for a reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionPlan {
    pub partition: Partition,
    /// Within-sector density per block.
    pub target_density_diag: Vec<f64>,
    /// Cross-sector density per block pair; only entries `(a, b)`, `a < b`, are read.
    pub target_density_offdiag: DMatrix<f64>,
    pub spectra_samples: usize,
    pub solver: SolverConfig,
    pub seed: u64,
}

impl ReconstructionPlan {
    pub fn validate(&self, n: usize) -> Result<()> {
        let b = self.partition.n_blocks();
        if self.partition.labels.len() != n {
            return Err(Error::Contract(format!(
                "partition labels {} firms, correlation matrix has {n}",
                self.partition.labels.len()
            )));
        }
        if self.target_density_diag.len() != b || self.target_density_offdiag.shape() != (b, b) {
            return Err(Error::Contract(format!("density tables do not match {b} sectors")));
        }
        let offdiag = (0..b).flat_map(|a| (a + 1..b).map(move |c| (a, c)));
        for v in self
            .target_density_diag
            .iter()
            .copied()
            .chain(offdiag.map(|(a, c)| self.target_density_offdiag[(a, c)]))
        {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain(format!("density {v} outside [0, 1]")));
            }
        }
        if self.spectra_samples == 0 {
            return Err(Error::Domain("spectra_samples must be at least 1".into()));
        }
        self.solver.validate()
    }

    /// Expected total edge count implied by the density tables.
    pub fn expected_edges(&self) -> f64 {
        let sizes = self.partition.sizes();
        let b = sizes.len();
        let mut m = 0.0;
        for a in 0..b {
            m += self.target_density_diag[a] * (sizes[a] * sizes[a].saturating_sub(1)) as f64 / 2.0;
            for c in a + 1..b {
                m += self.target_density_offdiag[(a, c)] * (sizes[a] * sizes[c]) as f64;
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    /// Sector name, or `a|b` for a sector pair.
    pub block: String,
    pub nodes: usize,
    pub density_goal: f64,
    pub density: f64,
    pub edges: usize,
    pub alpha: f64,
    pub threshold: f64,
    pub status: Option<CalibrationStatus>,
    pub converged: bool,
    pub iterations: usize,
    pub monotone: bool,
    pub probes: Vec<Probe>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub blocks: Vec<BlockReport>,
    pub total_edges: usize,
    pub expected_edges: f64,
}

/// Blocks finished before a reconstruction failed.
#[derive(Debug, Clone)]
pub struct PartialReconstruction {
    pub network: Network,
    pub report: ReconstructionReport,
    pub failures: Vec<String>,
}

fn submatrix(c: &DMatrix<f64>, nodes: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(nodes.len(), nodes.len(), |i, j| c[(nodes[i], nodes[j])])
}

fn problem_seed(seed: u64, k: usize) -> u64 {
    rng::derived(seed, (k as u64) << 32)
}

/// Outcome of one block problem.
struct Solved {
    report: BlockReport,
    /// Learned weights (for diagonal blocks, reused when freezing).
    w: Option<WeightVector>,
    edges: Vec<(usize, usize)>,
}

fn skipped(block: String, nodes: usize, goal: f64) -> Solved {
    Solved {
        report: BlockReport {
            block,
            nodes,
            density_goal: goal,
            density: 0.0,
            edges: 0,
            alpha: 0.0,
            threshold: NUMERICAL_ZERO,
            status: None,
            converged: true,
            iterations: 0,
            monotone: true,
            probes: Vec::new(),
        },
        w: None,
        edges: Vec::new(),
    }
}

fn block_report(block: String, nodes: usize, goal: f64, cal: &Calibration, edges: usize) -> BlockReport {
    BlockReport {
        block,
        nodes,
        density_goal: goal,
        density: cal.density,
        edges,
        alpha: cal.alpha,
        threshold: cal.threshold,
        status: Some(cal.status),
        converged: cal.solution.converged,
        iterations: cal.solution.iterations(),
        monotone: cal.solution.monotone(),
        probes: cal.probes.clone(),
    }
}

fn solve_diagonal(c: &DMatrix<f64>, members: &[usize], name: &str, goal: f64, plan: &ReconstructionPlan, k: usize) -> Result<Solved> {
    let n = members.len();
    if n < 2 || goal == 0.0 {
        return Ok(skipped(name.to_string(), n, goal));
    }
    let s = submatrix(c, members);
    let target = spectral_target_er(n, goal, plan.spectra_samples, problem_seed(plan.seed, k))?;
    if goal >= 1.0 {
        let w = WeightVector::new(n, vec![1.0; sgl::n_pairs(n)])?;
        let edges: Vec<(usize, usize)> = sgl::pairs(n).map(|(i, j)| (members[j], members[i])).collect();
        let mut out = skipped(name.to_string(), n, goal);
        out.report.density = 1.0;
        out.report.edges = edges.len();
        out.w = Some(w);
        out.edges = edges;
        return Ok(out);
    }
    let cal = calibrate(&s, &target, goal, &plan.solver, None, None)?;
    let edges: Vec<(usize, usize)> = cal.network().edges().map(|(i, j)| (members[i], members[j])).collect();
    Ok(Solved {
        report: block_report(name.to_string(), n, goal, &cal, edges.len()),
        w: Some(cal.solution.w),
        edges,
    })
}

#[allow(clippy::too_many_arguments)]
fn solve_pair(
    c: &DMatrix<f64>,
    (ma, mb): (&[usize], &[usize]),
    (wa, wb): (Option<&WeightVector>, Option<&WeightVector>),
    (ga, gb, goal): (f64, f64, f64),
    name: String,
    plan: &ReconstructionPlan,
    k: usize,
) -> Result<Solved> {
    let (na, nb) = (ma.len(), mb.len());
    let n = na + nb;
    if na == 0 || nb == 0 || goal == 0.0 {
        return Ok(skipped(name, n, goal));
    }
    if goal >= 1.0 {
        let edges: Vec<(usize, usize)> = ma.iter().flat_map(|&a| mb.iter().map(move |&b| (a.min(b), a.max(b)))).collect();
        let mut out = skipped(name, n, goal);
        out.report.density = 1.0;
        out.report.edges = edges.len();
        out.edges = edges;
        return Ok(out);
    }
    let nodes: Vec<usize> = ma.iter().chain(mb).copied().collect();
    let s = submatrix(c, &nodes);
    let rho = DMatrix::from_row_slice(2, 2, &[ga, goal, goal, gb]);
    let target = spectral_target_block(&[na, nb], &rho, plan.spectra_samples, problem_seed(plan.seed, k))?;

    let all: Vec<(usize, usize)> = sgl::pairs(n).collect();
    let mut init = initial_weights(&s, &target)?.into_vec();
    let mut free = Vec::with_capacity(na * nb);
    for (idx, &(i, j)) in all.iter().enumerate() {
        // i > j
        match (j < na, i < na) {
            (true, true) => init[idx] = wa.map_or(0.0, |w| w.get(i, j)),
            (false, false) => init[idx] = wb.map_or(0.0, |w| w.get(i - na, j - na)),
            _ => free.push(idx),
        }
    }
    let init = WeightVector::new(n, init)?;
    let cfg = SolverConfig {
        free_indices: Some(free.clone()),
        ..plan.solver.clone()
    };
    let cal = calibrate(&s, &target, goal, &cfg, Some(&init), Some(&free))?;
    let w = cal.solution.w.as_slice();
    let edges: Vec<(usize, usize)> = free
        .iter()
        .filter(|&&idx| w[idx] > cal.threshold)
        .map(|&idx| {
            let (a, b) = (nodes[all[idx].0], nodes[all[idx].1]);
            (a.min(b), a.max(b))
        })
        .collect();
    Ok(Solved {
        report: block_report(name, n, goal, &cal, edges.len()),
        w: None,
        edges,
    })
}

/// Reconstructs the network implied by a cleaned correlation matrix.
///
/// Sectors are solved independently first; then each sector pair is solved
/// with the within-sector weights frozen at the first-stage values. The
/// result is the union of all blocks' edges. If any block fails, the other
/// blocks are still completed and returned inside a partial-result error.
pub fn reconstruct_network(c: &CorrMatrix, plan: &ReconstructionPlan) -> Result<(Network, ReconstructionReport)> {
    let n = c.size();
    plan.validate(n)?;
    let b = plan.partition.n_blocks();
    let names = &plan.partition.names;
    // within a block, nodes are ordered by firm id so the result does not depend on input order
    let members: Vec<Vec<usize>> = (0..b)
        .map(|a| {
            let mut m = plan.partition.members(a);
            m.sort_by(|&x, &y| c.ids[x].cmp(&c.ids[y]).then(x.cmp(&y)));
            m
        })
        .collect();
    let values = &c.values;

    let diag: Vec<Result<Solved>> = (0..b)
        .into_par_iter()
        .map(|a| solve_diagonal(values, &members[a], &names[a], plan.target_density_diag[a], plan, a))
        .collect();

    let pairs: Vec<(usize, usize)> = (0..b).flat_map(|a| (a + 1..b).map(move |c| (a, c))).collect();
    let cross: Vec<Option<Result<Solved>>> = pairs
        .par_iter()
        .enumerate()
        .map(|(k, &(a, bb))| {
            let (Ok(da), Ok(db)) = (&diag[a], &diag[bb]) else {
                return None;
            };
            Some(solve_pair(
                values,
                (&members[a], &members[bb]),
                (da.w.as_ref(), db.w.as_ref()),
                (plan.target_density_diag[a], plan.target_density_diag[bb], plan.target_density_offdiag[(a, bb)]),
                format!("{}|{}", names[a], names[bb]),
                plan,
                b + k,
            ))
        })
        .collect();

    let mut net = Network::with_ids(c.ids.clone());
    let mut report = ReconstructionReport {
        expected_edges: plan.expected_edges(),
        ..Default::default()
    };
    let mut failures = Vec::new();
    let mut absorb = |name: String, r: Option<Result<Solved>>, net: &mut Network| -> Result<()> {
        match r {
            Some(Ok(s)) => {
                for (i, j) in s.edges {
                    net.add_edge(i, j)?;
                }
                report.blocks.push(s.report);
            }
            Some(Err(e)) => failures.push(format!("{name}: {e}")),
            None => failures.push(format!("{name}: skipped because a sector failed")),
        }
        Ok(())
    };
    for (a, r) in diag.into_iter().enumerate() {
        absorb(names[a].clone(), Some(r), &mut net)?;
    }
    for (&(a, bb), r) in pairs.iter().zip(cross) {
        absorb(format!("{}|{}", names[a], names[bb]), r, &mut net)?;
    }
    report.total_edges = net.edge_count();
    if !failures.is_empty() {
        return Err(Error::PartialResult {
            reason: failures.join("; "),
            partial: Box::new(PartialReconstruction {
                network: net,
                report,
                failures,
            }),
        });
    }
    Ok((net, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netstats::generate_er;
    use crate::panel::rescale_loo;
    use crate::spectral::corr_matrix;
    use crate::synth::gen_gmrf_panel;

    fn fast_solver() -> SolverConfig {
        SolverConfig {
            beta: 4.0,
            max_iter: 300,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn er_target_extremes() {
        let t = spectral_target_er(6, 1.0, 3, 0).unwrap();
        assert!(t.lambdas().iter().all(|l| (l - 6.0).abs() < 1e-12));
        let t = spectral_target_er(6, 0.0, 3, 0).unwrap();
        assert!(t.lambdas().iter().all(|l| *l == TARGET_EPS));
        assert!(spectral_target_er(1, 0.5, 3, 0).is_err());
        assert!(spectral_target_er(5, 0.5, 0, 0).is_err());
    }

    #[test]
    fn er_target_concentrates() {
        let a = spectral_target_er(50, 0.1, 1000, 1).unwrap();
        let b = spectral_target_er(50, 0.1, 1000, 2).unwrap();
        for (x, y) in a.lambdas().iter().zip(b.lambdas()) {
            assert!((x - y).abs() < 0.05, "{x} vs {y}");
        }
    }

    #[test]
    fn block_target_cases() {
        let one = spectral_target_block(&[12], &DMatrix::from_element(1, 1, 0.3), 20, 4).unwrap();
        assert_eq!(one, spectral_target_er(12, 0.3, 20, 4).unwrap());
        let two = spectral_target_block(&[6, 6], &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]), 5, 4).unwrap();
        // two components: a second zero eigenvalue survives the drop and is clamped
        assert_eq!(two.lambdas()[0], TARGET_EPS);
        assert_eq!(two, spectral_target_block(&[6, 6], &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]), 5, 4).unwrap());
    }

    fn planted(n: usize, p: f64, seed: u64) -> (Network, DMatrix<f64>) {
        let net = generate_er(n, p, seed).unwrap();
        let inst = gen_gmrf_panel(&net, 4000, 0.5, 0.0, seed + 100).unwrap();
        let c = corr_matrix(&rescale_loo(&inst.panel).unwrap(), 0, 8).unwrap();
        (net, c.values)
    }

    #[test]
    fn calibration_hits_goal() {
        let (_, s) = planted(40, 0.1, 1);
        let target = spectral_target_er(40, 0.1, 200, 3).unwrap();
        let (_, net) = calibrate_alpha(&s, &target, 0.1, &fast_solver()).unwrap();
        let d = net.edge_count() as f64 / 780.0;
        assert!((0.09..=0.11).contains(&d), "density {d}");
    }

    #[test]
    fn calibration_returns_zero_alpha_when_matched() {
        let (_, s) = planted(30, 0.15, 2);
        let target = spectral_target_er(30, 0.15, 100, 3).unwrap();
        let cfg = fast_solver();
        let first = solve_sgl(&s, &target, &cfg, None).unwrap();
        let d0 = adjacency_from_w(&first.w, NUMERICAL_ZERO).unwrap().edge_count() as f64 / 435.0;
        let cal = calibrate(&s, &target, d0, &cfg, None, None).unwrap();
        assert_eq!(cal.alpha, 0.0);
        assert_eq!(cal.probes.len(), 1);
        assert_eq!(cal.status, CalibrationStatus::Matched);
    }

    #[test]
    fn unreachable_goal_is_flagged() {
        let (_, s) = planted(20, 0.1, 3);
        let target = spectral_target_er(20, 0.1, 50, 3).unwrap();
        match calibrate(&s, &target, 0.999, &fast_solver(), None, None) {
            Ok(c) => assert_eq!(c.status, CalibrationStatus::QuantileFallback),
            Err(Error::Calibration { probes, .. }) => assert!(!probes.is_empty()),
            Err(e) => panic!("unexpected error {e}"),
        }
        assert!(calibrate(&s, &target, 0.0, &fast_solver(), None, None).is_err());
    }

    #[test]
    fn planted_block_is_recovered() {
        let (net, s) = planted(30, 0.15, 4);
        let target = spectral_target_er(30, 0.15, 200, 5).unwrap();
        let (_, pred) = calibrate_alpha(&s, &target, 0.15, &fast_solver()).unwrap();
        let tp = pred.edges().filter(|&(i, j)| net.has_edge(i, j)).count() as f64;
        let f1 = 2.0 * tp / (pred.edge_count() + net.edge_count()) as f64;
        // a random guess at the true density scores about the density itself
        assert!(f1 >= 0.15 + 0.3, "f1 = {f1}");
    }

    fn two_sector_plan(sizes: (usize, usize), cross: f64) -> ReconstructionPlan {
        let labels: Vec<usize> = (0..sizes.0 + sizes.1).map(|i| (i >= sizes.0) as usize).collect();
        ReconstructionPlan {
            partition: Partition::from_labels(labels),
            target_density_diag: vec![0.2, 0.2],
            target_density_offdiag: DMatrix::from_row_slice(2, 2, &[0.0, cross, cross, 0.0]),
            spectra_samples: 50,
            solver: fast_solver(),
            seed: 7,
        }
    }

    #[test]
    fn single_sector_matches_calibrate_alpha() {
        let (_, s) = planted(25, 0.2, 5);
        let c = CorrMatrix::from_values(s.clone(), 4000);
        let plan = ReconstructionPlan {
            partition: Partition::from_labels(vec![0; 25]),
            target_density_diag: vec![0.2],
            target_density_offdiag: DMatrix::zeros(1, 1),
            spectra_samples: 50,
            solver: fast_solver(),
            seed: 7,
        };
        let (net, report) = reconstruct_network(&c, &plan).unwrap();
        let target = spectral_target_er(25, 0.2, 50, problem_seed(7, 0)).unwrap();
        let (_, direct) = calibrate_alpha(&s, &target, 0.2, &plan.solver).unwrap();
        assert_eq!(net.edges().collect::<Vec<_>>(), direct.edges().collect::<Vec<_>>());
        assert_eq!(report.blocks.len(), 1);
    }

    #[test]
    fn block_diagonal_correlation_adds_few_cross_links() {
        let (_, s1) = planted(20, 0.2, 6);
        let (_, s2) = planted(20, 0.2, 7);
        let mut s = DMatrix::zeros(40, 40);
        s.view_mut((0, 0), (20, 20)).copy_from(&s1);
        s.view_mut((20, 20), (20, 20)).copy_from(&s2);
        let c = CorrMatrix::from_values(s, 4000);
        let plan = two_sector_plan((20, 20), 0.01);
        let (net, report) = reconstruct_network(&c, &plan).unwrap();
        let cross = net.edges().filter(|&(i, j)| (i < 20) != (j < 20)).count();
        assert!(cross as f64 <= (0.01f64 * 400.0).floor() * (1.0 + DENSITY_BAND) + 1.0, "{cross}");
        assert_eq!(report.blocks.len(), 3);

        // the diagonal blocks are exactly the first-stage solutions
        let alone = ReconstructionPlan {
            target_density_offdiag: DMatrix::zeros(2, 2),
            ..plan.clone()
        };
        let (diag_only, _) = reconstruct_network(&c, &alone).unwrap();
        let within: Vec<_> = net.edges().filter(|&(i, j)| (i < 20) == (j < 20)).collect();
        assert_eq!(within, diag_only.edges().collect::<Vec<_>>());
    }

    #[test]
    fn permuting_firms_relabels_the_result() {
        let (_, s) = planted(24, 0.2, 8);
        let ids: Vec<String> = (0..24).map(|i| format!("firm{i:02}")).collect();
        let mut c = CorrMatrix::from_values(s, 4000);
        c.ids = ids.clone();
        let plan = two_sector_plan((12, 12), 0.05);
        let (net, _) = reconstruct_network(&c, &plan).unwrap();

        let perm: Vec<usize> = (0..24).map(|i| (i * 7 + 3) % 24).collect(); // old i -> new perm[i]
        let mut inv = vec![0; 24];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        let mut pc = CorrMatrix::from_values(DMatrix::from_fn(24, 24, |a, b| c.values[(inv[a], inv[b])]), 4000);
        pc.ids = (0..24).map(|a| ids[inv[a]].clone()).collect();
        let mut pplan = plan.clone();
        pplan.partition = Partition::from_labels((0..24).map(|a| plan.partition.labels[inv[a]]).collect());
        let (pnet, _) = reconstruct_network(&pc, &pplan).unwrap();
        assert_eq!(pnet, net.relabel(&perm));
    }

    #[test]
    fn reconstruction_is_deterministic() {
        let (_, s) = planted(24, 0.2, 9);
        let c = CorrMatrix::from_values(s, 4000);
        let plan = two_sector_plan((12, 12), 0.05);
        let a = reconstruct_network(&c, &plan).unwrap();
        let b = reconstruct_network(&c, &plan).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn failing_block_yields_partial_result() {
        let (_, mut s) = planted(24, 0.2, 10);
        // an asymmetric entry inside the second sector makes its solve fail
        s[(20, 15)] += 0.5;
        let c = CorrMatrix::from_values(s, 4000);
        let plan = two_sector_plan((12, 12), 0.05);
        match reconstruct_network(&c, &plan) {
            Err(Error::PartialResult { partial, .. }) => {
                assert_eq!(partial.report.blocks.len(), 1);
                assert!(partial.network.edge_count() > 0);
                assert_eq!(partial.failures.len(), 2);
            }
            other => panic!("expected a partial result, got {:?}", other.map(|r| r.1)),
        }
    }
}
