//! Synthetic panels with known structure: factor models with a planted
//! common mode, and Gaussian Markov random fields on a planted network.
//!
//! Every generator draws its randomness column by column, so increasing `t`
//! for a fixed seed extends a panel without changing its earlier columns.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netstats::{read_edgelist, write_edgelist, Network};
use crate::panel::{read_growth_csv, write_growth_csv, GrowthPanel};
use crate::rng;
use crate::sgl;

/// Exposure of each series to the common mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loadings {
    /// `x_i = ξ_i + σ v`: correlation structure `I + Nσ² ūūᵀ` with `ū = 1/√N`.
    Uniform,
    /// `x_i = ξ_i + σ u_i v` for a unit vector `u`.
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommonMode {
    /// `v(t)` i.i.d. standard normal.
    Gaussian,
    /// `v(t) = √2 sin(2πt / period + phase)`, unit mean square over whole periods.
    Sine { period: f64, phase: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorModelSpec {
    pub n: usize,
    pub t: usize,
    pub sigma: f64,
    pub loadings: Loadings,
    pub mode: CommonMode,
}

impl FactorModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.t == 0 {
            return Err(Error::Domain(format!("empty {}x{} panel", self.n, self.t)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Domain(format!("sigma = {} must be >= 0", self.sigma)));
        }
        if let Loadings::Vector(u) = &self.loadings {
            if u.len() != self.n {
                return Err(Error::Domain(format!("{} loadings for {} series", u.len(), self.n)));
            }
            let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::Domain(format!("loadings have norm {norm}, expected 1")));
            }
        }
        if let CommonMode::Sine { period, .. } = self.mode {
            if !(period > 0.0) {
                return Err(Error::Domain(format!("sine period {period} must be > 0")));
            }
        }
        Ok(())
    }
}

/// Factor-model panel and the realised common mode `v(t)`.
pub fn gen_factor_panel(spec: &FactorModelSpec, seed: u64) -> Result<(GrowthPanel, Vec<f64>)> {
    spec.validate()?;
    let (n, t) = (spec.n, spec.t);
    let exposure: Vec<f64> = match &spec.loadings {
        Loadings::Uniform => vec![spec.sigma; n],
        Loadings::Vector(u) => u.iter().map(|x| spec.sigma * x).collect(),
    };
    let mut r = rng::seeded(seed);
    let mut values = vec![0.0; n * t];
    let mut mode = Vec::with_capacity(t);
    for c in 0..t {
        let v = match spec.mode {
            CommonMode::Gaussian => r.sample(StandardNormal),
            CommonMode::Sine { period, phase } => {
                std::f64::consts::SQRT_2 * (std::f64::consts::TAU * c as f64 / period + phase).sin()
            }
        };
        mode.push(v);
        for i in 0..n {
            let xi: f64 = r.sample(StandardNormal);
            values[i * t + c] = xi + exposure[i] * v;
        }
    }
    Ok((GrowthPanel::dense_unnamed(n, t, values), mode))
}

/// How observations are removed from a fully observed panel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingPattern {
    None,
    /// Every entry dropped independently with probability `p_miss`.
    Random { p_miss: f64 },
    /// Each firm enters at a random quarter and is observed from then on.
    Staggered,
}

const MIN_OBSERVED: usize = 3;

pub fn apply_missingness(panel: &GrowthPanel, pattern: MissingPattern, seed: u64) -> Result<GrowthPanel> {
    let (n, t) = (panel.n_firms(), panel.n_times());
    let mut r = rng::seeded(seed);
    let mut mask = panel.mask().to_vec();
    match pattern {
        MissingPattern::None => return Ok(panel.clone()),
        MissingPattern::Random { p_miss } => {
            if !(0.0..1.0).contains(&p_miss) {
                return Err(Error::Domain(format!("p_miss = {p_miss} outside [0, 1)")));
            }
            for i in 0..n {
                let original = panel.mask_row(i);
                let mut kept = 0;
                for _ in 0..=10 {
                    kept = 0;
                    for c in 0..t {
                        let keep = original[c] && r.random::<f64>() >= p_miss;
                        mask[i * t + c] = keep;
                        kept += keep as usize;
                    }
                    if kept >= MIN_OBSERVED {
                        break;
                    }
                }
                if kept < MIN_OBSERVED {
                    return Err(Error::InsufficientData {
                        firm: panel.firm_ids[i].clone(),
                        observed: kept,
                        required: MIN_OBSERVED,
                    });
                }
            }
        }
        MissingPattern::Staggered => {
            if t < MIN_OBSERVED {
                return Err(Error::InsufficientData {
                    firm: panel.firm_ids.first().cloned().unwrap_or_default(),
                    observed: t,
                    required: MIN_OBSERVED,
                });
            }
            for i in 0..n {
                let start = r.random_range(0..=t - MIN_OBSERVED);
                for c in 0..start {
                    mask[i * t + c] = false;
                }
            }
        }
    }
    Ok(panel.with_mask(mask))
}

/// `Θ = L + εI` for the network's Laplacian `L`.
pub fn precision_matrix(net: &Network, eps: f64) -> Result<DMatrix<f64>> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("eps = {eps} must be > 0")));
    }
    let n = net.n();
    let mut theta = DMatrix::from_diagonal_element(n, n, eps);
    for (i, j) in net.edges() {
        theta[(i, j)] -= 1.0;
        theta[(j, i)] -= 1.0;
        theta[(i, i)] += 1.0;
        theta[(j, j)] += 1.0;
    }
    Ok(theta)
}

/// Generator settings recorded alongside a planted instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedParams {
    pub eps: f64,
    pub sigma_common: f64,
    pub missing: MissingPattern,
    pub seed: u64,
    pub t: usize,
}

impl PlantedParams {
    pub fn has_common_mode(&self) -> bool {
        self.sigma_common > 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedInstance {
    pub network: Network,
    pub panel: GrowthPanel,
    pub params: PlantedParams,
}

/// `t` samples of `N(0, Θ⁻¹)` with `Θ = L + εI`, plus `sigma_common · v(t)`
/// added to every series.
///
/// Column `t` uses `N` standard normals for the field followed by one for the
/// common mode.
pub fn gen_gmrf_panel(net: &Network, t: usize, eps: f64, sigma_common: f64, seed: u64) -> Result<PlantedInstance> {
    if t == 0 {
        return Err(Error::Domain("t must be at least 1".into()));
    }
    if !(sigma_common >= 0.0 && sigma_common.is_finite()) {
        return Err(Error::Domain(format!("sigma_common = {sigma_common} must be >= 0")));
    }
    let theta = precision_matrix(net, eps)?;
    let n = net.n();
    let chol = theta
        .cholesky()
        .ok_or_else(|| Error::Numerical("precision matrix is not positive definite".into()))?;
    let mut r = rng::seeded(seed);
    let mut z = DMatrix::<f64>::zeros(n, t);
    let mut common = vec![0.0; t];
    for c in 0..t {
        for i in 0..n {
            z[(i, c)] = r.sample(StandardNormal);
        }
        common[c] = r.sample(StandardNormal);
    }
    // Θ = LLᵀ, x = L⁻ᵀ z has covariance Θ⁻¹
    let x = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let mut values = vec![0.0; n * t];
    for i in 0..n {
        for c in 0..t {
            values[i * t + c] = x[(i, c)] + sigma_common * common[c];
        }
    }
    let panel = GrowthPanel::dense(net.node_ids().to_vec(), (0..t as i64).collect(), values);
    Ok(PlantedInstance {
        network: net.clone(),
        panel,
        params: PlantedParams {
            eps,
            sigma_common,
            missing: MissingPattern::None,
            seed,
            t,
        },
    })
}

pub const PANEL_FILE: &str = "panel.csv";
pub const EDGES_FILE: &str = "edges.csv";
pub const PARAMS_FILE: &str = "params.json";

impl PlantedInstance {
    /// Writes `panel.csv`, `edges.csv` and `params.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let create = |name: &str| {
            let path = dir.join(name);
            File::create(&path).map(BufWriter::new).map_err(|e| Error::io(&path, e))
        };
        write_growth_csv(&self.panel, create(PANEL_FILE)?)?;
        write_edgelist(&self.network, create(EDGES_FILE)?)?;
        let mut params = create(PARAMS_FILE)?;
        serde_json::to_writer_pretty(&mut params, &self.params)?;
        std::io::Write::write_all(&mut params, b"\n").map_err(|e| Error::io(dir.join(PARAMS_FILE), e))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<PlantedInstance> {
        let open = |name: &str| {
            let path = dir.join(name);
            File::open(&path).map(BufReader::new).map_err(|e| Error::io(&path, e))
        };
        let panel = read_growth_csv(open(PANEL_FILE)?, false)?;
        let (network, _) = read_edgelist(open(EDGES_FILE)?, &panel.firm_ids)?;
        let params = serde_json::from_reader(open(PARAMS_FILE)?)?;
        Ok(PlantedInstance { network, panel, params })
    }
}

/// Covariance matrix `Θ⁻¹` of the field (without common mode).
pub fn field_covariance(net: &Network, eps: f64) -> Result<DMatrix<f64>> {
    precision_matrix(net, eps)?
        .try_inverse()
        .ok_or_else(|| Error::Numerical("precision matrix is singular".into()))
}

/// Graph Laplacian of a network, as used for spectral targets.
pub fn laplacian(net: &Network) -> DMatrix<f64> {
    let mut w = vec![0.0; sgl::n_pairs(net.n())];
    for (i, j) in net.edges() {
        w[sgl::pair_index(j, i, net.n()).expect("edge with i < j")] = 1.0;
    }
    sgl::lap_op(&sgl::WeightVector::new(net.n(), w).expect("unit weights"))
}
