//! Undirected networks, random-graph ensembles, and correlation statistics
//! conditioned on network structure.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::spectral::CorrMatrix;

/// Simple undirected graph on labelled nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    node_ids: Vec<String>,
    edges: BTreeSet<(usize, usize)>,
}

impl Network {
    /// Edgeless network with ids `f0..f{n-1}`.
    pub fn empty(n: usize) -> Network {
        Network::with_ids((0..n).map(|i| format!("f{i}")).collect())
    }

    pub fn with_ids(node_ids: Vec<String>) -> Network {
        Network {
            node_ids,
            edges: BTreeSet::new(),
        }
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Network> {
        let mut net = Network::empty(n);
        for (i, j) in edges {
            net.add_edge(i, j)?;
        }
        Ok(net)
    }

    pub fn n(&self) -> usize {
        self.node_ids.len()
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn set_node_ids(&mut self, ids: Vec<String>) {
        assert_eq!(ids.len(), self.n());
        self.node_ids = ids;
    }

    /// Inserts `{i, j}`; returns whether it was new.
    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<bool> {
        if i == j {
            return Err(Error::Domain(format!("self-loop on node {i}")));
        }
        if i.max(j) >= self.n() {
            return Err(Error::Domain(format!(
                "edge ({i}, {j}) out of range for {} nodes",
                self.n()
            )));
        }
        Ok(self.edges.insert((i.min(j), i.max(j))))
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    /// Edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n()];
        for &(i, j) in &self.edges {
            d[i] += 1;
            d[j] += 1;
        }
        d
    }

    pub fn adjacency_lists(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n()];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    /// Number of unordered node pairs.
    pub fn pair_count(&self) -> usize {
        let n = self.n();
        n * n.saturating_sub(1) / 2
    }

    /// Same graph with node `i` moved to position `perm[i]`.
    pub fn relabel(&self, perm: &[usize]) -> Network {
        let mut ids = vec![String::new(); self.n()];
        for (i, &p) in perm.iter().enumerate() {
            ids[p] = self.node_ids[i].clone();
        }
        Network {
            node_ids: ids,
            edges: self
                .edges
                .iter()
                .map(|&(i, j)| (perm[i].min(perm[j]), perm[i].max(perm[j])))
                .collect(),
        }
    }

    /// Subgraph induced on `nodes` (renumbered in that order).
    pub fn induced(&self, nodes: &[usize]) -> Network {
        let pos: HashMap<usize, usize> = nodes.iter().enumerate().map(|(k, &v)| (v, k)).collect();
        Network {
            node_ids: nodes.iter().map(|&v| self.node_ids[v].clone()).collect(),
            edges: self
                .edges
                .iter()
                .filter_map(|(i, j)| match (pos.get(i), pos.get(j)) {
                    (Some(&a), Some(&b)) => Some((a.min(b), a.max(b))),
                    _ => None,
                })
                .collect(),
        }
    }
}

/// Reads an `src,dst` edge list against known node ids.
///
/// Direction is discarded. Rows naming unknown ids, and self-loops, are
/// dropped; the number of dropped rows is returned alongside the network.
pub fn read_edgelist<R: std::io::Read>(reader: R, node_ids: &[String]) -> Result<(Network, usize)> {
    #[derive(Deserialize)]
    struct Rec {
        src: String,
        dst: String,
    }
    let index: HashMap<&str, usize> = node_ids.iter().enumerate().map(|(k, s)| (s.as_str(), k)).collect();
    let mut net = Network::with_ids(node_ids.to_vec());
    let mut dropped = 0;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    for (k, rec) in rdr.deserialize::<Rec>().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            line: k + 2,
            msg: e.to_string(),
        })?;
        match (index.get(rec.src.as_str()), index.get(rec.dst.as_str())) {
            (Some(&a), Some(&b)) if a != b => {
                net.add_edge(a, b)?;
            }
            _ => dropped += 1,
        }
    }
    Ok((net, dropped))
}

pub fn write_edgelist<W: std::io::Write>(net: &Network, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["src", "dst"])?;
    for (i, j) in net.edges() {
        w.write_record([net.node_ids[i].as_str(), net.node_ids[j].as_str()])?;
    }
    w.flush().map_err(|e| Error::io("<edgelist>", e))?;
    Ok(())
}

/// Assignment of every node to one of `names.len()` blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub labels: Vec<usize>,
    pub names: Vec<String>,
}

impl Partition {
    /// Blocks are numbered in sorted order of their names.
    pub fn from_names(names: &[String]) -> Partition {
        let unique: BTreeSet<&String> = names.iter().collect();
        let names_sorted: Vec<String> = unique.into_iter().cloned().collect();
        let index: HashMap<&String, usize> = names_sorted.iter().enumerate().map(|(k, s)| (s, k)).collect();
        Partition {
            labels: names.iter().map(|s| index[s]).collect(),
            names: names_sorted,
        }
    }

    pub fn from_labels(labels: Vec<usize>) -> Partition {
        let b = labels.iter().copied().max().map_or(0, |m| m + 1);
        Partition {
            labels,
            names: (0..b).map(|k| format!("b{k}")).collect(),
        }
    }

    pub fn n_blocks(&self) -> usize {
        self.names.len()
    }

    pub fn members(&self, block: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == block).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.n_blocks()];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }
}

/// Reads `firm_id,block`; every id in `node_ids` must be labelled.
pub fn read_partition<R: std::io::Read>(reader: R, node_ids: &[String]) -> Result<Partition> {
    #[derive(Deserialize)]
    struct Rec {
        firm_id: String,
        block: String,
    }
    let mut map: HashMap<String, String> = HashMap::new();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    for (k, rec) in rdr.deserialize::<Rec>().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            line: k + 2,
            msg: e.to_string(),
        })?;
        if let Some(old) = map.insert(rec.firm_id.clone(), rec.block.clone()) {
            if old != rec.block {
                return Err(Error::Conflict(format!(
                    "firm {} assigned to blocks {old} and {}",
                    rec.firm_id, rec.block
                )));
            }
        }
    }
    let names = node_ids
        .iter()
        .map(|id| {
            map.get(id)
                .cloned()
                .ok_or_else(|| Error::Contract(format!("firm {id} has no block label")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Partition::from_names(&names))
}

/// Block partition with within/across block link probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockScheme {
    pub partition: Partition,
    pub densities: DMatrix<f64>,
}

impl BlockScheme {
    pub fn new(partition: Partition, densities: DMatrix<f64>) -> Result<BlockScheme> {
        let b = partition.n_blocks();
        if densities.nrows() != b || densities.ncols() != b {
            return Err(Error::Contract(format!(
                "{}x{} density matrix for {b} blocks",
                densities.nrows(),
                densities.ncols()
            )));
        }
        for a in 0..b {
            for c in 0..b {
                let v = densities[(a, c)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Domain(format!("density {v} outside [0, 1]")));
                }
                if (v - densities[(c, a)]).abs() > 1e-12 {
                    return Err(Error::Domain("density matrix is not symmetric".into()));
                }
            }
        }
        Ok(BlockScheme {
            partition,
            densities,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSummary {
    pub n: usize,
    pub m: usize,
    /// `m / (n(n-1)/2)`.
    pub density: f64,
    /// `m / (n(n-1))`, the convention of the ER benchmark formula.
    pub ordered_pair_density: f64,
    pub median_degree: f64,
    pub max_degree: usize,
}

pub fn summary(net: &Network) -> NetworkSummary {
    let n = net.n();
    let m = net.edge_count();
    let mut deg = net.degrees();
    deg.sort_unstable();
    let median_degree = match deg.len() {
        0 => 0.0,
        k if k % 2 == 1 => deg[k / 2] as f64,
        k => 0.5 * (deg[k / 2 - 1] + deg[k / 2]) as f64,
    };
    let pairs = net.pair_count();
    NetworkSummary {
        n,
        m,
        density: if pairs > 0 { m as f64 / pairs as f64 } else { 0.0 },
        ordered_pair_density: if pairs > 0 {
            m as f64 / (2 * pairs) as f64
        } else {
            0.0
        },
        median_degree,
        max_degree: deg.last().copied().unwrap_or(0),
    }
}

/// `p = (1/(N(N-1))) Σ_i Σ_{j>i} S_ij`.
pub fn er_density(net: &Network) -> Result<f64> {
    let n = net.n();
    if n < 2 {
        return Err(Error::Domain("density needs at least two nodes".into()));
    }
    Ok(net.edge_count() as f64 / (n * (n - 1)) as f64)
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
    }
    Ok(())
}

/// G(n, p) by geometric skipping over the pair sequence.
pub fn generate_er(n: usize, p: f64, seed: u64) -> Result<Network> {
    check_probability(p)?;
    let mut net = Network::empty(n);
    if p == 0.0 || n < 2 {
        return Ok(net);
    }
    if p == 1.0 {
        for j in 1..n {
            for i in 0..j {
                net.edges.insert((i, j));
            }
        }
        return Ok(net);
    }
    let mut r = rng::seeded(seed);
    let log_q = (1.0 - p).ln();
    let (mut v, mut w): (usize, i64) = (1, -1);
    while v < n {
        let u: f64 = r.random();
        let skip = ((1.0 - u).ln() / log_q).floor() as i64;
        w += 1 + skip;
        while w >= v as i64 && v < n {
            w -= v as i64;
            v += 1;
        }
        if v < n {
            net.edges.insert((w as usize, v));
        }
    }
    Ok(net)
}

/// Stochastic block model: each pair drawn with its blocks' density.
///
/// A single-block scheme draws exactly the graphs of [`generate_er`].
pub fn generate_sbm(scheme: &BlockScheme, seed: u64) -> Result<Network> {
    let labels = &scheme.partition.labels;
    let n = labels.len();
    if scheme.partition.n_blocks() == 1 {
        return generate_er(n, scheme.densities[(0, 0)], seed);
    }
    let mut r = rng::seeded(seed);
    let mut net = Network::empty(n);
    for j in 1..n {
        for i in 0..j {
            let p = scheme.densities[(labels[i], labels[j])];
            if p > 0.0 && r.random::<f64>() < p {
                net.edges.insert((i, j));
            }
        }
    }
    Ok(net)
}

/// Empirical within/across block densities; a singleton block has diagonal density 0.
pub fn block_densities(net: &Network, partition: &Partition) -> Result<DMatrix<f64>> {
    if partition.labels.len() != net.n() {
        return Err(Error::Contract(format!(
            "partition labels {} nodes, network has {}",
            partition.labels.len(),
            net.n()
        )));
    }
    let b = partition.n_blocks();
    let sizes = partition.sizes();
    let mut counts = DMatrix::<f64>::zeros(b, b);
    for (i, j) in net.edges() {
        let (a, c) = (partition.labels[i], partition.labels[j]);
        counts[(a, c)] += 1.0;
        if a != c {
            counts[(c, a)] += 1.0;
        }
    }
    Ok(DMatrix::from_fn(b, b, |a, c| {
        let pairs = if a == c {
            (sizes[a] * sizes[a].saturating_sub(1)) as f64 / 2.0
        } else {
            (sizes[a] * sizes[c]) as f64
        };
        if pairs > 0.0 {
            counts[(a, c)] / pairs
        } else {
            0.0
        }
    }))
}

/// Erdős–Gallai test.
pub fn is_graphical(degrees: &[usize]) -> bool {
    let mut d = degrees.to_vec();
    d.sort_unstable_by(|a, b| b.cmp(a));
    let n = d.len();
    if d.iter().sum::<usize>() % 2 == 1 || d.first().is_some_and(|&x| x >= n.max(1)) {
        return d.iter().all(|&x| x == 0) && n <= 1 && d.iter().sum::<usize>() % 2 == 0;
    }
    let mut lhs = 0usize;
    for k in 1..=n {
        lhs += d[k - 1];
        let rhs = k * (k - 1) + d[k..].iter().map(|&x| x.min(k)).sum::<usize>();
        if lhs > rhs {
            return false;
        }
    }
    true
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Random simple graph with exactly the given degree sequence.
///
/// Stubs are matched uniformly at random; self-loops and multi-edges are then
/// repaired by double-edge swaps, and the result is mixed with `10·m` further
/// simplicity-preserving swaps.
pub fn generate_config_model(degrees: &[usize], seed: u64) -> Result<Network> {
    if !is_graphical(degrees) {
        return Err(Error::Domain("degree sequence is not graphical".into()));
    }
    let n = degrees.len();
    let mut r = rng::seeded(seed);
    let m = degrees.iter().sum::<usize>() / 2;

    let mut edges = None;
    for _attempt in 0..10 {
        if let Some(e) = stub_match(degrees, m, &mut r) {
            edges = Some(e);
            break;
        }
    }
    let mut edges = match edges {
        Some(e) => e,
        None => havel_hakimi(degrees),
    };

    let mut present: BTreeSet<(usize, usize)> = edges.iter().copied().collect();
    if m >= 2 {
        for _ in 0..10 * m {
            let a = r.random_range(0..m);
            let b = r.random_range(0..m);
            if a == b {
                continue;
            }
            let (x, y) = edges[a];
            let (mut u, mut v) = edges[b];
            if r.random::<bool>() {
                std::mem::swap(&mut u, &mut v);
            }
            // (x,y),(u,v) -> (x,u),(y,v)
            if x == u || y == v || present.contains(&key(x, u)) || present.contains(&key(y, v)) {
                continue;
            }
            present.remove(&edges[a]);
            present.remove(&edges[b]);
            edges[a] = key(x, u);
            edges[b] = key(y, v);
            present.insert(edges[a]);
            present.insert(edges[b]);
        }
    }
    let mut net = Network::empty(n);
    net.edges = present;
    debug_assert_eq!(net.degrees(), degrees);
    Ok(net)
}

fn stub_match(degrees: &[usize], m: usize, r: &mut rng::Rng) -> Option<Vec<(usize, usize)>> {
    let mut stubs: Vec<usize> = degrees
        .iter()
        .enumerate()
        .flat_map(|(v, &d)| std::iter::repeat_n(v, d))
        .collect();
    stubs.shuffle(r);
    let mut edges: Vec<(usize, usize)> = stubs.chunks(2).map(|c| key(c[0], c[1])).collect();
    let mut count: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for e in &edges {
        *count.entry(*e).or_default() += 1;
    }
    let is_bad = |e: &(usize, usize), count: &BTreeMap<(usize, usize), usize>| e.0 == e.1 || count[e] > 1;
    let budget = 100 * m.max(1);
    for _ in 0..budget {
        let Some(a) = (0..m).find(|&k| is_bad(&edges[k], &count)) else {
            return Some(edges);
        };
        let b = r.random_range(0..m);
        if a == b {
            continue;
        }
        let (x, y) = edges[a];
        let (mut u, mut v) = edges[b];
        if r.random::<bool>() {
            std::mem::swap(&mut u, &mut v);
        }
        let (e1, e2) = (key(x, u), key(y, v));
        if e1.0 == e1.1 || e2.0 == e2.1 || e1 == e2 || count.contains_key(&e1) || count.contains_key(&e2) {
            continue;
        }
        for old in [edges[a], edges[b]] {
            let c = count.get_mut(&old).unwrap();
            *c -= 1;
            if *c == 0 {
                count.remove(&old);
            }
        }
        edges[a] = e1;
        edges[b] = e2;
        *count.entry(e1).or_default() += 1;
        *count.entry(e2).or_default() += 1;
    }
    (0..m).all(|k| !is_bad(&edges[k], &count)).then_some(edges)
}

fn havel_hakimi(degrees: &[usize]) -> Vec<(usize, usize)> {
    let mut rem: Vec<(usize, usize)> = degrees.iter().copied().enumerate().map(|(v, d)| (d, v)).collect();
    let mut edges = Vec::new();
    loop {
        rem.sort_unstable_by(|a, b| b.cmp(a));
        let (d, v) = rem[0];
        if d == 0 {
            break;
        }
        rem[0].0 = 0;
        for slot in rem.iter_mut().skip(1).take(d) {
            slot.0 -= 1;
            edges.push(key(v, slot.1));
        }
    }
    edges
}

/// `S^(k)` for `k = 1..=k_max`: pairs `(i, j)`, `i < j`, at shortest-path distance exactly `k`.
pub fn distance_classes(net: &Network, k_max: usize) -> Result<Vec<Vec<(usize, usize)>>> {
    if k_max == 0 {
        return Err(Error::Domain("k_max must be at least 1".into()));
    }
    let adj = net.adjacency_lists();
    let n = net.n();
    let per_source: Vec<Vec<(usize, usize)>> = (0..n)
        .into_par_iter()
        .map(|s| {
            let mut dist = vec![usize::MAX; n];
            dist[s] = 0;
            let mut queue = VecDeque::from([s]);
            let mut found = Vec::new();
            while let Some(v) = queue.pop_front() {
                if dist[v] == k_max {
                    continue;
                }
                for &w in &adj[v] {
                    if dist[w] == usize::MAX {
                        dist[w] = dist[v] + 1;
                        queue.push_back(w);
                        if w > s {
                            found.push((w, dist[w]));
                        }
                    }
                }
            }
            found
        })
        .collect();
    let mut classes = vec![Vec::new(); k_max];
    for (s, found) in per_source.into_iter().enumerate() {
        for (w, d) in found {
            classes[d - 1].push((s, w));
        }
    }
    for c in &mut classes {
        c.sort_unstable();
    }
    Ok(classes)
}

/// Mean of a correlation field over a set of pairs, skipping never co-observed pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairAverage {
    pub mean: f64,
    /// Matrix entries that entered the mean (two per pair for a lagged matrix).
    pub count: usize,
}

/// Lagged matrices are not symmetric, so both orientations of each pair enter the average.
fn pair_average(c: &CorrMatrix, pairs: impl Iterator<Item = (usize, usize)>) -> Option<PairAverage> {
    let (mut sum, mut count) = (0.0, 0usize);
    for (i, j) in pairs {
        let oriented: &[(usize, usize)] = if c.lag == 0 { &[(i, j)] } else { &[(i, j), (j, i)] };
        for &(a, b) in oriented {
            if c.overlap[(a, b)] > 0 {
                sum += c.values[(a, b)];
                count += 1;
            }
        }
    }
    (count > 0).then(|| PairAverage {
        mean: sum / count as f64,
        count,
    })
}

fn check_aligned(c: &CorrMatrix, net: &Network) -> Result<()> {
    if c.size() != net.n() {
        return Err(Error::Contract(format!(
            "correlation matrix has {} nodes, network has {}",
            c.size(),
            net.n()
        )));
    }
    Ok(())
}

/// Average correlation between neighbours.
pub fn avg_corr_on_network(c: &CorrMatrix, net: &Network) -> Result<PairAverage> {
    check_aligned(c, net)?;
    pair_average(c, net.edges())
        .ok_or_else(|| Error::UndefinedMean("network has no edge with co-observed endpoints".into()))
}

/// Random-graph ensemble used as a null model for network averages.
#[derive(Debug, Clone, PartialEq)]
pub enum NullModel {
    ErdosRenyi { n: usize, p: f64 },
    BlockModel(BlockScheme),
    Configuration { degrees: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NullModelKind {
    Er,
    Sbm,
    Config,
}

impl NullModel {
    /// Null model fitted to `net`: same edge count in expectation (ER), same
    /// block densities (SBM), or the same degree sequence (configuration).
    pub fn matching(kind: NullModelKind, net: &Network, partition: Option<&Partition>) -> Result<NullModel> {
        Ok(match kind {
            NullModelKind::Er => NullModel::ErdosRenyi {
                n: net.n(),
                p: summary(net).density,
            },
            NullModelKind::Sbm => {
                let part = partition
                    .ok_or_else(|| Error::Contract("block model benchmark needs a partition".into()))?;
                BlockScheme::new(part.clone(), block_densities(net, part)?).map(NullModel::BlockModel)?
            }
            NullModelKind::Config => NullModel::Configuration {
                degrees: net.degrees(),
            },
        })
    }

    pub fn sample(&self, seed: u64) -> Result<Network> {
        match self {
            NullModel::ErdosRenyi { n, p } => generate_er(*n, *p, seed),
            NullModel::BlockModel(s) => generate_sbm(s, seed),
            NullModel::Configuration { degrees } => generate_config_model(degrees, seed),
        }
    }
}

/// Mean and sample standard deviation over benchmark draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkStat {
    pub mean: f64,
    pub std: f64,
}

impl BenchmarkStat {
    pub fn from_samples(xs: &[f64]) -> BenchmarkStat {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        BenchmarkStat { mean, std }
    }
}

/// Network average of `c` over `n_draws` samples of `model`; draw `k` uses seed `seed + k`.
pub fn benchmark_avg_corr(c: &CorrMatrix, model: &NullModel, n_draws: usize, seed: u64) -> Result<BenchmarkStat> {
    if n_draws == 0 {
        return Err(Error::Domain("n_draws must be at least 1".into()));
    }
    let samples = (0..n_draws as u64)
        .into_par_iter()
        .map(|k| {
            let net = model.sample(rng::derived(seed, k))?;
            avg_corr_on_network(c, &net).map(|a| a.mean)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(BenchmarkStat::from_samples(&samples))
}

/// `D(k)`: mean lag-0 correlation over pairs at distance exactly `k`; `None` for empty classes.
pub fn distance_decay(c: &CorrMatrix, net: &Network, k_max: usize) -> Result<Vec<Option<f64>>> {
    check_aligned(c, net)?;
    Ok(distance_classes(net, k_max)?
        .into_iter()
        .map(|class| pair_average(c, class.into_iter()).map(|a| a.mean))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn complete(n: usize) -> Network {
        Network::from_edges(n, (0..n).flat_map(|j| (0..j).map(move |i| (i, j)))).unwrap()
    }

    #[test]
    fn triangle_summary() {
        let s = summary(&complete(3));
        assert_eq!(s.m, 3);
        assert_eq!(s.density, 1.0);
        assert_eq!(s.median_degree, 2.0);
        assert_eq!(s.max_degree, 2);
    }

    #[test]
    fn empty_summary() {
        let s = summary(&Network::empty(10));
        assert_eq!(s.density, 0.0);
        assert_eq!(s.median_degree, 0.0);
        assert_eq!(s.max_degree, 0);
    }

    #[test]
    fn er_density_formula() {
        assert_eq!(er_density(&complete(4)).unwrap(), 0.5);
        assert_eq!(er_density(&Network::empty(5)).unwrap(), 0.0);
        assert!(er_density(&Network::empty(1)).is_err());
    }

    #[test]
    fn er_extremes() {
        assert_eq!(generate_er(10, 1.0, 0).unwrap().edge_count(), 45);
        assert_eq!(generate_er(10, 0.0, 0).unwrap().edge_count(), 0);
        assert!(generate_er(10, 1.5, 0).is_err());
    }

    #[test]
    fn er_edge_count_moments() {
        let m = generate_er(1000, 0.01, 42).unwrap().edge_count() as f64;
        let pairs = 499_500.0;
        let sd = (pairs * 0.01 * 0.99f64).sqrt();
        assert!((m - 4995.0).abs() < 3.0 * sd, "m = {m}");
        assert_eq!(generate_er(50, 0.2, 3).unwrap(), generate_er(50, 0.2, 3).unwrap());
    }

    #[test]
    fn sbm_disjoint_cliques() {
        let part = Partition::from_labels(vec![0, 0, 0, 1, 1, 1]);
        let scheme = BlockScheme::new(part, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0])).unwrap();
        let net = generate_sbm(&scheme, 1).unwrap();
        assert_eq!(net.edge_count(), 6);
        assert!(net.has_edge(0, 2) && net.has_edge(3, 5) && !net.has_edge(2, 3));
    }

    #[test]
    fn block_density_conventions() {
        let part = Partition::from_labels(vec![0, 0, 1, 1]);
        let net = Network::from_edges(4, [(0, 2)]).unwrap();
        let rho = block_densities(&net, &part).unwrap();
        assert_eq!(rho[(0, 1)], 0.25);
        assert_eq!(rho[(1, 0)], 0.25);
        assert_eq!(rho[(0, 0)], 0.0);

        let part = Partition::from_labels(vec![0, 0, 0, 1]);
        let net = Network::from_edges(4, [(0, 1), (0, 2), (1, 2)]).unwrap();
        let rho = block_densities(&net, &part).unwrap();
        assert_eq!(rho[(0, 0)], 1.0);
        assert_eq!(rho[(1, 1)], 0.0); // singleton

        let rho = block_densities(&Network::empty(4), &part).unwrap();
        assert!(rho.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sbm_reproduces_its_densities() {
        let labels: Vec<usize> = (0..120).map(|i| i % 3).collect();
        let part = Partition::from_labels(labels);
        let rho = DMatrix::from_row_slice(3, 3, &[0.3, 0.05, 0.1, 0.05, 0.2, 0.02, 0.1, 0.02, 0.4]);
        let scheme = BlockScheme::new(part.clone(), rho.clone()).unwrap();
        let est = block_densities(&generate_sbm(&scheme, 9).unwrap(), &part).unwrap();
        let sizes = part.sizes();
        for a in 0..3 {
            for b in 0..3 {
                let pairs = if a == b {
                    (sizes[a] * (sizes[a] - 1) / 2) as f64
                } else {
                    (sizes[a] * sizes[b]) as f64
                };
                let p = rho[(a, b)];
                let sd = (p * (1.0 - p) / pairs).sqrt();
                assert!((est[(a, b)] - p).abs() < 3.0 * sd, "({a},{b})");
            }
        }
    }

    #[test]
    fn graphical_sequences() {
        assert!(is_graphical(&[1, 1]));
        assert!(is_graphical(&[3, 3, 3, 3]));
        assert!(is_graphical(&[3, 1, 1, 1, 1, 1]));
        assert!(!is_graphical(&[3, 1]));
        assert!(!is_graphical(&[1, 1, 1]));
        assert!(!is_graphical(&[3, 3, 1, 1]));
        assert!(is_graphical(&[]));
        assert!(is_graphical(&[0]));
    }

    #[test]
    fn config_model_small_cases() {
        let net = generate_config_model(&[1, 1], 0).unwrap();
        assert_eq!(net.edges().collect::<Vec<_>>(), vec![(0, 1)]);
        assert_eq!(generate_config_model(&[3, 3, 3, 3], 5).unwrap(), complete(4));
        for seed in 0..20 {
            let net = generate_config_model(&[3, 1, 1, 1, 1, 1], seed).unwrap();
            assert_eq!(net.degrees(), vec![3, 1, 1, 1, 1, 1]);
            assert_eq!(net.edge_count(), 4);
            // the two leaves not attached to the hub are joined to each other
            let loose: Vec<usize> = (1..6).filter(|&v| !net.has_edge(0, v)).collect();
            assert_eq!(loose.len(), 2);
            assert!(net.has_edge(loose[0], loose[1]));
        }
        assert!(matches!(generate_config_model(&[3, 1], 0), Err(Error::Domain(_))));
    }

    #[test]
    fn distance_classes_examples() {
        let path = Network::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let c = distance_classes(&path, 3).unwrap();
        assert_eq!(c[0], vec![(0, 1), (1, 2)]);
        assert_eq!(c[1], vec![(0, 2)]);
        assert!(c[2].is_empty());

        // hub 0 linked to 1, 2, 3 and the path 0-2-3 also exists
        let star = Network::from_edges(4, [(0, 1), (0, 2), (0, 3), (2, 3)]).unwrap();
        let c = distance_classes(&star, 2).unwrap();
        assert!(c[0].contains(&(0, 3)));
        assert!(!c[1].contains(&(0, 3)));

        assert!(distance_classes(&complete(5), 2).unwrap()[1].is_empty());
    }

    #[test]
    fn averages_on_network() {
        let rho = 0.2;
        let mut m = DMatrix::from_element(5, 5, rho);
        m.fill_diagonal(1.0);
        let c = CorrMatrix::from_values(m, 40);
        let net = Network::from_edges(5, [(0, 1), (2, 4), (1, 3)]).unwrap();
        assert!((avg_corr_on_network(&c, &net).unwrap().mean - rho).abs() < 1e-15);
        let d = distance_decay(&c, &net, 6).unwrap();
        assert!(d[0].is_some());
        assert_eq!(d[5], None);
        for v in d.iter().flatten() {
            assert!((v - rho).abs() < 1e-15);
        }
        assert!(matches!(avg_corr_on_network(&c, &Network::empty(5)), Err(Error::UndefinedMean(_))));

        let mut m = DMatrix::identity(2, 2);
        m[(0, 1)] = 0.3;
        m[(1, 0)] = 0.3;
        let c = CorrMatrix::from_values(m, 40);
        let one = Network::from_edges(2, [(0, 1)]).unwrap();
        assert_eq!(avg_corr_on_network(&c, &one).unwrap().mean, 0.3);
    }

    #[test]
    fn zero_overlap_pairs_are_skipped() {
        let mut c = CorrMatrix::from_values(DMatrix::from_element(3, 3, 0.5), 10);
        c.overlap[(0, 1)] = 0;
        c.overlap[(1, 0)] = 0;
        c.values[(0, 1)] = 0.0;
        let net = Network::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let a = avg_corr_on_network(&c, &net).unwrap();
        assert_eq!(a.count, 1);
        assert_eq!(a.mean, 0.5);
    }

    #[test]
    fn benchmark_on_constant_field() {
        let mut m = DMatrix::from_element(30, 30, 0.1);
        m.fill_diagonal(1.0);
        let c = CorrMatrix::from_values(m, 40);
        let net = generate_er(30, 0.2, 1).unwrap();
        let part = Partition::from_labels((0..30).map(|i| i % 2).collect());
        for kind in [NullModelKind::Er, NullModelKind::Sbm, NullModelKind::Config] {
            let model = NullModel::matching(kind, &net, Some(&part)).unwrap();
            let s = benchmark_avg_corr(&c, &model, 10, 4).unwrap();
            assert!((s.mean - 0.1).abs() < 1e-12);
            assert!(s.std < 1e-12);
            assert_eq!(s, benchmark_avg_corr(&c, &model, 10, 4).unwrap());
        }
    }

    #[test]
    fn edgelist_round_trip_discards_direction() {
        let ids: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let (net, dropped) = read_edgelist("src,dst\nb,a\na,b\nc,a\na,a\nz,a\n".as_bytes(), &ids).unwrap();
        assert_eq!(dropped, 2);
        assert_eq!(net.edge_count(), 2);
        let mut buf = Vec::new();
        write_edgelist(&net, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "src,dst\na,b\na,c\n");
    }

    #[test]
    fn partition_file() {
        let ids: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let p = read_partition("firm_id,block\nc,x\na,y\nb,x\n".as_bytes(), &ids).unwrap();
        assert_eq!(p.names, vec!["x", "y"]);
        assert_eq!(p.labels, vec![1, 0, 0]);
        assert!(read_partition("firm_id,block\na,x\n".as_bytes(), &ids).is_err());
    }
}
