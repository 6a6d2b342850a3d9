//! Topology, cluster and group structure of a multi-task network.
//!
//! Agents are indexed so that clusters occupy consecutive index ranges and,
//! inside a cluster, groups occupy consecutive sub-ranges. With this ordering
//! a combination matrix restricted to groups is block diagonal, which the
//! analysis relies on.
//!
//! Indices are 0-based everywhere in code and on the wire.

use std::collections::VecDeque;
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{self, StreamKind};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    /// Sorted neighbor lists, each containing the agent itself.
    neighbors: Vec<Vec<usize>>,
    cluster_of: Vec<usize>,
    group_of: Vec<usize>,
    group_cluster: Vec<usize>,
    group_ranges: Vec<Range<usize>>,
    cluster_ranges: Vec<Range<usize>>,
    minimizers: Vec<Vec<f64>>,
}

impl NetworkModel {
    /// Builds a model and checks every structural invariant.
    ///
    /// `edges` are undirected; self-loops and duplicates are accepted and
    /// ignored since every agent is its own neighbor anyway.
    pub fn new(
        n_agents: usize,
        edges: &[(usize, usize)],
        cluster_of: Vec<usize>,
        group_of: Vec<usize>,
        minimizers: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if n_agents == 0 {
            return Err(Error::InvalidSizes("network needs at least one agent".into()));
        }
        if cluster_of.len() != n_agents || group_of.len() != n_agents {
            return Err(Error::InvalidSizes(format!(
                "cluster_of has {} entries and group_of has {}, expected {n_agents}",
                cluster_of.len(),
                group_of.len()
            )));
        }

        let mut neighbors: Vec<Vec<usize>> = (0..n_agents).map(|k| vec![k]).collect();
        for &(a, b) in edges {
            if a >= n_agents || b >= n_agents {
                return Err(Error::InvalidTopology(format!(
                    "edge ({a}, {b}) out of range for {n_agents} agents"
                )));
            }
            if a != b {
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }

        if cluster_of[0] != 0 || group_of[0] != 0 {
            return Err(Error::InvalidTopology(
                "indexing rule: agent 0 must be in cluster 0 and group 0".into(),
            ));
        }
        for k in 1..n_agents {
            let dc = cluster_of[k].wrapping_sub(cluster_of[k - 1]);
            let dg = group_of[k].wrapping_sub(group_of[k - 1]);
            if dc > 1 || dg > 1 {
                return Err(Error::InvalidTopology(format!(
                    "indexing rule violated at agent {k}: labels must be consecutive"
                )));
            }
            if dg == 0 && dc != 0 {
                return Err(Error::InvalidTopology(format!(
                    "group {} spans clusters {} and {}",
                    group_of[k],
                    cluster_of[k - 1],
                    cluster_of[k]
                )));
            }
        }

        let n_clusters = cluster_of[n_agents - 1] + 1;
        let n_groups = group_of[n_agents - 1] + 1;
        let cluster_ranges = label_ranges(&cluster_of, n_clusters);
        let group_ranges = label_ranges(&group_of, n_groups);
        let group_cluster = group_ranges.iter().map(|r| cluster_of[r.start]).collect();

        if minimizers.len() != n_clusters {
            return Err(Error::InvalidSizes(format!(
                "{} minimizers given for {n_clusters} clusters",
                minimizers.len()
            )));
        }
        let dim = minimizers[0].len();
        if dim == 0 {
            return Err(Error::InvalidSizes("minimizers must have dimension >= 1".into()));
        }
        if minimizers
            .iter()
            .any(|w| w.len() != dim || w.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::InvalidSizes(
                "minimizers must be finite and share one dimension".into(),
            ));
        }

        let model = NetworkModel {
            neighbors,
            cluster_of,
            group_of,
            group_cluster,
            group_ranges,
            cluster_ranges,
            minimizers,
        };
        for (q, r) in model.cluster_ranges.iter().enumerate() {
            if !model.range_connected(r.clone()) {
                return Err(Error::InvalidTopology(format!("cluster {q} is not connected")));
            }
        }
        for (m, r) in model.group_ranges.iter().enumerate() {
            if !model.range_connected(r.clone()) {
                return Err(Error::InvalidTopology(format!("group {m} is not connected")));
            }
        }
        Ok(model)
    }

    /// Like [`NetworkModel::new`] but first relabels agents so that the
    /// indexing rule holds. Cluster labels must already be `0..Q`; group
    /// labels can be arbitrary ids as long as each one lives in a single
    /// cluster.
    ///
    /// Returns the model and the permutation `new index -> old index`.
    pub fn canonicalize(
        n_agents: usize,
        edges: &[(usize, usize)],
        cluster_of: &[usize],
        group_of: &[usize],
        minimizers: Vec<Vec<f64>>,
    ) -> Result<(Self, Vec<usize>)> {
        if cluster_of.len() != n_agents || group_of.len() != n_agents {
            return Err(Error::InvalidSizes(
                "cluster_of/group_of length does not match n_agents".into(),
            ));
        }
        let mut order: Vec<usize> = (0..n_agents).collect();
        order.sort_by_key(|&k| (cluster_of[k], group_of[k], k));

        let mut old_to_new = vec![0; n_agents];
        for (new, &old) in order.iter().enumerate() {
            old_to_new[old] = new;
        }

        let mut group_owner = std::collections::HashMap::new();
        for k in 0..n_agents {
            if let Some(&q) = group_owner.get(&group_of[k]) {
                if q != cluster_of[k] {
                    return Err(Error::InvalidTopology(format!(
                        "group id {} appears in clusters {q} and {}",
                        group_of[k], cluster_of[k]
                    )));
                }
            } else {
                group_owner.insert(group_of[k], cluster_of[k]);
            }
        }

        let mut new_cluster = Vec::with_capacity(n_agents);
        let mut new_group = Vec::with_capacity(n_agents);
        let mut next_group = 0usize;
        let mut cluster_ids: Vec<usize> = cluster_of.to_vec();
        cluster_ids.sort_unstable();
        cluster_ids.dedup();
        if cluster_ids.iter().enumerate().any(|(i, &c)| i != c) {
            return Err(Error::InvalidTopology("cluster labels must be 0..Q".into()));
        }
        for (i, &old) in order.iter().enumerate() {
            if i > 0 && group_of[old] != group_of[order[i - 1]] {
                next_group += 1;
            }
            new_cluster.push(cluster_of[old]);
            new_group.push(next_group);
        }
        let new_edges: Vec<(usize, usize)> = edges
            .iter()
            .map(|&(a, b)| {
                if a >= n_agents || b >= n_agents {
                    Err(Error::InvalidTopology(format!("edge ({a}, {b}) out of range")))
                } else {
                    Ok((old_to_new[a], old_to_new[b]))
                }
            })
            .collect::<Result<_>>()?;
        let model = NetworkModel::new(n_agents, &new_edges, new_cluster, new_group, minimizers)?;
        Ok((model, order))
    }

    pub fn n_agents(&self) -> usize {
        self.neighbors.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.cluster_ranges.len()
    }

    pub fn n_groups(&self) -> usize {
        self.group_ranges.len()
    }

    pub fn dim(&self) -> usize {
        self.minimizers[0].len()
    }

    /// Full neighborhood, sorted, including `k`.
    pub fn neighbors(&self, k: usize) -> &[usize] {
        &self.neighbors[k]
    }

    pub fn has_edge(&self, k: usize, l: usize) -> bool {
        self.neighbors[k].binary_search(&l).is_ok()
    }

    pub fn cluster_of(&self, k: usize) -> usize {
        self.cluster_of[k]
    }

    pub fn group_of(&self, k: usize) -> usize {
        self.group_of[k]
    }

    pub fn cluster_labels(&self) -> &[usize] {
        &self.cluster_of
    }

    pub fn group_labels(&self) -> &[usize] {
        &self.group_of
    }

    pub fn cluster_of_group(&self, m: usize) -> usize {
        self.group_cluster[m]
    }

    pub fn group_members(&self, m: usize) -> Range<usize> {
        self.group_ranges[m].clone()
    }

    pub fn cluster_members(&self, q: usize) -> Range<usize> {
        self.cluster_ranges[q].clone()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.group_ranges.iter().map(|r| r.len()).collect()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        self.cluster_ranges.iter().map(|r| r.len()).collect()
    }

    pub fn cluster_minimizer(&self, q: usize) -> &[f64] {
        &self.minimizers[q]
    }

    pub fn minimizers(&self) -> &[Vec<f64>] {
        &self.minimizers
    }

    /// Minimizer `w_k^o` of agent `k`, i.e. its cluster's minimizer.
    pub fn agent_minimizer(&self, k: usize) -> &[f64] {
        &self.minimizers[self.cluster_of[k]]
    }

    /// Undirected edges `(k, l)` with `k < l`, self-loops excluded.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (k, list) in self.neighbors.iter().enumerate() {
            out.extend(list.iter().filter(|&&l| l > k).map(|&l| (k, l)));
        }
        out
    }

    /// Edges whose endpoints share a cluster.
    pub fn in_cluster_edges(&self) -> Vec<(usize, usize)> {
        self.edges()
            .into_iter()
            .filter(|&(k, l)| self.cluster_of[k] == self.cluster_of[l])
            .collect()
    }

    /// `N_k ∩ G_m` for the group `m` of agent `k`.
    pub fn group_neighbors(&self, k: usize) -> Vec<usize> {
        let g = self.group_of[k];
        self.neighbors[k]
            .iter()
            .copied()
            .filter(|&l| self.group_of[l] == g)
            .collect()
    }

    /// `min_{q != r} ||w_q - w_r||^2`, or `None` with a single cluster.
    pub fn min_minimizer_separation_sq(&self) -> Option<f64> {
        let q = self.n_clusters();
        let mut best: Option<f64> = None;
        for a in 0..q {
            for b in (a + 1)..q {
                let d = dist_sq(&self.minimizers[a], &self.minimizers[b]);
                best = Some(best.map_or(d, |x: f64| x.min(d)));
            }
        }
        best
    }

    /// Same topology and clusters but with every cluster collapsed into a
    /// single group. This is the structure the second recursion converges to
    /// once clustering is correct.
    pub fn with_groups_as_clusters(&self) -> NetworkModel {
        let mut model = self.clone();
        model.group_of = self.cluster_of.clone();
        model.group_ranges = self.cluster_ranges.clone();
        model.group_cluster = (0..self.n_clusters()).collect();
        model
    }

    fn range_connected(&self, r: Range<usize>) -> bool {
        if r.len() <= 1 {
            return true;
        }
        let mut seen = vec![false; r.len()];
        let mut queue = VecDeque::from([r.start]);
        seen[0] = true;
        let mut count = 1;
        while let Some(k) = queue.pop_front() {
            for &l in &self.neighbors[k] {
                if r.contains(&l) && !seen[l - r.start] {
                    seen[l - r.start] = true;
                    count += 1;
                    queue.push_back(l);
                }
            }
        }
        count == r.len()
    }

    pub fn to_json(&self) -> TopologyJson {
        TopologyJson {
            n_agents: self.n_agents(),
            edges: self.edges().into_iter().map(|(a, b)| [a, b]).collect(),
            cluster_of: self.cluster_of.clone(),
            group_of: self.group_of.clone(),
            minimizers: self.minimizers.clone(),
        }
    }
}

fn label_ranges(labels: &[usize], count: usize) -> Vec<Range<usize>> {
    let mut ranges = vec![0..0; count];
    let mut start = 0;
    for k in 1..=labels.len() {
        if k == labels.len() || labels[k] != labels[k - 1] {
            ranges[labels[start]] = start..k;
            start = k;
        }
    }
    ranges
}

pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Wire format of a topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyJson {
    pub n_agents: usize,
    pub edges: Vec<[usize; 2]>,
    pub cluster_of: Vec<usize>,
    pub group_of: Vec<usize>,
    pub minimizers: Vec<Vec<f64>>,
}

impl TopologyJson {
    fn edge_pairs(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|e| (e[0], e[1])).collect()
    }

    /// Strict conversion: labels must already follow the indexing rule.
    pub fn to_model(&self) -> Result<NetworkModel> {
        NetworkModel::new(
            self.n_agents,
            &self.edge_pairs(),
            self.cluster_of.clone(),
            self.group_of.clone(),
            self.minimizers.clone(),
        )
    }

    /// Relabels agents into canonical order first. See
    /// [`NetworkModel::canonicalize`].
    pub fn to_model_relabeled(&self) -> Result<(NetworkModel, Vec<usize>)> {
        NetworkModel::canonicalize(
            self.n_agents,
            &self.edge_pairs(),
            &self.cluster_of,
            &self.group_of,
            self.minimizers.clone(),
        )
    }
}

fn default_dim() -> usize {
    2
}

fn default_max_retries() -> usize {
    10_000
}

/// Parameters of the random topology generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologySpec {
    pub cluster_sizes: Vec<usize>,
    /// Group sizes inside each cluster, in order.
    pub group_sizes: Vec<Vec<usize>>,
    pub intra_cluster_edge_prob: f64,
    pub cross_cluster_edge_prob: f64,
    pub rng_seed: u64,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Cluster minimizers; drawn uniformly from `[-1, 1]^dim` when absent.
    #[serde(default)]
    pub minimizers: Option<Vec<Vec<f64>>>,
    /// Connectivity retries allowed per cluster.
    #[serde(default = "default_max_retries")]
    pub max_retries: usize,
}

impl TopologySpec {
    /// One group per cluster.
    pub fn one_group_per_cluster(
        cluster_sizes: Vec<usize>,
        intra: f64,
        cross: f64,
        seed: u64,
    ) -> Self {
        let group_sizes = cluster_sizes.iter().map(|&s| vec![s]).collect();
        TopologySpec {
            cluster_sizes,
            group_sizes,
            intra_cluster_edge_prob: intra,
            cross_cluster_edge_prob: cross,
            rng_seed: seed,
            dim: default_dim(),
            minimizers: None,
            max_retries: default_max_retries(),
        }
    }
}

/// Samples a topology with independent Bernoulli edges.
///
/// Intra-cluster edges are redrawn per cluster until the cluster and each of
/// its groups are connected; cross-cluster edges are drawn once.
pub fn generate_topology(spec: &TopologySpec) -> Result<NetworkModel> {
    if spec.cluster_sizes.is_empty() || spec.cluster_sizes.contains(&0) {
        return Err(Error::InvalidSizes("cluster sizes must be positive".into()));
    }
    if spec.group_sizes.len() != spec.cluster_sizes.len() {
        return Err(Error::InvalidSizes(format!(
            "{} group lists for {} clusters",
            spec.group_sizes.len(),
            spec.cluster_sizes.len()
        )));
    }
    for (q, (groups, &size)) in spec.group_sizes.iter().zip(&spec.cluster_sizes).enumerate() {
        if groups.is_empty() || groups.contains(&0) || groups.iter().sum::<usize>() != size {
            return Err(Error::InvalidSizes(format!(
                "group sizes {groups:?} do not partition cluster {q} of size {size}"
            )));
        }
    }
    for p in [spec.intra_cluster_edge_prob, spec.cross_cluster_edge_prob] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidSizes(format!("edge probability {p} not in [0, 1]")));
        }
    }
    if spec.dim == 0 {
        return Err(Error::InvalidSizes("dimension must be >= 1".into()));
    }

    let n: usize = spec.cluster_sizes.iter().sum();
    let mut cluster_of = Vec::with_capacity(n);
    let mut group_of = Vec::with_capacity(n);
    let mut group = 0;
    for (q, groups) in spec.group_sizes.iter().enumerate() {
        for &g in groups {
            cluster_of.extend(std::iter::repeat_n(q, g));
            group_of.extend(std::iter::repeat_n(group, g));
            group += 1;
        }
    }

    let minimizers = match &spec.minimizers {
        Some(w) => w.clone(),
        None => {
            let mut rng = rng::stream(spec.rng_seed, StreamKind::Minimizers, 0, 0);
            (0..spec.cluster_sizes.len())
                .map(|_| (0..spec.dim).map(|_| rng.random_range(-1.0..=1.0)).collect())
                .collect()
        }
    };

    let mut rng = rng::stream(spec.rng_seed, StreamKind::Topology, 0, 0);
    let mut edges = Vec::new();
    let mut start = 0;
    for (q, &size) in spec.cluster_sizes.iter().enumerate() {
        let range = start..start + size;
        let mut attempt = 0;
        loop {
            if attempt > spec.max_retries {
                return Err(Error::ConnectivityUnreachable {
                    cluster: q,
                    retries: spec.max_retries,
                });
            }
            attempt += 1;
            let mut cand = Vec::new();
            for a in range.clone() {
                for b in (a + 1)..range.end {
                    if rng.random_bool(spec.intra_cluster_edge_prob) {
                        cand.push((a, b));
                    }
                }
            }
            if block_connected(range.clone(), &cand, &group_of) {
                edges.extend(cand);
                break;
            }
        }
        start += size;
    }
    for a in 0..n {
        for b in (a + 1)..n {
            if cluster_of[a] != cluster_of[b] && rng.random_bool(spec.cross_cluster_edge_prob) {
                edges.push((a, b));
            }
        }
    }
    NetworkModel::new(n, &edges, cluster_of, group_of, minimizers)
}

/// Whether `range` and every group inside it is connected under `edges`.
fn block_connected(range: Range<usize>, edges: &[(usize, usize)], group_of: &[usize]) -> bool {
    let n = range.len();
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a - range.start].push(b - range.start);
        adj[b - range.start].push(a - range.start);
    }
    let local_groups = &group_of[range.clone()];
    let reach = |filter: &dyn Fn(usize) -> bool, from: usize| -> usize {
        let mut seen = vec![false; n];
        seen[from] = true;
        let mut stack = vec![from];
        let mut count = 1;
        while let Some(k) = stack.pop() {
            for &l in &adj[k] {
                if !seen[l] && filter(l) {
                    seen[l] = true;
                    count += 1;
                    stack.push(l);
                }
            }
        }
        count
    };
    if reach(&|_| true, 0) != n {
        return false;
    }
    let mut first = 0;
    while first < n {
        let g = local_groups[first];
        let size = local_groups[first..].iter().take_while(|&&x| x == g).count();
        if reach(&|l| local_groups[l] == g, first) != size {
            return false;
        }
        first += size;
    }
    true
}

/// In-cluster and cross-cluster split of every neighborhood.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodSets {
    pub full: Vec<Vec<usize>>,
    /// `N_k^+ = N_k ∩ C_q`, contains `k`.
    pub plus: Vec<Vec<usize>>,
    /// `N_k^- = N_k \ N_k^+`.
    pub minus: Vec<Vec<usize>>,
}

pub fn neighborhoods(model: &NetworkModel) -> NeighborhoodSets {
    let n = model.n_agents();
    let mut sets = NeighborhoodSets {
        full: Vec::with_capacity(n),
        plus: Vec::with_capacity(n),
        minus: Vec::with_capacity(n),
    };
    for k in 0..n {
        let q = model.cluster_of(k);
        let (plus, minus): (Vec<usize>, Vec<usize>) = model
            .neighbors(k)
            .iter()
            .partition(|&&l| model.cluster_of(l) == q);
        sets.full.push(model.neighbors(k).to_vec());
        sets.plus.push(plus);
        sets.minus.push(minus);
    }
    sets
}

/// Maximal connected agent sets under `active_edges` (which must be a subset
/// of the model's adjacency). Components are sorted by their smallest agent
/// and members are sorted.
pub fn connected_components(
    model: &NetworkModel,
    active_edges: &[(usize, usize)],
) -> Vec<Vec<usize>> {
    let n = model.n_agents();
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in active_edges {
        debug_assert!(model.has_edge(a, b), "edge ({a}, {b}) is not in the topology");
        if a != b {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    let mut label = vec![usize::MAX; n];
    let mut components = Vec::new();
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        let id = components.len();
        label[s] = id;
        let mut members = vec![s];
        let mut queue = VecDeque::from([s]);
        while let Some(k) = queue.pop_front() {
            for &l in &adj[k] {
                if label[l] == usize::MAX {
                    label[l] = id;
                    members.push(l);
                    queue.push_back(l);
                }
            }
        }
        members.sort_unstable();
        components.push(members);
    }
    components
}

/// True when `components` is exactly the cluster partition of `model`.
pub fn matches_clusters(model: &NetworkModel, components: &[Vec<usize>]) -> bool {
    components.len() == model.n_clusters()
        && components.iter().all(|c| {
            let q = model.cluster_of(c[0]);
            let r = model.cluster_members(q);
            c.len() == r.len() && c.iter().all(|k| r.contains(k))
        })
}
