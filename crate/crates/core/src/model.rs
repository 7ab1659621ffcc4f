//! Sampling geometric kernel block model instances and comparing labelings.
//!
//! Randomness comes from ChaCha8 seeded with the instance seed, split into
//! independent streams: stream 0 draws the node count, stream 1 the
//! locations, stream 2 the communities, and stream `16 + i * b + j` the edges
//! between blocks `i <= j`. Edge sampling runs in parallel over block pairs
//! and is bit-identical for any thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GkbmError, Result};
use crate::geometry::{BlockPartition, TorusPoint};
use crate::kernel::Kernel;

pub const STREAM_COUNT: u64 = 0;
pub const STREAM_LOCATIONS: u64 = 1;
pub const STREAM_COMMUNITIES: u64 = 2;
pub const STREAM_EDGES_BASE: u64 = 16;

/// Version tag written into serialized instances.
pub const INSTANCE_FORMAT_VERSION: u32 = 1;

/// A ChaCha8 generator on a numbered stream of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Parameters of `GKBM(lambda * n, p, q, phi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GkbmParams {
    pub lambda: f64,
    pub n: u64,
    pub p: f64,
    pub q: f64,
    pub kernel: Kernel,
    pub seed: u64,
}

impl GkbmParams {
    pub fn new(lambda: f64, n: u64, p: f64, q: f64, kernel: Kernel, seed: u64) -> Result<Self> {
        let params = GkbmParams { lambda, n, p, q, kernel, seed };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(GkbmError::invalid(format!("lambda must be positive, got {}", self.lambda)));
        }
        for (name, v) in [("p", self.p), ("q", self.q)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(GkbmError::invalid(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.lambda * self.n as f64 > 1e9 {
            return Err(GkbmError::invalid("lambda * n is too large to sample"));
        }
        BlockPartition::new(self.n, self.kernel.kappa()).map(|_| ())
    }

    pub fn partition(&self) -> Result<BlockPartition> {
        BlockPartition::new(self.n, self.kernel.kappa())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        GkbmParams { seed, ..self.clone() }
    }

    pub fn lambda_kappa(&self) -> f64 {
        self.lambda * self.kernel.kappa()
    }
}

/// `p * psi` for same-community pairs, `q * psi` otherwise.
pub fn edge_probability(params: &GkbmParams, x: TorusPoint, y: TorusPoint, same_community: bool) -> f64 {
    let r = if same_community { params.p } else { params.q };
    r * params.kernel.psi(params.n, x, y)
}

/// One sampled graph together with its hidden communities.
#[derive(Debug, Clone, PartialEq)]
pub struct GkbmInstance {
    params: GkbmParams,
    locations: Vec<TorusPoint>,
    communities: Vec<i8>,
    partition: BlockPartition,
    node_block: Vec<u32>,
    block_nodes: Vec<Vec<u32>>,
    adj_offsets: Vec<usize>,
    adj: Vec<u32>,
}

impl GkbmInstance {
    /// Draws an instance from the model.
    pub fn sample(params: &GkbmParams) -> Result<Self> {
        Self::sample_with_extra(params, None)
    }

    /// Draws an instance and adds one deterministic node at `location` with
    /// community `community`, as index `N` (the last node). Because the node
    /// process is Poisson, the other nodes are distributed as if conditioned
    /// on a node sitting at that location.
    pub fn sample_with_node_at(params: &GkbmParams, location: TorusPoint, community: i8) -> Result<Self> {
        if community != 1 && community != -1 {
            return Err(GkbmError::invalid("community must be +1 or -1"));
        }
        Self::sample_with_extra(params, Some((location, community)))
    }

    fn sample_with_extra(params: &GkbmParams, extra: Option<(TorusPoint, i8)>) -> Result<Self> {
        params.validate()?;
        let (mut locations, mut communities) = sample_nodes(params);
        if let Some((x, c)) = extra {
            locations.push(x);
            communities.push(c);
        }
        let partition = params.partition()?;
        let (node_block, block_nodes) = assign_blocks(&partition, &locations);
        let b = partition.block_count() as u64;
        let pairs = partition.candidate_block_pairs();
        let edges: Vec<(u32, u32)> = pairs
            .par_iter()
            .flat_map_iter(|&(i, j)| {
                let mut rng = stream_rng(params.seed, STREAM_EDGES_BASE + i as u64 * b + j as u64);
                let mut out = Vec::new();
                let bi = &block_nodes[i];
                let bj = &block_nodes[j];
                for (a, &u) in bi.iter().enumerate() {
                    let partners = if i == j { &bi[a + 1..] } else { &bj[..] };
                    for &v in partners {
                        let (u, v) = (u as usize, v as usize);
                        let psi = params.kernel.psi(params.n, locations[u], locations[v]);
                        if psi <= 0.0 {
                            continue;
                        }
                        let r = if communities[u] == communities[v] { params.p } else { params.q };
                        if rng.random::<f64>() < r * psi {
                            out.push((u.min(v) as u32, u.max(v) as u32));
                        }
                    }
                }
                out
            })
            .collect();
        let (adj_offsets, adj) = build_csr(locations.len(), &edges);
        Ok(GkbmInstance {
            params: params.clone(),
            locations,
            communities,
            partition,
            node_block,
            block_nodes,
            adj_offsets,
            adj,
        })
    }

    /// Builds an instance from explicit parts, validating every edge.
    pub fn from_parts(
        params: GkbmParams,
        locations: Vec<TorusPoint>,
        communities: Vec<i8>,
        edges: &[(u32, u32)],
    ) -> Result<Self> {
        params.validate()?;
        if locations.len() != communities.len() {
            return Err(GkbmError::corrupt(format!(
                "{} locations but {} communities",
                locations.len(),
                communities.len()
            )));
        }
        if locations.len() > u32::MAX as usize {
            return Err(GkbmError::invalid("too many nodes"));
        }
        if let Some(c) = communities.iter().find(|&&c| c != 1 && c != -1) {
            return Err(GkbmError::corrupt(format!("community label {c} is not +1 or -1")));
        }
        let nodes = locations.len();
        let mut sorted: Vec<(u32, u32)> = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            if u >= v || v as usize >= nodes {
                return Err(GkbmError::corrupt(format!("edge [{u}, {v}] must satisfy u < v < N = {nodes}")));
            }
            if params.kernel.psi(params.n, locations[u as usize], locations[v as usize]) <= 0.0 {
                return Err(GkbmError::corrupt(format!("edge [{u}, {v}] joins nodes outside the kernel support")));
            }
            sorted.push((u, v));
        }
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(GkbmError::corrupt("duplicate edge"));
        }
        let partition = params.partition()?;
        let (node_block, block_nodes) = assign_blocks(&partition, &locations);
        let (adj_offsets, adj) = build_csr(nodes, &sorted);
        Ok(GkbmInstance {
            params,
            locations,
            communities,
            partition,
            node_block,
            block_nodes,
            adj_offsets,
            adj,
        })
    }

    pub fn params(&self) -> &GkbmParams {
        &self.params
    }

    pub fn kernel(&self) -> &Kernel {
        &self.params.kernel
    }

    pub fn node_count(&self) -> usize {
        self.locations.len()
    }

    pub fn locations(&self) -> &[TorusPoint] {
        &self.locations
    }

    pub fn location(&self, u: usize) -> TorusPoint {
        self.locations[u]
    }

    /// Ground-truth communities `sigma`.
    pub fn communities(&self) -> &[i8] {
        &self.communities
    }

    pub fn truth(&self) -> Labeling {
        Labeling::new(self.communities.clone())
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn block_of_node(&self, u: usize) -> usize {
        self.node_block[u] as usize
    }

    /// Nodes of block `i`, in increasing index order.
    pub fn block_nodes(&self, i: usize) -> &[u32] {
        &self.block_nodes[i]
    }

    /// Sorted neighbour list of `u`.
    pub fn neighbors(&self, u: usize) -> &[u32] {
        &self.adj[self.adj_offsets[u]..self.adj_offsets[u + 1]]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adj_offsets[u + 1] - self.adj_offsets[u]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&(v as u32)).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.len() / 2
    }

    /// All edges `(u, v)` with `u < v` in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.node_count()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .filter(move |&&v| (v as usize) > u)
                .map(move |&v| (u as u32, v))
        })
    }

    /// `psi_n(X_u, X_v)`.
    pub fn psi(&self, u: usize, v: usize) -> f64 {
        self.params.kernel.psi(self.params.n, self.locations[u], self.locations[v])
    }

    /// Nodes other than `u` in blocks that can reach `u`'s block. This is a
    /// superset of the nodes with `psi > 0`.
    pub fn candidates(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        self.partition
            .reachable(self.block_of_node(u))
            .iter()
            .flat_map(move |&j| self.block_nodes[j].iter().map(|&v| v as usize))
            .filter(move |&v| v != u)
    }

    /// Nodes `v != u` with `psi_n(X_u, X_v) > 0`, paired with that value.
    pub fn visible(&self, u: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.candidates(u).filter_map(move |v| {
            let psi = self.psi(u, v);
            (psi > 0.0).then_some((v, psi))
        })
    }

    /// Number of ordered candidate pairs examined by a full visibility scan.
    pub fn candidate_pair_count(&self) -> usize {
        (0..self.partition.block_count())
            .map(|i| {
                let reach: usize = self.partition.reachable(i).iter().map(|&j| self.block_nodes[j].len()).sum();
                self.block_nodes[i].len() * reach.saturating_sub(1)
            })
            .sum()
    }

    /// Empty blocks, in increasing order.
    pub fn empty_blocks(&self) -> Vec<usize> {
        empty_blocks(&self.block_nodes)
    }

    pub fn to_document(&self) -> InstanceDocument {
        InstanceDocument {
            version: INSTANCE_FORMAT_VERSION,
            params: self.params.clone(),
            node_count: self.node_count(),
            locations: self.locations.clone(),
            communities: self.communities.clone(),
            edges: self.edges().map(|(u, v)| [u, v]).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_document()).expect("instance serializes")
    }

    pub fn from_document(doc: InstanceDocument) -> Result<Self> {
        if doc.version != INSTANCE_FORMAT_VERSION {
            return Err(GkbmError::invalid(format!(
                "unsupported instance version {} (expected {INSTANCE_FORMAT_VERSION})",
                doc.version
            )));
        }
        if doc.node_count != doc.locations.len() {
            return Err(GkbmError::corrupt(format!(
                "N = {} but {} locations",
                doc.node_count,
                doc.locations.len()
            )));
        }
        let edges: Vec<(u32, u32)> = doc.edges.iter().map(|e| (e[0], e[1])).collect();
        Self::from_parts(doc.params, doc.locations, doc.communities, &edges)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(text)?)
    }
}

/// Serialized form of an instance; nodes are 0-indexed and edges list `u < v`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDocument {
    pub version: u32,
    pub params: GkbmParams,
    #[serde(rename = "N")]
    pub node_count: usize,
    pub locations: Vec<TorusPoint>,
    pub communities: Vec<i8>,
    pub edges: Vec<[u32; 2]>,
}

/// Draws the node count, locations and communities.
pub fn sample_nodes(params: &GkbmParams) -> (Vec<TorusPoint>, Vec<i8>) {
    let count = sample_node_count(params);
    let mut loc_rng = stream_rng(params.seed, STREAM_LOCATIONS);
    let locations: Vec<TorusPoint> = (0..count)
        .map(|_| TorusPoint::from_shifted(loc_rng.random::<f64>()))
        .collect();
    let mut com_rng = stream_rng(params.seed, STREAM_COMMUNITIES);
    let communities = (0..count)
        .map(|_| if com_rng.random::<bool>() { 1 } else { -1 })
        .collect();
    (locations, communities)
}

/// `N ~ Poisson(lambda * n)`.
pub fn sample_node_count(params: &GkbmParams) -> usize {
    let mean = params.lambda * params.n as f64;
    let mut rng = stream_rng(params.seed, STREAM_COUNT);
    let dist = Poisson::new(mean).expect("positive Poisson mean");
    dist.sample(&mut rng) as usize
}

/// Node-to-block map and per-block member lists.
pub fn assign_blocks(partition: &BlockPartition, locations: &[TorusPoint]) -> (Vec<u32>, Vec<Vec<u32>>) {
    let mut block_nodes = vec![Vec::new(); partition.block_count()];
    let node_block: Vec<u32> = locations
        .iter()
        .enumerate()
        .map(|(u, &x)| {
            let i = partition.block_of(x);
            block_nodes[i].push(u as u32);
            i as u32
        })
        .collect();
    (node_block, block_nodes)
}

pub(crate) fn empty_blocks(block_nodes: &[Vec<u32>]) -> Vec<usize> {
    block_nodes
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_empty())
        .map(|(i, _)| i)
        .collect()
}

fn build_csr(nodes: usize, edges: &[(u32, u32)]) -> (Vec<usize>, Vec<u32>) {
    let mut degree = vec![0usize; nodes + 1];
    for &(u, v) in edges {
        degree[u as usize + 1] += 1;
        degree[v as usize + 1] += 1;
    }
    for i in 0..nodes {
        degree[i + 1] += degree[i];
    }
    let offsets = degree;
    let mut fill = offsets.clone();
    let mut adj = vec![0u32; offsets[nodes]];
    for &(u, v) in edges {
        adj[fill[u as usize]] = v;
        fill[u as usize] += 1;
        adj[fill[v as usize]] = u;
        fill[v as usize] += 1;
    }
    for u in 0..nodes {
        adj[offsets[u]..offsets[u + 1]].sort_unstable();
    }
    (offsets, adj)
}

/// A `±1` community assignment where `0` marks an unlabelled node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Labeling(Vec<i8>);

/// Result of comparing two labelings up to a global sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Agreement {
    /// The sign `s` applied to the second labeling that maximizes matches.
    pub flip: i8,
    pub matched: usize,
    /// Nodes where both labelings are nonzero.
    pub compared: usize,
}

impl Agreement {
    /// Fraction of compared nodes that match; 1 when nothing was compared.
    pub fn fraction(&self) -> f64 {
        if self.compared == 0 {
            1.0
        } else {
            self.matched as f64 / self.compared as f64
        }
    }
}

impl Labeling {
    pub fn new(values: Vec<i8>) -> Self {
        debug_assert!(values.iter().all(|v| (-1..=1).contains(v)));
        Labeling(values)
    }

    pub fn zeros(len: usize) -> Self {
        Labeling(vec![0; len])
    }

    pub fn values(&self) -> &[i8] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [i8] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, u: usize) -> i8 {
        self.0[u]
    }

    pub fn set(&mut self, u: usize, value: i8) {
        self.0[u] = value;
    }

    pub fn negated(&self) -> Self {
        Labeling(self.0.iter().map(|&v| -v).collect())
    }

    /// Labeling with the first nonzero entry made `+1`, and whether a flip happened.
    pub fn canonical(&self) -> (Self, bool) {
        match self.0.iter().find(|&&v| v != 0) {
            Some(&-1) => (self.negated(), true),
            _ => (self.clone(), false),
        }
    }

    /// Compares `self` with `other` on nodes where both are nonzero.
    pub fn agreement(&self, other: &Labeling) -> Result<Agreement> {
        if self.len() != other.len() {
            return Err(GkbmError::invalid(format!(
                "labelings have different lengths ({} and {})",
                self.len(),
                other.len()
            )));
        }
        let mut same = 0usize;
        let mut compared = 0usize;
        for (&a, &b) in self.0.iter().zip(&other.0) {
            if a != 0 && b != 0 {
                compared += 1;
                if a == b {
                    same += 1;
                }
            }
        }
        let opposite = compared - same;
        Ok(if same >= opposite {
            Agreement { flip: 1, matched: same, compared }
        } else {
            Agreement { flip: -1, matched: opposite, compared }
        })
    }

    /// True when `self` equals `±truth` on every node.
    pub fn recovers_exactly(&self, truth: &Labeling) -> bool {
        match self.agreement(truth) {
            Ok(a) => a.compared == self.len() && a.matched == a.compared,
            Err(_) => false,
        }
    }

    /// Nodes where `self` differs from `s * truth` for the better sign `s`;
    /// unlabelled nodes count as errors.
    pub fn errors_against(&self, truth: &Labeling) -> usize {
        let plus = self.0.iter().zip(&truth.0).filter(|(a, b)| a != b).count();
        let minus = self.0.iter().zip(&truth.0).filter(|(a, b)| **a != -**b).count();
        plus.min(minus)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(lambda: f64, n: u64, p: f64, q: f64, seed: u64) -> GkbmParams {
        GkbmParams::new(lambda, n, p, q, Kernel::indicator(1.0).unwrap(), seed).unwrap()
    }

    #[test]
    fn empty_graph_when_p_and_q_vanish() {
        let inst = GkbmInstance::sample(&params(2.0, 500, 0.0, 0.0, 3)).unwrap();
        assert!(inst.node_count() > 0);
        assert_eq!(inst.edge_count(), 0);
    }

    #[test]
    fn full_rgg_when_p_and_q_are_one() {
        let inst = GkbmInstance::sample(&params(2.0, 300, 1.0, 1.0, 5)).unwrap();
        let w = inst.partition().block_width();
        let mut expected = 0;
        for u in 0..inst.node_count() {
            for v in u + 1..inst.node_count() {
                let linked = crate::geometry::torus_distance(inst.location(u), inst.location(v)) <= w;
                assert_eq!(linked, inst.has_edge(u, v), "pair {u} {v}");
                expected += linked as usize;
            }
        }
        assert_eq!(expected, inst.edge_count());
    }

    #[test]
    fn edge_probability_examples() {
        let pr = params(1.0, 100, 0.7, 0.2, 0);
        let x = TorusPoint::new(0.0);
        let far = TorusPoint::new(0.4);
        let near = TorusPoint::new(0.01);
        assert_eq!(edge_probability(&pr, x, far, true), 0.0);
        assert_eq!(edge_probability(&pr, x, near, true), 0.7);
        assert_eq!(edge_probability(&pr, x, near, false), 0.2);
        let tri = GkbmParams::new(1.0, 1000, 0.7, 0.2, Kernel::triangular(2.0).unwrap(), 0).unwrap();
        let mid = TorusPoint::new(1000f64.ln() / 1000.0);
        assert!((edge_probability(&tri, x, mid, true) - 0.35).abs() < 1e-12);
    }

    #[test]
    fn sampling_is_deterministic() {
        let pr = params(2.0, 1000, 0.9, 0.1, 11);
        let a = GkbmInstance::sample(&pr).unwrap();
        let b = GkbmInstance::sample(&pr).unwrap();
        assert_eq!(a, b);
        let c = GkbmInstance::sample(&pr.with_seed(12)).unwrap();
        assert_ne!(a.locations(), c.locations());
    }

    #[test]
    fn thread_count_does_not_change_the_sample() {
        let pr = params(2.0, 2000, 0.9, 0.1, 13);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| GkbmInstance::sample(&pr).unwrap());
        let b = four.install(|| GkbmInstance::sample(&pr).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn edges_are_local_and_symmetric() {
        let inst = GkbmInstance::sample(&params(3.0, 2000, 0.8, 0.3, 17)).unwrap();
        let part = inst.partition();
        for (u, v) in inst.edges() {
            let (u, v) = (u as usize, v as usize);
            assert!(inst.has_edge(v, u));
            assert!(inst.psi(u, v) > 0.0);
            assert!(part.reachable(inst.block_of_node(u)).contains(&inst.block_of_node(v)));
        }
        for u in 0..inst.node_count() {
            assert!(!inst.has_edge(u, u));
        }
    }

    #[test]
    fn degenerate_node_counts() {
        let tiny = GkbmParams::new(1e-6, 10, 0.5, 0.5, Kernel::indicator(1.0).unwrap(), 1).unwrap();
        let inst = GkbmInstance::sample(&tiny).unwrap();
        assert_eq!(inst.node_count(), 0);
        assert_eq!(inst.edge_count(), 0);
        assert_eq!(inst.candidate_pair_count(), 0);
    }

    #[test]
    fn json_round_trip() {
        let inst = GkbmInstance::sample(&params(2.0, 300, 0.9, 0.1, 21)).unwrap();
        let back = GkbmInstance::from_json(&inst.to_json()).unwrap();
        assert_eq!(inst, back);
    }

    #[test]
    fn loading_rejects_bad_edges() {
        let inst = GkbmInstance::sample(&params(2.0, 300, 0.9, 0.1, 21)).unwrap();
        let mut doc = inst.to_document();
        doc.edges.push([3, 3]);
        assert!(GkbmInstance::from_document(doc).is_err());
        let mut doc = inst.to_document();
        let far = (1..inst.node_count())
            .find(|&v| inst.psi(0, v) == 0.0)
            .unwrap();
        doc.edges.push([0, far as u32]);
        assert!(matches!(GkbmInstance::from_document(doc), Err(GkbmError::Corrupt(_))));
    }

    #[test]
    fn agreement_examples() {
        let a = Labeling::new(vec![1, -1, 1, 1, -1, -1, 1, -1, 1, 1]);
        let r = a.agreement(&a).unwrap();
        assert_eq!((r.flip, r.matched, r.compared), (1, 10, 10));
        let r = a.agreement(&a.negated()).unwrap();
        assert_eq!((r.flip, r.matched, r.compared), (-1, 10, 10));
        let mut b = a.clone();
        b.set(4, 1);
        let r = b.agreement(&a).unwrap();
        assert_eq!(r.matched, 9);
        assert!(a.recovers_exactly(&a.negated()));
        assert!(!b.recovers_exactly(&a));
        assert_eq!(b.errors_against(&a), 1);
        let mut z = a.clone();
        z.set(0, 0);
        assert_eq!(z.agreement(&a).unwrap().compared, 9);
        assert!(!z.recovers_exactly(&a));
        assert!(a.agreement(&Labeling::zeros(3)).is_err());
    }
}
