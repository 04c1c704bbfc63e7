//! MPU-restricted random walk with restart, top-k neighbor grouping and
//! skip-gram triple generation.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use log::warn;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hetgraph::{Mpu, MpuSubgraph, NodeId, TypeId};
use crate::util::rng_for;

const WALK_STREAM: u64 = 0x5741_4c4b;
const NEG_STREAM: u64 = 0x4e45_4753;

#[derive(Clone, Debug, PartialEq)]
pub struct WalkConfig {
    pub restart_prob: f64,
    pub walk_length: usize,
    pub walks_per_node: usize,
    pub window: usize,
    pub negatives: usize,
    /// k_A used for types without an explicit entry.
    pub default_k: usize,
    pub k_per_type: BTreeMap<TypeId, usize>,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            restart_prob: 0.5,
            walk_length: 30,
            walks_per_node: 10,
            window: 5,
            negatives: 5,
            default_k: 10,
            k_per_type: BTreeMap::new(),
            seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn k_for(&self, ty: TypeId) -> usize {
        self.k_per_type.get(&ty).copied().unwrap_or(self.default_k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.restart_prob) {
            return Err(Error::Config(format!(
                "restart_prob must lie in [0,1), got {}",
                self.restart_prob
            )));
        }
        let positive = [
            ("walk_length", self.walk_length),
            ("walks_per_node", self.walks_per_node),
            ("window", self.window),
            ("negatives", self.negatives),
            ("k", self.default_k),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.k_per_type.values().any(|&k| k == 0) {
            return Err(Error::Config("per-type k must be at least 1".into()));
        }
        Ok(())
    }

    /// Stable `key=value` rendering used for config hashing.
    pub fn canonical(&self) -> String {
        let ks: Vec<String> = self.k_per_type.iter().map(|(t, k)| format!("{t}:{k}")).collect();
        format!(
            "restart_prob={:?}\nwalk_length={}\nwalks_per_node={}\nwindow={}\nnegatives={}\nk={}\nk_per_type={}\nwalk_seed={}\n",
            self.restart_prob,
            self.walk_length,
            self.walks_per_node,
            self.window,
            self.negatives,
            self.default_k,
            ks.join(","),
            self.seed
        )
    }
}

/// Walks for one MPU, grouped by start node in ascending id order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WalkCorpus {
    pub mpu: Mpu,
    pub walks: Vec<Vec<NodeId>>,
}

impl WalkCorpus {
    pub fn is_empty(&self) -> bool {
        self.walks.is_empty()
    }

    /// One walk per line, space-separated node ids.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for walk in &self.walks {
            let line: Vec<String> = walk.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

/// Runs `walks_per_node` restart walks from every node of positive degree.
///
/// Each walk records exactly `walk_length` entries starting with the start
/// node; a restart moves the walker back to the start and records it again.
pub fn run_rwr(sub: &MpuSubgraph, cfg: &WalkConfig) -> Result<WalkCorpus> {
    cfg.validate()?;
    if sub.num_nodes() == 0 || sub.edges().is_empty() {
        return Err(Error::Sampling(format!(
            "MPU {} has an empty subgraph",
            sub.mpu_label()
        )));
    }
    let mpu = sub.mpu();
    let isolated: Vec<NodeId> = sub.nodes().iter().copied().filter(|&v| sub.degree(v) == 0).collect();
    if !isolated.is_empty() {
        warn!(
            "MPU {}: skipping {} degree-0 start nodes",
            sub.mpu_label(),
            isolated.len()
        );
    }
    let per_node: Vec<Vec<Vec<NodeId>>> = sub
        .nodes()
        .par_iter()
        .filter(|&&v| sub.degree(v) > 0)
        .map(|&start| {
            (0..cfg.walks_per_node)
                .map(|w| {
                    let mut rng = rng_for(
                        cfg.seed,
                        &[WALK_STREAM, mpu.first as u64, mpu.second as u64, start as u64, w as u64],
                    );
                    let mut walk = Vec::with_capacity(cfg.walk_length);
                    let mut cur = start;
                    walk.push(cur);
                    while walk.len() < cfg.walk_length {
                        if rng.random::<f64>() < cfg.restart_prob {
                            cur = start;
                        } else {
                            let nbrs = sub.neighbors(cur);
                            cur = nbrs[rng.random_range(0..nbrs.len())];
                        }
                        walk.push(cur);
                    }
                    walk
                })
                .collect()
        })
        .collect();
    Ok(WalkCorpus {
        mpu,
        walks: per_node.into_iter().flatten().collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypedNeighbors {
    pub ty: TypeId,
    /// (neighbor, visit count), count descending then id ascending.
    pub neighbors: Vec<(NodeId, u64)>,
}

/// Top-k most visited neighbors per node and type, for one MPU.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborTable {
    pub mpu: Mpu,
    entries: BTreeMap<NodeId, Vec<TypedNeighbors>>,
}

impl NeighborTable {
    pub fn new(mpu: Mpu) -> Self {
        Self {
            mpu,
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, node: NodeId, lists: Vec<TypedNeighbors>) {
        self.entries.insert(node, lists);
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.entries.keys().copied()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.entries.contains_key(&node)
    }

    pub fn neighbors(&self, node: NodeId, ty: TypeId) -> &[(NodeId, u64)] {
        self.entries
            .get(&node)
            .and_then(|lists| lists.iter().find(|l| l.ty == ty))
            .map(|l| l.neighbors.as_slice())
            .unwrap_or(&[])
    }

    /// Union of all typed lists of `node`, most frequent first, ties by id.
    pub fn sequence(&self, node: NodeId) -> Vec<NodeId> {
        let mut all: Vec<(NodeId, u64)> = self
            .entries
            .get(&node)
            .map(|lists| lists.iter().flat_map(|l| l.neighbors.iter().copied()).collect())
            .unwrap_or_default();
        all.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        all.into_iter().map(|(v, _)| v).collect()
    }
}

/// Groups walk visits by start node and type and keeps the top `k_A`.
pub fn build_neighbor_table(corpus: &WalkCorpus, sub: &MpuSubgraph, cfg: &WalkConfig) -> NeighborTable {
    let mut counts: BTreeMap<NodeId, HashMap<NodeId, u64>> = BTreeMap::new();
    for walk in &corpus.walks {
        let Some(&start) = walk.first() else { continue };
        let c = counts.entry(start).or_default();
        for &v in &walk[1..] {
            if v != start {
                *c.entry(v).or_insert(0) += 1;
            }
        }
    }
    let types = corpus.mpu.types();
    let mut table = NeighborTable::new(corpus.mpu);
    for &node in sub.nodes() {
        let node_counts = counts.get(&node);
        let lists = types
            .iter()
            .map(|&ty| {
                let mut ranked: Vec<(NodeId, u64)> = node_counts
                    .map(|c| {
                        c.iter()
                            .filter(|(v, _)| sub.node_type(**v) == Some(ty))
                            .map(|(&v, &n)| (v, n))
                            .collect()
                    })
                    .unwrap_or_default();
                ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
                ranked.truncate(cfg.k_for(ty));
                TypedNeighbors { ty, neighbors: ranked }
            })
            .collect();
        table.insert(node, lists);
    }
    table
}

/// Skip-gram triples ⟨center, context, negative⟩ for one MPU.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TripleSet {
    pub mpu: Mpu,
    pub triples: Vec<[u32; 3]>,
}

impl TripleSet {
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }
}

/// Unigram^0.75 sampler restricted to one node type.
struct NegativeSampler {
    nodes: Vec<NodeId>,
    dist: WeightedIndex<f64>,
}

fn negative_samplers(corpus: &WalkCorpus, sub: &MpuSubgraph) -> Result<BTreeMap<TypeId, NegativeSampler>> {
    let mut freq: BTreeMap<NodeId, u64> = BTreeMap::new();
    for walk in &corpus.walks {
        for &v in walk {
            *freq.entry(v).or_insert(0) += 1;
        }
    }
    let mut out = BTreeMap::new();
    for ty in corpus.mpu.types() {
        let (nodes, weights): (Vec<NodeId>, Vec<f64>) = freq
            .iter()
            .filter(|(v, _)| sub.node_type(**v) == Some(ty))
            .map(|(&v, &c)| (v, (c as f64).powf(0.75)))
            .unzip();
        if nodes.len() < 2 {
            return Err(Error::Sampling(format!(
                "MPU {}: node type {} has fewer than two sampled nodes, negative sampling is impossible",
                sub.mpu_label(),
                sub.type_name(ty)
            )));
        }
        let dist = WeightedIndex::new(&weights).map_err(|e| Error::Sampling(format!("negative distribution: {e}")))?;
        out.insert(ty, NegativeSampler { nodes, dist });
    }
    Ok(out)
}

/// Emits every (center, context) pair within `window` positions, each with
/// `negatives` same-type negatives drawn from the unigram^0.75 distribution.
pub fn sample_triples(corpus: &WalkCorpus, sub: &MpuSubgraph, cfg: &WalkConfig) -> Result<TripleSet> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::Sampling("empty walk corpus".into()));
    }
    let samplers = negative_samplers(corpus, sub)?;
    let mpu = corpus.mpu;
    let per_walk: Vec<Vec<[u32; 3]>> = corpus
        .walks
        .par_iter()
        .enumerate()
        .map(|(wi, walk)| {
            let mut rng = rng_for(cfg.seed, &[NEG_STREAM, mpu.first as u64, mpu.second as u64, wi as u64]);
            let mut out = Vec::new();
            for i in 0..walk.len() {
                let lo = i.saturating_sub(cfg.window);
                let hi = (i + cfg.window + 1).min(walk.len());
                for j in lo..hi {
                    if j == i {
                        continue;
                    }
                    let (a, b) = (walk[i], walk[j]);
                    let ty = sub.node_type(b).expect("walk stays in subgraph");
                    let s = &samplers[&ty];
                    for _ in 0..cfg.negatives {
                        let neg = loop {
                            let c = s.nodes[s.dist.sample(&mut rng)];
                            if c != b {
                                break c;
                            }
                        };
                        out.push([a as u32, b as u32, neg as u32]);
                    }
                }
            }
            out
        })
        .collect();
    Ok(TripleSet {
        mpu,
        triples: per_walk.into_iter().flatten().collect(),
    })
}

/// Positive pairs a walk contributes, in emission order.
pub fn positive_pairs(walk: &[NodeId], window: usize) -> Vec<(NodeId, NodeId)> {
    let mut out = Vec::new();
    for i in 0..walk.len() {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(walk.len());
        for j in (lo..hi).filter(|&j| j != i) {
            out.push((walk[i], walk[j]));
        }
    }
    out
}
