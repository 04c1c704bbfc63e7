//! Planted two-community heterogeneous graphs for testing and benchmarks.
//!
//! Node `i` of every type belongs to community `i % 2`. Edges join only
//! consecutive types in `type_names` (A–M, M–D, ...): a pair in the same
//! community is linked with probability `p_intra`, otherwise `p_inter`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::hetgraph::{Edge, HetGraph};
use crate::util::rng_for;

const EDGE_STREAM: u64 = 0x5359_4e45;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub type_names: Vec<String>,
    pub nodes_per_type: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            type_names: vec!["A".into(), "M".into()],
            nodes_per_type: 100,
            p_intra: 0.3,
            p_inter: 0.02,
            seed: 0,
        }
    }
}

pub struct SyntheticGraph {
    pub graph: HetGraph,
    /// Community of every node.
    pub labels: Vec<usize>,
}

pub fn community(local_index: usize) -> usize {
    local_index % 2
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticGraph> {
    if cfg.type_names.len() < 2 {
        return Err(Error::Config("synthetic graph needs at least two node types".into()));
    }
    if cfg.nodes_per_type < 2 {
        return Err(Error::Config(
            "synthetic graph needs at least two nodes per type".into(),
        ));
    }
    for (name, p) in [("p_intra", cfg.p_intra), ("p_inter", cfg.p_inter)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("{name} must lie in [0,1], got {p}")));
        }
    }
    let n = cfg.nodes_per_type;
    let types = cfg.type_names.len();
    let node_types: Vec<usize> = (0..types * n).map(|v| v / n).collect();
    let labels: Vec<usize> = (0..types * n).map(|v| community(v % n)).collect();
    let mut edges = Vec::new();
    for t in 0..types - 1 {
        let mut rng = rng_for(cfg.seed, &[EDGE_STREAM, t as u64]);
        for i in 0..n {
            for j in 0..n {
                let p = if community(i) == community(j) {
                    cfg.p_intra
                } else {
                    cfg.p_inter
                };
                if rng.random::<f64>() < p {
                    edges.push(Edge {
                        src: t * n + i,
                        dst: (t + 1) * n + j,
                        relation: t,
                    });
                }
            }
        }
    }
    let graph = HetGraph::new(node_types, cfg.type_names.clone(), edges, Vec::new())?;
    Ok(SyntheticGraph { graph, labels })
}
