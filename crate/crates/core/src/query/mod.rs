//! Frozen embedding store, top-K retrieval, metrics and evaluation drivers.

mod eval;
mod metrics;

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use log::warn;

use crate::autodiff::{ParamSet, Tensor};
use crate::error::{Error, Result};
use crate::hetgraph::{Mpu, NodeId, QueryPlan, TypeId, TypeSchema};
use crate::sampler::NeighborTable;
use crate::semantics::{integrate_all, inter_mpu_weights};
use crate::trainer::Checkpoint;

pub use eval::{
    bench_adhoc, classify, classify_embeddings, link_prediction, link_prediction_with_embeddings, retrieval,
    BenchReport, ClassifyConfig, LinkEvalConfig, LinkSample, RetrievalConfig,
};
pub use metrics::{auc_pairwise, auc_rank_sum, f1_scores, link_auc_mrr, mrr_grouped, recall_ndcg, MetricReport};

struct MpuBlock {
    nodes: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
    zi: Tensor,
    beta: Vec<f64>,
}

/// Read-only view of trained embeddings. Reads of `Zi` rows are counted per
/// MPU so callers can check which MPUs a computation touched.
pub struct EmbeddingStore {
    type_names: Vec<String>,
    node_types: Vec<TypeId>,
    dim: usize,
    mpus: Vec<Mpu>,
    blocks: BTreeMap<Mpu, MpuBlock>,
    tables: BTreeMap<Mpu, NeighborTable>,
    q: Vec<f64>,
    leaky_slope: f64,
    uniform_beta: bool,
    params: ParamSet,
    access: BTreeMap<Mpu, AtomicU64>,
}

impl EmbeddingStore {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let blocks = ckpt
            .embeddings
            .iter()
            .map(|(m, e)| (*m, e.nodes.clone(), e.zi.clone()))
            .collect();
        let q = ckpt.model.params.get(ckpt.model.inter_q).data().to_vec();
        let mut store = Self::from_parts(
            ckpt.type_names.clone(),
            ckpt.node_types.clone(),
            blocks,
            ckpt.tables.clone(),
            q,
            ckpt.config.leaky_slope,
            ckpt.config.disable_inter_attention,
        )?;
        store.params = ckpt.model.params.clone();
        Ok(store)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    /// Builds a store from raw pieces and precomputes `β` for every node.
    pub fn from_parts(
        type_names: Vec<String>,
        node_types: Vec<TypeId>,
        blocks: Vec<(Mpu, Vec<NodeId>, Tensor)>,
        tables: BTreeMap<Mpu, NeighborTable>,
        q: Vec<f64>,
        leaky_slope: f64,
        uniform_beta: bool,
    ) -> Result<Self> {
        let dim = q.len();
        let mut map = BTreeMap::new();
        for (m, nodes, zi) in blocks {
            if zi.rank() != 2 || zi.rows() != nodes.len() || zi.cols() != dim {
                return Err(Error::Dimension {
                    op: "embedding store",
                    left: zi.shape().to_vec(),
                    right: vec![nodes.len(), dim],
                });
            }
            if let Some(&v) = nodes.iter().find(|&&v| v >= node_types.len()) {
                return Err(Error::NodeNotInStore(v));
            }
            let index = nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();
            let beta = vec![0.0; nodes.len()];
            map.insert(m, MpuBlock { nodes, index, zi, beta });
        }
        let mut mpus: Vec<Mpu> = map.keys().copied().collect();
        mpus.sort_by(|x, y| {
            (&type_names[x.first], &type_names[x.second]).cmp(&(&type_names[y.first], &type_names[y.second]))
        });

        // β per node over the MPUs that contain it
        let mut member: BTreeMap<NodeId, Vec<Mpu>> = BTreeMap::new();
        for m in &mpus {
            for &v in &map[m].nodes {
                member.entry(v).or_default().push(*m);
            }
        }
        for (v, ms) in &member {
            let beta = if uniform_beta {
                vec![1.0 / ms.len() as f64; ms.len()]
            } else {
                let rows: Vec<&[f64]> = ms
                    .iter()
                    .map(|m| {
                        let b = &map[m];
                        b.zi.row(b.index[v])
                    })
                    .collect();
                inter_mpu_weights(&q, &rows, leaky_slope)
            };
            for (m, b) in ms.iter().zip(beta) {
                let block = map.get_mut(m).unwrap();
                let r = block.index[v];
                block.beta[r] = b;
            }
        }

        let access = mpus.iter().map(|m| (*m, AtomicU64::new(0))).collect();
        Ok(Self {
            type_names,
            node_types,
            dim,
            mpus,
            blocks: map,
            tables,
            q,
            leaky_slope,
            uniform_beta,
            params: ParamSet::new(),
            access,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_nodes(&self) -> usize {
        self.node_types.len()
    }

    pub fn type_names(&self) -> &[String] {
        &self.type_names
    }

    pub fn node_type(&self, v: NodeId) -> Result<TypeId> {
        self.node_types.get(v).copied().ok_or(Error::NodeNotInStore(v))
    }

    pub fn nodes_of_type(&self, t: TypeId) -> Vec<NodeId> {
        (0..self.node_types.len())
            .filter(|&v| self.node_types[v] == t)
            .collect()
    }

    /// Trained MPUs in label order.
    pub fn mpus(&self) -> &[Mpu] {
        &self.mpus
    }

    pub fn mpu_label(&self, m: &Mpu) -> String {
        m.label(&self.type_names)
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn leaky_slope(&self) -> f64 {
        self.leaky_slope
    }

    pub fn uniform_beta(&self) -> bool {
        self.uniform_beta
    }

    pub fn require_trained(&self, m: &Mpu) -> Result<()> {
        if self.blocks.contains_key(m) {
            Ok(())
        } else {
            Err(Error::UntrainedMpu(self.mpu_label(m)))
        }
    }

    pub fn table(&self, m: &Mpu) -> Result<&NeighborTable> {
        self.tables.get(m).ok_or_else(|| Error::UntrainedMpu(self.mpu_label(m)))
    }

    /// Nodes with a `Zi` row in `m`, ascending.
    pub fn mpu_nodes(&self, m: &Mpu) -> Result<&[NodeId]> {
        self.require_trained(m)?;
        Ok(&self.blocks[m].nodes)
    }

    /// MPUs that hold a row for `v`, in label order.
    pub fn node_mpus(&self, v: NodeId) -> Vec<Mpu> {
        self.mpus
            .iter()
            .copied()
            .filter(|m| self.blocks[m].index.contains_key(&v))
            .collect()
    }

    /// `Zi^m_v`; counts as one access of `m`.
    pub fn zi(&self, m: &Mpu, v: NodeId) -> Result<&[f64]> {
        self.require_trained(m)?;
        let b = &self.blocks[m];
        let r = *b.index.get(&v).ok_or(Error::NodeNotInStore(v))?;
        self.access[m].fetch_add(1, Ordering::Relaxed);
        Ok(b.zi.row(r))
    }

    /// Precomputed `β^m_v`.
    pub fn beta(&self, m: &Mpu, v: NodeId) -> Result<f64> {
        self.require_trained(m)?;
        let b = &self.blocks[m];
        let r = *b.index.get(&v).ok_or(Error::NodeNotInStore(v))?;
        Ok(b.beta[r])
    }

    pub fn access_count(&self, m: &Mpu) -> u64 {
        self.access.get(m).map_or(0, |a| a.load(Ordering::Relaxed))
    }

    pub fn access_counts(&self) -> BTreeMap<Mpu, u64> {
        self.access
            .iter()
            .map(|(m, a)| (*m, a.load(Ordering::Relaxed)))
            .collect()
    }

    pub fn reset_access_counts(&self) {
        for a in self.access.values() {
            a.store(0, Ordering::Relaxed);
        }
    }

    /// Optimizer updates recorded on the parameters this store was built from.
    pub fn param_update_count(&self) -> u64 {
        self.params.update_count()
    }
}

impl TypeSchema for EmbeddingStore {
    fn type_id(&self, label: &str) -> Option<TypeId> {
        self.type_names.iter().position(|n| n == label)
    }

    fn type_name(&self, t: TypeId) -> &str {
        &self.type_names[t]
    }

    fn types_connected(&self, a: TypeId, b: TypeId) -> bool {
        let m = self.mpu(a, b);
        self.blocks.contains_key(&m)
    }
}

/// Ranked candidates for one query node.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedResult {
    pub query: NodeId,
    pub k: usize,
    pub items: Vec<(NodeId, f64)>,
}

impl RankedResult {
    pub fn ids(&self) -> Vec<NodeId> {
        self.items.iter().map(|&(v, _)| v).collect()
    }
}

pub fn cosine(x: &[f64], y: &[f64]) -> f64 {
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        return 0.0;
    }
    x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / (nx * ny)
}

/// Anchor and candidate embeddings for one plan, built once and reused
/// across queries.
pub struct QueryIndex {
    pub anchors: BTreeMap<NodeId, Vec<f64>>,
    pub candidates: Vec<(NodeId, Vec<f64>)>,
    pub target_type: TypeId,
}

impl QueryIndex {
    /// Candidates are end-type nodes embedded under the reversed plan
    /// (the plan itself when every path is symmetric).
    pub fn build(store: &EmbeddingStore, plan: &QueryPlan) -> Result<Self> {
        let target_type = plan.paths()[0].end_type();
        if plan.paths().iter().any(|p| p.end_type() != target_type) {
            return Err(Error::Config(
                "all meta-paths in a retrieval plan must share the end type".into(),
            ));
        }
        let anchors: BTreeMap<NodeId, Vec<f64>> = integrate_all(store, plan)?.into_iter().collect();
        let candidates = if plan.paths().iter().all(|p| p.is_symmetric()) {
            anchors.iter().map(|(v, z)| (*v, z.clone())).collect()
        } else {
            integrate_all(store, &plan.reversed()?)?
        };
        Ok(Self {
            anchors,
            candidates,
            target_type,
        })
    }

    pub fn anchor(&self, a: NodeId) -> Option<&[f64]> {
        self.anchors.get(&a).map(Vec::as_slice)
    }

    /// Top-K by cosine, ties by ascending id, query node excluded.
    pub fn topk(&self, a: NodeId, k: usize) -> Result<RankedResult> {
        if k == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        let za = self
            .anchor(a)
            .ok_or_else(|| Error::Config(format!("node {a} has no embedding under this plan")))?;
        if za.iter().all(|&x| x == 0.0) {
            warn!("node {a} has a zero embedding under this plan; ranking falls back to id order");
        }
        let mut scored: Vec<(NodeId, f64)> = self
            .candidates
            .iter()
            .filter(|(c, _)| *c != a)
            .map(|(c, z)| (*c, cosine(za, z)))
            .collect();
        scored.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
        scored.truncate(k);
        Ok(RankedResult {
            query: a,
            k,
            items: scored,
        })
    }
}

pub fn topk(store: &EmbeddingStore, a: NodeId, plan: &QueryPlan, k: usize) -> Result<RankedResult> {
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    let t = store.node_type(a)?;
    if t != plan.anchor_type() {
        return Err(Error::Config(format!(
            "node {a} has type {} but the plan starts at {}",
            store.type_names[t],
            store.type_names[plan.anchor_type()]
        )));
    }
    QueryIndex::build(store, plan)?.topk(a, k)
}

/// One line per node: `node_id \t v1,v2,...`.
pub fn export_embeddings<W: Write>(out: &mut W, rows: &[(NodeId, Vec<f64>)]) -> std::io::Result<()> {
    for (v, z) in rows {
        let vals: Vec<String> = z.iter().map(|x| format!("{x:?}")).collect();
        writeln!(out, "{v}\t{}", vals.join(","))?;
    }
    Ok(())
}
