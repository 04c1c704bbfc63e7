//! Typed graph model, file loaders, meta-path parsing and MPU decomposition.

mod io;
mod metapath;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_edge_list, load_graph, load_hgb, load_labels, write_hgb, GraphFormat, LoadSummary};
pub use metapath::{parse_meta_path, IntegrationMode, MetaPath, PathUnit, QueryPlan, TypeSchema};

pub type NodeId = usize;
pub type TypeId = usize;

/// One content feature vector attached to a node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContentSlot {
    pub content_type: usize,
    pub values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub relation: usize,
}

/// Canonical unordered pair of node types. `first` carries the
/// lexicographically smaller label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Mpu {
    pub first: TypeId,
    pub second: TypeId,
}

impl Mpu {
    pub fn contains(&self, ty: TypeId) -> bool {
        self.first == ty || self.second == ty
    }

    pub fn is_self_pair(&self) -> bool {
        self.first == self.second
    }

    /// The type on the other side of `ty`, if `ty` belongs to the pair.
    pub fn other(&self, ty: TypeId) -> Option<TypeId> {
        if self.first == ty {
            Some(self.second)
        } else if self.second == ty {
            Some(self.first)
        } else {
            None
        }
    }

    pub fn types(&self) -> Vec<TypeId> {
        if self.is_self_pair() {
            vec![self.first]
        } else {
            vec![self.first, self.second]
        }
    }

    pub fn label(&self, type_names: &[String]) -> String {
        format!("({},{})", type_names[self.first], type_names[self.second])
    }
}

/// Immutable heterogeneous graph with dense node ids `0..N`.
#[derive(Clone, Debug)]
pub struct HetGraph {
    node_types: Vec<TypeId>,
    type_names: Vec<String>,
    edges: Vec<Edge>,
    content: Vec<Vec<ContentSlot>>,
    adjacency: Vec<Vec<NodeId>>,
}

impl HetGraph {
    /// Validates and builds a graph. Content slots are sorted by content type.
    pub fn new(
        node_types: Vec<TypeId>,
        type_names: Vec<String>,
        edges: Vec<Edge>,
        mut content: Vec<Vec<ContentSlot>>,
    ) -> Result<Self> {
        let n = node_types.len();
        let mut seen = BTreeSet::new();
        for name in &type_names {
            if name.is_empty() || name.contains(char::is_whitespace) || name.contains('-') {
                return Err(Error::Schema(format!("invalid type label {name:?}")));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate type label {name:?}")));
            }
        }
        for (v, &t) in node_types.iter().enumerate() {
            if t >= type_names.len() {
                return Err(Error::Schema(format!("node {v} has undeclared type id {t}")));
            }
        }
        for e in &edges {
            if e.src >= n || e.dst >= n {
                return Err(Error::Schema(format!(
                    "edge {}-{} references an undeclared node (graph has {n} nodes)",
                    e.src, e.dst
                )));
            }
        }
        if content.is_empty() {
            content = vec![Vec::new(); n];
        }
        if content.len() != n {
            return Err(Error::Format(format!(
                "content table has {} rows for {n} nodes",
                content.len()
            )));
        }
        let mut dims: BTreeMap<usize, usize> = BTreeMap::new();
        for (v, slots) in content.iter_mut().enumerate() {
            slots.sort_by_key(|s| s.content_type);
            for w in slots.windows(2) {
                if w[0].content_type == w[1].content_type {
                    return Err(Error::Format(format!(
                        "node {v} has two slots of content type {}",
                        w[0].content_type
                    )));
                }
            }
            for s in slots.iter() {
                let d = *dims.entry(s.content_type).or_insert(s.values.len());
                if d != s.values.len() || d == 0 {
                    return Err(Error::Format(format!(
                        "content type {} has inconsistent dimension at node {v}",
                        s.content_type
                    )));
                }
            }
        }

        let distinct_types: BTreeSet<_> = node_types.iter().collect();
        let distinct_rels: BTreeSet<_> = edges.iter().map(|e| e.relation).collect();
        if distinct_types.len() <= 1 && distinct_rels.len() <= 1 {
            return Err(Error::Schema(
                "graph is homogeneous: needs more than one node type or relation type".into(),
            ));
        }

        let mut adjacency = vec![Vec::new(); n];
        for e in &edges {
            adjacency[e.src].push(e.dst);
            if e.src != e.dst {
                adjacency[e.dst].push(e.src);
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self {
            node_types,
            type_names,
            edges,
            content,
            adjacency,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.node_types.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_types(&self) -> usize {
        self.type_names.len()
    }

    pub fn node_type(&self, v: NodeId) -> TypeId {
        self.node_types[v]
    }

    pub fn node_types(&self) -> &[TypeId] {
        &self.node_types
    }

    pub fn type_names(&self) -> &[String] {
        &self.type_names
    }

    pub fn type_name(&self, t: TypeId) -> &str {
        &self.type_names[t]
    }

    pub fn type_id(&self, label: &str) -> Option<TypeId> {
        self.type_names.iter().position(|n| n == label)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn content(&self, v: NodeId) -> &[ContentSlot] {
        &self.content[v]
    }

    /// Content type id → feature dimension, over all nodes.
    pub fn content_dims(&self) -> BTreeMap<usize, usize> {
        let mut dims = BTreeMap::new();
        for slots in &self.content {
            for s in slots {
                dims.entry(s.content_type).or_insert(s.values.len());
            }
        }
        dims
    }

    /// Neighbors in both edge directions, sorted, with multiplicity.
    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.adjacency[v]
    }

    pub fn nodes_of_type(&self, t: TypeId) -> Vec<NodeId> {
        (0..self.num_nodes()).filter(|&v| self.node_types[v] == t).collect()
    }

    /// Canonical MPU for two type ids; ordering is by label.
    pub fn mpu(&self, a: TypeId, b: TypeId) -> Mpu {
        if self.type_names[a] <= self.type_names[b] {
            Mpu { first: a, second: b }
        } else {
            Mpu { first: b, second: a }
        }
    }

    pub fn mpu_label(&self, mpu: &Mpu) -> String {
        mpu.label(&self.type_names)
    }

    /// Whether at least one edge joins nodes of types `a` and `b`.
    pub fn types_connected(&self, a: TypeId, b: TypeId) -> bool {
        self.edges.iter().any(|e| {
            let (s, d) = (self.node_types[e.src], self.node_types[e.dst]);
            (s == a && d == b) || (s == b && d == a)
        })
    }

    /// One MPU per unordered type pair joined by an edge, sorted by label pair.
    pub fn enumerate_mpus(&self) -> Vec<Mpu> {
        let set: BTreeSet<Mpu> = self
            .edges
            .iter()
            .map(|e| self.mpu(self.node_types[e.src], self.node_types[e.dst]))
            .collect();
        let mut mpus: Vec<Mpu> = set.into_iter().collect();
        mpus.sort_by(|x, y| {
            (&self.type_names[x.first], &self.type_names[x.second])
                .cmp(&(&self.type_names[y.first], &self.type_names[y.second]))
        });
        mpus
    }

    /// Restricts the graph to the two node types of `mpu` and the edges
    /// between them. Node ids are preserved.
    pub fn induce_mpu_subgraph(&self, mpu: Mpu) -> Result<MpuSubgraph> {
        if !self.enumerate_mpus().contains(&mpu) {
            return Err(Error::MissingMpu(self.mpu_label(&mpu)));
        }
        let nodes: Vec<NodeId> = (0..self.num_nodes())
            .filter(|&v| mpu.contains(self.node_types[v]))
            .collect();
        let local: HashMap<NodeId, usize> = nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let edges: Vec<(NodeId, NodeId)> = self
            .edges
            .iter()
            .filter(|e| self.mpu(self.node_types[e.src], self.node_types[e.dst]) == mpu)
            .map(|e| (e.src, e.dst))
            .collect();
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for &(s, d) in &edges {
            adjacency[local[&s]].push(d);
            if s != d {
                adjacency[local[&d]].push(s);
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let types = nodes.iter().map(|&v| self.node_types[v]).collect();
        Ok(MpuSubgraph {
            mpu,
            type_names: self.type_names.clone(),
            nodes,
            types,
            edges,
            adjacency,
            local,
        })
    }

    /// Number of instances of the full type sequence `types` that start at
    /// `start`, keyed by end node. Counts follow edge multiplicity.
    pub fn path_instance_counts(&self, types: &[TypeId], start: NodeId) -> BTreeMap<NodeId, u64> {
        let mut frontier = BTreeMap::new();
        if types.is_empty() || self.node_types[start] != types[0] {
            return frontier;
        }
        frontier.insert(start, 1u64);
        for &next in &types[1..] {
            let mut out = BTreeMap::new();
            for (&x, &c) in &frontier {
                for &y in self.neighbors(x) {
                    if self.node_types[y] == next {
                        *out.entry(y).or_insert(0) += c;
                    }
                }
            }
            frontier = out;
        }
        frontier
    }
}

/// The part of a graph covered by one MPU.
#[derive(Clone, Debug)]
pub struct MpuSubgraph {
    mpu: Mpu,
    type_names: Vec<String>,
    nodes: Vec<NodeId>,
    types: Vec<TypeId>,
    edges: Vec<(NodeId, NodeId)>,
    adjacency: Vec<Vec<NodeId>>,
    local: HashMap<NodeId, usize>,
}

impl MpuSubgraph {
    pub fn mpu(&self) -> Mpu {
        self.mpu
    }

    pub fn mpu_label(&self) -> String {
        self.mpu.label(&self.type_names)
    }

    pub fn type_name(&self, t: TypeId) -> &str {
        &self.type_names[t]
    }

    /// Global ids of member nodes, ascending.
    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn local_index(&self, v: NodeId) -> Option<usize> {
        self.local.get(&v).copied()
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.local.contains_key(&v)
    }

    pub fn node_type(&self, v: NodeId) -> Option<TypeId> {
        self.local_index(v).map(|i| self.types[i])
    }

    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        match self.local_index(v) {
            Some(i) => &self.adjacency[i],
            None => &[],
        }
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.neighbors(v).len()
    }
}

impl fmt::Display for LoadSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "nodes={} edges={}", self.nodes, self.edges)?;
        for (label, count) in &self.nodes_per_type {
            write!(f, " {label}={count}")?;
        }
        Ok(())
    }
}
