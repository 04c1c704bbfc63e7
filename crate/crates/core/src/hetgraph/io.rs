//! Graph file formats.
//!
//! HGB-style directory:
//!   `node.dat`   `node_id \t name \t type_id [\t f1,f2,...]`
//!   `link.dat`   `src \t dst \t relation_id [\t weight]`
//!   `schema.dat` `type_id \t label` (sidecar; letters derived when absent)
//!   `label.dat`  optional, `node_id \t name \t type_id \t label`
//!
//! Edge list: a `#types A M D` header, then `src src_type dst dst_type`
//! lines. A two-token line `node_id type` declares a node without edges.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use log::warn;

use super::{ContentSlot, Edge, HetGraph, NodeId};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphFormat {
    Hgb,
    EdgeList,
}

impl FromStr for GraphFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hgb" => Ok(GraphFormat::Hgb),
            "edge-list" | "edgelist" => Ok(GraphFormat::EdgeList),
            other => Err(Error::Config(format!("unknown graph format {other:?}"))),
        }
    }
}

/// Counts reported after a load, plus any non-fatal warnings.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LoadSummary {
    pub nodes: usize,
    pub edges: usize,
    pub nodes_per_type: Vec<(String, usize)>,
    pub warnings: Vec<String>,
}

impl LoadSummary {
    fn of(g: &HetGraph, warnings: Vec<String>) -> Self {
        let nodes_per_type = (0..g.num_types())
            .map(|t| {
                let count = g.node_types().iter().filter(|&&x| x == t).count();
                (g.type_name(t).to_string(), count)
            })
            .collect();
        for w in &warnings {
            warn!("{w}");
        }
        Self {
            nodes: g.num_nodes(),
            edges: g.num_edges(),
            nodes_per_type,
            warnings,
        }
    }
}

pub fn load_graph(path: &Path, format: GraphFormat) -> Result<(HetGraph, LoadSummary)> {
    match format {
        GraphFormat::Hgb => load_hgb(path),
        GraphFormat::EdgeList => load_edge_list(path),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_num<T: FromStr>(tok: &str, what: &str, line: usize) -> Result<T> {
    tok.trim()
        .parse()
        .map_err(|_| Error::Format(format!("line {line}: bad {what} {tok:?}")))
}

fn dense_ids<T>(map: &BTreeMap<NodeId, T>) -> Result<()> {
    if let Some((&last, _)) = map.iter().next_back() {
        if last + 1 != map.len() {
            return Err(Error::Format(format!(
                "node ids must be dense 0..N-1 ({} ids, max {last})",
                map.len()
            )));
        }
    }
    Ok(())
}

/// Loads an HGB-style directory (or the directory containing a `node.dat`).
pub fn load_hgb(path: &Path) -> Result<(HetGraph, LoadSummary)> {
    let dir = if path.is_dir() {
        path.to_path_buf()
    } else {
        path.parent().unwrap_or(Path::new(".")).to_path_buf()
    };
    let mut warnings = Vec::new();

    let mut raw_nodes: BTreeMap<NodeId, (usize, Option<Vec<f64>>)> = BTreeMap::new();
    for (i, line) in read(&dir.join("node.dat"))?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 3 {
            return Err(Error::Format(format!(
                "node.dat line {}: expected at least 3 tab-separated columns",
                i + 1
            )));
        }
        let id: NodeId = parse_num(cols[0], "node id", i + 1)?;
        let ty: usize = parse_num(cols[2], "type id", i + 1)?;
        let features = match cols.get(3).map(|s| s.trim()) {
            Some(s) if !s.is_empty() => Some(
                s.split(',')
                    .map(|x| parse_num::<f64>(x, "feature", i + 1))
                    .collect::<Result<Vec<_>>>()?,
            ),
            _ => None,
        };
        if raw_nodes.insert(id, (ty, features)).is_some() {
            return Err(Error::Format(format!("duplicate node id {id} in node.dat")));
        }
    }
    dense_ids(&raw_nodes)?;

    let schema_path = dir.join("schema.dat");
    let schema: BTreeMap<usize, String> = if schema_path.exists() {
        let mut m = BTreeMap::new();
        for (i, line) in read(&schema_path)?.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let (Some(id), Some(label)) = (it.next(), it.next()) else {
                return Err(Error::Format(format!(
                    "schema.dat line {}: expected `type_id label`",
                    i + 1
                )));
            };
            m.insert(parse_num(id, "type id", i + 1)?, label.to_string());
        }
        m
    } else {
        let raw_types: BTreeSet<usize> = raw_nodes.values().map(|(t, _)| *t).collect();
        if raw_types.len() > 26 {
            return Err(Error::Schema("no schema.dat and more than 26 node types".into()));
        }
        warnings.push("no schema.dat sidecar; type labels derived from type ids".to_string());
        raw_types
            .iter()
            .enumerate()
            .map(|(i, &t)| (t, ((b'A' + i as u8) as char).to_string()))
            .collect()
    };
    let type_index: BTreeMap<usize, usize> = schema.keys().enumerate().map(|(i, &raw)| (raw, i)).collect();
    let type_names: Vec<String> = schema.values().cloned().collect();

    let mut node_types = Vec::with_capacity(raw_nodes.len());
    let mut content = Vec::with_capacity(raw_nodes.len());
    for (id, (raw_ty, features)) in raw_nodes {
        let ty = *type_index
            .get(&raw_ty)
            .ok_or_else(|| Error::Schema(format!("node {id} has undeclared type id {raw_ty}")))?;
        node_types.push(ty);
        content.push(match features {
            Some(values) => vec![ContentSlot {
                content_type: ty,
                values,
            }],
            None => Vec::new(),
        });
    }

    let mut edges = Vec::new();
    let link_path = dir.join("link.dat");
    for (i, line) in read(&link_path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 3 {
            return Err(Error::Format(format!(
                "link.dat line {}: expected at least 3 tab-separated columns",
                i + 1
            )));
        }
        edges.push(Edge {
            src: parse_num(cols[0], "source id", i + 1)?,
            dst: parse_num(cols[1], "target id", i + 1)?,
            relation: parse_num(cols[2], "relation id", i + 1)?,
        });
    }
    if edges.is_empty() {
        warnings.push("link file contains no edges".to_string());
    }
    let g = HetGraph::new(node_types, type_names, edges, content)?;
    let summary = LoadSummary::of(&g, warnings);
    Ok((g, summary))
}

/// Loads the `#types` edge-list format.
pub fn load_edge_list(path: &Path) -> Result<(HetGraph, LoadSummary)> {
    let text = read(path)?;
    let mut type_names: Option<Vec<String>> = None;
    let mut node_type: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut pairs: Vec<(NodeId, NodeId)> = Vec::new();
    let mut warnings = Vec::new();

    let mut declare = |id: NodeId, ty: usize, line: usize| -> Result<()> {
        match node_type.insert(id, ty) {
            Some(prev) if prev != ty => Err(Error::Format(format!(
                "line {line}: node {id} declared with two different types"
            ))),
            _ => Ok(()),
        }
    };

    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("#types") {
            let names: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
            if names.is_empty() {
                return Err(Error::Schema("#types header declares no labels".into()));
            }
            type_names = Some(names);
            continue;
        }
        if trimmed.starts_with('#') {
            continue;
        }
        let names = type_names
            .as_ref()
            .ok_or_else(|| Error::Schema("edge list is missing its `#types` header".into()))?;
        let lookup = |label: &str| -> Result<usize> {
            names
                .iter()
                .position(|n| n == label)
                .ok_or_else(|| Error::Schema(format!("line {line_no}: unknown type label {label:?}")))
        };
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        match toks.len() {
            2 => {
                let id = parse_num(toks[0], "node id", line_no)?;
                declare(id, lookup(toks[1])?, line_no)?;
            }
            4 => {
                let s = parse_num(toks[0], "source id", line_no)?;
                let d = parse_num(toks[2], "target id", line_no)?;
                declare(s, lookup(toks[1])?, line_no)?;
                declare(d, lookup(toks[3])?, line_no)?;
                pairs.push((s, d));
            }
            n => {
                return Err(Error::Format(format!(
                    "line {line_no}: expected 2 or 4 fields, found {n}"
                )))
            }
        }
    }
    let type_names = type_names.ok_or_else(|| Error::Schema("edge list is missing its `#types` header".into()))?;
    dense_ids(&node_type)?;

    // relation id = rank of the (sorted) label pair
    let rel_of = |s: NodeId, d: NodeId| {
        let (a, b) = (&type_names[node_type[&s]], &type_names[node_type[&d]]);
        if a <= b {
            (a.clone(), b.clone())
        } else {
            (b.clone(), a.clone())
        }
    };
    let rel_keys: BTreeSet<(String, String)> = pairs.iter().map(|&(s, d)| rel_of(s, d)).collect();
    let rel_keys: Vec<_> = rel_keys.into_iter().collect();
    let edges = pairs
        .iter()
        .map(|&(s, d)| Edge {
            src: s,
            dst: d,
            relation: rel_keys.binary_search(&rel_of(s, d)).unwrap(),
        })
        .collect::<Vec<_>>();
    if edges.is_empty() {
        warnings.push("edge list contains no edges".to_string());
    }
    let node_types: Vec<usize> = node_type.into_values().collect();
    let g = HetGraph::new(node_types, type_names, edges, Vec::new())?;
    let summary = LoadSummary::of(&g, warnings);
    Ok((g, summary))
}

/// Writes `g` as an HGB-style directory. Labels, when given, go to `label.dat`.
pub fn write_hgb(g: &HetGraph, dir: &Path, labels: Option<&[usize]>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut nodes = String::new();
    for v in 0..g.num_nodes() {
        let t = g.node_type(v);
        match g.content(v) {
            [] => writeln!(nodes, "{v}\tn{v}\t{t}").unwrap(),
            [slot] => {
                let feats: Vec<String> = slot.values.iter().map(|x| x.to_string()).collect();
                writeln!(nodes, "{v}\tn{v}\t{t}\t{}", feats.join(",")).unwrap()
            }
            _ => {
                return Err(Error::Format(format!(
                    "node {v} has several content slots; HGB stores one feature vector per node"
                )))
            }
        }
    }
    let mut links = String::new();
    for e in g.edges() {
        writeln!(links, "{}\t{}\t{}\t1", e.src, e.dst, e.relation).unwrap();
    }
    let mut schema = String::new();
    for (t, name) in g.type_names().iter().enumerate() {
        writeln!(schema, "{t}\t{name}").unwrap();
    }
    let mut files = vec![("node.dat", nodes), ("link.dat", links), ("schema.dat", schema)];
    if let Some(labels) = labels {
        let mut out = String::new();
        for (v, l) in labels.iter().enumerate() {
            writeln!(out, "{v}\tn{v}\t{}\t{l}", g.node_type(v)).unwrap();
        }
        files.push(("label.dat", out));
    }
    for (name, body) in files {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

/// Reads `node_id \t label` or the four-column HGB `label.dat` layout.
pub fn load_labels(path: &Path) -> Result<BTreeMap<NodeId, usize>> {
    let mut out = BTreeMap::new();
    for (i, line) in read(path)?.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let (id, label) = match cols.len() {
            2 => (cols[0], cols[1]),
            n if n >= 4 => (cols[0], cols[3]),
            _ => {
                return Err(Error::Format(format!(
                    "label file line {}: expected 2 or 4 columns",
                    i + 1
                )))
            }
        };
        // multi-label rows (comma lists) keep their first label
        let label = label.split(',').next().unwrap_or(label);
        out.insert(parse_num(id, "node id", i + 1)?, parse_num(label, "label", i + 1)?);
    }
    Ok(out)
}
