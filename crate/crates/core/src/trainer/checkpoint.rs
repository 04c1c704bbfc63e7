//! Binary checkpoint container plus a JSON manifest for humans.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic[8] version:u32 config_hash[32] seed:u64
//! meta_len:u64 meta(JSON)
//! n_tensors:u32 { name_len:u32 name rank:u32 dims:u64*rank values:f64* }*
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{encoder_config, materialize, MpuData, TrainConfig};
use crate::autodiff::{ParamSet, Tensor};
use crate::encoder::ModelParams;
use crate::error::{Error, Result};
use crate::hetgraph::{HetGraph, Mpu, NodeId, TypeId};
use crate::sampler::NeighborTable;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MPUCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Frozen `Zi` of one MPU; row `i` belongs to `nodes[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MpuEmbeddings {
    pub nodes: Vec<NodeId>,
    pub zi: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub config_hash: String,
    pub type_names: Vec<String>,
    pub node_types: Vec<TypeId>,
    pub model: ModelParams,
    pub tables: BTreeMap<Mpu, NeighborTable>,
    pub embeddings: BTreeMap<Mpu, MpuEmbeddings>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config: String,
    type_names: Vec<String>,
    node_types: Vec<TypeId>,
    mpus: Vec<MpuMeta>,
}

#[derive(Serialize, Deserialize)]
struct MpuMeta {
    mpu: Mpu,
    label: String,
    nodes: Vec<NodeId>,
    table: NeighborTable,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn hex_to_bytes(hex: &str) -> Result<Vec<u8>> {
    if hex.len() != 64 {
        return Err(Error::Checkpoint(format!("bad config hash {hex:?}")));
    }
    (0..32)
        .map(|i| {
            u8::from_str_radix(&hex[2 * i..2 * i + 2], 16)
                .map_err(|_| Error::Checkpoint(format!("bad config hash {hex:?}")))
        })
        .collect()
}

fn put_tensor(out: &mut Vec<u8>, name: &str, t: &Tensor) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &x in t.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

/// Sidecar manifest path: `<checkpoint>.json`.
pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

impl Checkpoint {
    /// Freezes `Zi` for every prepared MPU under the given parameters.
    pub fn assemble(graph: &HetGraph, cfg: &TrainConfig, model: ModelParams, data: &[MpuData]) -> Result<Self> {
        let enc = encoder_config(cfg);
        let mut tables = BTreeMap::new();
        let mut embeddings = BTreeMap::new();
        for d in data {
            let zi = materialize(graph, &model, &d.sub, &d.table, &enc)?;
            tables.insert(d.sub.mpu(), d.table.clone());
            embeddings.insert(
                d.sub.mpu(),
                MpuEmbeddings {
                    nodes: d.sub.nodes().to_vec(),
                    zi,
                },
            );
        }
        Ok(Self {
            config: cfg.clone(),
            config_hash: cfg.hash(),
            type_names: graph.type_names().to_vec(),
            node_types: graph.node_types().to_vec(),
            model,
            tables,
            embeddings,
        })
    }

    /// MPUs in label order.
    pub fn mpus(&self) -> Vec<Mpu> {
        let mut m: Vec<Mpu> = self.embeddings.keys().copied().collect();
        m.sort_by(|x, y| {
            (&self.type_names[x.first], &self.type_names[x.second])
                .cmp(&(&self.type_names[y.first], &self.type_names[y.second]))
        });
        m
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mpus = self.mpus();
        let meta = Meta {
            config: self.config.canonical(),
            type_names: self.type_names.clone(),
            node_types: self.node_types.clone(),
            mpus: mpus
                .iter()
                .map(|m| MpuMeta {
                    mpu: *m,
                    label: m.label(&self.type_names),
                    nodes: self.embeddings[m].nodes.clone(),
                    table: self.tables[m].clone(),
                })
                .collect(),
        };
        let meta = serde_json::to_vec(&meta).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&hex_to_bytes(&self.config_hash)?);
        out.extend_from_slice(&self.config.seed.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        let ps = &self.model.params;
        let n = ps.len() + mpus.len();
        out.extend_from_slice(&(n as u32).to_le_bytes());
        for (name, t) in ps.iter() {
            put_tensor(&mut out, &format!("param/{name}"), t);
        }
        for m in &mpus {
            put_tensor(
                &mut out,
                &format!("zi/{}", m.label(&self.type_names)),
                &self.embeddings[m].zi,
            );
        }
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let hash: String = r.take(32)?.iter().map(|b| format!("{b:02x}")).collect();
        let seed = r.u64()?;
        let meta_len = r.u64()? as usize;
        let meta: Meta =
            serde_json::from_slice(r.take(meta_len)?).map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
        let config = TrainConfig::from_canonical(&meta.config)?;
        if config.hash() != hash || config.seed != seed {
            return Err(Error::Checkpoint(
                "config hash or seed does not match stored config".into(),
            ));
        }

        let n = r.u32()? as usize;
        let mut params = ParamSet::new();
        let mut zi: BTreeMap<String, Tensor> = BTreeMap::new();
        for _ in 0..n {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.u32()? as usize;
            if rank > 2 {
                return Err(Error::Checkpoint(format!("tensor {name} has rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64()? as usize);
            }
            let count: usize = shape.iter().product();
            let raw = r.take(count * 8)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let t = Tensor::new(shape, data)?;
            if let Some(p) = name.strip_prefix("param/") {
                params.add(p, t);
            } else if let Some(l) = name.strip_prefix("zi/") {
                zi.insert(l.to_string(), t);
            } else {
                return Err(Error::Checkpoint(format!("unknown tensor {name}")));
            }
        }
        if r.pos != buf.len() {
            return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
        }

        let mpus: Vec<Mpu> = meta.mpus.iter().map(|m| m.mpu).collect();
        let model = ModelParams::from_params(params, &meta.type_names, &mpus)?;
        let mut tables = BTreeMap::new();
        let mut embeddings = BTreeMap::new();
        for m in meta.mpus {
            let t = zi
                .remove(&m.label)
                .ok_or_else(|| Error::Checkpoint(format!("missing embeddings for {}", m.label)))?;
            if t.rows() != m.nodes.len() || t.cols() != model.dim {
                return Err(Error::Checkpoint(format!(
                    "embeddings for {} have the wrong shape",
                    m.label
                )));
            }
            tables.insert(m.mpu, m.table);
            embeddings.insert(m.mpu, MpuEmbeddings { nodes: m.nodes, zi: t });
        }
        Ok(Self {
            config,
            config_hash: hash,
            type_names: meta.type_names,
            node_types: meta.node_types,
            model,
            tables,
            embeddings,
        })
    }

    /// Human-readable summary written next to the binary file.
    pub fn manifest(&self) -> serde_json::Value {
        let config: BTreeMap<String, String> = self.config.entries().into_iter().collect();
        let tensors: Vec<serde_json::Value> = self
            .model
            .params
            .iter()
            .map(|(n, t)| serde_json::json!({ "name": format!("param/{n}"), "shape": t.shape() }))
            .chain(self.mpus().iter().map(|m| {
                serde_json::json!({
                    "name": format!("zi/{}", m.label(&self.type_names)),
                    "shape": self.embeddings[m].zi.shape(),
                })
            }))
            .collect();
        serde_json::json!({
            "format_version": CHECKPOINT_VERSION,
            "config_hash": self.config_hash,
            "seed": self.config.seed,
            "embed_dim": self.model.dim,
            "type_names": self.type_names,
            "num_nodes": self.node_types.len(),
            "mpus": self.mpus().iter().map(|m| m.label(&self.type_names)).collect::<Vec<_>>(),
            "config": config,
            "tensors": tensors,
        })
    }

    /// Writes the checkpoint and its `<path>.json` manifest.
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))?;
        let mpath = manifest_path(path);
        let text = serde_json::to_string_pretty(&self.manifest()).map_err(|e| Error::Checkpoint(e.to_string()))?;
        fs::write(&mpath, text + "\n").map_err(|e| Error::io(&mpath, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf)
    }
}
