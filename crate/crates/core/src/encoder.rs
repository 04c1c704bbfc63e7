//! Node content encoding and intra-MPU aggregation.
//!
//! For one MPU the forward pass is:
//!
//! 1. every content slot `C_an` is projected to `H_an = W_n C_an + b_n`;
//!    featureless nodes use a learned per-node vector as their only slot;
//! 2. a BiLSTM runs over each node's slots (ascending content type) and the
//!    per-position `[fwd ‖ bwd]` outputs are averaged into `Ĥ_a`;
//! 3. a second, MPU-shared BiLSTM runs over `Ĥ_b` of the node's sampled
//!    neighbors (most frequent first) and averages into `Q_a`;
//! 4. attention logits `LeakyReLU(u · [Q_a ‖ Q_b])` are softmaxed over the
//!    neighbors and `Zi_a = Σ α_ab Q_b`.
//!
//! Everything is recorded on a [`Tape`] and batched over all nodes of the
//! MPU: sequences of different length are padded and masked, so padded
//! steps leave the recurrent state untouched.

use std::collections::BTreeMap;

use rand::Rng;

use crate::autodiff::{ParamId, ParamSet, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::hetgraph::{HetGraph, Mpu, MpuSubgraph, NodeId};
use crate::sampler::NeighborTable;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmParams {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub bias: ParamId,
    pub hidden: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BiLstmParams {
    pub fwd: LstmParams,
    pub bwd: LstmParams,
}

impl LstmParams {
    /// Gate columns are laid out as `[input | forget | output | candidate]`.
    pub fn init<R: Rng>(ps: &mut ParamSet, name: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            w_x: ps.add_xavier(format!("{name}.w_x"), &[input, 4 * hidden], rng),
            w_h: ps.add_xavier(format!("{name}.w_h"), &[hidden, 4 * hidden], rng),
            bias: ps.add(format!("{name}.bias"), Tensor::zeros(&[4 * hidden])),
            hidden,
        }
    }

    fn bind(&self, tape: &mut Tape, ps: &ParamSet) -> LstmVars {
        LstmVars {
            w_x: tape.param(ps, self.w_x),
            w_h: tape.param(ps, self.w_h),
            bias: tape.param(ps, self.bias),
            hidden: self.hidden,
        }
    }
}

impl BiLstmParams {
    pub fn init<R: Rng>(ps: &mut ParamSet, name: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            fwd: LstmParams::init(ps, &format!("{name}.fwd"), input, hidden, rng),
            bwd: LstmParams::init(ps, &format!("{name}.bwd"), input, hidden, rng),
        }
    }

    pub fn bind(&self, tape: &mut Tape, ps: &ParamSet) -> BiLstmVars {
        BiLstmVars {
            fwd: self.fwd.bind(tape, ps),
            bwd: self.bwd.bind(tape, ps),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    pub w_x: Var,
    pub w_h: Var,
    pub bias: Var,
    pub hidden: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct BiLstmVars {
    pub fwd: LstmVars,
    pub bwd: LstmVars,
}

/// All trainable parameters of the model plus their layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub params: ParamSet,
    pub dim: usize,
    pub node_embed: ParamId,
    /// content type → (weight `[d_n, d]`, bias `[d]`)
    pub projections: BTreeMap<usize, (ParamId, ParamId)>,
    pub content_lstm: BiLstmParams,
    pub neighbor_lstm: BiLstmParams,
    /// one attention vector `u` of length `2d` per MPU
    pub attention: BTreeMap<Mpu, ParamId>,
    pub inter_q: ParamId,
}

impl ModelParams {
    /// Xavier-uniform weights, zero biases.
    pub fn init<R: Rng>(graph: &HetGraph, mpus: &[Mpu], dim: usize, rng: &mut R) -> Result<Self> {
        if dim < 2 || !dim.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "embedding dimension must be even and ≥ 2, got {dim}"
            )));
        }
        let hidden = dim / 2;
        let mut ps = ParamSet::new();
        let node_embed = ps.add_xavier("node_embed", &[graph.num_nodes(), dim], rng);
        let mut projections = BTreeMap::new();
        for (ct, d_in) in graph.content_dims() {
            let w = ps.add_xavier(format!("proj.{ct}.weight"), &[d_in, dim], rng);
            let b = ps.add(format!("proj.{ct}.bias"), Tensor::zeros(&[dim]));
            projections.insert(ct, (w, b));
        }
        let content_lstm = BiLstmParams::init(&mut ps, "content_lstm", dim, hidden, rng);
        let neighbor_lstm = BiLstmParams::init(&mut ps, "neighbor_lstm", dim, hidden, rng);
        let mut attention = BTreeMap::new();
        for m in mpus {
            let name = format!("attn_u.{}", m.label(graph.type_names()));
            attention.insert(*m, ps.add_xavier(name, &[2 * dim], rng));
        }
        let inter_q = ps.add_xavier("inter_q", &[dim], rng);
        Ok(Self {
            params: ps,
            dim,
            node_embed,
            projections,
            content_lstm,
            neighbor_lstm,
            attention,
            inter_q,
        })
    }

    /// Rebuilds the layout from a parameter set created by [`Self::init`].
    pub fn from_params(params: ParamSet, type_names: &[String], mpus: &[Mpu]) -> Result<Self> {
        let find = |name: &str| {
            params
                .id(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))
        };
        let node_embed = find("node_embed")?;
        let dim = params.get(node_embed).cols();
        let lstm = |name: &str| -> Result<LstmParams> {
            let w_h = find(&format!("{name}.w_h"))?;
            Ok(LstmParams {
                w_x: find(&format!("{name}.w_x"))?,
                w_h,
                bias: find(&format!("{name}.bias"))?,
                hidden: params.get(w_h).rows(),
            })
        };
        let bilstm = |name: &str| -> Result<BiLstmParams> {
            Ok(BiLstmParams {
                fwd: lstm(&format!("{name}.fwd"))?,
                bwd: lstm(&format!("{name}.bwd"))?,
            })
        };
        let mut projections = BTreeMap::new();
        for id in params.ids() {
            if let Some(ct) = params
                .name(id)
                .strip_prefix("proj.")
                .and_then(|r| r.strip_suffix(".weight"))
            {
                let ct: usize = ct
                    .parse()
                    .map_err(|_| Error::Checkpoint(format!("bad parameter name {}", params.name(id))))?;
                projections.insert(ct, (id, find(&format!("proj.{ct}.bias"))?));
            }
        }
        let mut attention = BTreeMap::new();
        for m in mpus {
            attention.insert(*m, find(&format!("attn_u.{}", m.label(type_names)))?);
        }
        Ok(Self {
            content_lstm: bilstm("content_lstm")?,
            neighbor_lstm: bilstm("neighbor_lstm")?,
            inter_q: find("inter_q")?,
            params,
            dim,
            node_embed,
            projections,
            attention,
        })
    }

    pub fn projection_ids(&self) -> Vec<ParamId> {
        self.projections.values().flat_map(|&(w, b)| [w, b]).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EncoderConfig {
    pub leaky_slope: f64,
    /// Replace learned α with uniform weights over the neighbor list.
    pub disable_intra_attention: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            leaky_slope: crate::autodiff::DEFAULT_LEAKY_SLOPE,
            disable_intra_attention: false,
        }
    }
}

/// Projected content: a stacked row source plus, per node, the rows that
/// form its slot sequence in ascending content-type order.
pub struct ProjectedContent {
    pub source: Var,
    pub slots: Vec<Vec<usize>>,
}

pub fn project_content(
    tape: &mut Tape,
    model: &ModelParams,
    graph: &HetGraph,
    nodes: &[NodeId],
) -> Result<ProjectedContent> {
    let ps = &model.params;
    let mut parts = Vec::new();
    let mut offset = 0;
    let mut slots: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nodes.len()];

    let featureless: Vec<(usize, NodeId)> = nodes
        .iter()
        .enumerate()
        .filter(|(_, &v)| graph.content(v).is_empty())
        .map(|(i, &v)| (i, v))
        .collect();
    if !featureless.is_empty() {
        let table = tape.param(ps, model.node_embed);
        let ids: Vec<usize> = featureless.iter().map(|&(_, v)| v).collect();
        parts.push(tape.gather_rows(table, &ids)?);
        for (k, &(i, _)) in featureless.iter().enumerate() {
            slots[i].push((0, offset + k));
        }
        offset += featureless.len();
    }

    let mut by_type: BTreeMap<usize, Vec<(usize, &[f64])>> = BTreeMap::new();
    for (i, &v) in nodes.iter().enumerate() {
        for s in graph.content(v) {
            by_type.entry(s.content_type).or_default().push((i, &s.values));
        }
    }
    for (ct, rows) in by_type {
        let &(w, b) = model
            .projections
            .get(&ct)
            .ok_or_else(|| Error::Config(format!("no projection for content type {ct}")))?;
        let d_in = rows[0].1.len();
        let data: Vec<f64> = rows.iter().flat_map(|(_, v)| v.iter().copied()).collect();
        let c = tape.constant(Tensor::matrix(rows.len(), d_in, data)?);
        let wv = tape.param(ps, w);
        let bv = tape.param(ps, b);
        let h = tape.matmul(c, wv)?;
        parts.push(tape.add_row_bias(h, bv)?);
        for (k, &(i, _)) in rows.iter().enumerate() {
            slots[i].push((ct + 1, offset + k));
        }
        offset += rows.len();
    }

    let source = match parts.len() {
        0 => return Err(Error::Config("no nodes to project".into())),
        1 => parts[0],
        _ => tape.concat(&parts, 0)?,
    };
    let slots = slots
        .into_iter()
        .map(|mut s| {
            s.sort();
            s.into_iter().map(|(_, r)| r).collect()
        })
        .collect();
    Ok(ProjectedContent { source, slots })
}

fn blend(tape: &mut Tape, new: Var, old: Option<Var>, mask: &[f64], full: bool) -> Result<Var> {
    if full {
        return Ok(new);
    }
    let kept = tape.mul_rows_const(new, mask)?;
    match old {
        None => Ok(kept),
        Some(o) => {
            let inv: Vec<f64> = mask.iter().map(|m| 1.0 - m).collect();
            let prev = tape.mul_rows_const(o, &inv)?;
            tape.add(kept, prev)
        }
    }
}

/// Runs one LSTM direction over row-index sequences into `source` and
/// returns the mean hidden state over each sequence's valid positions.
fn lstm_mean(tape: &mut Tape, lstm: &LstmVars, source: Var, seqs: &[Vec<usize>], reverse: bool) -> Result<Var> {
    let n = seqs.len();
    let h_dim = lstm.hidden;
    let max_len = seqs.iter().map(Vec::len).max().unwrap_or(0);
    let mut h: Option<Var> = None;
    let mut c: Option<Var> = None;
    let mut acc: Option<Var> = None;
    let steps: Vec<usize> = if reverse {
        (0..max_len).rev().collect()
    } else {
        (0..max_len).collect()
    };
    for t in steps {
        let idx: Vec<usize> = seqs.iter().map(|s| s.get(t).copied().unwrap_or(s[0])).collect();
        let mask: Vec<f64> = seqs.iter().map(|s| if t < s.len() { 1.0 } else { 0.0 }).collect();
        let full = mask.iter().all(|&m| m == 1.0);
        let x = tape.gather_rows(source, &idx)?;
        let mut gates = tape.matmul(x, lstm.w_x)?;
        if let Some(hp) = h {
            let rec = tape.matmul(hp, lstm.w_h)?;
            gates = tape.add(gates, rec)?;
        }
        let gates = tape.add_row_bias(gates, lstm.bias)?;
        let i_raw = tape.slice_cols(gates, 0, h_dim)?;
        let f_raw = tape.slice_cols(gates, h_dim, 2 * h_dim)?;
        let o_raw = tape.slice_cols(gates, 2 * h_dim, 3 * h_dim)?;
        let g_raw = tape.slice_cols(gates, 3 * h_dim, 4 * h_dim)?;
        let ig = tape.sigmoid(i_raw)?;
        let og = tape.sigmoid(o_raw)?;
        let cand = tape.tanh(g_raw)?;
        let mut c_new = tape.mul(ig, cand)?;
        if let Some(cp) = c {
            let fg = tape.sigmoid(f_raw)?;
            let keep = tape.mul(fg, cp)?;
            c_new = tape.add(c_new, keep)?;
        }
        let tc = tape.tanh(c_new)?;
        let h_new = tape.mul(og, tc)?;
        c = Some(blend(tape, c_new, c, &mask, full)?);
        h = Some(blend(tape, h_new, h, &mask, full)?);
        let out = if full {
            h_new
        } else {
            tape.mul_rows_const(h_new, &mask)?
        };
        acc = Some(match acc {
            None => out,
            Some(a) => tape.add(a, out)?,
        });
    }
    let acc = match acc {
        Some(a) => a,
        None => tape.constant(Tensor::zeros(&[n, h_dim])),
    };
    let inv_len: Vec<f64> = seqs.iter().map(|s| 1.0 / s.len().max(1) as f64).collect();
    tape.mul_rows_const(acc, &inv_len)
}

/// Mean over positions of `[fwd_t ‖ bwd_t]`; every sequence must be non-empty.
pub fn bilstm_mean(tape: &mut Tape, lstm: &BiLstmVars, source: Var, seqs: &[Vec<usize>]) -> Result<Var> {
    if seqs.iter().any(Vec::is_empty) {
        return Err(Error::Config("BiLSTM input contains an empty sequence".into()));
    }
    let f = lstm_mean(tape, &lstm.fwd, source, seqs, false)?;
    let b = lstm_mean(tape, &lstm.bwd, source, seqs, true)?;
    tape.concat(&[f, b], 1)
}

/// `Ĥ` for `nodes`, one row each.
pub fn aggregate_content(tape: &mut Tape, model: &ModelParams, graph: &HetGraph, nodes: &[NodeId]) -> Result<Var> {
    let projected = project_content(tape, model, graph, nodes)?;
    let lstm = model.content_lstm.bind(tape, &model.params);
    bilstm_mean(tape, &lstm, projected.source, &projected.slots)
}

/// Neighbor sequences of every subgraph node as local row indices.
pub fn neighbor_sequences(sub: &MpuSubgraph, table: &NeighborTable) -> Vec<Vec<usize>> {
    sub.nodes()
        .iter()
        .map(|&v| {
            table
                .sequence(v)
                .into_iter()
                .map(|b| sub.local_index(b).expect("table neighbors lie in the MPU"))
                .collect()
        })
        .collect()
}

/// `Q` for every subgraph node; nodes without sampled neighbors fall back to `Ĥ_a`.
pub fn aggregate_neighbors(tape: &mut Tape, model: &ModelParams, h_hat: Var, seqs: &[Vec<usize>]) -> Result<Var> {
    let n = seqs.len();
    let with: Vec<usize> = (0..n).filter(|&i| !seqs[i].is_empty()).collect();
    if with.is_empty() {
        return Ok(h_hat);
    }
    let lstm = model.neighbor_lstm.bind(tape, &model.params);
    let nonempty: Vec<Vec<usize>> = with.iter().map(|&i| seqs[i].clone()).collect();
    let q = bilstm_mean(tape, &lstm, h_hat, &nonempty)?;
    if with.len() == n {
        return Ok(q);
    }
    let stacked = tape.concat(&[q, h_hat], 0)?;
    let mut pos = vec![0usize; n];
    for (k, &i) in with.iter().enumerate() {
        pos[i] = k;
    }
    let idx: Vec<usize> = (0..n)
        .map(|i| if seqs[i].is_empty() { with.len() + i } else { pos[i] })
        .collect();
    tape.gather_rows(stacked, &idx)
}

/// Result of the intra-MPU attention step.
pub struct Attention {
    pub zi: Var,
    /// `[n, L]` pre-softmax logits (absent when attention is disabled).
    pub logits: Option<Var>,
    /// `[n, L]` weights, zero on padded slots.
    pub alpha: Option<Var>,
    pub mask: Vec<bool>,
    pub width: usize,
}

pub fn intra_mpu_attention(
    tape: &mut Tape,
    model: &ModelParams,
    mpu: Mpu,
    q: Var,
    seqs: &[Vec<usize>],
    cfg: &EncoderConfig,
) -> Result<Attention> {
    let n = seqs.len();
    let d = model.dim;
    let width = seqs.iter().map(Vec::len).max().unwrap_or(0);
    let mut mask = vec![false; n * width];
    for (i, s) in seqs.iter().enumerate() {
        for j in 0..s.len() {
            mask[i * width + j] = true;
        }
    }
    if width == 0 {
        let zi = tape.constant(Tensor::zeros(&[n, d]));
        return Ok(Attention {
            zi,
            logits: None,
            alpha: None,
            mask,
            width,
        });
    }
    let column = |j: usize| -> Vec<usize> { seqs.iter().map(|s| s.get(j).copied().unwrap_or(0)).collect() };

    let (logits, alpha) = if cfg.disable_intra_attention {
        let uniform: Vec<f64> = (0..n * width)
            .map(|k| {
                if mask[k] {
                    1.0 / seqs[k / width].len() as f64
                } else {
                    0.0
                }
            })
            .collect();
        (None, tape.constant(Tensor::matrix(n, width, uniform)?))
    } else {
        let u_id = *model
            .attention
            .get(&mpu)
            .ok_or_else(|| Error::Config("no attention vector for MPU".into()))?;
        let u = tape.param(&model.params, u_id);
        let u = tape.reshape(u, &[1, 2 * d])?;
        let u_self = tape.slice_cols(u, 0, d)?;
        let u_self = tape.reshape(u_self, &[d, 1])?;
        let u_nb = tape.slice_cols(u, d, 2 * d)?;
        let u_nb = tape.reshape(u_nb, &[d, 1])?;
        let s_self = tape.matmul(q, u_self)?;
        let s_nb = tape.matmul(q, u_nb)?;
        let mut cols = Vec::with_capacity(width);
        for j in 0..width {
            let g = tape.gather_rows(s_nb, &column(j))?;
            cols.push(tape.add(g, s_self)?);
        }
        let raw = if cols.len() == 1 {
            cols[0]
        } else {
            tape.concat(&cols, 1)?
        };
        let logits = tape.leaky_relu(raw, cfg.leaky_slope)?;
        let alpha = tape.masked_softmax(logits, &mask)?;
        (Some(logits), alpha)
    };

    let mut zi: Option<Var> = None;
    for j in 0..width {
        let qb = tape.gather_rows(q, &column(j))?;
        let a = tape.slice_cols(alpha, j, j + 1)?;
        let term = tape.mul_rows(qb, a)?;
        zi = Some(match zi {
            None => term,
            Some(z) => tape.add(z, term)?,
        });
    }
    Ok(Attention {
        zi: zi.expect("width > 0"),
        logits,
        alpha: Some(alpha),
        mask,
        width,
    })
}

/// Full forward pass for one MPU. `Zi` rows follow `sub.nodes()`.
pub struct MpuForward {
    pub zi: Var,
    pub h_hat: Var,
    pub q: Var,
    pub attention: Attention,
    pub sequences: Vec<Vec<usize>>,
}

pub fn forward_mpu(
    tape: &mut Tape,
    model: &ModelParams,
    graph: &HetGraph,
    sub: &MpuSubgraph,
    table: &NeighborTable,
    cfg: &EncoderConfig,
) -> Result<MpuForward> {
    let h_hat = aggregate_content(tape, model, graph, sub.nodes())?;
    let sequences = neighbor_sequences(sub, table);
    let q = aggregate_neighbors(tape, model, h_hat, &sequences)?;
    let attention = intra_mpu_attention(tape, model, sub.mpu(), q, &sequences, cfg)?;
    Ok(MpuForward {
        zi: attention.zi,
        h_hat,
        q,
        attention,
        sequences,
    })
}

#[cfg(test)]
mod tests;
