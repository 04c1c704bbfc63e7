//! Skip-gram training of the MPU encoder with Adam and early stopping.
//!
//! Every MPU contributes its own triples. Batches are taken round-robin
//! across MPUs so all of them move together; each step re-runs the encoder
//! on the whole MPU subgraph and scores the batch against the fresh `Zi`.

mod checkpoint;
mod config;

use log::info;
use rand::seq::SliceRandom;

use crate::autodiff::{Gradients, ParamId, ParamSet, Tape, Tensor, Var};
use crate::encoder::{forward_mpu, EncoderConfig, ModelParams};
use crate::error::{Error, Result};
use crate::hetgraph::{HetGraph, MpuSubgraph, NodeId, TypeId};
use crate::sampler::{build_neighbor_table, run_rwr, sample_triples, NeighborTable, WalkConfig, WalkCorpus};
use crate::util::rng_for;

pub use checkpoint::{manifest_path, Checkpoint, MpuEmbeddings, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{TrainConfig, CONFIG_KEYS};

const INIT_STREAM: u64 = 0x494e_4954;
const SPLIT_STREAM: u64 = 0x5350_4c54;
const SHUFFLE_STREAM: u64 = 0x5348_5546;

/// Negative-sampling loss over a batch of `(center, context, negative)` row
/// indices into `zi`: mean of `-[log σ(a·b) + log σ(-a·b')]`.
pub fn skipgram_loss(tape: &mut Tape, zi: Var, batch: &[[usize; 3]]) -> Result<Var> {
    let pick = |k: usize| batch.iter().map(|t| t[k]).collect::<Vec<_>>();
    let a = tape.gather_rows(zi, &pick(0))?;
    let b = tape.gather_rows(zi, &pick(1))?;
    let n = tape.gather_rows(zi, &pick(2))?;
    let pos = tape.row_dot(a, b)?;
    let neg = tape.row_dot(a, n)?;
    let neg = tape.scale(neg, -1.0)?;
    let lp = tape.log_sigmoid(pos)?;
    let ln = tape.log_sigmoid(neg)?;
    let both = tape.add(lp, ln)?;
    let m = tape.mean(both)?;
    tape.scale(m, -1.0)
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Same loss evaluated directly on materialized embeddings.
pub fn skipgram_loss_value(zi: &Tensor, triples: &[[u32; 3]]) -> f64 {
    if triples.is_empty() {
        return 0.0;
    }
    let dot = |x: u32, y: u32| -> f64 {
        zi.row(x as usize)
            .iter()
            .zip(zi.row(y as usize))
            .map(|(p, q)| p * q)
            .sum()
    };
    let total: f64 = triples
        .iter()
        .map(|t| log_sigmoid(dot(t[0], t[1])) + log_sigmoid(-dot(t[0], t[2])))
        .sum();
    -total / triples.len() as f64
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: i32,
}

impl Adam {
    pub fn new(params: &ParamSet, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Tensor> = params.ids().map(|id| Tensor::zeros(params.get(id).shape())).collect();
        Self {
            lr,
            beta1,
            beta2,
            eps,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// One update of every parameter not listed in `frozen`.
    pub fn step(&mut self, params: &mut ParamSet, grads: &Gradients, frozen: &[ParamId]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let ids: Vec<ParamId> = params.ids().collect();
        for id in ids {
            if frozen.contains(&id) {
                continue;
            }
            let g = grads.get(id).data();
            let m = self.m[id.0].data_mut();
            let v = self.v[id.0].data_mut();
            let p = params.get_mut(id).data_mut();
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        params.record_update();
    }
}

/// Sampled training material for one MPU. Triples hold local row indices.
pub struct MpuData {
    pub sub: MpuSubgraph,
    pub corpus: WalkCorpus,
    pub table: NeighborTable,
    pub train: Vec<[u32; 3]>,
    pub val: Vec<[u32; 3]>,
}

/// Resolves per-type neighbor counts given by label.
pub fn walk_config(graph: &HetGraph, cfg: &TrainConfig) -> Result<WalkConfig> {
    let mut walk = cfg.walk.clone();
    walk.seed = cfg.seed;
    for (label, &k) in &cfg.neighbors_per_type {
        let t: TypeId = graph
            .type_id(label)
            .ok_or_else(|| Error::Config(format!("neighbors.{label}: unknown node type")))?;
        walk.k_per_type.insert(t, k);
    }
    walk.validate()?;
    Ok(walk)
}

/// Walks, neighbor tables and triples for every MPU, with a seeded
/// validation split.
pub fn prepare(graph: &HetGraph, cfg: &TrainConfig) -> Result<Vec<MpuData>> {
    cfg.validate()?;
    let walk = walk_config(graph, cfg)?;
    let mpus = graph.enumerate_mpus();
    if mpus.is_empty() {
        return Err(Error::Schema("graph has no MPUs".into()));
    }
    let mut out = Vec::with_capacity(mpus.len());
    for mpu in mpus {
        let sub = graph.induce_mpu_subgraph(mpu)?;
        let corpus = run_rwr(&sub, &walk)?;
        let table = build_neighbor_table(&corpus, &sub, &walk);
        let triples = sample_triples(&corpus, &sub, &walk)?;
        let local = |v: u32| sub.local_index(v as NodeId).expect("triple node in MPU") as u32;
        let mut all: Vec<[u32; 3]> = triples
            .triples
            .iter()
            .map(|t| [local(t[0]), local(t[1]), local(t[2])])
            .collect();
        let mut rng = rng_for(cfg.seed, &[SPLIT_STREAM, mpu.first as u64, mpu.second as u64]);
        all.shuffle(&mut rng);
        let n_val = (all.len() as f64 * cfg.val_fraction).floor() as usize;
        let n_val = if all.len() >= 2 { n_val.min(all.len() - 1) } else { 0 };
        let train = all.split_off(n_val);
        info!(
            "MPU {}: {} walks, {} train / {} validation triples",
            sub.mpu_label(),
            corpus.walks.len(),
            train.len(),
            all.len()
        );
        out.push(MpuData {
            sub,
            corpus,
            table,
            train,
            val: all,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub steps: usize,
}

pub fn encoder_config(cfg: &TrainConfig) -> EncoderConfig {
    EncoderConfig {
        leaky_slope: cfg.leaky_slope,
        disable_intra_attention: cfg.disable_intra_attention,
    }
}

/// Runs the encoder with the current parameters and returns `Zi` for every
/// MPU node (rows follow `sub.nodes()`).
pub fn materialize(
    graph: &HetGraph,
    model: &ModelParams,
    sub: &MpuSubgraph,
    table: &NeighborTable,
    enc: &EncoderConfig,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let out = forward_mpu(&mut tape, model, graph, sub, table, enc)?;
    Ok(tape.value(out.zi).clone())
}

fn initial_model(graph: &HetGraph, cfg: &TrainConfig) -> Result<ModelParams> {
    let mut rng = rng_for(cfg.seed, &[INIT_STREAM]);
    ModelParams::init(graph, &graph.enumerate_mpus(), cfg.embed_dim, &mut rng)
}

/// Checkpoint of a model that has not been trained at all.
pub fn untrained(graph: &HetGraph, cfg: &TrainConfig, data: &[MpuData]) -> Result<Checkpoint> {
    let model = initial_model(graph, cfg)?;
    Checkpoint::assemble(graph, cfg, model, data)
}

pub fn train(graph: &HetGraph, cfg: &TrainConfig) -> Result<(Checkpoint, TrainReport)> {
    let data = prepare(graph, cfg)?;
    train_prepared(graph, cfg, &data)
}

pub fn train_prepared(graph: &HetGraph, cfg: &TrainConfig, data: &[MpuData]) -> Result<(Checkpoint, TrainReport)> {
    cfg.validate()?;
    let mut model = initial_model(graph, cfg)?;
    let enc = encoder_config(cfg);
    let mut adam = Adam::new(&model.params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);
    let frozen = if cfg.freeze_projections {
        model.projection_ids()
    } else {
        Vec::new()
    };

    let mut best: Option<(f64, ParamSet, usize)> = None;
    let mut since_best = 0;
    let mut epochs = Vec::new();
    let mut stopped_early = false;
    let mut steps = 0;

    for epoch in 1..=cfg.max_epochs {
        let orders: Vec<Vec<u32>> = data
            .iter()
            .map(|d| {
                let mut idx: Vec<u32> = (0..d.train.len() as u32).collect();
                let m = d.sub.mpu();
                let mut rng = rng_for(
                    cfg.seed,
                    &[SHUFFLE_STREAM, epoch as u64, m.first as u64, m.second as u64],
                );
                idx.shuffle(&mut rng);
                idx
            })
            .collect();
        let n_batches: Vec<usize> = data.iter().map(|d| d.train.len().div_ceil(cfg.batch_size)).collect();
        let rounds = n_batches.iter().copied().max().unwrap_or(0);
        let mut loss_sum = 0.0;
        let mut loss_n = 0usize;
        let mut batch_no = 0;
        for round in 0..rounds {
            for (k, d) in data.iter().enumerate() {
                if round >= n_batches[k] {
                    continue;
                }
                batch_no += 1;
                let lo = round * cfg.batch_size;
                let hi = (lo + cfg.batch_size).min(d.train.len());
                let batch: Vec<[usize; 3]> = orders[k][lo..hi]
                    .iter()
                    .map(|&i| {
                        let t = d.train[i as usize];
                        [t[0] as usize, t[1] as usize, t[2] as usize]
                    })
                    .collect();
                let mut tape = Tape::new();
                tape.set_checked(false);
                let out = forward_mpu(&mut tape, &model, graph, &d.sub, &d.table, &enc)?;
                let loss = skipgram_loss(&mut tape, out.zi, &batch)?;
                let value = tape.value(loss).item();
                tape.backward(loss)?;
                let grads = tape.param_gradients(&model.params);
                let max_grad = grads.max_abs();
                if !value.is_finite() || !max_grad.is_finite() {
                    return Err(Error::NanLoss {
                        epoch,
                        batch: batch_no,
                        max_grad,
                    });
                }
                adam.step(&mut model.params, &grads, &frozen);
                steps += 1;
                loss_sum += value * batch.len() as f64;
                loss_n += batch.len();
            }
        }
        let train_loss = if loss_n > 0 { loss_sum / loss_n as f64 } else { 0.0 };

        let mut val_sum = 0.0;
        let mut val_n = 0usize;
        for d in data {
            if d.val.is_empty() {
                continue;
            }
            let zi = materialize(graph, &model, &d.sub, &d.table, &enc)?;
            val_sum += skipgram_loss_value(&zi, &d.val) * d.val.len() as f64;
            val_n += d.val.len();
        }
        let val_loss = if val_n > 0 { val_sum / val_n as f64 } else { train_loss };
        if !val_loss.is_finite() {
            return Err(Error::NanLoss {
                epoch,
                batch: batch_no,
                max_grad: f64::NAN,
            });
        }
        info!("epoch {epoch}: train loss {train_loss:.6}, validation loss {val_loss:.6}");
        epochs.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });

        let improved = best.as_ref().is_none_or(|(b, _, _)| val_loss < *b);
        if improved {
            best = Some((val_loss, model.params.clone(), epoch));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                info!("early stop at epoch {epoch}: no improvement for {since_best} epochs");
                stopped_early = true;
                break;
            }
        }
    }

    let best_epoch = match best {
        Some((_, params, e)) => {
            let updates = model.params.update_count();
            model.params = params;
            model.params.set_update_count(updates);
            e
        }
        None => 0,
    };
    let ckpt = Checkpoint::assemble(graph, cfg, model, data)?;
    Ok((
        ckpt,
        TrainReport {
            epochs,
            best_epoch,
            stopped_early,
            steps,
        },
    ))
}
