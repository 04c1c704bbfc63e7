//! Inter-MPU attention and meta-path embedding reconstruction.
//!
//! A meta-path embedding is rebuilt from frozen per-MPU embeddings only:
//!
//! - `β^ψ_a = softmax_ψ(LeakyReLU(q · Zi^ψ_a))` over the MPUs holding `a`;
//! - the first chain factor is `β^{ψ1}_a · Zi^{ψ1}_a`;
//! - later factors are relayed through bridge nodes: the top-k neighbors
//!   (of the shared type) of the previous bridges, starting from `{a}`.
//!   Factor `i` is `mean β^{ψi}_b · mean Zi^{ψi}_b` over the bridges `b`;
//! - cascaded integration multiplies the factors elementwise, cumulative
//!   integration averages the cascaded products of several paths.
//!
//! Symmetric paths such as `AMDMA` use their first half `(A,M),(D,M)` only.
//! Nothing here writes to the store.

use std::collections::BTreeSet;

use log::warn;

use crate::error::{Error, Result};
use crate::hetgraph::{IntegrationMode, MetaPath, Mpu, NodeId, QueryPlan};
use crate::query::EmbeddingStore;

pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// `softmax(LeakyReLU(q · z))` over the given `Zi` rows of one node.
pub fn inter_mpu_weights(q: &[f64], rows: &[&[f64]], slope: f64) -> Vec<f64> {
    let logits: Vec<f64> = rows.iter().map(|z| leaky_relu(dot(q, z), slope)).collect();
    softmax(&logits)
}

/// `β` of one node over the MPUs that contain it.
#[derive(Clone, Debug, PartialEq)]
pub struct MpuWeights {
    pub node: NodeId,
    pub mpus: Vec<Mpu>,
    pub logits: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Recomputes `β` for `a` from `q` and its `Zi` rows.
pub fn inter_mpu_attention(store: &EmbeddingStore, a: NodeId) -> Result<MpuWeights> {
    let mpus = store.node_mpus(a);
    if mpus.is_empty() {
        return Err(Error::NodeNotInStore(a));
    }
    let rows = mpus.iter().map(|m| store.zi(m, a)).collect::<Result<Vec<_>>>()?;
    let logits: Vec<f64> = rows
        .iter()
        .map(|z| leaky_relu(dot(store.q(), z), store.leaky_slope()))
        .collect();
    let beta = if store.uniform_beta() {
        vec![1.0 / mpus.len() as f64; mpus.len()]
    } else {
        softmax(&logits)
    };
    Ok(MpuWeights {
        node: a,
        mpus,
        logits,
        beta,
    })
}

fn scaled(z: &[f64], c: f64) -> Vec<f64> {
    z.iter().map(|x| c * x).collect()
}

/// Chain factors `Zw^1 … Zw^u` of `a` along the path's integration units.
pub fn relay_chain(store: &EmbeddingStore, a: NodeId, path: &MetaPath) -> Result<Vec<Vec<f64>>> {
    let units = path.integration_units();
    for u in units {
        store.require_trained(&u.mpu)?;
    }
    let first = units[0];
    let mut chain = vec![scaled(store.zi(&first.mpu, a)?, store.beta(&first.mpu, a)?)];
    let mut bridges = vec![a];
    for i in 1..units.len() {
        let (prev, unit) = (units[i - 1], units[i]);
        let table = store.table(&prev.mpu)?;
        let next: BTreeSet<NodeId> = bridges
            .iter()
            .flat_map(|&b| table.neighbors(b, prev.to).iter().map(|&(n, _)| n))
            .collect();
        if next.is_empty() {
            warn!(
                "node {a}, path {}: no bridge nodes for unit {}, factor set to zero",
                path,
                store.mpu_label(&unit.mpu)
            );
            chain.push(vec![0.0; store.dim()]);
            bridges.clear();
            continue;
        }
        bridges = next.into_iter().collect();
        let n = bridges.len() as f64;
        let mut mean_z = vec![0.0; store.dim()];
        let mut mean_beta = 0.0;
        for &b in &bridges {
            for (m, z) in mean_z.iter_mut().zip(store.zi(&unit.mpu, b)?) {
                *m += z;
            }
            mean_beta += store.beta(&unit.mpu, b)?;
        }
        mean_beta /= n;
        chain.push(mean_z.into_iter().map(|z| mean_beta * (z / n)).collect());
    }
    Ok(chain)
}

/// Elementwise product of the chain factors.
pub fn hadamard(chain: &[Vec<f64>]) -> Vec<f64> {
    let mut out = chain[0].clone();
    for f in &chain[1..] {
        for (o, x) in out.iter_mut().zip(f) {
            *o *= x;
        }
    }
    out
}

fn check_anchor(store: &EmbeddingStore, a: NodeId, path: &MetaPath) -> Result<()> {
    let t = store.node_type(a)?;
    if t != path.start_type() {
        return Err(Error::Config(format!(
            "node {a} has type {} but meta-path {path} starts at {}",
            store.type_names()[t],
            store.type_names()[path.start_type()]
        )));
    }
    Ok(())
}

pub fn cascaded_integrate(store: &EmbeddingStore, path: &MetaPath, a: NodeId) -> Result<Vec<f64>> {
    check_anchor(store, a, path)?;
    Ok(hadamard(&relay_chain(store, a, path)?))
}

/// `(1/|φ|) Σ_j` cascaded product of path `j`.
pub fn cumulative_integrate(store: &EmbeddingStore, paths: &[MetaPath], a: NodeId) -> Result<Vec<f64>> {
    if paths.is_empty() {
        return Err(Error::Config(
            "cumulative integration needs at least one meta-path".into(),
        ));
    }
    for p in paths {
        for u in p.integration_units() {
            store.require_trained(&u.mpu)?;
        }
    }
    let mut sum = cascaded_integrate(store, &paths[0], a)?;
    for p in &paths[1..] {
        for (s, x) in sum.iter_mut().zip(cascaded_integrate(store, p, a)?) {
            *s += x;
        }
    }
    let n = paths.len() as f64;
    Ok(sum.into_iter().map(|s| s / n).collect())
}

pub fn integrate(store: &EmbeddingStore, plan: &QueryPlan, a: NodeId) -> Result<Vec<f64>> {
    match plan.mode() {
        IntegrationMode::Cascaded => cascaded_integrate(store, &plan.paths()[0], a),
        IntegrationMode::Cumulative => cumulative_integrate(store, plan.paths(), a),
    }
}

/// Embeddings of every anchor-type node present in the first unit's MPU,
/// ascending by id.
pub fn integrate_all(store: &EmbeddingStore, plan: &QueryPlan) -> Result<Vec<(NodeId, Vec<f64>)>> {
    for p in plan.paths() {
        for u in p.integration_units() {
            store.require_trained(&u.mpu)?;
        }
    }
    let first = plan.paths()[0].units()[0].mpu;
    let anchor = plan.anchor_type();
    store
        .mpu_nodes(&first)?
        .iter()
        .copied()
        .filter(|&v| store.node_type(v).ok() == Some(anchor))
        .map(|v| Ok((v, integrate(store, plan, v)?)))
        .collect()
}

/// `Σ_ψ β^ψ_a Zi^ψ_a` over every MPU holding `a`.
pub fn metapath_free_embedding(store: &EmbeddingStore, a: NodeId) -> Result<Vec<f64>> {
    let mpus = store.node_mpus(a);
    if mpus.is_empty() {
        return Err(Error::NodeNotInStore(a));
    }
    let mut out = vec![0.0; store.dim()];
    for m in &mpus {
        let b = store.beta(m, a)?;
        for (o, z) in out.iter_mut().zip(store.zi(m, a)?) {
            *o += b * z;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
