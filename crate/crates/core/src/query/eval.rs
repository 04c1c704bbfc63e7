use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use log::warn;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;

use super::metrics::{auc_pairwise, f1_scores, mrr_grouped, recall_ndcg, MetricReport};
use super::{EmbeddingStore, QueryIndex};
use crate::error::{Error, Result};
use crate::hetgraph::{HetGraph, NodeId, QueryPlan};
use crate::semantics::{integrate_all, metapath_free_embedding};
use crate::trainer::{train, TrainConfig};
use crate::util::rng_for;

const LINK_STREAM: u64 = 0x4c49_4e4b;
const QUERY_STREAM: u64 = 0x5155_4552;
const CLASS_STREAM: u64 = 0x434c_5353;

#[derive(Clone, Debug, PartialEq)]
pub struct LinkEvalConfig {
    pub positives: usize,
    pub negatives_per_positive: usize,
    pub seed: u64,
}

impl Default for LinkEvalConfig {
    fn default() -> Self {
        Self {
            positives: 500,
            negatives_per_positive: 100,
            seed: 0,
        }
    }
}

/// Meta-path instance counts from `a` to every end node, summed over the
/// plan's paths. `a` itself is dropped.
fn instance_counts(graph: &HetGraph, plan: &QueryPlan, a: NodeId) -> BTreeMap<NodeId, u64> {
    let mut out = BTreeMap::new();
    for p in plan.paths() {
        for (c, n) in graph.path_instance_counts(p.types(), a) {
            *out.entry(c).or_insert(0) += n;
        }
    }
    out.remove(&a);
    out
}

/// Positive pairs drawn proportionally to meta-path instance counts, each
/// with its own negatives: end-type nodes sharing no instance with the anchor.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkSample {
    pub positives: Vec<(NodeId, NodeId)>,
    pub negatives: Vec<Vec<NodeId>>,
}

impl LinkSample {
    pub fn draw(
        graph: &HetGraph,
        plan: &QueryPlan,
        anchors: &[NodeId],
        candidates: &[NodeId],
        cfg: &LinkEvalConfig,
    ) -> Result<Self> {
        if cfg.positives == 0 || cfg.negatives_per_positive == 0 {
            return Err(Error::Eval(
                "positives and negatives per positive must be at least 1".into(),
            ));
        }
        let cand: BTreeSet<NodeId> = candidates.iter().copied().collect();
        let mut pairs = Vec::new();
        let mut weights = Vec::new();
        let mut counts = BTreeMap::new();
        for &a in anchors {
            let c = instance_counts(graph, plan, a);
            for (&v, &n) in &c {
                if cand.contains(&v) {
                    pairs.push((a, v));
                    weights.push(n as f64);
                }
            }
            counts.insert(a, c);
        }
        if pairs.is_empty() {
            return Err(Error::Eval(
                "no meta-path instances connect anchors and candidates".into(),
            ));
        }
        let dist = WeightedIndex::new(&weights).map_err(|e| Error::Eval(e.to_string()))?;
        let mut rng = rng_for(cfg.seed, &[LINK_STREAM]);
        let mut positives = Vec::with_capacity(cfg.positives);
        let mut negatives = Vec::with_capacity(cfg.positives);
        let mut skipped = 0;
        for _ in 0..cfg.positives {
            let (a, c) = pairs[dist.sample(&mut rng)];
            let pool: Vec<NodeId> = candidates
                .iter()
                .copied()
                .filter(|&v| v != a && !counts[&a].contains_key(&v))
                .collect();
            if pool.is_empty() {
                skipped += 1;
                continue;
            }
            let negs = (0..cfg.negatives_per_positive)
                .map(|_| pool[rng.random_range(0..pool.len())])
                .collect();
            positives.push((a, c));
            negatives.push(negs);
        }
        if skipped > 0 {
            warn!("{skipped} sampled positives had no non-linked candidates and were dropped");
        }
        if positives.is_empty() {
            return Err(Error::Eval("every anchor is linked to every candidate".into()));
        }
        Ok(Self { positives, negatives })
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Dot-product scores; exact AUC over all positive/negative pairs and MRR of
/// each positive against its own negatives.
pub fn link_prediction_with_embeddings(
    anchors: &BTreeMap<NodeId, Vec<f64>>,
    candidates: &BTreeMap<NodeId, Vec<f64>>,
    sample: &LinkSample,
) -> Result<MetricReport> {
    let get = |m: &BTreeMap<NodeId, Vec<f64>>, v: NodeId| -> Result<Vec<f64>> {
        m.get(&v)
            .cloned()
            .ok_or_else(|| Error::Eval(format!("node {v} has no embedding")))
    };
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    let mut groups = Vec::new();
    for (&(a, c), negs) in sample.positives.iter().zip(&sample.negatives) {
        let za = get(anchors, a)?;
        let p = dot(&za, &get(candidates, c)?);
        let ns = negs
            .iter()
            .map(|&n| Ok(dot(&za, &get(candidates, n)?)))
            .collect::<Result<Vec<f64>>>()?;
        pos.push(p);
        neg.extend_from_slice(&ns);
        groups.push((p, ns));
    }
    Ok(MetricReport {
        auc: Some(auc_pairwise(&pos, &neg)?),
        mrr: Some(mrr_grouped(&groups)?),
        ..MetricReport::default()
    })
}

/// Link prediction under `plan`; returns the metrics and the sample used.
pub fn link_prediction(
    store: &EmbeddingStore,
    graph: &HetGraph,
    plan: &QueryPlan,
    cfg: &LinkEvalConfig,
) -> Result<(MetricReport, LinkSample)> {
    let index = QueryIndex::build(store, plan)?;
    let anchors = index.anchors.clone();
    let candidates: BTreeMap<NodeId, Vec<f64>> = index.candidates.into_iter().collect();
    let a: Vec<NodeId> = anchors.keys().copied().collect();
    let c: Vec<NodeId> = candidates.keys().copied().collect();
    let sample = LinkSample::draw(graph, plan, &a, &c, cfg)?;
    Ok((link_prediction_with_embeddings(&anchors, &candidates, &sample)?, sample))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalConfig {
    pub k: usize,
    /// Number of query nodes; 0 means every anchor.
    pub queries: usize,
    pub seed: u64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            k: 20,
            queries: 100,
            seed: 0,
        }
    }
}

/// Mean Recall@K / NDCG@K. Relevant items are same-label candidates when
/// labels are given, otherwise the K candidates with the most meta-path
/// instances shared with the query.
pub fn retrieval(
    store: &EmbeddingStore,
    graph: &HetGraph,
    plan: &QueryPlan,
    labels: Option<&BTreeMap<NodeId, usize>>,
    cfg: &RetrievalConfig,
) -> Result<MetricReport> {
    let index = QueryIndex::build(store, plan)?;
    let mut queries: Vec<NodeId> = index.anchors.keys().copied().collect();
    if let Some(l) = labels {
        queries.retain(|v| l.contains_key(v));
    }
    if cfg.queries > 0 && cfg.queries < queries.len() {
        let mut rng = rng_for(cfg.seed, &[QUERY_STREAM]);
        queries.shuffle(&mut rng);
        queries.truncate(cfg.queries);
        queries.sort_unstable();
    }
    let (mut recall, mut ndcg, mut n) = (0.0, 0.0, 0usize);
    for &a in &queries {
        let relevant: BTreeSet<NodeId> = match labels {
            Some(l) => index
                .candidates
                .iter()
                .map(|(c, _)| *c)
                .filter(|&c| c != a && l.get(&c) == l.get(&a))
                .collect(),
            None => {
                let mut counts: Vec<(NodeId, u64)> = instance_counts(graph, plan, a).into_iter().collect();
                counts.sort_by(|x, y| y.1.cmp(&x.1).then(x.0.cmp(&y.0)));
                counts.into_iter().take(cfg.k).map(|(c, _)| c).collect()
            }
        };
        if relevant.is_empty() {
            continue;
        }
        let ranked = index.topk(a, cfg.k)?;
        let (r, g) = recall_ndcg(&ranked.ids(), &relevant, cfg.k)?;
        recall += r;
        ndcg += g;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Eval("no query node has a relevant candidate".into()));
    }
    Ok(MetricReport {
        k: Some(cfg.k),
        recall_at_k: Some(recall / n as f64),
        ndcg_at_k: Some(ndcg / n as f64),
        ..MetricReport::default()
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifyConfig {
    pub train_fraction: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            epochs: 300,
            learning_rate: 0.5,
            seed: 0,
        }
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for x in z.iter_mut() {
        *x = (*x - m).exp();
        s += *x;
    }
    for x in z.iter_mut() {
        *x /= s;
    }
}

/// Multinomial logistic regression by full-batch gradient descent on a
/// seeded split; returns (micro-F1, macro-F1) on the held-out part.
pub fn classify_embeddings(
    embeddings: &[(NodeId, Vec<f64>)],
    labels: &BTreeMap<NodeId, usize>,
    cfg: &ClassifyConfig,
) -> Result<(f64, f64)> {
    let mut items: Vec<(&[f64], usize)> = embeddings
        .iter()
        .filter_map(|(v, z)| labels.get(v).map(|&l| (z.as_slice(), l)))
        .collect();
    let classes: Vec<usize> = items.iter().map(|x| x.1).collect::<BTreeSet<_>>().into_iter().collect();
    if classes.len() < 2 {
        return Err(Error::Eval("classification needs at least two labeled classes".into()));
    }
    let mut rng = rng_for(cfg.seed, &[CLASS_STREAM]);
    items.shuffle(&mut rng);
    let n_train = ((items.len() as f64 * cfg.train_fraction).round() as usize).clamp(1, items.len() - 1);
    let (train_set, test_set) = items.split_at(n_train);
    let present: BTreeSet<usize> = train_set.iter().map(|x| x.1).collect();
    if let Some(c) = classes.iter().find(|c| !present.contains(c)) {
        return Err(Error::Eval(format!("class {c} does not occur in the training split")));
    }
    let slot: BTreeMap<usize, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let d = train_set[0].0.len();
    let k = classes.len();
    let mut w = vec![0.0; k * d];
    let mut b = vec![0.0; k];
    let scores = |w: &[f64], b: &[f64], x: &[f64]| -> Vec<f64> {
        (0..k).map(|c| b[c] + dot(&w[c * d..(c + 1) * d], x)).collect()
    };
    let n = train_set.len() as f64;
    for _ in 0..cfg.epochs {
        let mut gw = vec![0.0; k * d];
        let mut gb = vec![0.0; k];
        for &(x, l) in train_set {
            let mut p = scores(&w, &b, x);
            softmax_in_place(&mut p);
            p[slot[&l]] -= 1.0;
            for c in 0..k {
                gb[c] += p[c];
                for j in 0..d {
                    gw[c * d + j] += p[c] * x[j];
                }
            }
        }
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= cfg.learning_rate * g / n;
        }
        for (bi, g) in b.iter_mut().zip(&gb) {
            *bi -= cfg.learning_rate * g / n;
        }
    }
    let truth: Vec<usize> = test_set.iter().map(|x| x.1).collect();
    let pred: Vec<usize> = test_set
        .iter()
        .map(|&(x, _)| {
            let s = scores(&w, &b, x);
            let best = (0..k).fold(0, |bi, c| if s[c] > s[bi] { c } else { bi });
            classes[best]
        })
        .collect();
    f1_scores(&truth, &pred)
}

/// Node classification on plan embeddings, or on meta-path-free
/// embeddings of every labeled node when no plan is given.
pub fn classify(
    store: &EmbeddingStore,
    plan: Option<&QueryPlan>,
    labels: &BTreeMap<NodeId, usize>,
    cfg: &ClassifyConfig,
) -> Result<MetricReport> {
    let emb: Vec<(NodeId, Vec<f64>)> = match plan {
        Some(p) => integrate_all(store, p)?,
        None => labels
            .keys()
            .filter(|&&v| !store.node_mpus(v).is_empty())
            .map(|&v| Ok((v, metapath_free_embedding(store, v)?)))
            .collect::<Result<_>>()?,
    };
    let (micro, macro_) = classify_embeddings(&emb, labels, cfg)?;
    Ok(MetricReport {
        micro_f1: Some(micro),
        macro_f1: Some(macro_),
        ..MetricReport::default()
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub retrain_secs: f64,
    /// (rendered plan, seconds to rebuild every anchor embedding)
    pub reconstruct_secs: Vec<(String, f64)>,
    /// retrain time over mean reconstruction time
    pub speedup: f64,
    pub updates_during_reconstruction: u64,
    pub repeat_identical: bool,
}

impl std::fmt::Display for BenchReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "retrain_secs={:.6}", self.retrain_secs)?;
        for (p, s) in &self.reconstruct_secs {
            writeln!(f, "reconstruct_secs[{p}]={s:.6}")?;
        }
        writeln!(f, "speedup={:.2}", self.speedup)?;
        writeln!(
            f,
            "parameter_updates_during_reconstruction={}",
            self.updates_during_reconstruction
        )?;
        writeln!(f, "repeat_identical={}", self.repeat_identical)
    }
}

/// Times a full retrain against rebuilding each plan's embeddings from the
/// frozen store.
pub fn bench_adhoc(
    store: &EmbeddingStore,
    graph: &HetGraph,
    plans: &[QueryPlan],
    cfg: &TrainConfig,
) -> Result<BenchReport> {
    if plans.is_empty() {
        return Err(Error::Eval("benchmark needs at least one meta-path".into()));
    }
    let before = store.param_update_count();
    let mut reconstruct_secs = Vec::new();
    let mut repeat_identical = true;
    for plan in plans {
        let t = Instant::now();
        let first = integrate_all(store, plan)?;
        reconstruct_secs.push((render(plan), t.elapsed().as_secs_f64()));
        repeat_identical &= integrate_all(store, plan)? == first;
    }
    let updates_during_reconstruction = store.param_update_count() - before;

    let t = Instant::now();
    let _ = train(graph, cfg)?;
    let retrain_secs = t.elapsed().as_secs_f64();

    let mean = reconstruct_secs.iter().map(|x| x.1).sum::<f64>() / reconstruct_secs.len() as f64;
    Ok(BenchReport {
        retrain_secs,
        reconstruct_secs,
        speedup: retrain_secs / mean.max(1e-9),
        updates_during_reconstruction,
        repeat_identical,
    })
}

fn render(plan: &QueryPlan) -> String {
    let paths: Vec<String> = plan.paths().iter().map(|p| p.render()).collect();
    format!("{}:{}", plan.mode(), paths.join("+"))
}
