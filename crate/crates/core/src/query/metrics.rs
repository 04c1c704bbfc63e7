use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::hetgraph::NodeId;

/// Metrics of one evaluation run; absent fields were not computed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub k: Option<usize>,
    pub recall_at_k: Option<f64>,
    pub ndcg_at_k: Option<f64>,
    pub auc: Option<f64>,
    pub mrr: Option<f64>,
    pub micro_f1: Option<f64>,
    pub macro_f1: Option<f64>,
}

impl MetricReport {
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        [
            ("recall_at_k", self.recall_at_k),
            ("ndcg_at_k", self.ndcg_at_k),
            ("auc", self.auc),
            ("mrr", self.mrr),
            ("micro_f1", self.micro_f1),
            ("macro_f1", self.macro_f1),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(k) = self.k {
            writeln!(f, "k={k}")?;
        }
        for (key, v) in self.entries() {
            writeln!(f, "{key}={v:.6}")?;
        }
        Ok(())
    }
}

/// Recall@K and NDCG@K (binary gains, `1/log2(rank+1)` discounts).
pub fn recall_ndcg(ranked: &[NodeId], relevant: &BTreeSet<NodeId>, k: usize) -> Result<(f64, f64)> {
    if relevant.is_empty() {
        return Err(Error::Eval("relevant set is empty".into()));
    }
    if k == 0 {
        return Err(Error::Eval("K must be at least 1".into()));
    }
    let mut hits = 0usize;
    let mut dcg = 0.0;
    for (r, v) in ranked.iter().take(k).enumerate() {
        if relevant.contains(v) {
            hits += 1;
            dcg += 1.0 / ((r + 2) as f64).log2();
        }
    }
    let ideal: f64 = (0..k.min(relevant.len())).map(|r| 1.0 / ((r + 2) as f64).log2()).sum();
    Ok((hits as f64 / relevant.len() as f64, dcg / ideal))
}

fn check_scores(pos: &[f64], neg: &[f64]) -> Result<()> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Eval(
            "AUC needs at least one positive and one negative score".into(),
        ));
    }
    if pos.iter().chain(neg).any(|s| !s.is_finite()) {
        return Err(Error::Eval("scores must be finite".into()));
    }
    Ok(())
}

/// `P(pos > neg)` over all pairs, ties counted one half.
pub fn auc_pairwise(pos: &[f64], neg: &[f64]) -> Result<f64> {
    check_scores(pos, neg)?;
    let mut wins = 0.0;
    for &p in pos {
        for &n in neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (pos.len() as f64 * neg.len() as f64))
}

/// Mann–Whitney form: average ranks over the pooled scores.
pub fn auc_rank_sum(pos: &[f64], neg: &[f64]) -> Result<f64> {
    check_scores(pos, neg)?;
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * all[i..=j].iter().filter(|x| x.1).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Mean reciprocal rank of each positive among its own negatives; a tied
/// negative ranks ahead of the positive.
pub fn mrr_grouped(groups: &[(f64, Vec<f64>)]) -> Result<f64> {
    if groups.is_empty() {
        return Err(Error::Eval("MRR needs at least one positive".into()));
    }
    let total: f64 = groups
        .iter()
        .map(|(p, negs)| 1.0 / (1 + negs.iter().filter(|&&n| n >= *p).count()) as f64)
        .sum();
    Ok(total / groups.len() as f64)
}

/// Exact AUC plus MRR of every positive against the full negative list.
pub fn link_auc_mrr(pos: &[f64], neg: &[f64]) -> Result<(f64, f64)> {
    let auc = auc_pairwise(pos, neg)?;
    let groups: Vec<(f64, Vec<f64>)> = pos.iter().map(|&p| (p, neg.to_vec())).collect();
    Ok((auc, mrr_grouped(&groups)?))
}

/// Micro-F1 (global counts) and macro-F1 (unweighted class mean) over the
/// classes that occur in `truth` or `pred`.
pub fn f1_scores(truth: &[usize], pred: &[usize]) -> Result<(f64, f64)> {
    if truth.len() != pred.len() || truth.is_empty() {
        return Err(Error::Eval("F1 needs equally long, non-empty label lists".into()));
    }
    let classes: BTreeSet<usize> = truth.iter().chain(pred).copied().collect();
    let mut counts: BTreeMap<usize, (f64, f64, f64)> = classes.iter().map(|&c| (c, (0.0, 0.0, 0.0))).collect();
    for (&t, &p) in truth.iter().zip(pred) {
        if t == p {
            counts.get_mut(&t).unwrap().0 += 1.0;
        } else {
            counts.get_mut(&p).unwrap().1 += 1.0;
            counts.get_mut(&t).unwrap().2 += 1.0;
        }
    }
    let f1 = |tp: f64, fp: f64, fn_: f64| {
        let d = 2.0 * tp + fp + fn_;
        if d == 0.0 {
            0.0
        } else {
            2.0 * tp / d
        }
    };
    let (tp, fp, fn_) = counts
        .values()
        .fold((0.0, 0.0, 0.0), |acc, c| (acc.0 + c.0, acc.1 + c.1, acc.2 + c.2));
    let micro = f1(tp, fp, fn_);
    let macro_ = counts.values().map(|c| f1(c.0, c.1, c.2)).sum::<f64>() / counts.len() as f64;
    Ok((micro, macro_))
}
