//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `cargo test -p mpu-embed --test acceptance` runs all of them; numbers
//! given after `--` select a subset. Criterion 8 reads HGB files from the
//! directory named by `HGB_DATA_DIR` (subdirectories `LastFM` and `DBLP`)
//! and is skipped when they are absent.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use mpu_embed::autodiff::{grad_check_params, masked_softmax_rows, ParamSet, Tape, Tensor, Var};
use mpu_embed::encoder::forward_mpu;
use mpu_embed::hetgraph::{load_hgb, write_hgb};
use mpu_embed::query::{
    auc_pairwise, auc_rank_sum, bench_adhoc, export_embeddings, link_auc_mrr, link_prediction, mrr_grouped,
    recall_ndcg, topk, LinkEvalConfig,
};
use mpu_embed::semantics::{cascaded_integrate, cumulative_integrate, integrate_all, inter_mpu_attention, softmax};
use mpu_embed::synthetic::{generate, SyntheticConfig};
use mpu_embed::trainer::{encoder_config, prepare, skipgram_loss, train, train_prepared, untrained, MpuData};
use mpu_embed::{
    Checkpoint, EmbeddingStore, HetGraph, IntegrationMode, MetaPath, NodeId, QueryPlan, Result, TrainConfig, TypeSchema,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// pinned tolerances and thresholds
const GRAD_REL_ERR: f64 = 1e-4;
const GRAD_H: f64 = 1e-5;
const GRAD_SECS: f64 = 60.0;
const NORM_TOL: f64 = 1e-9;
const SHIFT_TOL: f64 = 1e-12;
const FORWARD_PASSES: u64 = 1000;
const TRAINED_AUC: f64 = 0.90;
const UNTRAINED_AUC: (f64, f64) = (0.45, 0.55);
const LEARNING_SEEDS: [u64; 3] = [0, 1, 2];
const LEARNING_SECS: f64 = 300.0;
const SPEEDUP: f64 = 20.0;
const METRIC_TOL: f64 = 1e-9;
const METRIC_INSTANCES: usize = 100;
const TOY_MODELS: u64 = 50;
const LASTFM: (usize, usize) = (20612, 141521);
const DBLP: (usize, usize) = (26128, 239566);

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn synthetic(types: &[&str], nodes_per_type: usize, seed: u64) -> HetGraph {
    generate(&SyntheticConfig {
        type_names: types.iter().map(|s| s.to_string()).collect(),
        nodes_per_type,
        seed,
        ..SyntheticConfig::default()
    })
    .expect("synthetic graph")
    .graph
}

fn tiny_config(dim: usize, seed: u64) -> TrainConfig {
    let mut c = TrainConfig {
        embed_dim: dim,
        max_epochs: 2,
        patience: 2,
        batch_size: 256,
        seed,
        ..TrainConfig::default()
    };
    c.walk.walks_per_node = 3;
    c.walk.walk_length = 10;
    c.walk.window = 3;
    c.walk.negatives = 2;
    c.walk.default_k = 5;
    c
}

/// Settings of the learning-signal experiment, scaled for a single-core
/// desk run: few large steps instead of many small ones.
fn learning_config(seed: u64) -> TrainConfig {
    let mut c = TrainConfig {
        embed_dim: 16,
        learning_rate: 0.05,
        max_epochs: 20,
        patience: 5,
        batch_size: 8192,
        seed,
        ..TrainConfig::default()
    };
    c.walk.walks_per_node = 10;
    c.walk.walk_length = 20;
    c.walk.window = 3;
    c.walk.negatives = 1;
    c
}

fn with_ablation(mut c: TrainConfig, intra_off: bool, inter_off: bool) -> TrainConfig {
    c.disable_intra_attention = intra_off;
    c.disable_inter_attention = inter_off;
    c
}

fn ama(schema: &dyn TypeSchema) -> QueryPlan {
    QueryPlan::parse(IntegrationMode::Cascaded, &["AMA"], schema).expect("AMA parses")
}

// ---------------------------------------------------------------- 1

fn gradient_check(intra_off: bool, inter_off: bool) -> Result<(f64, String, f64)> {
    let start = Instant::now();
    let g = generate(&SyntheticConfig {
        nodes_per_type: 5,
        p_intra: 0.6,
        p_inter: 0.1,
        seed: 6,
        ..SyntheticConfig::default()
    })?
    .graph;
    assert_eq!(g.num_nodes(), 10);
    let cfg = with_ablation(tiny_config(8, 3), intra_off, inter_off);
    let data = prepare(&g, &cfg)?;
    let base = untrained(&g, &cfg, &data)?.model;
    let d = &data[0];
    let batch: Vec<[usize; 3]> = d
        .train
        .iter()
        .take(64)
        .map(|t| [t[0] as usize, t[1] as usize, t[2] as usize])
        .collect();
    let enc = encoder_config(&cfg);
    let f = |tape: &mut Tape, ps: &ParamSet| -> Result<Var> {
        let mut m = base.clone();
        m.params = ps.clone();
        let out = forward_mpu(tape, &m, &g, &d.sub, &d.table, &enc)?;
        skipgram_loss(tape, out.zi, &batch)
    };
    let (err, name) = grad_check_params(f, &base.params, GRAD_H)?;
    Ok((err, name, start.elapsed().as_secs_f64()))
}

fn criterion_1() -> Result<Verdict> {
    let (err, name, secs) = gradient_check(false, false)?;
    Ok(verdict(
        err < GRAD_REL_ERR && secs < GRAD_SECS,
        format!("max rel err {err:.2e} at {name} (< {GRAD_REL_ERR:.0e}), {secs:.1}s (< {GRAD_SECS}s)"),
    ))
}

// ---------------------------------------------------------------- 2

struct NormStats {
    alpha_err: f64,
    beta_err: f64,
    alpha_shift: f64,
    beta_shift: f64,
    alpha_rows: usize,
    beta_nodes: usize,
}

fn normalization(intra_off: bool, inter_off: bool, passes: u64) -> Result<NormStats> {
    let g = synthetic(&["A", "M", "D"], 6, 11);
    let base = with_ablation(tiny_config(8, 0), intra_off, inter_off);
    let data = prepare(&g, &base)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0xA77E);
    let mut s = NormStats {
        alpha_err: 0.0,
        beta_err: 0.0,
        alpha_shift: 0.0,
        beta_shift: 0.0,
        alpha_rows: 0,
        beta_nodes: 0,
    };
    for pass in 0..passes {
        // a fresh random initialization per pass
        let cfg = TrainConfig {
            seed: pass,
            ..base.clone()
        };
        let ckpt = untrained(&g, &cfg, &data)?;
        let enc = encoder_config(&cfg);
        for d in &data {
            let mut tape = Tape::new();
            let out = forward_mpu(&mut tape, &ckpt.model, &g, &d.sub, &d.table, &enc)?;
            let Some(alpha) = out.attention.alpha else { continue };
            let a = tape.value(alpha);
            let (n, w) = (a.shape()[0], a.shape()[1]);
            for i in 0..n {
                if !out.attention.mask[i * w] {
                    continue;
                }
                let sum: f64 = a.row(i).iter().sum();
                s.alpha_err = s.alpha_err.max((sum - 1.0).abs());
                s.alpha_rows += 1;
            }
            if let Some(logits) = out.attention.logits {
                let l = tape.value(logits);
                let c = rng.random_range(-50.0..50.0);
                let shifted = Tensor::new(l.shape().to_vec(), l.data().iter().map(|x| x + c).collect())?;
                let b = masked_softmax_rows(&shifted, Some(&out.attention.mask));
                for (x, y) in a.data().iter().zip(b.data()) {
                    s.alpha_shift = s.alpha_shift.max((x - y).abs());
                }
            }
        }
        let store = EmbeddingStore::from_checkpoint(&ckpt)?;
        for v in 0..g.num_nodes() {
            if store.node_mpus(v).is_empty() {
                continue;
            }
            let w = inter_mpu_attention(&store, v)?;
            s.beta_err = s.beta_err.max((w.beta.iter().sum::<f64>() - 1.0).abs());
            s.beta_nodes += 1;
            if !store.uniform_beta() {
                let c = rng.random_range(-50.0..50.0);
                let shifted: Vec<f64> = w.logits.iter().map(|l| l + c).collect();
                for (x, y) in w.beta.iter().zip(softmax(&shifted)) {
                    s.beta_shift = s.beta_shift.max((x - y).abs());
                }
            }
        }
    }
    Ok(s)
}

fn norm_verdict(s: &NormStats) -> Verdict {
    verdict(
        s.alpha_err < NORM_TOL && s.beta_err < NORM_TOL && s.alpha_shift < SHIFT_TOL && s.beta_shift < SHIFT_TOL,
        format!(
            "max |Σα−1| {:.1e} over {} rows, max |Σβ−1| {:.1e} over {} nodes, shift drift α {:.1e} β {:.1e}",
            s.alpha_err, s.alpha_rows, s.beta_err, s.beta_nodes, s.alpha_shift, s.beta_shift
        ),
    )
}

fn criterion_2() -> Result<Verdict> {
    Ok(norm_verdict(&normalization(false, false, FORWARD_PASSES)?))
}

// ---------------------------------------------------------------- 3

fn learning_graph(seed: u64) -> HetGraph {
    generate(&SyntheticConfig {
        seed,
        ..SyntheticConfig::default()
    })
    .expect("synthetic graph")
    .graph
}

/// Store whose `Zi` rows are the Xavier-initialized per-node vectors
/// themselves, with no encoder pass: the structure-free baseline.
fn xavier_store(ckpt: &Checkpoint) -> Result<EmbeddingStore> {
    let table = ckpt.model.params.get(ckpt.model.node_embed);
    let blocks = ckpt
        .embeddings
        .iter()
        .map(|(m, e)| {
            let rows: Vec<f64> = e.nodes.iter().flat_map(|&v| table.row(v).to_vec()).collect();
            Ok((*m, e.nodes.clone(), Tensor::matrix(e.nodes.len(), table.cols(), rows)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let q = ckpt.model.params.get(ckpt.model.inter_q).data().to_vec();
    EmbeddingStore::from_parts(
        ckpt.type_names.clone(),
        ckpt.node_types.clone(),
        blocks,
        ckpt.tables.clone(),
        q,
        ckpt.config.leaky_slope,
        ckpt.config.disable_inter_attention,
    )
}

fn criterion_3() -> Result<Verdict> {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for seed in LEARNING_SEEDS {
        let g = learning_graph(seed);
        let cfg = learning_config(seed);
        let data: Vec<MpuData> = prepare(&g, &cfg)?;
        let plan = ama(&g);
        let eval = LinkEvalConfig {
            seed,
            ..LinkEvalConfig::default()
        };
        let auc =
            |store: &EmbeddingStore| -> Result<f64> { Ok(link_prediction(store, &g, &plan, &eval)?.0.auc.unwrap()) };
        let (trained, report) = train_prepared(&g, &cfg, &data)?;
        let auc_t = auc(&EmbeddingStore::from_checkpoint(&trained)?)?;
        let init = untrained(&g, &cfg, &data)?;
        let auc_x = auc(&xavier_store(&init)?)?;
        // informational: random weights pushed through the encoder already
        // carry neighborhood structure
        let auc_e = auc(&EmbeddingStore::from_checkpoint(&init)?)?;
        let pass = auc_t >= TRAINED_AUC && (UNTRAINED_AUC.0..=UNTRAINED_AUC.1).contains(&auc_x);
        ok &= pass;
        parts.push(format!(
            "seed {seed}: trained {auc_t:.3} ({} epochs), Xavier {auc_x:.3}, untrained encoder {auc_e:.3}",
            report.epochs.len()
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < LEARNING_SECS;
    Ok(verdict(
        ok,
        format!(
            "{}; need trained ≥ {TRAINED_AUC}, Xavier in [{}, {}]; {secs:.1}s (< {LEARNING_SECS}s)",
            parts.join("; "),
            UNTRAINED_AUC.0,
            UNTRAINED_AUC.1
        ),
    ))
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Result<Verdict> {
    let g = learning_graph(0);
    let cfg = learning_config(0);
    let (ckpt, _) = train(&g, &cfg)?;
    let store = EmbeddingStore::from_checkpoint(&ckpt)?;
    // a path the store has never served
    let plan = QueryPlan::parse(IntegrationMode::Cascaded, &["MAMAM"], &store)?;
    let r = bench_adhoc(&store, &g, &[plan], &cfg)?;
    Ok(verdict(
        r.speedup >= SPEEDUP && r.updates_during_reconstruction == 0 && r.repeat_identical,
        format!(
            "retrain {:.3}s, reconstruct {:.5}s, speedup {:.0}x (≥ {SPEEDUP}x), updates {}",
            r.retrain_secs, r.reconstruct_secs[0].1, r.speedup, r.updates_during_reconstruction
        ),
    ))
}

// ---------------------------------------------------------------- 5

fn oracle_recall_ndcg(ranked: &[NodeId], relevant: &BTreeSet<NodeId>, k: usize) -> (f64, f64) {
    let top: Vec<NodeId> = ranked.iter().copied().take(k).collect();
    let hits = top.iter().filter(|v| relevant.contains(v)).count();
    let mut dcg = 0.0;
    for (i, v) in top.iter().enumerate() {
        if relevant.contains(v) {
            dcg += 1.0 / (i as f64 + 2.0).log2();
        }
    }
    let mut idcg = 0.0;
    for i in 0..k.min(relevant.len()) {
        idcg += 1.0 / (i as f64 + 2.0).log2();
    }
    (hits as f64 / relevant.len() as f64, dcg / idcg)
}

fn oracle_auc(pos: &[f64], neg: &[f64]) -> f64 {
    // probability that a random positive outranks a random negative
    let mut total = 0.0;
    for p in pos {
        let below = neg.iter().filter(|n| *n < p).count() as f64;
        let tied = neg.iter().filter(|n| *n == p).count() as f64;
        total += below + tied / 2.0;
    }
    total / (pos.len() * neg.len()) as f64
}

fn oracle_rr(pos: f64, negs: &[f64]) -> f64 {
    // sort descending with the positive placed after every tie
    let mut all: Vec<(f64, bool)> = negs.iter().map(|&n| (n, false)).collect();
    all.push((pos, true));
    all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let rank = all.iter().position(|x| x.1).unwrap() + 1;
    1.0 / rank as f64
}

fn criterion_5() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    let mut worst: f64 = 0.0;
    for _ in 0..METRIC_INSTANCES {
        let n = rng.random_range(2..=50);
        let mut ranked: Vec<NodeId> = (0..n).collect();
        for i in (1..n).rev() {
            ranked.swap(i, rng.random_range(0..=i));
        }
        let relevant: BTreeSet<NodeId> = (0..n).filter(|_| rng.random_bool(0.3)).collect();
        let k = rng.random_range(1..=n);
        if !relevant.is_empty() {
            let (r, g) = recall_ndcg(&ranked, &relevant, k)?;
            let (ro, go) = oracle_recall_ndcg(&ranked, &relevant, k);
            worst = worst.max((r - ro).abs()).max((g - go).abs());
        }
        // coarse scores force ties
        let np = rng.random_range(1..=25);
        let nn = rng.random_range(1..=25);
        let pos: Vec<f64> = (0..np).map(|_| rng.random_range(0..8) as f64 / 8.0).collect();
        let neg: Vec<f64> = (0..nn).map(|_| rng.random_range(0..8) as f64 / 8.0).collect();
        let auc_o = oracle_auc(&pos, &neg);
        worst = worst
            .max((auc_pairwise(&pos, &neg)? - auc_o).abs())
            .max((auc_rank_sum(&pos, &neg)? - auc_o).abs());
        let groups: Vec<(f64, Vec<f64>)> = pos.iter().map(|&p| (p, neg.clone())).collect();
        let mrr_o = pos.iter().map(|&p| oracle_rr(p, &neg)).sum::<f64>() / np as f64;
        worst = worst.max((mrr_grouped(&groups)? - mrr_o).abs());
    }
    let rel7: BTreeSet<NodeId> = [7].into();
    let worked = recall_ndcg(&[3, 7], &rel7, 2)? == (1.0, 1.0 / 3f64.log2())
        && link_auc_mrr(&[0.9], &[0.1, 0.2])? == (1.0, 1.0)
        && link_auc_mrr(&[0.1], &[0.9])? == (0.0, 0.5)
        && auc_pairwise(&[0.5], &[0.5])? == 0.5;
    Ok(verdict(
        worst <= METRIC_TOL && worked,
        format!("{METRIC_INSTANCES} instances, max deviation {worst:.1e} (≤ {METRIC_TOL:.0e}), worked values exact: {worked}"),
    ))
}

// ---------------------------------------------------------------- 6

fn cosine_oracle(x: &[f64], y: &[f64]) -> f64 {
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny: f64 = y.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        0.0
    } else {
        dot / (nx * ny)
    }
}

fn criterion_6() -> Result<Verdict> {
    let mut mismatches = 0usize;
    let mut checked = 0usize;
    let texts = ["AM", "MA", "AMD", "DMA", "AMA", "MDM", "AMDMA", "DMAMD"];
    for seed in 0..TOY_MODELS {
        let g = synthetic(&["A", "M", "D"], 8, seed);
        let (ckpt, _) = train(&g, &tiny_config(4, seed))?;
        let store = EmbeddingStore::from_checkpoint(&ckpt)?;
        for text in texts {
            let p: MetaPath = mpu_embed::hetgraph::parse_meta_path(text, &store)?;
            for a in store.nodes_of_type(p.start_type()) {
                if store.node_mpus(a).is_empty() {
                    continue;
                }
                let c = cascaded_integrate(&store, &p, a)?;
                let u = cumulative_integrate(&store, std::slice::from_ref(&p), a)?;
                let same = c.iter().zip(&u).all(|(x, y)| x.to_bits() == y.to_bits());
                mismatches += usize::from(!same);
                checked += 1;
            }
        }
    }

    // top-K against an exhaustive cosine sort on an 8-node instance
    let g = generate(&SyntheticConfig {
        nodes_per_type: 4,
        p_intra: 0.9,
        p_inter: 0.3,
        seed: 3,
        ..SyntheticConfig::default()
    })?
    .graph;
    let (ckpt, _) = train(&g, &tiny_config(4, 3))?;
    let store = EmbeddingStore::from_checkpoint(&ckpt)?;
    let mut order_ok = g.num_nodes() == 8;
    for text in ["AMA", "AM", "MAM"] {
        let plan = QueryPlan::parse(IntegrationMode::Cascaded, &[text], &store)?;
        let anchors = integrate_all(&store, &plan)?;
        let cands = if plan.paths()[0].is_symmetric() {
            anchors.clone()
        } else {
            integrate_all(&store, &plan.reversed()?)?
        };
        for (a, za) in &anchors {
            let mut want: Vec<(NodeId, f64)> = cands
                .iter()
                .filter(|(c, _)| c != a)
                .map(|(c, zc)| (*c, cosine_oracle(za, zc)))
                .collect();
            want.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
            let got = topk(&store, *a, &plan, 8)?;
            order_ok &= got.ids() == want.iter().map(|x| x.0).collect::<Vec<_>>();
        }
    }
    Ok(verdict(
        mismatches == 0 && order_ok,
        format!(
            "{checked} anchor/path pairs over {TOY_MODELS} models, {mismatches} bit mismatches; top-K order matches exhaustive sort: {order_ok}"
        ),
    ))
}

// ---------------------------------------------------------------- 7

fn pipeline_bytes(dir: &std::path::Path, cfg: &TrainConfig) -> Result<(Vec<u8>, Vec<u8>, Vec<u8>)> {
    let (g, _) = load_hgb(dir)?;
    let data = prepare(&g, cfg)?;
    let mut corpus = Vec::new();
    for d in &data {
        d.corpus.write_to(&mut corpus).unwrap();
    }
    let (ckpt, _) = train_prepared(&g, cfg, &data)?;
    let bytes = ckpt.to_bytes()?;
    let store = EmbeddingStore::from_checkpoint(&ckpt)?;
    let mut export = Vec::new();
    export_embeddings(&mut export, &integrate_all(&store, &ama(&store))?).unwrap();
    Ok((corpus, bytes, export))
}

fn criterion_7() -> Result<Verdict> {
    let tmp = tempfile::tempdir().expect("temp dir");
    let s = generate(&SyntheticConfig {
        nodes_per_type: 40,
        seed: 9,
        ..SyntheticConfig::default()
    })?;
    write_hgb(&s.graph, tmp.path(), Some(&s.labels))?;
    let cfg = TrainConfig {
        max_epochs: 4,
        patience: 4,
        ..tiny_config(8, 21)
    };
    let a = pipeline_bytes(tmp.path(), &cfg)?;
    let b = pipeline_bytes(tmp.path(), &cfg)?;
    let (c, k, e) = (a.0 == b.0, a.1 == b.1, a.2 == b.2);
    Ok(verdict(
        c && k && e && !a.0.is_empty(),
        format!(
            "corpus {} bytes identical: {c}; checkpoint {} bytes identical: {k}; export {} bytes identical: {e}",
            a.0.len(),
            a.1.len(),
            a.2.len()
        ),
    ))
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Result<Verdict> {
    let Some(root) = std::env::var_os("HGB_DATA_DIR").map(PathBuf::from) else {
        return Ok(Verdict::Skip("HGB_DATA_DIR not set; LastFM/DBLP files absent".into()));
    };
    let mut parts = Vec::new();
    let mut ok = true;
    let mut found = 0;
    for (name, want) in [("LastFM", LASTFM), ("DBLP", DBLP)] {
        let dir = root.join(name);
        if !dir.join("node.dat").is_file() {
            parts.push(format!("{name}: absent"));
            continue;
        }
        found += 1;
        let (_, summary) = load_hgb(&dir)?;
        let got = (summary.nodes, summary.edges);
        ok &= got == want;
        parts.push(format!("{name}: {}/{} (want {}/{})", got.0, got.1, want.0, want.1));
    }
    if found == 0 {
        return Ok(Verdict::Skip(format!("no HGB files under {}", root.display())));
    }
    Ok(verdict(ok, parts.join("; ")))
}

// ---------------------------------------------------------------- 9

fn criterion_9() -> Result<Verdict> {
    // weight inspection on trained ablated models
    let g = synthetic(&["A", "M", "D"], 8, 5);
    let intra_cfg = with_ablation(tiny_config(8, 1), true, false);
    let data = prepare(&g, &intra_cfg)?;
    let (ckpt, _) = train_prepared(&g, &intra_cfg, &data)?;
    let enc = encoder_config(&intra_cfg);
    let mut alpha_uniform = 0.0f64;
    for d in &data {
        let mut tape = Tape::new();
        let out = forward_mpu(&mut tape, &ckpt.model, &g, &d.sub, &d.table, &enc)?;
        let a = tape.value(out.attention.alpha.expect("alpha present"));
        let w = out.attention.width;
        for (i, row) in out.sequences.iter().enumerate() {
            for j in 0..w {
                let want = if j < row.len() { 1.0 / row.len() as f64 } else { 0.0 };
                alpha_uniform = alpha_uniform.max((a.data()[i * w + j] - want).abs());
            }
        }
    }
    let inter_cfg = with_ablation(tiny_config(8, 1), false, true);
    let (ckpt, _) = train(&g, &inter_cfg)?;
    let store = EmbeddingStore::from_checkpoint(&ckpt)?;
    let mut beta_uniform = 0.0f64;
    for v in 0..g.num_nodes() {
        let mpus = store.node_mpus(v);
        if mpus.is_empty() {
            continue;
        }
        for b in inter_mpu_attention(&store, v)?.beta {
            beta_uniform = beta_uniform.max((b - 1.0 / mpus.len() as f64).abs());
        }
    }

    // criteria 1 and 2 again under each ablation
    let mut parts = vec![format!(
        "α uniform within {alpha_uniform:.1e}, β uniform within {beta_uniform:.1e}"
    )];
    let mut ok = alpha_uniform == 0.0 && beta_uniform == 0.0;
    for (label, intra, inter) in [("no-intra", true, false), ("no-inter", false, true)] {
        let (err, name, secs) = gradient_check(intra, inter)?;
        let norm = normalization(intra, inter, FORWARD_PASSES)?;
        let pass1 = err < GRAD_REL_ERR && secs < GRAD_SECS;
        let pass2 = matches!(norm_verdict(&norm), Verdict::Pass(_));
        ok &= pass1 && pass2;
        parts.push(format!(
            "{label}: grad err {err:.1e} at {name}, Σα err {:.1e}, Σβ err {:.1e}",
            norm.alpha_err, norm.beta_err
        ));
    }
    Ok(verdict(ok, parts.join("; ")))
}

// ----------------------------------------------------------------

type Check = fn() -> Result<Verdict>;

const CRITERIA: [(u32, &str, Check); 9] = [
    (1, "gradient correctness", criterion_1),
    (2, "attention normalization", criterion_2),
    (3, "learning signal", criterion_3),
    (4, "retraining-free reconstruction", criterion_4),
    (5, "metric oracles", criterion_5),
    (6, "integration consistency", criterion_6),
    (7, "determinism", criterion_7),
    (8, "data fidelity", criterion_8),
    (9, "ablation plumbing", criterion_9),
];

fn main() -> ExitCode {
    let selected: BTreeSet<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, check) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let v = check().unwrap_or_else(|e| Verdict::Fail(format!("error: {e}")));
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match v {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("criterion {id} ({name}): {tag} [{secs:.1}s] {detail}");
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
