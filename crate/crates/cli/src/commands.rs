use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use log::info;
use mpu_embed::hetgraph::{load_graph, load_labels, write_hgb};
use mpu_embed::query::{
    bench_adhoc, classify, export_embeddings, link_prediction, retrieval, topk, ClassifyConfig, LinkEvalConfig,
    RetrievalConfig,
};
use mpu_embed::semantics::integrate_all;
use mpu_embed::synthetic::{generate, SyntheticConfig};
use mpu_embed::trainer::{prepare, train_prepared};
use mpu_embed::{
    Checkpoint, EmbeddingStore, Error, GraphFormat, HetGraph, IntegrationMode, NodeId, QueryPlan, Result, TrainConfig,
};

use crate::args::{
    BenchArgs, Cli, Command, EvalArgs, Format, GraphArgs, IngestArgs, Mode, QueryArgs, SynthArgs, Task, TrainArgs,
};

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Train(a) => train(a),
        Command::Query(a) => query(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(a),
        Command::GenSynthetic(a) => gen_synthetic(a),
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Config(format!("{}: {e}", path.display()))
}

fn graph_format(f: Format) -> GraphFormat {
    match f {
        Format::Hgb => GraphFormat::Hgb,
        Format::EdgeList => GraphFormat::EdgeList,
    }
}

fn load(g: &GraphArgs) -> Result<HetGraph> {
    let (graph, summary) = load_graph(&g.graph, graph_format(g.format))?;
    info!(
        "loaded {}: {} nodes, {} edges",
        g.graph.display(),
        summary.nodes,
        summary.edges
    );
    Ok(graph)
}

fn mode(m: Mode) -> IntegrationMode {
    match m {
        Mode::Cascaded => IntegrationMode::Cascaded,
        Mode::Cumulative => IntegrationMode::Cumulative,
    }
}

fn plan(store: &EmbeddingStore, paths: &[String], m: Mode) -> Result<QueryPlan> {
    let texts: Vec<&str> = paths.iter().map(String::as_str).collect();
    QueryPlan::parse(mode(m), &texts, store)
}

fn open_store(path: &Path) -> Result<EmbeddingStore> {
    let ckpt = Checkpoint::load(path)?;
    info!(
        "checkpoint {}: config_hash={} seed={}",
        path.display(),
        ckpt.config_hash,
        ckpt.config.seed
    );
    EmbeddingStore::from_checkpoint(&ckpt)
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    print!("{text}");
    if let Some(p) = out {
        fs::write(p, text).map_err(|e| io_err(p, e))?;
    }
    Ok(())
}

fn ingest(a: IngestArgs) -> Result<()> {
    let (graph, summary) = load_graph(&a.graph.graph, graph_format(a.graph.format))?;
    println!("nodes={}", summary.nodes);
    println!("edges={}", summary.edges);
    for (name, n) in &summary.nodes_per_type {
        println!("nodes[{name}]={n}");
    }
    for m in graph.enumerate_mpus() {
        println!("mpu={}", graph.mpu_label(&m));
    }
    println!("warnings={}", summary.warnings.len());
    Ok(())
}

fn run_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &a.config {
        Some(p) => TrainConfig::from_canonical(&fs::read_to_string(p).map_err(|e| io_err(p, e))?)?,
        None => TrainConfig::default(),
    };
    for kv in &a.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects key=value, got {kv:?}")))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.disable_intra_attention |= a.no_intra_attn;
    cfg.disable_inter_attention |= a.no_inter_attn;
    cfg.validate()?;
    Ok(cfg)
}

fn train(a: TrainArgs) -> Result<()> {
    let cfg = run_config(&a)?;
    info!("config_hash={} seed={}", cfg.hash(), cfg.seed);
    for (k, v) in cfg.entries() {
        info!("config {k} = {v}");
    }
    let graph = load(&a.graph)?;
    let data = prepare(&graph, &cfg)?;
    if let Some(dir) = &a.dump_corpus {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        for d in &data {
            // type labels never contain '-', so this name is unambiguous
            let m = d.sub.mpu();
            let name = format!("{}-{}.walks", d.sub.type_name(m.first), d.sub.type_name(m.second));
            let p = dir.join(name);
            let f = File::create(&p).map_err(|e| io_err(&p, e))?;
            let mut w = BufWriter::new(f);
            d.corpus.write_to(&mut w).map_err(|e| io_err(&p, e))?;
            w.flush().map_err(|e| io_err(&p, e))?;
        }
    }
    let (ckpt, report) = train_prepared(&graph, &cfg, &data)?;
    ckpt.save(&a.out)?;
    if let Some(last) = report.epochs.last() {
        info!(
            "final epoch {}: train_loss={:.6} val_loss={:.6}",
            last.epoch, last.train_loss, last.val_loss
        );
    }
    println!("checkpoint={}", a.out.display());
    println!("epochs={}", report.epochs.len());
    println!("best_epoch={}", report.best_epoch);
    println!("stopped_early={}", report.stopped_early);
    println!("steps={}", report.steps);
    println!("config_hash={}", ckpt.config_hash);
    Ok(())
}

fn query(a: QueryArgs) -> Result<()> {
    let store = open_store(&a.checkpoint)?;
    let p = plan(&store, &a.plan.paths, a.plan.mode)?;
    let ranked = topk(&store, a.node, &p, a.k)?;
    for (rank, (v, s)) in ranked.items.iter().enumerate() {
        println!("{}\t{v}\t{s:.6}", rank + 1);
    }
    if let Some(out) = &a.out {
        let rows = integrate_all(&store, &p)?;
        let f = File::create(out).map_err(|e| io_err(out, e))?;
        let mut w = BufWriter::new(f);
        export_embeddings(&mut w, &rows).map_err(|e| io_err(out, e))?;
        w.flush().map_err(|e| io_err(out, e))?;
        info!("exported {} embeddings to {}", rows.len(), out.display());
    }
    Ok(())
}

fn labels_for(a: &EvalArgs, required: bool) -> Result<Option<BTreeMap<NodeId, usize>>> {
    if let Some(p) = &a.labels {
        return load_labels(p).map(Some);
    }
    let default = a.graph.graph.join("label.dat");
    if required {
        if !default.is_file() {
            return Err(Error::Config(
                "classification needs --labels or a label.dat next to the graph".into(),
            ));
        }
        return load_labels(&default).map(Some);
    }
    Ok(None)
}

fn eval(a: EvalArgs) -> Result<()> {
    info!("eval seed={}", a.seed);
    let store = open_store(&a.checkpoint)?;
    let graph = load(&a.graph)?;
    let need_plan = || -> Result<QueryPlan> {
        if a.paths.is_empty() {
            return Err(Error::Config("this task needs at least one --path".into()));
        }
        plan(&store, &a.paths, a.mode)
    };
    let report = match a.task {
        Task::Link => {
            let cfg = LinkEvalConfig {
                seed: a.seed,
                ..LinkEvalConfig::default()
            };
            link_prediction(&store, &graph, &need_plan()?, &cfg)?.0
        }
        Task::Retrieval => {
            let cfg = RetrievalConfig {
                k: a.k,
                seed: a.seed,
                ..RetrievalConfig::default()
            };
            let labels = labels_for(&a, false)?;
            retrieval(&store, &graph, &need_plan()?, labels.as_ref(), &cfg)?
        }
        Task::Class => {
            let labels = labels_for(&a, true)?.unwrap_or_default();
            let cfg = ClassifyConfig {
                seed: a.seed,
                ..ClassifyConfig::default()
            };
            let p = if a.paths.is_empty() { None } else { Some(need_plan()?) };
            classify(&store, p.as_ref(), &labels, &cfg)?
        }
    };
    emit(&report.to_string(), a.out.as_deref())
}

fn bench(a: BenchArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    info!("config_hash={} seed={}", ckpt.config_hash, ckpt.config.seed);
    let store = EmbeddingStore::from_checkpoint(&ckpt)?;
    let graph = load(&a.graph)?;
    let plans = a
        .paths
        .iter()
        .map(|p| QueryPlan::parse(IntegrationMode::Cascaded, &[p.as_str()], &store))
        .collect::<Result<Vec<_>>>()?;
    let report = bench_adhoc(&store, &graph, &plans, &ckpt.config)?;
    emit(&report.to_string(), a.out.as_deref())
}

fn gen_synthetic(a: SynthArgs) -> Result<()> {
    let cfg = SyntheticConfig {
        type_names: a.types.clone(),
        nodes_per_type: a.nodes_per_type,
        p_intra: a.p_intra,
        p_inter: a.p_inter,
        seed: a.seed,
    };
    info!(
        "seed={} types={} nodes_per_type={} p_intra={} p_inter={}",
        cfg.seed,
        cfg.type_names.join(","),
        cfg.nodes_per_type,
        cfg.p_intra,
        cfg.p_inter
    );
    let g = generate(&cfg)?;
    write_hgb(&g.graph, &a.out, Some(&g.labels))?;
    println!("out={}", a.out.display());
    println!("nodes={}", g.graph.num_nodes());
    println!("edges={}", g.graph.num_edges());
    Ok(())
}
