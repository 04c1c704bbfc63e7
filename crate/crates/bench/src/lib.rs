//! Shared fixtures for the benchmarks.

use mpu_embed::synthetic::{generate, SyntheticConfig};
use mpu_embed::trainer::{prepare, train_prepared, MpuData};
use mpu_embed::{Checkpoint, EmbeddingStore, HetGraph, TrainConfig};

pub struct Fixture {
    pub graph: HetGraph,
    pub config: TrainConfig,
    pub data: Vec<MpuData>,
    pub checkpoint: Checkpoint,
    pub store: EmbeddingStore,
}

/// Three-type planted graph (A–M–D) with a briefly trained model.
pub fn fixture(nodes_per_type: usize) -> Fixture {
    let graph = generate(&SyntheticConfig {
        type_names: vec!["A".into(), "M".into(), "D".into()],
        nodes_per_type,
        ..SyntheticConfig::default()
    })
    .expect("synthetic graph")
    .graph;
    let mut config = TrainConfig {
        embed_dim: 16,
        max_epochs: 2,
        patience: 2,
        batch_size: 4096,
        learning_rate: 0.05,
        ..TrainConfig::default()
    };
    config.walk.walks_per_node = 5;
    config.walk.walk_length = 15;
    config.walk.window = 2;
    config.walk.negatives = 1;
    let data = prepare(&graph, &config).expect("prepare");
    let (checkpoint, _) = train_prepared(&graph, &config, &data).expect("train");
    let store = EmbeddingStore::from_checkpoint(&checkpoint).expect("store");
    Fixture {
        graph,
        config,
        data,
        checkpoint,
        store,
    }
}
