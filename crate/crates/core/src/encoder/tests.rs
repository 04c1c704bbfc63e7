// oracles index by position on purpose
#![allow(clippy::needless_range_loop)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::grad_check_params;
use crate::hetgraph::{ContentSlot, Edge};
use crate::sampler::TypedNeighbors;

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

// Plain scalar LSTM used as an oracle for the tape version.
fn lstm_oracle(wx: &Tensor, wh: &Tensor, b: &Tensor, xs: &[Vec<f64>], reverse: bool) -> Vec<f64> {
    let hd = b.numel() / 4;
    let din = xs[0].len();
    let mut h = vec![0.0; hd];
    let mut c = vec![0.0; hd];
    let mut acc = vec![0.0; hd];
    let order: Vec<usize> = if reverse {
        (0..xs.len()).rev().collect()
    } else {
        (0..xs.len()).collect()
    };
    for t in order {
        let mut z = b.data().to_vec();
        for (k, zk) in z.iter_mut().enumerate() {
            for i in 0..din {
                *zk += xs[t][i] * wx.data()[i * 4 * hd + k];
            }
            for i in 0..hd {
                *zk += h[i] * wh.data()[i * 4 * hd + k];
            }
        }
        for j in 0..hd {
            let (ig, fg, og, g) = (sig(z[j]), sig(z[hd + j]), sig(z[2 * hd + j]), z[3 * hd + j].tanh());
            c[j] = fg * c[j] + ig * g;
            h[j] = og * c[j].tanh();
            acc[j] += h[j];
        }
    }
    acc.iter().map(|a| a / xs.len() as f64).collect()
}

fn featured_graph(dim: usize) -> HetGraph {
    // A: 0,1,2  B: 3,4 ; nodes 0 and 3 carry content type 0, node 1 carries types 0 and 1
    let slot = |ct: usize, base: f64, d: usize| ContentSlot {
        content_type: ct,
        values: (0..d).map(|i| base + 0.1 * i as f64).collect(),
    };
    let content = vec![
        vec![slot(0, 0.5, dim)],
        vec![slot(1, -0.3, 3), slot(0, 0.2, dim)],
        vec![],
        vec![slot(0, -0.7, dim)],
        vec![],
    ];
    let edges = vec![
        Edge {
            src: 0,
            dst: 3,
            relation: 0,
        },
        Edge {
            src: 1,
            dst: 3,
            relation: 0,
        },
        Edge {
            src: 1,
            dst: 4,
            relation: 0,
        },
        Edge {
            src: 2,
            dst: 4,
            relation: 0,
        },
    ];
    HetGraph::new(vec![0, 0, 0, 1, 1], vec!["A".into(), "B".into()], edges, content).unwrap()
}

fn table_for(sub: &MpuSubgraph, lists: &[(NodeId, Vec<(NodeId, u64)>)]) -> NeighborTable {
    let mut t = NeighborTable::new(sub.mpu());
    for (v, nb) in lists {
        let mut by_type: BTreeMap<usize, Vec<(NodeId, u64)>> = BTreeMap::new();
        for &(b, c) in nb {
            by_type.entry(sub.node_type(b).unwrap()).or_default().push((b, c));
        }
        t.insert(
            *v,
            by_type
                .into_iter()
                .map(|(ty, neighbors)| TypedNeighbors { ty, neighbors })
                .collect(),
        );
    }
    t
}

fn model(g: &HetGraph, dim: usize, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ModelParams::init(g, &g.enumerate_mpus(), dim, &mut rng).unwrap()
}

#[test]
fn identity_projection_returns_content() {
    let g = featured_graph(4);
    let mut m = model(&g, 4, 1);
    let (w, _) = m.projections[&0];
    let eye = m.params.get_mut(w);
    for i in 0..4 {
        for j in 0..4 {
            eye.data_mut()[i * 4 + j] = if i == j { 1.0 } else { 0.0 };
        }
    }
    let mut tape = Tape::new();
    let p = project_content(&mut tape, &m, &g, &[0, 1, 3]).unwrap();
    let src = tape.value(p.source).clone();
    // node 1: slot of type 0 comes before the type-1 slot
    assert_eq!(p.slots[1].len(), 2);
    for (node, row) in [(0usize, p.slots[0][0]), (1, p.slots[1][0]), (3, p.slots[2][0])] {
        assert_eq!(src.row(row), g.content(node)[0].values.as_slice(), "node {node}");
    }
}

#[test]
fn featureless_node_uses_its_embedding_row() {
    let g = featured_graph(4);
    let m = model(&g, 4, 2);
    let mut tape = Tape::new();
    let p = project_content(&mut tape, &m, &g, &[2, 4]).unwrap();
    let src = tape.value(p.source);
    let table = m.params.get(m.node_embed);
    assert_eq!(src.row(p.slots[0][0]), table.row(2));
    assert_eq!(src.row(p.slots[1][0]), table.row(4));
}

#[test]
fn content_bilstm_matches_scalar_oracle() {
    let g = featured_graph(4);
    let m = model(&g, 4, 3);
    let mut tape = Tape::new();
    let nodes = [0, 1, 2];
    let h = aggregate_content(&mut tape, &m, &g, &nodes).unwrap();
    let h = tape.value(h).clone();

    let ps = &m.params;
    let l = &m.content_lstm;
    for (r, &v) in nodes.iter().enumerate() {
        // projected slots by hand
        let xs: Vec<Vec<f64>> = if g.content(v).is_empty() {
            vec![ps.get(m.node_embed).row(v).to_vec()]
        } else {
            g.content(v)
                .iter()
                .map(|s| {
                    let (w, b) = m.projections[&s.content_type];
                    let (w, b) = (ps.get(w), ps.get(b));
                    (0..4)
                        .map(|j| {
                            b.data()[j]
                                + s.values
                                    .iter()
                                    .enumerate()
                                    .map(|(i, x)| x * w.data()[i * 4 + j])
                                    .sum::<f64>()
                        })
                        .collect()
                })
                .collect()
        };
        let f = lstm_oracle(ps.get(l.fwd.w_x), ps.get(l.fwd.w_h), ps.get(l.fwd.bias), &xs, false);
        let b = lstm_oracle(ps.get(l.bwd.w_x), ps.get(l.bwd.w_h), ps.get(l.bwd.bias), &xs, true);
        let want: Vec<f64> = f.into_iter().chain(b).collect();
        for (a, e) in h.row(r).iter().zip(&want) {
            assert!((a - e).abs() < 1e-12, "node {v}: {a} vs {e}");
        }
    }
}

#[test]
fn padding_does_not_change_short_sequences() {
    let g = featured_graph(4);
    let m = model(&g, 4, 4);
    let mut tape = Tape::new();
    let src = tape.constant(Tensor::matrix(4, 4, (0..16).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap());
    let lstm = m.neighbor_lstm.bind(&mut tape, &m.params);
    let batched = bilstm_mean(&mut tape, &lstm, src, &[vec![0, 1, 2, 3], vec![2], vec![3, 1]]).unwrap();
    let alone = bilstm_mean(&mut tape, &lstm, src, &[vec![3, 1]]).unwrap();
    let single = bilstm_mean(&mut tape, &lstm, src, &[vec![2]]).unwrap();
    assert_eq!(tape.value(batched).row(2), tape.value(alone).row(0));
    assert_eq!(tape.value(batched).row(1), tape.value(single).row(0));
}

#[test]
fn attention_weights_and_weighted_sum() {
    let g = featured_graph(4);
    let m = model(&g, 4, 5);
    let sub = g.induce_mpu_subgraph(g.enumerate_mpus()[0]).unwrap();
    // node 1 has two neighbors, node 2 one, node 0 none
    let table = table_for(
        &sub,
        &[(1, vec![(3, 5), (4, 2)]), (2, vec![(4, 1)]), (3, vec![(1, 3), (0, 3)])],
    );
    let mut tape = Tape::new();
    let out = forward_mpu(&mut tape, &m, &g, &sub, &table, &EncoderConfig::default()).unwrap();
    let alpha = tape.value(out.attention.alpha.unwrap()).clone();
    let logits = tape.value(out.attention.logits.unwrap()).clone();
    let q = tape.value(out.q).clone();
    let zi = tape.value(out.zi).clone();
    let u = m.params.get(m.attention[&sub.mpu()]).data().to_vec();
    let w = out.attention.width;
    assert_eq!(w, 2);

    for (i, seq) in out.sequences.iter().enumerate() {
        let row = &alpha.data()[i * w..(i + 1) * w];
        if seq.is_empty() {
            assert!(row.iter().all(|&a| a == 0.0));
            assert!(zi.row(i).iter().all(|&z| z == 0.0));
            continue;
        }
        let raw: Vec<f64> = seq
            .iter()
            .map(|&b| {
                let s: f64 = (0..4).map(|k| u[k] * q.row(i)[k] + u[4 + k] * q.row(b)[k]).sum();
                if s > 0.0 {
                    s
                } else {
                    0.01 * s
                }
            })
            .collect();
        let mx = raw.iter().cloned().fold(f64::MIN, f64::max);
        let z: f64 = raw.iter().map(|r| (r - mx).exp()).sum();
        for (j, r) in raw.iter().enumerate() {
            assert!((logits.data()[i * w + j] - r).abs() < 1e-12);
            assert!((row[j] - (r - mx).exp() / z).abs() < 1e-12);
        }
        assert!(row[seq.len()..].iter().all(|&a| a == 0.0));
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for k in 0..4 {
            let want: f64 = seq.iter().enumerate().map(|(j, &b)| row[j] * q.row(b)[k]).sum();
            assert!((zi.row(i)[k] - want).abs() < 1e-12);
        }
        if seq.len() == 1 {
            assert_eq!(row[0], 1.0);
        }
    }
}

#[test]
fn disabled_attention_is_uniform() {
    let g = featured_graph(4);
    let m = model(&g, 4, 6);
    let sub = g.induce_mpu_subgraph(g.enumerate_mpus()[0]).unwrap();
    let table = table_for(&sub, &[(1, vec![(3, 5), (4, 2)]), (3, vec![(1, 3), (0, 3), (2, 1)])]);
    let cfg = EncoderConfig {
        disable_intra_attention: true,
        ..EncoderConfig::default()
    };
    let mut tape = Tape::new();
    let out = forward_mpu(&mut tape, &m, &g, &sub, &table, &cfg).unwrap();
    assert!(out.attention.logits.is_none());
    let alpha = tape.value(out.attention.alpha.unwrap());
    let w = out.attention.width;
    for (i, seq) in out.sequences.iter().enumerate() {
        for j in 0..w {
            let want = if j < seq.len() { 1.0 / seq.len() as f64 } else { 0.0 };
            assert_eq!(alpha.data()[i * w + j], want);
        }
    }
}

#[test]
fn node_without_neighbors_keeps_content_as_q() {
    let g = featured_graph(4);
    let m = model(&g, 4, 7);
    let sub = g.induce_mpu_subgraph(g.enumerate_mpus()[0]).unwrap();
    let table = table_for(&sub, &[(1, vec![(3, 1)])]);
    let mut tape = Tape::new();
    let out = forward_mpu(&mut tape, &m, &g, &sub, &table, &EncoderConfig::default()).unwrap();
    let i0 = sub.local_index(0).unwrap();
    assert_eq!(tape.value(out.q).row(i0), tape.value(out.h_hat).row(i0));
}

#[test]
fn forward_gradients_match_finite_differences() {
    let g = featured_graph(2);
    let base = model(&g, 2, 8);
    let sub = g.induce_mpu_subgraph(g.enumerate_mpus()[0]).unwrap();
    let table = table_for(
        &sub,
        &[
            (1, vec![(3, 5), (4, 2)]),
            (2, vec![(4, 1)]),
            (3, vec![(1, 3), (0, 3)]),
            (4, vec![(2, 2)]),
        ],
    );
    let f = |tape: &mut Tape, ps: &ParamSet| -> Result<Var> {
        let mut m = base.clone();
        m.params = ps.clone();
        let out = forward_mpu(tape, &m, &g, &sub, &table, &EncoderConfig::default())?;
        let a = tape.gather_rows(out.zi, &[0, 1, 2])?;
        let b = tape.gather_rows(out.zi, &[3, 4, 3])?;
        let s = tape.row_dot(a, b)?;
        let l = tape.log_sigmoid(s)?;
        tape.mean(l)
    };
    let (err, name) = grad_check_params(f, &base.params, 1e-5).unwrap();
    assert!(err < 1e-6, "worst {err} at {name}");
}

#[test]
fn odd_dimension_is_rejected() {
    let g = featured_graph(3);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(ModelParams::init(&g, &g.enumerate_mpus(), 3, &mut rng).is_err());
}
