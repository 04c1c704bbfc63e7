use std::collections::BTreeMap;

use proptest::prelude::*;

use super::*;
use crate::autodiff::Tensor;
use crate::hetgraph::{parse_meta_path, Edge, HetGraph, TypeId, TypeSchema};
use crate::sampler::{NeighborTable, TypedNeighbors};

const LN3: f64 = 1.098_612_288_668_109_8;

fn table(mpu: Mpu, rows: &[(NodeId, TypeId, &[NodeId])]) -> NeighborTable {
    let mut t = NeighborTable::new(mpu);
    for &(v, ty, nb) in rows {
        t.insert(
            v,
            vec![TypedNeighbors {
                ty,
                neighbors: nb.iter().map(|&n| (n, 1)).collect(),
            }],
        );
    }
    t
}

struct Fixture {
    store: EmbeddingStore,
    names: Vec<String>,
    am: Mpu,
    ax: Mpu,
    dm: Mpu,
}

// Types A=0, M=1, D=2, X=3. Nodes: a=0 (A), m=1 (M), m2=2 (M), d=3 (D), x=4 (X).
// a lives in (A,M) and (A,X); m in (A,M) and (D,M).
fn fixture() -> Fixture {
    let names: Vec<String> = ["A", "M", "D", "X"].iter().map(|s| s.to_string()).collect();
    let node_types = vec![0, 1, 1, 2, 3];
    let am = Mpu { first: 0, second: 1 };
    let ax = Mpu { first: 0, second: 3 };
    let dm = Mpu { first: 2, second: 1 };
    let m2 = |rows: &[[f64; 2]]| Tensor::matrix(rows.len(), 2, rows.iter().flatten().copied().collect()).unwrap();
    let blocks = vec![
        (am, vec![0, 1, 2], m2(&[[1.0, 2.0], [2.0 - LN3, 0.0], [0.3, -0.4]])),
        (ax, vec![0, 4], m2(&[[1.0 + LN3, 0.0], [0.5, 0.5]])),
        (dm, vec![1, 2, 3], m2(&[[2.0, 2.0], [0.7, 0.1], [-0.2, 0.9]])),
    ];
    let mut tables = BTreeMap::new();
    tables.insert(am, table(am, &[(0, 1, &[1]), (1, 0, &[0]), (2, 0, &[0])]));
    tables.insert(ax, table(ax, &[(0, 3, &[4]), (4, 0, &[0])]));
    tables.insert(dm, table(dm, &[(1, 2, &[3]), (2, 2, &[3]), (3, 1, &[1, 2])]));
    let store =
        EmbeddingStore::from_parts(names.clone(), node_types, blocks, tables, vec![1.0, 0.0], 0.01, false).unwrap();
    Fixture {
        store,
        names,
        am,
        ax,
        dm,
    }
}

// Schema graph with the same types and MPUs, used for parsing paths.
fn schema(extra_mpu: bool) -> HetGraph {
    let mut edges = vec![
        Edge {
            src: 0,
            dst: 1,
            relation: 0,
        },
        Edge {
            src: 0,
            dst: 4,
            relation: 1,
        },
        Edge {
            src: 3,
            dst: 1,
            relation: 2,
        },
    ];
    if extra_mpu {
        edges.push(Edge {
            src: 3,
            dst: 4,
            relation: 3,
        });
    }
    let names = ["A", "M", "D", "X"].iter().map(|s| s.to_string()).collect();
    HetGraph::new(vec![0, 1, 1, 2, 3], names, edges, Vec::new()).unwrap()
}

#[test]
fn weights_trivial_cases() {
    let rows: Vec<&[f64]> = vec![&[1.0, 2.0], &[-3.0, 0.5]];
    assert_eq!(inter_mpu_weights(&[0.0, 0.0], &rows, 0.01), vec![0.5, 0.5]);
    assert_eq!(inter_mpu_weights(&[0.3, 0.1], &rows[..1], 0.01), vec![1.0]);
    let b = softmax(&[0.0, 4f64.ln()]);
    assert!((b[0] - 0.2).abs() < 1e-15 && (b[1] - 0.8).abs() < 1e-15);
}

#[test]
fn store_beta_matches_attention_and_is_normalized() {
    let f = fixture();
    let w = inter_mpu_attention(&f.store, 0).unwrap();
    assert_eq!(w.mpus, vec![f.am, f.ax]);
    assert!((w.beta[0] - 0.25).abs() < 1e-12);
    assert!((w.beta[1] - 0.75).abs() < 1e-12);
    for v in 0..5 {
        let w = inter_mpu_attention(&f.store, v).unwrap();
        assert!((w.beta.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (m, b) in w.mpus.iter().zip(&w.beta) {
            assert_eq!(f.store.beta(m, v).unwrap(), *b);
        }
    }
}

#[test]
fn cascaded_hand_chain() {
    let f = fixture();
    let path = parse_meta_path("AMD", &schema(false)).unwrap();
    let chain = relay_chain(&f.store, 0, &path).unwrap();
    assert!((chain[0][0] - 0.25).abs() < 1e-12 && (chain[0][1] - 0.5).abs() < 1e-12);
    assert!((chain[1][0] - 1.5).abs() < 1e-12 && (chain[1][1] - 1.5).abs() < 1e-12);
    let z = cascaded_integrate(&f.store, &path, 0).unwrap();
    assert!((z[0] - 0.375).abs() < 1e-12 && (z[1] - 0.75).abs() < 1e-12);
}

#[test]
fn single_bridge_uses_its_own_weight() {
    let f = fixture();
    let path = parse_meta_path("AMD", &schema(false)).unwrap();
    let chain = relay_chain(&f.store, 0, &path).unwrap();
    let beta = f.store.beta(&f.dm, 1).unwrap();
    let zi = f.store.zi(&f.dm, 1).unwrap().to_vec();
    assert_eq!(chain[1], vec![beta * zi[0], beta * zi[1]]);
}

#[test]
fn one_unit_path_is_weighted_row() {
    let f = fixture();
    let path = parse_meta_path("AM", &schema(false)).unwrap();
    let z = cascaded_integrate(&f.store, &path, 0).unwrap();
    let b = f.store.beta(&f.am, 0).unwrap();
    assert_eq!(z, vec![b * 1.0, b * 2.0]);
}

#[test]
fn empty_bridge_gives_zero() {
    let f = fixture();
    // drop m2's row from the (A,M) table so MAX has nothing to relay through
    let mut tables = BTreeMap::new();
    for m in [f.am, f.ax, f.dm] {
        tables.insert(m, f.store.table(&m).unwrap().clone());
    }
    tables.insert(f.am, table(f.am, &[(0, 1, &[1]), (1, 0, &[0])]));
    let blocks = [f.am, f.ax, f.dm]
        .iter()
        .map(|m| {
            let nodes = f.store.mpu_nodes(m).unwrap().to_vec();
            let rows: Vec<f64> = nodes.iter().flat_map(|&v| f.store.zi(m, v).unwrap().to_vec()).collect();
            (*m, nodes.clone(), Tensor::matrix(nodes.len(), 2, rows).unwrap())
        })
        .collect();
    let store = EmbeddingStore::from_parts(
        f.names.clone(),
        vec![0, 1, 1, 2, 3],
        blocks,
        tables,
        vec![1.0, 0.0],
        0.01,
        false,
    )
    .unwrap();
    let path = parse_meta_path("MAX", &schema(false)).unwrap();
    let chain = relay_chain(&store, 2, &path).unwrap();
    assert_eq!(chain[1], vec![0.0, 0.0]);
    assert_eq!(cascaded_integrate(&store, &path, 2).unwrap(), vec![0.0, 0.0]);
}

#[test]
fn cumulative_of_one_path_is_cascaded_bit_for_bit() {
    let f = fixture();
    let g = schema(false);
    for text in ["AM", "AMD", "AMA", "AXA", "AMDMA"] {
        let p = parse_meta_path(text, &g).unwrap();
        let c = cascaded_integrate(&f.store, &p, 0).unwrap();
        let u = cumulative_integrate(&f.store, std::slice::from_ref(&p), 0).unwrap();
        let cb: Vec<u64> = c.iter().map(|x| x.to_bits()).collect();
        let ub: Vec<u64> = u.iter().map(|x| x.to_bits()).collect();
        assert_eq!(cb, ub, "{text}");
        let twice = cumulative_integrate(&f.store, &[p.clone(), p.clone()], 0).unwrap();
        for (a, b) in twice.iter().zip(&c) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}

#[test]
fn cumulative_two_paths_hand_mean() {
    let f = fixture();
    let g = schema(false);
    let ama = parse_meta_path("AMA", &g).unwrap();
    let amdma = parse_meta_path("AMDMA", &g).unwrap();
    let s = &f.store;
    // AMA → first half (A,M): β·Zi_a
    let b_a = s.beta(&f.am, 0).unwrap();
    let z1 = [b_a * 1.0, b_a * 2.0];
    // AMDMA → (A,M),(M,D); bridge of a is m=1 only
    let b_m = s.beta(&f.dm, 1).unwrap();
    let z2 = [z1[0] * b_m * 2.0, z1[1] * b_m * 2.0];
    let want = [(z1[0] + z2[0]) / 2.0, (z1[1] + z2[1]) / 2.0];
    let got = cumulative_integrate(s, &[ama, amdma], 0).unwrap();
    assert!((got[0] - want[0]).abs() < 1e-12 && (got[1] - want[1]).abs() < 1e-12);
}

#[test]
fn bridges_are_averaged() {
    let f = fixture();
    let path = parse_meta_path("DMA", &schema(false)).unwrap();
    // d=3 has M-neighbors {1, 2} in (D,M); both bridge into (A,M)
    let chain = relay_chain(&f.store, 3, &path).unwrap();
    let s = &f.store;
    let mb = (s.beta(&f.am, 1).unwrap() + s.beta(&f.am, 2).unwrap()) / 2.0;
    let z1 = s.zi(&f.am, 1).unwrap().to_vec();
    let z2 = s.zi(&f.am, 2).unwrap().to_vec();
    for k in 0..2 {
        assert!((chain[1][k] - mb * (z1[k] + z2[k]) / 2.0).abs() < 1e-12);
    }
}

#[test]
fn untrained_mpu_is_named() {
    let f = fixture();
    let g = schema(true);
    let path = parse_meta_path("AXD", &g).unwrap();
    match cascaded_integrate(&f.store, &path, 0) {
        Err(Error::UntrainedMpu(label)) => assert_eq!(label, "(D,X)"),
        other => panic!("expected UntrainedMpu, got {other:?}"),
    }
    // parsing against the store itself rejects the unknown pair up front
    assert!(matches!(parse_meta_path("AXD", &f.store), Err(Error::Connectivity(..))));
    assert!(f.store.types_connected(0, 1));
}

#[test]
fn reconstruction_touches_only_path_mpus() {
    let f = fixture();
    let path = parse_meta_path("AMA", &schema(false)).unwrap();
    f.store.reset_access_counts();
    let plan = QueryPlan::cascaded(path);
    integrate_all(&f.store, &plan).unwrap();
    let counts = f.store.access_counts();
    assert!(counts[&f.am] > 0);
    assert_eq!(counts[&f.ax], 0);
    assert_eq!(counts[&f.dm], 0);
}

#[test]
fn metapath_free_cases() {
    let f = fixture();
    // node 3 (D) lives only in (D,M)
    assert_eq!(
        metapath_free_embedding(&f.store, 3).unwrap(),
        f.store.zi(&f.dm, 3).unwrap().to_vec()
    );
    let z = metapath_free_embedding(&f.store, 0).unwrap();
    let want = [0.25 * 1.0 + 0.75 * (1.0 + LN3), 0.25 * 2.0];
    assert!((z[0] - want[0]).abs() < 1e-12 && (z[1] - want[1]).abs() < 1e-12);
    assert!(matches!(
        metapath_free_embedding(&f.store, 99),
        Err(Error::NodeNotInStore(99))
    ));
}

#[test]
fn uniform_beta_when_inter_attention_is_off() {
    let f = fixture();
    let blocks = [f.am, f.ax, f.dm]
        .iter()
        .map(|m| {
            let nodes = f.store.mpu_nodes(m).unwrap().to_vec();
            let rows: Vec<f64> = nodes.iter().flat_map(|&v| f.store.zi(m, v).unwrap().to_vec()).collect();
            (*m, nodes.clone(), Tensor::matrix(nodes.len(), 2, rows).unwrap())
        })
        .collect();
    let tables = [f.am, f.ax, f.dm]
        .iter()
        .map(|m| (*m, f.store.table(m).unwrap().clone()))
        .collect();
    let store = EmbeddingStore::from_parts(
        f.names.clone(),
        vec![0, 1, 1, 2, 3],
        blocks,
        tables,
        vec![1.0, 0.0],
        0.01,
        true,
    )
    .unwrap();
    let w = inter_mpu_attention(&store, 0).unwrap();
    assert_eq!(w.beta, vec![0.5, 0.5]);
    let z = metapath_free_embedding(&store, 0).unwrap();
    assert!((z[0] - (1.0 + 1.0 + LN3) / 2.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn beta_normalized_and_shift_invariant(
        logits in prop::collection::vec(-20.0f64..20.0, 1..6),
        shift in -100.0f64..100.0,
    ) {
        let a = softmax(&logits);
        let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
        let b = softmax(&shifted);
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn scaling_q_keeps_unit_mass(
        q in prop::collection::vec(-2.0f64..2.0, 3),
        rows in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 1..5),
        c in 0.1f64..10.0,
    ) {
        let r: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let qc: Vec<f64> = q.iter().map(|x| x * c).collect();
        prop_assert!((inter_mpu_weights(&qc, &r, 0.01).iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
