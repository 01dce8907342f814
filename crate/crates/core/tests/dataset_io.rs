use std::path::PathBuf;

use csna::csbm::{sample_csbm, CsbmParams};
use csna::dataset::{load_graph, read_meta, save_graph};
use csna::error::Error;
use csna::graph::{add_self_loops, edge_homophily, Graph};
use csna::splits::{generate_splits, SplitSet, DEFAULT_RATIOS, DEFAULT_SPLIT_COUNT, DEFAULT_SPLIT_SEED};
use csna::tensor::Tensor;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn two_node_fixture_loads() {
    let g = load_graph(fixture("pair")).unwrap();
    assert_eq!((g.num_nodes(), g.edges().len(), g.feature_dim(), g.num_classes()), (2, 2, 2, 2));
    assert_eq!(g.features().row(1), &[1.5, 0.25]);
    assert_eq!(edge_homophily(&g), 0.0);
    assert_eq!(read_meta(fixture("pair")).unwrap().name, "pair");
}

#[test]
fn out_of_range_edge_is_a_parse_error_with_its_line() {
    match load_graph(fixture("bad_edge")) {
        Err(e @ Error::Parse { .. }) => {
            let msg = e.to_string();
            assert!(msg.contains("edges.csv") && msg.contains('3'), "{msg}");
        }
        other => panic!("expected a parse error, got {other:?}"),
    }
    assert!(load_graph(fixture("missing")).is_err());
}

#[test]
fn self_loop_insertion() {
    let g = load_graph(fixture("path5")).unwrap();
    let looped = add_self_loops(&g);
    assert_eq!(looped.edges().len(), 2 * 4 + 5);
    assert!(looped.has_self_loops());
    assert_eq!(add_self_loops(&looped).edges(), looped.edges());
    let empty = Graph::from_undirected("empty", Tensor::zeros(3, 1), vec![0, 0, 0], 1, &[]).unwrap();
    assert_eq!(add_self_loops(&empty).edges(), &[(0, 0), (1, 1), (2, 2)]);
    assert_eq!(edge_homophily(&g), 0.0);
    let one_class = Graph::from_undirected("same", Tensor::zeros(3, 1), vec![0, 0, 0], 1, &[(0, 1), (1, 2)]).unwrap();
    assert_eq!(edge_homophily(&one_class), 1.0);
}

#[test]
fn protocol_split_sizes() {
    let ten = generate_splits(10, DEFAULT_RATIOS, DEFAULT_SPLIT_COUNT, DEFAULT_SPLIT_SEED).unwrap();
    assert_eq!(ten.len(), 10);
    assert!(ten.splits.iter().all(|s| s.sizes() == (6, 2, 2)));
    let texas_sized = generate_splits(183, DEFAULT_RATIOS, 10, 42).unwrap();
    assert!(texas_sized.splits.iter().all(|s| s.sizes() == (109, 36, 38)));
    assert!(generate_splits(2, DEFAULT_RATIOS, 1, 42).is_err());
    assert!(generate_splits(10, [0.5, 0.2, 0.2], 1, 42).is_err());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("splits.json");
    texas_sized.save(&path).unwrap();
    assert_eq!(SplitSet::load(&path).unwrap(), texas_sized);
}

#[test]
fn saved_graphs_reload_exactly() {
    let g = sample_csbm(
        &CsbmParams {
            n: 120,
            p: 0.1,
            q: 0.2,
            ..CsbmParams::default()
        },
        3,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_graph(&g, dir.path()).unwrap();
    let back = load_graph(dir.path()).unwrap();
    assert_eq!(back.edges(), g.edges());
    assert_eq!(back.labels(), g.labels());
    let bits = |t: &Tensor<f64>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(back.features()), bits(g.features()));
    assert_eq!(back.name(), g.name());
}
