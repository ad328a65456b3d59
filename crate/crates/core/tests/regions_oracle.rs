mod common;

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use smartpacket::regions::{enumerate_full_regions, FullRegion};
use smartpacket::topology::{builtin_fixture, NetworkGraph};

fn as_sets(found: &[FullRegion]) -> BTreeSet<(BTreeSet<u16>, BTreeSet<u16>)> {
    found
        .iter()
        .map(|r| {
            (
                r.switches.iter().map(|v| v.0).collect(),
                r.nodes.iter().map(|v| v.0).collect(),
            )
        })
        .collect()
}

fn agrees(g: &NetworkGraph) {
    let found = enumerate_full_regions(g).unwrap();
    assert_eq!(as_sets(&found).len(), found.len(), "duplicate regions");
    assert_eq!(
        as_sets(&found),
        common::oracle_full_regions(g),
        "graph:\n{}",
        g.to_text()
    );
}

#[test]
fn matches_oracle_on_dense_and_sparse_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..120 {
        agrees(&common::random_graph(&mut rng, 10));
    }
}

#[test]
fn matches_oracle_on_fixtures() {
    for name in ["fig1a", "fig1b", "fig2", "fig3"] {
        agrees(&builtin_fixture(name).unwrap());
    }
}

#[test]
fn bcube_like_overlap() {
    // Two switches sharing two nodes, each with a private node as well.
    let mut g = NetworkGraph::new();
    for s in [1, 2] {
        g.add_switch(s).unwrap();
    }
    for n in 10..14 {
        g.add_node(n).unwrap();
    }
    for (a, b) in [(1, 10), (1, 11), (1, 12), (2, 11), (2, 12), (2, 13)] {
        g.connect(a, b).unwrap();
    }
    let found = as_sets(&enumerate_full_regions(&g).unwrap());
    let set = |v: &[u16]| v.iter().copied().collect::<BTreeSet<u16>>();
    assert_eq!(
        found,
        BTreeSet::from([
            (set(&[1]), set(&[10, 11, 12])),
            (set(&[2]), set(&[11, 12, 13])),
            (set(&[1, 2]), set(&[11, 12])),
        ])
    );
    agrees(&g);
}

#[test]
fn switches_without_nodes_form_no_region() {
    let mut g = NetworkGraph::new();
    g.add_switch(1).unwrap();
    g.add_switch(2).unwrap();
    g.connect(1, 2).unwrap();
    assert!(enumerate_full_regions(&g).unwrap().is_empty());
    agrees(&g);
}
