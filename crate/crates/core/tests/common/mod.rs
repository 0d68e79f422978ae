#![allow(dead_code)]

use hin_embed::graph::{GraphBuilder, HeteroGraph, Schema};
use rand::Rng;

/// Author/paper/venue schema with a same-type co-author relation and a
/// few meta-paths that walk undirected edges in both directions.
pub fn bib_schema() -> Schema {
    let mut s = Schema::new();
    s.add_edge_type("AP", "Author", "Paper", false).unwrap();
    s.add_edge_type("PC", "Paper", "Venue", true).unwrap();
    s.add_edge_type("AA", "Author", "Author", false).unwrap();
    s.add_metapath("APC", &["AP", "PC"]).unwrap();
    s.add_metapath("APA", &["AP", "AP"]).unwrap();
    s.add_metapath("AAP", &["AA", "AP"]).unwrap();
    s.add_metapath("AAPC", &["AA", "AP", "PC"]).unwrap();
    s
}

/// Random graph over [`bib_schema`] with at most `max_nodes` nodes, small
/// integer weights and occasional parallel edges. No self-loops.
pub fn random_graph<R: Rng>(rng: &mut R, max_nodes: usize) -> HeteroGraph {
    let total = rng.gen_range(6..=max_nodes);
    let n_venues = rng.gen_range(1..=(total / 6).max(1));
    let n_authors = rng.gen_range(2..=(total - n_venues - 1).max(2));
    let n_papers = (total - n_venues).saturating_sub(n_authors).max(1);
    let mut b = GraphBuilder::new(bib_schema()).unwrap();
    let authors: Vec<_> = (0..n_authors).map(|i| b.add_node(&format!("a{i}"), "Author").unwrap()).collect();
    let papers: Vec<_> = (0..n_papers).map(|i| b.add_node(&format!("p{i}"), "Paper").unwrap()).collect();
    let venues: Vec<_> = (0..n_venues).map(|i| b.add_node(&format!("v{i}"), "Venue").unwrap()).collect();
    let schema = b.schema().clone();
    let et = |n: &str| schema.edge_type_id(n).unwrap();
    let density = rng.gen_range(0.05..0.4);
    for &p in &papers {
        if rng.gen_bool(0.9) {
            let v = venues[rng.gen_range(0..venues.len())];
            b.add_edge_ids(p, v, et("PC"), rng.gen_range(1..=3) as f64).unwrap();
        }
        for &a in &authors {
            if rng.gen_bool(density) {
                let w = rng.gen_range(1..=3) as f64;
                // undirected edges may be given in either orientation
                if rng.gen_bool(0.5) {
                    b.add_edge_ids(a, p, et("AP"), w).unwrap();
                } else {
                    b.add_edge_ids(p, a, et("AP"), w).unwrap();
                }
                if rng.gen_bool(0.1) {
                    b.add_edge_ids(a, p, et("AP"), 1.0).unwrap();
                }
            }
        }
    }
    for i in 0..authors.len() {
        for j in 0..authors.len() {
            if i != j && rng.gen_bool(density / 3.0) {
                b.add_edge_ids(authors[i], authors[j], et("AA"), rng.gen_range(1..=2) as f64).unwrap();
            }
        }
    }
    b.build().unwrap()
}
