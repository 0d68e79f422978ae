//! Planted-community heterogeneous networks for tests and benchmarks.
//!
//! Authors, papers and venues are split into communities. Every paper is
//! published at a venue of its community (an affiliation-shaped relation:
//! few venues, many papers each) and written by a handful of authors, most
//! of them from the same community (an interaction-shaped relation).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::LabeledNodes;
use crate::graph::{GraphBuilder, HeteroGraph, NodeId, Schema};
use crate::SeededRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub communities: usize,
    pub authors_per_community: usize,
    pub papers_per_community: usize,
    pub venues_per_community: usize,
    pub authors_per_paper: usize,
    /// Probability that a paper's author is drawn from another community.
    pub author_noise: f64,
    /// Probability that a paper appears at a venue of another community.
    pub venue_noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            communities: 4,
            authors_per_community: 60,
            papers_per_community: 180,
            venues_per_community: 2,
            authors_per_paper: 3,
            author_noise: 0.15,
            venue_noise: 0.05,
            seed: 7,
        }
    }
}

impl SynthConfig {
    /// A 200-node network: 48 authors, 144 papers, 8 venues.
    pub fn small() -> Self {
        SynthConfig {
            authors_per_community: 12,
            papers_per_community: 36,
            ..SynthConfig::default()
        }
    }
}

/// A generated network together with the authors' community labels.
pub struct SynthData {
    pub graph: HeteroGraph,
    pub labels: LabeledNodes,
}

pub fn schema() -> Schema {
    let mut s = Schema::new();
    s.add_edge_type("AP", "Author", "Paper", false).expect("fresh schema");
    s.add_edge_type("PC", "Paper", "Venue", true).expect("fresh schema");
    s.add_metapath("APC", &["AP", "PC"]).expect("fresh schema");
    s
}

pub fn planted_hin(cfg: &SynthConfig) -> Result<SynthData> {
    let bad = |m: &str| Err(Error::Config(m.to_string()));
    if cfg.communities < 2 {
        return bad("need at least two communities");
    }
    if cfg.authors_per_community == 0 || cfg.papers_per_community == 0 || cfg.venues_per_community == 0 {
        return bad("every community needs authors, papers and venues");
    }
    if cfg.authors_per_paper == 0 || cfg.authors_per_paper > cfg.authors_per_community {
        return bad("authors_per_paper must be in 1..=authors_per_community");
    }
    if !(0.0..=1.0).contains(&cfg.author_noise) || !(0.0..=1.0).contains(&cfg.venue_noise) {
        return bad("noise probabilities must be in [0, 1]");
    }
    let mut rng = SeededRng::seed_from_u64(cfg.seed);
    let mut b = GraphBuilder::new(schema())?;
    let k = cfg.communities;
    let mut authors: Vec<Vec<NodeId>> = vec![Vec::new(); k];
    let mut venues: Vec<Vec<NodeId>> = vec![Vec::new(); k];
    let mut labels = Vec::new();
    for c in 0..k {
        for _ in 0..cfg.authors_per_community {
            let id = b.add_node(&format!("a{}", labels.len()), "Author")?;
            authors[c].push(id);
            labels.push((id, format!("community{c}")));
        }
    }
    let mut n_venues = 0;
    for group in venues.iter_mut() {
        for _ in 0..cfg.venues_per_community {
            group.push(b.add_node(&format!("v{n_venues}"), "Venue")?);
            n_venues += 1;
        }
    }
    let (ap, pc) = (edge_type(&b, "AP"), edge_type(&b, "PC"));
    let other = |c: usize, rng: &mut SeededRng| (c + rng.gen_range(1..k)) % k;
    let mut n_papers = 0;
    for c in 0..k {
        for _ in 0..cfg.papers_per_community {
            let paper = b.add_node(&format!("p{n_papers}"), "Paper")?;
            n_papers += 1;
            let vc = if rng.gen_bool(cfg.venue_noise) { other(c, &mut rng) } else { c };
            let venue = *venues[vc].choose(&mut rng).expect("non-empty");
            b.add_edge_ids(paper, venue, pc, 1.0)?;
            let mut chosen: Vec<NodeId> = Vec::with_capacity(cfg.authors_per_paper);
            while chosen.len() < cfg.authors_per_paper {
                let ac = if rng.gen_bool(cfg.author_noise) { other(c, &mut rng) } else { c };
                let a = *authors[ac].choose(&mut rng).expect("non-empty");
                if !chosen.contains(&a) {
                    chosen.push(a);
                }
            }
            for a in chosen {
                b.add_edge_ids(a, paper, ap, 1.0)?;
            }
        }
    }
    Ok(SynthData {
        graph: b.build()?,
        labels: LabeledNodes::new(labels)?,
    })
}

fn edge_type(b: &GraphBuilder, name: &str) -> crate::graph::EdgeTypeId {
    b.schema().edge_type_id(name).expect("declared in schema()")
}
