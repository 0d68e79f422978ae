//! Acceptance suite. Runs every gating criterion, prints one PASS/FAIL line
//! each and exits non-zero if any of them fails. Criterion 8 needs real
//! data (`HINEMBED_DBLP_DIR`) and never gates.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use hin_embed::eval::{compare_variants, EvalTasks, LabeledNodes, LinkFeature, LinkSplit};
use hin_embed::graph::{EdgeTypeId, GraphBuilder, HeteroGraph, NodeTypeId, RelationKind, RelationSpec, Schema};
use hin_embed::measures::{analyze_all, sparsity_of, CategorizationPolicy, RelationStats};
use hin_embed::model::{
    batch_loss, euclidean_score, grad_step, hinge, pair_gradient, pair_loss, translation_score, TriplePair,
};
use hin_embed::synth::{planted_hin, SynthConfig};
use hin_embed::train::{Trainer, Variant};
use hin_embed::triples::{extract, RelationInfo, Side};
use hin_embed::{
    Category, EmbeddingStore, LossConfig, LossFamily, NodeId, Norm, RelationId, SeededRng, TrainConfig, Triple,
    TripleStore,
};
use rand::{Rng, SeedableRng};
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn within(started: Instant, budget: Duration, v: Verdict) -> Verdict {
    let took = started.elapsed();
    if took > budget {
        verdict(false, format!("{}; took {took:.2?}, budget {budget:.0?}", v.detail))
    } else {
        v
    }
}

// ---------------------------------------------------------------- criterion 1

/// One row of the published dataset statistics: endpoint populations, the
/// relation count, both average degrees and the printed measures.
struct Row {
    dataset: &'static str,
    relation: &'static str,
    n_u: usize,
    n_v: usize,
    n_r: u64,
    avg_u: f64,
    avg_v: f64,
    d: &'static str,
    s: &'static str,
    category: Category,
}

#[rustfmt::skip]
fn published_rows() -> Vec<Row> {
    use Category::{AR, IR};
    let (t, p, a, c) = (8_811, 14_376, 14_475, 20);
    let (u, s, b, l, r) = (1_286, 2, 2_614, 9, 2);
    let (mp, ma, mr, mc) = (127_623, 164_472, 147_251, 101);
    let row = |dataset, relation, n_u, n_v, n_r, avg_u, avg_v, d, s, category| Row {
        dataset, relation, n_u, n_v, n_r, avg_u, avg_v, d, s, category,
    };
    vec![
        row("DBLP", "PC", p, c, 14_376, 1.0, 718.8, "718.8", "0.05", AR),
        row("DBLP", "APC", a, c, 24_495, 2.9, 2089.7, "720.6", "0.085", AR),
        row("DBLP", "AP", a, p, 41_794, 2.8, 2.9, "1.0", "0.0002", IR),
        row("DBLP", "PT", p, t, 88_683, 6.2, 10.7, "1.7", "0.0007", IR),
        row("DBLP", "APT", a, t, 260_605, 18.0, 29.6, "1.6", "0.002", IR),
        row("Yelp", "BR", b, r, 2_614, 1.0, 1307.0, "1307.0", "0.5", AR),
        row("Yelp", "BS", b, s, 2_614, 1.0, 1307.0, "1307.0", "0.5", AR),
        row("Yelp", "BL", b, l, 2_614, 1.0, 290.4, "290.4", "0.1", AR),
        row("Yelp", "UB", u, b, 30_838, 23.9, 11.8, "2.0", "0.009", IR),
        row("Yelp", "BUB", b, b, 528_332, 405.3, 405.3, "1.0", "0.07", IR),
        row("AMiner", "PC", mp, mc, 127_623, 1.0, 1263.6, "1264.6", "0.01", AR),
        row("AMiner", "APC", ma, mc, 232_659, 2.2, 3515.6, "1598.0", "0.01", AR),
        row("AMiner", "AP", ma, mp, 355_072, 2.2, 2.8, "1.3", "0.00002", IR),
        row("AMiner", "PR", mp, mr, 392_519, 3.1, 2.7, "1.1", "0.00002", IR),
        row("AMiner", "APR", ma, mr, 1_084_287, 7.1, 7.9, "1.1", "0.00004", IR),
    ]
}

/// Significant digits of a printed decimal such as `0.085` (two).
fn printed_digits(s: &str) -> usize {
    s.chars().filter(char::is_ascii_digit).skip_while(|&c| c == '0').count()
}

fn round_significant(x: f64, digits: usize) -> f64 {
    let scale = 10f64.powi(digits as i32 - 1 - x.abs().log10().floor() as i32);
    (x * scale).round() / scale
}

fn criterion_1() -> Verdict {
    let started = Instant::now();
    let policy = CategorizationPolicy::default();
    let rows = published_rows();
    let mut mismatches = Vec::new();
    let mut categories = 0;
    let mut stats = Vec::new();
    for r in &rows {
        let st = RelationStats::from_parts(r.relation, r.n_r, r.n_r, r.n_u, r.n_v, r.avg_u, r.avg_v, &policy)
            .expect("valid row");
        let d = format!("{:.1}", st.degree_ratio);
        if d != r.d {
            mismatches.push(format!("{} {} D {d} vs printed {}", r.dataset, r.relation, r.d));
        }
        let s = sparsity_of(r.n_r, r.n_u, r.n_v);
        let printed: f64 = r.s.parse().unwrap();
        let rounded = round_significant(s, printed_digits(r.s));
        if (rounded - printed).abs() > 1e-12 * printed {
            mismatches.push(format!("{} {} S {s:.4} vs printed {}", r.dataset, r.relation, r.s));
        }
        categories += (st.category == r.category) as usize;
        stats.push((r.dataset, st));
    }
    // within each dataset every AR has a strictly larger ratio than every IR
    let ordered = ["DBLP", "Yelp", "AMiner"].iter().all(|ds| {
        let of = |c| stats.iter().filter(move |(d, s)| d == ds && s.category == c).map(|(_, s)| s.degree_ratio);
        let min_ar = of(Category::AR).fold(f64::INFINITY, f64::min);
        let max_ir = of(Category::IR).fold(0.0, f64::max);
        min_ar > max_ir
    });
    let cells = 2 * rows.len();
    let detail = format!(
        "{}/{cells} measure cells match, categories {categories}/{}, AR/IR ratio ordering {}{}",
        cells - mismatches.len(),
        rows.len(),
        if ordered { "holds" } else { "broken" },
        if mismatches.is_empty() {
            String::new()
        } else {
            format!("; mismatches: {}", mismatches.join("; "))
        }
    );
    within(
        started,
        Duration::from_secs(1),
        verdict(mismatches.is_empty() && categories == rows.len() && ordered, detail),
    )
}

// ---------------------------------------------------------------- criterion 2

fn store_2d(nodes: &[[f64; 2]], rel: Option<[f64; 2]>) -> EmbeddingStore {
    let flat: Vec<f64> = nodes.iter().flatten().copied().collect();
    match rel {
        Some(y) => EmbeddingStore::from_parts(2, flat, y.to_vec(), vec![Some(0)]).unwrap(),
        None => EmbeddingStore::from_parts(2, flat, Vec::new(), vec![None]).unwrap(),
    }
}

fn triple(h: u32, r: u16, t: u32) -> Triple {
    Triple {
        head: NodeId(h),
        relation: RelationId(r),
        tail: NodeId(t),
        weight: 1.0,
    }
}

fn hand_fixtures() -> Vec<(&'static str, f64, f64)> {
    let mut out = Vec::new();
    let s = store_2d(&[[1.0, 0.0], [0.0, 1.0], [3.0, 4.0], [0.0, 0.0]], None);
    out.push(("euclidean identical", euclidean_score(&s, 5.0, NodeId(2), NodeId(2)), 0.0));
    out.push(("euclidean w=2", euclidean_score(&s, 2.0, NodeId(0), NodeId(1)), 4.0));
    out.push(("euclidean 3-4-5", euclidean_score(&s, 1.0, NodeId(2), NodeId(3)), 25.0));

    let s = store_2d(&[[1.0, 0.0], [0.0, 0.0], [1.0, 1.0]], Some([0.0, 1.0]));
    let tr = |u, v, n| translation_score(&s, 1.0, NodeId(u), RelationId(0), NodeId(v), n).unwrap();
    out.push(("translation exact", tr(0, 2, Norm::L2), 0.0));
    out.push(("translation L2", tr(0, 1, Norm::L2), 2f64.sqrt()));
    out.push(("translation L1", tr(0, 1, Norm::L1), 2.0));

    out.push(("hinge satisfied", hinge(1.0, 0.0, 2.0), 0.0));
    out.push(("hinge partial", hinge(1.0, 0.5, 1.0), 0.5));
    out.push(("hinge equal", hinge(1.0, 0.7, 0.7), 1.0));

    // one AR pair scoring (0, 2) and one IR pair scoring (0.5, 1)
    let nodes = [[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [0.0, 0.0], [0.0, 0.0], [-0.5, 0.0]];
    let flat: Vec<f64> = nodes.iter().flatten().copied().collect();
    let s = EmbeddingStore::from_parts(2, flat, vec![0.5, 0.0], vec![None, Some(0)]).unwrap();
    let infos = vec![
        RelationInfo {
            name: "A".into(),
            category: Category::AR,
            source_type: NodeTypeId(0),
            target_type: NodeTypeId(0),
        },
        RelationInfo {
            name: "I".into(),
            category: Category::IR,
            source_type: NodeTypeId(0),
            target_type: NodeTypeId(0),
        },
    ];
    let cfg = LossConfig {
        gamma: 1.0,
        ir_norm: Norm::L2,
    };
    let ar = [TriplePair {
        positive: triple(0, 0, 1),
        negative: triple(0, 0, 2),
    }];
    let ir = [TriplePair {
        positive: triple(3, 1, 4),
        negative: triple(3, 1, 5),
    }];
    out.push(("batch empty", batch_loss(&s, &[], &[], &infos, &cfg).unwrap(), 0.0));
    out.push(("batch composed", batch_loss(&s, &ar, &ir, &infos, &cfg).unwrap(), 0.5));
    let parts = batch_loss(&s, &ar, &[], &infos, &cfg).unwrap() + batch_loss(&s, &[], &ir, &infos, &cfg).unwrap();
    out.push(("batch additive", batch_loss(&s, &ar, &ir, &infos, &cfg).unwrap(), parts));

    // d = 1 step: X_p = 0, X_q = 1, corrupted tail at 0
    let mut s = EmbeddingStore::from_parts(1, vec![0.0, 1.0, 0.0], Vec::new(), vec![None]).unwrap();
    let pair = TriplePair {
        positive: triple(0, 0, 1),
        negative: triple(0, 0, 2),
    };
    let loss = grad_step(&mut s, &pair, LossFamily::Euclidean, &cfg, 0.1).unwrap();
    out.push(("grad step loss", loss, 2.0));
    out.push(("grad step X_q", s.node(NodeId(1))[0], 0.8));
    out
}

fn bib_schema() -> Schema {
    let mut s = Schema::new();
    s.add_edge_type("AP", "Author", "Paper", false).unwrap();
    s.add_edge_type("PC", "Paper", "Venue", true).unwrap();
    s.add_edge_type("AA", "Author", "Author", false).unwrap();
    s.add_metapath("APC", &["AP", "PC"]).unwrap();
    s.add_metapath("APA", &["AP", "AP"]).unwrap();
    s.add_metapath("AAPC", &["AA", "AP", "PC"]).unwrap();
    s
}

fn random_graph(rng: &mut SeededRng) -> HeteroGraph {
    let total: usize = rng.gen_range(6..=100);
    let venues = rng.gen_range(1..=(total / 6).max(1));
    let authors = rng.gen_range(2..=(total - venues - 1).max(2));
    let papers = (total - venues).saturating_sub(authors).max(1);
    let mut b = GraphBuilder::new(bib_schema()).unwrap();
    let a: Vec<_> = (0..authors).map(|i| b.add_node(&format!("a{i}"), "Author").unwrap()).collect();
    let p: Vec<_> = (0..papers).map(|i| b.add_node(&format!("p{i}"), "Paper").unwrap()).collect();
    let v: Vec<_> = (0..venues).map(|i| b.add_node(&format!("v{i}"), "Venue").unwrap()).collect();
    let et = |n: &str| bib_schema().edge_type_id(n).unwrap();
    let density = rng.gen_range(0.05..0.4);
    for &pp in &p {
        if rng.gen_bool(0.9) {
            b.add_edge_ids(pp, v[rng.gen_range(0..v.len())], et("PC"), rng.gen_range(1..=3) as f64).unwrap();
        }
        for &aa in &a {
            if rng.gen_bool(density) {
                let w = rng.gen_range(1..=3) as f64;
                if rng.gen_bool(0.5) {
                    b.add_edge_ids(aa, pp, et("AP"), w).unwrap();
                } else {
                    b.add_edge_ids(pp, aa, et("AP"), w).unwrap();
                }
            }
        }
    }
    for i in 0..a.len() {
        for j in 0..a.len() {
            if i != j && rng.gen_bool(density / 3.0) {
                b.add_edge_ids(a[i], a[j], et("AA"), rng.gen_range(1..=2) as f64).unwrap();
            }
        }
    }
    b.build().unwrap()
}

/// Path weights by exhaustive walks over the raw edge list.
fn brute_force(g: &HeteroGraph, steps: &[EdgeTypeId], source_type: NodeTypeId) -> BTreeMap<(NodeId, NodeId), f64> {
    fn walk(g: &HeteroGraph, steps: &[EdgeTypeId], start: NodeId, at: NodeId, w: f64, out: &mut BTreeMap<(NodeId, NodeId), f64>) {
        let Some((&e, rest)) = steps.split_first() else {
            *out.entry((start, at)).or_default() += w;
            return;
        };
        let et = g.schema().edge_type(e);
        let here = g.node_type(at);
        for edge in g.edges().iter().filter(|x| x.edge_type == e) {
            if et.source == here && edge.source == at {
                walk(g, rest, start, edge.target, w * edge.weight, out);
            }
            if !et.directed && et.target == here && edge.target == at {
                walk(g, rest, start, edge.source, w * edge.weight, out);
            }
        }
    }
    let mut out = BTreeMap::new();
    for i in 0..g.node_count() {
        let n = NodeId(i as u32);
        if g.node_type(n) == source_type {
            walk(g, steps, n, n, 1.0, &mut out);
        }
    }
    out
}

fn criterion_2() -> Verdict {
    let mut bad: Vec<String> = hand_fixtures()
        .into_iter()
        .filter(|(_, got, want)| (got - want).abs() > 1e-9)
        .map(|(name, got, want)| format!("{name}: {got} vs {want}"))
        .collect();
    let fixtures = hand_fixtures().len();
    let mut rng = SeededRng::seed_from_u64(31);
    let mut checked = 0;
    for _ in 0..100 {
        let g = random_graph(&mut rng);
        for (i, r) in g.schema().relations().iter().enumerate() {
            let RelationKind::Composite(m) = &r.kind else { continue };
            let want = brute_force(&g, &m.edge_types, r.source_type);
            let got: BTreeMap<_, _> = extract(&g, r, RelationId(i as u16))
                .unwrap()
                .iter()
                .map(|t| ((t.head, t.tail), t.weight))
                .collect();
            if got != want {
                bad.push(format!("{} differs on a {}-node graph", r.name, g.node_count()));
            }
            checked += 1;
        }
    }
    let detail = format!("{fixtures} hand fixtures to 1e-9, {checked} meta-path extractions on 100 random graphs exact");
    if bad.is_empty() {
        verdict(true, detail)
    } else {
        verdict(false, format!("{detail}; failures: {}", bad.join("; ")))
    }
}

// ---------------------------------------------------------------- criterion 3

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut a.iter().zip(b).map(|(x, y)| x - y));
    let scale = norm(&mut a.iter().copied()).max(norm(&mut b.iter().copied()));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn criterion_3() -> Verdict {
    const H: f64 = 1e-6;
    let started = Instant::now();
    let mut rng = SeededRng::seed_from_u64(5);
    let (mut trials, mut worst) = (0, 0.0f64);
    let mut per_family = [0; 2];
    while trials < 100 {
        let dim = rng.gen_range(1..=16);
        let family = if rng.gen_bool(0.5) { LossFamily::Euclidean } else { LossFamily::Translation };
        let cfg = LossConfig {
            gamma: rng.gen_range(0.5..4.0),
            ir_norm: if rng.gen_bool(0.5) { Norm::L2 } else { Norm::L1 },
        };
        let store = EmbeddingStore::uniform(4, &[family == LossFamily::Translation], dim, &mut rng).unwrap();
        let positive = Triple {
            weight: rng.gen_range(0.5..3.0),
            ..triple(0, 0, 1)
        };
        let mut negative = positive;
        if rng.gen_bool(0.5) {
            negative.head = NodeId(2);
        } else {
            negative.tail = NodeId(3);
        }
        let pair = TriplePair { positive, negative };
        let f = |s: &EmbeddingStore| pair_loss(s, &pair, family, &cfg).unwrap();
        if f(&store) < 1e-3 {
            continue;
        }
        if family == LossFamily::Translation {
            // skip draws where a residual sits next to a kink of the norm
            let y = store.relation(RelationId(0)).unwrap();
            let near_kink = [positive, negative].iter().any(|t| {
                let z: Vec<f64> = (0..dim).map(|i| store.node(t.head)[i] + y[i] - store.node(t.tail)[i]).collect();
                z.iter().map(|x| x * x).sum::<f64>().sqrt() < 1e-3
                    || (cfg.ir_norm == Norm::L1 && z.iter().any(|x| x.abs() < 1e-3))
            });
            if near_kink {
                continue;
            }
        }
        trials += 1;
        per_family[(family == LossFamily::Translation) as usize] += 1;
        let grad = pair_gradient(&store, &pair, family, &cfg).unwrap();
        let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
        for n in 0..4u32 {
            let a = grad.nodes.iter().find(|(id, _)| id.0 == n).map(|(_, g)| g.clone());
            for i in 0..dim {
                analytic.push(a.as_ref().map_or(0.0, |g| g[i]));
                let (mut plus, mut minus) = (store.clone(), store.clone());
                plus.node_mut(NodeId(n))[i] += H;
                minus.node_mut(NodeId(n))[i] -= H;
                numeric.push((f(&plus) - f(&minus)) / (2.0 * H));
            }
        }
        if let Some((_, g)) = &grad.relation {
            for i in 0..dim {
                analytic.push(g[i]);
                let (mut plus, mut minus) = (store.clone(), store.clone());
                plus.relation_mut(RelationId(0)).unwrap()[i] += H;
                minus.relation_mut(RelationId(0)).unwrap()[i] -= H;
                numeric.push((f(&plus) - f(&minus)) / (2.0 * H));
            }
        }
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    let detail = format!(
        "100 trials ({} Euclidean, {} translation), worst relative error {worst:.2e}",
        per_family[0], per_family[1]
    );
    within(started, Duration::from_secs(10), verdict(worst <= 1e-5, detail))
}

// ---------------------------------------------------------------- criterion 4

/// Three authors and three papers joined one to one by a single relation.
fn toy(category: Category) -> (HeteroGraph, TripleStore) {
    let mut s = Schema::new();
    s.add_edge_type("AP", "Author", "Paper", false).unwrap();
    let mut b = GraphBuilder::new(s).unwrap();
    for i in 0..3 {
        b.add_node(&format!("a{i}"), "Author").unwrap();
    }
    for i in 0..3 {
        b.add_node(&format!("p{i}"), "Paper").unwrap();
    }
    for i in 0..3 {
        b.add_edge(&format!("a{i}"), &format!("p{i}"), "AP", 1.0).unwrap();
    }
    let g = b.build().unwrap();
    let store = TripleStore::from_graph(&g, &g.schema().relations(), &[category]).unwrap();
    (g, store)
}

fn criterion_4() -> Verdict {
    let started = Instant::now();
    let mut details = Vec::new();
    let mut pass = true;
    for category in [Category::AR, Category::IR] {
        let (g, triples) = toy(category);
        let cfg = TrainConfig {
            dim: 8,
            lr: 0.01,
            epochs: 500,
            ..TrainConfig::default()
        };
        let family = cfg.variant.family(category);
        let (emb, _) = hin_embed::train::train(&g, &triples, cfg.clone()).unwrap();
        let authors = g.nodes_of_type(g.schema().node_type_id("Author").unwrap());
        let papers = g.nodes_of_type(g.schema().node_type_id("Paper").unwrap());
        let mut pairs = Vec::new();
        for t in triples.iter() {
            for &a in authors.iter().filter(|&&a| a != t.head) {
                pairs.push(TriplePair {
                    positive: *t,
                    negative: Triple { head: a, ..*t },
                });
            }
            for &p in papers.iter().filter(|&&p| p != t.tail) {
                pairs.push(TriplePair {
                    positive: *t,
                    negative: Triple { tail: p, ..*t },
                });
            }
        }
        let (ar, ir): (&[TriplePair], &[TriplePair]) = match category {
            Category::AR => (&pairs, &[]),
            Category::IR => (&[], &pairs),
        };
        let loss = batch_loss(&emb, ar, ir, triples.relations(), &cfg.loss()).unwrap();
        let score = |t: &Triple| hin_embed::model::triple_score(&emb, t, family, &cfg.loss()).unwrap();
        let margin = pairs
            .iter()
            .map(|p| score(&p.negative) - score(&p.positive))
            .fold(f64::INFINITY, f64::min);
        pass &= loss == 0.0 && margin >= cfg.gamma;
        details.push(format!("{category}: hinge {loss} over {} pairs, min margin {margin:.3}", pairs.len()));
    }
    within(started, Duration::from_secs(30), verdict(pass, details.join(", ")))
}

// ---------------------------------------------------------------- criterion 5

fn criterion_5() -> Verdict {
    const DRAWS: usize = 100_000;
    let data = planted_hin(&SynthConfig::default()).unwrap();
    let g = &data.graph;
    let rels = g.schema().relations();
    let stats = analyze_all(g, &rels, &CategorizationPolicy::default()).unwrap();
    let cats: Vec<_> = stats.iter().map(|s| s.category).collect();
    let store = TripleStore::from_graph(g, &rels, &cats).unwrap();
    let mut rng = SeededRng::seed_from_u64(17);

    let mut worst_p = 1.0f64;
    for c in [Category::AR, Category::IR] {
        let part = store.partition(c);
        let index: BTreeMap<(NodeId, u16, NodeId), usize> =
            part.triples().iter().enumerate().map(|(i, t)| ((t.head, t.relation.0, t.tail), i)).collect();
        let mut counts = vec![0u64; part.len()];
        for _ in 0..DRAWS {
            let t = store.sample_positive(c, &mut rng).unwrap();
            counts[index[&(t.head, t.relation.0, t.tail)]] += 1;
        }
        let total = part.total_weight();
        let stat: f64 = part
            .triples()
            .iter()
            .zip(&counts)
            .map(|(t, &o)| {
                let e = DRAWS as f64 * t.weight / total;
                (o as f64 - e).powi(2) / e
            })
            .sum();
        let p = 1.0 - ChiSquared::new((part.len() - 1) as f64).unwrap().cdf(stat);
        worst_p = worst_p.min(p);
    }

    let all: Vec<Triple> = store.iter().copied().collect();
    let (mut heads, mut broken) = (0u64, 0u64);
    for _ in 0..DRAWS {
        let t = all[rng.gen_range(0..all.len())];
        let (n, side) = store.corrupt(&t, g, false, &mut rng).unwrap();
        let head_changed = n.head != t.head;
        let tail_changed = n.tail != t.tail;
        let types_kept = g.node_type(n.head) == g.node_type(t.head) && g.node_type(n.tail) == g.node_type(t.tail);
        let side_ok = match side {
            Side::Head => head_changed && !tail_changed,
            Side::Tail => tail_changed && !head_changed,
        };
        if !(types_kept && side_ok && n.relation == t.relation) {
            broken += 1;
        }
        heads += head_changed as u64;
    }
    let bin = Binomial::new(0.5, DRAWS as u64).unwrap();
    let lower = bin.cdf(heads.min(DRAWS as u64 - heads));
    let p_split = (2.0 * lower).min(1.0);
    let detail = format!(
        "chi-square min p {worst_p:.3} over {DRAWS} draws per partition, {broken} malformed corruptions, \
         head share {:.4} (binomial p {p_split:.3})",
        heads as f64 / DRAWS as f64
    );
    verdict(worst_p > 0.01 && broken == 0 && p_split > 0.01, detail)
}

// ---------------------------------------------------------------- criterion 6

fn criterion_6() -> Verdict {
    let started = Instant::now();
    let data = planted_hin(&SynthConfig::default()).unwrap();
    let split = LinkSplit::new(&data.graph, "AP", 0.2, 1).unwrap();
    let g = split.train_graph(&data.graph);
    let rels = g.schema().relations();
    let stats = analyze_all(&g, &rels, &CategorizationPolicy::default()).unwrap();
    let cats: Vec<_> = stats.iter().map(|s| s.category).collect();
    let triples = TripleStore::from_graph(&g, &rels, &cats).unwrap();
    let base = TrainConfig {
        epochs: 100,
        lr: 0.02,
        lr_decay: true,
        ..TrainConfig::default()
    };
    let tasks = EvalTasks {
        labels: Some(&data.labels),
        clustering: true,
        classification: false,
        link: Some((&split, LinkFeature::Hadamard)),
        seed: 0,
    };
    let rows = compare_variants(&g, &triples, &base, &Variant::ALL, &tasks).unwrap();
    let get = |v: Variant| {
        let m = &rows.iter().find(|r| r.variant == v).unwrap().metrics;
        (m.nmi.unwrap(), m.link.unwrap().auc)
    };
    let (nmi, auc) = get(Variant::Rhine);
    let mut pass = nmi >= 0.8;
    let mut parts = vec![format!(
        "{} nodes; rhine NMI {nmi:.4} AUC {auc:.4}",
        data.graph.node_count()
    )];
    for v in [Variant::Eu, Variant::Tr, Variant::Reversed] {
        let (n, a) = get(v);
        pass &= nmi >= n && auc >= a;
        parts.push(format!("{v} NMI {n:.4} AUC {a:.4}"));
    }
    within(started, Duration::from_secs(300), verdict(pass, parts.join(", ")))
}

// ---------------------------------------------------------------- criterion 7

fn run_binary(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_hinembed"))
        .args(args)
        .current_dir(dir)
        .env_remove("HINEMBED_THREADS")
        .env_remove("SOURCE_DATE_EPOCH")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    }
}

fn criterion_7() -> Verdict {
    let config = "nodes = data/nodes.tsv\nedges = data/edges.tsv\nschema = data/schema.tsv\n\
                  labels = data/labels.tsv\nlink_relation = AP\ndim = 16\nepochs = 20\nseed = 42\n\
                  stages = analyze,extract,train,eval,variants,export\n";
    let mut artifacts = Vec::new();
    let dirs: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for d in &dirs {
        fs::write(d.path().join("run.conf"), config).unwrap();
        let steps = [
            vec!["synth", "--synth-preset", "small", "--out-dir", "data"],
            vec!["run", "--config", "run.conf"],
        ];
        for s in &steps {
            if let Err(e) = run_binary(d.path(), s) {
                return verdict(false, format!("`hinembed {}` failed: {e}", s.join(" ")));
            }
        }
        let mut files = BTreeMap::new();
        for e in fs::read_dir(d.path().join("out")).unwrap() {
            let e = e.unwrap();
            files.insert(e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap());
        }
        artifacts.push(files);
    }
    let names: Vec<&String> = artifacts[0].keys().collect();
    let differing: Vec<&String> = names.iter().copied().filter(|n| artifacts[1].get(*n) != Some(&artifacts[0][*n])).collect();
    let required = ["embeddings.tsv", "eval.json", "eval.tsv", "manifest.json", "train_metrics.tsv", "variants.tsv"];
    let missing: Vec<_> = required.iter().filter(|r| !artifacts[0].contains_key(**r)).collect();
    let same_set = artifacts[0].len() == artifacts[1].len();
    let detail = format!(
        "{} artifacts compared, {} differ{}",
        names.len(),
        differing.len(),
        if missing.is_empty() { String::new() } else { format!(", missing {missing:?}") }
    );
    verdict(differing.is_empty() && missing.is_empty() && same_set, detail)
}

// ---------------------------------------------------------------- criterion 8

fn criterion_8() -> Option<Verdict> {
    let dir = std::env::var_os("HINEMBED_DBLP_DIR")?;
    let dir = Path::new(&dir);
    let run = || -> Result<Verdict, String> {
        let started = Instant::now();
        let g = HeteroGraph::load(&dir.join("nodes.tsv"), &dir.join("edges.tsv"), &dir.join("schema.tsv"))
            .map_err(|e| e.to_string())?;
        let labels = LabeledNodes::read(&dir.join("labels.tsv"), |n| g.node(n)).map_err(|e| e.to_string())?;
        let rels: Vec<RelationSpec> = g.schema().relations();
        let stats = analyze_all(&g, &rels, &CategorizationPolicy::default()).map_err(|e| e.to_string())?;
        let cats: Vec<_> = stats.iter().map(|s| s.category).collect();
        let triples = TripleStore::from_graph(&g, &rels, &cats).map_err(|e| e.to_string())?;
        let mut t = Trainer::new(&g, &triples, TrainConfig::default()).map_err(|e| e.to_string())?;
        t.run().map_err(|e| e.to_string())?;
        let nmi = hin_embed::eval::cluster_nmi(t.embeddings(), &labels, labels.class_count(), 0)
            .map_err(|e| e.to_string())?;
        Ok(within(
            started,
            Duration::from_secs(7200),
            verdict(nmi > 0.6, format!("NMI {nmi:.4} on {} nodes", g.node_count())),
        ))
    };
    Some(run().unwrap_or_else(|e| verdict(false, e)))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 7] = [
        ("measure correctness", criterion_1),
        ("score and loss oracles", criterion_2),
        ("gradient check", criterion_3),
        ("convergence fixture", criterion_4),
        ("sampling contract", criterion_5),
        ("synthetic end-to-end", criterion_6),
        ("determinism", criterion_7),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let v = check();
        failed += !v.pass as usize;
        println!(
            "criterion {} ({name}): {} [{:.2?}] {}",
            i + 1,
            if v.pass { "PASS" } else { "FAIL" },
            started.elapsed(),
            v.detail
        );
    }
    match criterion_8() {
        Some(v) => println!(
            "criterion 8 (full-data clustering, non-gating): {} {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        ),
        None => println!("criterion 8 (full-data clustering, non-gating): SKIP, set HINEMBED_DBLP_DIR to run"),
    }
    println!("{} of {} gating criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
