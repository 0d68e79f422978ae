//! Downstream evaluation: clustering, link prediction, classification and
//! the variant comparison harness.

mod kmeans;
mod logistic;
mod metrics;

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::Serialize;

pub use kmeans::{kmeans, Clustering, KMeansConfig};
pub use logistic::{Logistic, LogisticConfig};
pub use metrics::{auc, binary_f1, macro_f1, micro_f1, nmi};

use crate::error::{Error, Result};
use crate::graph::{data_lines, EdgeTypeId, HeteroGraph, NodeId, RelationKind};
use crate::model::{self, EmbeddingStore, LossConfig, LossFamily};
use crate::train::{self, TrainConfig, Variant};
use crate::triples::{RelationId, Triple, TripleStore};
use crate::SeededRng;

/// Ground-truth classes for a subset of nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledNodes {
    nodes: Vec<NodeId>,
    labels: Vec<usize>,
    classes: Vec<String>,
}

impl LabeledNodes {
    /// Class indices follow the sorted class names.
    pub fn new(pairs: Vec<(NodeId, String)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (n, _) in &pairs {
            if !seen.insert(*n) {
                return Err(Error::Eval(format!("node {n} is labeled twice")));
            }
        }
        let classes: Vec<String> = pairs
            .iter()
            .map(|(_, c)| c.clone())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let index: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let labels = pairs.iter().map(|(_, c)| index[c.as_str()]).collect();
        Ok(LabeledNodes {
            nodes: pairs.iter().map(|(n, _)| *n).collect(),
            labels,
            classes,
        })
    }

    /// Reads `node<TAB>label` lines, resolving node names with `lookup`.
    pub fn read(path: &Path, lookup: impl Fn(&str) -> Option<NodeId>) -> Result<Self> {
        let mut pairs = Vec::new();
        for (line, fields) in data_lines(path)? {
            let fields = fields?;
            if fields.len() != 2 {
                return Err(Error::parse(path, line, "expected `node<TAB>label`"));
            }
            let node = lookup(&fields[0])
                .ok_or_else(|| Error::parse(path, line, format!("unknown node `{}`", fields[0])))?;
            pairs.push((node, fields[1].clone()));
        }
        Self::new(pairs)
    }

    pub fn write(&self, path: &Path, names: &[String]) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for (n, l) in self.nodes.iter().zip(&self.labels) {
            writeln!(out, "{}\t{}", names[n.index()], self.classes[*l])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    fn check(&self, store: &EmbeddingStore) -> Result<()> {
        if let Some(n) = self.nodes.iter().find(|n| n.index() >= store.node_count()) {
            return Err(Error::Eval(format!("labeled node {n} has no embedding")));
        }
        if self.class_count() < 2 {
            return Err(Error::Eval("need at least two classes".into()));
        }
        Ok(())
    }

    fn features(&self, store: &EmbeddingStore) -> Vec<f64> {
        self.nodes.iter().flat_map(|n| store.node(*n).iter().copied()).collect()
    }
}

/// K-means on the labeled nodes' embeddings scored against their labels.
pub fn cluster_nmi(store: &EmbeddingStore, labels: &LabeledNodes, k: usize, seed: u64) -> Result<f64> {
    labels.check(store)?;
    if labels.len() < k {
        return Err(Error::Eval(format!(
            "{} labeled nodes cannot form {k} clusters",
            labels.len()
        )));
    }
    let mut rng = SeededRng::seed_from_u64(seed);
    let c = kmeans(&labels.features(store), store.dim(), &KMeansConfig::new(k), &mut rng)?;
    nmi(&c.assignments, labels.labels())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub macro_f1: f64,
    pub micro_f1: f64,
}

/// Stratified split, one-vs-rest logistic regression, F1 on the held-out part.
pub fn classify(store: &EmbeddingStore, labels: &LabeledNodes, train_fraction: f64, seed: u64) -> Result<ClassMetrics> {
    labels.check(store)?;
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Eval(format!("train fraction must be in (0, 1), got {train_fraction}")));
    }
    let k = labels.class_count();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in labels.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = SeededRng::seed_from_u64(seed);
    let (mut train_idx, mut test_idx) = (Vec::new(), Vec::new());
    for (c, members) in by_class.iter_mut().enumerate() {
        if members.len() < 2 {
            return Err(Error::Eval(format!(
                "class `{}` has {} labeled node(s), need at least 2",
                labels.classes()[c],
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        let n_train = ((members.len() as f64 * train_fraction).round() as usize).clamp(1, members.len() - 1);
        train_idx.extend_from_slice(&members[..n_train]);
        test_idx.extend_from_slice(&members[n_train..]);
    }
    let dim = store.dim();
    let gather = |idx: &[usize]| -> Vec<f64> {
        idx.iter()
            .flat_map(|&i| store.node(labels.nodes()[i]).iter().copied())
            .collect()
    };
    let x_train = gather(&train_idx);
    let x_test = gather(&test_idx);
    let cfg = LogisticConfig::default();
    let models = (0..k)
        .map(|c| {
            let y: Vec<bool> = train_idx.iter().map(|&i| labels.labels()[i] == c).collect();
            Logistic::fit(&x_train, &y, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let predicted: Vec<usize> = (0..test_idx.len())
        .map(|i| {
            let x = &x_test[i * dim..(i + 1) * dim];
            (0..k)
                .max_by(|&a, &b| models[a].decision(x).total_cmp(&models[b].decision(x)))
                .unwrap_or(0)
        })
        .collect();
    let truth: Vec<usize> = test_idx.iter().map(|&i| labels.labels()[i]).collect();
    Ok(ClassMetrics {
        macro_f1: macro_f1(&predicted, &truth, k),
        micro_f1: micro_f1(&predicted, &truth, k),
    })
}

/// Held-out edges of one atomic relation plus type-correct non-edges.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkSplit {
    pub relation: String,
    pub seed: u64,
    pub train: Vec<(NodeId, NodeId)>,
    pub train_negatives: Vec<(NodeId, NodeId)>,
    pub test_positives: Vec<(NodeId, NodeId)>,
    pub test_negatives: Vec<(NodeId, NodeId)>,
    edge_type: EdgeTypeId,
    removed: Vec<usize>,
}

fn pair_key(g: &HeteroGraph, et: EdgeTypeId, u: NodeId, v: NodeId) -> (NodeId, NodeId) {
    let t = g.schema().edge_type(et);
    if !t.directed && t.source == t.target && v < u {
        (v, u)
    } else {
        (u, v)
    }
}

fn atomic_edge_type(g: &HeteroGraph, relation: &str) -> Result<EdgeTypeId> {
    match g.relation(relation)?.kind {
        RelationKind::Atomic(e) => Ok(e),
        RelationKind::Composite(_) => Err(Error::Eval(format!(
            "link prediction needs an atomic relation, `{relation}` is a meta-path"
        ))),
    }
}

fn sample_negatives<R: Rng>(
    g: &HeteroGraph,
    et: EdgeTypeId,
    existing: &HashSet<(NodeId, NodeId)>,
    taken: &mut HashSet<(NodeId, NodeId)>,
    count: usize,
    rng: &mut R,
) -> Result<Vec<(NodeId, NodeId)>> {
    let t = g.schema().edge_type(et);
    let (heads, tails) = (g.nodes_of_type(t.source), g.nodes_of_type(t.target));
    let mut out = Vec::with_capacity(count);
    let budget = 1000 * count.max(1);
    for _ in 0..budget {
        if out.len() == count {
            break;
        }
        let u = heads[rng.gen_range(0..heads.len())];
        let v = tails[rng.gen_range(0..tails.len())];
        if u == v {
            continue;
        }
        let key = pair_key(g, et, u, v);
        if existing.contains(&key) || !taken.insert(key) {
            continue;
        }
        out.push(key);
    }
    if out.len() < count {
        return Err(Error::Eval(format!(
            "could only find {} of {count} non-edges for `{}`",
            out.len(),
            t.name
        )));
    }
    Ok(out)
}

impl LinkSplit {
    /// Splits the distinct node pairs of `relation` into train and test
    /// parts and draws one negative per positive on each side.
    pub fn new(g: &HeteroGraph, relation: &str, test_fraction: f64, seed: u64) -> Result<Self> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::Eval(format!("test fraction must be in (0, 1), got {test_fraction}")));
        }
        let et = atomic_edge_type(g, relation)?;
        let mut seen = HashSet::new();
        let mut pairs = Vec::new();
        for e in g.edges().iter().filter(|e| e.edge_type == et) {
            let key = pair_key(g, et, e.source, e.target);
            if seen.insert(key) {
                pairs.push(key);
            }
        }
        if pairs.len() < 2 {
            return Err(Error::Eval(format!("`{relation}` has fewer than two edges to split")));
        }
        let mut rng = SeededRng::seed_from_u64(seed);
        pairs.shuffle(&mut rng);
        let n_test = ((pairs.len() as f64 * test_fraction).round() as usize).clamp(1, pairs.len() - 1);
        let test_positives = pairs[..n_test].to_vec();
        let train = pairs[n_test..].to_vec();
        let mut taken = HashSet::new();
        let test_negatives = sample_negatives(g, et, &seen, &mut taken, test_positives.len(), &mut rng)?;
        let train_negatives = sample_negatives(g, et, &seen, &mut taken, train.len(), &mut rng)?;
        Self::assemble(g, relation, et, seed, train, train_negatives, test_positives, test_negatives)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        g: &HeteroGraph,
        relation: &str,
        edge_type: EdgeTypeId,
        seed: u64,
        train: Vec<(NodeId, NodeId)>,
        train_negatives: Vec<(NodeId, NodeId)>,
        test_positives: Vec<(NodeId, NodeId)>,
        test_negatives: Vec<(NodeId, NodeId)>,
    ) -> Result<Self> {
        let test: HashSet<_> = test_positives.iter().copied().collect();
        if train.iter().any(|p| test.contains(p)) {
            return Err(Error::Eval("train and test positives overlap".into()));
        }
        let removed = g
            .edges()
            .iter()
            .enumerate()
            .filter(|(_, e)| e.edge_type == edge_type && test.contains(&pair_key(g, edge_type, e.source, e.target)))
            .map(|(i, _)| i)
            .collect();
        Ok(LinkSplit {
            relation: relation.to_string(),
            seed,
            train,
            train_negatives,
            test_positives,
            test_negatives,
            edge_type,
            removed,
        })
    }

    /// The graph with the test positives removed.
    pub fn train_graph(&self, g: &HeteroGraph) -> HeteroGraph {
        g.without_edges(&self.removed)
    }

    /// Lines `seed<TAB>n`, `relation<TAB>name`, then `part<TAB>u<TAB>v` with
    /// part one of train, train_neg, test, test_neg.
    pub fn write(&self, path: &Path, g: &HeteroGraph) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "relation\t{}", self.relation)?;
        writeln!(out, "seed\t{}", self.seed)?;
        for (part, pairs) in [
            ("train", &self.train),
            ("train_neg", &self.train_negatives),
            ("test", &self.test_positives),
            ("test_neg", &self.test_negatives),
        ] {
            for (u, v) in pairs {
                writeln!(out, "{part}\t{}\t{}", g.node_name(*u), g.node_name(*v))?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read(path: &Path, g: &HeteroGraph) -> Result<Self> {
        let (mut relation, mut seed) = (None, 0u64);
        let mut parts: [Vec<(NodeId, NodeId)>; 4] = Default::default();
        for (line, fields) in data_lines(path)? {
            let fields = fields?;
            match (fields[0].as_str(), fields.len()) {
                ("relation", 2) => relation = Some(fields[1].clone()),
                ("seed", 2) => {
                    seed = fields[1]
                        .parse()
                        .map_err(|_| Error::parse(path, line, format!("bad seed `{}`", fields[1])))?
                }
                (part @ ("train" | "train_neg" | "test" | "test_neg"), 3) => {
                    let node = |s: &str| {
                        g.node(s)
                            .ok_or_else(|| Error::parse(path, line, format!("unknown node `{s}`")))
                    };
                    let slot = ["train", "train_neg", "test", "test_neg"]
                        .iter()
                        .position(|p| *p == part)
                        .expect("matched above");
                    parts[slot].push((node(&fields[1])?, node(&fields[2])?));
                }
                _ => return Err(Error::parse(path, line, "unrecognised split line")),
            }
        }
        let relation = relation.ok_or_else(|| Error::parse(path, 1, "missing `relation` line"))?;
        let et = atomic_edge_type(g, &relation)?;
        let [train, train_neg, test, test_neg] = parts;
        let split = Self::assemble(g, &relation, et, seed, train, train_neg, test, test_neg)?;
        let existing: HashSet<_> = g
            .edges()
            .iter()
            .filter(|e| e.edge_type == et)
            .map(|e| pair_key(g, et, e.source, e.target))
            .collect();
        if split.train_negatives.iter().chain(&split.test_negatives).any(|p| existing.contains(p)) {
            return Err(Error::Eval("split negatives include existing edges".into()));
        }
        Ok(split)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LinkFeature {
    /// Elementwise product of the endpoint embeddings.
    Hadamard,
    /// The negated model score of the pair.
    Score,
}

impl std::str::FromStr for LinkFeature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hadamard" => Ok(LinkFeature::Hadamard),
            "score" => Ok(LinkFeature::Score),
            _ => Err(Error::Config(format!("unknown link feature `{s}`"))),
        }
    }
}

impl std::fmt::Display for LinkFeature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LinkFeature::Hadamard => "hadamard",
            LinkFeature::Score => "score",
        })
    }
}

/// What [`LinkFeature::Score`] needs to score a pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreContext {
    pub relation: RelationId,
    pub family: LossFamily,
    pub loss: LossConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinkMetrics {
    pub auc: f64,
    pub f1: f64,
}

fn pair_features(
    store: &EmbeddingStore,
    pairs: &[(NodeId, NodeId)],
    feature: LinkFeature,
    ctx: Option<&ScoreContext>,
) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for &(u, v) in pairs {
        match feature {
            LinkFeature::Hadamard => out.extend(store.node(u).iter().zip(store.node(v)).map(|(a, b)| a * b)),
            LinkFeature::Score => {
                let ctx = ctx.ok_or_else(|| Error::Eval("score features need a scoring context".into()))?;
                let t = Triple {
                    head: u,
                    relation: ctx.relation,
                    tail: v,
                    weight: 1.0,
                };
                out.push(-model::triple_score(store, &t, ctx.family, &ctx.loss)?);
            }
        }
    }
    Ok(out)
}

/// Logistic classifier on training pairs, AUC and F1 (threshold 0.5) on
/// the held-out pairs.
pub fn link_predict(
    store: &EmbeddingStore,
    split: &LinkSplit,
    feature: LinkFeature,
    ctx: Option<&ScoreContext>,
) -> Result<LinkMetrics> {
    if split.test_positives.is_empty() || split.test_negatives.is_empty() {
        return Err(Error::Eval("link prediction test set is empty".into()));
    }
    let width = match feature {
        LinkFeature::Hadamard => store.dim(),
        LinkFeature::Score => 1,
    };
    let mut x = pair_features(store, &split.train, feature, ctx)?;
    x.extend(pair_features(store, &split.train_negatives, feature, ctx)?);
    let mut y = vec![true; split.train.len()];
    y.extend(std::iter::repeat_n(false, split.train_negatives.len()));
    let model = Logistic::fit(&x, &y, &LogisticConfig::default())?;

    let mut xt = pair_features(store, &split.test_positives, feature, ctx)?;
    xt.extend(pair_features(store, &split.test_negatives, feature, ctx)?);
    let mut truth = vec![true; split.test_positives.len()];
    truth.extend(std::iter::repeat_n(false, split.test_negatives.len()));
    let probs: Vec<f64> = xt.chunks(width).map(|r| model.probability(r)).collect();
    let predicted: Vec<bool> = probs.iter().map(|&p| p >= 0.5).collect();
    Ok(LinkMetrics {
        auc: auc(&probs, &truth)?,
        f1: binary_f1(&predicted, &truth),
    })
}

/// Which downstream tasks to run.
#[derive(Clone, Copy, Debug, Default)]
pub struct EvalTasks<'a> {
    pub labels: Option<&'a LabeledNodes>,
    pub clustering: bool,
    pub classification: bool,
    pub link: Option<(&'a LinkSplit, LinkFeature)>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub nmi: Option<f64>,
    pub link: Option<LinkMetrics>,
    pub classification: Option<ClassMetrics>,
}

impl Evaluation {
    pub const TSV_HEADER: &'static str = "NMI\tAUC\tF1\tMacro-F1\tMicro-F1";

    pub fn tsv_fields(&self) -> String {
        let f = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| v.to_string());
        format!(
            "{}\t{}\t{}\t{}\t{}",
            f(self.nmi),
            f(self.link.map(|l| l.auc)),
            f(self.link.map(|l| l.f1)),
            f(self.classification.map(|c| c.macro_f1)),
            f(self.classification.map(|c| c.micro_f1)),
        )
    }
}

/// Runs the requested tasks on one embedding store. `variant` and
/// `triples` only matter for score-based link features.
pub fn evaluate(
    store: &EmbeddingStore,
    triples: &TripleStore,
    variant: Variant,
    loss: LossConfig,
    tasks: &EvalTasks<'_>,
) -> Result<Evaluation> {
    let needs_labels = tasks.clustering || tasks.classification;
    let labels = match (needs_labels, tasks.labels) {
        (true, None) => return Err(Error::Eval("clustering and classification need labels".into())),
        (_, l) => l,
    };
    let nmi = match labels {
        Some(l) if tasks.clustering => Some(cluster_nmi(store, l, l.class_count(), tasks.seed)?),
        _ => None,
    };
    let classification = match labels {
        Some(l) if tasks.classification => Some(classify(store, l, 0.8, tasks.seed)?),
        _ => None,
    };
    let link = match tasks.link {
        Some((split, feature)) => {
            let ctx = triples
                .relations()
                .iter()
                .position(|r| r.name == split.relation)
                .map(|i| ScoreContext {
                    relation: RelationId(i as u16),
                    family: variant.family(triples.relations()[i].category),
                    loss,
                });
            Some(link_predict(store, split, feature, ctx.as_ref())?)
        }
        None => None,
    };
    Ok(Evaluation {
        nmi,
        link,
        classification,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariantRow {
    pub variant: Variant,
    pub metrics: Evaluation,
}

/// Trains every variant on the same data and seed and evaluates each.
/// Variants run on separate threads; each run is itself deterministic
/// when `base.threads == 1`.
pub fn compare_variants(
    g: &HeteroGraph,
    triples: &TripleStore,
    base: &TrainConfig,
    variants: &[Variant],
    tasks: &EvalTasks<'_>,
) -> Result<Vec<VariantRow>> {
    let results: Vec<Result<VariantRow>> = std::thread::scope(|scope| {
        let handles: Vec<_> = variants
            .iter()
            .map(|&variant| {
                scope.spawn(move || {
                    let cfg = TrainConfig {
                        variant,
                        ..base.clone()
                    };
                    let (store, _) = train::train(g, triples, cfg)?;
                    let metrics = evaluate(&store, triples, variant, base.loss(), tasks)?;
                    Ok(VariantRow { variant, metrics })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("variant worker panicked")).collect()
    });
    results.into_iter().collect()
}

pub const VARIANT_TABLE_HEADER: &str = "variant\tNMI\tAUC\tF1\tMacro-F1\tMicro-F1";

pub fn write_variant_table<W: Write>(out: &mut W, rows: &[VariantRow]) -> std::io::Result<()> {
    writeln!(out, "{VARIANT_TABLE_HEADER}")?;
    for r in rows {
        writeln!(out, "{}\t{}", r.variant, r.metrics.tsv_fields())?;
    }
    Ok(())
}
