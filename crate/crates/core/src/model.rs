//! Embedding storage, score functions, margin losses and their subgradients.
//!
//! Affiliation triples are scored by the weighted squared Euclidean distance
//! `w * |X_p - X_q|^2`; interaction triples by the weighted translation
//! distance `w * |X_u + Y_r - X_v|` under L1 or L2. A positive triple and its
//! corruption are combined into the hinge `max(0, gamma + pos - neg)`.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{data_lines, NodeId};
use crate::triples::{Category, RelationId, RelationInfo, Triple};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Norm {
    L1,
    L2,
}

impl FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "L1" => Ok(Norm::L1),
            "L2" => Ok(Norm::L2),
            _ => Err(Error::Config(format!("unknown norm `{s}`"))),
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Norm::L1 => "L1",
            Norm::L2 => "L2",
        })
    }
}

/// Score function used for a triple.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossFamily {
    Euclidean,
    Translation,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub gamma: f64,
    pub ir_norm: Norm,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            gamma: 1.0,
            ir_norm: Norm::L2,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        Ok(())
    }
}

/// Node matrix `X` (`n_nodes x dim`) and relation matrix `Y`, row-major.
/// Only relations trained with the translation score own a row of `Y`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    nodes: Vec<f64>,
    relations: Vec<f64>,
    relation_rows: Vec<Option<usize>>,
}

impl EmbeddingStore {
    /// All-zero store. `with_row[i]` says whether relation `i` gets a row.
    pub fn zeros(n_nodes: usize, with_row: &[bool], dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be at least 1".into()));
        }
        let mut next = 0;
        let relation_rows = with_row
            .iter()
            .map(|&has| {
                has.then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect();
        Ok(EmbeddingStore {
            dim,
            nodes: vec![0.0; n_nodes * dim],
            relations: vec![0.0; next * dim],
            relation_rows,
        })
    }

    /// Entries drawn uniformly from `[-6/sqrt(dim), 6/sqrt(dim)]`.
    pub fn uniform<R: Rng + ?Sized>(
        n_nodes: usize,
        with_row: &[bool],
        dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut store = Self::zeros(n_nodes, with_row, dim)?;
        let bound = 6.0 / (dim as f64).sqrt();
        for x in store.nodes.iter_mut().chain(store.relations.iter_mut()) {
            *x = rng.gen_range(-bound..=bound);
        }
        Ok(store)
    }

    pub fn from_parts(
        dim: usize,
        nodes: Vec<f64>,
        relations: Vec<f64>,
        relation_rows: Vec<Option<usize>>,
    ) -> Result<Self> {
        let rows = relation_rows.iter().flatten().count();
        if dim == 0 || nodes.len() % dim != 0 || relations.len() != rows * dim {
            return Err(Error::Config("embedding matrix shape mismatch".into()));
        }
        if nodes.iter().chain(&relations).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(EmbeddingStore {
            dim,
            nodes,
            relations,
            relation_rows,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len() / self.dim
    }

    pub fn relation_count(&self) -> usize {
        self.relation_rows.len()
    }

    pub fn relation_rows(&self) -> &[Option<usize>] {
        &self.relation_rows
    }

    pub fn node_matrix(&self) -> &[f64] {
        &self.nodes
    }

    pub fn relation_matrix(&self) -> &[f64] {
        &self.relations
    }

    pub fn node(&self, n: NodeId) -> &[f64] {
        &self.nodes[n.index() * self.dim..(n.index() + 1) * self.dim]
    }

    pub fn node_mut(&mut self, n: NodeId) -> &mut [f64] {
        let d = self.dim;
        &mut self.nodes[n.index() * d..(n.index() + 1) * d]
    }

    pub fn relation(&self, r: RelationId) -> Option<&[f64]> {
        let row = (*self.relation_rows.get(r.index())?)?;
        Some(&self.relations[row * self.dim..(row + 1) * self.dim])
    }

    pub fn relation_mut(&mut self, r: RelationId) -> Option<&mut [f64]> {
        let row = (*self.relation_rows.get(r.index())?)?;
        let d = self.dim;
        Some(&mut self.relations[row * d..(row + 1) * d])
    }

    pub fn is_finite(&self) -> bool {
        self.nodes.iter().chain(&self.relations).all(|x| x.is_finite())
    }

    /// Writes `node_id<TAB>v1<TAB>...<TAB>vd`, one line per node.
    pub fn write_nodes_tsv(&self, path: &Path, names: &[String]) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        for (i, name) in names.iter().enumerate() {
            write!(out, "{name}")?;
            for x in self.node(NodeId(i as u32)) {
                write!(out, "\t{x}")?;
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Writes `relation<TAB>v1<TAB>...` for relations that own a row.
    pub fn write_relations_tsv(&self, path: &Path, names: &[String]) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        for (i, name) in names.iter().enumerate() {
            if let Some(row) = self.relation(RelationId(i as u16)) {
                write!(out, "{name}")?;
                for x in row {
                    write!(out, "\t{x}")?;
                }
                writeln!(out)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a node embedding file. Node ids are assigned in file order and
    /// the names returned alongside. The store has no relation rows.
    pub fn read_nodes_tsv(path: &Path) -> Result<(Vec<String>, EmbeddingStore)> {
        let mut names = Vec::new();
        let mut values = Vec::new();
        let mut dim = None;
        for (line_no, fields) in data_lines(path)? {
            let fields = fields?;
            let d = fields.len() - 1;
            if d == 0 || *dim.get_or_insert(d) != d {
                return Err(Error::parse(path, line_no, "inconsistent embedding width"));
            }
            names.push(fields[0].clone());
            for f in &fields[1..] {
                values.push(
                    f.parse::<f64>()
                        .map_err(|_| Error::parse(path, line_no, format!("bad number `{f}`")))?,
                );
            }
        }
        let dim = dim.ok_or_else(|| Error::parse(path, 0, "empty embedding file"))?;
        Ok((names, EmbeddingStore::from_parts(dim, values, Vec::new(), Vec::new())?))
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn translation_norm(u: &[f64], r: &[f64], v: &[f64], norm: Norm) -> f64 {
    let z = u.iter().zip(r).zip(v).map(|((a, b), c)| a + b - c);
    match norm {
        Norm::L1 => z.map(f64::abs).sum(),
        Norm::L2 => z.map(|x| x * x).sum::<f64>().sqrt(),
    }
}

/// `w * |X_p - X_q|_2^2`.
pub fn euclidean_score(store: &EmbeddingStore, w: f64, p: NodeId, q: NodeId) -> f64 {
    w * squared_distance(store.node(p), store.node(q))
}

/// `w * |X_u + Y_r - X_v|` under the given norm.
pub fn translation_score(
    store: &EmbeddingStore,
    w: f64,
    u: NodeId,
    r: RelationId,
    v: NodeId,
    norm: Norm,
) -> Result<f64> {
    let y = store
        .relation(r)
        .ok_or_else(|| Error::NoRelationEmbedding(format!("#{}", r.0)))?;
    Ok(w * translation_norm(store.node(u), y, store.node(v), norm))
}

/// `max(0, gamma + pos - neg)`.
#[inline]
pub fn hinge(gamma: f64, pos: f64, neg: f64) -> f64 {
    (gamma + pos - neg).max(0.0)
}

/// A positive triple and one of its corruptions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TriplePair {
    pub positive: Triple,
    pub negative: Triple,
}

pub fn triple_score(store: &EmbeddingStore, t: &Triple, family: LossFamily, cfg: &LossConfig) -> Result<f64> {
    match family {
        LossFamily::Euclidean => Ok(euclidean_score(store, t.weight, t.head, t.tail)),
        LossFamily::Translation => {
            translation_score(store, t.weight, t.head, t.relation, t.tail, cfg.ir_norm)
        }
    }
}

pub fn pair_loss(store: &EmbeddingStore, pair: &TriplePair, family: LossFamily, cfg: &LossConfig) -> Result<f64> {
    if pair.positive.relation != pair.negative.relation {
        return Err(Error::CategoryMismatch(
            "positive and negative triples use different relations".into(),
        ));
    }
    Ok(hinge(
        cfg.gamma,
        triple_score(store, &pair.positive, family, cfg)?,
        triple_score(store, &pair.negative, family, cfg)?,
    ))
}

fn family_sum(
    store: &EmbeddingStore,
    pairs: &[TriplePair],
    relations: &[RelationInfo],
    expect: Category,
    family: LossFamily,
    cfg: &LossConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for p in pairs {
        let info = &relations[p.positive.relation.index()];
        if info.category != expect {
            return Err(Error::CategoryMismatch(format!(
                "relation `{}` is {} but was passed as {expect}",
                info.name, info.category
            )));
        }
        total += pair_loss(store, p, family, cfg)?;
    }
    Ok(total)
}

/// Hinge loss summed over affiliation pairs under the Euclidean score.
pub fn euclidean_ar_loss(
    store: &EmbeddingStore,
    pairs: &[TriplePair],
    relations: &[RelationInfo],
    cfg: &LossConfig,
) -> Result<f64> {
    family_sum(store, pairs, relations, Category::AR, LossFamily::Euclidean, cfg)
}

/// Hinge loss summed over interaction pairs under the translation score.
pub fn translation_ir_loss(
    store: &EmbeddingStore,
    pairs: &[TriplePair],
    relations: &[RelationInfo],
    cfg: &LossConfig,
) -> Result<f64> {
    family_sum(store, pairs, relations, Category::IR, LossFamily::Translation, cfg)
}

/// The joint objective over a batch: Euclidean hinge on AR pairs plus
/// translation hinge on IR pairs, unweighted.
pub fn batch_loss(
    store: &EmbeddingStore,
    ar_pairs: &[TriplePair],
    ir_pairs: &[TriplePair],
    relations: &[RelationInfo],
    cfg: &LossConfig,
) -> Result<f64> {
    Ok(euclidean_ar_loss(store, ar_pairs, relations, cfg)?
        + translation_ir_loss(store, ir_pairs, relations, cfg)?)
}

/// Subgradient of one pair's hinge loss.
#[derive(Clone, Debug, PartialEq)]
pub struct PairGradient {
    pub loss: f64,
    /// One entry per distinct node row touched by the pair.
    pub nodes: Vec<(NodeId, Vec<f64>)>,
    pub relation: Option<(RelationId, Vec<f64>)>,
}

/// Row access shared by the exclusive and the lock-free store.
pub(crate) trait Rows {
    fn dim(&self) -> usize;
    fn read_node(&self, n: NodeId, out: &mut [f64]);
    fn write_node(&self, n: NodeId, values: &[f64]);
    fn relation_row(&self, r: RelationId) -> Option<usize>;
    fn read_relation(&self, row: usize, out: &mut [f64]);
    fn write_relation(&self, row: usize, values: &[f64]);
}

/// Scratch space for one pair update: up to four node rows and one
/// relation row, gathered, updated locally and scattered back.
#[derive(Clone, Debug)]
pub(crate) struct Workspace {
    dim: usize,
    slots: Vec<NodeId>,
    /// Slot of (pos.head, pos.tail, neg.head, neg.tail).
    role: [usize; 4],
    values: Vec<f64>,
    grads: Vec<f64>,
    rel_row: Option<usize>,
    rel_value: Vec<f64>,
    rel_grad: Vec<f64>,
    z: Vec<f64>,
}

impl Workspace {
    pub(crate) fn new(dim: usize) -> Self {
        Workspace {
            dim,
            slots: Vec::with_capacity(4),
            role: [0; 4],
            values: vec![0.0; 4 * dim],
            grads: vec![0.0; 4 * dim],
            rel_row: None,
            rel_value: vec![0.0; dim],
            rel_grad: vec![0.0; dim],
            z: vec![0.0; dim],
        }
    }

    fn gather<S: Rows + ?Sized>(&mut self, rows: &S, pair: &TriplePair, family: LossFamily) -> Result<()> {
        let d = self.dim;
        debug_assert_eq!(rows.dim(), d);
        self.slots.clear();
        let ids = [
            pair.positive.head,
            pair.positive.tail,
            pair.negative.head,
            pair.negative.tail,
        ];
        for (k, id) in ids.iter().enumerate() {
            let slot = match self.slots.iter().position(|s| s == id) {
                Some(s) => s,
                None => {
                    self.slots.push(*id);
                    let s = self.slots.len() - 1;
                    rows.read_node(*id, &mut self.values[s * d..(s + 1) * d]);
                    s
                }
            };
            self.role[k] = slot;
        }
        self.grads[..self.slots.len() * d].fill(0.0);
        self.rel_row = None;
        if family == LossFamily::Translation {
            let r = pair.positive.relation;
            let row = rows
                .relation_row(r)
                .ok_or_else(|| Error::NoRelationEmbedding(format!("#{}", r.0)))?;
            rows.read_relation(row, &mut self.rel_value);
            self.rel_grad.fill(0.0);
            self.rel_row = Some(row);
        }
        Ok(())
    }

    /// Score of one side and, when `sign != 0`, accumulation of
    /// `sign * d score` into the gradient buffers.
    fn score_side(&mut self, head: usize, tail: usize, w: f64, family: LossFamily, norm: Norm, sign: f64) -> f64 {
        let d = self.dim;
        match family {
            LossFamily::Euclidean => {
                let mut s = 0.0;
                for i in 0..d {
                    let diff = self.values[head * d + i] - self.values[tail * d + i];
                    self.z[i] = diff;
                    s += diff * diff;
                }
                if sign != 0.0 {
                    for i in 0..d {
                        let g = sign * 2.0 * w * self.z[i];
                        self.grads[head * d + i] += g;
                        self.grads[tail * d + i] -= g;
                    }
                }
                w * s
            }
            LossFamily::Translation => {
                for i in 0..d {
                    self.z[i] = self.values[head * d + i] + self.rel_value[i] - self.values[tail * d + i];
                }
                let n = match norm {
                    Norm::L1 => self.z.iter().map(|x| x.abs()).sum::<f64>(),
                    Norm::L2 => self.z.iter().map(|x| x * x).sum::<f64>().sqrt(),
                };
                if sign != 0.0 {
                    for i in 0..d {
                        let unit = match norm {
                            Norm::L1 => {
                                if self.z[i] > 0.0 {
                                    1.0
                                } else if self.z[i] < 0.0 {
                                    -1.0
                                } else {
                                    0.0
                                }
                            }
                            Norm::L2 => {
                                if n > 0.0 {
                                    self.z[i] / n
                                } else {
                                    0.0
                                }
                            }
                        };
                        let g = sign * w * unit;
                        self.grads[head * d + i] += g;
                        self.grads[tail * d + i] -= g;
                        self.rel_grad[i] += g;
                    }
                }
                w * n
            }
        }
    }

    /// Computes the hinge loss of the gathered pair and fills the gradient
    /// buffers when the hinge is active. Returns (loss, active).
    fn compute(&mut self, pair: &TriplePair, family: LossFamily, cfg: &LossConfig) -> (f64, bool) {
        let [ph, pt, nh, nt] = self.role;
        let pos = self.score_side(ph, pt, pair.positive.weight, family, cfg.ir_norm, 0.0);
        let neg = self.score_side(nh, nt, pair.negative.weight, family, cfg.ir_norm, 0.0);
        let loss = hinge(cfg.gamma, pos, neg);
        if loss > 0.0 {
            self.score_side(ph, pt, pair.positive.weight, family, cfg.ir_norm, 1.0);
            self.score_side(nh, nt, pair.negative.weight, family, cfg.ir_norm, -1.0);
            (loss, true)
        } else {
            (loss, false)
        }
    }

    fn gradients_finite(&self) -> bool {
        let used = self.slots.len() * self.dim;
        self.grads[..used].iter().all(|g| g.is_finite())
            && (self.rel_row.is_none() || self.rel_grad.iter().all(|g| g.is_finite()))
    }

    fn apply<S: Rows + ?Sized>(&mut self, rows: &S, lr: f64, max_norm: Option<f64>) {
        let d = self.dim;
        for s in 0..self.slots.len() {
            let (vals, grads) = (&mut self.values[s * d..(s + 1) * d], &self.grads[s * d..(s + 1) * d]);
            for (x, g) in vals.iter_mut().zip(grads) {
                *x -= lr * g;
            }
            clip(vals, max_norm);
            rows.write_node(self.slots[s], vals);
        }
        if let Some(row) = self.rel_row {
            for (x, g) in self.rel_value.iter_mut().zip(&self.rel_grad) {
                *x -= lr * g;
            }
            clip(&mut self.rel_value, max_norm);
            rows.write_relation(row, &self.rel_value);
        }
    }

    pub(crate) fn step<S: Rows + ?Sized>(
        &mut self,
        rows: &S,
        pair: &TriplePair,
        family: LossFamily,
        cfg: &LossConfig,
        lr: f64,
        max_norm: Option<f64>,
    ) -> Result<f64> {
        self.gather(rows, pair, family)?;
        let (loss, active) = self.compute(pair, family, cfg);
        if !loss.is_finite() {
            return Err(Error::NonFinite);
        }
        if active {
            if !self.gradients_finite() {
                return Err(Error::NonFinite);
            }
            self.apply(rows, lr, max_norm);
        }
        Ok(loss)
    }
}

fn clip(row: &mut [f64], max_norm: Option<f64>) {
    if let Some(cap) = max_norm {
        let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > cap {
            let s = cap / n;
            row.iter_mut().for_each(|x| *x *= s);
        }
    }
}

/// Interior-mutability adapter so the exclusive store can share the
/// [`Rows`] code path.
struct Exclusive<'a>(std::cell::RefCell<&'a mut EmbeddingStore>);

impl Rows for Exclusive<'_> {
    fn dim(&self) -> usize {
        self.0.borrow().dim
    }
    fn read_node(&self, n: NodeId, out: &mut [f64]) {
        out.copy_from_slice(self.0.borrow().node(n));
    }
    fn write_node(&self, n: NodeId, values: &[f64]) {
        self.0.borrow_mut().node_mut(n).copy_from_slice(values);
    }
    fn relation_row(&self, r: RelationId) -> Option<usize> {
        self.0.borrow().relation_rows.get(r.index()).copied().flatten()
    }
    fn read_relation(&self, row: usize, out: &mut [f64]) {
        let s = self.0.borrow();
        out.copy_from_slice(&s.relations[row * s.dim..(row + 1) * s.dim]);
    }
    fn write_relation(&self, row: usize, values: &[f64]) {
        let mut s = self.0.borrow_mut();
        let d = s.dim;
        s.relations[row * d..(row + 1) * d].copy_from_slice(values);
    }
}

struct ReadOnly<'a>(&'a EmbeddingStore);

impl Rows for ReadOnly<'_> {
    fn dim(&self) -> usize {
        self.0.dim
    }
    fn read_node(&self, n: NodeId, out: &mut [f64]) {
        out.copy_from_slice(self.0.node(n));
    }
    fn write_node(&self, _: NodeId, _: &[f64]) {
        unreachable!("read-only rows")
    }
    fn relation_row(&self, r: RelationId) -> Option<usize> {
        self.0.relation_rows.get(r.index()).copied().flatten()
    }
    fn read_relation(&self, row: usize, out: &mut [f64]) {
        out.copy_from_slice(&self.0.relations[row * self.0.dim..(row + 1) * self.0.dim]);
    }
    fn write_relation(&self, _: usize, _: &[f64]) {
        unreachable!("read-only rows")
    }
}

/// Subgradient of the pair's hinge loss without touching the store. The
/// subgradient is zero when the hinge is inactive (including the kink).
pub fn pair_gradient(
    store: &EmbeddingStore,
    pair: &TriplePair,
    family: LossFamily,
    cfg: &LossConfig,
) -> Result<PairGradient> {
    let rows = ReadOnly(store);
    let mut ws = Workspace::new(store.dim);
    ws.gather(&rows, pair, family)?;
    let (loss, _) = ws.compute(pair, family, cfg);
    let d = ws.dim;
    let nodes = ws
        .slots
        .iter()
        .enumerate()
        .map(|(s, id)| (*id, ws.grads[s * d..(s + 1) * d].to_vec()))
        .collect();
    let relation = ws.rel_row.map(|_| (pair.positive.relation, ws.rel_grad.clone()));
    Ok(PairGradient {
        loss,
        nodes,
        relation,
    })
}

/// One SGD step on a single pair. Rows change only when the hinge is
/// active. Returns the pair's loss before the update.
pub fn grad_step(
    store: &mut EmbeddingStore,
    pair: &TriplePair,
    family: LossFamily,
    cfg: &LossConfig,
    lr: f64,
) -> Result<f64> {
    if !(lr > 0.0) {
        return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
    }
    let mut ws = Workspace::new(store.dim);
    ws.step(&Exclusive(std::cell::RefCell::new(store)), pair, family, cfg, lr, None)
}

pub(crate) fn step_with(
    ws: &mut Workspace,
    store: &mut EmbeddingStore,
    pair: &TriplePair,
    family: LossFamily,
    cfg: &LossConfig,
    lr: f64,
    max_norm: Option<f64>,
) -> Result<f64> {
    ws.step(&Exclusive(std::cell::RefCell::new(store)), pair, family, cfg, lr, max_norm)
}

/// Lock-free copy of a store for multi-worker training. Concurrent updates
/// of the same row may overwrite each other.
pub(crate) struct SharedEmbeddings {
    dim: usize,
    nodes: Vec<AtomicU64>,
    relations: Vec<AtomicU64>,
    relation_rows: Vec<Option<usize>>,
}

impl SharedEmbeddings {
    pub(crate) fn new(store: &EmbeddingStore) -> Self {
        let atomic = |v: &[f64]| v.iter().map(|x| AtomicU64::new(x.to_bits())).collect();
        SharedEmbeddings {
            dim: store.dim,
            nodes: atomic(&store.nodes),
            relations: atomic(&store.relations),
            relation_rows: store.relation_rows.clone(),
        }
    }

    pub(crate) fn copy_into(&self, store: &mut EmbeddingStore) {
        for (dst, src) in store.nodes.iter_mut().zip(&self.nodes) {
            *dst = f64::from_bits(src.load(Ordering::Relaxed));
        }
        for (dst, src) in store.relations.iter_mut().zip(&self.relations) {
            *dst = f64::from_bits(src.load(Ordering::Relaxed));
        }
    }
}

impl Rows for SharedEmbeddings {
    fn dim(&self) -> usize {
        self.dim
    }
    fn read_node(&self, n: NodeId, out: &mut [f64]) {
        let base = n.index() * self.dim;
        for (i, o) in out.iter_mut().enumerate() {
            *o = f64::from_bits(self.nodes[base + i].load(Ordering::Relaxed));
        }
    }
    fn write_node(&self, n: NodeId, values: &[f64]) {
        let base = n.index() * self.dim;
        for (i, v) in values.iter().enumerate() {
            self.nodes[base + i].store(v.to_bits(), Ordering::Relaxed);
        }
    }
    fn relation_row(&self, r: RelationId) -> Option<usize> {
        self.relation_rows.get(r.index()).copied().flatten()
    }
    fn read_relation(&self, row: usize, out: &mut [f64]) {
        let base = row * self.dim;
        for (i, o) in out.iter_mut().enumerate() {
            *o = f64::from_bits(self.relations[base + i].load(Ordering::Relaxed));
        }
    }
    fn write_relation(&self, row: usize, values: &[f64]) {
        let base = row * self.dim;
        for (i, v) in values.iter().enumerate() {
            self.relations[base + i].store(v.to_bits(), Ordering::Relaxed);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_2d(rows: &[[f64; 2]], rel: Option<[f64; 2]>) -> EmbeddingStore {
        let nodes = rows.iter().flatten().copied().collect();
        let (relations, relation_rows) = match rel {
            Some(r) => (r.to_vec(), vec![Some(0)]),
            None => (Vec::new(), vec![None]),
        };
        EmbeddingStore::from_parts(2, nodes, relations, relation_rows).unwrap()
    }

    fn triple(h: u32, t: u32, w: f64) -> Triple {
        Triple {
            head: NodeId(h),
            relation: RelationId(0),
            tail: NodeId(t),
            weight: w,
        }
    }

    #[test]
    fn euclidean_examples() {
        let s = store_2d(&[[1.0, 0.0], [0.0, 1.0], [3.0, 4.0], [0.0, 0.0]], None);
        assert_eq!(euclidean_score(&s, 2.0, NodeId(0), NodeId(1)), 4.0);
        assert_eq!(euclidean_score(&s, 1.0, NodeId(2), NodeId(3)), 25.0);
        assert_eq!(euclidean_score(&s, 7.0, NodeId(2), NodeId(2)), 0.0);
    }

    #[test]
    fn translation_examples() {
        let s = store_2d(&[[1.0, 0.0], [0.0, 0.0], [1.0, 1.0]], Some([0.0, 1.0]));
        let l2 = translation_score(&s, 1.0, NodeId(0), RelationId(0), NodeId(1), Norm::L2).unwrap();
        assert!((l2 - 2f64.sqrt()).abs() < 1e-12);
        let l1 = translation_score(&s, 1.0, NodeId(0), RelationId(0), NodeId(1), Norm::L1).unwrap();
        assert_eq!(l1, 2.0);
        // Y_r = X_v - X_u
        let perfect = translation_score(&s, 3.0, NodeId(0), RelationId(0), NodeId(2), Norm::L2).unwrap();
        assert_eq!(perfect, 0.0);
        let no_row = store_2d(&[[0.0, 0.0]], None);
        assert!(translation_score(&no_row, 1.0, NodeId(0), RelationId(0), NodeId(0), Norm::L2).is_err());
    }

    #[test]
    fn hinge_examples() {
        assert_eq!(hinge(1.0, 0.0, 2.0), 0.0);
        assert_eq!(hinge(1.0, 0.5, 1.0), 0.5);
        assert_eq!(hinge(1.0, 0.7, 0.7), 1.0);
    }

    #[test]
    fn one_dimensional_step() {
        // X_p=0, X_q=1, X_p'=0, X_q'=0 with p' a distinct node.
        let mut s = EmbeddingStore::from_parts(1, vec![0.0, 1.0, 0.0], vec![], vec![None]).unwrap();
        let pair = TriplePair {
            positive: triple(0, 1, 1.0),
            negative: triple(0, 2, 1.0),
        };
        let cfg = LossConfig::default();
        let loss = grad_step(&mut s, &pair, LossFamily::Euclidean, &cfg, 0.1).unwrap();
        assert_eq!(loss, 2.0);
        assert!((s.node(NodeId(1))[0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn inactive_hinge_leaves_store_unchanged() {
        let mut s = store_2d(&[[0.0, 0.0], [0.1, 0.0], [5.0, 5.0]], None);
        let before = s.clone();
        let pair = TriplePair {
            positive: triple(0, 1, 1.0),
            negative: triple(0, 2, 1.0),
        };
        let loss = grad_step(&mut s, &pair, LossFamily::Euclidean, &LossConfig::default(), 0.5).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(s, before);
    }

    #[test]
    fn step_loss_matches_pair_loss() {
        let mut s = store_2d(&[[0.3, -0.2], [0.1, 0.4], [0.0, 0.2]], Some([0.2, 0.1]));
        let pair = TriplePair {
            positive: triple(0, 1, 2.0),
            negative: triple(2, 1, 2.0),
        };
        let cfg = LossConfig::default();
        let expected = pair_loss(&s, &pair, LossFamily::Translation, &cfg).unwrap();
        let got = grad_step(&mut s, &pair, LossFamily::Translation, &cfg, 0.01).unwrap();
        assert_eq!(expected, got);
    }

    #[test]
    fn non_finite_gradient_is_reported() {
        let mut s = EmbeddingStore::from_parts(1, vec![0.0, 1e200, 0.0], vec![], vec![None]).unwrap();
        let pair = TriplePair {
            positive: triple(0, 1, 1e200),
            negative: triple(0, 2, 1.0),
        };
        let err = grad_step(&mut s, &pair, LossFamily::Euclidean, &LossConfig::default(), 0.1);
        assert!(matches!(err, Err(Error::NonFinite)));
    }

    #[test]
    fn batch_loss_composes() {
        // AR pair with scores (0, 2) and IR pair with scores (0.5, 1).
        let s = EmbeddingStore::from_parts(
            1,
            vec![0.0, 0.0, 2f64.sqrt(), 0.0, 0.5, 1.0],
            vec![0.0],
            vec![None, Some(0)],
        )
        .unwrap();
        let rel = |name: &str, c| RelationInfo {
            name: name.into(),
            category: c,
            source_type: crate::graph::NodeTypeId(0),
            target_type: crate::graph::NodeTypeId(0),
        };
        let relations = vec![rel("A", Category::AR), rel("I", Category::IR)];
        let ar = TriplePair {
            positive: triple(0, 1, 1.0),
            negative: triple(0, 2, 1.0),
        };
        let ir_t = |h, t| Triple {
            head: NodeId(h),
            relation: RelationId(1),
            tail: NodeId(t),
            weight: 1.0,
        };
        let ir = TriplePair {
            positive: ir_t(3, 4),
            negative: ir_t(3, 5),
        };
        let cfg = LossConfig::default();
        let total = batch_loss(&s, &[ar], &[ir], &relations, &cfg).unwrap();
        assert!((total - 0.5).abs() < 1e-12);
        assert_eq!(batch_loss(&s, &[], &[], &relations, &cfg).unwrap(), 0.0);
        assert!(matches!(
            batch_loss(&s, &[ir], &[], &relations, &cfg),
            Err(Error::CategoryMismatch(_))
        ));
    }

    #[test]
    fn shared_rows_round_trip() {
        let s = store_2d(&[[1.0, 2.0], [3.0, 4.0]], Some([5.0, 6.0]));
        let shared = SharedEmbeddings::new(&s);
        let mut out = EmbeddingStore::zeros(2, &[true], 2).unwrap();
        shared.copy_into(&mut out);
        assert_eq!(out, s);
    }

    #[test]
    fn tsv_round_trip() {
        let s = store_2d(&[[1.0, -2.5e-17], [0.1, 4.0]], Some([5.0, 6.0]));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.tsv");
        let names = vec!["a".to_string(), "b".to_string()];
        s.write_nodes_tsv(&path, &names).unwrap();
        let (read_names, read) = EmbeddingStore::read_nodes_tsv(&path).unwrap();
        assert_eq!(read_names, names);
        assert_eq!(read.node_matrix(), s.node_matrix());
    }
}
