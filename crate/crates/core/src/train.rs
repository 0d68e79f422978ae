//! SGD training loop over sampled positives and their corruptions.
//!
//! Every epoch draws `samples_per_epoch` positives. AR and IR draws are
//! interleaved deterministically in proportion to the partitions' weight
//! mass; inside a partition a positive is drawn with probability
//! proportional to its weight. Each positive is paired with `negatives`
//! independent corruptions and every pair gets its own SGD step.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use log::{debug, info};
use rand::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::model::{self, EmbeddingStore, LossConfig, LossFamily, Norm, SharedEmbeddings, TriplePair, Workspace};
use crate::triples::{Category, TripleStore};
use crate::SeededRng;

/// Which score function each relation category is trained with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Euclidean for ARs, translation for IRs.
    Rhine,
    /// Euclidean for everything.
    Eu,
    /// Translation for everything.
    Tr,
    /// Translation for ARs, Euclidean for IRs.
    Reversed,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Rhine, Variant::Eu, Variant::Tr, Variant::Reversed];

    pub fn family(self, category: Category) -> LossFamily {
        let assignment = select_variant(self);
        match category {
            Category::AR => assignment.ar,
            Category::IR => assignment.ir,
        }
    }

    fn tag(self) -> u8 {
        match self {
            Variant::Rhine => 0,
            Variant::Eu => 1,
            Variant::Tr => 2,
            Variant::Reversed => 3,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Rhine => "rhine",
            Variant::Eu => "eu",
            Variant::Tr => "tr",
            Variant::Reversed => "reversed",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rhine" => Ok(Variant::Rhine),
            "eu" => Ok(Variant::Eu),
            "tr" => Ok(Variant::Tr),
            "reversed" | "re" => Ok(Variant::Reversed),
            _ => Err(Error::Config(format!("unknown variant `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FamilyAssignment {
    pub ar: LossFamily,
    pub ir: LossFamily,
}

pub fn select_variant(v: Variant) -> FamilyAssignment {
    use LossFamily::*;
    match v {
        Variant::Rhine => FamilyAssignment { ar: Euclidean, ir: Translation },
        Variant::Eu => FamilyAssignment { ar: Euclidean, ir: Euclidean },
        Variant::Tr => FamilyAssignment { ar: Translation, ir: Translation },
        Variant::Reversed => FamilyAssignment { ar: Translation, ir: Euclidean },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dim: usize,
    /// Corruptions per positive.
    pub negatives: usize,
    pub gamma: f64,
    pub ir_norm: Norm,
    pub lr: f64,
    /// Decay the learning rate linearly towards zero over `epochs`.
    pub lr_decay: bool,
    pub epochs: usize,
    /// Defaults to the number of triples.
    pub samples_per_epoch: Option<usize>,
    pub seed: u64,
    pub variant: Variant,
    /// 1 runs the deterministic single-threaded loop.
    pub threads: usize,
    pub filter_negatives: bool,
    /// Rescale rows whose L2 norm exceeds this after each update.
    pub max_norm: Option<f64>,
    /// Abort when an epoch's mean loss exceeds this multiple of the first epoch's.
    pub divergence_factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 100,
            negatives: 3,
            gamma: 1.0,
            ir_norm: Norm::L2,
            lr: 0.005,
            lr_decay: false,
            epochs: 100,
            samples_per_epoch: None,
            seed: 0,
            variant: Variant::Rhine,
            threads: 1,
            filter_negatives: false,
            max_norm: None,
            divergence_factor: 10.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.dim == 0 {
            return bad("dim must be at least 1".into());
        }
        if self.negatives == 0 {
            return bad("negatives must be at least 1".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.threads == 0 {
            return bad("threads must be at least 1".into());
        }
        if self.samples_per_epoch == Some(0) {
            return bad("samples_per_epoch must be at least 1".into());
        }
        if let Some(m) = self.max_norm {
            if !(m > 0.0) {
                return bad(format!("max_norm must be positive, got {m}"));
            }
        }
        if !(self.divergence_factor > 1.0) {
            return bad(format!(
                "divergence_factor must exceed 1, got {}",
                self.divergence_factor
            ));
        }
        self.loss().validate()
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            gamma: self.gamma,
            ir_norm: self.ir_norm,
        }
    }

    fn epoch_lr(&self, epoch: usize) -> f64 {
        if self.lr_decay && self.epochs > 0 {
            self.lr * (1.0 - epoch as f64 / self.epochs as f64).max(1e-4)
        } else {
            self.lr
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExecutionMode {
    Deterministic,
    Parallel { threads: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-pair hinge loss from pairs scored with the Euclidean function.
    pub euclidean_loss: f64,
    /// Mean per-pair hinge loss from pairs scored with the translation function.
    pub translation_loss: f64,
    pub pairs: u64,
}

impl EpochStats {
    pub fn total(&self) -> f64 {
        self.euclidean_loss + self.translation_loss
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// Positive draws per relation over the whole run.
    pub sample_counts: Vec<u64>,
    pub mode: ExecutionMode,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl TrainReport {
    pub const METRICS_HEADER: &'static str = "epoch\tL_EuAR\tL_TrIR\ttotal";

    pub fn write_metrics<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::METRICS_HEADER)?;
        for e in &self.epochs {
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                e.epoch,
                e.euclidean_loss,
                e.translation_loss,
                e.total()
            )?;
        }
        Ok(())
    }
}

/// One update as it happened, for offline replay.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecordedPair {
    pub pair: TriplePair,
    pub family: LossFamily,
    pub loss: f64,
    pub lr: f64,
}

/// Partition of each draw, interleaved so that after any prefix the AR
/// share tracks `ar_mass / total_mass`.
fn schedule(n: usize, ar_mass: f64, ir_mass: f64) -> Vec<Category> {
    let total = ar_mass + ir_mass;
    let n_ar = if total > 0.0 {
        ((n as f64) * ar_mass / total).round() as usize
    } else {
        0
    };
    let mut acc = 0usize;
    (0..n)
        .map(|_| {
            acc += n_ar;
            if acc >= n {
                acc -= n;
                Category::AR
            } else {
                Category::IR
            }
        })
        .collect()
}

/// Stateful trainer; [`train`] wraps it for one-shot runs.
pub struct Trainer<'a> {
    graph: &'a HeteroGraph,
    triples: &'a TripleStore,
    cfg: TrainConfig,
    store: EmbeddingStore,
    rng: SeededRng,
    epoch: usize,
    initial_loss: Option<f64>,
    report: TrainReport,
    recording: bool,
    log: Vec<RecordedPair>,
}

fn relation_rows(triples: &TripleStore, variant: Variant) -> Vec<bool> {
    triples
        .relations()
        .iter()
        .map(|r| variant.family(r.category) == LossFamily::Translation)
        .collect()
}

impl<'a> Trainer<'a> {
    pub fn new(graph: &'a HeteroGraph, triples: &'a TripleStore, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if triples.is_empty() {
            return Err(Error::Config("no triples to train on".into()));
        }
        let mut rng = SeededRng::seed_from_u64(cfg.seed);
        let store = EmbeddingStore::uniform(
            graph.node_count(),
            &relation_rows(triples, cfg.variant),
            cfg.dim,
            &mut rng,
        )?;
        let mode = if cfg.threads > 1 {
            ExecutionMode::Parallel { threads: cfg.threads }
        } else {
            ExecutionMode::Deterministic
        };
        Ok(Trainer {
            graph,
            triples,
            report: TrainReport {
                epochs: Vec::new(),
                sample_counts: vec![0; triples.relations().len()],
                mode,
                wall_time: Duration::ZERO,
            },
            cfg,
            store,
            rng,
            epoch: 0,
            initial_loss: None,
            recording: false,
            log: Vec::new(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn embeddings(&self) -> &EmbeddingStore {
        &self.store
    }

    pub fn report(&self) -> &TrainReport {
        &self.report
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    /// Keep a log of every update of the following epochs.
    pub fn set_recording(&mut self, on: bool) {
        self.recording = on;
    }

    pub fn take_log(&mut self) -> Vec<RecordedPair> {
        std::mem::take(&mut self.log)
    }

    pub fn into_parts(self) -> (EmbeddingStore, TrainReport) {
        (self.store, self.report)
    }

    fn samples_per_epoch(&self) -> usize {
        self.cfg.samples_per_epoch.unwrap_or(self.triples.len())
    }

    /// Trains until `cfg.epochs` epochs are done.
    pub fn run(&mut self) -> Result<()> {
        while self.epoch < self.cfg.epochs {
            self.run_epoch()?;
        }
        Ok(())
    }

    pub fn run_epoch(&mut self) -> Result<EpochStats> {
        let started = Instant::now();
        let n = self.samples_per_epoch();
        let plan = schedule(
            n,
            self.triples.partition(Category::AR).total_weight(),
            self.triples.partition(Category::IR).total_weight(),
        );
        let lr = self.cfg.epoch_lr(self.epoch);
        let epoch = self.epoch;
        let result = if self.cfg.threads > 1 {
            self.parallel_epoch(&plan, lr)
        } else {
            self.sequential_epoch(&plan, lr)
        };
        let tally = result.map_err(|e| match e {
            Error::NonFinite => Error::Divergence {
                epoch,
                reason: "non-finite gradient".into(),
            },
            other => other,
        })?;

        let pairs = tally.pairs.max(1) as f64;
        let stats = EpochStats {
            epoch,
            euclidean_loss: tally.euclidean / pairs,
            translation_loss: tally.translation / pairs,
            pairs: tally.pairs,
        };
        for (acc, c) in self.report.sample_counts.iter_mut().zip(&tally.counts) {
            *acc += c;
        }
        let mean = stats.total();
        if !mean.is_finite() {
            return Err(Error::Divergence {
                epoch,
                reason: "non-finite loss".into(),
            });
        }
        match self.initial_loss {
            None => self.initial_loss = Some(mean),
            Some(first) if first > 0.0 && mean > self.cfg.divergence_factor * first => {
                return Err(Error::Divergence {
                    epoch,
                    reason: format!("mean loss {mean} exceeds {} x {first}", self.cfg.divergence_factor),
                });
            }
            _ => {}
        }
        self.report.epochs.push(stats);
        self.report.wall_time += started.elapsed();
        self.epoch += 1;
        debug!("epoch {epoch}: loss {mean:.6}");
        Ok(stats)
    }

    fn sequential_epoch(&mut self, plan: &[Category], lr: f64) -> Result<Tally> {
        let loss_cfg = self.cfg.loss();
        let mut tally = Tally::new(self.triples.relations().len());
        let mut ws = Workspace::new(self.cfg.dim);
        let (ar, ir) = (self.triples.partition(Category::AR), self.triples.partition(Category::IR));
        for &planned in plan {
            let part = if (planned == Category::AR && !ar.is_empty()) || ir.is_empty() {
                Category::AR
            } else {
                Category::IR
            };
            let positive = self.triples.sample_positive(part, &mut self.rng)?;
            tally.counts[positive.relation.index()] += 1;
            let family = self.cfg.variant.family(part);
            for _ in 0..self.cfg.negatives {
                let (negative, _) =
                    self.triples
                        .corrupt(&positive, self.graph, self.cfg.filter_negatives, &mut self.rng)?;
                let pair = TriplePair { positive, negative };
                let loss = model::step_with(&mut ws, &mut self.store, &pair, family, &loss_cfg, lr, self.cfg.max_norm)?;
                tally.add(family, loss);
                if self.recording {
                    self.log.push(RecordedPair { pair, family, loss, lr });
                }
            }
        }
        Ok(tally)
    }

    fn parallel_epoch(&mut self, plan: &[Category], lr: f64) -> Result<Tally> {
        let threads = self.cfg.threads.min(plan.len().max(1));
        let seeds: Vec<u64> = (0..threads).map(|_| self.rng.next_u64()).collect();
        let shared = SharedEmbeddings::new(&self.store);
        let chunk = plan.len().div_ceil(threads);
        let loss_cfg = self.cfg.loss();
        let (graph, triples, cfg) = (self.graph, self.triples, &self.cfg);
        let results: Vec<Result<Tally>> = std::thread::scope(|scope| {
            let handles: Vec<_> = plan
                .chunks(chunk.max(1))
                .zip(&seeds)
                .map(|(part_plan, &seed)| {
                    let shared = &shared;
                    scope.spawn(move || -> Result<Tally> {
                        let mut rng = SeededRng::seed_from_u64(seed);
                        let mut ws = Workspace::new(cfg.dim);
                        let mut tally = Tally::new(triples.relations().len());
                        let (ar, ir) = (triples.partition(Category::AR), triples.partition(Category::IR));
                        for &planned in part_plan {
                            let part = if (planned == Category::AR && !ar.is_empty()) || ir.is_empty() {
                                Category::AR
                            } else {
                                Category::IR
                            };
                            let positive = triples.sample_positive(part, &mut rng)?;
                            tally.counts[positive.relation.index()] += 1;
                            let family = cfg.variant.family(part);
                            for _ in 0..cfg.negatives {
                                let (negative, _) =
                                    triples.corrupt(&positive, graph, cfg.filter_negatives, &mut rng)?;
                                let pair = TriplePair { positive, negative };
                                let loss = ws.step(shared, &pair, family, &loss_cfg, lr, cfg.max_norm)?;
                                tally.add(family, loss);
                            }
                        }
                        Ok(tally)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        });
        shared.copy_into(&mut self.store);
        let mut total = Tally::new(self.triples.relations().len());
        for r in results {
            total.merge(r?);
        }
        Ok(total)
    }

    /// Persists everything needed to continue the run.
    pub fn checkpoint(&self, path: &Path) -> Result<()> {
        if path.as_os_str().is_empty() {
            return Err(Error::Checkpoint("empty checkpoint path".into()));
        }
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(CHECKPOINT_MAGIC)?;
        put_u32(&mut out, CHECKPOINT_VERSION)?;
        put_u32(&mut out, self.store.dim() as u32)?;
        put_u64(&mut out, self.store.node_count() as u64)?;
        put_u32(&mut out, self.store.relation_count() as u32)?;
        for row in self.store.relation_rows() {
            out.write_all(&[row.is_some() as u8])?;
        }
        out.write_all(&[self.cfg.variant.tag()])?;
        put_u64(&mut out, self.epoch as u64)?;
        out.write_all(&self.rng.get_seed())?;
        put_u64(&mut out, self.rng.get_stream())?;
        out.write_all(&self.rng.get_word_pos().to_le_bytes())?;
        put_f64(&mut out, self.initial_loss.unwrap_or(f64::NAN))?;
        put_u64(&mut out, self.report.epochs.len() as u64)?;
        for e in &self.report.epochs {
            put_u64(&mut out, e.epoch as u64)?;
            put_f64(&mut out, e.euclidean_loss)?;
            put_f64(&mut out, e.translation_loss)?;
            put_u64(&mut out, e.pairs)?;
        }
        for c in &self.report.sample_counts {
            put_u64(&mut out, *c)?;
        }
        for x in self.store.node_matrix().iter().chain(self.store.relation_matrix()) {
            put_f64(&mut out, *x)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Rebuilds a trainer from a checkpoint written by [`Trainer::checkpoint`]
    /// for the same graph, triples and configuration.
    pub fn resume(
        graph: &'a HeteroGraph,
        triples: &'a TripleStore,
        cfg: TrainConfig,
        path: &Path,
    ) -> Result<Self> {
        if path.as_os_str().is_empty() {
            return Err(Error::Checkpoint("empty checkpoint path".into()));
        }
        let mut t = Trainer::new(graph, triples, cfg)?;
        let mut input = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = get_u32(&mut input)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "checkpoint version {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let dim = get_u32(&mut input)? as usize;
        if dim != t.cfg.dim {
            return Err(Error::Checkpoint(format!(
                "checkpoint has dimension {dim}, configuration asks for {}",
                t.cfg.dim
            )));
        }
        let n_nodes = get_u64(&mut input)? as usize;
        let n_rel = get_u32(&mut input)? as usize;
        if n_nodes != graph.node_count() || n_rel != triples.relations().len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint covers {n_nodes} nodes and {n_rel} relations, data has {} and {}",
                graph.node_count(),
                triples.relations().len()
            )));
        }
        let mut flags = vec![0u8; n_rel];
        input.read_exact(&mut flags)?;
        let expected: Vec<u8> = t.store.relation_rows().iter().map(|r| r.is_some() as u8).collect();
        let mut tag = [0u8; 1];
        input.read_exact(&mut tag)?;
        if flags != expected || tag[0] != t.cfg.variant.tag() {
            return Err(Error::Checkpoint("checkpoint was written for another variant".into()));
        }
        t.epoch = get_u64(&mut input)? as usize;
        let mut seed = [0u8; 32];
        input.read_exact(&mut seed)?;
        let stream = get_u64(&mut input)?;
        let mut pos = [0u8; 16];
        input.read_exact(&mut pos)?;
        let mut rng = SeededRng::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(u128::from_le_bytes(pos));
        t.rng = rng;
        let initial = get_f64(&mut input)?;
        t.initial_loss = (!initial.is_nan()).then_some(initial);
        let n_epochs = get_u64(&mut input)? as usize;
        t.report.epochs = (0..n_epochs)
            .map(|_| {
                Ok(EpochStats {
                    epoch: get_u64(&mut input)? as usize,
                    euclidean_loss: get_f64(&mut input)?,
                    translation_loss: get_f64(&mut input)?,
                    pairs: get_u64(&mut input)?,
                })
            })
            .collect::<Result<_>>()?;
        for c in t.report.sample_counts.iter_mut() {
            *c = get_u64(&mut input)?;
        }
        let node_len = t.store.node_matrix().len();
        let rel_len = t.store.relation_matrix().len();
        let mut read_vec = |len: usize| (0..len).map(|_| get_f64(&mut input)).collect::<Result<Vec<_>>>();
        let nodes = read_vec(node_len)?;
        let relations = read_vec(rel_len)?;
        t.store = EmbeddingStore::from_parts(dim, nodes, relations, t.store.relation_rows().to_vec())?;
        info!("resumed from epoch {}", t.epoch);
        Ok(t)
    }
}

struct Tally {
    euclidean: f64,
    translation: f64,
    pairs: u64,
    counts: Vec<u64>,
}

impl Tally {
    fn new(n_relations: usize) -> Self {
        Tally {
            euclidean: 0.0,
            translation: 0.0,
            pairs: 0,
            counts: vec![0; n_relations],
        }
    }

    fn add(&mut self, family: LossFamily, loss: f64) {
        match family {
            LossFamily::Euclidean => self.euclidean += loss,
            LossFamily::Translation => self.translation += loss,
        }
        self.pairs += 1;
    }

    fn merge(&mut self, other: Tally) {
        self.euclidean += other.euclidean;
        self.translation += other.translation;
        self.pairs += other.pairs;
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"HINEMBCK";
const CHECKPOINT_VERSION: u32 = 1;

fn put_u32<W: Write>(w: &mut W, x: u32) -> std::io::Result<()> {
    w.write_all(&x.to_le_bytes())
}
fn put_u64<W: Write>(w: &mut W, x: u64) -> std::io::Result<()> {
    w.write_all(&x.to_le_bytes())
}
fn put_f64<W: Write>(w: &mut W, x: f64) -> std::io::Result<()> {
    w.write_all(&x.to_le_bytes())
}
fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}
fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}
fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(f64::from_le_bytes(b))
}
fn truncated(e: std::io::Error) -> Error {
    Error::Checkpoint(format!("truncated checkpoint: {e}"))
}

/// Trains embeddings from scratch.
pub fn train(g: &HeteroGraph, triples: &TripleStore, cfg: TrainConfig) -> Result<(EmbeddingStore, TrainReport)> {
    let mut t = Trainer::new(g, triples, cfg)?;
    t.run()?;
    Ok(t.into_parts())
}
