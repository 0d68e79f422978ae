//! Stage orchestration: analyze, extract, train, eval, variants, export.
//!
//! Each stage writes its outputs as `*.partial` files, records their
//! digests in the manifest, writes the manifest and only then renames the
//! outputs into place. A stage is skipped when the previous manifest holds
//! the same fingerprint and its outputs are still on disk unchanged.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context as _, Result};
use hin_embed::eval::{self, EvalTasks, LabeledNodes, LinkSplit};
use hin_embed::measures::{analyze_all, write_report};
use hin_embed::synth::planted_hin;
use hin_embed::train::Trainer;
use hin_embed::triples::{read_triples, write_triples, RelationInfo};
use hin_embed::{EmbeddingStore, HeteroGraph, NodeId, RelationSpec, RelationStats, TripleStore};
use log::info;

use crate::config::Config;
use crate::manifest::{creation_time, outputs_intact, sha256_file, sha256_parts, FileDigest, RunManifest, StageRecord, MANIFEST_FILE};

pub const STAGES: &[&str] = &["analyze", "extract", "train", "eval", "variants", "export"];

pub const ANALYSIS_FILE: &str = "analysis.tsv";
pub const TRIPLES_FILE: &str = "triples.tsv";
pub const SPLIT_FILE: &str = "split.tsv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const METRICS_FILE: &str = "train_metrics.tsv";
pub const EVAL_TSV: &str = "eval.tsv";
pub const EVAL_JSON: &str = "eval.json";
pub const VARIANTS_TSV: &str = "variants.tsv";
pub const VARIANTS_JSON: &str = "variants.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.tsv";
pub const RELATION_EMBEDDINGS_FILE: &str = "relation_embeddings.tsv";

/// Config keys naming files a run reads.
const INPUT_KEYS: &[&str] = &["nodes", "edges", "schema", "labels", "triples", "embeddings", "split", "resume"];

fn primary_output(stage: &str) -> &'static str {
    match stage {
        "analyze" => ANALYSIS_FILE,
        "extract" => TRIPLES_FILE,
        "train" => METRICS_FILE,
        "eval" => EVAL_TSV,
        "variants" => VARIANTS_TSV,
        _ => EMBEDDINGS_FILE,
    }
}

fn partial(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.partial"))
}

/// Loaded data shared between stages; derived pieces are built on demand.
struct Context<'c> {
    cfg: &'c Config,
    out: PathBuf,
    graph: HeteroGraph,
    split: Option<LinkSplit>,
    /// Training graph when a link split holds edges out.
    held_out: Option<HeteroGraph>,
    relations: Vec<RelationSpec>,
    stats: Option<Vec<RelationStats>>,
    triples: Option<TripleStore>,
    embeddings: Option<EmbeddingStore>,
}

impl<'c> Context<'c> {
    fn load(cfg: &'c Config) -> Result<Self> {
        let graph = HeteroGraph::load(
            &cfg.required_path("nodes")?,
            &cfg.required_path("edges")?,
            &cfg.required_path("schema")?,
        )
        .context("loading graph")?;
        let link_relation = cfg.get("link_relation");
        let split = match cfg.path("split") {
            Some(p) => {
                let s = LinkSplit::read(&p, &graph)?;
                if !link_relation.is_empty() && s.relation != link_relation {
                    bail!("split file holds out `{}` but link_relation is `{link_relation}`", s.relation);
                }
                Some(s)
            }
            None if !link_relation.is_empty() => Some(LinkSplit::new(
                &graph,
                link_relation,
                cfg.test_fraction()?,
                cfg.split_seed()?,
            )?),
            None => None,
        };
        let held_out = split.as_ref().map(|s| s.train_graph(&graph));
        let names = cfg.list("relations");
        let relations = if names.is_empty() {
            graph.schema().relations()
        } else {
            names.iter().map(|n| graph.relation(n)).collect::<hin_embed::Result<_>>()?
        };
        Ok(Context {
            cfg,
            out: cfg.out_dir(),
            graph,
            split,
            held_out,
            relations,
            stats: None,
            triples: None,
            embeddings: None,
        })
    }

    /// The graph every model-facing stage sees.
    fn work(&self) -> &HeteroGraph {
        self.held_out.as_ref().unwrap_or(&self.graph)
    }

    fn stats(&mut self) -> Result<&[RelationStats]> {
        if self.stats.is_none() {
            let policy = self.cfg.policy()?;
            policy.validate()?;
            self.stats = Some(analyze_all(self.work(), &self.relations, &policy)?);
        }
        Ok(self.stats.as_deref().expect("just computed"))
    }

    fn triples(&mut self) -> Result<&TripleStore> {
        if self.triples.is_none() {
            let cats: Vec<_> = self.stats()?.iter().map(|s| s.category).collect();
            let store = match self.cfg.path("triples") {
                Some(p) => {
                    let grouped = read_triples(&p, self.work(), &self.relations)?;
                    let infos = self.relations.iter().zip(&cats).map(|(r, c)| RelationInfo::new(r, *c)).collect();
                    TripleStore::build(infos, grouped)?
                }
                None => TripleStore::from_graph(self.work(), &self.relations, &cats)?,
            };
            self.triples = Some(store);
        }
        Ok(self.triples.as_ref().expect("just built"))
    }

    fn embeddings(&mut self) -> Result<&EmbeddingStore> {
        if self.embeddings.is_none() {
            let store = if let Some(p) = self.cfg.path("embeddings") {
                reorder_embeddings(&p, &self.graph)?
            } else {
                let ckpt = self.out.join(CHECKPOINT_FILE);
                if !ckpt.exists() {
                    bail!("no embeddings: run the train stage or set `embeddings`");
                }
                let tc = self.cfg.train_config()?;
                self.triples()?;
                let t = Trainer::resume(self.work(), self.triples.as_ref().expect("built"), tc, &ckpt)?;
                t.embeddings().clone()
            };
            self.embeddings = Some(store);
        }
        Ok(self.embeddings.as_ref().expect("just loaded"))
    }

    fn labels(&self) -> Result<Option<LabeledNodes>> {
        match self.cfg.path("labels") {
            Some(p) => Ok(Some(LabeledNodes::read(&p, |n| self.graph.node(n))?)),
            None => Ok(None),
        }
    }
}

/// Reads a node embedding TSV and puts its rows in the graph's node order.
fn reorder_embeddings(path: &Path, g: &HeteroGraph) -> Result<EmbeddingStore> {
    let (names, store) = EmbeddingStore::read_nodes_tsv(path)?;
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut values = Vec::with_capacity(g.node_count() * store.dim());
    for name in g.node_names() {
        let i = index
            .get(name.as_str())
            .ok_or_else(|| anyhow!("{}: no embedding for node `{name}`", path.display()))?;
        values.extend_from_slice(store.node(NodeId(*i as u32)));
    }
    Ok(EmbeddingStore::from_parts(store.dim(), values, Vec::new(), Vec::new())?)
}

fn run_analyze(ctx: &mut Context) -> Result<Vec<&'static str>> {
    let path = partial(&ctx.out, ANALYSIS_FILE);
    let stats = ctx.stats()?;
    let mut f = fs::File::create(&path)?;
    write_report(&mut f, stats)?;
    Ok(vec![ANALYSIS_FILE])
}

fn run_extract(ctx: &mut Context) -> Result<Vec<&'static str>> {
    let path = partial(&ctx.out, TRIPLES_FILE);
    ctx.triples()?;
    let store = ctx.triples.as_ref().expect("built");
    write_triples(&path, ctx.work(), &ctx.relations, store.iter())?;
    let mut outputs = vec![TRIPLES_FILE];
    if let Some(s) = &ctx.split {
        s.write(&partial(&ctx.out, SPLIT_FILE), &ctx.graph)?;
        outputs.push(SPLIT_FILE);
    }
    Ok(outputs)
}

fn run_train(ctx: &mut Context) -> Result<Vec<&'static str>> {
    let tc = ctx.cfg.train_config()?;
    let every = ctx.cfg.checkpoint_every()?;
    let ckpt = partial(&ctx.out, CHECKPOINT_FILE);
    ctx.triples()?;
    let triples = ctx.triples.as_ref().expect("built");
    let g = ctx.held_out.as_ref().unwrap_or(&ctx.graph);
    let mut t = match ctx.cfg.path("resume") {
        Some(p) => Trainer::resume(g, triples, tc.clone(), &p)?,
        None => Trainer::new(g, triples, tc.clone())?,
    };
    let start = Instant::now();
    while t.epochs_done() < tc.epochs {
        let e = t.run_epoch()?;
        info!("epoch {}: loss {:.6}", e.epoch, e.total());
        if every > 0 && t.epochs_done() % every == 0 {
            t.checkpoint(&ckpt)?;
        }
    }
    t.checkpoint(&ckpt)?;
    let (store, report) = t.into_parts();
    info!("trained {} epochs in {:.2?}", report.epochs.len(), start.elapsed());
    let mut f = fs::File::create(partial(&ctx.out, METRICS_FILE))?;
    report.write_metrics(&mut f)?;
    ctx.embeddings = Some(store);
    Ok(vec![CHECKPOINT_FILE, METRICS_FILE])
}

fn eval_tasks<'a>(ctx: &'a Context, labels: Option<&'a LabeledNodes>) -> Result<EvalTasks<'a>> {
    let link = match &ctx.split {
        Some(s) => Some((s, ctx.cfg.link_feature()?)),
        None => None,
    };
    if labels.is_none() && link.is_none() {
        bail!("nothing to evaluate: set `labels` or `link_relation`");
    }
    Ok(EvalTasks {
        labels,
        clustering: labels.is_some(),
        classification: labels.is_some(),
        link,
        seed: ctx.cfg.eval_seed()?,
    })
}

fn run_eval(ctx: &mut Context) -> Result<Vec<&'static str>> {
    let labels = ctx.labels()?;
    let tc = ctx.cfg.train_config()?;
    ctx.triples()?;
    ctx.embeddings()?;
    let tasks = eval_tasks(ctx, labels.as_ref())?;
    let store = ctx.embeddings.as_ref().expect("loaded");
    let triples = ctx.triples.as_ref().expect("built");
    let result = eval::evaluate(store, triples, tc.variant, tc.loss(), &tasks)?;
    let mut f = fs::File::create(partial(&ctx.out, EVAL_TSV))?;
    writeln!(f, "{}", eval::Evaluation::TSV_HEADER)?;
    writeln!(f, "{}", result.tsv_fields())?;
    fs::write(partial(&ctx.out, EVAL_JSON), serde_json::to_string_pretty(&result)? + "\n")?;
    Ok(vec![EVAL_TSV, EVAL_JSON])
}

fn run_variants(ctx: &mut Context) -> Result<Vec<&'static str>> {
    let labels = ctx.labels()?;
    let tc = ctx.cfg.train_config()?;
    let variants = ctx.cfg.variants()?;
    if variants.is_empty() {
        bail!("`variants` is empty");
    }
    ctx.triples()?;
    let tasks = eval_tasks(ctx, labels.as_ref())?;
    let triples = ctx.triples.as_ref().expect("built");
    let rows = eval::compare_variants(ctx.work(), triples, &tc, &variants, &tasks)?;
    let mut f = fs::File::create(partial(&ctx.out, VARIANTS_TSV))?;
    eval::write_variant_table(&mut f, &rows)?;
    fs::write(partial(&ctx.out, VARIANTS_JSON), serde_json::to_string_pretty(&rows)? + "\n")?;
    Ok(vec![VARIANTS_TSV, VARIANTS_JSON])
}

fn run_export(ctx: &mut Context) -> Result<Vec<&'static str>> {
    ctx.embeddings()?;
    let store = ctx.embeddings.as_ref().expect("loaded");
    store.write_nodes_tsv(&partial(&ctx.out, EMBEDDINGS_FILE), ctx.graph.node_names())?;
    let names: Vec<String> = ctx.relations.iter().map(|r| r.name.clone()).collect();
    store.write_relations_tsv(&partial(&ctx.out, RELATION_EMBEDDINGS_FILE), &names)?;
    Ok(vec![EMBEDDINGS_FILE, RELATION_EMBEDDINGS_FILE])
}

fn input_digests(cfg: &Config) -> Result<Vec<FileDigest>> {
    INPUT_KEYS
        .iter()
        .filter_map(|k| cfg.path(k))
        .map(|p| {
            Ok(FileDigest {
                sha256: sha256_file(&p)?,
                path: p.display().to_string(),
            })
        })
        .collect()
}

/// Stages in pipeline order; unknown names are an error.
pub fn ordered_stages(requested: &[String]) -> Result<Vec<&'static str>> {
    for r in requested {
        if !STAGES.contains(&r.as_str()) {
            bail!("unknown stage `{r}`; expected one of {}", STAGES.join(", "));
        }
    }
    let ordered: Vec<_> = STAGES.iter().copied().filter(|s| requested.iter().any(|r| r == s)).collect();
    if ordered.is_empty() {
        bail!("no stages requested");
    }
    Ok(ordered)
}

/// Runs `stages` under `cfg`. When `echo` is set the main table of each
/// stage is copied to stdout.
pub fn run_pipeline(cfg: &Config, stages: &[String], echo: bool) -> Result<RunManifest> {
    let stages = ordered_stages(stages)?;
    cfg.train_config()?.validate().context("invalid training configuration")?;
    let out = cfg.out_dir();
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let manifest_path = out.join(MANIFEST_FILE);
    let previous = RunManifest::read(&manifest_path).ok();
    let inputs = input_digests(cfg)?;
    let config_text = cfg.to_text();
    let mut manifest = RunManifest {
        tool: "hinembed".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.train_config()?.seed,
        created: creation_time(),
        config: cfg.snapshot().iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        inputs,
        stages: Vec::new(),
    };
    let mut ctx = Context::load(cfg)?;
    for stage in stages {
        let mut parts = vec![stage.to_string(), config_text.clone()];
        parts.extend(manifest.inputs.iter().map(|i| i.sha256.clone()));
        for r in &manifest.stages {
            parts.extend(r.outputs.iter().map(|o| o.sha256.clone()));
        }
        let reads_checkpoint = matches!(stage, "eval" | "export") && cfg.path("embeddings").is_none();
        let ckpt = out.join(CHECKPOINT_FILE);
        if reads_checkpoint && manifest.stage("train").is_none() && ckpt.exists() {
            parts.push(sha256_file(&ckpt)?);
        }
        let fingerprint = sha256_parts(parts.iter().map(String::as_str));
        let cached = previous
            .as_ref()
            .and_then(|p| p.stage(stage))
            .filter(|r| r.fingerprint == fingerprint && outputs_intact(&out, r))
            .cloned();
        if let Some(record) = cached {
            info!("stage {stage}: up to date, skipped");
            manifest.upsert(record);
            manifest.write(&manifest_path)?;
        } else {
            let start = Instant::now();
            let outputs = match stage {
                "analyze" => run_analyze(&mut ctx),
                "extract" => run_extract(&mut ctx),
                "train" => run_train(&mut ctx),
                "eval" => run_eval(&mut ctx),
                "variants" => run_variants(&mut ctx),
                _ => run_export(&mut ctx),
            }
            .with_context(|| format!("stage `{stage}` failed"))?;
            let digests = outputs
                .iter()
                .map(|name| {
                    Ok(FileDigest {
                        path: name.to_string(),
                        sha256: sha256_file(&partial(&out, name))?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            manifest.upsert(StageRecord {
                name: stage.to_string(),
                fingerprint,
                outputs: digests,
            });
            manifest.write(&manifest_path)?;
            for name in &outputs {
                fs::rename(partial(&out, name), out.join(name))?;
            }
            info!("stage {stage}: done in {:.2?}", start.elapsed());
        }
        if echo {
            let text = fs::read_to_string(out.join(primary_output(stage)))?;
            print!("{text}");
        }
    }
    Ok(manifest)
}

/// Reads a config file, applies `overrides` and runs the stages it lists.
pub fn run_config_file(path: &Path, overrides: &[(String, String)]) -> Result<RunManifest> {
    let mut cfg = Config::load(path)?;
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    let stages = cfg.list("stages");
    run_pipeline(&cfg, &stages, false)
}

pub const SYNTH_FILES: [&str; 4] = ["nodes.tsv", "edges.tsv", "schema.tsv", "labels.tsv"];

/// Writes a planted-community network into `out_dir` and returns the
/// paths of the nodes, edges, schema and labels files.
pub fn synthesize(cfg: &Config) -> Result<[PathBuf; 4]> {
    let s = cfg.synth_config()?;
    let data = planted_hin(&s)?;
    let out = cfg.out_dir();
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let paths = SYNTH_FILES.map(|n| out.join(n));
    data.graph.write(&paths[0], &paths[1], &paths[2])?;
    data.labels.write(&paths[3], data.graph.node_names())?;
    info!(
        "synthetic network: {} nodes, {} edges, {} labeled nodes",
        data.graph.node_count(),
        data.graph.edge_count(),
        data.labels.len()
    );
    Ok(paths)
}
