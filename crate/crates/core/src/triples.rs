//! Node-relation triples, weighted positive sampling and corruption.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::warn;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{data_lines, HeteroGraph, NodeId, NodeTypeId, RelationKind, RelationSpec};
pub use crate::measures::Category;

/// Index of a relation in the configured relation list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId(pub u16);

impl RelationId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// `<head, relation, tail>` with its instance weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triple {
    pub head: NodeId,
    pub relation: RelationId,
    pub tail: NodeId,
    pub weight: f64,
}

/// One triple per distinct connected pair; the weight sums the weights of
/// the parallel edges between the pair.
pub fn extract_atomic(g: &HeteroGraph, r: &RelationSpec, id: RelationId) -> Result<Vec<Triple>> {
    let RelationKind::Atomic(edge_type) = r.kind else {
        return Err(Error::Config(format!("relation `{}` is not atomic", r.name)));
    };
    if edge_type.0 as usize >= g.schema().edge_types().len() {
        return Err(Error::UnknownType {
            kind: "edge type",
            name: format!("{edge_type:?}"),
        });
    }
    let mut pairs: BTreeMap<(NodeId, NodeId), f64> = BTreeMap::new();
    for e in g.edges().iter().filter(|e| e.edge_type == edge_type) {
        *pairs.entry((e.source, e.target)).or_default() += e.weight;
    }
    Ok(pairs
        .into_iter()
        .map(|((head, tail), weight)| Triple {
            head,
            relation: id,
            tail,
            weight,
        })
        .collect())
}

/// One triple per connected end pair; the weight sums, over all path
/// instances between the pair, the product of edge weights (the number of
/// path instances for unit weights).
pub fn extract_metapath(g: &HeteroGraph, r: &RelationSpec, id: RelationId) -> Result<Vec<Triple>> {
    let RelationKind::Composite(path) = &r.kind else {
        return Err(Error::Config(format!("relation `{}` is not a meta-path", r.name)));
    };
    if let Some(bad) = path
        .edge_types
        .iter()
        .find(|e| e.0 as usize >= g.schema().edge_types().len())
    {
        return Err(Error::UnknownType {
            kind: "edge type",
            name: format!("{bad:?}"),
        });
    }
    let mut triples = Vec::new();
    for &u in g.nodes_of_type(r.source_type) {
        for (v, mass) in g.reach(r, u) {
            triples.push(Triple {
                head: u,
                relation: id,
                tail: v,
                weight: mass.weight,
            });
        }
    }
    Ok(triples)
}

pub fn extract(g: &HeteroGraph, r: &RelationSpec, id: RelationId) -> Result<Vec<Triple>> {
    match r.kind {
        RelationKind::Atomic(_) => extract_atomic(g, r, id),
        RelationKind::Composite(_) => extract_metapath(g, r, id),
    }
    .map_err(|e| e.in_relation(&r.name))
}

/// What the store needs to know about each configured relation.
#[derive(Clone, Debug, PartialEq)]
pub struct RelationInfo {
    pub name: String,
    pub category: Category,
    pub source_type: NodeTypeId,
    pub target_type: NodeTypeId,
}

impl RelationInfo {
    pub fn new(spec: &RelationSpec, category: Category) -> Self {
        RelationInfo {
            name: spec.name.clone(),
            category,
            source_type: spec.source_type,
            target_type: spec.target_type,
        }
    }
}

/// Triples of one category with a cumulative-weight table for sampling.
#[derive(Clone, Debug, Default)]
pub struct Partition {
    triples: Vec<Triple>,
    cumulative: Vec<f64>,
}

impl Partition {
    fn new(triples: Vec<Triple>) -> Self {
        let mut acc = 0.0;
        let cumulative = triples
            .iter()
            .map(|t| {
                acc += t.weight;
                acc
            })
            .collect();
        Partition { triples, cumulative }
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// Draws a triple with probability `weight / total_weight`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<&Triple> {
        let total = self.total_weight();
        if self.triples.is_empty() {
            return None;
        }
        let x = rng.gen::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= x);
        Some(&self.triples[i.min(self.triples.len() - 1)])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Head,
    Tail,
}

/// All positive triples split into AR and IR partitions.
#[derive(Clone, Debug)]
pub struct TripleStore {
    relations: Vec<RelationInfo>,
    ar: Partition,
    ir: Partition,
    known: HashSet<(NodeId, RelationId, NodeId)>,
}

impl TripleStore {
    /// `per_relation[i]` holds the triples of `relations[i]`; every triple's
    /// relation id must equal its slot.
    pub fn build(relations: Vec<RelationInfo>, per_relation: Vec<Vec<Triple>>) -> Result<Self> {
        if relations.len() != per_relation.len() {
            return Err(Error::Config(format!(
                "{} relations but {} triple lists",
                relations.len(),
                per_relation.len()
            )));
        }
        let (mut ar, mut ir) = (Vec::new(), Vec::new());
        let mut known = HashSet::new();
        for (i, triples) in per_relation.into_iter().enumerate() {
            for t in &triples {
                if t.relation.index() != i {
                    return Err(Error::Config(format!(
                        "triple filed under `{}` carries relation id {}",
                        relations[i].name, t.relation.0
                    )));
                }
                if !(t.weight.is_finite() && t.weight > 0.0) {
                    return Err(Error::Config(format!(
                        "triple of `{}` has non-positive weight {}",
                        relations[i].name, t.weight
                    )));
                }
                known.insert((t.head, t.relation, t.tail));
            }
            match relations[i].category {
                Category::AR => ar.extend(triples),
                Category::IR => ir.extend(triples),
            }
        }
        let store = TripleStore {
            relations,
            ar: Partition::new(ar),
            ir: Partition::new(ir),
            known,
        };
        for c in [Category::AR, Category::IR] {
            if store.partition(c).is_empty() {
                warn!("{c} partition is empty");
            }
        }
        Ok(store)
    }

    /// Extracts every relation from the graph and builds the store.
    pub fn from_graph(
        g: &HeteroGraph,
        relations: &[RelationSpec],
        categories: &[Category],
    ) -> Result<Self> {
        if relations.len() != categories.len() {
            return Err(Error::Config("every relation needs a category".into()));
        }
        let per_relation = relations
            .iter()
            .enumerate()
            .map(|(i, r)| extract(g, r, RelationId(i as u16)))
            .collect::<Result<Vec<_>>>()?;
        let infos = relations
            .iter()
            .zip(categories)
            .map(|(r, c)| RelationInfo::new(r, *c))
            .collect();
        Self::build(infos, per_relation)
    }

    pub fn relations(&self) -> &[RelationInfo] {
        &self.relations
    }

    pub fn relation(&self, id: RelationId) -> &RelationInfo {
        &self.relations[id.index()]
    }

    pub fn partition(&self, c: Category) -> &Partition {
        match c {
            Category::AR => &self.ar,
            Category::IR => &self.ir,
        }
    }

    pub fn len(&self) -> usize {
        self.ar.len() + self.ir.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, head: NodeId, relation: RelationId, tail: NodeId) -> bool {
        self.known.contains(&(head, relation, tail))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Triple> {
        self.ar.triples.iter().chain(self.ir.triples.iter())
    }

    pub fn sample_positive<R: Rng + ?Sized>(&self, partition: Category, rng: &mut R) -> Result<Triple> {
        self.partition(partition)
            .sample(rng)
            .copied()
            .ok_or(Error::EmptyPartition(partition))
    }

    /// Replaces either the head or the tail (fair coin) by a different node
    /// of the same type. The other side is used when the chosen side's type
    /// has a single node. With `filtered`, replacements that are themselves
    /// known positives are redrawn a bounded number of times.
    pub fn corrupt<R: Rng + ?Sized>(
        &self,
        t: &Triple,
        g: &HeteroGraph,
        filtered: bool,
        rng: &mut R,
    ) -> Result<(Triple, Side)> {
        let info = self.relation(t.relation);
        let heads = g.nodes_of_type(info.source_type);
        let tails = g.nodes_of_type(info.target_type);
        let coin = rng.gen::<bool>();
        let side = match (coin, heads.len() >= 2, tails.len() >= 2) {
            (_, false, false) => {
                let (ty, size) = if heads.len() <= tails.len() {
                    (info.source_type, heads.len())
                } else {
                    (info.target_type, tails.len())
                };
                return Err(Error::PoolTooSmall {
                    node_type: g.schema().node_type(ty).name.clone(),
                    size,
                });
            }
            (true, true, _) | (false, true, false) => Side::Head,
            _ => Side::Tail,
        };
        const MAX_REDRAWS: usize = 16;
        let mut out = *t;
        for _ in 0..MAX_REDRAWS {
            out = *t;
            match side {
                Side::Head => out.head = draw_other(heads, t.head, rng),
                Side::Tail => out.tail = draw_other(tails, t.tail, rng),
            }
            if !filtered || !self.contains(out.head, out.relation, out.tail) {
                break;
            }
        }
        Ok((out, side))
    }
}

/// Uniform draw from `pool` minus `exclude` (which need not be in the pool).
fn draw_other<R: Rng + ?Sized>(pool: &[NodeId], exclude: NodeId, rng: &mut R) -> NodeId {
    let n = pool.len();
    if !pool.contains(&exclude) {
        return pool[rng.gen_range(0..n)];
    }
    let candidate = pool[rng.gen_range(0..n - 1)];
    if candidate == exclude {
        pool[n - 1]
    } else {
        candidate
    }
}

/// Writes `u<TAB>relation<TAB>v<TAB>w` lines using the graph's node ids.
pub fn write_triples<'a>(
    path: &Path,
    g: &HeteroGraph,
    relations: &[RelationSpec],
    triples: impl IntoIterator<Item = &'a Triple>,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for t in triples {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            g.node_name(t.head),
            relations[t.relation.index()].name,
            g.node_name(t.tail),
            t.weight
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a triple file back, grouped by position in `relations`.
pub fn read_triples(path: &Path, g: &HeteroGraph, relations: &[RelationSpec]) -> Result<Vec<Vec<Triple>>> {
    let mut grouped = vec![Vec::new(); relations.len()];
    for (line_no, fields) in data_lines(path)? {
        let fields = fields?;
        if fields.len() != 4 {
            return Err(Error::parse(path, line_no, "expected `u<TAB>relation<TAB>v<TAB>w`"));
        }
        let rel = relations
            .iter()
            .position(|r| r.name == fields[1])
            .ok_or_else(|| Error::parse(path, line_no, format!("unknown relation `{}`", fields[1])))?;
        let node = |name: &str| {
            g.node(name).ok_or_else(|| Error::DanglingEndpoint {
                file: path.to_path_buf(),
                line: line_no,
                id: name.to_string(),
            })
        };
        let (head, tail) = (node(&fields[0])?, node(&fields[2])?);
        let spec = &relations[rel];
        if g.node_type(head) != spec.source_type || g.node_type(tail) != spec.target_type {
            return Err(Error::parse(
                path,
                line_no,
                format!("endpoint types do not match relation `{}`", spec.name),
            ));
        }
        let weight: f64 = fields[3]
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("bad weight `{}`", fields[3])))?;
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::parse(path, line_no, "weight must be positive"));
        }
        grouped[rel].push(Triple {
            head,
            relation: RelationId(rel as u16),
            tail,
            weight,
        });
    }
    Ok(grouped)
}
