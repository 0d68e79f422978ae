//! Structural measures of relations and the AR/IR split.
//!
//! The degree ratio compares the average number of relation instances per
//! node on each side of a relation; affiliation relations (one side centred
//! on the other) have a large ratio, interaction relations (peer to peer)
//! have a ratio near one. Sparsity divides the number of connected node
//! pairs by the number of possible pairs.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, RelationSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    /// Affiliation relation.
    AR,
    /// Interaction relation.
    IR,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::AR => "AR",
            Category::IR => "IR",
        })
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "AR" => Ok(Category::AR),
            "IR" => Ok(Category::IR),
            _ => Err(Error::Config(format!("unknown relation category `{s}`"))),
        }
    }
}

/// Which measure drives [`categorize`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Measure {
    DegreeRatio,
    Sparsity,
    Both,
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "degree_ratio" | "degree-ratio" | "D" => Ok(Measure::DegreeRatio),
            "sparsity" | "S" => Ok(Measure::Sparsity),
            "both" => Ok(Measure::Both),
            _ => Err(Error::Config(format!("unknown measure `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CategorizationPolicy {
    pub measure: Measure,
    /// A relation whose degree ratio is strictly above this is an AR.
    pub d_threshold: f64,
    /// A relation whose sparsity is strictly above this is an AR.
    pub s_threshold: f64,
    pub overrides: BTreeMap<String, Category>,
}

impl Default for CategorizationPolicy {
    fn default() -> Self {
        CategorizationPolicy {
            measure: Measure::DegreeRatio,
            d_threshold: 10.0,
            s_threshold: 0.01,
            overrides: BTreeMap::new(),
        }
    }
}

impl CategorizationPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_threshold.is_finite() && self.d_threshold > 1.0) {
            return Err(Error::Config(format!(
                "d_threshold must be greater than 1, got {}",
                self.d_threshold
            )));
        }
        if !(self.s_threshold > 0.0 && self.s_threshold < 1.0) {
            return Err(Error::Config(format!(
                "s_threshold must lie in (0, 1), got {}",
                self.s_threshold
            )));
        }
        Ok(())
    }
}

/// Raw counts behind the two measures for one relation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelationCounts {
    /// Relation instances: edges with multiplicity, or meta-path instances.
    pub instances: u64,
    /// Distinct connected (source, target) pairs, i.e. node-relation triples.
    pub pairs: u64,
    pub source_population: usize,
    pub target_population: usize,
}

impl RelationCounts {
    pub fn measure(g: &HeteroGraph, r: &RelationSpec) -> Result<Self> {
        let sources = g.nodes_of_type(r.source_type);
        let targets = g.nodes_of_type(r.target_type);
        for (t, nodes) in [(r.source_type, sources), (r.target_type, targets)] {
            if nodes.is_empty() {
                return Err(Error::EmptyPopulation(g.schema().node_type(t).name.clone()));
            }
        }
        let (mut instances, mut pairs) = (0u64, 0u64);
        for &u in sources {
            let reach = g.reach(r, u);
            pairs += reach.len() as u64;
            instances += reach.iter().map(|(_, m)| m.count).sum::<u64>();
        }
        Ok(RelationCounts {
            instances,
            pairs,
            source_population: sources.len(),
            target_population: targets.len(),
        })
    }

    pub fn avg_degrees(&self) -> (f64, f64) {
        (
            self.instances as f64 / self.source_population as f64,
            self.instances as f64 / self.target_population as f64,
        )
    }
}

/// `max(a, b) / min(a, b)` of two average degrees.
pub fn degree_ratio_of(avg_source: f64, avg_target: f64) -> Result<f64> {
    let (hi, lo) = if avg_source >= avg_target {
        (avg_source, avg_target)
    } else {
        (avg_target, avg_source)
    };
    if !(lo > 0.0) {
        return Err(Error::Config(
            "degree ratio is undefined when an average degree is zero".into(),
        ));
    }
    Ok(hi / lo)
}

/// Connected pairs over possible pairs.
pub fn sparsity_of(pairs: u64, source_population: usize, target_population: usize) -> f64 {
    pairs as f64 / (source_population as f64 * target_population as f64)
}

pub fn degree_ratio(g: &HeteroGraph, r: &RelationSpec) -> Result<f64> {
    let counts = RelationCounts::measure(g, r)?;
    if counts.instances == 0 {
        return Err(Error::NoInstances(r.name.clone()));
    }
    let (u, v) = counts.avg_degrees();
    degree_ratio_of(u, v)
}

pub fn sparsity(g: &HeteroGraph, r: &RelationSpec) -> Result<f64> {
    let counts = RelationCounts::measure(g, r)?;
    Ok(sparsity_of(
        counts.pairs,
        counts.source_population,
        counts.target_population,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RelationStats {
    pub relation: String,
    pub n_instances: u64,
    pub n_pairs: u64,
    pub avg_degree_u: f64,
    pub avg_degree_v: f64,
    pub degree_ratio: f64,
    pub sparsity: f64,
    pub category: Category,
}

impl RelationStats {
    /// Builds stats from already-known averages, as when the averages are
    /// taken from a published table rather than a graph.
    pub fn from_parts(
        relation: &str,
        n_instances: u64,
        n_pairs: u64,
        source_population: usize,
        target_population: usize,
        avg_degree_u: f64,
        avg_degree_v: f64,
        policy: &CategorizationPolicy,
    ) -> Result<Self> {
        let mut stats = RelationStats {
            relation: relation.to_string(),
            n_instances,
            n_pairs,
            avg_degree_u,
            avg_degree_v,
            degree_ratio: degree_ratio_of(avg_degree_u, avg_degree_v)?,
            sparsity: sparsity_of(n_pairs, source_population, target_population),
            category: Category::IR,
        };
        stats.category = categorize(&stats, policy);
        Ok(stats)
    }

    pub fn from_counts(relation: &str, counts: &RelationCounts, policy: &CategorizationPolicy) -> Result<Self> {
        if counts.instances == 0 {
            return Err(Error::NoInstances(relation.to_string()));
        }
        let (u, v) = counts.avg_degrees();
        Self::from_parts(
            relation,
            counts.instances,
            counts.pairs,
            counts.source_population,
            counts.target_population,
            u,
            v,
            policy,
        )
    }
}

/// AR when the selected measure is strictly above its threshold; a manual
/// override always wins and ties go to IR.
pub fn categorize(stats: &RelationStats, policy: &CategorizationPolicy) -> Category {
    if let Some(c) = policy.overrides.get(&stats.relation) {
        return *c;
    }
    let by_degree = stats.degree_ratio > policy.d_threshold;
    let by_sparsity = stats.sparsity > policy.s_threshold;
    let affiliation = match policy.measure {
        Measure::DegreeRatio => by_degree,
        Measure::Sparsity => by_sparsity,
        Measure::Both => by_degree && by_sparsity,
    };
    if affiliation {
        Category::AR
    } else {
        Category::IR
    }
}

pub fn analyze_all(
    g: &HeteroGraph,
    relations: &[RelationSpec],
    policy: &CategorizationPolicy,
) -> Result<Vec<RelationStats>> {
    if relations.is_empty() {
        return Err(Error::Config("no relations to analyze".into()));
    }
    policy.validate()?;
    for name in policy.overrides.keys() {
        if !relations.iter().any(|r| &r.name == name) {
            return Err(Error::UnknownRelation(name.clone()));
        }
    }
    relations
        .iter()
        .map(|r| {
            RelationCounts::measure(g, r)
                .and_then(|c| RelationStats::from_counts(&r.name, &c, policy))
                .map_err(|e| e.in_relation(&r.name))
        })
        .collect()
}

/// Formats `x` with `digits` significant digits in positional notation.
pub fn significant(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

pub const REPORT_HEADER: &str = "relation\tN_r\tavg_deg_u\tavg_deg_v\tD\tS\tcategory";

pub fn write_report<W: Write>(out: &mut W, stats: &[RelationStats]) -> std::io::Result<()> {
    writeln!(out, "{REPORT_HEADER}")?;
    for s in stats {
        writeln!(
            out,
            "{}\t{}\t{:.1}\t{:.1}\t{:.1}\t{}\t{}",
            s.relation,
            s.n_pairs,
            s.avg_degree_u,
            s.avg_degree_v,
            s.degree_ratio,
            significant(s.sparsity, 5),
            s.category
        )?;
    }
    Ok(())
}
