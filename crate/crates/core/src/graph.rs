//! Typed graph data model.
//!
//! A [`HeteroGraph`] owns a [`Schema`] (node types, edge types with their
//! declared endpoint types, and named meta-paths), a dense node table and a
//! typed, weighted edge list with per-edge-type adjacency in both directions.
//! Node ids in files are opaque strings; internally they are dense `u32`
//! handles in file order.
//!
//! File formats (UTF-8, tab separated, `#` starts a comment line):
//!
//! * nodes: `node_id<TAB>node_type`
//! * edges: `src_id<TAB>dst_id<TAB>edge_type[<TAB>weight]`
//! * schema: `edge_type<TAB>src_type<TAB>dst_type<TAB>{directed|undirected}`
//!   and `metapath<TAB>NAME<TAB>edge_type1,edge_type2,...`

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeTypeId(pub u16);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeTypeId(pub u16);

/// Dense node handle, the row index of the node in every embedding matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeType {
    pub id: NodeTypeId,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeType {
    pub id: EdgeTypeId,
    pub name: String,
    pub source: NodeTypeId,
    pub target: NodeTypeId,
    pub directed: bool,
}

/// A composite relation `t1 -e1-> t2 ... -el-> t(l+1)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetaPath {
    pub name: String,
    /// `edge_types.len() + 1` entries.
    pub node_types: Vec<NodeTypeId>,
    pub edge_types: Vec<EdgeTypeId>,
}

impl MetaPath {
    pub fn len(&self) -> usize {
        self.edge_types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edge_types.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RelationKind {
    Atomic(EdgeTypeId),
    Composite(MetaPath),
}

/// A relation between two node types: either a single edge type or a meta-path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationSpec {
    pub name: String,
    pub kind: RelationKind,
    pub source_type: NodeTypeId,
    pub target_type: NodeTypeId,
}

impl RelationSpec {
    pub fn is_atomic(&self) -> bool {
        matches!(self.kind, RelationKind::Atomic(_))
    }

    /// Node types along the relation, endpoints included.
    pub fn node_types(&self, schema: &Schema) -> Vec<NodeTypeId> {
        match &self.kind {
            RelationKind::Atomic(e) => {
                let et = schema.edge_type(*e);
                vec![et.source, et.target]
            }
            RelationKind::Composite(m) => m.node_types.clone(),
        }
    }

    pub fn edge_types(&self) -> Vec<EdgeTypeId> {
        match &self.kind {
            RelationKind::Atomic(e) => vec![*e],
            RelationKind::Composite(m) => m.edge_types.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Endpoint {
    Source,
    Target,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Schema {
    node_types: Vec<NodeType>,
    edge_types: Vec<EdgeType>,
    metapaths: Vec<MetaPath>,
}

impl Schema {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a node type, returning the existing handle if the name is taken.
    pub fn add_node_type(&mut self, name: &str) -> NodeTypeId {
        if let Some(t) = self.node_type_id(name) {
            return t;
        }
        let id = NodeTypeId(self.node_types.len() as u16);
        self.node_types.push(NodeType {
            id,
            name: name.to_string(),
        });
        id
    }

    /// Declares an edge type. Endpoint node types are registered on demand.
    pub fn add_edge_type(
        &mut self,
        name: &str,
        source: &str,
        target: &str,
        directed: bool,
    ) -> Result<EdgeTypeId> {
        if self.edge_type_id(name).is_some() {
            return Err(Error::Schema(format!("edge type `{name}` declared twice")));
        }
        let source = self.add_node_type(source);
        let target = self.add_node_type(target);
        let id = EdgeTypeId(self.edge_types.len() as u16);
        self.edge_types.push(EdgeType {
            id,
            name: name.to_string(),
            source,
            target,
            directed,
        });
        Ok(id)
    }

    /// Declares a meta-path over existing edge types.
    ///
    /// Each step leaves the current node type along the edge type's declared
    /// direction; undirected edge types may also be walked target to source.
    /// When the first step is ambiguous the declared direction wins.
    pub fn add_metapath(&mut self, name: &str, edges: &[&str]) -> Result<()> {
        if edges.is_empty() {
            return Err(Error::Schema(format!("meta-path `{name}` has no edge types")));
        }
        if self.relation_name_taken(name) {
            return Err(Error::Schema(format!("relation name `{name}` declared twice")));
        }
        let edge_types = edges
            .iter()
            .map(|e| {
                self.edge_type_id(e).ok_or_else(|| Error::UnknownType {
                    kind: "edge type",
                    name: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let first = self.edge_type(edge_types[0]);
        let mut starts = vec![first.source];
        if !first.directed && first.target != first.source {
            starts.push(first.target);
        }
        for start in starts {
            if let Some(node_types) = self.walk_types(start, &edge_types) {
                self.metapaths.push(MetaPath {
                    name: name.to_string(),
                    node_types,
                    edge_types,
                });
                return Ok(());
            }
        }
        Err(Error::Schema(format!(
            "meta-path `{name}`: consecutive edge types do not share node types"
        )))
    }

    fn walk_types(&self, start: NodeTypeId, edges: &[EdgeTypeId]) -> Option<Vec<NodeTypeId>> {
        let mut types = vec![start];
        let mut current = start;
        for &e in edges {
            current = self.step_type(current, e)?;
            types.push(current);
        }
        Some(types)
    }

    /// Node type reached by stepping over `edge` from a node of type `from`.
    pub fn step_type(&self, from: NodeTypeId, edge: EdgeTypeId) -> Option<NodeTypeId> {
        let et = self.edge_type(edge);
        if et.source == from {
            Some(et.target)
        } else if !et.directed && et.target == from {
            Some(et.source)
        } else {
            None
        }
    }

    fn relation_name_taken(&self, name: &str) -> bool {
        self.edge_type_id(name).is_some() || self.metapaths.iter().any(|m| m.name == name)
    }

    pub fn node_types(&self) -> &[NodeType] {
        &self.node_types
    }

    pub fn edge_types(&self) -> &[EdgeType] {
        &self.edge_types
    }

    pub fn metapaths(&self) -> &[MetaPath] {
        &self.metapaths
    }

    pub fn node_type(&self, id: NodeTypeId) -> &NodeType {
        &self.node_types[id.0 as usize]
    }

    pub fn edge_type(&self, id: EdgeTypeId) -> &EdgeType {
        &self.edge_types[id.0 as usize]
    }

    pub fn node_type_id(&self, name: &str) -> Option<NodeTypeId> {
        self.node_types.iter().find(|t| t.name == name).map(|t| t.id)
    }

    pub fn edge_type_id(&self, name: &str) -> Option<EdgeTypeId> {
        self.edge_types.iter().find(|t| t.name == name).map(|t| t.id)
    }

    /// Every atomic relation followed by every meta-path, in declaration order.
    pub fn relations(&self) -> Vec<RelationSpec> {
        let atomic = self.edge_types.iter().map(|e| RelationSpec {
            name: e.name.clone(),
            kind: RelationKind::Atomic(e.id),
            source_type: e.source,
            target_type: e.target,
        });
        let composite = self.metapaths.iter().map(|m| RelationSpec {
            name: m.name.clone(),
            kind: RelationKind::Composite(m.clone()),
            source_type: m.node_types[0],
            target_type: *m.node_types.last().expect("meta-path has node types"),
        });
        atomic.chain(composite).collect()
    }

    pub fn relation(&self, name: &str) -> Result<RelationSpec> {
        self.relations()
            .into_iter()
            .find(|r| r.name == name)
            .ok_or_else(|| Error::UnknownRelation(name.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.node_types.len() + self.edge_types.len() <= 2 {
            return Err(Error::Schema(format!(
                "a heterogeneous network needs more than two node and edge types in total, got {}",
                self.node_types.len() + self.edge_types.len()
            )));
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut schema = Schema::new();
        for (line_no, fields) in data_lines(path)? {
            let fields = fields?;
            if fields[0] == "metapath" {
                if fields.len() != 3 {
                    return Err(Error::parse(
                        path,
                        line_no,
                        "expected `metapath<TAB>NAME<TAB>edge1,edge2,...`",
                    ));
                }
                let edges: Vec<&str> = fields[2].split(',').map(str::trim).collect();
                schema
                    .add_metapath(&fields[1], &edges)
                    .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
                continue;
            }
            if fields.len() != 4 {
                return Err(Error::parse(
                    path,
                    line_no,
                    "expected `edge_type<TAB>src_type<TAB>dst_type<TAB>directed|undirected`",
                ));
            }
            let directed = match fields[3].as_str() {
                "directed" => true,
                "undirected" => false,
                other => {
                    return Err(Error::parse(
                        path,
                        line_no,
                        format!("unknown directedness `{other}`"),
                    ))
                }
            };
            if schema.metapaths.iter().any(|m| m.name == fields[0]) {
                return Err(Error::parse(path, line_no, "relation name declared twice"));
            }
            schema
                .add_edge_type(&fields[0], &fields[1], &fields[2], directed)
                .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        }
        Ok(schema)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        for e in &self.edge_types {
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                e.name,
                self.node_type(e.source).name,
                self.node_type(e.target).name,
                if e.directed { "directed" } else { "undirected" }
            )?;
        }
        for m in &self.metapaths {
            let edges: Vec<&str> = m
                .edge_types
                .iter()
                .map(|e| self.edge_type(*e).name.as_str())
                .collect();
            writeln!(out, "metapath\t{}\t{}", m.name, edges.join(","))?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub source: NodeId,
    pub target: NodeId,
    pub edge_type: EdgeTypeId,
    pub weight: f64,
}

/// Per-edge-type compressed adjacency over all nodes.
#[derive(Clone, Debug, Default)]
struct Adjacency {
    offsets: Vec<usize>,
    /// (neighbour, weight) with multiplicity.
    entries: Vec<(NodeId, f64)>,
}

impl Adjacency {
    fn build(n_nodes: usize, pairs: impl Iterator<Item = (NodeId, NodeId, f64)> + Clone) -> Self {
        let mut offsets = vec![0usize; n_nodes + 1];
        for (from, _, _) in pairs.clone() {
            offsets[from.index() + 1] += 1;
        }
        for i in 0..n_nodes {
            offsets[i + 1] += offsets[i];
        }
        let mut cursor = offsets.clone();
        let mut entries = vec![(NodeId(0), 0.0); offsets[n_nodes]];
        for (from, to, w) in pairs {
            entries[cursor[from.index()]] = (to, w);
            cursor[from.index()] += 1;
        }
        Adjacency { offsets, entries }
    }

    fn neighbours(&self, node: NodeId) -> &[(NodeId, f64)] {
        &self.entries[self.offsets[node.index()]..self.offsets[node.index() + 1]]
    }
}

/// Number of path instances and their accumulated weight (product of edge
/// weights along each path, summed over paths).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PathMass {
    pub count: u64,
    pub weight: f64,
}

/// An immutable heterogeneous information network.
#[derive(Clone, Debug)]
pub struct HeteroGraph {
    schema: Schema,
    node_names: Vec<String>,
    node_types: Vec<NodeTypeId>,
    name_index: HashMap<String, NodeId>,
    nodes_by_type: Vec<Vec<NodeId>>,
    edges: Vec<Edge>,
    outgoing: Vec<Adjacency>,
    incoming: Vec<Adjacency>,
}

impl HeteroGraph {
    pub fn load(nodes: &Path, edges: &Path, schema: &Path) -> Result<Self> {
        let schema = Schema::read(schema)?;
        let mut builder = GraphBuilder::new(schema)?;
        for (line_no, fields) in data_lines(nodes)? {
            let fields = fields?;
            if fields.len() != 2 {
                return Err(Error::parse(nodes, line_no, "expected `node_id<TAB>node_type`"));
            }
            builder
                .add_node(&fields[0], &fields[1])
                .map_err(|e| match e {
                    Error::UnknownType { .. } => e,
                    other => Error::parse(nodes, line_no, other.to_string()),
                })?;
        }
        for (line_no, fields) in data_lines(edges)? {
            let fields = fields?;
            if fields.len() != 3 && fields.len() != 4 {
                return Err(Error::parse(
                    edges,
                    line_no,
                    "expected `src_id<TAB>dst_id<TAB>edge_type[<TAB>weight]`",
                ));
            }
            let weight = match fields.get(3) {
                Some(w) => w
                    .parse::<f64>()
                    .map_err(|_| Error::parse(edges, line_no, format!("bad weight `{w}`")))?,
                None => 1.0,
            };
            for id in &fields[..2] {
                if builder.node(id).is_none() {
                    return Err(Error::DanglingEndpoint {
                        file: edges.to_path_buf(),
                        line: line_no,
                        id: id.clone(),
                    });
                }
            }
            builder
                .add_edge(&fields[0], &fields[1], &fields[2], weight)
                .map_err(|e| match e {
                    Error::UnknownType { .. } => e,
                    other => Error::parse(edges, line_no, other.to_string()),
                })?;
        }
        builder.build()
    }

    /// Writes the graph in the three-file text format; `load` reads it back.
    pub fn write(&self, nodes: &Path, edges: &Path, schema: &Path) -> Result<()> {
        self.schema.write(schema)?;
        let mut out = BufWriter::new(File::create(nodes)?);
        for (name, t) in self.node_names.iter().zip(&self.node_types) {
            writeln!(out, "{}\t{}", name, self.schema.node_type(*t).name)?;
        }
        out.flush()?;
        let mut out = BufWriter::new(File::create(edges)?);
        for e in &self.edges {
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                self.node_names[e.source.index()],
                self.node_names[e.target.index()],
                self.schema.edge_type(e.edge_type).name,
                e.weight
            )?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn node_count(&self) -> usize {
        self.node_names.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_type(&self, node: NodeId) -> NodeTypeId {
        self.node_types[node.index()]
    }

    pub fn node_name(&self, node: NodeId) -> &str {
        &self.node_names[node.index()]
    }

    pub fn node_names(&self) -> &[String] {
        &self.node_names
    }

    pub fn node(&self, name: &str) -> Option<NodeId> {
        self.name_index.get(name).copied()
    }

    pub fn nodes_of_type(&self, t: NodeTypeId) -> &[NodeId] {
        &self.nodes_by_type[t.0 as usize]
    }

    pub fn relation(&self, name: &str) -> Result<RelationSpec> {
        self.schema.relation(name)
    }

    pub fn out_neighbours(&self, node: NodeId, edge_type: EdgeTypeId) -> &[(NodeId, f64)] {
        self.outgoing[edge_type.0 as usize].neighbours(node)
    }

    pub fn in_neighbours(&self, node: NodeId, edge_type: EdgeTypeId) -> &[(NodeId, f64)] {
        self.incoming[edge_type.0 as usize].neighbours(node)
    }

    /// Neighbours of `node` over `edge_type`, honouring the direction rule of
    /// [`Schema::step_type`]. Undirected self-typed edges are walked both ways.
    pub fn step_neighbours(
        &self,
        node: NodeId,
        edge_type: EdgeTypeId,
    ) -> impl Iterator<Item = &(NodeId, f64)> + '_ {
        let et = self.schema.edge_type(edge_type);
        let t = self.node_type(node);
        let forward = if et.source == t {
            self.out_neighbours(node, edge_type)
        } else {
            &[]
        };
        let backward = if !et.directed && et.target == t {
            self.in_neighbours(node, edge_type)
        } else {
            &[]
        };
        forward.iter().chain(backward.iter())
    }

    /// All end nodes reachable from `start` along the relation, with the
    /// number and weight of path instances to each. Sorted by node id.
    pub fn reach(&self, relation: &RelationSpec, start: NodeId) -> Vec<(NodeId, PathMass)> {
        if self.node_type(start) != relation.source_type {
            return Vec::new();
        }
        let mut frontier: Vec<(NodeId, PathMass)> = vec![(
            start,
            PathMass {
                count: 1,
                weight: 1.0,
            },
        )];
        for e in relation.edge_types() {
            let mut next: BTreeMap<NodeId, PathMass> = BTreeMap::new();
            for (node, mass) in &frontier {
                for &(nb, w) in self.step_neighbours(*node, e) {
                    let slot = next.entry(nb).or_default();
                    slot.count += mass.count;
                    slot.weight += mass.weight * w;
                }
            }
            frontier = next.into_iter().collect();
            if frontier.is_empty() {
                break;
            }
        }
        frontier
    }

    /// Per-node number of relation instances at the given endpoint, indexed
    /// like [`HeteroGraph::nodes_of_type`] for the endpoint's type.
    /// Atomic instances keep their stored orientation, so an undirected
    /// same-type edge counts once, at its stored source.
    pub fn relation_degrees(&self, relation: &RelationSpec, endpoint: Endpoint) -> Vec<u64> {
        if let RelationKind::Atomic(e) = relation.kind {
            let t = match endpoint {
                Endpoint::Source => relation.source_type,
                Endpoint::Target => relation.target_type,
            };
            let nodes = self.nodes_of_type(t);
            let position: HashMap<NodeId, usize> = nodes.iter().enumerate().map(|(i, v)| (*v, i)).collect();
            let mut degrees = vec![0u64; nodes.len()];
            for edge in self.edges.iter().filter(|x| x.edge_type == e) {
                let n = match endpoint {
                    Endpoint::Source => edge.source,
                    Endpoint::Target => edge.target,
                };
                degrees[position[&n]] += 1;
            }
            return degrees;
        }
        let sources = self.nodes_of_type(relation.source_type);
        match endpoint {
            Endpoint::Source => sources
                .iter()
                .map(|&u| self.reach(relation, u).iter().map(|(_, m)| m.count).sum())
                .collect(),
            Endpoint::Target => {
                let targets = self.nodes_of_type(relation.target_type);
                let mut position = HashMap::with_capacity(targets.len());
                for (i, v) in targets.iter().enumerate() {
                    position.insert(*v, i);
                }
                let mut degrees = vec![0u64; targets.len()];
                for &u in sources {
                    for (v, m) in self.reach(relation, u) {
                        degrees[position[&v]] += m.count;
                    }
                }
                degrees
            }
        }
    }

    /// Total number of relation instances (edges with multiplicity for atomic
    /// relations, path instances for meta-paths).
    pub fn instance_count(&self, relation: &RelationSpec) -> u64 {
        match relation.kind {
            RelationKind::Atomic(e) => {
                self.edges.iter().filter(|edge| edge.edge_type == e).count() as u64
            }
            RelationKind::Composite(_) => self
                .nodes_of_type(relation.source_type)
                .iter()
                .map(|&u| self.reach(relation, u).iter().map(|(_, m)| m.count).sum::<u64>())
                .sum(),
        }
    }

    /// Average number of relation instances per node of the endpoint's type,
    /// averaged over every node of that type in the graph.
    pub fn avg_degree(&self, relation: &RelationSpec, endpoint: Endpoint) -> Result<f64> {
        let t = match endpoint {
            Endpoint::Source => relation.source_type,
            Endpoint::Target => relation.target_type,
        };
        let population = self.nodes_of_type(t).len();
        if population == 0 {
            return Err(Error::EmptyPopulation(self.schema.node_type(t).name.clone()));
        }
        Ok(self.instance_count(relation) as f64 / population as f64)
    }

    /// Copy of the graph without the listed edges (indices into [`HeteroGraph::edges`]).
    pub fn without_edges(&self, removed: &[usize]) -> HeteroGraph {
        let mut drop = vec![false; self.edges.len()];
        for &i in removed {
            drop[i] = true;
        }
        let edges = self
            .edges
            .iter()
            .zip(&drop)
            .filter(|(_, d)| !**d)
            .map(|(e, _)| *e)
            .collect();
        HeteroGraph::assemble(
            self.schema.clone(),
            self.node_names.clone(),
            self.node_types.clone(),
            self.name_index.clone(),
            edges,
        )
    }

    fn assemble(
        schema: Schema,
        node_names: Vec<String>,
        node_types: Vec<NodeTypeId>,
        name_index: HashMap<String, NodeId>,
        edges: Vec<Edge>,
    ) -> HeteroGraph {
        let n = node_names.len();
        let mut nodes_by_type = vec![Vec::new(); schema.node_types().len()];
        for (i, t) in node_types.iter().enumerate() {
            nodes_by_type[t.0 as usize].push(NodeId(i as u32));
        }
        let mut outgoing = Vec::with_capacity(schema.edge_types().len());
        let mut incoming = Vec::with_capacity(schema.edge_types().len());
        for et in schema.edge_types() {
            let typed = edges.iter().filter(move |e| e.edge_type == et.id);
            outgoing.push(Adjacency::build(
                n,
                typed.clone().map(|e| (e.source, e.target, e.weight)),
            ));
            incoming.push(Adjacency::build(n, typed.map(|e| (e.target, e.source, e.weight))));
        }
        HeteroGraph {
            schema,
            node_names,
            node_types,
            name_index,
            nodes_by_type,
            edges,
            outgoing,
            incoming,
        }
    }
}

/// Incremental construction of a validated [`HeteroGraph`].
#[derive(Debug)]
pub struct GraphBuilder {
    schema: Schema,
    node_names: Vec<String>,
    node_types: Vec<NodeTypeId>,
    name_index: HashMap<String, NodeId>,
    edges: Vec<Edge>,
}

impl GraphBuilder {
    pub fn new(schema: Schema) -> Result<Self> {
        schema.validate()?;
        Ok(GraphBuilder {
            schema,
            node_names: Vec::new(),
            node_types: Vec::new(),
            name_index: HashMap::new(),
            edges: Vec::new(),
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn node(&self, name: &str) -> Option<NodeId> {
        self.name_index.get(name).copied()
    }

    pub fn add_node(&mut self, name: &str, node_type: &str) -> Result<NodeId> {
        let t = self
            .schema
            .node_type_id(node_type)
            .ok_or_else(|| Error::UnknownType {
                kind: "node type",
                name: node_type.to_string(),
            })?;
        if self.name_index.contains_key(name) {
            return Err(Error::Schema(format!("node `{name}` declared twice")));
        }
        let id = NodeId(self.node_names.len() as u32);
        self.node_names.push(name.to_string());
        self.node_types.push(t);
        self.name_index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn add_edge(&mut self, source: &str, target: &str, edge_type: &str, weight: f64) -> Result<()> {
        let lookup = |name: &str| {
            self.node(name)
                .ok_or_else(|| Error::Schema(format!("edge endpoint `{name}` is not a node")))
        };
        let (s, t) = (lookup(source)?, lookup(target)?);
        let e = self
            .schema
            .edge_type_id(edge_type)
            .ok_or_else(|| Error::UnknownType {
                kind: "edge type",
                name: edge_type.to_string(),
            })?;
        self.add_edge_ids(s, t, e, weight)
    }

    /// Adds an edge between existing nodes. Undirected edges given in the
    /// reverse orientation are normalised to the declared one.
    pub fn add_edge_ids(
        &mut self,
        source: NodeId,
        target: NodeId,
        edge_type: EdgeTypeId,
        weight: f64,
    ) -> Result<()> {
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::Schema(format!("edge weight must be positive, got {weight}")));
        }
        let et = self.schema.edge_type(edge_type);
        let (st, tt) = (self.node_types[source.index()], self.node_types[target.index()]);
        let (source, target) = if st == et.source && tt == et.target {
            (source, target)
        } else if !et.directed && st == et.target && tt == et.source {
            (target, source)
        } else {
            return Err(Error::Schema(format!(
                "edge type `{}` connects {} -> {}, got {} -> {}",
                et.name,
                self.schema.node_type(et.source).name,
                self.schema.node_type(et.target).name,
                self.schema.node_type(st).name,
                self.schema.node_type(tt).name,
            )));
        };
        self.edges.push(Edge {
            source,
            target,
            edge_type,
            weight,
        });
        Ok(())
    }

    pub fn build(self) -> Result<HeteroGraph> {
        Ok(HeteroGraph::assemble(
            self.schema,
            self.node_names,
            self.node_types,
            self.name_index,
            self.edges,
        ))
    }
}

type DataLine = (usize, Result<Vec<String>>);

/// Non-empty, non-comment lines split on tabs, with 1-based line numbers.
pub(crate) fn data_lines(path: &Path) -> Result<impl Iterator<Item = DataLine>> {
    let reader = BufReader::new(File::open(path)?);
    let path = path.to_path_buf();
    Ok(reader
        .lines()
        .enumerate()
        .filter_map(move |(i, line)| {
            let line_no = i + 1;
            let line = match line {
                Ok(l) => l,
                Err(e) => return Some((line_no, Err(Error::parse(&path, line_no, e.to_string())))),
            };
            let trimmed = line.trim_end_matches(['\r', '\n']);
            if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
                return None;
            }
            Some((
                line_no,
                Ok(trimmed.split('\t').map(|f| f.trim().to_string()).collect()),
            ))
        }))
}
