use std::path::PathBuf;

use thiserror::Error;

use crate::measures::Category;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}:{line}: {message}", file.display())]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown {kind} `{name}`")]
    UnknownType { kind: &'static str, name: String },

    #[error("{}:{line}: endpoint `{id}` is not declared in the nodes file", file.display())]
    DanglingEndpoint {
        file: PathBuf,
        line: usize,
        id: String,
    },

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("unknown relation `{0}`")]
    UnknownRelation(String),

    #[error("node type `{0}` has no nodes")]
    EmptyPopulation(String),

    #[error("relation `{0}` has no instances")]
    NoInstances(String),

    #[error("relation `{relation}`: {source}")]
    Relation {
        relation: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{0} partition is empty")]
    EmptyPartition(Category),

    #[error("cannot corrupt triple: replacement pool for `{node_type}` has {size} node(s)")]
    PoolTooSmall { node_type: String, size: usize },

    #[error("relation `{0}` has no relation embedding")]
    NoRelationEmbedding(String),

    #[error("category mismatch: {0}")]
    CategoryMismatch(String),

    #[error("training diverged in epoch {epoch}: {reason}")]
    Divergence { epoch: usize, reason: String },

    #[error("non-finite gradient")]
    NonFinite,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("evaluation: {0}")]
    Eval(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(file: &std::path::Path, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            file: file.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn in_relation(self, relation: &str) -> Self {
        Error::Relation {
            relation: relation.to_string(),
            source: Box::new(self),
        }
    }
}
