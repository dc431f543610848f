//! SemSynGTN: event argument extraction with learned syntactic and semantic
//! graph structures, combined by a graph transformer network and regularized
//! with an information-bottleneck term.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod encoder;
pub mod gtn;
pub mod harness;
pub mod ib;
pub mod model;
pub mod numeric;
pub mod structures;

pub use config::TrainConfig;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Numeric(#[from] numeric::NumericError),
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
    #[error(transparent)]
    Tree(#[from] corpus::TreeError),
    #[error(transparent)]
    Embedding(#[from] encoder::EmbeddingError),
    #[error(transparent)]
    Structure(#[from] structures::StructureError),
    #[error(transparent)]
    ConfigFile(#[from] config::ConfigError),
    #[error("config: {0}")]
    Config(String),
    #[error("training: {0}")]
    Train(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
