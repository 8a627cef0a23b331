use std::path::PathBuf;

use thiserror::Error;

use crate::geometry::ImageRegion;

/// Errors raised anywhere in the streaming engine.
///
/// The variant names the subsystem that produced the failure so front-ends can
/// attribute messages and pick exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("field spec: {0}")]
    Spec(String),

    #[error("geometry: grids are not aligned (from {from}, to {to})")]
    Alignment { from: String, to: String },

    #[error("raster: region {region} is outside the {cols}x{rows} image")]
    OutOfBounds {
        region: ImageRegion,
        cols: usize,
        rows: usize,
    },

    #[error("raster: {0}")]
    Format(String),

    #[error("raster: overlapping write at region {0}")]
    OverlappingWrite(ImageRegion),

    #[error("io: {context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("netgraph: node `{node}`: {message}")]
    Graph { node: String, message: String },

    #[error("netgraph: {0}")]
    Model(String),

    #[error("pipeline: {0}")]
    Pipeline(String),

    #[error("pipeline: contract violation: {0}")]
    Contract(String),

    #[error("serve: {0}")]
    Serve(String),

    #[error("sampling: {0}")]
    Sampling(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("region {region}: {source}")]
    InRegion {
        region: ImageRegion,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn io_path(what: &str, path: &std::path::Path, source: std::io::Error) -> Self {
        Error::io(format!("{what} {}", PathBuf::from(path).display()), source)
    }

    pub(crate) fn graph(node: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Graph {
            node: node.into(),
            message: message.into(),
        }
    }

    /// True for failures that mean "the inputs were well-formed but do not
    /// satisfy a model/field contract" rather than usage or I/O trouble.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Validation(_) => true,
            Error::InRegion { source, .. } => source.is_validation(),
            _ => false,
        }
    }

    pub(crate) fn in_region(self, region: ImageRegion) -> Self {
        match self {
            Error::InRegion { .. } => self,
            other => Error::InRegion {
                region,
                source: Box::new(other),
            },
        }
    }
}
