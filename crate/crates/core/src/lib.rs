//! Streaming raster inference: region-based pipelines that feed tiles of
//! large georeferenced images through neural-network graphs.

pub mod error;
pub mod geometry;
pub mod memory;
pub mod netgraph;
pub mod pipeline;
pub mod raster;
pub mod sampling;
pub mod scalar;
pub mod serve;

pub use error::{Error, Result};
pub use geometry::{Extent, FieldSpec, GeoInfo, ImageRegion};
pub use memory::MemoryTracker;
pub use raster::{DataType, PixelBuffer, RasterReader, RasterWriter};
pub use scalar::Scalar;

pub type Tensor = netgraph::Tensor<f32>;
pub type ModelGraph = netgraph::ModelGraph<f32>;
