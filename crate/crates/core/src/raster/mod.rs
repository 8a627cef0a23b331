//! Pixel buffers and the region-addressable raw raster format.

mod buffer;
mod rfraw;

pub use buffer::{DataType, PixelBuffer, PixelData};
pub use rfraw::{read_header, sidecar_path, write_raster, RasterHeader, RasterReader, RasterWriter};
