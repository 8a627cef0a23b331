use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::ImageRegion;
use crate::memory::MemoryTracker;
use crate::netgraph::Tensor;
use crate::raster::PixelBuffer;
use crate::scalar::Scalar;
use crate::serve::{Fetch, Layout, ServeConfig};

pub(crate) fn to_tensor<T: Scalar>(buf: &PixelBuffer) -> Result<Tensor<T>> {
    let r = buf.region();
    Tensor::new([1, r.rows, r.cols, buf.channels()], buf.values_as())
}

pub(crate) fn check_requested(layout: &Layout, requested: &ImageRegion) -> Result<()> {
    let full = layout.output_region();
    if !full.contains(requested) {
        return Err(Error::OutOfBounds {
            region: *requested,
            cols: full.cols,
            rows: full.rows,
        });
    }
    Ok(())
}

/// Serves `requested` (output pixels) with one forward pass over the
/// expression-aligned input regions, then crops to the request.
pub fn serve_region_fullyconv<T: Scalar>(
    config: &ServeConfig<T>,
    infos: &[crate::pipeline::ImageInfo],
    requested: &ImageRegion,
    fetch: &mut Fetch<'_>,
    tracker: Option<&Arc<MemoryTracker>>,
) -> Result<PixelBuffer> {
    let layout = Layout::new(config, infos)?;
    check_requested(&layout, requested)?;
    let channels = config.output_channels();
    if requested.is_empty() {
        return PixelBuffer::from_f32(*requested, channels, Vec::new());
    }
    let regions = layout.contiguous_regions(requested)?;
    let mut feeds = Vec::with_capacity(regions.len());
    for (i, region) in regions.iter().enumerate() {
        let buf = fetch(i, region).map_err(|e| e.in_region(*region))?;
        feeds.push((config.inputs[i].clone(), to_tensor::<T>(&buf)?));
    }
    let out = config.graph.run(feeds, &[config.output.as_str()], tracker)?.remove(0);

    let (k0, n) = layout.blocks_of(requested);
    let [er, ec] = layout.expression;
    if out.rows() != n[0] * er || out.cols() != n[1] * ec {
        return Err(Error::Serve(format!(
            "model produced {}x{} pixels for {}x{} blocks of {er}x{ec}",
            out.cols(),
            out.rows(),
            n[1],
            n[0]
        )));
    }
    let row0 = (requested.row - (k0[0] - layout.first[0]) * er as i64) as usize;
    let col0 = (requested.col - (k0[1] - layout.first[1]) * ec as i64) as usize;
    let mut values = Vec::with_capacity(requested.pixel_count() * channels);
    for r in row0..row0 + requested.rows {
        let start = out.index(0, r, col0, 0);
        values.extend(
            out.data()[start..start + requested.cols * channels]
                .iter()
                .map(|v| v.as_f32()),
        );
    }
    PixelBuffer::from_f32(*requested, channels, values)
}
