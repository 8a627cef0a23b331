use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::ImageRegion;
use crate::memory::MemoryTracker;
use crate::netgraph::Tensor;
use crate::pipeline::ImageInfo;
use crate::raster::PixelBuffer;
use crate::scalar::Scalar;
use crate::serve::fullconv::check_requested;
use crate::serve::{Fetch, Layout, ServeConfig};

/// Serves `requested` by extracting every touched block's receptive windows
/// from each input, running them in batches of at most `config.batch`
/// patches, and scattering the expression blocks into the output.
pub fn serve_region_patchbased<T: Scalar>(
    config: &ServeConfig<T>,
    infos: &[ImageInfo],
    requested: &ImageRegion,
    fetch: &mut Fetch<'_>,
    tracker: Option<&Arc<MemoryTracker>>,
) -> Result<PixelBuffer> {
    if config.batch == 0 {
        return Err(Error::Serve("patch batch size must be at least 1".into()));
    }
    let layout = Layout::new(config, infos)?;
    check_requested(&layout, requested)?;
    let channels = config.output_channels();
    let mut values = vec![0f32; requested.pixel_count() * channels];
    if requested.is_empty() {
        return PixelBuffer::from_f32(*requested, channels, values);
    }
    let regions = layout.covering_regions(requested);
    let buffers = regions
        .iter()
        .enumerate()
        .map(|(i, region)| fetch(i, region).map_err(|e| e.in_region(*region)))
        .collect::<Result<Vec<_>>>()?;

    let (k0, n) = layout.blocks_of(requested);
    let blocks: Vec<(i64, i64)> = (0..n[0] as i64)
        .flat_map(|r| (0..n[1] as i64).map(move |c| (k0[0] + r, k0[1] + c)))
        .collect();
    let [er, ec] = layout.expression;
    for chunk in blocks.chunks(config.batch) {
        let mut feeds = Vec::with_capacity(buffers.len());
        for (i, buf) in buffers.iter().enumerate() {
            let w0 = layout.window(i, chunk[0].0, chunk[0].1);
            let patch_len = w0.pixel_count() * buf.channels();
            let mut data = vec![T::zero(); patch_len * chunk.len()];
            for (slot, &(kr, kc)) in data.chunks_mut(patch_len).zip(chunk) {
                buf.window_into(&layout.window(i, kr, kc), slot);
            }
            let tensor = Tensor::new([chunk.len(), w0.rows, w0.cols, buf.channels()], data)?;
            feeds.push((config.inputs[i].clone(), tensor));
        }
        let out = config.graph.run(feeds, &[config.output.as_str()], tracker)?.remove(0);
        if out.shape() != [chunk.len(), er, ec, channels] {
            return Err(Error::Serve(format!(
                "model produced patches of shape {:?}, expected [{}, {er}, {ec}, {channels}]",
                out.shape(),
                chunk.len()
            )));
        }
        for (b, &(kr, kc)) in chunk.iter().enumerate() {
            let top = (kr - layout.first[0]) * er as i64;
            let left = (kc - layout.first[1]) * ec as i64;
            for y in 0..er {
                let row = top + y as i64;
                if row < requested.row || row >= requested.row_end() {
                    continue;
                }
                for x in 0..ec {
                    let col = left + x as i64;
                    if col < requested.col || col >= requested.col_end() {
                        continue;
                    }
                    let dst =
                        ((row - requested.row) as usize * requested.cols + (col - requested.col) as usize) * channels;
                    let src = out.index(b, y, x, 0);
                    for (d, s) in values[dst..dst + channels]
                        .iter_mut()
                        .zip(&out.data()[src..src + channels])
                    {
                        *d = s.as_f32();
                    }
                }
            }
        }
    }
    PixelBuffer::from_f32(*requested, channels, values)
}
