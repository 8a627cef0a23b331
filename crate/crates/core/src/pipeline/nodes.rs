use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{GeoInfo, ImageRegion};
use crate::memory::MemoryTracker;
use crate::pipeline::{ImageFilter, ImageInfo, ImageSource, RegionSink};
use crate::raster::{PixelBuffer, RasterHeader, RasterReader, RasterWriter};

fn info_of(header: &RasterHeader) -> ImageInfo {
    ImageInfo {
        rows: header.rows,
        cols: header.cols,
        channels: header.channels,
        dtype: header.dtype,
        geo: header.geo.clone(),
    }
}

/// Reads regions of an on-disk raster.
#[derive(Debug)]
pub struct RasterSource {
    reader: RasterReader,
}

impl RasterSource {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self {
            reader: RasterReader::open(path)?,
        })
    }
}

impl ImageSource for RasterSource {
    fn name(&self) -> String {
        format!("raster {}", self.reader.path().display())
    }

    fn info(&self) -> Result<ImageInfo> {
        Ok(info_of(self.reader.header()))
    }

    fn read(&self, region: &ImageRegion) -> Result<PixelBuffer> {
        self.reader.read_region(region)
    }
}

/// In-memory image, mostly for tests and synthetic data.
#[derive(Debug, Clone)]
pub struct MemorySource {
    name: String,
    buffer: PixelBuffer,
    geo: GeoInfo,
}

impl MemorySource {
    /// `buffer` must start at the origin.
    pub fn new(name: impl Into<String>, buffer: PixelBuffer, geo: GeoInfo) -> Result<Self> {
        let r = buffer.region();
        if r.col != 0 || r.row != 0 {
            return Err(Error::Pipeline(format!(
                "memory image {r} does not start at the origin"
            )));
        }
        Ok(Self {
            name: name.into(),
            buffer,
            geo,
        })
    }

    pub fn buffer(&self) -> &PixelBuffer {
        &self.buffer
    }
}

impl ImageSource for MemorySource {
    fn name(&self) -> String {
        format!("memory {}", self.name)
    }

    fn info(&self) -> Result<ImageInfo> {
        let r = self.buffer.region();
        Ok(ImageInfo {
            rows: r.rows,
            cols: r.cols,
            channels: self.buffer.channels(),
            dtype: self.buffer.dtype(),
            geo: self.geo.clone(),
        })
    }

    fn read(&self, region: &ImageRegion) -> Result<PixelBuffer> {
        let b = self.buffer.region();
        if !b.contains(region) {
            return Err(Error::OutOfBounds {
                region: *region,
                cols: b.cols,
                rows: b.rows,
            });
        }
        self.buffer.crop(region)
    }
}

/// Forwards its input unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityFilter;

impl ImageFilter for IdentityFilter {
    fn name(&self) -> String {
        "identity".into()
    }

    fn output_info(&self, inputs: &[ImageInfo]) -> Result<ImageInfo> {
        match inputs {
            [one] => Ok(one.clone()),
            _ => Err(Error::Pipeline(format!(
                "identity takes one input, got {}",
                inputs.len()
            ))),
        }
    }

    fn requested_regions(&self, output: &ImageRegion, _inputs: &[ImageInfo]) -> Result<Vec<ImageRegion>> {
        Ok(vec![*output])
    }

    fn compute(
        &self,
        _output: &ImageRegion,
        mut inputs: Vec<PixelBuffer>,
        _infos: &[ImageInfo],
        _tracker: &Arc<MemoryTracker>,
    ) -> Result<PixelBuffer> {
        Ok(inputs.remove(0))
    }

    fn passes_through(&self) -> bool {
        true
    }
}

/// Writes regions into an on-disk raster.
#[derive(Debug)]
pub struct RasterSink {
    path: PathBuf,
    checked: bool,
    writer: Option<RasterWriter>,
}

impl RasterSink {
    /// In checked mode every pixel must be written exactly once.
    pub fn new(path: impl Into<PathBuf>, checked: bool) -> Self {
        Self {
            path: path.into(),
            checked,
            writer: None,
        }
    }
}

impl RegionSink for RasterSink {
    fn begin(&mut self, info: &ImageInfo) -> Result<()> {
        let header = RasterHeader::new(info.cols, info.rows, info.channels, info.dtype, info.geo.clone());
        self.writer = Some(RasterWriter::create(&self.path, header, self.checked)?);
        Ok(())
    }

    fn write(&mut self, buffer: &PixelBuffer, tracker: &Arc<MemoryTracker>) -> Result<()> {
        let writer = self
            .writer
            .as_mut()
            .ok_or_else(|| Error::Pipeline("raster sink written before begin".into()))?;
        let _encoded = tracker.hold(buffer.byte_len());
        writer.write_region(buffer)
    }

    fn finish(&mut self) -> Result<()> {
        let writer = self
            .writer
            .take()
            .ok_or_else(|| Error::Pipeline("raster sink finished before begin".into()))?;
        let missing = writer.finish()?;
        if missing > 0 {
            return Err(Error::Pipeline(format!("{missing} output pixels were never written")));
        }
        Ok(())
    }
}

/// Assembles the output in memory and checks that every pixel is written
/// exactly once.
#[derive(Debug, Default)]
pub struct MemorySink {
    image: Option<PixelBuffer>,
    geo: Option<GeoInfo>,
    written: Vec<bool>,
    regions: Vec<ImageRegion>,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn image(&self) -> Option<&PixelBuffer> {
        self.image.as_ref()
    }

    pub fn into_image(self) -> Option<PixelBuffer> {
        self.image
    }

    pub fn geo(&self) -> Option<&GeoInfo> {
        self.geo.as_ref()
    }

    /// Regions in the order they were written.
    pub fn regions(&self) -> &[ImageRegion] {
        &self.regions
    }
}

impl RegionSink for MemorySink {
    fn begin(&mut self, info: &ImageInfo) -> Result<()> {
        self.image = Some(PixelBuffer::zeros(info.full_region(), info.channels, info.dtype));
        self.geo = Some(info.geo.clone());
        self.written = vec![false; info.rows * info.cols];
        self.regions.clear();
        Ok(())
    }

    fn write(&mut self, buffer: &PixelBuffer, _tracker: &Arc<MemoryTracker>) -> Result<()> {
        let image = self
            .image
            .as_mut()
            .ok_or_else(|| Error::Pipeline("memory sink written before begin".into()))?;
        let r = *buffer.region();
        let cols = image.region().cols;
        if !image.region().contains(&r) {
            return Err(Error::OutOfBounds {
                region: r,
                cols,
                rows: image.region().rows,
            });
        }
        for row in r.row..r.row_end() {
            let base = row as usize * cols;
            let cells = &mut self.written[base + r.col as usize..base + r.col_end() as usize];
            if cells.iter().any(|&w| w) {
                return Err(Error::OverlappingWrite(r));
            }
            cells.fill(true);
        }
        image.paste(buffer)?;
        self.regions.push(r);
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        let missing = self.written.iter().filter(|&&w| !w).count();
        if missing > 0 {
            return Err(Error::Pipeline(format!("{missing} output pixels were never written")));
        }
        Ok(())
    }
}
