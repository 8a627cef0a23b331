//! Model serving as a pipeline filter: image regions in, model output
//! regions out, either one patch per output block or one fully
//! convolutional pass per requested region.

mod fullconv;
mod layout;
mod patch;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{FieldSpec, ImageRegion};
use crate::memory::MemoryTracker;
use crate::netgraph::{check_patch_shape, validate_fields, ModelGraph};
use crate::pipeline::{ImageFilter, ImageInfo};
use crate::raster::{DataType, PixelBuffer};
use crate::scalar::Scalar;

pub use fullconv::serve_region_fullyconv;
pub use patch::serve_region_patchbased;

pub(crate) use layout::Layout;

pub const DEFAULT_BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServeMode {
    /// Extract one patch per expression block and run them in batches.
    PatchBased,
    /// Run the graph once over the whole requested region.
    FullyConvolutional,
}

impl fmt::Display for ServeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ServeMode::PatchBased => "patch",
            ServeMode::FullyConvolutional => "fullconv",
        })
    }
}

impl FromStr for ServeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "patch" | "patch-based" | "patch_based" => Ok(ServeMode::PatchBased),
            "fullconv" | "fully-convolutional" | "fully_convolutional" => Ok(ServeMode::FullyConvolutional),
            _ => Err(Error::Serve(format!("unknown serving mode `{s}` (patch or fullconv)"))),
        }
    }
}

/// What to serve and how.
#[derive(Debug, Clone)]
pub struct ServeConfig<T> {
    pub mode: ServeMode,
    pub graph: Arc<ModelGraph<T>>,
    pub spec: FieldSpec,
    /// Graph input fed by each filter input, in filter input order.
    pub inputs: Vec<String>,
    pub output: String,
    pub batch: usize,
}

impl<T: Scalar> ServeConfig<T> {
    /// Builds and validates a configuration with the default batch size.
    pub fn new(
        mode: ServeMode,
        graph: Arc<ModelGraph<T>>,
        spec: FieldSpec,
        inputs: Vec<String>,
        output: impl Into<String>,
    ) -> Result<Self> {
        let config = Self {
            mode,
            graph,
            spec,
            inputs,
            output: output.into(),
            batch: DEFAULT_BATCH,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_batch(mut self, batch: usize) -> Result<Self> {
        if batch == 0 {
            return Err(Error::Serve("patch batch size must be at least 1".into()));
        }
        self.batch = batch;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::Serve("patch batch size must be at least 1".into()));
        }
        let reaching = self.graph.inputs_reaching(&self.output)?;
        for name in &self.inputs {
            if self.inputs.iter().filter(|n| *n == name).count() > 1 {
                return Err(Error::Serve(format!("graph input `{name}` is bound more than once")));
            }
            self.graph.input_node(name)?;
            if self.spec.input(name).is_none() {
                return Err(Error::Serve(format!("field spec has no receptive field for `{name}`")));
            }
        }
        if let Some(missing) = reaching.iter().find(|r| !self.inputs.contains(r)) {
            return Err(Error::Serve(format!(
                "graph input `{missing}` is not bound to an image"
            )));
        }
        if let Some(extra) = self.spec.inputs().iter().find(|i| !self.inputs.contains(&i.name)) {
            return Err(Error::Serve(format!(
                "field spec declares `{}` which is not a bound input",
                extra.name
            )));
        }
        if let Some(node) = self.graph.uses_same_padding(&self.output)? {
            return Err(Error::Validation(format!(
                "node `{node}` uses same padding; serving requires valid padding"
            )));
        }
        match self.mode {
            ServeMode::FullyConvolutional => {
                let report = validate_fields(&self.graph, &self.spec, &self.output);
                if !report.passed {
                    return Err(Error::Validation(format!("field spec {}:\n{report}", self.spec)));
                }
            }
            ServeMode::PatchBased => check_patch_shape(&self.graph, &self.spec, &self.output)
                .map_err(|e| Error::Validation(e.to_string()))?,
        }
        Ok(())
    }

    pub(crate) fn reference_index(&self) -> usize {
        self.inputs
            .iter()
            .position(|n| n == self.spec.reference())
            .expect("validated reference binding")
    }

    pub fn output_channels(&self) -> usize {
        self.graph.output_channels(&self.output).expect("validated output")
    }

    /// Image information of the served output.
    pub fn output_info(&self, inputs: &[ImageInfo]) -> Result<ImageInfo> {
        let layout = Layout::new(self, inputs)?;
        let e = self.spec.expression();
        Ok(ImageInfo {
            rows: layout.blocks[0] * e.rows,
            cols: layout.blocks[1] * e.cols,
            channels: self.output_channels(),
            dtype: DataType::F32,
            geo: layout.geo.clone(),
        })
    }

    /// Region of each input needed to serve `output`.
    pub fn requested_regions(&self, output: &ImageRegion, inputs: &[ImageInfo]) -> Result<Vec<ImageRegion>> {
        let layout = Layout::new(self, inputs)?;
        match self.mode {
            ServeMode::FullyConvolutional => layout.contiguous_regions(output),
            ServeMode::PatchBased => Ok(layout.covering_regions(output)),
        }
    }

    /// Tracked working memory for serving `output`, graph tensors included.
    pub fn internal_bytes(&self, output: &ImageRegion, inputs: &[ImageInfo]) -> Result<usize> {
        if output.is_empty() {
            return Ok(0);
        }
        let layout = Layout::new(self, inputs)?;
        let shapes: Vec<(String, [usize; 4])> = match self.mode {
            ServeMode::FullyConvolutional => layout
                .contiguous_regions(output)?
                .iter()
                .zip(inputs)
                .zip(&self.inputs)
                .map(|((r, info), name)| (name.clone(), [1, r.rows, r.cols, info.channels]))
                .collect(),
            ServeMode::PatchBased => {
                let (_, n) = layout.blocks_of(output);
                let batch = (n[0] * n[1]).min(self.batch);
                self.inputs
                    .iter()
                    .zip(inputs)
                    .map(|(name, info)| {
                        let r = self.spec.input(name).expect("validated").receptive;
                        (name.clone(), [batch, r.rows, r.cols, info.channels])
                    })
                    .collect()
            }
        };
        self.graph.peak_intermediate_bytes(&shapes, &self.output)
    }
}

/// Pipeline filter serving a model.
#[derive(Debug, Clone)]
pub struct ServeFilter<T> {
    config: Arc<ServeConfig<T>>,
}

impl<T: Scalar> ServeFilter<T> {
    pub fn new(config: ServeConfig<T>) -> Self {
        Self {
            config: Arc::new(config),
        }
    }

    pub fn config(&self) -> &ServeConfig<T> {
        &self.config
    }
}

impl<T: Scalar> ImageFilter for ServeFilter<T> {
    fn name(&self) -> String {
        format!("serve {} `{}`", self.config.mode, self.config.output)
    }

    fn output_info(&self, inputs: &[ImageInfo]) -> Result<ImageInfo> {
        self.config.output_info(inputs)
    }

    fn requested_regions(&self, output: &ImageRegion, inputs: &[ImageInfo]) -> Result<Vec<ImageRegion>> {
        self.config.requested_regions(output, inputs)
    }

    fn compute(
        &self,
        output: &ImageRegion,
        inputs: Vec<PixelBuffer>,
        infos: &[ImageInfo],
        tracker: &Arc<MemoryTracker>,
    ) -> Result<PixelBuffer> {
        let mut slots: Vec<Option<PixelBuffer>> = inputs.into_iter().map(Some).collect();
        let mut fetch = |i: usize, region: &ImageRegion| -> Result<PixelBuffer> {
            let buf = slots
                .get_mut(i)
                .and_then(Option::take)
                .ok_or_else(|| Error::Contract(format!("input {i} fetched twice")))?;
            if buf.region() == region {
                Ok(buf)
            } else {
                buf.crop(region)
            }
        };
        match self.config.mode {
            ServeMode::FullyConvolutional => {
                serve_region_fullyconv(&self.config, infos, output, &mut fetch, Some(tracker))
            }
            ServeMode::PatchBased => serve_region_patchbased(&self.config, infos, output, &mut fetch, Some(tracker)),
        }
    }

    fn internal_bytes(&self, output: &ImageRegion, inputs: &[ImageInfo]) -> Result<usize> {
        self.config.internal_bytes(output, inputs)
    }
}

/// Reads one input region for serving.
pub type Fetch<'a> = dyn FnMut(usize, &ImageRegion) -> Result<PixelBuffer> + 'a;
