//! Demand-driven process graph: sources and filters propagate image
//! information downstream, requested regions upstream, and a mapper pulls the
//! output region by region.

mod exec;
mod nodes;
mod split;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{Extent, GeoInfo, ImageRegion};
use crate::memory::MemoryTracker;
use crate::raster::{DataType, PixelBuffer};

pub use exec::{estimate_footprint, execute, ExecMode, ExecOptions, ExecStats};
pub use nodes::{IdentityFilter, MemorySink, MemorySource, RasterSink, RasterSource};
pub use split::{split_output, SplitStrategy};

/// Size, grid and element type of an image flowing through the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageInfo {
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    pub dtype: DataType,
    pub geo: GeoInfo,
}

impl ImageInfo {
    pub fn extent(&self) -> Extent {
        Extent::new(self.rows, self.cols)
    }

    pub fn full_region(&self) -> ImageRegion {
        ImageRegion::full(self.cols, self.rows)
    }

    pub fn pixel_bytes(&self) -> usize {
        self.channels * self.dtype.size()
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.channels == 0 {
            return Err(Error::Pipeline(format!("image information has an empty size: {self}")));
        }
        self.geo.validate()
    }
}

impl fmt::Display for ImageInfo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{}x{} {} ({})",
            self.cols, self.rows, self.channels, self.dtype, self.geo
        )
    }
}

/// A process object without inputs.
pub trait ImageSource: Send + Sync {
    fn name(&self) -> String;

    fn info(&self) -> Result<ImageInfo>;

    /// Reads exactly `region`, which must lie inside the image.
    fn read(&self, region: &ImageRegion) -> Result<PixelBuffer>;
}

/// A process object computing one output image from its inputs.
///
/// `compute` is called concurrently only for disjoint regions and must not
/// keep state between calls.
pub trait ImageFilter: Send + Sync {
    fn name(&self) -> String;

    fn output_info(&self, inputs: &[ImageInfo]) -> Result<ImageInfo>;

    /// Region needed from each input to produce `output`.
    fn requested_regions(&self, output: &ImageRegion, inputs: &[ImageInfo]) -> Result<Vec<ImageRegion>>;

    /// Produces exactly `output` from buffers covering the requested regions.
    fn compute(
        &self,
        output: &ImageRegion,
        inputs: Vec<PixelBuffer>,
        infos: &[ImageInfo],
        tracker: &Arc<MemoryTracker>,
    ) -> Result<PixelBuffer>;

    /// Working memory beyond the input and output buffers needed to compute
    /// `output`.
    fn internal_bytes(&self, _output: &ImageRegion, _inputs: &[ImageInfo]) -> Result<usize> {
        Ok(0)
    }

    /// The output buffer is the first input buffer, handed through.
    fn passes_through(&self) -> bool {
        false
    }
}

/// Handle of a process object inside a [`Pipeline`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone)]
pub(crate) enum NodeKind {
    Source(Arc<dyn ImageSource>),
    Filter(Arc<dyn ImageFilter>),
}

#[derive(Clone)]
pub(crate) struct ProcessNode {
    pub(crate) kind: NodeKind,
    pub(crate) inputs: Vec<NodeId>,
    pub(crate) info: Option<ImageInfo>,
}

impl ProcessNode {
    fn name(&self) -> String {
        match &self.kind {
            NodeKind::Source(s) => s.name(),
            NodeKind::Filter(f) => f.name(),
        }
    }
}

/// Directed acyclic graph of sources and filters.
#[derive(Clone, Default)]
pub struct Pipeline {
    nodes: Vec<ProcessNode>,
}

impl Pipeline {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_source(&mut self, source: Arc<dyn ImageSource>) -> NodeId {
        self.push(NodeKind::Source(source), Vec::new())
    }

    pub fn add_filter(&mut self, filter: Arc<dyn ImageFilter>, inputs: &[NodeId]) -> Result<NodeId> {
        self.check_ids(inputs)?;
        Ok(self.push(NodeKind::Filter(filter), inputs.to_vec()))
    }

    /// Rewires the inputs of a filter. Cycles are reported by
    /// [`Pipeline::update_output_information`].
    pub fn set_inputs(&mut self, node: NodeId, inputs: &[NodeId]) -> Result<()> {
        self.check_ids(inputs)?;
        self.check_ids(&[node])?;
        if matches!(self.nodes[node.0].kind, NodeKind::Source(_)) {
            return Err(Error::Pipeline(format!("source {node} takes no inputs")));
        }
        self.nodes[node.0].inputs = inputs.to_vec();
        for n in &mut self.nodes {
            n.info = None;
        }
        Ok(())
    }

    fn push(&mut self, kind: NodeKind, inputs: Vec<NodeId>) -> NodeId {
        self.nodes.push(ProcessNode {
            kind,
            inputs,
            info: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn check_ids(&self, ids: &[NodeId]) -> Result<()> {
        match ids.iter().find(|id| id.0 >= self.nodes.len()) {
            Some(id) => Err(Error::Pipeline(format!("unknown process object {id}"))),
            None => Ok(()),
        }
    }

    pub(crate) fn node(&self, id: NodeId) -> &ProcessNode {
        &self.nodes[id.0]
    }

    /// Cached information of a node; available after
    /// [`Pipeline::update_output_information`].
    pub fn info(&self, id: NodeId) -> Option<&ImageInfo> {
        self.nodes.get(id.0).and_then(|n| n.info.as_ref())
    }

    /// Generates the image information of `id` and everything upstream.
    pub fn update_output_information(&mut self, id: NodeId) -> Result<ImageInfo> {
        self.check_ids(&[id])?;
        let mut state = vec![Visit::New; self.nodes.len()];
        self.generate(id, &mut state)
    }

    fn generate(&mut self, id: NodeId, state: &mut [Visit]) -> Result<ImageInfo> {
        match state[id.0] {
            Visit::Done => {
                return Ok(self.nodes[id.0].info.clone().expect("generated info"));
            }
            Visit::Active => {
                return Err(Error::Pipeline(format!(
                    "cycle detected at {id} ({})",
                    self.nodes[id.0].name()
                )));
            }
            Visit::New => {}
        }
        state[id.0] = Visit::Active;
        let inputs = self.nodes[id.0].inputs.clone();
        let mut upstream = Vec::with_capacity(inputs.len());
        for input in inputs {
            upstream.push(self.generate(input, state)?);
        }
        let node = &self.nodes[id.0];
        let info = match &node.kind {
            NodeKind::Source(s) => s.info(),
            NodeKind::Filter(f) => f.output_info(&upstream),
        }
        .and_then(|info| info.validate().map(|_| info))
        .map_err(|e| Error::Pipeline(format!("{} ({id}): {e}", node.name())))?;
        self.nodes[id.0].info = Some(info.clone());
        state[id.0] = Visit::Done;
        Ok(info)
    }

    pub(crate) fn input_infos(&self, id: NodeId) -> Result<Vec<ImageInfo>> {
        self.node(id)
            .inputs
            .iter()
            .map(|&i| {
                self.info(i)
                    .cloned()
                    .ok_or_else(|| Error::Pipeline(format!("information of {i} not generated")))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Visit {
    New,
    Active,
    Done,
}

/// Consumer of computed output regions (the mapper's write end).
pub trait RegionSink {
    /// Called once before the first region.
    fn begin(&mut self, info: &ImageInfo) -> Result<()>;

    fn write(&mut self, buffer: &PixelBuffer, tracker: &Arc<MemoryTracker>) -> Result<()>;

    fn finish(&mut self) -> Result<()>;
}
