use std::sync::mpsc::sync_channel;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::ImageRegion;
use crate::memory::{Allocation, MemoryTracker};
use crate::pipeline::split::{budget_stripe_height, split_output, stripes, SplitStrategy};
use crate::pipeline::{ImageInfo, NodeId, NodeKind, Pipeline, RegionSink};
use crate::raster::PixelBuffer;

/// Scheduling of region reads relative to computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    /// Read, compute and write each region in turn. The reference mode.
    #[default]
    Sequential,
    /// A reader thread fetches the source regions of region k+1 while region
    /// k is computed, through a hand-off of depth 1.
    Pipelined,
}

#[derive(Debug, Clone, Default)]
pub struct ExecOptions {
    pub strategy: Option<SplitStrategy>,
    pub mode: ExecMode,
    pub tracker: Option<Arc<MemoryTracker>>,
}

impl ExecOptions {
    pub fn new(strategy: SplitStrategy) -> Self {
        Self {
            strategy: Some(strategy),
            ..Self::default()
        }
    }

    pub fn mode(mut self, mode: ExecMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn tracker(mut self, tracker: Arc<MemoryTracker>) -> Self {
        self.tracker = Some(tracker);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecStats {
    pub info: ImageInfo,
    pub regions: usize,
    /// Stripe height picked for a memory budget.
    pub stripe_height: Option<usize>,
    /// Estimated bytes per output pixel.
    pub footprint: usize,
    /// High-water mark of tracked buffer bytes during execution.
    pub peak_bytes: usize,
}

/// Requested region of one process object and of everything upstream.
struct PlanNode {
    node: NodeId,
    region: ImageRegion,
    children: Vec<PlanNode>,
}

impl PlanNode {
    fn sources<'a>(&'a self, out: &mut Vec<&'a PlanNode>) {
        if self.children.is_empty() {
            out.push(self);
        }
        for c in &self.children {
            c.sources(out);
        }
    }
}

struct Tracked {
    buffer: PixelBuffer,
    _guard: Option<Allocation>,
}

fn plan(p: &Pipeline, id: NodeId, region: ImageRegion) -> Result<PlanNode> {
    let node = p.node(id);
    let info = p
        .info(id)
        .ok_or_else(|| Error::Pipeline(format!("information of {id} not generated")))?;
    let children = match &node.kind {
        NodeKind::Source(s) => {
            if !info.full_region().contains(&region) {
                return Err(Error::Contract(format!(
                    "{} asked for {region} outside its {}x{} image",
                    s.name(),
                    info.cols,
                    info.rows
                )));
            }
            Vec::new()
        }
        NodeKind::Filter(f) => {
            let infos = p.input_infos(id)?;
            let requests = f.requested_regions(&region, &infos)?;
            if requests.len() != node.inputs.len() {
                return Err(Error::Contract(format!(
                    "{} requested {} regions for {} inputs",
                    f.name(),
                    requests.len(),
                    node.inputs.len()
                )));
            }
            node.inputs
                .iter()
                .zip(requests)
                .map(|(&input, r)| plan(p, input, r))
                .collect::<Result<_>>()?
        }
    };
    Ok(PlanNode {
        node: id,
        region,
        children,
    })
}

/// Upper bound on the tracked bytes needed to compute one plan: every buffer
/// in the tree plus filter working memory, all assumed live at once. Also
/// returns the bytes read from sources.
fn plan_cost(p: &Pipeline, plan: &PlanNode) -> Result<(usize, usize)> {
    let info = p.info(plan.node).expect("planned node has information");
    let own = plan.region.pixel_count() * info.pixel_bytes();
    match &p.node(plan.node).kind {
        NodeKind::Source(_) => Ok((own, own)),
        NodeKind::Filter(f) => {
            let infos = p.input_infos(plan.node)?;
            let mut total = f.internal_bytes(&plan.region, &infos)?;
            if !f.passes_through() {
                total += own;
            }
            let mut read = 0;
            for c in &plan.children {
                let (t, r) = plan_cost(p, c)?;
                total += t;
                read += r;
            }
            Ok((total, read))
        }
    }
}

fn read_source(p: &Pipeline, plan: &PlanNode, tracker: &Arc<MemoryTracker>) -> Result<Tracked> {
    let NodeKind::Source(source) = &p.node(plan.node).kind else {
        unreachable!("leaf plan nodes are sources")
    };
    let buffer = source.read(&plan.region)?;
    if *buffer.region() != plan.region {
        return Err(Error::Contract(format!(
            "{} returned {} for a request of {}",
            source.name(),
            buffer.region(),
            plan.region
        )));
    }
    let guard = tracker.hold(buffer.byte_len());
    Ok(Tracked {
        buffer,
        _guard: Some(guard),
    })
}

fn evaluate(
    p: &Pipeline,
    plan: &PlanNode,
    tracker: &Arc<MemoryTracker>,
    source: &mut dyn FnMut(&PlanNode) -> Result<Tracked>,
) -> Result<Tracked> {
    let filter = match &p.node(plan.node).kind {
        NodeKind::Source(_) => return source(plan),
        NodeKind::Filter(f) => f,
    };
    let mut buffers = Vec::with_capacity(plan.children.len());
    let mut guards = Vec::with_capacity(plan.children.len());
    for child in &plan.children {
        let t = evaluate(p, child, tracker, source)?;
        buffers.push(t.buffer);
        guards.push(t._guard);
    }
    let infos = p.input_infos(plan.node)?;
    let buffer = filter.compute(&plan.region, buffers, &infos, tracker)?;
    let info = p.info(plan.node).expect("planned node has information");
    if *buffer.region() != plan.region || buffer.channels() != info.channels || buffer.dtype() != info.dtype {
        return Err(Error::Contract(format!(
            "{} produced {} x {} {} for a request of {} x {} {}",
            filter.name(),
            buffer.region(),
            buffer.channels(),
            buffer.dtype(),
            plan.region,
            info.channels,
            info.dtype
        )));
    }
    let guard = if filter.passes_through() {
        guards.swap_remove(0)
    } else {
        Some(tracker.hold(buffer.byte_len()))
    };
    drop(guards);
    Ok(Tracked { buffer, _guard: guard })
}

fn footprint_of(p: &Pipeline, id: NodeId, pixels_per_output: f64) -> Result<f64> {
    let info = p
        .info(id)
        .ok_or_else(|| Error::Pipeline(format!("information of {id} not generated")))?;
    let node = p.node(id);
    match &node.kind {
        NodeKind::Source(_) => Ok(pixels_per_output * info.pixel_bytes() as f64),
        NodeKind::Filter(f) => {
            let infos = p.input_infos(id)?;
            let out_pixels = info.full_region().pixel_count() as f64;
            let mut total = f.internal_bytes(&info.full_region(), &infos)? as f64 / out_pixels * pixels_per_output;
            if !f.passes_through() {
                total += pixels_per_output * info.pixel_bytes() as f64;
            }
            for (&input, input_info) in node.inputs.iter().zip(&infos) {
                let ratio = input_info.full_region().pixel_count() as f64 / out_pixels;
                total += footprint_of(p, input, pixels_per_output * ratio)?;
            }
            Ok(total)
        }
    }
}

/// Bytes per output pixel across the pipeline feeding `id`: every buffer a
/// region request allocates (scaled by the pixel ratio of its image to the
/// output), filter working memory, and the mapper's write buffer.
pub fn estimate_footprint(p: &Pipeline, id: NodeId) -> Result<usize> {
    let info = p
        .info(id)
        .ok_or_else(|| Error::Pipeline(format!("information of {id} not generated")))?;
    let total = footprint_of(p, id, 1.0)? + info.pixel_bytes() as f64;
    Ok(total.ceil() as usize)
}

/// Largest cost over the regions of a split, including the write buffer and,
/// when pipelined, the prefetched source reads of the next region.
fn split_cost(p: &Pipeline, id: NodeId, regions: &[ImageRegion], mode: ExecMode) -> Result<usize> {
    let info = p.info(id).expect("generated");
    let mut worst = 0;
    let mut worst_read = 0;
    for r in regions {
        let (cost, read) = plan_cost(p, &plan(p, id, *r)?)?;
        worst = worst.max(cost + r.pixel_count() * info.pixel_bytes());
        worst_read = worst_read.max(read);
    }
    Ok(match mode {
        ExecMode::Sequential => worst,
        ExecMode::Pipelined => worst + worst_read,
    })
}

/// Stripe height for a budget: the closed-form estimate, lowered until the
/// exact per-region cost fits.
fn refine_budget(
    p: &Pipeline,
    id: NodeId,
    info: &ImageInfo,
    footprint: usize,
    budget: usize,
    mode: ExecMode,
) -> Result<usize> {
    let cap = budget_stripe_height(info.cols, footprint, budget).min(info.rows);
    let fits = |h: usize| -> Result<bool> { Ok(split_cost(p, id, &stripes(info.cols, info.rows, h), mode)? <= budget) };
    if fits(cap)? {
        return Ok(cap);
    }
    let (mut lo, mut hi) = (0usize, cap);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if fits(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo == 0 {
        log::warn!("memory budget of {budget} B cannot hold a single output row; using 1-row stripes");
        return Ok(1);
    }
    Ok(lo)
}

/// Streams the output of `id` into `sink`, region by region.
pub fn execute(p: &mut Pipeline, id: NodeId, sink: &mut dyn RegionSink, opts: &ExecOptions) -> Result<ExecStats> {
    let info = p.update_output_information(id)?;
    let p = &*p;
    let footprint = estimate_footprint(p, id)?;
    let strategy = opts.strategy.unwrap_or(SplitStrategy::Whole);
    let (regions, stripe_height) = match strategy {
        SplitStrategy::MemoryBudget(budget) => {
            strategy.validate()?;
            let h = refine_budget(p, id, &info, footprint, budget, opts.mode)?;
            (stripes(info.cols, info.rows, h), Some(h))
        }
        other => (split_output(&info, other, footprint)?, None),
    };
    log::debug!(
        "executing {} regions of {} ({strategy}, {footprint} B/pixel)",
        regions.len(),
        info
    );
    let tracker = opts.tracker.clone().unwrap_or_default();
    tracker.reset_peak();
    sink.begin(&info)?;
    if !regions.is_empty() {
        let plans = regions
            .iter()
            .map(|r| plan(p, id, *r).map_err(|e| e.in_region(*r)))
            .collect::<Result<Vec<_>>>()?;
        match opts.mode {
            ExecMode::Sequential => run_sequential(p, &plans, sink, &tracker)?,
            ExecMode::Pipelined => run_pipelined(p, &plans, sink, &tracker)?,
        }
    }
    sink.finish()?;
    Ok(ExecStats {
        info,
        regions: regions.len(),
        stripe_height,
        footprint,
        peak_bytes: tracker.peak(),
    })
}

fn run_sequential(
    p: &Pipeline,
    plans: &[PlanNode],
    sink: &mut dyn RegionSink,
    tracker: &Arc<MemoryTracker>,
) -> Result<()> {
    for plan in plans {
        let out = evaluate(p, plan, tracker, &mut |leaf| read_source(p, leaf, tracker))
            .map_err(|e| e.in_region(plan.region))?;
        sink.write(&out.buffer, tracker).map_err(|e| e.in_region(plan.region))?;
    }
    Ok(())
}

fn run_pipelined(
    p: &Pipeline,
    plans: &[PlanNode],
    sink: &mut dyn RegionSink,
    tracker: &Arc<MemoryTracker>,
) -> Result<()> {
    std::thread::scope(|scope| {
        let (tx, rx) = sync_channel::<Result<Vec<Tracked>>>(0);
        scope.spawn(move || {
            for plan in plans {
                let mut leaves = Vec::new();
                plan.sources(&mut leaves);
                let read = leaves
                    .into_iter()
                    .map(|leaf| read_source(p, leaf, tracker))
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| e.in_region(plan.region));
                let failed = read.is_err();
                if tx.send(read).is_err() || failed {
                    break;
                }
            }
        });
        let mut consume = move || -> Result<()> {
            for plan in plans {
                let reads = rx
                    .recv()
                    .map_err(|_| Error::Pipeline("reader thread stopped".into()))??;
                let mut reads = reads.into_iter();
                let out = evaluate(p, plan, tracker, &mut |_| {
                    Ok(reads.next().expect("one read per source leaf"))
                })
                .map_err(|e| e.in_region(plan.region))?;
                sink.write(&out.buffer, tracker).map_err(|e| e.in_region(plan.region))?;
            }
            Ok(())
        };
        consume()
    })
}
