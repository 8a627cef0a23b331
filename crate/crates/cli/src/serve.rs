use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use rasterflow::netgraph::{derive_fields, model_paths, validate_fields};
use rasterflow::pipeline::{
    execute, ExecMode, ExecOptions, ExecStats, ImageInfo, ImageSource, Pipeline, RasterSink, RasterSource, RegionSink,
    SplitStrategy,
};
use rasterflow::serve::{ServeConfig, ServeFilter, ServeMode};
use rasterflow::{FieldSpec, MemoryTracker, ModelGraph, PixelBuffer};

use crate::{require_file, CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FieldsChoice {
    Auto,
    Declared(String),
}

impl FieldsChoice {
    pub fn parse(s: &str) -> Self {
        if s.trim() == "auto" {
            FieldsChoice::Auto
        } else {
            FieldsChoice::Declared(s.to_string())
        }
    }
}

/// One serving run. Inputs without a name bind to the graph's only input.
#[derive(Debug, Clone)]
pub struct ServeJob {
    pub inputs: Vec<(Option<String>, PathBuf)>,
    pub model: PathBuf,
    pub fields: FieldsChoice,
    pub node: Option<String>,
    pub mode: ServeMode,
    pub split: SplitStrategy,
    pub batch: usize,
    pub output: PathBuf,
    pub exec_mode: ExecMode,
    pub quiet: bool,
}

#[derive(Debug, Clone)]
pub struct ServeReport {
    pub spec: FieldSpec,
    pub stats: ExecStats,
    pub seconds: f64,
}

/// Name of the output to serve: `requested`, or the graph's only output.
pub(crate) fn pick_output(graph: &ModelGraph, requested: Option<&str>) -> CliResult<String> {
    if let Some(n) = requested {
        graph.output_node(n)?;
        return Ok(n.to_string());
    }
    let names: Vec<&str> = graph.output_names().collect();
    match names.as_slice() {
        [one] => Ok(one.to_string()),
        _ => Err(CliError::Usage(format!(
            "the model has outputs {}; pick one with --node",
            names.join(", ")
        ))),
    }
}

/// Field spec to serve with: derived from the graph, or declared and checked.
pub(crate) fn resolve_fields(
    graph: &ModelGraph,
    fields: &FieldsChoice,
    reference: &str,
    output: &str,
) -> CliResult<FieldSpec> {
    match fields {
        FieldsChoice::Auto => Ok(derive_fields(graph, reference, output)?),
        FieldsChoice::Declared(text) => {
            let spec = FieldSpec::parse_with_default_input(text, reference)?;
            let report = validate_fields(graph, &spec, output);
            if !report.passed {
                return Err(CliError::Validation(format!("field spec {spec}:\n{report}")));
            }
            Ok(spec)
        }
    }
}

pub(crate) fn load_model(path: &std::path::Path) -> CliResult<ModelGraph> {
    let (json, bin) = model_paths(path);
    require_file(&json)?;
    require_file(&bin)?;
    Ok(ModelGraph::load(path)?)
}

/// Binds `--input` entries to graph input names.
fn bind_inputs(graph: &ModelGraph, inputs: &[(Option<String>, PathBuf)]) -> CliResult<Vec<(String, PathBuf)>> {
    let graph_inputs: Vec<&str> = graph.input_names().collect();
    inputs
        .iter()
        .map(|(name, path)| match name {
            Some(n) => {
                graph.input_node(n)?;
                Ok((n.clone(), path.clone()))
            }
            None if graph_inputs.len() == 1 && inputs.len() == 1 => Ok((graph_inputs[0].to_string(), path.clone())),
            None => Err(CliError::Usage(format!(
                "input {} needs a name (graph inputs: {})",
                path.display(),
                graph_inputs.join(", ")
            ))),
        })
        .collect()
}

/// Serves `job` into its output raster.
pub fn cmd_serve(job: &ServeJob) -> CliResult<ServeReport> {
    let start = Instant::now();
    for (_, path) in &job.inputs {
        require_file(path)?;
    }
    let graph = load_model(&job.model)?;
    let output = pick_output(&graph, job.node.as_deref())?;
    let bound = bind_inputs(&graph, &job.inputs)?;
    let reference = &bound[0].0;
    let spec = resolve_fields(&graph, &job.fields, reference, &output)?;
    let config = ServeConfig::new(
        job.mode,
        Arc::new(graph),
        spec.clone(),
        bound.iter().map(|(n, _)| n.clone()).collect(),
        output,
    )?
    .with_batch(job.batch)?;

    let sources = bound
        .iter()
        .map(|(_, path)| Ok(Arc::new(RasterSource::open(path)?) as Arc<dyn ImageSource>))
        .collect::<CliResult<Vec<_>>>()?;
    let mut sink = Progress::new(RasterSink::new(&job.output, true), job.quiet);
    let stats = run_serve(config, sources, &mut sink, job.split, job.exec_mode, None)?;
    let seconds = start.elapsed().as_secs_f64();
    if !job.quiet {
        eprintln!(
            "wrote {} ({}x{}x{}) in {} regions, {seconds:.3} s, peak {} B tracked",
            job.output.display(),
            stats.info.rows,
            stats.info.cols,
            stats.info.channels,
            stats.regions,
            stats.peak_bytes
        );
    }
    Ok(ServeReport { spec, stats, seconds })
}

/// Builds sources -> serve filter -> `sink` and executes it.
pub fn run_serve(
    config: ServeConfig<f32>,
    sources: Vec<Arc<dyn ImageSource>>,
    sink: &mut dyn RegionSink,
    split: SplitStrategy,
    mode: ExecMode,
    tracker: Option<Arc<MemoryTracker>>,
) -> CliResult<ExecStats> {
    let mut p = Pipeline::new();
    let ids: Vec<_> = sources.into_iter().map(|s| p.add_source(s)).collect();
    let f = p.add_filter(Arc::new(ServeFilter::new(config)), &ids)?;
    let mut opts = ExecOptions::new(split).mode(mode);
    if let Some(t) = tracker {
        opts = opts.tracker(t);
    }
    Ok(execute(&mut p, f, sink, &opts)?)
}

/// Sink wrapper reporting each written region on stderr.
pub struct Progress<S> {
    inner: S,
    quiet: bool,
    total: usize,
    done: usize,
    count: usize,
}

impl<S> Progress<S> {
    pub fn new(inner: S, quiet: bool) -> Self {
        Self {
            inner,
            quiet,
            total: 0,
            done: 0,
            count: 0,
        }
    }
}

impl<S: RegionSink> RegionSink for Progress<S> {
    fn begin(&mut self, info: &ImageInfo) -> rasterflow::Result<()> {
        self.total = info.rows * info.cols;
        self.inner.begin(info)
    }

    fn write(&mut self, buffer: &PixelBuffer, tracker: &Arc<MemoryTracker>) -> rasterflow::Result<()> {
        self.inner.write(buffer, tracker)?;
        self.count += 1;
        self.done += buffer.region().pixel_count();
        if !self.quiet {
            let pct = 100.0 * self.done as f64 / self.total.max(1) as f64;
            eprintln!("region {} {}: {pct:.1}%", self.count, buffer.region());
        }
        Ok(())
    }

    fn finish(&mut self) -> rasterflow::Result<()> {
        self.inner.finish()
    }
}
