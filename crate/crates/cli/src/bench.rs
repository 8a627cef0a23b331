use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use rasterflow::netgraph::derive_fields;
use rasterflow::netgraph::presets::{fcn_80_16, OUTPUT};
use rasterflow::pipeline::{ExecMode, ImageSource, MemorySource, RasterSink, SplitStrategy};
use rasterflow::serve::{ServeConfig, ServeMode};
use rasterflow::{DataType, Extent, GeoInfo, ModelGraph};

use crate::args::BenchArgs;
use crate::demo::random_image;
use crate::serve::{load_model, pick_output, run_serve};
use crate::CliResult;

/// One timed serving run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub pixels: usize,
    pub strategy: String,
    pub stripe: usize,
    pub seconds: f64,
    pub peak_bytes: usize,
}

#[derive(Debug, Clone)]
pub struct BenchPlan {
    pub graph: Arc<ModelGraph>,
    pub output: String,
    pub sizes: Vec<usize>,
    pub strategies: Vec<SplitStrategy>,
    pub mode: ServeMode,
    pub repeats: usize,
    pub seed: u64,
    pub batch: usize,
}

impl BenchPlan {
    /// The built-in classifier with an 80x80 receptive field and 16x16
    /// output blocks over `bands`-band inputs.
    pub fn builtin(bands: usize, seed: u64) -> rasterflow::Result<Self> {
        Ok(Self {
            graph: Arc::new(fcn_80_16("image", bands, 2, seed)?),
            output: OUTPUT.to_string(),
            sizes: vec![256, 512, 1024, 2048],
            strategies: vec![SplitStrategy::Whole, SplitStrategy::Striped(64)],
            mode: ServeMode::FullyConvolutional,
            repeats: 1,
            seed,
            batch: rasterflow::serve::DEFAULT_BATCH,
        })
    }
}

/// Serves a synthetic square input of every size with every strategy. Times
/// are the fastest of `repeats` rounds; each round visits every size and
/// strategy once.
pub fn run_benchmark(plan: &BenchPlan) -> CliResult<Vec<BenchRow>> {
    let inputs: Vec<String> = plan.graph.input_names().map(str::to_string).collect();
    let reference = inputs.first().cloned().unwrap_or_default();
    let spec = derive_fields(&plan.graph, &reference, &plan.output)?;
    let config = ServeConfig::new(plan.mode, plan.graph.clone(), spec, inputs.clone(), plan.output.clone())?
        .with_batch(plan.batch)?;
    let dir = tempfile::tempdir()?;
    let out = dir.path().join("bench.rfraw");
    let sources = plan
        .sizes
        .iter()
        .enumerate()
        .map(|(k, &size)| {
            inputs
                .iter()
                .enumerate()
                .map(|(i, name)| {
                    let bands = plan.graph.input_channels(name)?;
                    let seed = plan.seed.wrapping_add((k * inputs.len() + i) as u64);
                    let image = random_image(Extent::square(size), bands, DataType::F32, seed);
                    Ok(Arc::new(MemorySource::new(name.as_str(), image, GeoInfo::default())?) as Arc<dyn ImageSource>)
                })
                .collect::<rasterflow::Result<Vec<_>>>()
        })
        .collect::<rasterflow::Result<Vec<_>>>()?;
    let mut rows: Vec<BenchRow> = Vec::new();
    for round in 0..plan.repeats.max(1) {
        let mut n = 0;
        for size_sources in &sources {
            for &strategy in &plan.strategies {
                let mut sink = RasterSink::new(&out, false);
                let start = Instant::now();
                let stats = run_serve(
                    config.clone(),
                    size_sources.clone(),
                    &mut sink,
                    strategy,
                    ExecMode::Sequential,
                    None,
                )?;
                let seconds = start.elapsed().as_secs_f64();
                if round > 0 {
                    rows[n].seconds = rows[n].seconds.min(seconds);
                } else {
                    let out_rows = stats.info.rows;
                    let stripe = match strategy {
                        SplitStrategy::Whole => out_rows,
                        SplitStrategy::Striped(h) | SplitStrategy::Tiled(_, h) => h.min(out_rows),
                        SplitStrategy::MemoryBudget(_) => stats.stripe_height.unwrap_or(out_rows),
                    };
                    rows.push(BenchRow {
                        pixels: stats.info.rows * stats.info.cols,
                        strategy: strategy.to_string(),
                        stripe,
                        seconds,
                        peak_bytes: stats.peak_bytes,
                    });
                }
                n += 1;
            }
        }
    }
    Ok(rows)
}

/// Coefficient of determination of the least-squares line through `points`;
/// `None` with fewer than two distinct abscissas.
pub fn r_squared(points: &[(f64, f64)]) -> Option<f64> {
    let (slope, intercept) = linear_fit(points)?;
    let n = points.len() as f64;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let ss_res: f64 = points.iter().map(|p| (p.1 - (intercept + slope * p.0)).powi(2)).sum();
    if ss_tot == 0.0 {
        return Some(if ss_res == 0.0 { 1.0 } else { 0.0 });
    }
    Some(1.0 - ss_res / ss_tot)
}

/// Least-squares `(slope, intercept)`.
pub fn linear_fit(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = points.len() as f64;
    if points.is_empty() {
        return None;
    }
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    Some((slope, mean_y - slope * mean_x))
}

/// Seconds-vs-pixels fit per strategy, in order of first appearance.
pub fn fits(rows: &[BenchRow]) -> Vec<(String, Option<f64>)> {
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        if !names.contains(&r.strategy.as_str()) {
            names.push(&r.strategy);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.strategy == name)
                .map(|r| (r.pixels as f64, r.seconds))
                .collect();
            (name.to_string(), r_squared(&pts))
        })
        .collect()
}

pub fn write_csv(rows: &[BenchRow], out: impl Write) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_benchmark(args: &BenchArgs) -> CliResult<()> {
    let mut plan = BenchPlan::builtin(args.bands, args.seed)?;
    if let Some(path) = &args.model {
        let graph = load_model(path)?;
        plan.output = pick_output(&graph, None)?;
        plan.graph = Arc::new(graph);
    }
    plan.sizes = args.sizes.clone();
    plan.strategies = args.split.clone();
    plan.mode = args.mode;
    plan.repeats = args.repeats;
    plan.batch = args.batch;
    let rows = run_benchmark(&plan)?;
    let mut report: Box<dyn Write> = match &args.csv {
        Some(path) => {
            write_csv(&rows, std::fs::File::create(path)?)?;
            Box::new(std::io::stdout())
        }
        None => {
            write_csv(&rows, std::io::stdout())?;
            Box::new(std::io::stderr())
        }
    };
    for (name, r2) in fits(&rows) {
        match r2 {
            Some(v) => writeln!(report, "{name}: R^2 = {v:.4}")?,
            None => writeln!(report, "{name}: R^2 = n/a")?,
        }
    }
    Ok(())
}
