use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rasterflow::geometry::Extent;
use rasterflow::pipeline::{ExecMode, SplitStrategy};
use rasterflow::serve::{ServeMode, DEFAULT_BATCH};
use rasterflow::DataType;

use crate::serve::{FieldsChoice, ServeJob};
use crate::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "rasterflow",
    version,
    about = "Stream large rasters through convolutional models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Apply a model to one or more rasters, region by region.
    Serve(ServeArgs),
    /// Extract patches around sampled positions into a patch image.
    Sample(SampleArgs),
    /// Derive or check the field spec of a model.
    DeriveFields(DeriveArgs),
    /// Time serving over synthetic inputs of growing size.
    Benchmark(BenchArgs),
    /// Write demo models and rasters.
    MakeDemo(DemoArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Input raster bound to a graph input, as `name=path` (or `path` for
    /// single-input models). Repeatable.
    #[arg(long = "input", value_name = "NAME=PATH", required = true)]
    pub inputs: Vec<String>,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "fullconv")]
    pub mode: ServeMode,
    /// `rf=RxC,ef=RxC,sf=N[/D]`, or `auto` to derive it from the model.
    #[arg(long, default_value = "auto")]
    pub fields: String,
    /// Graph output to serve; defaults to the only one.
    #[arg(long)]
    pub node: Option<String>,
    #[arg(long, default_value = "budget:128M")]
    pub split: SplitStrategy,
    #[arg(long, default_value_t = DEFAULT_BATCH)]
    pub batch: usize,
    #[arg(long)]
    pub output: PathBuf,
    /// Read the next region while the current one is computed.
    #[arg(long)]
    pub prefetch: bool,
    #[arg(long, short)]
    pub quiet: bool,
}

impl ServeArgs {
    pub fn into_job(self) -> CliResult<ServeJob> {
        let inputs = self
            .inputs
            .iter()
            .map(|s| match s.split_once('=') {
                Some(("", _)) => Err(CliError::Usage(format!("empty input name in `{s}`"))),
                Some((name, path)) => Ok((Some(name.to_string()), PathBuf::from(path))),
                None => Ok((None, PathBuf::from(s))),
            })
            .collect::<CliResult<Vec<_>>>()?;
        Ok(ServeJob {
            inputs,
            model: self.model,
            fields: FieldsChoice::parse(&self.fields),
            node: self.node,
            mode: self.mode,
            split: self.split,
            batch: self.batch,
            output: self.output,
            exec_mode: if self.prefetch {
                ExecMode::Pipelined
            } else {
                ExecMode::Sequential
            },
            quiet: self.quiet,
        })
    }
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("strategy").required(true).args(["grid", "random", "positions"])))]
pub struct SampleArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Patch size as RxC.
    #[arg(long)]
    pub patch: Extent,
    /// Take every STEP-th admissible pixel on both axes.
    #[arg(long, value_name = "STEP")]
    pub grid: Option<usize>,
    /// Draw COUNT distinct admissible pixels.
    #[arg(long, value_name = "COUNT")]
    pub random: Option<usize>,
    /// Read `col row [label]` lines from FILE.
    #[arg(long, value_name = "FILE")]
    pub positions: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
    /// Write the labels of a position file as an n x 1 x 1 raster.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Write the selected positions as a position file.
    #[arg(long, value_name = "FILE")]
    pub save_positions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DeriveArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Reference input; defaults to the first graph input reaching the output.
    #[arg(long)]
    pub input: Option<String>,
    #[arg(long)]
    pub node: Option<String>,
    /// Check this spec instead of the derived one.
    #[arg(long)]
    pub fields: Option<String>,
    /// Force a larger expression field (a multiple of the minimal one).
    #[arg(long)]
    pub expression: Option<Extent>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Model to time; defaults to a built-in 80x80 / 16x16 classifier.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Side lengths of the square synthetic inputs.
    #[arg(long, value_delimiter = ',', default_value = "256,512,1024,2048")]
    pub sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "whole,striped:64")]
    pub split: Vec<SplitStrategy>,
    #[arg(long, default_value = "fullconv")]
    pub mode: ServeMode,
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Bands of the synthetic inputs (built-in model only).
    #[arg(long, default_value_t = 4)]
    pub bands: usize,
    #[arg(long, default_value_t = DEFAULT_BATCH)]
    pub batch: usize,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[command(subcommand)]
    pub what: DemoCommand,
}

#[derive(Debug, Subcommand)]
pub enum DemoCommand {
    /// Write a preset model as `<output>.ngraph.json` and `<output>.ngraph.bin`.
    Model {
        #[arg(long)]
        kind: ModelKind,
        #[arg(long, default_value_t = 4)]
        channels: usize,
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Write a pseudo-random raster.
    Raster {
        /// Size as RxC.
        #[arg(long)]
        size: Extent,
        #[arg(long, default_value_t = 4)]
        bands: usize,
        #[arg(long, default_value = "f32")]
        dtype: DataType,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Pixel size in both directions.
        #[arg(long, default_value_t = 1.0)]
        spacing: f64,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    /// 1x1 identity convolution.
    Identity,
    /// Receptive field 80, expression field 16.
    Fcn80,
    /// conv3, 2x2 pooling, conv3.
    ConvPoolConv,
    /// Receptive field 12, expression field 2.
    SmallFcn,
    /// Inputs `coarse` (1x1) and `fine` (25x25).
    Hybrid,
    /// A 3x3 convolution with same padding.
    SamePadding,
}
