use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rasterflow::netgraph::presets::{self, OUTPUT};
use rasterflow::netgraph::{GraphBuilder, Padding};
use rasterflow::raster::{write_raster, PixelData};
use rasterflow::{DataType, Extent, GeoInfo, ImageRegion, ModelGraph, PixelBuffer};

use crate::args::{DemoArgs, DemoCommand, ModelKind};
use crate::CliResult;

/// Input name of every single-input demo model.
pub const INPUT: &str = "image";

pub fn make_model(kind: ModelKind, channels: usize, classes: usize, seed: u64) -> rasterflow::Result<ModelGraph> {
    match kind {
        ModelKind::Identity => presets::identity(INPUT, channels),
        ModelKind::Fcn80 => presets::fcn_80_16(INPUT, channels, classes, seed),
        ModelKind::ConvPoolConv => presets::conv_pool_conv(INPUT, channels, classes, seed),
        ModelKind::SmallFcn => presets::small_fcn(INPUT, channels, classes, seed),
        ModelKind::Hybrid => presets::hybrid(("coarse", channels), ("fine", channels), classes, seed),
        ModelKind::SamePadding => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut g = GraphBuilder::new();
            let x = g.input(INPUT, channels);
            let w = (0..9 * channels * classes).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let y = g.conv(
                x,
                Extent::square(3),
                Extent::square(1),
                Padding::Same,
                classes,
                w,
                vec![0.0; classes],
            );
            g.output(OUTPUT, y);
            g.build()
        }
    }
}

/// Pseudo-random image: uniform in [0, 1) for f32, full range otherwise.
pub fn random_image(size: Extent, bands: usize, dtype: DataType, seed: u64) -> PixelBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = size.pixel_count() * bands;
    let data = match dtype {
        DataType::U8 => PixelData::U8((0..n).map(|_| rng.gen()).collect()),
        DataType::U16 => PixelData::U16((0..n).map(|_| rng.gen()).collect()),
        DataType::F32 => PixelData::F32((0..n).map(|_| rng.gen()).collect()),
    };
    PixelBuffer::new(ImageRegion::full(size.cols, size.rows), bands, data).expect("sized to the region")
}

pub fn cmd_make_demo(args: &DemoArgs) -> CliResult<()> {
    match &args.what {
        DemoCommand::Model {
            kind,
            channels,
            classes,
            seed,
            output,
        } => {
            make_model(*kind, *channels, *classes, *seed)?.save(output)?;
            eprintln!("wrote {kind:?} model to {}", output.display());
        }
        DemoCommand::Raster {
            size,
            bands,
            dtype,
            seed,
            spacing,
            output,
        } => {
            let image = random_image(*size, *bands, *dtype, *seed);
            let geo = GeoInfo::new((0.0, 0.0), (*spacing, -*spacing), "");
            write_raster(output, &image, geo)?;
            eprintln!("wrote {size}x{bands} {dtype} raster to {}", output.display());
        }
    }
    Ok(())
}
