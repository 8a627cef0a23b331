use rasterflow::pipeline::{ImageSource, RasterSource};
use rasterflow::raster::write_raster;
use rasterflow::sampling::{extract_patches, label_image, select_positions, PatchImage, SamplingStrategy};
use rasterflow::GeoInfo;

use crate::args::SampleArgs;
use crate::{require_file, CliError, CliResult};

fn strategy(args: &SampleArgs) -> SamplingStrategy {
    match (args.grid, args.random, &args.positions) {
        (Some(step), _, _) => SamplingStrategy::Grid { step },
        (_, Some(count), _) => SamplingStrategy::Random { count, seed: args.seed },
        (_, _, Some(path)) => SamplingStrategy::FromFile(path.clone()),
        _ => unreachable!("clap requires one strategy"),
    }
}

/// Samples patches of `args.input` and writes the patch image.
pub fn cmd_sample(args: &SampleArgs) -> CliResult<PatchImage> {
    require_file(&args.input)?;
    if let Some(p) = &args.positions {
        require_file(p)?;
    }
    let source = RasterSource::open(&args.input)?;
    let info = source.info()?;
    let image = info.extent();
    if args.patch.rows > image.rows || args.patch.cols > image.cols {
        return Err(CliError::Usage(format!(
            "patch {} does not fit the {image} image {}",
            args.patch,
            args.input.display()
        )));
    }
    let positions = select_positions(image, args.patch, &strategy(args))?;
    if positions.is_empty() {
        return Err(CliError::Usage("no positions selected".into()));
    }
    let labels = match &args.labels {
        Some(path) => Some((
            path,
            label_image(&positions)
                .ok_or_else(|| CliError::Usage("--labels needs a position file with labels".into()))?,
        )),
        None => None,
    };
    let patches = extract_patches(&source, &positions, args.patch)?;
    write_raster(&args.output, patches.buffer(), GeoInfo::default())?;
    if let Some((path, labels)) = labels {
        write_raster(path, labels.buffer(), GeoInfo::default())?;
    }
    if let Some(path) = &args.save_positions {
        positions.write(path)?;
    }
    eprintln!(
        "wrote {} patches of {} with {} {} bands to {}",
        patches.count(),
        args.patch,
        info.channels,
        info.dtype,
        args.output.display()
    );
    Ok(patches)
}
