//! Sample positions and patch extraction into row-stacked patch images.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Extent, ImageRegion};
use crate::pipeline::ImageSource;
use crate::raster::{DataType, PixelBuffer, PixelData};

/// Pixel positions (column, row) with optional class labels.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SamplePositions {
    positions: Vec<(usize, usize)>,
    labels: Option<Vec<u16>>,
}

impl SamplePositions {
    pub fn new(positions: Vec<(usize, usize)>, labels: Option<Vec<u16>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != positions.len() {
                return Err(Error::Sampling(format!(
                    "{} labels for {} positions",
                    l.len(),
                    positions.len()
                )));
            }
        }
        Ok(Self { positions, labels })
    }

    pub fn positions(&self) -> &[(usize, usize)] {
        &self.positions
    }

    pub fn labels(&self) -> Option<&[u16]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Parses `col row [label]` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut positions = Vec::new();
        let mut labels = Vec::new();
        let mut labelled = None;
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |what: &str| Error::Sampling(format!("line {}: {what}: `{line}`", n + 1));
            let fields: Vec<&str> = line.split_whitespace().collect();
            if !(2..=3).contains(&fields.len()) {
                return Err(bad("expected `col row [label]`"));
            }
            let col = fields[0].parse().map_err(|_| bad("invalid column"))?;
            let row = fields[1].parse().map_err(|_| bad("invalid row"))?;
            let has_label = fields.len() == 3;
            if *labelled.get_or_insert(has_label) != has_label {
                return Err(bad("labels must be given on every line or on none"));
            }
            if has_label {
                labels.push(fields[2].parse().map_err(|_| bad("invalid label"))?);
            }
            positions.push((col, row));
        }
        Self::new(positions, labelled.unwrap_or(false).then_some(labels))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_path("reading", path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# col row");
        out.push_str(if self.labels.is_some() { " label\n" } else { "\n" });
        for (i, (c, r)) in self.positions.iter().enumerate() {
            match &self.labels {
                Some(l) => writeln!(out, "{c} {r} {}", l[i]),
                None => writeln!(out, "{c} {r}"),
            }
            .expect("writing to a string");
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io_path("writing", path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SamplingStrategy {
    /// Every `step`-th admissible pixel on both axes.
    Grid {
        step: usize,
    },
    /// `count` distinct admissible pixels drawn uniformly.
    Random {
        count: usize,
        seed: u64,
    },
    FromFile(PathBuf),
}

/// Top-left corner of the patch centered on `position`; even sizes lean
/// toward the top-left.
pub fn patch_window(position: (usize, usize), patch: Extent) -> ImageRegion {
    ImageRegion::new(
        position.0 as i64 - ((patch.cols - 1) / 2) as i64,
        position.1 as i64 - ((patch.rows - 1) / 2) as i64,
        patch.cols,
        patch.rows,
    )
}

/// Positions along an axis of length `n` whose centered patch fits.
fn admissible(n: usize, s: usize) -> std::ops::Range<usize> {
    let off = (s - 1) / 2;
    if n < s {
        off..off
    } else {
        off..n - s + off + 1
    }
}

pub fn select_positions(image: Extent, patch: Extent, strategy: &SamplingStrategy) -> Result<SamplePositions> {
    if patch.rows == 0 || patch.cols == 0 {
        return Err(Error::Sampling("patch size must be positive".into()));
    }
    let rows = admissible(image.rows, patch.rows);
    let cols = admissible(image.cols, patch.cols);
    match strategy {
        SamplingStrategy::Grid { step } => {
            if *step == 0 {
                return Err(Error::Sampling("grid step must be at least 1".into()));
            }
            let positions = rows
                .step_by(*step)
                .flat_map(|r| cols.clone().step_by(*step).map(move |c| (c, r)))
                .collect();
            SamplePositions::new(positions, None)
        }
        SamplingStrategy::Random { count, seed } => {
            let total = rows.len() * cols.len();
            if *count > total {
                return Err(Error::Sampling(format!(
                    "{count} samples requested but only {total} positions admit a {patch} patch in a {image} image"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut picked = rand::seq::index::sample(&mut rng, total, *count).into_vec();
            picked.sort_unstable();
            let positions = picked
                .into_iter()
                .map(|i| (cols.start + i % cols.len(), rows.start + i / cols.len()))
                .collect();
            SamplePositions::new(positions, None)
        }
        SamplingStrategy::FromFile(path) => {
            let positions = SamplePositions::read(path)?;
            for (i, &(c, r)) in positions.positions().iter().enumerate() {
                if !rows.contains(&r) || !cols.contains(&c) {
                    return Err(Error::Sampling(format!(
                        "position {i} ({c}, {r}) in {}: {patch} patch does not fit the {image} image",
                        path.display()
                    )));
                }
            }
            Ok(positions)
        }
    }
}

/// Patches stacked along rows: patch `i` occupies rows
/// `[i * patch.rows, (i + 1) * patch.rows)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchImage {
    buffer: PixelBuffer,
    patch: Extent,
}

impl PatchImage {
    pub fn new(buffer: PixelBuffer, patch: Extent) -> Result<Self> {
        let r = buffer.region();
        if r.col != 0 || r.row != 0 || r.cols != patch.cols || patch.rows == 0 || !r.rows.is_multiple_of(patch.rows) {
            return Err(Error::Sampling(format!("{r} is not a stack of {patch} patches")));
        }
        Ok(Self { buffer, patch })
    }

    pub fn count(&self) -> usize {
        self.buffer.region().rows / self.patch.rows
    }

    pub fn patch_size(&self) -> Extent {
        self.patch
    }

    pub fn buffer(&self) -> &PixelBuffer {
        &self.buffer
    }

    pub fn into_buffer(self) -> PixelBuffer {
        self.buffer
    }

    /// Patch `i`, relocated to the origin.
    pub fn patch(&self, i: usize) -> Result<PixelBuffer> {
        let rows = ImageRegion::new(0, (i * self.patch.rows) as i64, self.patch.cols, self.patch.rows);
        let part = self.buffer.crop(&rows)?;
        PixelBuffer::new(
            ImageRegion::full(self.patch.cols, self.patch.rows),
            part.channels(),
            part.into_data(),
        )
    }
}

/// Reads the centered patch of every position and stacks them in order.
pub fn extract_patches(image: &dyn ImageSource, positions: &SamplePositions, patch: Extent) -> Result<PatchImage> {
    let info = image.info()?;
    let bounds = info.full_region();
    let patches = positions
        .positions()
        .par_iter()
        .enumerate()
        .map(|(i, &p)| {
            let window = patch_window(p, patch);
            if !bounds.contains(&window) {
                return Err(Error::Sampling(format!(
                    "position {i} ({}, {}): patch {window} exceeds the {}x{} image",
                    p.0, p.1, info.cols, info.rows
                )));
            }
            image.read(&window).map(|b| b.data().to_le_bytes())
        })
        .collect::<Result<Vec<_>>>()?;
    let bytes = patches.concat();
    let data = PixelData::from_le_bytes(info.dtype, &bytes)?;
    let region = ImageRegion::full(patch.cols, patch.rows * positions.len());
    PatchImage::new(PixelBuffer::new(region, info.channels, data)?, patch)
}

/// Labels as an `n x 1 x 1` u16 patch image, if the positions carry any.
pub fn label_image(positions: &SamplePositions) -> Option<PatchImage> {
    let labels = positions.labels()?;
    let region = ImageRegion::full(1, labels.len());
    let buffer = PixelBuffer::new(region, 1, PixelData::U16(labels.to_vec())).ok()?;
    debug_assert_eq!(buffer.dtype(), DataType::U16);
    PatchImage::new(buffer, Extent::square(1)).ok()
}
