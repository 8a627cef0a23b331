use std::fmt;

use crate::error::{Error, Result};
use crate::geometry::ImageRegion;

/// Relative tolerance (of the finer spacing) for grid alignment checks.
pub const ALIGNMENT_TOLERANCE: f64 = 1e-6;

/// Physical placement of a pixel grid.
///
/// `origin_*` is the physical coordinate of the center of pixel (0, 0);
/// spacings are signed (north-up rasters usually carry a negative `spacing_y`).
#[derive(Debug, Clone, PartialEq)]
pub struct GeoInfo {
    pub origin_x: f64,
    pub origin_y: f64,
    pub spacing_x: f64,
    pub spacing_y: f64,
    pub projection: String,
}

impl Default for GeoInfo {
    fn default() -> Self {
        Self {
            origin_x: 0.0,
            origin_y: 0.0,
            spacing_x: 1.0,
            spacing_y: 1.0,
            projection: String::new(),
        }
    }
}

impl GeoInfo {
    pub fn new(origin: (f64, f64), spacing: (f64, f64), projection: impl Into<String>) -> Self {
        Self {
            origin_x: origin.0,
            origin_y: origin.1,
            spacing_x: spacing.0,
            spacing_y: spacing.1,
            projection: projection.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.origin_x, self.origin_y, self.spacing_x, self.spacing_y]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.spacing_x == 0.0 || self.spacing_y == 0.0 {
            return Err(Error::Format(format!("invalid geo information {self}")));
        }
        Ok(())
    }

    /// Whether pixel edges of both grids fall on a common lattice so that
    /// regions can be mapped between them without resampling.
    pub fn is_aligned_with(&self, other: &GeoInfo) -> bool {
        axis_aligned(self.axis(GridAxis::X), other.axis(GridAxis::X))
            && axis_aligned(self.axis(GridAxis::Y), other.axis(GridAxis::Y))
    }

    /// Physical coordinate of a (possibly fractional) pixel position, where
    /// integer positions are pixel centers.
    pub fn pixel_to_world(&self, col: f64, row: f64) -> (f64, f64) {
        (
            self.origin_x + self.spacing_x * col,
            self.origin_y + self.spacing_y * row,
        )
    }

    /// Inverse of [`GeoInfo::pixel_to_world`].
    pub fn world_to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.origin_x) / self.spacing_x,
            (y - self.origin_y) / self.spacing_y,
        )
    }

    fn axis(&self, axis: GridAxis) -> (f64, f64) {
        match axis {
            GridAxis::X => (self.origin_x, self.spacing_x),
            GridAxis::Y => (self.origin_y, self.spacing_y),
        }
    }
}

impl fmt::Display for GeoInfo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "origin ({}, {}) spacing ({}, {})",
            self.origin_x, self.origin_y, self.spacing_x, self.spacing_y
        )?;
        if !self.projection.is_empty() {
            write!(f, " {}", self.projection)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum GridAxis {
    X,
    Y,
}

fn near_integer(v: f64) -> bool {
    (v - v.round()).abs() <= ALIGNMENT_TOLERANCE
}

fn axis_aligned((o1, s1): (f64, f64), (o2, s2): (f64, f64)) -> bool {
    if s1.signum() != s2.signum() {
        return false;
    }
    let fine = s1.abs().min(s2.abs());
    let coarse = s1.abs().max(s2.abs());
    if !near_integer(coarse / fine) {
        return false;
    }
    let edge1 = o1 - s1 / 2.0;
    let edge2 = o2 - s2 / 2.0;
    near_integer((edge1 - edge2) / fine)
}

fn map_axis(start: i64, len: usize, (o1, s1): (f64, f64), (o2, s2): (f64, f64)) -> (i64, usize) {
    let edge1 = o1 - s1 / 2.0;
    let edge2 = o2 - s2 / 2.0;
    let t0 = (edge1 + s1 * start as f64 - edge2) / s2;
    let t1 = (edge1 + s1 * (start + len as i64) as f64 - edge2) / s2;
    let first = (t0 + ALIGNMENT_TOLERANCE).floor() as i64;
    if len == 0 {
        return (first, 0);
    }
    let end = (t1 - ALIGNMENT_TOLERANCE).ceil() as i64;
    (first, (end - first).max(0) as usize)
}

/// Smallest region of `to` whose physical footprint covers the footprint of
/// `region` on `from`.
pub fn map_region_between_grids(region: &ImageRegion, from: &GeoInfo, to: &GeoInfo) -> Result<ImageRegion> {
    if !from.is_aligned_with(to) {
        return Err(Error::Alignment {
            from: from.to_string(),
            to: to.to_string(),
        });
    }
    let (col, cols) = map_axis(region.col, region.cols, from.axis(GridAxis::X), to.axis(GridAxis::X));
    let (row, rows) = map_axis(region.row, region.rows, from.axis(GridAxis::Y), to.axis(GridAxis::Y));
    Ok(ImageRegion::new(col, row, cols, rows))
}

/// Start index of a `size`-pixel window centered on the fractional pixel
/// position `center`. Even sizes put the extra pixel after the center, so the
/// center sits in the top-left half of the window.
pub fn centered_window_start(center: f64, size: usize) -> i64 {
    (center - (size as f64 - 1.0) / 2.0 + 0.5 + ALIGNMENT_TOLERANCE).floor() as i64
}
