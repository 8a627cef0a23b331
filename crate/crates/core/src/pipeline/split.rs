use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::ImageRegion;
use crate::pipeline::ImageInfo;

/// How the mapper divides its output into regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitStrategy {
    /// One region covering the whole output.
    Whole,
    /// Full-width stripes of the given height.
    Striped(usize),
    /// Tiles of `width x height`.
    Tiled(usize, usize),
    /// Stripes as tall as the byte budget allows.
    MemoryBudget(usize),
}

impl SplitStrategy {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            SplitStrategy::Whole => true,
            SplitStrategy::Striped(h) => h > 0,
            SplitStrategy::Tiled(w, h) => w > 0 && h > 0,
            SplitStrategy::MemoryBudget(b) => b > 0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Pipeline(format!("split strategy {self} has a zero dimension")))
        }
    }
}

impl fmt::Display for SplitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitStrategy::Whole => write!(f, "whole"),
            SplitStrategy::Striped(h) => write!(f, "striped:{h}"),
            SplitStrategy::Tiled(w, h) => write!(f, "tiled:{w}x{h}"),
            SplitStrategy::MemoryBudget(b) => write!(f, "budget:{b}"),
        }
    }
}

impl FromStr for SplitStrategy {
    type Err = Error;

    /// `whole`, `striped:H`, `tiled:WxH` or `budget:BYTES` (with an optional
    /// `K`, `M` or `G` binary suffix).
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Pipeline(format!("invalid split strategy `{s}`"));
        let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
        let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
        let strategy = match kind.trim() {
            "whole" if arg.is_empty() => SplitStrategy::Whole,
            "striped" => SplitStrategy::Striped(num(arg)?),
            "tiled" => {
                let (w, h) = arg.split_once('x').ok_or_else(bad)?;
                SplitStrategy::Tiled(num(w)?, num(h)?)
            }
            "budget" => {
                let arg = arg.trim();
                let (digits, unit) = match arg.char_indices().last() {
                    Some((i, 'K' | 'k')) => (&arg[..i], 1 << 10),
                    Some((i, 'M' | 'm')) => (&arg[..i], 1 << 20),
                    Some((i, 'G' | 'g')) => (&arg[..i], 1 << 30),
                    _ => (arg, 1),
                };
                SplitStrategy::MemoryBudget(num(digits)?.checked_mul(unit).ok_or_else(bad)?)
            }
            _ => return Err(bad()),
        };
        strategy.validate()?;
        Ok(strategy)
    }
}

/// Stripe height for a byte budget: `budget / (cols * footprint)`, at least 1.
pub(crate) fn budget_stripe_height(cols: usize, footprint: usize, budget: usize) -> usize {
    let row = cols.saturating_mul(footprint.max(1));
    let h = budget / row.max(1);
    if h == 0 {
        log::warn!("memory budget of {budget} B is below one output row ({row} B); using 1-row stripes");
        1
    } else {
        h
    }
}

/// Partitions the output of `info` into row-major regions.
pub fn split_output(info: &ImageInfo, strategy: SplitStrategy, footprint: usize) -> Result<Vec<ImageRegion>> {
    strategy.validate()?;
    let (cols, rows) = (info.cols, info.rows);
    if cols == 0 || rows == 0 {
        return Ok(Vec::new());
    }
    Ok(match strategy {
        SplitStrategy::Whole => vec![ImageRegion::full(cols, rows)],
        SplitStrategy::Striped(h) => stripes(cols, rows, h),
        SplitStrategy::MemoryBudget(budget) => stripes(cols, rows, budget_stripe_height(cols, footprint, budget)),
        SplitStrategy::Tiled(w, h) => {
            let mut out = Vec::new();
            for row in (0..rows).step_by(h) {
                for col in (0..cols).step_by(w) {
                    out.push(ImageRegion::new(
                        col as i64,
                        row as i64,
                        w.min(cols - col),
                        h.min(rows - row),
                    ));
                }
            }
            out
        }
    })
}

pub(crate) fn stripes(cols: usize, rows: usize, h: usize) -> Vec<ImageRegion> {
    (0..rows)
        .step_by(h.max(1))
        .map(|row| ImageRegion::new(0, row as i64, cols, h.min(rows - row)))
        .collect()
}
