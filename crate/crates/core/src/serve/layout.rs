use crate::error::{Error, Result};
use crate::geometry::{centered_window_start, propagate_geo, Axis, GeoInfo, ImageRegion, ALIGNMENT_TOLERANCE};
use crate::pipeline::ImageInfo;
use crate::scalar::Scalar;
use crate::serve::ServeConfig;

/// Window placement of one input along one axis, per expression block `k`.
#[derive(Debug, Clone, Copy)]
pub(crate) enum AxisWindows {
    /// Reference input: block `k` starts at `k * step`.
    Reference { receptive: usize, step: usize },
    /// Secondary input: block `k` is centered on the reference block's window
    /// center, `center0 + k * step` in this input's pixel coordinates.
    Secondary { receptive: usize, center0: f64, step: f64 },
}

impl AxisWindows {
    pub(crate) fn receptive(&self) -> usize {
        match *self {
            AxisWindows::Reference { receptive, .. } | AxisWindows::Secondary { receptive, .. } => receptive,
        }
    }

    pub(crate) fn start(&self, k: i64) -> i64 {
        match *self {
            AxisWindows::Reference { step, .. } => k * step as i64,
            AxisWindows::Secondary {
                receptive,
                center0,
                step,
            } => centered_window_start(center0 + k as f64 * step, receptive),
        }
    }

    fn integer_step(&self) -> Option<usize> {
        match *self {
            AxisWindows::Reference { step, .. } => Some(step),
            AxisWindows::Secondary { step, .. } => {
                let rounded = step.round();
                ((step - rounded).abs() < ALIGNMENT_TOLERANCE && rounded >= 1.0).then_some(rounded as usize)
            }
        }
    }

    /// Blocks `k` in `[0, limit)` whose window lies inside `[0, len)`, as an
    /// inclusive range.
    fn fitting(&self, limit: i64, len: usize) -> Option<(i64, i64)> {
        let r = self.receptive() as i64;
        let len = len as i64;
        // start(k) is non-decreasing in k.
        let first = partition_point(0, limit, |k| self.start(k) < 0);
        let end = partition_point(first, limit, |k| self.start(k) + r <= len);
        (first < end).then_some((first, end - 1))
    }
}

/// First `k` in `[lo, hi)` for which `pred` is false, assuming `pred` holds
/// on a prefix.
fn partition_point(mut lo: i64, mut hi: i64, pred: impl Fn(i64) -> bool) -> i64 {
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pred(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

fn axis_geo(geo: &GeoInfo, axis: Axis) -> (f64, f64) {
    match axis {
        Axis::Row => (geo.origin_y, geo.spacing_y),
        Axis::Col => (geo.origin_x, geo.spacing_x),
    }
}

/// Block grid shared by all inputs of a served model. Output pixel
/// `(first + k) * e ..` of the full block grid maps to output row/col `k * e`.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    /// Per input (filter order): row and column placement.
    pub(crate) windows: Vec<[AxisWindows; 2]>,
    pub(crate) expression: [usize; 2],
    pub(crate) first: [i64; 2],
    pub(crate) blocks: [usize; 2],
    pub(crate) geo: GeoInfo,
}

impl Layout {
    pub(crate) fn new<T: Scalar>(config: &ServeConfig<T>, infos: &[ImageInfo]) -> Result<Self> {
        if infos.len() != config.inputs.len() {
            return Err(Error::Serve(format!(
                "{} images given for {} bound inputs",
                infos.len(),
                config.inputs.len()
            )));
        }
        for (name, info) in config.inputs.iter().zip(infos) {
            let want = config.graph.input_channels(name)?;
            if info.channels != want {
                return Err(Error::Serve(format!(
                    "input `{name}` has {} bands, the graph expects {want}",
                    info.channels
                )));
            }
        }
        let spec = &config.spec;
        let reference = config.reference_index();
        let ref_info = &infos[reference];
        let step = spec.step();
        let r = spec.reference_receptive();
        let mut windows = Vec::with_capacity(infos.len());
        for (i, (name, info)) in config.inputs.iter().zip(infos).enumerate() {
            let receptive = spec.input(name).expect("validated binding").receptive;
            let mut axes = [AxisWindows::Reference { receptive: 0, step: 0 }; 2];
            for (a, axis) in Axis::BOTH.into_iter().enumerate() {
                let (rec, d, rr) = (receptive.get(axis), step.get(axis), r.get(axis));
                axes[a] = if i == reference {
                    AxisWindows::Reference {
                        receptive: rec,
                        step: d,
                    }
                } else {
                    let (ref_origin, ref_spacing) = axis_geo(&ref_info.geo, axis);
                    let (origin, spacing) = axis_geo(&info.geo, axis);
                    if ref_spacing.signum() != spacing.signum() {
                        return Err(Error::Alignment {
                            from: ref_info.geo.to_string(),
                            to: info.geo.to_string(),
                        });
                    }
                    let center = ref_origin + (rr as f64 - 1.0) / 2.0 * ref_spacing;
                    AxisWindows::Secondary {
                        receptive: rec,
                        center0: (center - origin) / spacing,
                        step: d as f64 * ref_spacing / spacing,
                    }
                };
            }
            windows.push(axes);
        }

        let mut first = [0i64; 2];
        let mut blocks = [0usize; 2];
        let sizes = |info: &ImageInfo| [info.rows, info.cols];
        for a in 0..2 {
            let limit = {
                let (n, rr, d) = (
                    sizes(ref_info)[a],
                    windows[reference][a].receptive(),
                    step.get(Axis::BOTH[a]),
                );
                if n < rr {
                    0
                } else {
                    ((n - rr) / d + 1) as i64
                }
            };
            let mut range = Some((0i64, limit - 1));
            for (w, info) in windows.iter().zip(infos) {
                range = match (range, w[a].fitting(limit, sizes(info)[a])) {
                    (Some((lo, hi)), Some((l, h))) => Some((lo.max(l), hi.min(h))).filter(|(lo, hi)| lo <= hi),
                    _ => None,
                };
            }
            if let Some((lo, hi)) = range {
                first[a] = lo;
                blocks[a] = (hi - lo + 1) as usize;
            }
        }

        let mut geo = propagate_geo(&ref_info.geo, spec)?;
        geo.origin_y += first[0] as f64 * step.rows as f64 * ref_info.geo.spacing_y;
        geo.origin_x += first[1] as f64 * step.cols as f64 * ref_info.geo.spacing_x;
        let e = spec.expression();
        Ok(Self {
            windows,
            expression: [e.rows, e.cols],
            first,
            blocks,
            geo,
        })
    }

    pub(crate) fn output_region(&self) -> ImageRegion {
        ImageRegion::full(self.blocks[1] * self.expression[1], self.blocks[0] * self.expression[0])
    }

    /// Absolute first block and block count per axis touched by `output`.
    pub(crate) fn blocks_of(&self, output: &ImageRegion) -> ([i64; 2], [usize; 2]) {
        let spans = [(output.row, output.rows), (output.col, output.cols)];
        let mut k0 = [0i64; 2];
        let mut n = [0usize; 2];
        for a in 0..2 {
            let (start, len) = spans[a];
            if len == 0 {
                continue;
            }
            let e = self.expression[a] as i64;
            let lo = start.div_euclid(e);
            let hi = (start + len as i64 - 1).div_euclid(e);
            k0[a] = self.first[a] + lo;
            n[a] = (hi - lo + 1) as usize;
        }
        (k0, n)
    }

    /// Window of input `i` for absolute block `(kr, kc)`.
    pub(crate) fn window(&self, i: usize, kr: i64, kc: i64) -> ImageRegion {
        let [wr, wc] = self.windows[i];
        ImageRegion::new(wc.start(kc), wr.start(kr), wc.receptive(), wr.receptive())
    }

    /// Per input, the bounding region of the windows of every touched block.
    pub(crate) fn covering_regions(&self, output: &ImageRegion) -> Vec<ImageRegion> {
        let (k0, n) = self.blocks_of(output);
        (0..self.windows.len())
            .map(|i| {
                if n[0] == 0 || n[1] == 0 {
                    return ImageRegion::new(0, 0, 0, 0);
                }
                let a = self.window(i, k0[0], k0[1]);
                let b = self.window(i, k0[0] + n[0] as i64 - 1, k0[1] + n[1] as i64 - 1);
                a.union(&b)
            })
            .collect()
    }

    /// As [`Layout::covering_regions`], additionally requiring that every
    /// input advances by as many of its own pixels per block as the
    /// reference does, so one forward pass over the regions reproduces the
    /// per-block windows.
    pub(crate) fn contiguous_regions(&self, output: &ImageRegion) -> Result<Vec<ImageRegion>> {
        let reference = self.windows.iter().find_map(|w| match w {
            [AxisWindows::Reference { step: r, .. }, AxisWindows::Reference { step: c, .. }] => Some([*r, *c]),
            _ => None,
        });
        for (i, w) in self.windows.iter().enumerate() {
            for (a, axis) in w.iter().enumerate() {
                if axis.integer_step() != reference.map(|d| d[a]) {
                    let name = ["row", "column"][a];
                    return Err(Error::Serve(format!(
                        "fully convolutional serving needs every input to advance by the same whole number of pixels per block; input {i} does not along the {name} axis (use patch mode)"
                    )));
                }
            }
        }
        Ok(self.covering_regions(output))
    }
}
