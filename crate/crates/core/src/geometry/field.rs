use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::geometry::{GeoInfo, ImageRegion};

/// Output spacing over reference-input spacing, per axis.
pub type ScaleFactor = Ratio<u64>;

/// Spatial extent in pixels, written `RxC` (rows by cols).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Extent {
    pub rows: usize,
    pub cols: usize,
}

impl Extent {
    pub const fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    pub const fn square(n: usize) -> Self {
        Self::new(n, n)
    }

    pub fn get(&self, axis: Axis) -> usize {
        match axis {
            Axis::Row => self.rows,
            Axis::Col => self.cols,
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.rows * self.cols
    }
}

impl fmt::Display for Extent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

impl FromStr for Extent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (r, c) = s
            .split_once('x')
            .ok_or_else(|| Error::Spec(format!("expected RxC, got `{s}`")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Spec(format!("bad extent component `{v}` in `{s}`")))
        };
        Ok(Extent::new(parse(r)?, parse(c)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    Row,
    Col,
}

impl Axis {
    pub const BOTH: [Axis; 2] = [Axis::Row, Axis::Col];
}

/// Field parameters of one axis for one input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AxisField {
    pub receptive: usize,
    pub expression: usize,
    pub scale: ScaleFactor,
}

impl AxisField {
    /// Input-space distance between consecutive expression blocks.
    pub fn step(&self) -> Result<usize> {
        let step = self.scale * Ratio::from_integer(self.expression as u64);
        if !step.is_integer() || step.is_zero() {
            return Err(Error::Spec(format!(
                "expression field {} times scale factor {} is not a positive integer",
                self.expression, self.scale
            )));
        }
        Ok(step.to_integer() as usize)
    }

    /// Number of output pixels produced from `n` input pixels (whole blocks only).
    pub fn output_len(&self, n: usize) -> Result<usize> {
        let d = self.step()?;
        if n < self.receptive {
            return Ok(0);
        }
        Ok(self.expression * ((n - self.receptive) / d + 1))
    }

    /// Blocks `k0..=k1` touched by the output span `[start, start + len)`.
    pub fn touched_blocks(&self, start: i64, len: usize) -> Option<(i64, i64)> {
        if len == 0 {
            return None;
        }
        let e = self.expression as i64;
        let k0 = start.div_euclid(e);
        let end = start + len as i64;
        let k1 = (end + e - 1).div_euclid(e) - 1;
        Some((k0, k1))
    }

    /// Input span covering the receptive windows of every block touched by
    /// the output span.
    pub fn requested_span(&self, start: i64, len: usize) -> Result<(i64, usize)> {
        let d = self.step()? as i64;
        match self.touched_blocks(start, len) {
            None => Ok((start.div_euclid(self.expression as i64) * d, 0)),
            Some((k0, k1)) => Ok((k0 * d, ((k1 - k0) * d) as usize + self.receptive)),
        }
    }

    /// Offset, in reference pixels, from the reference origin to the center of
    /// output pixel 0: the first expression block is centered on its window.
    pub fn origin_offset(&self) -> f64 {
        let f = self.scale.to_f64().unwrap_or(1.0);
        (self.receptive as f64 - 1.0 - (self.expression as f64 - 1.0) * f) / 2.0
    }
}

/// Receptive field of one model input, in that input's own pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputField {
    pub name: String,
    pub receptive: Extent,
}

/// Region and spacing calculus of a model: receptive fields per input,
/// expression field and scale factor of the output, and the reference input
/// whose grid the output is defined against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldSpec {
    inputs: Vec<InputField>,
    expression: Extent,
    scale_rows: ScaleFactor,
    scale_cols: ScaleFactor,
    reference: String,
}

impl FieldSpec {
    pub fn new(
        inputs: Vec<InputField>,
        expression: Extent,
        scale: (ScaleFactor, ScaleFactor),
        reference: impl Into<String>,
    ) -> Result<Self> {
        let spec = Self {
            inputs,
            expression,
            scale_rows: scale.0,
            scale_cols: scale.1,
            reference: reference.into(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Single-input spec with the same scale factor on both axes.
    pub fn single(input: impl Into<String>, receptive: Extent, expression: Extent, scale: ScaleFactor) -> Result<Self> {
        let name = input.into();
        Self::new(
            vec![InputField {
                name: name.clone(),
                receptive,
            }],
            expression,
            (scale, scale),
            name,
        )
    }

    /// Identity-net spec: 1x1 fields, unit scale.
    pub fn identity(input: impl Into<String>) -> Self {
        Self::single(
            input,
            Extent::square(1),
            Extent::square(1),
            ScaleFactor::from_integer(1),
        )
        .expect("identity spec is valid")
    }

    fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::Spec("no inputs declared".into()));
        }
        for (i, input) in self.inputs.iter().enumerate() {
            if input.receptive.rows == 0 || input.receptive.cols == 0 {
                return Err(Error::Spec(format!(
                    "receptive field of `{}` must be positive",
                    input.name
                )));
            }
            if self.inputs[..i].iter().any(|o| o.name == input.name) {
                return Err(Error::Spec(format!("input `{}` declared twice", input.name)));
            }
        }
        if !self.inputs.iter().any(|i| i.name == self.reference) {
            return Err(Error::Spec(format!(
                "reference input `{}` is not declared",
                self.reference
            )));
        }
        if self.expression.rows == 0 || self.expression.cols == 0 {
            return Err(Error::Spec("expression field must be positive".into()));
        }
        if self.scale_rows.is_zero() || self.scale_cols.is_zero() {
            return Err(Error::Spec("scale factor must be positive".into()));
        }
        for axis in Axis::BOTH {
            self.axis(axis).step()?;
        }
        Ok(())
    }

    pub fn inputs(&self) -> &[InputField] {
        &self.inputs
    }

    pub fn input(&self, name: &str) -> Option<&InputField> {
        self.inputs.iter().find(|i| i.name == name)
    }

    pub fn reference(&self) -> &str {
        &self.reference
    }

    pub fn reference_receptive(&self) -> Extent {
        self.input(&self.reference).expect("validated reference").receptive
    }

    pub fn expression(&self) -> Extent {
        self.expression
    }

    pub fn scale(&self, axis: Axis) -> ScaleFactor {
        match axis {
            Axis::Row => self.scale_rows,
            Axis::Col => self.scale_cols,
        }
    }

    /// Reference-input axis parameters.
    pub fn axis(&self, axis: Axis) -> AxisField {
        self.input_axis(&self.reference, axis).expect("validated reference")
    }

    /// Axis parameters seen from input `name` (its own receptive field, the
    /// shared expression field and scale factor).
    pub fn input_axis(&self, name: &str, axis: Axis) -> Option<AxisField> {
        self.input(name).map(|i| AxisField {
            receptive: i.receptive.get(axis),
            expression: self.expression.get(axis),
            scale: self.scale(axis),
        })
    }

    /// Reference-input distance between expression blocks, `e * f` per axis.
    pub fn step(&self) -> Extent {
        Extent::new(
            self.axis(Axis::Row).step().expect("validated"),
            self.axis(Axis::Col).step().expect("validated"),
        )
    }

    /// Parses the textual form `rf=RxC,ef=RxC,sf=N[/D]` (optionally with a
    /// per-axis `sf=N[/D]xN[/D]`). Multi-input specs name each receptive field
    /// (`rf=coarse:1x1+fine:25x25`) and pick the reference with `ref=NAME`;
    /// unnamed receptive fields belong to `default_input`.
    pub fn parse_with_default_input(text: &str, default_input: &str) -> Result<Self> {
        let mut inputs = Vec::new();
        let mut expression = None;
        let mut scale = None;
        let mut reference = None;
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Spec(format!("expected key=value, got `{part}`")))?;
            match key.trim() {
                "rf" => {
                    for item in value.split('+') {
                        let (name, ext) = match item.split_once(':') {
                            Some((n, e)) => (n.trim().to_string(), e),
                            None => (default_input.to_string(), item),
                        };
                        inputs.push(InputField {
                            name,
                            receptive: ext.parse()?,
                        });
                    }
                }
                "ef" => expression = Some(value.parse::<Extent>()?),
                "sf" => {
                    scale = Some(match value.split_once('x') {
                        Some((r, c)) => (parse_ratio(r)?, parse_ratio(c)?),
                        None => {
                            let f = parse_ratio(value)?;
                            (f, f)
                        }
                    })
                }
                "ref" => reference = Some(value.trim().to_string()),
                other => return Err(Error::Spec(format!("unknown field key `{other}`"))),
            }
        }
        let expression = expression.ok_or_else(|| Error::Spec("missing ef=".into()))?;
        let scale = scale.unwrap_or((ScaleFactor::from_integer(1), ScaleFactor::from_integer(1)));
        let reference = match reference {
            Some(r) => r,
            None if inputs.len() == 1 => inputs[0].name.clone(),
            None if inputs.iter().any(|i| i.name == default_input) => default_input.to_string(),
            None => return Err(Error::Spec("ref= is required with several inputs".into())),
        };
        FieldSpec::new(inputs, expression, scale, reference)
    }
}

fn parse_ratio(s: &str) -> Result<ScaleFactor> {
    let bad = || Error::Spec(format!("bad scale factor `{s}`"));
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n, d),
        None => (s, "1"),
    };
    let n: u64 = n.trim().parse().map_err(|_| bad())?;
    let d: u64 = d.trim().parse().map_err(|_| bad())?;
    if n == 0 || d == 0 {
        return Err(bad());
    }
    Ok(ScaleFactor::new(n, d))
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rf: Vec<String> = self
            .inputs
            .iter()
            .map(|i| format!("{}:{}", i.name, i.receptive))
            .collect();
        write!(f, "rf={},ef={},", rf.join("+"), self.expression)?;
        if self.scale_rows == self.scale_cols {
            write!(f, "sf={}", self.scale_rows)?;
        } else {
            write!(f, "sf={}x{}", self.scale_rows, self.scale_cols)?;
        }
        write!(f, ",ref={}", self.reference)
    }
}

/// Output size produced from a reference input of size `input`.
pub fn compute_output_size(input: Extent, spec: &FieldSpec) -> Result<Extent> {
    Ok(Extent::new(
        spec.axis(Axis::Row).output_len(input.rows)?,
        spec.axis(Axis::Col).output_len(input.cols)?,
    ))
}

/// Reference-input region that must be fed to the model to produce
/// `output`: the union of the receptive windows of every expression block the
/// output region touches. Callers crop the produced blocks back to `output`.
pub fn requested_input_region(output: &ImageRegion, spec: &FieldSpec) -> Result<ImageRegion> {
    let (row, rows) = spec.axis(Axis::Row).requested_span(output.row, output.rows)?;
    let (col, cols) = spec.axis(Axis::Col).requested_span(output.col, output.cols)?;
    if output.is_empty() {
        return Ok(ImageRegion::new(col, row, 0, 0));
    }
    Ok(ImageRegion::new(col, row, cols, rows))
}

/// Output grid placement derived from the reference input grid.
pub fn propagate_geo(reference: &GeoInfo, spec: &FieldSpec) -> Result<GeoInfo> {
    let rows = spec.axis(Axis::Row);
    let cols = spec.axis(Axis::Col);
    let fr = rows.scale.to_f64().unwrap_or(f64::NAN);
    let fc = cols.scale.to_f64().unwrap_or(f64::NAN);
    Ok(GeoInfo {
        origin_x: reference.origin_x + reference.spacing_x * cols.origin_offset(),
        origin_y: reference.origin_y + reference.spacing_y * rows.origin_offset(),
        spacing_x: reference.spacing_x * fc,
        spacing_y: reference.spacing_y * fr,
        projection: reference.projection.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(r: usize, e: usize, f: ScaleFactor) -> FieldSpec {
        FieldSpec::single("x", Extent::square(r), Extent::square(e), f).unwrap()
    }

    fn unit() -> ScaleFactor {
        ScaleFactor::from_integer(1)
    }

    #[test]
    fn output_size_examples() {
        let s = spec(80, 16, unit());
        assert_eq!(
            compute_output_size(Extent::square(100), &s).unwrap(),
            Extent::square(32)
        );
        assert_eq!(compute_output_size(Extent::square(79), &s).unwrap(), Extent::square(0));
        let id = spec(1, 1, unit());
        assert_eq!(
            compute_output_size(Extent::square(50), &id).unwrap(),
            Extent::square(50)
        );
    }

    #[test]
    fn non_integer_step_is_rejected() {
        let err = FieldSpec::single("x", Extent::square(3), Extent::square(3), ScaleFactor::new(1, 2));
        assert!(matches!(err, Err(Error::Spec(_))));
    }

    #[test]
    fn requested_region_examples() {
        let s = spec(80, 16, unit());
        let q = requested_input_region(&ImageRegion::new(0, 0, 16, 16), &s).unwrap();
        assert_eq!(q, ImageRegion::new(0, 0, 80, 80));
        let q = requested_input_region(&ImageRegion::new(8, 8, 16, 16), &s).unwrap();
        assert_eq!(q, ImageRegion::new(0, 0, 96, 96));
        let id = spec(1, 1, unit());
        let q = requested_input_region(&ImageRegion::new(0, 0, 5, 5), &id).unwrap();
        assert_eq!(q, ImageRegion::new(0, 0, 5, 5));
        let q = requested_input_region(&ImageRegion::new(4, 4, 0, 3), &s).unwrap();
        assert!(q.is_empty());
    }

    #[test]
    fn geo_examples() {
        let g = GeoInfo::new((0.0, 0.0), (1.5, 1.5), "p");
        assert_eq!(propagate_geo(&g, &spec(1, 1, unit())).unwrap(), g);
        let out = propagate_geo(&g, &spec(80, 16, unit())).unwrap();
        assert_eq!((out.origin_x, out.spacing_x), (48.0, 1.5));
        assert_eq!(out.projection, "p");
        // 2x2 stride-2 pooling: output pixel 0 covers input pixels 0 and 1,
        // whose midpoint is 5 m from the first input center
        let g = GeoInfo::new((0.0, 0.0), (10.0, 10.0), "");
        let out = propagate_geo(&g, &spec(2, 1, ScaleFactor::from_integer(2))).unwrap();
        assert_eq!((out.origin_x, out.spacing_x), (5.0, 20.0));
    }

    #[test]
    fn parse_roundtrip() {
        let s = FieldSpec::parse_with_default_input("rf=80x80,ef=16x16,sf=1", "x").unwrap();
        assert_eq!(s, spec(80, 16, unit()));
        let hybrid =
            FieldSpec::parse_with_default_input("rf=coarse:1x1+fine:25x25,ef=1x1,sf=1,ref=coarse", "x").unwrap();
        assert_eq!(hybrid.reference(), "coarse");
        assert_eq!(hybrid.input("fine").unwrap().receptive, Extent::square(25));
        let again = FieldSpec::parse_with_default_input(&hybrid.to_string(), "x").unwrap();
        assert_eq!(again, hybrid);
        let half = FieldSpec::parse_with_default_input("rf=2x2,ef=2x2,sf=1/2", "x").unwrap();
        assert_eq!(half.step(), Extent::square(1));
        assert!(FieldSpec::parse_with_default_input("rf=3x3", "x").is_err());
    }

    fn scale() -> impl Strategy<Value = ScaleFactor> {
        prop_oneof![
            Just(ScaleFactor::new(1, 2)),
            Just(ScaleFactor::from_integer(1)),
            Just(ScaleFactor::from_integer(2)),
            Just(ScaleFactor::from_integer(3)),
        ]
    }

    fn axis_field() -> impl Strategy<Value = AxisField> {
        (1usize..=32, 1usize..=32, scale()).prop_filter_map("step", |(r, e, f)| {
            let e = if *f.denom() == 2 && e % 2 == 1 { e + 1 } else { e };
            let a = AxisField {
                receptive: r,
                expression: e,
                scale: f,
            };
            a.step().ok().map(|_| a)
        })
    }

    proptest! {
        // every touched block's receptive window lies inside the request
        #[test]
        fn request_covers_touched_windows(a in axis_field(), n in 1usize..400, s0 in 0usize..400, len in 1usize..200) {
            let out = a.output_len(n).unwrap();
            prop_assume!(out > 0);
            let start = (s0 % out) as i64;
            let len = len.min(out - start as usize);
            let (qs, ql) = a.requested_span(start, len).unwrap();
            let d = a.step().unwrap() as i64;
            let e = a.expression as i64;
            for k in 0..(out as i64 / e) {
                let touches = k * e < start + len as i64 && (k + 1) * e > start;
                if touches {
                    prop_assert!(k * d >= qs);
                    prop_assert!(k * d + a.receptive as i64 <= qs + ql as i64);
                }
            }
            // and the request stays inside the input
            prop_assert!(qs >= 0 && qs + ql as i64 <= n as i64);
        }

        #[test]
        fn request_is_monotone(a in axis_field(), s in 0i64..100, l in 1usize..50, grow_l in 0i64..10, grow_r in 0usize..10) {
            let inner = a.requested_span(s + grow_l, l).unwrap();
            let outer = a.requested_span(s, l + grow_l as usize + grow_r).unwrap();
            prop_assert!(outer.0 <= inner.0);
            prop_assert!(outer.0 + outer.1 as i64 >= inner.0 + inner.1 as i64);
        }

        #[test]
        fn full_request_reproduces_output(a in axis_field(), n in 1usize..600) {
            let out = a.output_len(n).unwrap();
            prop_assume!(out > 0);
            let (qs, ql) = a.requested_span(0, out).unwrap();
            prop_assert_eq!(qs, 0);
            prop_assert!(ql <= n);
            prop_assert_eq!(a.output_len(ql).unwrap(), out);
        }
    }
}
