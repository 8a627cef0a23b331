//! Receptive/expression field derivation from a graph and validation of
//! declared field specs.

use std::fmt;

use num_integer::Integer;
use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::geometry::{Axis, Extent, FieldSpec, InputField, ScaleFactor};
use crate::netgraph::graph::ModelGraph;
use crate::netgraph::ops::Op;
use crate::netgraph::tensor::Tensor;
use crate::scalar::Scalar;

/// How one node transforms pixel positions along an axis.
enum AxisMap {
    Input,
    /// Valid window of `k` pixels every `s` pixels.
    Window {
        k: i64,
        s: i64,
    },
    /// Each input pixel expands into `s` output pixels.
    Upsample {
        s: i64,
    },
    Pointwise,
    Merge,
}

fn axis_map<T>(op: &Op<T>, axis: Axis) -> AxisMap {
    match op {
        Op::Input { .. } => AxisMap::Input,
        Op::Conv2D(c) => AxisMap::Window {
            k: c.kernel.get(axis) as i64,
            s: c.stride.get(axis) as i64,
        },
        Op::TransposedConv2D(c) => AxisMap::Upsample {
            s: c.stride.get(axis) as i64,
        },
        Op::Pool { window, stride, .. } => AxisMap::Window {
            k: window.get(axis) as i64,
            s: stride.get(axis) as i64,
        },
        Op::Activation(_) => AxisMap::Pointwise,
        Op::ConcatChannels | Op::Add => AxisMap::Merge,
    }
}

struct AxisTrace<'g, T> {
    graph: &'g ModelGraph<T>,
    input: usize,
    axis: Axis,
}

impl<T: Scalar> AxisTrace<'_, T> {
    /// Input pixel span `[lo, hi]` that output pixels `[lo, hi]` of `node`
    /// depend on, or `None` if the node does not depend on this input.
    fn interval(&self, node: usize, lo: i64, hi: i64) -> Option<(i64, i64)> {
        let n = &self.graph.nodes()[node];
        match axis_map(&n.op, self.axis) {
            AxisMap::Input => (node == self.input).then_some((lo, hi)),
            AxisMap::Window { k, s } => self.interval(n.inputs[0], lo * s, hi * s + k - 1),
            AxisMap::Upsample { s } => self.interval(n.inputs[0], lo.div_euclid(s), hi.div_euclid(s)),
            AxisMap::Pointwise => self.interval(n.inputs[0], lo, hi),
            AxisMap::Merge => n
                .inputs
                .iter()
                .filter_map(|&i| self.interval(i, lo, hi))
                .reduce(|a, b| (a.0.min(b.0), a.1.max(b.1))),
        }
    }

    /// Cumulative jump (input pixels per node pixel) of every node reached
    /// from the input, and the granularity: the lcm of the numerators of all
    /// jumps on the way, i.e. the smallest input shift that every
    /// intermediate grid follows with a whole number of its own pixels.
    fn jumps(&self, needed: &[bool]) -> Result<(Vec<Option<Ratio<u64>>>, u64)> {
        let nodes = self.graph.nodes();
        let mut jumps: Vec<Option<Ratio<u64>>> = vec![None; nodes.len()];
        let mut granularity = 1u64;
        for (idx, node) in nodes.iter().enumerate() {
            if !needed[idx] {
                continue;
            }
            let j = match axis_map(&node.op, self.axis) {
                AxisMap::Input => (idx == self.input).then(|| Ratio::from_integer(1)),
                AxisMap::Window { s, .. } => jumps[node.inputs[0]].map(|j| j * s as u64),
                AxisMap::Upsample { s } => jumps[node.inputs[0]].map(|j| j / s as u64),
                AxisMap::Pointwise => jumps[node.inputs[0]],
                AxisMap::Merge => {
                    let reached: Vec<Ratio<u64>> = node.inputs.iter().filter_map(|&i| jumps[i]).collect();
                    if let Some(bad) = reached.iter().find(|&&j| j != reached[0]) {
                        return Err(Error::graph(
                            &node.id,
                            format!("branches merge with inconsistent jumps {} and {bad}", reached[0]),
                        ));
                    }
                    reached.first().copied()
                }
            };
            if let Some(j) = j {
                granularity = granularity.lcm(j.numer());
            }
            jumps[idx] = j;
        }
        Ok((jumps, granularity))
    }
}

/// Per-input, per-axis derivation result before the expression field is fixed.
struct InputAxis {
    scale: ScaleFactor,
    min_expression: u64,
}

/// Derives the field spec of `output` with `reference` as reference input and
/// the smallest admissible expression field.
pub fn derive_fields<T: Scalar>(graph: &ModelGraph<T>, reference: &str, output: &str) -> Result<FieldSpec> {
    derive_fields_with_expression(graph, reference, output, None)
}

/// As [`derive_fields`], optionally forcing a larger expression field, which
/// must be a multiple of the minimal one.
pub fn derive_fields_with_expression<T: Scalar>(
    graph: &ModelGraph<T>,
    reference: &str,
    output: &str,
    expression: Option<Extent>,
) -> Result<FieldSpec> {
    let out = graph.output_node(output)?;
    if let Some(node) = graph.uses_same_padding(output)? {
        return Err(Error::Spec(format!(
            "node `{node}` uses same padding; fields are only defined for valid padding"
        )));
    }
    let names = graph.inputs_reaching(output)?;
    if !names.iter().any(|n| n == reference) {
        return Err(Error::Spec(format!(
            "reference input `{reference}` does not feed output `{output}`"
        )));
    }
    let needed = graph.needed(&[out]);
    let mut expr = [0usize; 2];
    let mut scales = [ScaleFactor::from_integer(1); 2];
    let mut per_input: Vec<[InputAxis; 2]> = Vec::new();
    for name in &names {
        let input = graph.input_node(name)?;
        let mut axes = Vec::with_capacity(2);
        for axis in Axis::BOTH {
            let trace = AxisTrace { graph, input, axis };
            let (jumps, granularity) = trace.jumps(&needed)?;
            let scale = jumps[out].expect("input reaches output");
            // e = d / f, which is integral because numer(f) divides d
            let e = Ratio::from_integer(granularity) / scale;
            axes.push(InputAxis {
                scale,
                min_expression: e.to_integer(),
            });
        }
        let [r, c]: [InputAxis; 2] = axes.try_into().ok().expect("two axes");
        per_input.push([r, c]);
    }
    let ref_idx = names.iter().position(|n| n == reference).expect("checked");
    for (a, axis) in Axis::BOTH.into_iter().enumerate() {
        let minimal = per_input.iter().fold(1u64, |acc, ia| acc.lcm(&ia[a].min_expression));
        let e = match expression {
            None => minimal,
            Some(ext) => {
                let want = ext.get(axis) as u64;
                if want == 0 || !want.is_multiple_of(minimal) {
                    return Err(Error::Spec(format!(
                        "{axis:?} expression field {want} is not a multiple of the minimal {minimal}"
                    )));
                }
                want
            }
        };
        expr[a] = e as usize;
        scales[a] = per_input[ref_idx][a].scale;
    }

    let mut inputs = Vec::with_capacity(names.len());
    for (name, axes) in names.iter().zip(&per_input) {
        let input = graph.input_node(name)?;
        let mut receptive = [0usize; 2];
        for (a, axis) in Axis::BOTH.into_iter().enumerate() {
            let trace = AxisTrace { graph, input, axis };
            let e = expr[a] as i64;
            let step = axes[a].scale * e as u64;
            if !step.is_integer() {
                return Err(Error::Spec(format!(
                    "input `{name}`: expression field {e} times scale {} is not integral",
                    axes[a].scale
                )));
            }
            let step = step.to_integer() as i64;
            let block = |k: i64| trace.interval(out, k * e, k * e + e - 1).expect("input reaches output");
            let (lo, hi) = block(0);
            for k in 1..=2 {
                let (l, h) = block(k);
                if l != lo + k * step || h != hi + k * step {
                    return Err(Error::Spec(format!(
                        "input `{name}` {axis:?}: block {k} window [{l}, {h}] is not block 0 \
                         window [{lo}, {hi}] shifted by {}",
                        k * step
                    )));
                }
            }
            if lo != 0 {
                return Err(Error::Spec(format!(
                    "input `{name}` {axis:?}: first block window starts at {lo}"
                )));
            }
            receptive[a] = (hi - lo + 1) as usize;
        }
        inputs.push(InputField {
            name: name.clone(),
            receptive: Extent::new(receptive[0], receptive[1]),
        });
    }
    let spec = FieldSpec::new(inputs, Extent::new(expr[0], expr[1]), (scales[0], scales[1]), reference)?;
    check_block_sizes(graph, &spec, output)?;
    Ok(spec)
}

/// Output sizes for inputs of one and two blocks, from shape inference.
fn check_block_sizes<T: Scalar>(graph: &ModelGraph<T>, spec: &FieldSpec, output: &str) -> Result<()> {
    for blocks in 1..=2usize {
        let shapes = block_input_shapes(graph, spec, blocks)?;
        let got = graph.output_shapes(&shapes, &[output])?[0];
        let want = Extent::new(spec.expression().rows * blocks, spec.expression().cols * blocks);
        if Extent::new(got[1], got[2]) != want {
            return Err(Error::Spec(format!(
                "an input of {blocks} block(s) yields {}x{} output pixels instead of {want}",
                got[1], got[2]
            )));
        }
    }
    Ok(())
}

/// Input shapes covering `blocks` expression blocks per axis, every input on
/// its own grid with the same spacing as the reference.
fn block_input_shapes<T: Scalar>(
    graph: &ModelGraph<T>,
    spec: &FieldSpec,
    blocks: usize,
) -> Result<Vec<(String, [usize; 4])>> {
    let step = spec.step();
    spec.inputs()
        .iter()
        .map(|i| {
            let ch = graph.input_channels(&i.name)?;
            Ok((
                i.name.clone(),
                [
                    1,
                    i.receptive.rows + (blocks - 1) * step.rows,
                    i.receptive.cols + (blocks - 1) * step.cols,
                    ch,
                ],
            ))
        })
        .collect()
}

/// Outcome of one validation check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Result of checking a declared field spec against a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub passed: bool,
    pub checks: Vec<Check>,
    pub derived: Option<FieldSpec>,
}

impl ValidationReport {
    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.passed &= passed;
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            detail,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "[{}] {}: {}",
                if c.passed { "pass" } else { "FAIL" },
                c.name,
                c.detail
            )?;
        }
        write!(f, "validation {}", if self.passed { "passed" } else { "failed" })
    }
}

/// Checks `declared` against the graph: forward runs on inputs of one and two
/// blocks must produce one and two expression fields, and the derivable
/// fields (if any) must agree. Secondary inputs are assumed to share the
/// reference spacing for the two-block run.
pub fn validate_fields<T: Scalar>(graph: &ModelGraph<T>, declared: &FieldSpec, output: &str) -> ValidationReport {
    let mut report = ValidationReport {
        passed: true,
        checks: Vec::new(),
        derived: None,
    };
    let reaching = match graph.inputs_reaching(output) {
        Ok(r) => r,
        Err(e) => {
            report.push("output", false, e.to_string());
            return report;
        }
    };
    let declared_names: Vec<&str> = declared.inputs().iter().map(|i| i.name.as_str()).collect();
    let inputs_ok =
        reaching.len() == declared_names.len() && reaching.iter().all(|n| declared_names.contains(&n.as_str()));
    report.push(
        "inputs",
        inputs_ok,
        format!("graph feeds `{output}` from {reaching:?}, declared {declared_names:?}"),
    );
    if !inputs_ok {
        return report;
    }
    match graph.uses_same_padding(output) {
        Ok(Some(node)) => report.push(
            "padding",
            false,
            format!("node `{node}` uses same padding; streamed output would differ at borders"),
        ),
        Ok(None) => report.push("padding", true, "valid padding throughout".into()),
        Err(e) => report.push("padding", false, e.to_string()),
    }
    for blocks in 1..=2usize {
        let want = Extent::new(declared.expression().rows * blocks, declared.expression().cols * blocks);
        let name = if blocks == 1 { "one block" } else { "two blocks" };
        let measured = block_input_shapes(graph, declared, blocks).and_then(|shapes| {
            let tensors = shapes
                .iter()
                .map(|(n, s)| (n.clone(), Tensor::<T>::zeros(*s)))
                .collect();
            graph.run(tensors, &[output], None)
        });
        match measured {
            Ok(out) => {
                let got = Extent::new(out[0].rows(), out[0].cols());
                report.push(
                    name,
                    got == want,
                    format!("output {got} (rows x cols), expected {want}"),
                );
            }
            Err(e) => report.push(name, false, e.to_string()),
        }
    }
    match derive_fields_with_expression(graph, declared.reference(), output, Some(declared.expression())) {
        Ok(derived) => {
            let agree = derived == *declared;
            report.push(
                "derived fields",
                agree,
                format!("derived {derived}, declared {declared}"),
            );
            report.derived = Some(derived);
        }
        Err(e) => {
            let minimal = derive_fields(graph, declared.reference(), output);
            match minimal {
                // derivable, but the declared expression field is not a multiple
                Ok(min) => {
                    report.push("derived fields", false, format!("{e}; minimal spec is {min}"));
                    report.derived = Some(min);
                }
                Err(_) => report.push("derived fields", true, format!("not derivable ({e})")),
            }
        }
    }
    report
}

/// Checks that a single receptive window of every input yields exactly one
/// expression block (the patch-based serving contract).
pub fn check_patch_shape<T: Scalar>(graph: &ModelGraph<T>, spec: &FieldSpec, output: &str) -> Result<()> {
    let shapes = block_input_shapes(graph, spec, 1)?;
    let got = graph.output_shapes(&shapes, &[output])?[0];
    let want = spec.expression();
    if Extent::new(got[1], got[2]) != want {
        return Err(Error::Validation(format!(
            "one receptive window yields {}x{} output pixels, expected {want}",
            got[1], got[2]
        )));
    }
    Ok(())
}
