use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::Extent;
use crate::netgraph::ops::{ActivationKind, Conv, Op, Padding, PoolKind};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Node<T> {
    pub id: String,
    pub op: Op<T>,
    /// Indices of producer nodes; always smaller than this node's index.
    pub inputs: Vec<usize>,
}

/// Immutable, topologically ordered operation graph with named inputs and
/// outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph<T> {
    nodes: Vec<Node<T>>,
    inputs: Vec<(String, usize)>,
    outputs: Vec<(String, usize)>,
    channels: Vec<usize>,
}

impl<T: Scalar> ModelGraph<T> {
    /// Builds a graph from topologically ordered nodes, checking every
    /// structural invariant.
    pub fn from_parts(
        nodes: Vec<Node<T>>,
        inputs: Vec<(String, usize)>,
        outputs: Vec<(String, usize)>,
    ) -> Result<Self> {
        let mut channels = Vec::with_capacity(nodes.len());
        let mut ids = HashMap::new();
        for (idx, node) in nodes.iter().enumerate() {
            if ids.insert(node.id.as_str(), idx).is_some() {
                return Err(Error::graph(&node.id, "duplicate node id"));
            }
            if let Some(&bad) = node.inputs.iter().find(|&&i| i >= idx) {
                return Err(Error::graph(
                    &node.id,
                    format!("input index {bad} does not precede the node (cycle or bad order)"),
                ));
            }
            let in_ch: Vec<usize> = node.inputs.iter().map(|&i| channels[i]).collect();
            channels.push(check_node(node, &in_ch)?);
        }
        for (name, idx) in &inputs {
            match nodes.get(*idx) {
                Some(Node {
                    op: Op::Input { .. }, ..
                }) => {}
                _ => return Err(Error::Model(format!("graph input `{name}` is not an input node"))),
            }
        }
        for (idx, node) in nodes.iter().enumerate() {
            if matches!(node.op, Op::Input { .. }) && !inputs.iter().any(|(_, i)| *i == idx) {
                return Err(Error::graph(&node.id, "input node has no input name"));
            }
        }
        for (name, idx) in &outputs {
            if *idx >= nodes.len() {
                return Err(Error::Model(format!("graph output `{name}` refers to a missing node")));
            }
        }
        if outputs.is_empty() {
            return Err(Error::Model("graph declares no outputs".into()));
        }
        Ok(Self {
            nodes,
            inputs,
            outputs,
            channels,
        })
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    pub fn input_names(&self) -> impl Iterator<Item = &str> {
        self.inputs.iter().map(|(n, _)| n.as_str())
    }

    pub fn output_names(&self) -> impl Iterator<Item = &str> {
        self.outputs.iter().map(|(n, _)| n.as_str())
    }

    pub(crate) fn inputs(&self) -> &[(String, usize)] {
        &self.inputs
    }

    pub(crate) fn outputs(&self) -> &[(String, usize)] {
        &self.outputs
    }

    pub fn input_node(&self, name: &str) -> Result<usize> {
        self.inputs
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, i)| *i)
            .ok_or_else(|| Error::Model(format!("no graph input named `{name}`")))
    }

    pub fn output_node(&self, name: &str) -> Result<usize> {
        self.outputs
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, i)| *i)
            .ok_or_else(|| Error::Model(format!("no graph output named `{name}`")))
    }

    pub fn node_channels(&self, idx: usize) -> usize {
        self.channels[idx]
    }

    pub fn input_channels(&self, name: &str) -> Result<usize> {
        Ok(self.channels[self.input_node(name)?])
    }

    pub fn output_channels(&self, name: &str) -> Result<usize> {
        Ok(self.channels[self.output_node(name)?])
    }

    /// Names of the graph inputs the given output depends on, in graph order.
    pub fn inputs_reaching(&self, output: &str) -> Result<Vec<String>> {
        let needed = self.needed(&[self.output_node(output)?]);
        Ok(self
            .inputs
            .iter()
            .filter(|(_, i)| needed[*i])
            .map(|(n, _)| n.clone())
            .collect())
    }

    /// Marks nodes required to compute `targets`.
    pub(crate) fn needed(&self, targets: &[usize]) -> Vec<bool> {
        let mut needed = vec![false; self.nodes.len()];
        for &t in targets {
            needed[t] = true;
        }
        for idx in (0..self.nodes.len()).rev() {
            if needed[idx] {
                for &i in &self.nodes[idx].inputs {
                    needed[i] = true;
                }
            }
        }
        needed
    }

    /// Index of the last needed consumer of each node (`None` if unused).
    pub(crate) fn last_uses(&self, needed: &[bool]) -> Vec<Option<usize>> {
        let mut last = vec![None; self.nodes.len()];
        for (idx, node) in self.nodes.iter().enumerate() {
            if needed[idx] {
                for &i in &node.inputs {
                    last[i] = Some(idx);
                }
            }
        }
        last
    }

    /// Whether any node needed for `output` uses "same" padding.
    pub fn uses_same_padding(&self, output: &str) -> Result<Option<String>> {
        let needed = self.needed(&[self.output_node(output)?]);
        Ok(self
            .nodes
            .iter()
            .zip(&needed)
            .find(|(n, &need)| need && matches!(&n.op, Op::Conv2D(c) if c.padding == Padding::Same))
            .map(|(n, _)| n.id.clone()))
    }

    /// Output shape of node `idx` given the shapes of its producers.
    pub(crate) fn infer_shape(&self, idx: usize, ins: &[[usize; 4]]) -> Result<[usize; 4]> {
        let node = &self.nodes[idx];
        let fail = |msg: String| Error::graph(&node.id, msg);
        match &node.op {
            Op::Input { .. } => unreachable!("input shapes are supplied by the caller"),
            Op::Conv2D(c) => {
                let [b, h, w, _] = ins[0];
                let (oh, ow) = match c.padding {
                    Padding::Valid => {
                        if h < c.kernel.rows || w < c.kernel.cols {
                            return Err(fail(format!("input {h}x{w} smaller than kernel {}", c.kernel)));
                        }
                        (
                            (h - c.kernel.rows) / c.stride.rows + 1,
                            (w - c.kernel.cols) / c.stride.cols + 1,
                        )
                    }
                    Padding::Same => (h.div_ceil(c.stride.rows), w.div_ceil(c.stride.cols)),
                };
                Ok([b, oh, ow, c.out_channels])
            }
            Op::TransposedConv2D(c) => {
                let [b, h, w, _] = ins[0];
                Ok([b, h * c.stride.rows, w * c.stride.cols, c.out_channels])
            }
            Op::Pool { window, stride, .. } => {
                let [b, h, w, ch] = ins[0];
                if h < window.rows || w < window.cols {
                    return Err(fail(format!("input {h}x{w} smaller than pool window {window}")));
                }
                Ok([
                    b,
                    (h - window.rows) / stride.rows + 1,
                    (w - window.cols) / stride.cols + 1,
                    ch,
                ])
            }
            Op::Activation(_) => Ok(ins[0]),
            Op::ConcatChannels | Op::Add => {
                let first = ins[0];
                for s in &ins[1..] {
                    if s[..3] != first[..3] {
                        return Err(fail(format!(
                            "operands disagree on batch/spatial dims: {first:?} vs {s:?}"
                        )));
                    }
                    if matches!(node.op, Op::Add) && s[3] != first[3] {
                        return Err(fail(format!("channel mismatch {first:?} vs {s:?}")));
                    }
                }
                let ch = match node.op {
                    Op::Add => first[3],
                    _ => ins.iter().map(|s| s[3]).sum(),
                };
                Ok([first[0], first[1], first[2], ch])
            }
        }
    }

    /// Shapes of the requested outputs for the given input shapes, without
    /// running the graph.
    pub fn output_shapes(&self, input_shapes: &[(String, [usize; 4])], outputs: &[&str]) -> Result<Vec<[usize; 4]>> {
        let targets: Vec<usize> = outputs.iter().map(|o| self.output_node(o)).collect::<Result<_>>()?;
        let needed = self.needed(&targets);
        let mut shapes: Vec<Option<[usize; 4]>> = vec![None; self.nodes.len()];
        for (name, shape) in input_shapes {
            let idx = self.input_node(name)?;
            self.check_input_shape(idx, name, *shape)?;
            shapes[idx] = Some(*shape);
        }
        for idx in 0..self.nodes.len() {
            if !needed[idx] || matches!(self.nodes[idx].op, Op::Input { .. }) {
                continue;
            }
            let ins = self.producer_shapes(idx, &shapes)?;
            shapes[idx] = Some(self.infer_shape(idx, &ins)?);
        }
        targets
            .iter()
            .map(|&t| shapes[t].ok_or_else(|| Error::graph(&self.nodes[t].id, "input not fed")))
            .collect()
    }

    pub(crate) fn check_input_shape(&self, idx: usize, name: &str, shape: [usize; 4]) -> Result<()> {
        if shape[3] != self.channels[idx] {
            return Err(Error::graph(
                &self.nodes[idx].id,
                format!(
                    "input `{name}` expects {} channels, got {}",
                    self.channels[idx], shape[3]
                ),
            ));
        }
        Ok(())
    }

    pub(crate) fn producer_shapes(&self, idx: usize, shapes: &[Option<[usize; 4]>]) -> Result<Vec<[usize; 4]>> {
        self.nodes[idx]
            .inputs
            .iter()
            .map(|&i| {
                shapes[i].ok_or_else(|| {
                    Error::graph(
                        &self.nodes[idx].id,
                        format!("producer `{}` was not fed", self.nodes[i].id),
                    )
                })
            })
            .collect()
    }
}

fn check_node<T: Scalar>(node: &Node<T>, in_ch: &[usize]) -> Result<usize> {
    let fail = |msg: String| Err(Error::graph(&node.id, msg));
    let arity = |n: usize| -> Result<()> {
        if in_ch.len() != n {
            return Err(Error::graph(
                &node.id,
                format!("{} expects {n} input(s), got {}", node.op.name(), in_ch.len()),
            ));
        }
        Ok(())
    };
    match &node.op {
        Op::Input { channels } => {
            arity(0)?;
            if *channels == 0 {
                return fail("input needs at least one channel".into());
            }
            Ok(*channels)
        }
        Op::Conv2D(c) | Op::TransposedConv2D(c) => {
            arity(1)?;
            check_conv(node, c, in_ch[0])?;
            if let Op::TransposedConv2D(_) = node.op {
                if c.kernel != c.stride {
                    return fail(format!(
                        "transposed convolution kernel {} must equal its stride {}",
                        c.kernel, c.stride
                    ));
                }
                if c.padding != Padding::Valid {
                    return fail("transposed convolution supports valid padding only".into());
                }
            }
            Ok(c.out_channels)
        }
        Op::Pool { window, stride, .. } => {
            arity(1)?;
            if window.pixel_count() == 0 || stride.pixel_count() == 0 {
                return fail("pool window and stride must be positive".into());
            }
            Ok(in_ch[0])
        }
        Op::Activation(_) => {
            arity(1)?;
            Ok(in_ch[0])
        }
        Op::ConcatChannels => {
            if in_ch.len() < 2 {
                return fail("concat needs at least two inputs".into());
            }
            Ok(in_ch.iter().sum())
        }
        Op::Add => {
            if in_ch.len() < 2 {
                return fail("add needs at least two inputs".into());
            }
            if in_ch.iter().any(|&c| c != in_ch[0]) {
                return fail(format!("add operands have different channels {in_ch:?}"));
            }
            Ok(in_ch[0])
        }
    }
}

fn check_conv<T: Scalar>(node: &Node<T>, c: &Conv<T>, in_ch: usize) -> Result<()> {
    let fail = |msg: String| Err(Error::graph(&node.id, msg));
    if c.kernel.pixel_count() == 0 || c.stride.pixel_count() == 0 {
        return fail("kernel and stride must be positive".into());
    }
    if c.in_channels != in_ch {
        return fail(format!(
            "declares {} input channels but its producer has {in_ch}",
            c.in_channels
        ));
    }
    if c.out_channels == 0 {
        return fail("needs at least one output channel".into());
    }
    if c.weights.len() != c.weight_count() || c.bias.len() != c.out_channels {
        return fail(format!(
            "expects {} weights and {} biases, got {} and {}",
            c.weight_count(),
            c.out_channels,
            c.weights.len(),
            c.bias.len()
        ));
    }
    if c.weights.iter().chain(&c.bias).any(|w| !w.is_finite()) {
        return fail("non-finite weight".into());
    }
    Ok(())
}

/// Incremental graph construction in topological order.
#[derive(Debug, Clone)]
pub struct GraphBuilder<T> {
    nodes: Vec<Node<T>>,
    channels: Vec<usize>,
    inputs: Vec<(String, usize)>,
    outputs: Vec<(String, usize)>,
}

impl<T: Scalar> Default for GraphBuilder<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> GraphBuilder<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            channels: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn push(&mut self, op: Op<T>, inputs: Vec<usize>, channels: usize) -> usize {
        let idx = self.nodes.len();
        self.nodes.push(Node {
            id: format!("n{idx}"),
            op,
            inputs,
        });
        self.channels.push(channels);
        idx
    }

    pub fn channels(&self, node: usize) -> usize {
        self.channels[node]
    }

    pub fn input(&mut self, name: &str, channels: usize) -> usize {
        let idx = self.push(Op::Input { channels }, vec![], channels);
        self.nodes[idx].id = name.to_string();
        self.inputs.push((name.to_string(), idx));
        idx
    }

    #[allow(clippy::too_many_arguments)]
    pub fn conv(
        &mut self,
        src: usize,
        kernel: Extent,
        stride: Extent,
        padding: Padding,
        out_channels: usize,
        weights: Vec<T>,
        bias: Vec<T>,
    ) -> usize {
        let conv = Conv {
            kernel,
            stride,
            padding,
            in_channels: self.channels[src],
            out_channels,
            weights,
            bias,
        };
        self.push(Op::Conv2D(conv), vec![src], out_channels)
    }

    pub fn transposed_conv(
        &mut self,
        src: usize,
        factor: Extent,
        out_channels: usize,
        weights: Vec<T>,
        bias: Vec<T>,
    ) -> usize {
        let conv = Conv {
            kernel: factor,
            stride: factor,
            padding: Padding::Valid,
            in_channels: self.channels[src],
            out_channels,
            weights,
            bias,
        };
        self.push(Op::TransposedConv2D(conv), vec![src], out_channels)
    }

    pub fn pool(&mut self, src: usize, kind: PoolKind, window: Extent, stride: Extent) -> usize {
        let ch = self.channels[src];
        self.push(Op::Pool { kind, window, stride }, vec![src], ch)
    }

    pub fn activation(&mut self, src: usize, kind: ActivationKind) -> usize {
        let ch = self.channels[src];
        self.push(Op::Activation(kind), vec![src], ch)
    }

    pub fn concat(&mut self, srcs: &[usize]) -> usize {
        let ch = srcs.iter().map(|&s| self.channels[s]).sum();
        self.push(Op::ConcatChannels, srcs.to_vec(), ch)
    }

    pub fn add(&mut self, srcs: &[usize]) -> usize {
        let ch = self.channels[srcs[0]];
        self.push(Op::Add, srcs.to_vec(), ch)
    }

    pub fn output(&mut self, name: &str, node: usize) -> &mut Self {
        self.outputs.push((name.to_string(), node));
        self
    }

    pub fn build(self) -> Result<ModelGraph<T>> {
        ModelGraph::from_parts(self.nodes, self.inputs, self.outputs)
    }
}
