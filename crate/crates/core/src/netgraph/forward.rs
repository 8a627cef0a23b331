use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::memory::{Allocation, MemoryTracker};
use crate::netgraph::graph::ModelGraph;
use crate::netgraph::ops::{ActivationKind, Conv, Op, Padding, PoolKind};
use crate::netgraph::tensor::{byte_len, Tensor};
use crate::scalar::Scalar;

impl<T: Scalar> ModelGraph<T> {
    /// Runs the graph and returns every named output.
    pub fn forward(&self, inputs: Vec<(String, Tensor<T>)>) -> Result<BTreeMap<String, Tensor<T>>> {
        let names: Vec<String> = self.output_names().map(str::to_string).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let outs = self.run(inputs, &refs, None)?;
        Ok(names.into_iter().zip(outs).collect())
    }

    /// Runs only the nodes needed for `outputs`. Tensors are released as soon
    /// as their last consumer has run; when a tracker is given, every live
    /// tensor (inputs included) is accounted in it.
    pub fn run(
        &self,
        inputs: Vec<(String, Tensor<T>)>,
        outputs: &[&str],
        tracker: Option<&Arc<MemoryTracker>>,
    ) -> Result<Vec<Tensor<T>>> {
        let targets: Vec<usize> = outputs.iter().map(|o| self.output_node(o)).collect::<Result<_>>()?;
        let needed = self.needed(&targets);
        let last = self.last_uses(&needed);
        let mut keep = vec![false; self.nodes().len()];
        for &t in &targets {
            keep[t] = true;
        }
        let mut live: Vec<Option<(Tensor<T>, Option<Allocation>)>> = (0..self.nodes().len()).map(|_| None).collect();
        for (name, tensor) in inputs {
            let idx = self.input_node(&name)?;
            self.check_input_shape(idx, &name, tensor.shape())?;
            let guard = tracker.map(|t| t.hold(tensor.byte_len()));
            live[idx] = Some((tensor, guard));
        }
        for (idx, node) in self.nodes().iter().enumerate() {
            if !needed[idx] {
                continue;
            }
            if let Op::Input { .. } = node.op {
                if live[idx].is_none() {
                    return Err(Error::graph(&node.id, "graph input was not fed"));
                }
                continue;
            }
            let out = {
                let ins: Vec<&Tensor<T>> = node
                    .inputs
                    .iter()
                    .map(|&i| &live[i].as_ref().expect("producer ran earlier").0)
                    .collect();
                let shapes: Vec<[usize; 4]> = ins.iter().map(|t| t.shape()).collect();
                let shape = self.infer_shape(idx, &shapes)?;
                apply(&node.op, &ins, shape)
            };
            let guard = tracker.map(|t| t.hold(out.byte_len()));
            live[idx] = Some((out, guard));
            for &i in &node.inputs {
                if last[i] == Some(idx) && !keep[i] {
                    live[i] = None;
                }
            }
        }
        let mut result: Vec<Tensor<T>> = Vec::with_capacity(targets.len());
        for (k, &t) in targets.iter().enumerate() {
            let tensor = match live[t].take() {
                Some((tensor, _)) => tensor,
                // the same output requested twice
                None => result[targets[..k].iter().position(|&u| u == t).expect("seen")].clone(),
            };
            result.push(tensor);
        }
        Ok(result)
    }

    /// Largest total of simultaneously live tensor bytes when running
    /// `output` on inputs of the given shapes, following the same schedule
    /// and release policy as [`ModelGraph::run`].
    pub fn peak_intermediate_bytes(&self, input_shapes: &[(String, [usize; 4])], output: &str) -> Result<usize> {
        let target = self.output_node(output)?;
        let needed = self.needed(&[target]);
        let last = self.last_uses(&needed);
        let mut shapes: Vec<Option<[usize; 4]>> = vec![None; self.nodes().len()];
        let mut live = 0usize;
        for (name, shape) in input_shapes {
            let idx = self.input_node(name)?;
            self.check_input_shape(idx, name, *shape)?;
            shapes[idx] = Some(*shape);
            live += byte_len::<T>(*shape);
        }
        let mut peak = live;
        for (idx, node) in self.nodes().iter().enumerate() {
            if !needed[idx] || matches!(node.op, Op::Input { .. }) {
                continue;
            }
            let ins = self.producer_shapes(idx, &shapes)?;
            let shape = self.infer_shape(idx, &ins)?;
            shapes[idx] = Some(shape);
            live += byte_len::<T>(shape);
            peak = peak.max(live);
            for &i in &node.inputs {
                if last[i] == Some(idx) && i != target {
                    live -= byte_len::<T>(shapes[i].expect("producer shape"));
                }
            }
        }
        Ok(peak)
    }
}

fn apply<T: Scalar>(op: &Op<T>, ins: &[&Tensor<T>], shape: [usize; 4]) -> Tensor<T> {
    match op {
        Op::Input { .. } => unreachable!(),
        Op::Conv2D(c) => conv2d(ins[0], c, shape),
        Op::TransposedConv2D(c) => transposed_conv2d(ins[0], c, shape),
        Op::Pool { kind, window, stride } => pool(
            ins[0],
            *kind,
            (window.rows, window.cols),
            (stride.rows, stride.cols),
            shape,
        ),
        Op::Activation(kind) => activation(ins[0], *kind),
        Op::ConcatChannels => concat(ins, shape),
        Op::Add => add(ins, shape),
    }
}

/// Per output channel the sum is `bias + Σ(kernel_row, kernel_col, in)` in
/// that fixed order, independent of where the pixel sits in the tensor.
fn conv2d<T: Scalar>(input: &Tensor<T>, c: &Conv<T>, shape: [usize; 4]) -> Tensor<T> {
    let [_, h, w, ci] = input.shape();
    let [_, oh, ow, co] = shape;
    let (kh, kw) = (c.kernel.rows, c.kernel.cols);
    let (sh, sw) = (c.stride.rows, c.stride.cols);
    let (pad_top, pad_left) = match c.padding {
        Padding::Valid => (0, 0),
        Padding::Same => (
            ((oh - 1) * sh + kh).saturating_sub(h) / 2,
            ((ow - 1) * sw + kw).saturating_sub(w) / 2,
        ),
    };
    let data = input.data();
    let mut out = Tensor::zeros(shape);
    if out.data().is_empty() {
        return out;
    }
    out.data_mut()
        .par_chunks_mut(ow * co)
        .enumerate()
        .for_each(|(row_idx, out_row)| {
            let b = row_idx / oh;
            let oy = row_idx % oh;
            let mut acc = vec![T::zero(); co];
            for ox in 0..ow {
                acc.copy_from_slice(&c.bias);
                for ky in 0..kh {
                    let iy = (oy * sh + ky) as isize - pad_top as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let ix = (ox * sw + kx) as isize - pad_left as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let px = ((b * h + iy as usize) * w + ix as usize) * ci;
                        let pixel = &data[px..px + ci];
                        let wbase = (ky * kw + kx) * ci * co;
                        for (i, &x) in pixel.iter().enumerate() {
                            let wrow = &c.weights[wbase + i * co..wbase + (i + 1) * co];
                            for (a, &wv) in acc.iter_mut().zip(wrow) {
                                *a += x * wv;
                            }
                        }
                    }
                }
                out_row[ox * co..(ox + 1) * co].copy_from_slice(&acc);
            }
        });
    out
}

fn transposed_conv2d<T: Scalar>(input: &Tensor<T>, c: &Conv<T>, shape: [usize; 4]) -> Tensor<T> {
    let [_, h, w, ci] = input.shape();
    let [_, oh, ow, co] = shape;
    let (sh, sw) = (c.stride.rows, c.stride.cols);
    let data = input.data();
    let mut out = Tensor::zeros(shape);
    if out.data().is_empty() {
        return out;
    }
    out.data_mut()
        .par_chunks_mut(ow * co)
        .enumerate()
        .for_each(|(row_idx, out_row)| {
            let b = row_idx / oh;
            let oy = row_idx % oh;
            let (y, ky) = (oy / sh, oy % sh);
            for ox in 0..ow {
                let (x, kx) = (ox / sw, ox % sw);
                let acc = &mut out_row[ox * co..(ox + 1) * co];
                acc.copy_from_slice(&c.bias);
                let px = ((b * h + y) * w + x) * ci;
                let wbase = (ky * sw + kx) * ci * co;
                for (i, &v) in data[px..px + ci].iter().enumerate() {
                    let wrow = &c.weights[wbase + i * co..wbase + (i + 1) * co];
                    for (a, &wv) in acc.iter_mut().zip(wrow) {
                        *a += v * wv;
                    }
                }
            }
        });
    out
}

fn pool<T: Scalar>(
    input: &Tensor<T>,
    kind: PoolKind,
    (kh, kw): (usize, usize),
    (sh, sw): (usize, usize),
    shape: [usize; 4],
) -> Tensor<T> {
    let [_, h, w, ch] = input.shape();
    let [_, oh, ow, _] = shape;
    let data = input.data();
    let norm = T::from_usize(kh * kw).expect("window size fits the scalar");
    let mut out = Tensor::zeros(shape);
    if out.data().is_empty() {
        return out;
    }
    out.data_mut()
        .par_chunks_mut(ow * ch)
        .enumerate()
        .for_each(|(row_idx, out_row)| {
            let b = row_idx / oh;
            let oy = row_idx % oh;
            for ox in 0..ow {
                for c in 0..ch {
                    let mut acc: Option<T> = None;
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let v = data[((b * h + oy * sh + ky) * w + ox * sw + kx) * ch + c];
                            acc = Some(match (acc, kind) {
                                (None, _) => v,
                                (Some(a), PoolKind::Max) => {
                                    if v > a {
                                        v
                                    } else {
                                        a
                                    }
                                }
                                (Some(a), PoolKind::Avg) => a + v,
                            });
                        }
                    }
                    let v = acc.expect("window is non-empty");
                    out_row[ox * ch + c] = match kind {
                        PoolKind::Max => v,
                        PoolKind::Avg => v / norm,
                    };
                }
            }
        });
    out
}

fn activation<T: Scalar>(input: &Tensor<T>, kind: ActivationKind) -> Tensor<T> {
    let f = |x: T| match kind {
        ActivationKind::Relu => {
            if x > T::zero() {
                x
            } else {
                T::zero()
            }
        }
        ActivationKind::Sigmoid => T::one() / (T::one() + (-x).exp()),
        ActivationKind::Tanh => x.tanh(),
        ActivationKind::Identity => x,
    };
    let data = input.data().iter().map(|&x| f(x)).collect();
    Tensor::new(input.shape(), data).expect("same shape")
}

fn concat<T: Scalar>(ins: &[&Tensor<T>], shape: [usize; 4]) -> Tensor<T> {
    let pixels = shape[0] * shape[1] * shape[2];
    let mut data = Vec::with_capacity(pixels * shape[3]);
    for p in 0..pixels {
        for t in ins {
            let ch = t.channels();
            data.extend_from_slice(&t.data()[p * ch..(p + 1) * ch]);
        }
    }
    Tensor::new(shape, data).expect("concat shape")
}

fn add<T: Scalar>(ins: &[&Tensor<T>], shape: [usize; 4]) -> Tensor<T> {
    let mut data = ins[0].data().to_vec();
    for t in &ins[1..] {
        for (a, &b) in data.iter_mut().zip(t.data()) {
            *a += b;
        }
    }
    Tensor::new(shape, data).expect("add shape")
}
