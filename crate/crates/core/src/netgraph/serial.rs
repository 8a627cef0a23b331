//! Model file pair: `name.ngraph.json` (topology) and `name.ngraph.bin`
//! (little-endian f32 weights). Each convolution's params carry
//! `weights_offset`/`weights_len`, counted in f32 values; a block holds the
//! kernel (`[kernel_row][kernel_col][in][out]`) followed by the bias.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Extent;
use crate::netgraph::graph::{ModelGraph, Node};
use crate::netgraph::ops::{ActivationKind, Conv, Op, Padding, PoolKind};
use crate::scalar::Scalar;

const FORMAT: &str = "ngraph-v1";

#[derive(Debug, Serialize, Deserialize)]
struct Descriptor {
    format: String,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    nodes: Vec<NodeDesc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeDesc {
    id: String,
    #[serde(flatten)]
    op: OpDesc,
    #[serde(default)]
    inputs: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "op", content = "params", rename_all = "snake_case")]
enum OpDesc {
    Input {
        channels: usize,
    },
    Conv2d(ConvDesc),
    TransposedConv2d(ConvDesc),
    Pool {
        kind: PoolKind,
        window: [usize; 2],
        stride: [usize; 2],
    },
    Activation {
        kind: ActivationKind,
    },
    ConcatChannels {},
    Add {},
}

#[derive(Debug, Serialize, Deserialize)]
struct ConvDesc {
    kernel: [usize; 2],
    stride: [usize; 2],
    #[serde(default)]
    padding: Padding,
    in_channels: usize,
    out_channels: usize,
    weights_offset: usize,
    weights_len: usize,
}

/// Descriptor and weight-blob paths for a model path given as
/// `name.ngraph.json`, `name.ngraph.bin` or bare `name`.
pub fn model_paths(path: &Path) -> (PathBuf, PathBuf) {
    let s = path.to_string_lossy();
    let stem = s
        .strip_suffix(".ngraph.json")
        .or_else(|| s.strip_suffix(".ngraph.bin"))
        .unwrap_or(&s);
    (
        PathBuf::from(format!("{stem}.ngraph.json")),
        PathBuf::from(format!("{stem}.ngraph.bin")),
    )
}

fn ext(v: [usize; 2]) -> Extent {
    Extent::new(v[0], v[1])
}

impl<T: Scalar> ModelGraph<T> {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (json, bin) = model_paths(path.as_ref());
        let text = std::fs::read_to_string(&json).map_err(|e| Error::io_path("reading model", &json, e))?;
        let blob = std::fs::read(&bin).map_err(|e| Error::io_path("reading weights", &bin, e))?;
        Self::from_descriptor(&text, &blob)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let (json, bin) = model_paths(path.as_ref());
        let (text, blob) = self.to_descriptor()?;
        std::fs::write(&json, text).map_err(|e| Error::io_path("writing model", &json, e))?;
        std::fs::write(&bin, blob).map_err(|e| Error::io_path("writing weights", &bin, e))?;
        Ok(())
    }

    pub fn from_descriptor(text: &str, blob: &[u8]) -> Result<Self> {
        let desc: Descriptor = serde_json::from_str(text).map_err(|e| Error::Model(format!("descriptor: {e}")))?;
        if desc.format != FORMAT {
            return Err(Error::Model(format!(
                "unsupported format `{}` (expected {FORMAT})",
                desc.format
            )));
        }
        if !blob.len().is_multiple_of(4) {
            return Err(Error::Model(format!(
                "weight blob of {} bytes is not f32-aligned",
                blob.len()
            )));
        }
        let weights: Vec<f32> = blob
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();

        let order = topological_order(&desc.nodes)?;
        let mut position = HashMap::new();
        for (new_idx, &old) in order.iter().enumerate() {
            position.insert(desc.nodes[old].id.as_str(), new_idx);
        }
        let mut nodes = Vec::with_capacity(order.len());
        for &old in &order {
            let nd = &desc.nodes[old];
            let inputs = nd.inputs.iter().map(|i| position[i.as_str()]).collect();
            let op = match &nd.op {
                OpDesc::Input { channels } => Op::Input { channels: *channels },
                OpDesc::Conv2d(c) => Op::Conv2D(conv_from_desc(&nd.id, c, &weights)?),
                OpDesc::TransposedConv2d(c) => Op::TransposedConv2D(conv_from_desc(&nd.id, c, &weights)?),
                OpDesc::Pool { kind, window, stride } => Op::Pool {
                    kind: *kind,
                    window: ext(*window),
                    stride: ext(*stride),
                },
                OpDesc::Activation { kind } => Op::Activation(*kind),
                OpDesc::ConcatChannels {} => Op::ConcatChannels,
                OpDesc::Add {} => Op::Add,
            };
            nodes.push(Node {
                id: nd.id.clone(),
                op,
                inputs,
            });
        }
        let lookup = |map: &BTreeMap<String, String>, what: &str| -> Result<Vec<(String, usize)>> {
            map.iter()
                .map(|(name, id)| {
                    position
                        .get(id.as_str())
                        .map(|&i| (name.clone(), i))
                        .ok_or_else(|| Error::Model(format!("{what} `{name}` refers to unknown node `{id}`")))
                })
                .collect()
        };
        let mut inputs = lookup(&desc.inputs, "input")?;
        inputs.sort_by_key(|(_, i)| *i);
        let outputs = lookup(&desc.outputs, "output")?;
        ModelGraph::from_parts(nodes, inputs, outputs)
    }

    pub fn to_descriptor(&self) -> Result<(String, Vec<u8>)> {
        let mut blob: Vec<f32> = Vec::new();
        let mut conv_desc = |c: &Conv<T>| {
            let offset = blob.len();
            blob.extend(c.weights.iter().chain(&c.bias).map(|w| w.as_f32()));
            ConvDesc {
                kernel: [c.kernel.rows, c.kernel.cols],
                stride: [c.stride.rows, c.stride.cols],
                padding: c.padding,
                in_channels: c.in_channels,
                out_channels: c.out_channels,
                weights_offset: offset,
                weights_len: blob.len() - offset,
            }
        };
        let nodes = self.nodes();
        let descs = nodes
            .iter()
            .map(|n| NodeDesc {
                id: n.id.clone(),
                op: match &n.op {
                    Op::Input { channels } => OpDesc::Input { channels: *channels },
                    Op::Conv2D(c) => OpDesc::Conv2d(conv_desc(c)),
                    Op::TransposedConv2D(c) => OpDesc::TransposedConv2d(conv_desc(c)),
                    Op::Pool { kind, window, stride } => OpDesc::Pool {
                        kind: *kind,
                        window: [window.rows, window.cols],
                        stride: [stride.rows, stride.cols],
                    },
                    Op::Activation(k) => OpDesc::Activation { kind: *k },
                    Op::ConcatChannels => OpDesc::ConcatChannels {},
                    Op::Add => OpDesc::Add {},
                },
                inputs: n.inputs.iter().map(|&i| nodes[i].id.clone()).collect(),
            })
            .collect();
        let names = |list: &[(String, usize)]| {
            list.iter()
                .map(|(name, i)| (name.clone(), nodes[*i].id.clone()))
                .collect()
        };
        let desc = Descriptor {
            format: FORMAT.to_string(),
            inputs: names(self.inputs()),
            outputs: names(self.outputs()),
            nodes: descs,
        };
        let text = serde_json::to_string_pretty(&desc).map_err(|e| Error::Model(e.to_string()))?;
        Ok((text, blob.iter().flat_map(|w| w.to_le_bytes()).collect()))
    }
}

fn conv_from_desc<T: Scalar>(id: &str, c: &ConvDesc, blob: &[f32]) -> Result<Conv<T>> {
    let kernel = ext(c.kernel);
    let count = kernel.pixel_count() * c.in_channels * c.out_channels;
    if c.weights_len != count + c.out_channels {
        return Err(Error::graph(
            id,
            format!(
                "weights_len {} does not match kernel {kernel} x {} x {} plus bias",
                c.weights_len, c.in_channels, c.out_channels
            ),
        ));
    }
    let block = blob
        .get(c.weights_offset..c.weights_offset + c.weights_len)
        .ok_or_else(|| {
            Error::graph(
                id,
                format!(
                    "weights [{}, {}) exceed the blob of {} values",
                    c.weights_offset,
                    c.weights_offset + c.weights_len,
                    blob.len()
                ),
            )
        })?;
    let conv = |v: &[f32]| v.iter().map(|&w| T::of_f32(w)).collect();
    Ok(Conv {
        kernel,
        stride: ext(c.stride),
        padding: c.padding,
        in_channels: c.in_channels,
        out_channels: c.out_channels,
        weights: conv(&block[..count]),
        bias: conv(&block[count..]),
    })
}

/// Kahn's algorithm, stable with respect to file order.
fn topological_order(nodes: &[NodeDesc]) -> Result<Vec<usize>> {
    let mut index = HashMap::new();
    for (i, n) in nodes.iter().enumerate() {
        if index.insert(n.id.as_str(), i).is_some() {
            return Err(Error::graph(&n.id, "duplicate node id"));
        }
    }
    let mut pending = vec![0usize; nodes.len()];
    let mut consumers = vec![Vec::new(); nodes.len()];
    for (i, n) in nodes.iter().enumerate() {
        for input in &n.inputs {
            let &src = index
                .get(input.as_str())
                .ok_or_else(|| Error::graph(&n.id, format!("unknown input node `{input}`")))?;
            pending[i] += 1;
            consumers[src].push(i);
        }
    }
    let mut ready: std::collections::BTreeSet<usize> = (0..nodes.len()).filter(|&i| pending[i] == 0).collect();
    let mut order = Vec::with_capacity(nodes.len());
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &c in &consumers[i] {
            pending[c] -= 1;
            if pending[c] == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() != nodes.len() {
        let stuck = (0..nodes.len()).find(|&i| pending[i] > 0).expect("cycle member");
        return Err(Error::graph(&nodes[stuck].id, "graph contains a cycle"));
    }
    Ok(order)
}
