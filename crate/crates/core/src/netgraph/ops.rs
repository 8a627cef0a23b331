use serde::{Deserialize, Serialize};

use crate::geometry::Extent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    #[default]
    Valid,
    Same,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolKind {
    Max,
    Avg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Relu,
    Sigmoid,
    Tanh,
    Identity,
}

/// Convolution parameters. Weights are laid out `[kernel_row][kernel_col][in][out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv<T> {
    pub kernel: Extent,
    pub stride: Extent,
    pub padding: Padding,
    pub in_channels: usize,
    pub out_channels: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T> Conv<T> {
    pub fn weight_count(&self) -> usize {
        self.kernel.rows * self.kernel.cols * self.in_channels * self.out_channels
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Op<T> {
    Input {
        channels: usize,
    },
    Conv2D(Conv<T>),
    /// Upsampling convolution; the kernel equals the stride, so every input
    /// pixel expands into one non-overlapping `stride`-sized block.
    TransposedConv2D(Conv<T>),
    Pool {
        kind: PoolKind,
        window: Extent,
        stride: Extent,
    },
    Activation(ActivationKind),
    ConcatChannels,
    Add,
}

impl<T> Op<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Input { .. } => "input",
            Op::Conv2D(_) => "conv2d",
            Op::TransposedConv2D(_) => "transposed_conv2d",
            Op::Pool { .. } => "pool",
            Op::Activation(_) => "activation",
            Op::ConcatChannels => "concat_channels",
            Op::Add => "add",
        }
    }
}
