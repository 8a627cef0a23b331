//! Ready-made architectures with seeded random weights.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::geometry::Extent;
use crate::netgraph::graph::{GraphBuilder, ModelGraph};
use crate::netgraph::ops::{ActivationKind, Padding, PoolKind};
use crate::scalar::Scalar;

/// Name of the single output produced by every preset.
pub const OUTPUT: &str = "out";

struct Init {
    rng: ChaCha8Rng,
    positive: bool,
}

impl Init {
    fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            positive: false,
        }
    }

    fn weights<T: Scalar>(&mut self, kernel: Extent, cin: usize, cout: usize) -> (Vec<T>, Vec<T>) {
        let scale = 1.0 / ((kernel.pixel_count() * cin) as f32).sqrt();
        let lo = if self.positive { 0.1 * scale } else { -scale };
        let w = (0..kernel.pixel_count() * cin * cout)
            .map(|_| T::of_f32(self.rng.gen_range(lo..=scale)))
            .collect();
        let b = (0..cout)
            .map(|_| T::of_f32(self.rng.gen_range(lo..=scale) * 0.1))
            .collect();
        (w, b)
    }
}

fn conv<T: Scalar>(g: &mut GraphBuilder<T>, init: &mut Init, src: usize, k: usize, out: usize) -> usize {
    let kernel = Extent::square(k);
    let (w, b) = init.weights(kernel, g.channels(src), out);
    g.conv(src, kernel, Extent::square(1), Padding::Valid, out, w, b)
}

fn conv_relu<T: Scalar>(g: &mut GraphBuilder<T>, init: &mut Init, src: usize, k: usize, out: usize) -> usize {
    let c = conv(g, init, src, k, out);
    g.activation(c, ActivationKind::Relu)
}

fn max_pool<T: Scalar>(g: &mut GraphBuilder<T>, src: usize) -> usize {
    g.pool(src, PoolKind::Max, Extent::square(2), Extent::square(2))
}

/// 1x1 convolution copying `channels` bands unchanged.
pub fn identity<T: Scalar>(input: &str, channels: usize) -> Result<ModelGraph<T>> {
    let mut g = GraphBuilder::new();
    let x = g.input(input, channels);
    let mut w = vec![T::zero(); channels * channels];
    for c in 0..channels {
        w[c * channels + c] = T::one();
    }
    let y = g.conv(
        x,
        Extent::square(1),
        Extent::square(1),
        Padding::Valid,
        channels,
        w,
        vec![T::zero(); channels],
    );
    g.output(OUTPUT, y);
    g.build()
}

/// Fully convolutional classifier with an 80x80 receptive field that emits
/// 16x16 output blocks (four 2x2 poolings undone by one 16x transposed
/// convolution).
pub fn fcn_80_16<T: Scalar>(input: &str, channels: usize, classes: usize, seed: u64) -> Result<ModelGraph<T>> {
    let mut init = Init::new(seed);
    let mut g = GraphBuilder::new();
    let x = g.input(input, channels);
    let mut h = conv_relu(&mut g, &mut init, x, 5, 8);
    h = max_pool(&mut g, h);
    for _ in 0..3 {
        h = conv_relu(&mut g, &mut init, h, 3, 8);
        h = max_pool(&mut g, h);
    }
    h = conv_relu(&mut g, &mut init, h, 3, 8);
    let factor = Extent::square(16);
    let (w, b) = init.weights(factor, 8, classes);
    let y = g.transposed_conv(h, factor, classes, w, b);
    g.output(OUTPUT, y);
    g.build()
}

/// conv3, 2x2 stride-2 max pool, conv3: one output pixel per 8x8 input
/// window, stepping by two pixels.
pub fn conv_pool_conv<T: Scalar>(input: &str, channels: usize, out: usize, seed: u64) -> Result<ModelGraph<T>> {
    let mut init = Init::new(seed);
    let mut g = GraphBuilder::new();
    let x = g.input(input, channels);
    let h = conv_relu(&mut g, &mut init, x, 3, 4);
    let h = max_pool(&mut g, h);
    let y = conv(&mut g, &mut init, h, 3, out);
    g.output(OUTPUT, y);
    g.build()
}

/// Moderate fully convolutional model: conv3, pool, conv3, conv3, 2x
/// transposed convolution. Receptive field 12, expression 2.
pub fn small_fcn<T: Scalar>(input: &str, channels: usize, out: usize, seed: u64) -> Result<ModelGraph<T>> {
    let mut init = Init::new(seed);
    let mut g = GraphBuilder::new();
    let x = g.input(input, channels);
    let mut h = conv_relu(&mut g, &mut init, x, 3, 8);
    h = max_pool(&mut g, h);
    h = conv_relu(&mut g, &mut init, h, 3, 8);
    h = conv_relu(&mut g, &mut init, h, 3, 8);
    let factor = Extent::square(2);
    let (w, b) = init.weights(factor, 8, out);
    let y = g.transposed_conv(h, factor, out, w, b);
    g.output(OUTPUT, y);
    g.build()
}

/// Two-branch hybrid: a 1x1 branch over the coarse input and six 5x5
/// convolutions reducing a 25x25 fine window to one pixel, merged by channel
/// concatenation and a final 1x1 classifier.
pub fn hybrid<T: Scalar>(
    coarse: (&str, usize),
    fine: (&str, usize),
    classes: usize,
    seed: u64,
) -> Result<ModelGraph<T>> {
    let mut init = Init::new(seed);
    let mut g = GraphBuilder::new();
    let x = g.input(coarse.0, coarse.1);
    let mut b = g.input(fine.0, fine.1);
    let a = conv_relu(&mut g, &mut init, x, 1, 8);
    for _ in 0..6 {
        b = conv_relu(&mut g, &mut init, b, 5, 8);
    }
    let m = g.concat(&[a, b]);
    let y = conv(&mut g, &mut init, m, 1, classes);
    g.output(OUTPUT, y);
    g.build()
}

/// Knobs for [`random_graph`].
#[derive(Debug, Clone)]
pub struct RandomGraphOptions {
    pub input_channels: usize,
    pub max_channels: usize,
    pub max_layers: usize,
    pub max_kernel: usize,
    /// Allow stride-2 pooling and convolution.
    pub strided: bool,
    /// End with a transposed convolution undoing the accumulated stride.
    pub transposed_tail: bool,
    /// Strictly positive weights, relu/identity activations and average
    /// pooling only, so every input pixel in a window visibly moves the output.
    pub positive: bool,
}

impl Default for RandomGraphOptions {
    fn default() -> Self {
        Self {
            input_channels: 2,
            max_channels: 4,
            max_layers: 5,
            max_kernel: 5,
            strided: true,
            transposed_tail: false,
            positive: false,
        }
    }
}

/// Random single-input chain with an optional residual `add`.
pub fn random_graph<T: Scalar>(rng: &mut impl Rng, opts: &RandomGraphOptions) -> Result<ModelGraph<T>> {
    let mut init = Init::new(rng.gen());
    init.positive = opts.positive;
    let mut g = GraphBuilder::new();
    let mut h = g.input("image", opts.input_channels);
    let layers = rng.gen_range(1..=opts.max_layers.max(1));
    let mut stride = 1usize;
    for _ in 0..layers {
        match rng.gen_range(0..4) {
            0 if opts.strided && stride < 8 => {
                let window = rng.gen_range(2..=3);
                let kind = if opts.positive || rng.gen_bool(0.5) {
                    PoolKind::Avg
                } else {
                    PoolKind::Max
                };
                h = g.pool(h, kind, Extent::square(window), Extent::square(2));
                stride *= 2;
            }
            1 => {
                let kinds: &[ActivationKind] = if opts.positive {
                    &[ActivationKind::Relu, ActivationKind::Identity]
                } else {
                    &[ActivationKind::Relu, ActivationKind::Sigmoid, ActivationKind::Tanh]
                };
                h = g.activation(h, kinds[rng.gen_range(0..kinds.len())]);
            }
            2 => {
                let ch = g.channels(h);
                let k = rng.gen_range(1..=opts.max_kernel);
                let (w, b) = init.weights(Extent::square(k), ch, ch);
                let branch = g.conv(h, Extent::square(k), Extent::square(1), Padding::Valid, ch, w, b);
                let crop = g.pool(h, PoolKind::Avg, Extent::square(k), Extent::square(1));
                h = g.add(&[branch, crop]);
            }
            _ => {
                let k = rng.gen_range(1..=opts.max_kernel);
                let s = if opts.strided && stride < 8 && k >= 2 && rng.gen_bool(0.25) {
                    2
                } else {
                    1
                };
                let out = rng.gen_range(1..=opts.max_channels);
                let kernel = Extent::new(k, rng.gen_range(1..=opts.max_kernel));
                let (w, b) = init.weights(kernel, g.channels(h), out);
                h = g.conv(h, kernel, Extent::square(s), Padding::Valid, out, w, b);
                stride *= s;
            }
        }
    }
    if opts.transposed_tail && stride > 1 {
        let out = rng.gen_range(1..=opts.max_channels);
        let factor = Extent::square(stride);
        let (w, b) = init.weights(factor, g.channels(h), out);
        h = g.transposed_conv(h, factor, out, w, b);
    }
    g.output(OUTPUT, h);
    g.build()
}
