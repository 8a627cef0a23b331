use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense NHWC tensor: `[batch, rows, cols, channels]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: [usize; 4],
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: [usize; 4], data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Model(format!(
                "tensor of shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn filled(shape: [usize; 4], value: T) -> Self {
        Self {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut([usize; 4]) -> T) -> Self {
        let mut data = Vec::with_capacity(shape.iter().product());
        for b in 0..shape[0] {
            for r in 0..shape[1] {
                for c in 0..shape[2] {
                    for ch in 0..shape[3] {
                        data.push(f([b, r, c, ch]));
                    }
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn rows(&self) -> usize {
        self.shape[1]
    }

    pub fn cols(&self) -> usize {
        self.shape[2]
    }

    pub fn channels(&self) -> usize {
        self.shape[3]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn index(&self, b: usize, r: usize, c: usize, ch: usize) -> usize {
        ((b * self.shape[1] + r) * self.shape[2] + c) * self.shape[3] + ch
    }

    pub fn at(&self, b: usize, r: usize, c: usize, ch: usize) -> T {
        self.data[self.index(b, r, c, ch)]
    }

    pub fn byte_len(&self) -> usize {
        byte_len::<T>(self.shape)
    }

    /// Copies batch item `b`, rows `r0..r0+rows`, cols `c0..c0+cols`.
    pub fn slice_spatial(&self, b: usize, r0: usize, c0: usize, rows: usize, cols: usize) -> Tensor<T> {
        let ch = self.channels();
        let mut data = Vec::with_capacity(rows * cols * ch);
        for r in r0..r0 + rows {
            let start = self.index(b, r, c0, 0);
            data.extend_from_slice(&self.data[start..start + cols * ch]);
        }
        Tensor {
            shape: [1, rows, cols, ch],
            data,
        }
    }
}

pub(crate) fn byte_len<T>(shape: [usize; 4]) -> usize {
    shape.iter().product::<usize>() * std::mem::size_of::<T>()
}
