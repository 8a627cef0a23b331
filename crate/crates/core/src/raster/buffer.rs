use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ImageRegion;
use crate::scalar::Scalar;

/// Pixel element type of a raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    U8,
    U16,
    F32,
}

impl DataType {
    pub fn size(self) -> usize {
        match self {
            DataType::U8 => 1,
            DataType::U16 => 2,
            DataType::F32 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DataType::U8 => "u8",
            DataType::U16 => "u16",
            DataType::F32 => "f32",
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DataType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "u8" => Ok(DataType::U8),
            "u16" => Ok(DataType::U16),
            "f32" => Ok(DataType::F32),
            other => Err(Error::Format(format!("unknown dtype `{other}`"))),
        }
    }
}

/// Typed pixel storage.
#[derive(Debug, Clone, PartialEq)]
pub enum PixelData {
    U8(Vec<u8>),
    U16(Vec<u16>),
    F32(Vec<f32>),
}

impl PixelData {
    pub fn zeros(dtype: DataType, len: usize) -> Self {
        match dtype {
            DataType::U8 => PixelData::U8(vec![0; len]),
            DataType::U16 => PixelData::U16(vec![0; len]),
            DataType::F32 => PixelData::F32(vec![0.0; len]),
        }
    }

    pub fn dtype(&self) -> DataType {
        match self {
            PixelData::U8(_) => DataType::U8,
            PixelData::U16(_) => DataType::U16,
            PixelData::F32(_) => DataType::F32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            PixelData::U8(v) => v.len(),
            PixelData::U16(v) => v.len(),
            PixelData::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get_f64(&self, i: usize) -> f64 {
        match self {
            PixelData::U8(v) => v[i] as f64,
            PixelData::U16(v) => v[i] as f64,
            PixelData::F32(v) => v[i] as f64,
        }
    }

    /// Little-endian payload bytes.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        match self {
            PixelData::U8(v) => v.clone(),
            PixelData::U16(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            PixelData::F32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }

    pub fn from_le_bytes(dtype: DataType, bytes: &[u8]) -> Result<Self> {
        if !bytes.len().is_multiple_of(dtype.size()) {
            return Err(Error::Format(format!(
                "{} bytes is not a whole number of {dtype} values",
                bytes.len()
            )));
        }
        Ok(match dtype {
            DataType::U8 => PixelData::U8(bytes.to_vec()),
            DataType::U16 => PixelData::U16(
                bytes
                    .chunks_exact(2)
                    .map(|c| u16::from_le_bytes([c[0], c[1]]))
                    .collect(),
            ),
            DataType::F32 => PixelData::F32(
                bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            ),
        })
    }
}

macro_rules! for_each_variant {
    ($data:expr, $v:ident => $body:expr) => {
        match $data {
            PixelData::U8($v) => $body,
            PixelData::U16($v) => $body,
            PixelData::F32($v) => $body,
        }
    };
}

/// Pixels of one region, row-major with channels interleaved last.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelBuffer {
    region: ImageRegion,
    channels: usize,
    data: PixelData,
}

impl PixelBuffer {
    pub fn new(region: ImageRegion, channels: usize, data: PixelData) -> Result<Self> {
        let expected = region.pixel_count() * channels;
        if data.len() != expected {
            return Err(Error::Format(format!(
                "buffer for {region} with {channels} channels needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { region, channels, data })
    }

    pub fn zeros(region: ImageRegion, channels: usize, dtype: DataType) -> Self {
        Self {
            region,
            channels,
            data: PixelData::zeros(dtype, region.pixel_count() * channels),
        }
    }

    pub fn from_f32(region: ImageRegion, channels: usize, values: Vec<f32>) -> Result<Self> {
        Self::new(region, channels, PixelData::F32(values))
    }

    pub fn region(&self) -> &ImageRegion {
        &self.region
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dtype(&self) -> DataType {
        self.data.dtype()
    }

    pub fn data(&self) -> &PixelData {
        &self.data
    }

    pub fn into_data(self) -> PixelData {
        self.data
    }

    pub fn byte_len(&self) -> usize {
        self.data.len() * self.dtype().size()
    }

    /// Value at absolute image coordinates.
    pub fn get(&self, col: i64, row: i64, channel: usize) -> f64 {
        self.data.get_f64(self.offset(col, row) + channel)
    }

    fn offset(&self, col: i64, row: i64) -> usize {
        debug_assert!(self.region.contains_pixel(col, row));
        let c = (col - self.region.col) as usize;
        let r = (row - self.region.row) as usize;
        (r * self.region.cols + c) * self.channels
    }

    /// Copy of the pixels of `window`, which must lie inside this buffer.
    pub fn crop(&self, window: &ImageRegion) -> Result<PixelBuffer> {
        if !self.region.contains(window) {
            return Err(Error::Contract(format!(
                "crop {window} is outside buffer {}",
                self.region
            )));
        }
        let ch = self.channels;
        let row_len = window.cols * ch;
        let data = for_each_variant!(&self.data, v => {
            let mut out = Vec::with_capacity(window.pixel_count() * ch);
            for row in window.row..window.row_end() {
                if window.cols == 0 {
                    break;
                }
                let start = self.offset(window.col, row);
                out.extend_from_slice(&v[start..start + row_len]);
            }
            out.into()
        });
        Ok(PixelBuffer {
            region: *window,
            channels: ch,
            data,
        })
    }

    /// Copies `src` into the matching part of this buffer.
    pub fn paste(&mut self, src: &PixelBuffer) -> Result<()> {
        if !self.region.contains(src.region()) || src.channels != self.channels || src.dtype() != self.dtype() {
            return Err(Error::Contract(format!(
                "cannot paste {} ({} ch {}) into {} ({} ch {})",
                src.region,
                src.channels,
                src.dtype(),
                self.region,
                self.channels,
                self.dtype()
            )));
        }
        if src.region.is_empty() {
            return Ok(());
        }
        let row_len = src.region.cols * self.channels;
        let offsets: Vec<usize> = (src.region.row..src.region.row_end())
            .map(|row| self.offset(src.region.col, row))
            .collect();
        match (&mut self.data, &src.data) {
            (PixelData::U8(d), PixelData::U8(s)) => paste_rows(d, s, &offsets, row_len),
            (PixelData::U16(d), PixelData::U16(s)) => paste_rows(d, s, &offsets, row_len),
            (PixelData::F32(d), PixelData::F32(s)) => paste_rows(d, s, &offsets, row_len),
            _ => unreachable!("dtype checked above"),
        }
        Ok(())
    }

    /// Writes the pixels of `window` into `dst` converted to `T`, in
    /// row-major channel-last order.
    pub fn window_into<T: Scalar>(&self, window: &ImageRegion, dst: &mut [T]) {
        debug_assert!(self.region.contains(window));
        let row_len = window.cols * self.channels;
        for (i, row) in (window.row..window.row_end()).enumerate() {
            let start = self.offset(window.col, row);
            let out = &mut dst[i * row_len..(i + 1) * row_len];
            for_each_variant!(&self.data, v => {
                for (o, x) in out.iter_mut().zip(&v[start..start + row_len]) {
                    *o = T::from_f64(*x as f64).unwrap_or_else(T::nan);
                }
            })
        }
    }

    /// All values converted to `T`.
    pub fn values_as<T: Scalar>(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.data.len()];
        if !out.is_empty() {
            self.window_into(&self.region, &mut out);
        }
        out
    }
}

fn paste_rows<E: Copy>(dst: &mut [E], src: &[E], offsets: &[usize], row_len: usize) {
    for (i, &off) in offsets.iter().enumerate() {
        dst[off..off + row_len].copy_from_slice(&src[i * row_len..(i + 1) * row_len]);
    }
}

impl From<Vec<u8>> for PixelData {
    fn from(v: Vec<u8>) -> Self {
        PixelData::U8(v)
    }
}

impl From<Vec<u16>> for PixelData {
    fn from(v: Vec<u16>) -> Self {
        PixelData::U16(v)
    }
}

impl From<Vec<f32>> for PixelData {
    fn from(v: Vec<f32>) -> Self {
        PixelData::F32(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(region: ImageRegion, ch: usize) -> PixelBuffer {
        let n = region.pixel_count() * ch;
        PixelBuffer::new(region, ch, PixelData::U16((0..n as u16).collect())).unwrap()
    }

    #[test]
    fn crop_then_paste_restores() {
        let full = ramp(ImageRegion::new(10, 20, 6, 5), 3);
        let win = ImageRegion::new(12, 21, 3, 2);
        let part = full.crop(&win).unwrap();
        assert_eq!(part.get(12, 21, 0), full.get(12, 21, 0));
        assert_eq!(part.get(14, 22, 2), full.get(14, 22, 2));
        let mut blank = PixelBuffer::zeros(*full.region(), 3, DataType::U16);
        blank.paste(&part).unwrap();
        assert_eq!(blank.get(13, 22, 1), full.get(13, 22, 1));
        assert_eq!(blank.get(10, 20, 0), 0.0);
    }

    #[test]
    fn wrong_length_rejected() {
        assert!(PixelBuffer::from_f32(ImageRegion::full(2, 2), 1, vec![0.0; 3]).is_err());
    }

    #[test]
    fn le_bytes_roundtrip() {
        let d = PixelData::F32(vec![1.5, -2.0, f32::MAX]);
        let b = d.to_le_bytes();
        assert_eq!(&b[..4], &1.5f32.to_le_bytes());
        assert_eq!(PixelData::from_le_bytes(DataType::F32, &b).unwrap(), d);
    }
}
