//! "RFRAW v1": a flat little-endian payload (`name.rfraw`) plus a JSON sidecar
//! (`name.rfraw.json`) carrying the header.

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GeoInfo, ImageRegion};
use crate::raster::{DataType, PixelBuffer, PixelData};

/// Raster dimensions, element type and placement.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterHeader {
    pub cols: usize,
    pub rows: usize,
    pub channels: usize,
    pub dtype: DataType,
    pub geo: GeoInfo,
}

impl RasterHeader {
    pub fn new(cols: usize, rows: usize, channels: usize, dtype: DataType, geo: GeoInfo) -> Self {
        Self {
            cols,
            rows,
            channels,
            dtype,
            geo,
        }
    }

    pub fn pixel_bytes(&self) -> usize {
        self.channels * self.dtype.size()
    }

    pub fn payload_len(&self) -> u64 {
        self.rows as u64 * self.cols as u64 * self.pixel_bytes() as u64
    }

    pub fn bounds(&self) -> ImageRegion {
        ImageRegion::full(self.cols, self.rows)
    }

    fn validate(&self) -> Result<()> {
        if self.cols == 0 || self.rows == 0 || self.channels == 0 {
            return Err(Error::Format(format!(
                "raster dimensions must be positive, got {}x{}x{}",
                self.cols, self.rows, self.channels
            )));
        }
        self.geo.validate()
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    cols: usize,
    rows: usize,
    channels: usize,
    dtype: DataType,
    origin_x: f64,
    origin_y: f64,
    spacing_x: f64,
    spacing_y: f64,
    projection: String,
}

impl From<&RasterHeader> for Sidecar {
    fn from(h: &RasterHeader) -> Self {
        Sidecar {
            cols: h.cols,
            rows: h.rows,
            channels: h.channels,
            dtype: h.dtype,
            origin_x: h.geo.origin_x,
            origin_y: h.geo.origin_y,
            spacing_x: h.geo.spacing_x,
            spacing_y: h.geo.spacing_y,
            projection: h.geo.projection.clone(),
        }
    }
}

impl From<Sidecar> for RasterHeader {
    fn from(s: Sidecar) -> Self {
        RasterHeader {
            cols: s.cols,
            rows: s.rows,
            channels: s.channels,
            dtype: s.dtype,
            geo: GeoInfo::new((s.origin_x, s.origin_y), (s.spacing_x, s.spacing_y), s.projection),
        }
    }
}

/// Path of the JSON sidecar belonging to a payload path.
pub fn sidecar_path(payload: &Path) -> PathBuf {
    let mut s = payload.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn read_header(path: &Path) -> Result<RasterHeader> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io_path("reading", &side, e))?;
    let sidecar: Sidecar =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", side.display())))?;
    let header = RasterHeader::from(sidecar);
    header.validate()?;
    Ok(header)
}

fn check_bounds(header: &RasterHeader, region: &ImageRegion) -> Result<()> {
    if !header.bounds().contains(region) || region.col < 0 || region.row < 0 {
        return Err(Error::OutOfBounds {
            region: *region,
            cols: header.cols,
            rows: header.rows,
        });
    }
    Ok(())
}

/// Region-wise reader. Each read seeks once per row (once per region when the
/// region spans full rows), so cost is proportional to the region size.
#[derive(Debug)]
pub struct RasterReader {
    path: PathBuf,
    header: RasterHeader,
    file: Mutex<File>,
}

impl RasterReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let header = read_header(&path)?;
        let file = File::open(&path).map_err(|e| Error::io_path("opening", &path, e))?;
        let len = file
            .metadata()
            .map_err(|e| Error::io_path("inspecting", &path, e))?
            .len();
        if len != header.payload_len() {
            return Err(Error::Format(format!(
                "{}: payload is {len} bytes, header implies {}",
                path.display(),
                header.payload_len()
            )));
        }
        Ok(Self {
            path,
            header,
            file: Mutex::new(file),
        })
    }

    pub fn header(&self) -> &RasterHeader {
        &self.header
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn read_region(&self, region: &ImageRegion) -> Result<PixelBuffer> {
        let h = &self.header;
        check_bounds(h, region)?;
        let px = h.pixel_bytes();
        let mut bytes = vec![0u8; region.pixel_count() * px];
        if !region.is_empty() {
            let mut file = self.file.lock().expect("reader lock poisoned");
            let ctx = |e| Error::io(format!("reading {region} of {}", self.path.display()), e);
            if region.cols == h.cols {
                let offset = region.row as u64 * h.cols as u64 * px as u64;
                file.seek(SeekFrom::Start(offset)).map_err(ctx)?;
                file.read_exact(&mut bytes).map_err(ctx)?;
            } else {
                let row_len = region.cols * px;
                for (i, row) in (region.row..region.row_end()).enumerate() {
                    let offset = (row as u64 * h.cols as u64 + region.col as u64) * px as u64;
                    file.seek(SeekFrom::Start(offset)).map_err(ctx)?;
                    file.read_exact(&mut bytes[i * row_len..(i + 1) * row_len])
                        .map_err(ctx)?;
                }
            }
        }
        PixelBuffer::new(*region, h.channels, PixelData::from_le_bytes(h.dtype, &bytes)?)
    }

    pub fn read_all(&self) -> Result<PixelBuffer> {
        self.read_region(&self.header.bounds())
    }
}

/// Region-wise writer over a pre-sized payload.
///
/// Full-width regions arriving in row-major order are appended with a single
/// contiguous write; anything else seeks per row. In checked mode a coverage
/// map rejects pixels written twice.
#[derive(Debug)]
pub struct RasterWriter {
    path: PathBuf,
    header: RasterHeader,
    file: File,
    cursor: u64,
    coverage: Option<Vec<bool>>,
}

impl RasterWriter {
    pub fn create(path: impl AsRef<Path>, header: RasterHeader, checked: bool) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        header.validate()?;
        let side = sidecar_path(&path);
        let text = serde_json::to_string_pretty(&Sidecar::from(&header)).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(&side, text).map_err(|e| Error::io_path("writing", &side, e))?;
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(&path)
            .map_err(|e| Error::io_path("creating", &path, e))?;
        file.set_len(header.payload_len())
            .map_err(|e| Error::io_path("sizing", &path, e))?;
        let coverage = checked.then(|| vec![false; header.cols * header.rows]);
        Ok(Self {
            path,
            header,
            file,
            cursor: 0,
            coverage,
        })
    }

    pub fn header(&self) -> &RasterHeader {
        &self.header
    }

    pub fn write_region(&mut self, buffer: &PixelBuffer) -> Result<()> {
        let h = &self.header;
        let region = *buffer.region();
        check_bounds(h, &region)?;
        if buffer.channels() != h.channels || buffer.dtype() != h.dtype {
            return Err(Error::Format(format!(
                "buffer {region} has {} x {}, raster expects {} x {}",
                buffer.channels(),
                buffer.dtype(),
                h.channels,
                h.dtype
            )));
        }
        if region.is_empty() {
            return Ok(());
        }
        if let Some(cov) = &mut self.coverage {
            for row in region.row..region.row_end() {
                let base = row as usize * h.cols;
                let cells = &mut cov[base + region.col as usize..base + region.col_end() as usize];
                if cells.iter().any(|&c| c) {
                    return Err(Error::OverlappingWrite(region));
                }
            }
            for row in region.row..region.row_end() {
                let base = row as usize * h.cols;
                cov[base + region.col as usize..base + region.col_end() as usize].fill(true);
            }
        }
        let px = h.pixel_bytes() as u64;
        let cols = h.cols as u64;
        let bytes = buffer.data().to_le_bytes();
        let path = &self.path;
        let ctx = |e| Error::io(format!("writing {region} to {}", path.display()), e);
        if region.cols == h.cols {
            let offset = region.row as u64 * cols * px;
            if offset != self.cursor {
                self.file.seek(SeekFrom::Start(offset)).map_err(ctx)?;
            }
            self.file.write_all(&bytes).map_err(ctx)?;
            self.cursor = offset + bytes.len() as u64;
        } else {
            let row_len = region.cols * h.pixel_bytes();
            for (i, row) in (region.row..region.row_end()).enumerate() {
                let offset = (row as u64 * cols + region.col as u64) * px;
                self.file.seek(SeekFrom::Start(offset)).map_err(ctx)?;
                self.file
                    .write_all(&bytes[i * row_len..(i + 1) * row_len])
                    .map_err(ctx)?;
                self.cursor = offset + row_len as u64;
            }
        }
        Ok(())
    }

    /// Flushes the payload. In checked mode, reports how many pixels were
    /// never written.
    pub fn finish(mut self) -> Result<usize> {
        self.file
            .flush()
            .map_err(|e| Error::io_path("flushing", &self.path, e))?;
        Ok(self.coverage.as_ref().map_or(0, |c| c.iter().filter(|&&v| !v).count()))
    }
}

/// Writes a whole buffer (whose region must start at 0,0) as a new raster.
pub fn write_raster(path: impl AsRef<Path>, buffer: &PixelBuffer, geo: GeoInfo) -> Result<()> {
    let r = buffer.region();
    if r.col != 0 || r.row != 0 {
        return Err(Error::Format(format!("buffer {r} does not start at the origin")));
    }
    let header = RasterHeader::new(r.cols, r.rows, buffer.channels(), buffer.dtype(), geo);
    let mut w = RasterWriter::create(path, header, false)?;
    w.write_region(buffer)?;
    w.finish()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(cols: usize, rows: usize, ch: usize) -> PixelBuffer {
        let n = cols * rows * ch;
        PixelBuffer::new(
            ImageRegion::full(cols, rows),
            ch,
            PixelData::U16((0..n).map(|v| (v * 7 % 65_521) as u16).collect()),
        )
        .unwrap()
    }

    #[test]
    fn full_and_single_pixel_reads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.rfraw");
        let img = sample(13, 7, 3);
        write_raster(&path, &img, GeoInfo::default()).unwrap();
        let r = RasterReader::open(&path).unwrap();
        assert_eq!(r.read_all().unwrap(), img);
        let first = r.read_region(&ImageRegion::new(0, 0, 1, 1)).unwrap();
        assert_eq!(first.data(), &PixelData::U16(vec![0, 7, 14]));
        let err = r.read_region(&ImageRegion::new(13, 0, 1, 1)).unwrap_err();
        assert!(matches!(err, Error::OutOfBounds { .. }));
    }

    #[test]
    fn sidecar_keys_are_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.rfraw");
        let geo = GeoInfo::new((100.0, 200.0), (1.5, -1.5), "EPSG:2154");
        write_raster(&path, &sample(2, 2, 1), geo.clone()).unwrap();
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            [
                "channels",
                "cols",
                "dtype",
                "origin_x",
                "origin_y",
                "projection",
                "rows",
                "spacing_x",
                "spacing_y"
            ]
        );
        assert_eq!(v["dtype"], "u16");
        assert_eq!(read_header(&path).unwrap().geo, geo);
    }

    #[test]
    fn truncated_payload_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.rfraw");
        write_raster(&path, &sample(4, 4, 1), GeoInfo::default()).unwrap();
        let f = OpenOptions::new().write(true).open(&path).unwrap();
        f.set_len(10).unwrap();
        assert!(matches!(RasterReader::open(&path), Err(Error::Format(_))));
    }

    #[test]
    fn striped_writes_match_full_write() {
        let dir = tempfile::tempdir().unwrap();
        let img = sample(10, 100, 2);
        let a = dir.path().join("a.rfraw");
        let b = dir.path().join("b.rfraw");
        write_raster(&a, &img, GeoInfo::default()).unwrap();
        let header = read_header(&a).unwrap();
        let mut w = RasterWriter::create(&b, header, true).unwrap();
        w.write_region(&img.crop(&ImageRegion::new(0, 0, 10, 40)).unwrap())
            .unwrap();
        w.write_region(&img.crop(&ImageRegion::new(0, 40, 10, 60)).unwrap())
            .unwrap();
        assert_eq!(w.finish().unwrap(), 0);
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn overlapping_write_rejected_in_checked_mode() {
        let dir = tempfile::tempdir().unwrap();
        let img = sample(10, 100, 1);
        let header = RasterHeader::new(10, 100, 1, DataType::U16, GeoInfo::default());
        let mut w = RasterWriter::create(dir.path().join("o.rfraw"), header, true).unwrap();
        w.write_region(&img.crop(&ImageRegion::new(0, 0, 10, 50)).unwrap())
            .unwrap();
        let err = w
            .write_region(&img.crop(&ImageRegion::new(0, 40, 10, 20)).unwrap())
            .unwrap_err();
        assert!(matches!(err, Error::OverlappingWrite(r) if r.row == 40));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn region_reads_match_slices(c in 0usize..17, r in 0usize..11, w in 0usize..17, h in 0usize..11) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("p.rfraw");
            let img = sample(17, 11, 2);
            let region = ImageRegion::new(c as i64, r as i64, w.min(17 - c), h.min(11 - r));
            // write the region alone into a fresh raster, then read it back
            let header = RasterHeader::new(17, 11, 2, DataType::U16, GeoInfo::default());
            let mut wtr = RasterWriter::create(&path, header, true).unwrap();
            let part = img.crop(&region).unwrap();
            wtr.write_region(&part).unwrap();
            wtr.finish().unwrap();
            let rd = RasterReader::open(&path).unwrap();
            prop_assert_eq!(rd.read_region(&region).unwrap(), part);
        }
    }
}
