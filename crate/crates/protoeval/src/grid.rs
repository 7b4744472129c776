//! Grid containers and the PGRD interchange format.
//!
//! One binary format serves images, masks, similarity maps, and
//! attribution grids:
//!
//! ```text
//! magic "PGRD" | u32 version=1 | u32 dtype | u32 rows | u32 cols | u32 channels | payload
//! ```
//!
//! All integers little-endian. `dtype` 0 is float32, 1 is uint8. The
//! payload is row-major with channels interleaved: element `(r, c, ch)`
//! lives at index `(r * cols + c) * channels + ch`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const PGRD_MAGIC: [u8; 4] = *b"PGRD";
pub const PGRD_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    U8,
}

impl Dtype {
    fn code(self) -> u32 {
        match self {
            Dtype::F32 => 0,
            Dtype::U8 => 1,
        }
    }

    fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::U8),
            other => Err(Error::GridFormat(format!("unknown dtype code {other}"))),
        }
    }
}

/// A PGRD payload: either float32 or uint8 values.
#[derive(Debug, Clone, PartialEq)]
pub enum GridData {
    F32(Vec<f32>),
    U8(Vec<u8>),
}

impl GridData {
    pub fn len(&self) -> usize {
        match self {
            GridData::F32(v) => v.len(),
            GridData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> Dtype {
        match self {
            GridData::F32(_) => Dtype::F32,
            GridData::U8(_) => Dtype::U8,
        }
    }
}

/// In-memory form of one PGRD file.
#[derive(Debug, Clone, PartialEq)]
pub struct PgrdGrid {
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    pub data: GridData,
}

impl PgrdGrid {
    pub fn new(rows: usize, cols: usize, channels: usize, data: GridData) -> Result<Self> {
        let expect = rows * cols * channels;
        if data.len() != expect {
            return Err(Error::GridFormat(format!(
                "payload length {} does not match {rows}x{cols}x{channels} = {expect}",
                data.len()
            )));
        }
        Ok(PgrdGrid {
            rows,
            cols,
            channels,
            data,
        })
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(&PGRD_MAGIC)?;
        w.write_all(&PGRD_VERSION.to_le_bytes())?;
        w.write_all(&self.data.dtype().code().to_le_bytes())?;
        w.write_all(&(self.rows as u32).to_le_bytes())?;
        w.write_all(&(self.cols as u32).to_le_bytes())?;
        w.write_all(&(self.channels as u32).to_le_bytes())?;
        match &self.data {
            GridData::F32(values) => {
                for v in values {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            GridData::U8(values) => w.write_all(values)?,
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|e| Error::GridFormat(format!("short header: {e}")))?;
        if magic != PGRD_MAGIC {
            return Err(Error::GridFormat(format!(
                "bad magic {:?}, expected \"PGRD\"",
                magic
            )));
        }
        let version = read_u32(r)?;
        if version != PGRD_VERSION {
            return Err(Error::GridFormat(format!(
                "unsupported version {version}, expected {PGRD_VERSION}"
            )));
        }
        let dtype = Dtype::from_code(read_u32(r)?)?;
        let rows = read_u32(r)? as usize;
        let cols = read_u32(r)? as usize;
        let channels = read_u32(r)? as usize;
        let count = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| Error::GridFormat("element count overflows".to_string()))?;
        let data = match dtype {
            Dtype::F32 => {
                let mut buf = vec![0u8; count * 4];
                r.read_exact(&mut buf)
                    .map_err(|e| Error::GridFormat(format!("truncated payload: {e}")))?;
                let values = buf
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect();
                GridData::F32(values)
            }
            Dtype::U8 => {
                let mut values = vec![0u8; count];
                r.read_exact(&mut values)
                    .map_err(|e| Error::GridFormat(format!("truncated payload: {e}")))?;
                GridData::U8(values)
            }
        };
        PgrdGrid::new(rows, cols, channels, data)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        PgrdGrid::read_from(&mut BufReader::new(file))
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|e| Error::GridFormat(format!("short header: {e}")))?;
    Ok(u32::from_le_bytes(buf))
}

/// RGB image with float32 channels in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pub rows: usize,
    pub cols: usize,
    /// length `rows * cols * 3`, layout `(r * cols + c) * 3 + ch`
    pub pixels: Vec<f32>,
}

impl ImageBuffer {
    pub fn filled(rows: usize, cols: usize, rgb: [f32; 3]) -> Self {
        let mut pixels = Vec::with_capacity(rows * cols * 3);
        for _ in 0..rows * cols {
            pixels.extend_from_slice(&rgb);
        }
        ImageBuffer { rows, cols, pixels }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> [f32; 3] {
        let i = (r * self.cols + c) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, rgb: [f32; 3]) {
        let i = (r * self.cols + c) * 3;
        self.pixels[i] = rgb[0];
        self.pixels[i + 1] = rgb[1];
        self.pixels[i + 2] = rgb[2];
    }

    pub fn to_pgrd(&self) -> PgrdGrid {
        PgrdGrid {
            rows: self.rows,
            cols: self.cols,
            channels: 3,
            data: GridData::F32(self.pixels.clone()),
        }
    }

    pub fn from_pgrd(grid: &PgrdGrid) -> Result<Self> {
        match (&grid.data, grid.channels) {
            (GridData::F32(pixels), 3) => Ok(ImageBuffer {
                rows: grid.rows,
                cols: grid.cols,
                pixels: pixels.clone(),
            }),
            _ => Err(Error::GridFormat(
                "image grid must be float32 with 3 channels".to_string(),
            )),
        }
    }
}

/// Binary pixel mask, row-major, one byte per pixel (0 or 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub rows: usize,
    pub cols: usize,
    pub bits: Vec<u8>,
}

impl Mask {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Mask {
            rows,
            cols,
            bits: vec![0; rows * cols],
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.cols + c] != 0
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, on: bool) {
        self.bits[r * self.cols + c] = on as u8;
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b != 0).count()
    }

    pub fn to_pgrd(&self) -> PgrdGrid {
        PgrdGrid {
            rows: self.rows,
            cols: self.cols,
            channels: 1,
            data: GridData::U8(self.bits.clone()),
        }
    }

    pub fn from_pgrd(grid: &PgrdGrid) -> Result<Self> {
        match (&grid.data, grid.channels) {
            (GridData::U8(bits), 1) => Ok(Mask {
                rows: grid.rows,
                cols: grid.cols,
                bits: bits.clone(),
            }),
            _ => Err(Error::GridFormat(
                "mask grid must be uint8 with 1 channel".to_string(),
            )),
        }
    }
}

/// Kahan compensated sum. Keeps reductions order-insensitive to well
/// below the 1e-12 tolerances used throughout.
pub fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}
