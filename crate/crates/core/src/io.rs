//! File formats: PTYA binary arrays, convergence CSV logs and PNG images.
//!
//! A PTYA file is a little-endian header followed by a row-major payload:
//!
//! ```text
//! offset  size   field
//! 0       4      magic "PTYA"
//! 4       2      version (u16, currently 1)
//! 6       1      dtype (0 = f64, 1 = complex f64 as re, im pairs)
//! 7       1      ndim
//! 8       8·ndim dims (u64 each)
//! ...            payload, 8 bytes per f64
//! ```

use std::fs;
use std::io::{BufReader, Cursor, Write};
use std::path::Path;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{PtychoError, Result};
use crate::forward::FrameStack;
use crate::grid::{ComplexField, Grid, RealField};
use crate::solver::ConvergenceRecord;

pub const MAGIC: &[u8; 4] = b"PTYA";
pub const VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F64,
    C128,
}

impl DType {
    fn code(self) -> u8 {
        match self {
            DType::F64 => 0,
            DType::C128 => 1,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DType::F64),
            1 => Some(DType::C128),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ArrayData {
    Real(Vec<f64>),
    Complex(Vec<Complex<f64>>),
}

/// An n-dimensional array as stored in a PTYA file.
#[derive(Clone, Debug, PartialEq)]
pub struct PtyArray {
    pub dims: Vec<usize>,
    pub data: ArrayData,
}

fn format_error(offset: usize, message: impl Into<String>) -> PtychoError {
    PtychoError::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

impl PtyArray {
    pub fn dtype(&self) -> DType {
        match self.data {
            ArrayData::Real(_) => DType::F64,
            ArrayData::Complex(_) => DType::C128,
        }
    }

    fn checked(dims: Vec<usize>, data: ArrayData) -> Result<Self> {
        let count: usize = dims.iter().product();
        let len = match &data {
            ArrayData::Real(v) => v.len(),
            ArrayData::Complex(v) => v.len(),
        };
        if count != len {
            return Err(PtychoError::Dimension(format!(
                "dims {dims:?} hold {count} elements, data has {len}"
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_real(field: &RealField<f64>) -> Self {
        Self {
            dims: vec![field.height(), field.width()],
            data: ArrayData::Real(field.data().to_vec()),
        }
    }

    pub fn from_complex(field: &ComplexField<f64>) -> Self {
        Self {
            dims: vec![field.height(), field.width()],
            data: ArrayData::Complex(field.data().to_vec()),
        }
    }

    /// Frames as a `J × n × n` real array.
    pub fn from_frames(frames: &FrameStack<f64>) -> Self {
        let n = frames.frame_side();
        let data = frames
            .frames()
            .iter()
            .flat_map(|f| f.data().iter().copied())
            .collect();
        Self {
            dims: vec![frames.len(), n, n],
            data: ArrayData::Real(data),
        }
    }

    fn matrix_shape(&self, what: &str) -> Result<(usize, usize)> {
        match self.dims[..] {
            [h, w] => Ok((h, w)),
            _ => Err(format_error(
                7,
                format!("{what} needs 2 dimensions, found {:?}", self.dims),
            )),
        }
    }

    pub fn into_real(self) -> Result<RealField<f64>> {
        let (h, w) = self.matrix_shape("real field")?;
        match self.data {
            ArrayData::Real(v) => Grid::new(h, w, v),
            ArrayData::Complex(_) => Err(format_error(6, "expected dtype f64, found c128")),
        }
    }

    pub fn into_complex(self) -> Result<ComplexField<f64>> {
        let (h, w) = self.matrix_shape("complex field")?;
        match self.data {
            ArrayData::Complex(v) => Grid::new(h, w, v),
            ArrayData::Real(_) => Err(format_error(6, "expected dtype c128, found f64")),
        }
    }

    pub fn into_frames(self) -> Result<FrameStack<f64>> {
        let (j, h, w) = match self.dims[..] {
            [j, h, w] => (j, h, w),
            _ => {
                return Err(format_error(
                    7,
                    format!("frames need 3 dimensions, found {:?}", self.dims),
                ))
            }
        };
        let ArrayData::Real(v) = self.data else {
            return Err(format_error(6, "expected dtype f64, found c128"));
        };
        let frames = if h * w == 0 {
            vec![Grid::new(h, w, Vec::new())?; j]
        } else {
            v.chunks(h * w)
                .map(|c| Grid::new(h, w, c.to_vec()))
                .collect::<Result<Vec<_>>>()?
        };
        FrameStack::new(frames)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let ndim = u8::try_from(self.dims.len()).expect("at most 255 dimensions");
        let mut out = Vec::with_capacity(8 + 8 * self.dims.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.dtype().code());
        out.push(ndim);
        for d in &self.dims {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        match &self.data {
            ArrayData::Real(v) => {
                out.reserve(8 * v.len());
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            ArrayData::Complex(v) => {
                out.reserve(16 * v.len());
                for x in v {
                    out.extend_from_slice(&x.re.to_le_bytes());
                    out.extend_from_slice(&x.im.to_le_bytes());
                }
            }
        }
        out
    }

    /// Parses a complete file; any inconsistency is a format error at the
    /// offending byte offset.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let take = |at: usize, n: usize| -> Result<&[u8]> {
            bytes.get(at..at + n).ok_or_else(|| {
                format_error(
                    bytes.len(),
                    format!("file ends inside a {n}-byte field at {at}"),
                )
            })
        };
        if take(0, 4)? != MAGIC {
            return Err(format_error(0, "bad magic, not a PTYA file"));
        }
        let version = u16::from_le_bytes(take(4, 2)?.try_into().expect("2 bytes"));
        if version != VERSION {
            return Err(format_error(4, format!("unsupported version {version}")));
        }
        let code = take(6, 1)?[0];
        let dtype = DType::from_code(code)
            .ok_or_else(|| format_error(6, format!("unknown dtype code {code}")))?;
        let ndim = take(7, 1)?[0] as usize;
        let mut dims = Vec::with_capacity(ndim);
        let mut count: usize = 1;
        for k in 0..ndim {
            let at = 8 + 8 * k;
            let d = u64::from_le_bytes(take(at, 8)?.try_into().expect("8 bytes"));
            let d = usize::try_from(d).map_err(|_| format_error(at, "dimension too large"))?;
            count = count
                .checked_mul(d)
                .ok_or_else(|| format_error(at, "element count overflows"))?;
            dims.push(d);
        }
        let start = 8 + 8 * ndim;
        let width = match dtype {
            DType::F64 => 8,
            DType::C128 => 16,
        };
        let expected = count
            .checked_mul(width)
            .ok_or_else(|| format_error(start, "payload size overflows"))?;
        let payload = &bytes[start.min(bytes.len())..];
        if payload.len() < expected {
            return Err(format_error(
                bytes.len(),
                format!(
                    "truncated payload: expected {expected} bytes, found {}",
                    payload.len()
                ),
            ));
        }
        if payload.len() > expected {
            return Err(format_error(
                start + expected,
                "trailing bytes after payload",
            ));
        }
        let reals = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let data = match dtype {
            DType::F64 => ArrayData::Real(reals.collect()),
            DType::C128 => {
                let v: Vec<f64> = reals.collect();
                ArrayData::Complex(
                    v.chunks_exact(2)
                        .map(|p| Complex::new(p[0], p[1]))
                        .collect(),
                )
            }
        };
        Self::checked(dims, data)
    }
}

/// Writes `bytes` to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| PtychoError::Io(e.error))?;
    Ok(())
}

pub fn write_array(path: &Path, array: &PtyArray) -> Result<()> {
    write_atomic(path, &array.to_bytes())
}

pub fn read_array(path: &Path) -> Result<PtyArray> {
    PtyArray::from_bytes(&fs::read(path)?)
}

/// Pretty-printed JSON, written atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

/// Convergence log with columns `iter, rf, re, lagrangian, t_sub_0_ms, …,
/// t_virtual_ms, t_actual_ms`. Missing values are empty cells.
pub fn convergence_csv(records: &[ConvergenceRecord]) -> Result<Vec<u8>> {
    let subs = records
        .iter()
        .map(|r| r.sub_seconds.len())
        .max()
        .unwrap_or(0);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "iter".to_string(),
        "rf".into(),
        "re".into(),
        "lagrangian".into(),
    ];
    header.extend((0..subs).map(|d| format!("t_sub_{d}_ms")));
    header.extend(["t_virtual_ms".to_string(), "t_actual_ms".into()]);
    let csv_err = |e: csv::Error| PtychoError::Report(format!("csv: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    let opt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
    for r in records {
        let mut row = vec![
            r.iteration.to_string(),
            format!("{:e}", r.rf),
            opt(r.re),
            opt(r.lagrangian),
        ];
        row.extend((0..subs).map(|d| opt(r.sub_seconds.get(d).map(|s| s * 1e3))));
        row.push(format!("{:e}", r.virtual_seconds * 1e3));
        row.push(format!("{:e}", r.actual_seconds * 1e3));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner()
        .map_err(|e| PtychoError::Report(format!("csv: {e}")))
}

pub fn write_convergence_csv(path: &Path, records: &[ConvergenceRecord]) -> Result<()> {
    write_atomic(path, &convergence_csv(records)?)
}

/// Linear map of `[lo, hi]` onto `0..=255`; values outside are clamped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    fn level(&self, x: f64) -> u8 {
        let t = if self.hi > self.lo {
            (x - self.lo) / (self.hi - self.lo)
        } else {
            0.0
        };
        let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
        (t * 255.0).round() as u8
    }
}

/// 8-bit grayscale PNG of `field` through `window`.
pub fn png_bytes(field: &RealField<f64>, window: Window) -> Result<Vec<u8>> {
    let (h, w) = field.shape();
    let width = u32::try_from(w).map_err(|_| PtychoError::Dimension("image too wide".into()))?;
    let height = u32::try_from(h).map_err(|_| PtychoError::Dimension("image too tall".into()))?;
    let pixels: Vec<u8> = field.data().iter().map(|x| window.level(*x)).collect();
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width, height);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let png_err = |e: png::EncodingError| PtychoError::Report(format!("png: {e}"));
        let mut writer = enc.write_header().map_err(png_err)?;
        writer.write_image_data(&pixels).map_err(png_err)?;
    }
    Ok(out)
}

pub fn write_png(path: &Path, field: &RealField<f64>, window: Window) -> Result<()> {
    write_atomic(path, &png_bytes(field, window)?)
}

/// Reads a PNG as a grayscale field in `[0, 1]`; color channels are averaged
/// and alpha is ignored.
pub fn read_png_gray(path: &Path) -> Result<RealField<f64>> {
    decode_png_gray(&fs::read(path)?)
}

pub fn decode_png_gray(bytes: &[u8]) -> Result<RealField<f64>> {
    let png_err = |e: png::DecodingError| PtychoError::Format {
        offset: 0,
        message: format!("png: {e}"),
    };
    let mut dec = png::Decoder::new(BufReader::new(Cursor::new(bytes)));
    dec.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = dec.read_info().map_err(png_err)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| PtychoError::Dimension("png too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let (channels, color) = match info.color_type {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::GrayscaleAlpha => (2, 1),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (4, 3),
        png::ColorType::Indexed => return Err(format_error(0, "unexpanded palette image")),
    };
    Ok(Grid::from_fn(h, w, |r, c| {
        let px = &buf[r * info.line_size + c * channels..][..color];
        px.iter().map(|v| *v as f64).sum::<f64>() / (255.0 * color as f64)
    }))
}
