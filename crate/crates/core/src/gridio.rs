//! Raster data model and file formats shared by every stage.
//!
//! Height maps and score fields use the FGRID format: one ASCII header line
//! `FGRID <width> <height> <cell_size_m> [<origin_x> <origin_y>]\n` followed
//! by `width * height` little-endian `f32` values, row-major, top row first.
//! Illumination images are 16-bit binary PGM (P5, maxval 65535, big-endian
//! samples). Label masks are 8-bit binary PGM with one sample value per class.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FGRID_MAGIC: &str = "FGRID";
const MAX_HEADER_LEN: usize = 256;

/// Row-major scalar field over a regular grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatGrid {
    width: usize,
    height: usize,
    cell_size: f64,
    origin: [f64; 2],
    data: Vec<f64>,
}

impl FloatGrid {
    pub fn new(
        width: usize,
        height: usize,
        cell_size: f64,
        origin: [f64; 2],
        data: Vec<f64>,
    ) -> Result<Self> {
        if width < 3 || height < 3 {
            return Err(Error::InvalidGrid(format!(
                "grid must be at least 3x3, got {width}x{height}"
            )));
        }
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "cell size must be positive, got {cell_size}"
            )));
        }
        if !origin.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        let expected = width * height;
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                found: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            width,
            height,
            cell_size,
            origin,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, cell_size: f64) -> Result<Self> {
        Self::new(
            width,
            height,
            cell_size,
            [0.0; 2],
            vec![0.0; width * height],
        )
    }

    /// Builds a grid by evaluating `f(u, v)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        cell_size: f64,
        origin: [f64; 2],
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Self::new(width, height, cell_size, origin, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn transform(&self) -> WorldTransform {
        WorldTransform::new(self.cell_size, self.origin)
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }

    /// Sample with mirror reflection for out-of-range indices.
    #[inline]
    pub fn get_reflect(&self, u: isize, v: isize) -> f64 {
        let u = reflect_index(u, self.width);
        let v = reflect_index(v, self.height);
        self.data[v * self.width + u]
    }

    /// Same geometry, new payload.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        Self::new(self.width, self.height, self.cell_size, self.origin, data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        self.with_data(self.data.iter().map(|&v| f(v)).collect())
    }

    /// Bilinear interpolation at a world position. `None` outside the grid.
    pub fn sample_world(&self, x: f64, y: f64) -> Option<f64> {
        let (u, v) = self.transform().world_to_pixel(x, y);
        let max_u = (self.width - 1) as f64;
        let max_v = (self.height - 1) as f64;
        if !(u >= 0.0 && v >= 0.0 && u <= max_u && v <= max_v) {
            return None;
        }
        let u0 = (u.floor() as usize).min(self.width - 2);
        let v0 = (v.floor() as usize).min(self.height - 2);
        let fu = u - u0 as f64;
        let fv = v - v0 as f64;
        let top = self.get(u0, v0) * (1.0 - fu) + self.get(u0 + 1, v0) * fu;
        let bottom = self.get(u0, v0 + 1) * (1.0 - fu) + self.get(u0 + 1, v0 + 1) * fu;
        Some(top * (1.0 - fv) + bottom * fv)
    }

    /// Encode as FGRID bytes. Values are narrowed to `f32`.
    pub fn to_fgrid_bytes(&self) -> Vec<u8> {
        let mut out = if self.origin == [0.0, 0.0] {
            format!(
                "{FGRID_MAGIC} {} {} {}\n",
                self.width, self.height, self.cell_size
            )
        } else {
            format!(
                "{FGRID_MAGIC} {} {} {} {} {}\n",
                self.width, self.height, self.cell_size, self.origin[0], self.origin[1]
            )
        }
        .into_bytes();
        out.reserve(self.data.len() * 4);
        for &v in &self.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_fgrid_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, payload) = split_header(bytes)?;
        let mut tokens = header.split_ascii_whitespace();
        if tokens.next() != Some(FGRID_MAGIC) {
            return Err(Error::MalformedHeader("missing FGRID magic".into()));
        }
        let width: usize = parse_token(tokens.next(), "width")?;
        let height: usize = parse_token(tokens.next(), "height")?;
        let cell_size: f64 = parse_token(tokens.next(), "cell size")?;
        let origin = match (tokens.next(), tokens.next()) {
            (None, None) => [0.0, 0.0],
            (Some(x), Some(y)) => [
                parse_token(Some(x), "origin x")?,
                parse_token(Some(y), "origin y")?,
            ],
            _ => return Err(Error::MalformedHeader("origin needs two values".into())),
        };
        if tokens.next().is_some() {
            return Err(Error::MalformedHeader("trailing header tokens".into()));
        }
        let expected = width
            .checked_mul(height)
            .ok_or_else(|| Error::MalformedHeader("dimensions overflow".into()))?;
        if payload.len() % 4 != 0 {
            return Err(Error::MalformedHeader(
                "payload is not a whole number of f32 values".into(),
            ));
        }
        let found = payload.len() / 4;
        if found != expected {
            return Err(Error::LengthMismatch { expected, found });
        }
        let mut data = Vec::with_capacity(found);
        for (i, chunk) in payload.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            if !v.is_finite() {
                return Err(Error::NonFinite(i));
            }
            data.push(f64::from(v));
        }
        Self::new(width, height, cell_size, origin, data)
    }
}

/// Grayscale intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidGrid("image must be non-empty".into()));
        }
        let expected = width * height;
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                found: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidGrid(format!(
                "intensity at index {i} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }

    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n65535\n", self.width, self.height).into_bytes();
        out.reserve(self.data.len() * 2);
        for &v in &self.data {
            let sample = (v * 65535.0).round().clamp(0.0, 65535.0) as u16;
            out.extend_from_slice(&sample.to_be_bytes());
        }
        out
    }

    /// Decode a binary PGM. Any maxval in `1..=65535` is accepted.
    pub fn from_pgm_bytes(bytes: &[u8]) -> Result<Self> {
        let pgm = parse_pgm(bytes)?;
        let scale = f64::from(pgm.maxval);
        let data = pgm
            .samples
            .iter()
            .map(|&s| (f64::from(s) / scale).min(1.0))
            .collect();
        Self::new(pgm.width, pgm.height, data)
    }
}

/// Per-pixel ground-truth or classification label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Background,
    Wrinkle,
    Bump,
}

impl Label {
    fn sample(self) -> u8 {
        match self {
            Label::Background => 0,
            Label::Bump => 128,
            Label::Wrinkle => 255,
        }
    }

    fn from_sample(s: u16) -> Option<Self> {
        match s {
            0 => Some(Label::Background),
            128 => Some(Label::Bump),
            255 => Some(Label::Wrinkle),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMask {
    width: usize,
    height: usize,
    data: Vec<Label>,
}

impl LabelMask {
    pub fn new(width: usize, height: usize, data: Vec<Label>) -> Result<Self> {
        let expected = width * height;
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                found: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, label: Label) -> Self {
        Self {
            width,
            height,
            data: vec![label; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[Label] {
        &self.data
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Label {
        self.data[v * self.width + u]
    }

    pub fn set(&mut self, u: usize, v: usize, label: Label) {
        self.data[v * self.width + u] = label;
    }

    pub fn count(&self, label: Label) -> usize {
        self.data.iter().filter(|&&l| l == label).count()
    }

    /// Encoded as 8-bit PGM: background 0, bump 128, wrinkle 255.
    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.data.iter().map(|l| l.sample()));
        out
    }

    pub fn from_pgm_bytes(bytes: &[u8]) -> Result<Self> {
        let pgm = parse_pgm(bytes)?;
        if pgm.maxval != 255 {
            return Err(Error::MalformedHeader(format!(
                "label mask must use maxval 255, got {}",
                pgm.maxval
            )));
        }
        let data = pgm
            .samples
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                Label::from_sample(s).ok_or_else(|| {
                    Error::InvalidGrid(format!("unknown label sample {s} at index {i}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(pgm.width, pgm.height, data)
    }
}

/// Affine map between pixel centers and world meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldTransform {
    pub cell_size: f64,
    pub origin: [f64; 2],
}

impl WorldTransform {
    pub fn new(cell_size: f64, origin: [f64; 2]) -> Self {
        Self { cell_size, origin }
    }

    #[inline]
    pub fn pixel_to_world(&self, u: f64, v: f64) -> (f64, f64) {
        (
            self.origin[0] + u * self.cell_size,
            self.origin[1] + v * self.cell_size,
        )
    }

    #[inline]
    pub fn world_to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.origin[0]) / self.cell_size,
            (y - self.origin[1]) / self.cell_size,
        )
    }
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<FloatGrid> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    FloatGrid::from_fgrid_bytes(&bytes)
}

pub fn write_grid(grid: &FloatGrid, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &grid.to_fgrid_bytes())
}

pub fn read_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    GrayImage::from_pgm_bytes(&bytes)
}

pub fn write_gray(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &img.to_pgm_bytes())
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<LabelMask> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    LabelMask::from_pgm_bytes(&bytes)
}

pub fn write_mask(mask: &LabelMask, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &mask.to_pgm_bytes())
}

/// Write through a sibling temporary file and rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::io(path, std::io::ErrorKind::InvalidInput.into()))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

/// Mirror reflection without edge repeat (`-1 -> 1`, `n -> n - 2`).
#[inline]
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - m;
    }
    m as usize
}

fn split_header(bytes: &[u8]) -> Result<(&str, &[u8])> {
    let limit = bytes.len().min(MAX_HEADER_LEN);
    let newline = bytes[..limit]
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::MalformedHeader("no header line terminator".into()))?;
    let header = std::str::from_utf8(&bytes[..newline])
        .map_err(|_| Error::MalformedHeader("header is not ASCII".into()))?;
    Ok((header, &bytes[newline + 1..]))
}

fn parse_token<T: std::str::FromStr>(tok: Option<&str>, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| Error::MalformedHeader(format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| Error::MalformedHeader(format!("bad {what}: {tok:?}")))
}

struct Pgm {
    width: usize,
    height: usize,
    maxval: u16,
    samples: Vec<u16>,
}

fn parse_pgm(bytes: &[u8]) -> Result<Pgm> {
    let mut pos = 0usize;
    let magic = next_pnm_token(bytes, &mut pos)?;
    if magic != b"P5" {
        return Err(Error::MalformedHeader("expected binary PGM (P5)".into()));
    }
    let width: usize = parse_pnm_number(bytes, &mut pos, "width")?;
    let height: usize = parse_pnm_number(bytes, &mut pos, "height")?;
    let maxval: u32 = parse_pnm_number(bytes, &mut pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader("zero image dimension".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::MalformedHeader(format!("bad maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::MalformedHeader("missing raster separator".into())),
    }
    let payload = &bytes[pos..];
    let count = width
        .checked_mul(height)
        .ok_or_else(|| Error::MalformedHeader("dimensions overflow".into()))?;
    let wide = maxval > 255;
    let per_sample = if wide { 2 } else { 1 };
    let found = payload.len() / per_sample;
    if !payload.len().is_multiple_of(per_sample) || found != count {
        return Err(Error::LengthMismatch {
            expected: count,
            found,
        });
    }
    let samples: Vec<u16> = if wide {
        payload
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    } else {
        payload.iter().map(|&b| u16::from(b)).collect()
    };
    if let Some(i) = samples.iter().position(|&s| u32::from(s) > maxval) {
        return Err(Error::InvalidGrid(format!(
            "sample at index {i} exceeds maxval"
        )));
    }
    Ok(Pgm {
        width,
        height,
        maxval: maxval as u16,
        samples,
    })
}

fn next_pnm_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(Error::MalformedHeader("truncated PGM header".into())),
        }
    }
    let start = *pos;
    while let Some(b) = bytes.get(*pos) {
        if b.is_ascii_whitespace() || *b == b'#' {
            break;
        }
        *pos += 1;
    }
    Ok(&bytes[start..*pos])
}

fn parse_pnm_number<T: std::str::FromStr>(bytes: &[u8], pos: &mut usize, what: &str) -> Result<T> {
    let tok = next_pnm_token(bytes, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::MalformedHeader(format!("bad PGM {what}")))
}
