//! Pixel-level permanent-wrinkle classifier.
//!
//! Each pixel is described by a fixed-scale, fixed-orientation SIFT-style
//! descriptor (4x4 cells x 8 orientation bins over a 16x16 patch) and scored
//! by a linear SVM whose margin is squashed through a logistic sigmoid.
//!
//! Model files start with an ASCII header line
//! `SVMW 1 <dim> <lambda> <epochs> <batch_fraction> <positive_weight> <seed> <calibrated>\n`
//! followed by `dim + 3` little-endian `f64` values: the weights, the bias,
//! the sigmoid slope and the sigmoid offset.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridio::{reflect_index, write_atomic, GrayImage, Label, LabelMask};

pub const DESCRIPTOR_LEN: usize = 128;
const PATCH: usize = 16;
const CELLS: usize = 4;
const BINS: usize = 8;
const CLAMP: f64 = 0.2;
const WINDOW_SIGMA: f64 = 8.0;
const MODEL_MAGIC: &str = "SVMW";
const MODEL_VERSION: u32 = 1;

/// Borrowed row-major raster of intensities.
#[derive(Clone, Copy, Debug)]
pub struct ImageView<'a> {
    pub width: usize,
    pub height: usize,
    pub data: &'a [f64],
}

impl<'a> ImageView<'a> {
    pub fn new(width: usize, height: usize, data: &'a [f64]) -> Self {
        assert_eq!(data.len(), width * height, "raster size mismatch");
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    fn at_reflect(&self, u: isize, v: isize) -> f64 {
        self.data[reflect_index(v, self.height) * self.width + reflect_index(u, self.width)]
    }
}

impl<'a> From<&'a GrayImage> for ImageView<'a> {
    fn from(img: &'a GrayImage) -> Self {
        ImageView::new(img.width(), img.height(), img.data())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelDescriptor(pub [f32; DESCRIPTOR_LEN]);

impl PixelDescriptor {
    pub fn zero() -> Self {
        Self([0.0; DESCRIPTOR_LEN])
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn norm(&self) -> f64 {
        self.0
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }

    /// Sum of the entries for orientation bin `bin` across all cells.
    pub fn bin_mass(&self, bin: usize) -> f64 {
        (0..CELLS * CELLS)
            .map(|c| f64::from(self.0[c * BINS + bin]))
            .sum()
    }
}

/// One patch sample's contribution targets: spatial cell bins with weights.
#[derive(Clone, Copy)]
struct SampleTap {
    du: isize,
    dv: isize,
    cells: [(usize, f64); 4],
    n_cells: usize,
}

/// Precomputed gradients for fast per-pixel descriptors.
///
/// Gradients are taken at pixel corners with a 2x2 difference, so the 16x16
/// sample grid sits symmetrically around the pixel center.
pub struct DescriptorExtractor {
    width: usize,
    height: usize,
    /// corner grid covers corner indices `-7 ..= width + 8` (offset by 7)
    stride: usize,
    magnitude: Vec<f64>,
    bin: Vec<u8>,
    bin_frac: Vec<f64>,
    taps: Vec<SampleTap>,
}

impl DescriptorExtractor {
    pub fn new(img: ImageView<'_>) -> Self {
        let (w, h) = (img.width, img.height);
        let stride = w + 16;
        let rows = h + 16;
        let mut magnitude = vec![0.0; stride * rows];
        let mut bin = vec![0u8; stride * rows];
        let mut bin_frac = vec![0.0; stride * rows];
        for cj in 0..rows {
            for ci in 0..stride {
                // corner (i, j) sits between pixels i-1, i and rows j-1, j
                let (i, j) = (ci as isize - 7, cj as isize - 7);
                let p00 = img.at_reflect(i - 1, j - 1);
                let p10 = img.at_reflect(i, j - 1);
                let p01 = img.at_reflect(i - 1, j);
                let p11 = img.at_reflect(i, j);
                let gx = 0.5 * ((p10 - p00) + (p11 - p01));
                let gy = 0.5 * ((p01 - p00) + (p11 - p10));
                let k = cj * stride + ci;
                magnitude[k] = gx.hypot(gy);
                let theta = gy.atan2(gx).rem_euclid(2.0 * PI);
                let pos = theta / (2.0 * PI) * BINS as f64;
                let b = pos.floor();
                bin[k] = (b as usize % BINS) as u8;
                bin_frac[k] = pos - b;
            }
        }
        let taps = (0..PATCH * PATCH)
            .map(|s| {
                let (k, l) = (s % PATCH, s / PATCH);
                let dx = k as f64 - 7.5;
                let dy = l as f64 - 7.5;
                let weight = (-(dx * dx + dy * dy) / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
                // cell centers at -6, -2, 2, 6
                let bx = (dx + 6.0) / 4.0;
                let by = (dy + 6.0) / 4.0;
                let (x0, y0) = (bx.floor(), by.floor());
                let (fx, fy) = (bx - x0, by - y0);
                let mut cells = [(0usize, 0.0f64); 4];
                let mut n = 0;
                for (cy, wy) in [(y0, 1.0 - fy), (y0 + 1.0, fy)] {
                    for (cx, wx) in [(x0, 1.0 - fx), (x0 + 1.0, fx)] {
                        if (0.0..CELLS as f64).contains(&cx)
                            && (0.0..CELLS as f64).contains(&cy)
                            && wx * wy > 0.0
                        {
                            cells[n] = (cy as usize * CELLS + cx as usize, weight * wx * wy);
                            n += 1;
                        }
                    }
                }
                SampleTap {
                    du: k as isize - 7,
                    dv: l as isize - 7,
                    cells,
                    n_cells: n,
                }
            })
            .collect();
        Self {
            width: w,
            height: h,
            stride,
            magnitude,
            bin,
            bin_frac,
            taps,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn descriptor(&self, u: usize, v: usize) -> PixelDescriptor {
        let mut hist = [0.0f64; DESCRIPTOR_LEN];
        for tap in &self.taps {
            let ci = (u as isize + tap.du + 7) as usize;
            let cj = (v as isize + tap.dv + 7) as usize;
            let k = cj * self.stride + ci;
            let m = self.magnitude[k];
            if m == 0.0 {
                continue;
            }
            let b0 = self.bin[k] as usize;
            let b1 = (b0 + 1) % BINS;
            let f = self.bin_frac[k];
            for &(cell, wgt) in &tap.cells[..tap.n_cells] {
                let mass = m * wgt;
                hist[cell * BINS + b0] += mass * (1.0 - f);
                hist[cell * BINS + b1] += mass * f;
            }
        }
        normalize_descriptor(&mut hist);
        let mut out = [0.0f32; DESCRIPTOR_LEN];
        for (o, h) in out.iter_mut().zip(hist) {
            *o = h as f32;
        }
        PixelDescriptor(out)
    }
}

/// L2-normalize, clamp at 0.2, renormalize. Near-zero vectors become zero.
fn normalize_descriptor(hist: &mut [f64; DESCRIPTOR_LEN]) {
    let norm = hist.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 1e-10) {
        hist.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    hist.iter_mut().for_each(|v| *v = (*v / norm).min(CLAMP));
    let norm = hist.iter().map(|v| v * v).sum::<f64>().sqrt();
    hist.iter_mut().for_each(|v| *v /= norm);
}

/// Descriptor of a single pixel. Builds gradients for the whole image; use
/// [`DescriptorExtractor`] when describing many pixels.
pub fn descriptor_at(img: ImageView<'_>, u: usize, v: usize) -> PixelDescriptor {
    DescriptorExtractor::new(img).descriptor(u, v)
}

#[derive(Clone, Debug, Default)]
pub struct TrainingSet {
    pub positives: Vec<PixelDescriptor>,
    pub negatives: Vec<PixelDescriptor>,
    pub provenance: Vec<String>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn extend(&mut self, other: TrainingSet) {
        self.positives.extend(other.positives);
        self.negatives.extend(other.negatives);
        self.provenance.extend(other.provenance);
    }
}

/// Pixel indices chosen as positives and negatives for one labeled image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainingPixels {
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

/// All wrinkle pixels, plus `negatives_per_positive` times as many
/// non-wrinkle pixels drawn uniformly without replacement.
pub fn select_training_pixels(
    mask: &LabelMask,
    negatives_per_positive: usize,
    seed: u64,
) -> Result<TrainingPixels> {
    let (positives, pool): (Vec<usize>, Vec<usize>) =
        (0..mask.data().len()).partition(|&i| mask.data()[i] == Label::Wrinkle);
    if positives.is_empty() {
        return Err(Error::Training("label mask has no wrinkle pixels".into()));
    }
    let wanted = (positives.len() * negatives_per_positive).min(pool.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = rand::seq::index::sample(&mut rng, pool.len(), wanted).into_vec();
    picks.sort_unstable();
    let negatives = picks.into_iter().map(|k| pool[k]).collect();
    Ok(TrainingPixels {
        positives,
        negatives,
    })
}

pub fn build_training_set(
    img: ImageView<'_>,
    mask: &LabelMask,
    negatives_per_positive: usize,
    seed: u64,
) -> Result<TrainingSet> {
    if img.width != mask.width() || img.height != mask.height() {
        return Err(Error::DimensionMismatch(format!(
            "image {}x{} vs mask {}x{}",
            img.width,
            img.height,
            mask.width(),
            mask.height()
        )));
    }
    let picks = select_training_pixels(mask, negatives_per_positive, seed)?;
    let ex = DescriptorExtractor::new(img);
    let describe = |idx: &Vec<usize>| -> Vec<PixelDescriptor> {
        idx.par_iter()
            .map(|&i| ex.descriptor(i % img.width, i / img.width))
            .collect()
    };
    Ok(TrainingSet {
        positives: describe(&picks.positives),
        negatives: describe(&picks.negatives),
        provenance: Vec::new(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmHyper {
    /// L2 regularization strength.
    pub lambda: f64,
    /// Passes over the data; the step count is `epochs / batch_fraction`.
    pub epochs: u32,
    /// Expected fraction of examples in each keyed mini-batch.
    pub batch_fraction: f64,
    /// Hinge-loss weight on positive examples.
    pub positive_weight: f64,
    pub seed: u64,
    /// Fit sigmoid slope and offset on the training margins.
    pub calibrate: bool,
}

impl Default for SvmHyper {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            epochs: 20,
            batch_fraction: 0.1,
            positive_weight: 1.0,
            seed: 0,
            calibrate: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub slope: f64,
    pub offset: f64,
    pub hyper: SvmHyper,
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Content fingerprint, so duplicated examples share their batch membership.
fn fingerprint(d: &PixelDescriptor, label: f64) -> u64 {
    let mut h = mix64(label.to_bits());
    for v in d.0 {
        h = mix64(h ^ u64::from(v.to_bits()));
    }
    h
}

#[inline]
fn dot(w: &[f64], d: &PixelDescriptor) -> f64 {
    w.iter()
        .zip(d.0.iter())
        .map(|(a, &b)| a * f64::from(b))
        .sum()
}

/// Linear SVM by mini-batch Pegasos on the hinge loss.
///
/// Batch membership at step `t` is a keyed hash of the example's content,
/// the seed and `t`, so training is deterministic and invariant to
/// duplicating the whole set. The bias is learned as the weight of a
/// constant feature; the returned model averages the second half of the
/// iterates.
pub fn train(ts: &TrainingSet, hyper: &SvmHyper) -> Result<SvmModel> {
    if ts.positives.is_empty() || ts.negatives.is_empty() {
        return Err(Error::Training(
            "both classes need at least one example".into(),
        ));
    }
    if !(hyper.lambda > 0.0 && hyper.lambda.is_finite()) {
        return Err(Error::Training(format!(
            "lambda must be positive, got {}",
            hyper.lambda
        )));
    }
    if !(hyper.batch_fraction > 0.0 && hyper.batch_fraction <= 1.0) {
        return Err(Error::Training("batch_fraction must be in (0, 1]".into()));
    }
    if !(hyper.positive_weight > 0.0 && hyper.positive_weight.is_finite()) {
        return Err(Error::Training("positive_weight must be positive".into()));
    }
    let examples: Vec<(&PixelDescriptor, f64, f64)> = ts
        .positives
        .iter()
        .map(|d| (d, 1.0, hyper.positive_weight))
        .chain(ts.negatives.iter().map(|d| (d, -1.0, 1.0)))
        .collect();
    let keys: Vec<u64> = examples
        .iter()
        .map(|(d, y, _)| fingerprint(d, *y))
        .collect();
    let threshold = if hyper.batch_fraction >= 1.0 {
        u64::MAX
    } else {
        (hyper.batch_fraction * u64::MAX as f64) as u64
    };
    let steps = ((f64::from(hyper.epochs.max(1)) / hyper.batch_fraction).ceil() as u64).max(1);
    let seed_key = mix64(hyper.seed);
    let radius = 1.0 / hyper.lambda.sqrt();

    let dim = DESCRIPTOR_LEN + 1;
    let mut w = vec![0.0; dim];
    let mut avg = vec![0.0; dim];
    let mut averaged = 0u64;
    let mut grad = vec![0.0; dim];
    for t in 1..=steps {
        let step_key = mix64(seed_key ^ t.wrapping_mul(0xD6E8_FEB8_6659_FD93));
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut batch = 0usize;
        for ((d, y, c), key) in examples.iter().zip(&keys) {
            if mix64(key ^ step_key) > threshold {
                continue;
            }
            batch += 1;
            let margin = y * (dot(&w[..DESCRIPTOR_LEN], d) + w[DESCRIPTOR_LEN]);
            if margin < 1.0 {
                for (g, &x) in grad.iter_mut().zip(d.0.iter()) {
                    *g += c * y * f64::from(x);
                }
                grad[DESCRIPTOR_LEN] += c * y;
            }
        }
        if batch > 0 {
            let eta = 1.0 / (hyper.lambda * t as f64);
            let shrink = 1.0 - eta * hyper.lambda;
            let scale = eta / batch as f64;
            for (wi, gi) in w.iter_mut().zip(&grad) {
                *wi = shrink * *wi + scale * gi;
            }
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > radius {
                w.iter_mut().for_each(|v| *v *= radius / norm);
            }
            if !w.iter().all(|v| v.is_finite()) {
                return Err(Error::Training(format!(
                    "weights diverged at step {t} (lambda {}, batch_fraction {})",
                    hyper.lambda, hyper.batch_fraction
                )));
            }
        }
        if 2 * t > steps {
            averaged += 1;
            for (a, wi) in avg.iter_mut().zip(&w) {
                *a += wi;
            }
        }
    }
    avg.iter_mut().for_each(|a| *a /= averaged as f64);
    let bias = avg.pop().expect("bias coordinate");
    let mut model = SvmModel {
        weights: avg,
        bias,
        slope: 1.0,
        offset: 0.0,
        hyper: hyper.clone(),
    };
    if hyper.calibrate {
        let margins: Vec<(f64, bool)> = ts
            .positives
            .iter()
            .map(|d| (model.margin(d), true))
            .chain(ts.negatives.iter().map(|d| (model.margin(d), false)))
            .collect();
        let (slope, offset) = fit_sigmoid(&margins);
        model.slope = slope;
        model.offset = offset;
    }
    Ok(model)
}

/// Platt scaling: Newton iterations on the logistic loss of
/// `sigmoid(slope * margin + offset)`, with smoothed targets.
fn fit_sigmoid(margins: &[(f64, bool)]) -> (f64, f64) {
    let n_pos = margins.iter().filter(|m| m.1).count() as f64;
    let n_neg = margins.len() as f64 - n_pos;
    let hi = (n_pos + 1.0) / (n_pos + 2.0);
    let lo = 1.0 / (n_neg + 2.0);
    let (mut a, mut b) = (1.0, 0.0);
    for _ in 0..50 {
        let (mut g_a, mut g_b, mut h_aa, mut h_ab, mut h_bb) = (0.0, 0.0, 1e-12, 0.0, 1e-12);
        for &(m, pos) in margins {
            let target = if pos { hi } else { lo };
            let p = sigmoid(a * m + b);
            let r = p - target;
            let s = p * (1.0 - p);
            g_a += r * m;
            g_b += r;
            h_aa += s * m * m;
            h_ab += s * m;
            h_bb += s;
        }
        let det = h_aa * h_bb - h_ab * h_ab;
        if !(det.abs() > 1e-300) {
            break;
        }
        let da = (h_bb * g_a - h_ab * g_b) / det;
        let db = (h_aa * g_b - h_ab * g_a) / det;
        a -= da;
        b -= db;
        if da.abs() < 1e-10 && db.abs() < 1e-10 {
            break;
        }
    }
    if a.is_finite() && b.is_finite() {
        (a, b)
    } else {
        (1.0, 0.0)
    }
}

/// Logistic function, kept strictly inside `(0, 1)`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    const LO: f64 = f64::EPSILON * 0.5;
    const HI: f64 = 1.0 - f64::EPSILON * 0.5;
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(LO, HI)
}

impl SvmModel {
    pub fn margin(&self, d: &PixelDescriptor) -> f64 {
        dot(&self.weights, d) + self.bias
    }

    pub fn score_margin(&self, margin: f64) -> f64 {
        sigmoid(self.slope * margin + self.offset)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.hyper;
        let mut out = format!(
            "{MODEL_MAGIC} {MODEL_VERSION} {} {:?} {} {:?} {:?} {} {}\n",
            self.weights.len(),
            h.lambda,
            h.epochs,
            h.batch_fraction,
            h.positive_weight,
            h.seed,
            u8::from(h.calibrate)
        )
        .into_bytes();
        for v in self
            .weights
            .iter()
            .chain([&self.bias, &self.slope, &self.offset])
        {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let limit = bytes.len().min(256);
        let newline = bytes[..limit]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::MalformedHeader("model header not terminated".into()))?;
        let header = std::str::from_utf8(&bytes[..newline])
            .map_err(|_| Error::MalformedHeader("model header is not ASCII".into()))?;
        let tokens: Vec<&str> = header.split_ascii_whitespace().collect();
        let field = |i: usize, what: &str| -> Result<&str> {
            tokens
                .get(i)
                .copied()
                .ok_or_else(|| Error::MalformedHeader(format!("missing {what}")))
        };
        fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
            s.parse()
                .map_err(|_| Error::MalformedHeader(format!("bad {what}: {s:?}")))
        }
        if tokens.len() != 9 || tokens[0] != MODEL_MAGIC {
            return Err(Error::MalformedHeader(
                "expected SVMW header with 9 fields".into(),
            ));
        }
        let version: u32 = num(field(1, "version")?, "version")?;
        if version != MODEL_VERSION {
            return Err(Error::MalformedHeader(format!(
                "unsupported model version {version}"
            )));
        }
        let dim: usize = num(field(2, "dim")?, "dim")?;
        if dim != DESCRIPTOR_LEN {
            return Err(Error::MalformedHeader(format!(
                "model dimension {dim}, expected {DESCRIPTOR_LEN}"
            )));
        }
        let calibrate = match field(8, "calibrated")? {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::MalformedHeader(format!(
                    "bad calibrated flag {other:?}"
                )))
            }
        };
        let hyper = SvmHyper {
            lambda: num(field(3, "lambda")?, "lambda")?,
            epochs: num(field(4, "epochs")?, "epochs")?,
            batch_fraction: num(field(5, "batch_fraction")?, "batch_fraction")?,
            positive_weight: num(field(6, "positive_weight")?, "positive_weight")?,
            seed: num(field(7, "seed")?, "seed")?,
            calibrate,
        };
        let payload = &bytes[newline + 1..];
        let expected = dim + 3;
        if payload.len() != expected * 8 {
            return Err(Error::LengthMismatch {
                expected,
                found: payload.len() / 8,
            });
        }
        let mut values = Vec::with_capacity(expected);
        for (i, c) in payload.chunks_exact(8).enumerate() {
            let v = f64::from_le_bytes(c.try_into().expect("chunk of 8"));
            if !v.is_finite() {
                return Err(Error::NonFinite(i));
            }
            values.push(v);
        }
        let offset = values.pop().expect("offset");
        let slope = values.pop().expect("slope");
        let bias = values.pop().expect("bias");
        Ok(Self {
            weights: values,
            bias,
            slope,
            offset,
            hyper,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// `sigmoid(slope * (w.x + b) + offset)`.
///
/// A patch without any gradient carries no evidence of a discontinuity and
/// gets the lowest score, whatever the bias says.
pub fn score_pixel(model: &SvmModel, d: &PixelDescriptor) -> f64 {
    if d.is_zero() {
        return sigmoid(f64::NEG_INFINITY);
    }
    model.score_margin(model.margin(d))
}

/// Fraction of the set classified correctly at `threshold`.
pub fn accuracy(model: &SvmModel, ts: &TrainingSet, threshold: f64) -> f64 {
    if ts.is_empty() {
        return 0.0;
    }
    let hits = ts
        .positives
        .iter()
        .filter(|d| score_pixel(model, d) >= threshold)
        .count()
        + ts.negatives
            .iter()
            .filter(|d| score_pixel(model, d) < threshold)
            .count();
    hits as f64 / ts.len() as f64
}

/// Fraction of positives scoring at or above `threshold`.
pub fn recall(model: &SvmModel, ts: &TrainingSet, threshold: f64) -> f64 {
    if ts.positives.is_empty() {
        return 0.0;
    }
    ts.positives
        .iter()
        .filter(|d| score_pixel(model, d) >= threshold)
        .count() as f64
        / ts.positives.len() as f64
}
