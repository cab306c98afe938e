//! Curvature scan: find smooth height bumps in a height map.
//!
//! Pixels are classified with the shape index of the height Hessian; bump
//! points are grouped into 8-connected components, each component climbs to
//! the summit of its hill, the hill is flooded down to a fraction of the
//! summit height, and that footprint yields the bump's volume, center and
//! principal axes.

use std::cmp::Ordering;
use std::collections::VecDeque;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::wrap_pi;
use crate::gridio::FloatGrid;

/// Lower (inclusive) and upper (exclusive) shape-index bounds of a bump point.
pub const BUMP_INDEX_RANGE: (f64, f64) = (-0.125, 0.625);

/// Components smaller than this are dropped as degenerate.
pub const MIN_COMPONENT_PIXELS: usize = 5;

/// Gaussian blur truncated at 3 sigma with mirrored borders.
pub fn smooth(grid: &FloatGrid, sigma_pixels: f64) -> FloatGrid {
    if !(sigma_pixels > 0.0) {
        return grid.clone();
    }
    let radius = (3.0 * sigma_pixels).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-0.5 * (i * i) as f64 / (sigma_pixels * sigma_pixels)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let (w, h) = (grid.width(), grid.height());
    let horizontal: Vec<f64> = (0..h)
        .into_par_iter()
        .flat_map_iter(|v| {
            let kernel = &kernel;
            (0..w).map(move |u| {
                kernel
                    .iter()
                    .zip(-radius..=radius)
                    .map(|(k, d)| k * grid.get_reflect(u as isize + d, v as isize))
                    .sum::<f64>()
            })
        })
        .collect();
    let tmp = grid
        .with_data(horizontal)
        .expect("blur keeps geometry and finiteness");
    let vertical: Vec<f64> = (0..h)
        .into_par_iter()
        .flat_map_iter(|v| {
            let kernel = &kernel;
            let tmp = &tmp;
            (0..w).map(move |u| {
                kernel
                    .iter()
                    .zip(-radius..=radius)
                    .map(|(k, d)| k * tmp.get_reflect(u as isize, v as isize + d))
                    .sum::<f64>()
            })
        })
        .collect();
    grid.with_data(vertical)
        .expect("blur keeps geometry and finiteness")
}

/// Per-pixel Hessian eigenvalues (in 1/m for a height map in meters) and
/// the shape index derived from them.
#[derive(Clone, Debug)]
pub struct CurvatureField {
    pub width: usize,
    pub height: usize,
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    /// `None` where the pixel is umbilic (`lambda1 ~= lambda2`).
    pub shape: Vec<Option<f64>>,
    pub smoothing_sigma: f64,
}

impl CurvatureField {
    /// Shape index with the umbilic limit `sign(lambda1 + lambda2)` filled in.
    pub fn shape_or_limit(&self, i: usize) -> f64 {
        self.shape[i].unwrap_or_else(|| umbilic_limit(self.lambda1[i], self.lambda2[i]))
    }
}

fn umbilic_limit(l1: f64, l2: f64) -> f64 {
    let s = l1 + l2;
    if s > 0.0 {
        1.0
    } else if s < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Closed-form eigenvalues of `[[a, b], [b, c]]`, larger first.
#[inline]
pub fn symmetric_eigenvalues(a: f64, b: f64, c: f64) -> (f64, f64) {
    let mean = 0.5 * (a + c);
    let r = (0.5 * (a - c)).hypot(b);
    (mean + r, mean - r)
}

/// Central-difference Hessian with mirrored borders.
pub fn hessian(grid: &FloatGrid) -> CurvatureField {
    hessian_with_eps(grid, 1e-9)
}

/// As [`hessian`], with the umbilic tolerance given relative to the largest
/// eigenvalue magnitude in the field.
pub fn hessian_with_eps(grid: &FloatGrid, umbilic_rel_eps: f64) -> CurvatureField {
    let (w, h) = (grid.width(), grid.height());
    let inv_c2 = 1.0 / (grid.cell_size() * grid.cell_size());
    let pairs: Vec<(f64, f64)> = (0..h)
        .into_par_iter()
        .flat_map_iter(|v| {
            (0..w).map(move |u| {
                let (u, v) = (u as isize, v as isize);
                let z = grid.get_reflect(u, v);
                let dxx =
                    (grid.get_reflect(u + 1, v) - 2.0 * z + grid.get_reflect(u - 1, v)) * inv_c2;
                let dyy =
                    (grid.get_reflect(u, v + 1) - 2.0 * z + grid.get_reflect(u, v - 1)) * inv_c2;
                let dxy = (grid.get_reflect(u + 1, v + 1)
                    - grid.get_reflect(u + 1, v - 1)
                    - grid.get_reflect(u - 1, v + 1)
                    + grid.get_reflect(u - 1, v - 1))
                    * 0.25
                    * inv_c2;
                symmetric_eigenvalues(dxx, dxy, dyy)
            })
        })
        .collect();
    let (lambda1, lambda2): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let max_abs = lambda1
        .iter()
        .chain(&lambda2)
        .fold(0.0f64, |m, l| m.max(l.abs()));
    let eps = umbilic_rel_eps * max_abs;
    let shape = lambda1
        .iter()
        .zip(&lambda2)
        .map(|(&l1, &l2)| shape_index(l1, l2, eps))
        .collect();
    CurvatureField {
        width: w,
        height: h,
        lambda1,
        lambda2,
        shape,
        smoothing_sigma: 0.0,
    }
}

/// `(2/pi) atan((l1 + l2) / (l1 - l2))` for `l1 >= l2`; `None` when the
/// eigenvalues differ by less than `eps` (umbilic point).
pub fn shape_index(l1: f64, l2: f64, eps: f64) -> Option<f64> {
    let gap = l1 - l2;
    if !(gap > eps) || gap == 0.0 {
        return None;
    }
    // normalizing first keeps the ratio exact under power-of-two scaling
    let m = l1.abs().max(l2.abs());
    let (a, b) = (l1 / m, l2 / m);
    Some(2.0 / PI * ((a + b) / (a - b)).atan())
}

/// Membership test for the bump-point interval `[-1/8, 5/8)`.
#[inline]
pub fn is_bump_index(s: f64) -> bool {
    s >= BUMP_INDEX_RANGE.0 && s < BUMP_INDEX_RANGE.1
}

/// Which way up a bump points in the height map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    /// Classify the negated height, so domes rising out of the cloth are bumps.
    #[default]
    Negated,
    /// Classify the raw height field.
    Raw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BumpParams {
    /// Pre-filter sigma in pixels.
    pub smoothing_sigma: f64,
    /// Umbilic tolerance relative to the field's largest |lambda|.
    pub umbilic_rel_eps: f64,
    /// Bumps below this volume (m^3) are discarded.
    pub min_volume: f64,
    /// Pixels whose largest |lambda| is below this (1/m) count as flat.
    pub min_curvature: f64,
    /// Footprint flood stops at this fraction of the component's peak above
    /// the cloth floor.
    pub footprint_level: f64,
    pub polarity: Polarity,
}

impl Default for BumpParams {
    fn default() -> Self {
        Self {
            smoothing_sigma: 2.0,
            umbilic_rel_eps: 1e-9,
            min_volume: 1e-6,
            min_curvature: 1.0,
            footprint_level: 0.1,
            polarity: Polarity::Negated,
        }
    }
}

impl BumpParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("curvature.{m}")));
        if !(self.smoothing_sigma >= 0.0 && self.smoothing_sigma.is_finite()) {
            return bad("smoothing_sigma must be non-negative");
        }
        if !(self.umbilic_rel_eps >= 0.0 && self.min_volume >= 0.0 && self.min_curvature >= 0.0) {
            return bad("umbilic_rel_eps, min_volume and min_curvature must be non-negative");
        }
        if !(self.footprint_level > 0.0 && self.footprint_level < 1.0) {
            return bad("footprint_level must lie in (0, 1)");
        }
        Ok(())
    }
}

/// A segmented smooth region of the height map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeightBump {
    pub id: usize,
    /// World position of the weighted footprint centroid, meters.
    pub center: [f64; 2],
    /// Height above the footprint level integrated over the footprint, m^3.
    pub volume: f64,
    /// Standard deviation along the major principal axis, meters.
    pub d1: f64,
    /// Standard deviation along the minor principal axis, meters.
    pub d2: f64,
    /// Major-axis direction in `[0, pi)`.
    pub orientation: f64,
    pub peak_height: f64,
    pub pixel_count: usize,
    #[serde(skip)]
    pub pixels: Vec<(u32, u32)>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BumpDiagnostics {
    pub bump_points: usize,
    pub components: usize,
    pub degenerate: usize,
    pub below_volume: usize,
}

#[derive(Clone, Debug)]
pub struct BumpDetection {
    pub bumps: Vec<HeightBump>,
    pub diagnostics: BumpDiagnostics,
}

/// Weighted second moment of a 2D Gaussian restricted to the region above
/// `level` times its peak, with weights `g - level`, relative to the full
/// Gaussian's variance.
fn truncation_factor(level: f64) -> f64 {
    if !(level > 0.0 && level < 1.0) {
        return 1.0;
    }
    let u = (1.0 / level).ln();
    let num = 1.0 - (1.0 + u) * level - 0.5 * level * u * u;
    let den = 1.0 - level - level * u;
    num / den
}

const NEIGHBORS_8: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

fn neighbors(i: usize, width: usize, height: usize) -> impl Iterator<Item = usize> {
    let (u, v) = ((i % width) as isize, (i / width) as isize);
    NEIGHBORS_8.into_iter().filter_map(move |(du, dv)| {
        let (nu, nv) = (u + du, v + dv);
        (nu >= 0 && nv >= 0 && nu < width as isize && nv < height as isize)
            .then(|| nv as usize * width + nu as usize)
    })
}

/// Connected region of pixels at or above `level` containing `start`,
/// sorted by index.
fn flood(
    start: usize,
    level: f64,
    elevation: &[f64],
    width: usize,
    height: usize,
    stamp: &mut [u32],
    pass: u32,
) -> Vec<usize> {
    let mut region = vec![start];
    stamp[start] = pass;
    let mut head = 0;
    while head < region.len() {
        let i = region[head];
        head += 1;
        for j in neighbors(i, width, height) {
            if stamp[j] != pass && elevation[j] >= level {
                stamp[j] = pass;
                region.push(j);
            }
        }
    }
    region.sort_unstable();
    region
}

/// 8-connected components of `mask` in row-major discovery order.
pub(crate) fn label_components(mask: &[bool], width: usize, height: usize) -> Vec<Vec<usize>> {
    let mut seen = vec![false; mask.len()];
    let mut components = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut members = Vec::new();
        while let Some(i) = queue.pop_front() {
            members.push(i);
            let (u, v) = ((i % width) as isize, (i / width) as isize);
            for (du, dv) in NEIGHBORS_8 {
                let (nu, nv) = (u + du, v + dv);
                if nu < 0 || nv < 0 || nu >= width as isize || nv >= height as isize {
                    continue;
                }
                let j = nv as usize * width + nu as usize;
                if mask[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        members.sort_unstable();
        components.push(members);
    }
    components
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[sorted.len() / 2]
}

/// Curvature scan over a height map.
pub fn detect_bumps(grid: &FloatGrid, params: &BumpParams) -> Result<BumpDetection> {
    params.validate()?;
    let (w, h) = (grid.width(), grid.height());
    let cell = grid.cell_size();
    let smoothed = smooth(grid, params.smoothing_sigma);
    let elevation: Vec<f64> = match params.polarity {
        Polarity::Negated => smoothed.data().to_vec(),
        Polarity::Raw => smoothed.data().iter().map(|v| -v).collect(),
    };
    let classified = smoothed.map(|v| -v)?;
    let classified = match params.polarity {
        Polarity::Negated => classified,
        Polarity::Raw => smoothed,
    };
    let mut field = hessian_with_eps(&classified, params.umbilic_rel_eps);
    field.smoothing_sigma = params.smoothing_sigma;

    let bump_mask: Vec<bool> = (0..w * h)
        .map(|i| {
            let curved = field.lambda1[i].abs().max(field.lambda2[i].abs()) >= params.min_curvature;
            curved && is_bump_index(field.shape_or_limit(i))
        })
        .collect();
    let mut diagnostics = BumpDiagnostics {
        bump_points: bump_mask.iter().filter(|&&b| b).count(),
        ..Default::default()
    };

    let components = label_components(&bump_mask, w, h);
    diagnostics.components = components.len();
    let seeds: Vec<Vec<usize>> = components
        .into_iter()
        .filter(|c| {
            let keep = c.len() >= MIN_COMPONENT_PIXELS;
            if !keep {
                diagnostics.degenerate += 1;
            }
            keep
        })
        .collect();
    if seeds.is_empty() {
        return Ok(BumpDetection {
            bumps: Vec::new(),
            diagnostics,
        });
    }

    // every component climbs to the summit of its hill; a hill's footprint
    // is the connected region above a fixed fraction of the summit height,
    // and components on an already covered hill add nothing
    let floor = median(&elevation);
    let frac = params.footprint_level.clamp(0.0, 0.999);
    let higher = |a: usize, b: usize| {
        elevation[a].total_cmp(&elevation[b]).then(b.cmp(&a)) == Ordering::Greater
    };
    let climb = |mut i: usize| loop {
        let mut best = i;
        for j in neighbors(i, w, h) {
            if higher(j, best) {
                best = j;
            }
        }
        if best == i {
            return i;
        }
        i = best;
    };
    let mut summits: Vec<usize> = seeds
        .iter()
        .map(|c| {
            climb(
                c.iter()
                    .copied()
                    .reduce(|a, b| if higher(b, a) { b } else { a })
                    .expect("non-empty"),
            )
        })
        .collect();
    summits.sort_by(|&a, &b| {
        if higher(a, b) {
            Ordering::Less
        } else if a == b {
            Ordering::Equal
        } else {
            Ordering::Greater
        }
    });
    summits.dedup();
    let mut covered = vec![false; w * h];
    let mut stamp = vec![0u32; w * h];
    let mut pass = 0u32;
    let mut hills: Vec<(f64, Vec<usize>)> = Vec::new();
    for mut summit in summits {
        if covered[summit] {
            continue;
        }
        let (level, region) = loop {
            let level = floor + frac * (elevation[summit] - floor);
            pass += 1;
            let region = flood(summit, level, &elevation, w, h, &mut stamp, pass);
            let top = region
                .iter()
                .copied()
                .reduce(|a, b| if higher(b, a) { b } else { a })
                .expect("non-empty");
            if top == summit {
                break (level, region);
            }
            summit = top;
        };
        if covered[summit] {
            continue;
        }
        for &i in &region {
            covered[i] = true;
        }
        hills.push((level, region));
    }

    let transform = grid.transform();
    let correction = truncation_factor(frac);
    let blur_var = params.smoothing_sigma.max(0.0).powi(2);
    let mut bumps = Vec::new();
    for (level, pixels) in hills {
        let (mut sw, mut su, mut sv) = (0.0, 0.0, 0.0);
        for &i in &pixels {
            let wgt = (elevation[i] - level).max(0.0);
            sw += wgt;
            su += wgt * (i % w) as f64;
            sv += wgt * (i / w) as f64;
        }
        if !(sw > 0.0) {
            diagnostics.degenerate += 1;
            continue;
        }
        let (mu, mv) = (su / sw, sv / sw);
        let (mut cuu, mut cuv, mut cvv) = (0.0, 0.0, 0.0);
        for &i in &pixels {
            let wgt = (elevation[i] - level).max(0.0);
            let du = (i % w) as f64 - mu;
            let dv = (i / w) as f64 - mv;
            cuu += wgt * du * du;
            cuv += wgt * du * dv;
            cvv += wgt * dv * dv;
        }
        // undo the flood truncation, then the pre-filter's added variance
        let cuu = cuu / sw / correction - blur_var;
        let cvv = cvv / sw / correction - blur_var;
        let cuv = cuv / sw / correction;
        let (e1, e2) = symmetric_eigenvalues(cuu, cuv, cvv);
        if !(e2 > 0.0) {
            diagnostics.degenerate += 1;
            continue;
        }
        let volume = sw * cell * cell;
        if volume < params.min_volume {
            diagnostics.below_volume += 1;
            continue;
        }
        let (x, y) = transform.pixel_to_world(mu, mv);
        let peak = pixels
            .iter()
            .map(|&i| elevation[i])
            .fold(f64::MIN, f64::max);
        bumps.push(HeightBump {
            id: 0,
            center: [x, y],
            volume,
            d1: e1.sqrt() * cell,
            d2: e2.sqrt() * cell,
            orientation: wrap_pi(0.5 * f64::atan2(2.0 * cuv, cuu - cvv)),
            peak_height: peak - floor,
            pixel_count: pixels.len(),
            pixels: pixels
                .iter()
                .map(|&i| ((i % w) as u32, (i / w) as u32))
                .collect(),
        });
    }
    bumps.sort_by(|a, b| {
        b.volume
            .total_cmp(&a.volume)
            .then(a.center[0].total_cmp(&b.center[0]))
            .then(a.center[1].total_cmp(&b.center[1]))
    });
    for (id, b) in bumps.iter_mut().enumerate() {
        b.id = id;
    }
    Ok(BumpDetection { bumps, diagnostics })
}
