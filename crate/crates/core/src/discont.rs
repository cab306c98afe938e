//! Discontinuity scan: two-light normalization, per-pixel scoring and line
//! segment extraction with a Hough transform.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{score_pixel, DescriptorExtractor, ImageView, SvmModel};
use crate::error::{Error, Result};
use crate::geom::{angle_diff_mod_pi, dist, point_segment_distance, undirected_angle, Point};
use crate::gridio::{reflect_index, FloatGrid, GrayImage, Label, LabelMask, WorldTransform};

/// Reference intensities below this are unusable and flag the pixel invalid.
pub const EPS_REF: f64 = 1.0 / 255.0;

/// Reference-normalized pair of illumination images.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedImage {
    pub width: usize,
    pub height: usize,
    pub i1: Vec<f64>,
    pub i2: Vec<f64>,
    /// `sqrt(i1^2 + i2^2)`; zero where invalid.
    pub combined: Vec<f64>,
    pub valid: Vec<bool>,
}

impl NormalizedImage {
    pub fn view(&self) -> ImageView<'_> {
        ImageView::new(self.width, self.height, &self.combined)
    }

    pub fn invalid_count(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }
}

/// Divide each capture by its flat-cloth reference and combine by
/// root-sum-square.
pub fn normalize(
    i1: &GrayImage,
    i2: &GrayImage,
    ref1: &GrayImage,
    ref2: &GrayImage,
) -> Result<NormalizedImage> {
    let (w, h) = (i1.width(), i1.height());
    for (name, img) in [("light2", i2), ("ref1", ref1), ("ref2", ref2)] {
        if img.width() != w || img.height() != h {
            return Err(Error::DimensionMismatch(format!(
                "{name} is {}x{}, light1 is {w}x{h}",
                img.width(),
                img.height()
            )));
        }
    }
    normalize_raw(w, h, i1.data(), i2.data(), ref1.data(), ref2.data())
}

/// [`normalize`] over raw rasters, which need not lie in `[0, 1]`.
pub fn normalize_raw(
    width: usize,
    height: usize,
    i1: &[f64],
    i2: &[f64],
    ref1: &[f64],
    ref2: &[f64],
) -> Result<NormalizedImage> {
    let n = width * height;
    if [i1.len(), i2.len(), ref1.len(), ref2.len()]
        .iter()
        .any(|&l| l != n)
    {
        return Err(Error::DimensionMismatch("raster lengths differ".into()));
    }
    let mut out = NormalizedImage {
        width,
        height,
        i1: vec![0.0; n],
        i2: vec![0.0; n],
        combined: vec![0.0; n],
        valid: vec![false; n],
    };
    for k in 0..n {
        if !(ref1[k] >= EPS_REF && ref2[k] >= EPS_REF) {
            continue;
        }
        let a = (i1[k] / ref1[k]).max(0.0);
        let b = (i2[k] / ref2[k]).max(0.0);
        if !(a.is_finite() && b.is_finite()) {
            continue;
        }
        out.i1[k] = a;
        out.i2[k] = b;
        out.combined[k] = a.hypot(b);
        out.valid[k] = true;
    }
    Ok(out)
}

/// Classifier scores with the thresholded mask. Invalid pixels score 0 and
/// are never marked.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMap {
    pub width: usize,
    pub height: usize,
    pub scores: Vec<f64>,
    pub marked: Vec<bool>,
}

impl ScoreMap {
    pub fn marked_count(&self) -> usize {
        self.marked.iter().filter(|m| **m).count()
    }

    /// Marked pixels become wrinkle labels, everything else background.
    pub fn to_label_mask(&self) -> LabelMask {
        let data = self
            .marked
            .iter()
            .map(|&m| if m { Label::Wrinkle } else { Label::Background })
            .collect();
        LabelMask::new(self.width, self.height, data).expect("score map dimensions")
    }

    pub fn to_grid(&self, transform: WorldTransform) -> Result<FloatGrid> {
        FloatGrid::new(
            self.width,
            self.height,
            transform.cell_size,
            transform.origin,
            self.scores.clone(),
        )
    }

    /// Recompute the mask at another threshold.
    pub fn rethreshold(&mut self, threshold: f64, valid: &[bool]) {
        for ((m, s), v) in self.marked.iter_mut().zip(&self.scores).zip(valid) {
            *m = *v && *s >= threshold;
        }
    }
}

/// Score every valid pixel and mark those with `S >= threshold`.
pub fn score_map(img: &NormalizedImage, model: &SvmModel, threshold: f64) -> ScoreMap {
    let ex = DescriptorExtractor::new(img.view());
    let w = img.width;
    let scores: Vec<f64> = (0..img.height)
        .into_par_iter()
        .flat_map_iter(|v| {
            let ex = &ex;
            (0..w).map(move |u| {
                if img.valid[v * w + u] {
                    score_pixel(model, &ex.descriptor(u, v))
                } else {
                    0.0
                }
            })
        })
        .collect();
    let marked = scores
        .iter()
        .zip(&img.valid)
        .map(|(s, v)| *v && *s >= threshold)
        .collect();
    ScoreMap {
        width: w,
        height: img.height,
        scores,
        marked,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscontParams {
    /// Pixels with a score at or above this are marked.
    pub score_threshold: f64,
    /// Accumulator rho bin, pixels.
    pub rho_resolution: f64,
    /// Accumulator theta bin, radians.
    pub theta_resolution: f64,
    /// Minimum accumulator votes for a peak and for a kept run.
    pub min_votes: f64,
    /// Supporting pixels lie within this distance of the segment, pixels.
    pub gating_distance: f64,
    /// Largest gap inside one run, pixels.
    pub gap_tolerance: f64,
    pub min_length: f64,
    /// Runs longer than this are dropped; splitting is the planner's job.
    pub max_length: Option<f64>,
    pub nms_rho: f64,
    pub nms_theta: f64,
    /// Weight votes by score instead of counting marked pixels.
    pub weighted_votes: bool,
    pub min_support: usize,
    pub max_peaks: usize,
}

impl Default for DiscontParams {
    fn default() -> Self {
        Self {
            score_threshold: 0.5,
            rho_resolution: 1.0,
            theta_resolution: PI / 180.0,
            min_votes: 15.0,
            gating_distance: 2.0,
            gap_tolerance: 5.0,
            min_length: 15.0,
            max_length: None,
            nms_rho: 5.0,
            nms_theta: 5.0 * PI / 180.0,
            weighted_votes: true,
            min_support: 5,
            max_peaks: 256,
        }
    }
}

impl DiscontParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho_resolution", self.rho_resolution),
            ("theta_resolution", self.theta_resolution),
            ("gating_distance", self.gating_distance),
            ("nms_rho", self.nms_rho),
            ("nms_theta", self.nms_theta),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "discont.{name} must be positive"
                )));
            }
        }
        if !(self.gap_tolerance >= 0.0 && self.min_length >= 0.0 && self.min_votes >= 0.0) {
            return Err(Error::InvalidConfig(
                "discont gap_tolerance, min_length and min_votes must be non-negative".into(),
            ));
        }
        if self.theta_resolution > PI / 4.0 {
            return Err(Error::InvalidConfig(
                "discont.theta_resolution too coarse".into(),
            ));
        }
        if let Some(m) = self.max_length {
            if !(m > self.min_length) {
                return Err(Error::InvalidConfig(
                    "discont.max_length must exceed min_length".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportPixel {
    pub u: u32,
    pub v: u32,
    pub score: f64,
}

/// A straight wrinkle candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discontinuity {
    pub id: usize,
    /// World endpoints, meters.
    pub endpoints: [Point; 2],
    /// Pixel endpoints.
    pub pixel_endpoints: [Point; 2],
    pub length: f64,
    /// Undirected direction in `[0, pi)`.
    pub direction: f64,
    pub support_count: usize,
    #[serde(skip)]
    pub support: Vec<SupportPixel>,
}

impl Discontinuity {
    pub fn midpoint(&self) -> Point {
        let [a, b] = self.endpoints;
        [(a[0] + b[0]) * 0.5, (a[1] + b[1]) * 0.5]
    }

    /// Normal-form line parameters `(rho, theta)` of the pixel segment,
    /// `theta` in `[0, pi)`.
    pub fn hough_params(&self) -> (f64, f64) {
        line_params(self.pixel_endpoints[0], self.pixel_endpoints[1])
    }
}

fn line_params(a: Point, b: Point) -> (f64, f64) {
    let theta = undirected_angle(a, b) + PI / 2.0;
    let theta = if theta >= PI { theta - PI } else { theta };
    let rho = a[0] * theta.cos() + a[1] * theta.sin();
    (rho, theta)
}

/// `true` when two lines lie within the NMS radius, comparing theta modulo pi.
pub fn nms_conflict(a: (f64, f64), b: (f64, f64), nms_rho: f64, nms_theta: f64) -> bool {
    let (rho_a, th_a) = a;
    let (mut rho_b, th_b) = b;
    if (th_a - th_b).abs() > PI / 2.0 {
        // the same line seen across the theta wrap has rho negated
        rho_b = -rho_b;
    }
    (rho_a - rho_b).abs() < nms_rho && angle_diff_mod_pi(th_a, th_b) < nms_theta
}

struct Accumulator {
    n_theta: usize,
    n_rho: usize,
    rho_min: f64,
    rho_res: f64,
    theta_res: f64,
    votes: Vec<f64>,
}

impl Accumulator {
    fn theta(&self, t: usize) -> f64 {
        t as f64 * self.theta_res
    }

    fn rho(&self, r: usize) -> f64 {
        self.rho_min + r as f64 * self.rho_res
    }

    fn get(&self, t: isize, r: isize) -> f64 {
        let n = self.n_theta as isize;
        let (t, r) = if t < 0 {
            (t + n, self.n_rho as isize - 1 - r)
        } else if t >= n {
            (t - n, self.n_rho as isize - 1 - r)
        } else {
            (t, r)
        };
        if r < 0 || r >= self.n_rho as isize {
            return f64::NEG_INFINITY;
        }
        self.votes[t as usize * self.n_rho + r as usize]
    }
}

fn accumulate(
    pixels: &[(f64, f64, f64)],
    width: usize,
    height: usize,
    p: &DiscontParams,
) -> Accumulator {
    let n_theta = ((PI / p.theta_resolution).round() as usize).max(1);
    let theta_res = PI / n_theta as f64;
    let diag = ((width * width + height * height) as f64).sqrt();
    // symmetric rho range so the wrap neighbor of bin r is bin n_rho - 1 - r
    let half = (diag / p.rho_resolution).ceil() as usize + 1;
    let n_rho = 2 * half + 1;
    let rho_min = -(half as f64) * p.rho_resolution;
    let rows: Vec<Vec<f64>> = (0..n_theta)
        .into_par_iter()
        .map(|t| {
            let (s, c) = (t as f64 * theta_res).sin_cos();
            let mut row = vec![0.0; n_rho];
            for &(u, v, wgt) in pixels {
                let rho = u * c + v * s;
                let r = ((rho - rho_min) / p.rho_resolution).round() as usize;
                row[r] += wgt;
            }
            row
        })
        .collect();
    Accumulator {
        n_theta,
        n_rho,
        rho_min,
        rho_res: p.rho_resolution,
        theta_res,
        votes: rows.concat(),
    }
}

/// 3x3 local maxima at or above `min_votes`, strongest first. Plateaus keep
/// their first cell in scan order.
fn peaks(acc: &Accumulator, min_votes: f64, limit: usize) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for t in 0..acc.n_theta {
        for r in 0..acc.n_rho {
            let v = acc.votes[t * acc.n_rho + r];
            if v <= 0.0 || v < min_votes {
                continue;
            }
            let mut is_max = true;
            'nb: for dt in -1isize..=1 {
                for dr in -1isize..=1 {
                    if dt == 0 && dr == 0 {
                        continue;
                    }
                    let other = acc.get(t as isize + dt, r as isize + dr);
                    let earlier = (dt, dr) < (0, 0);
                    if other > v || (earlier && other == v) {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                out.push((t, r, v));
            }
        }
    }
    out.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    out.truncate(limit);
    out
}

/// Weighted total least squares line through the points: centroid and unit
/// direction.
fn fit_line(points: &[(f64, f64, f64)]) -> Option<(Point, Point)> {
    let total: f64 = points.iter().map(|p| p.2).sum();
    if !(total > 0.0) || points.len() < 2 {
        return None;
    }
    let cx = points.iter().map(|p| p.0 * p.2).sum::<f64>() / total;
    let cy = points.iter().map(|p| p.1 * p.2).sum::<f64>() / total;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y, w) in points {
        let (dx, dy) = (x - cx, y - cy);
        sxx += w * dx * dx;
        sxy += w * dx * dy;
        syy += w * dy * dy;
    }
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    Some(([cx, cy], [angle.cos(), angle.sin()]))
}

/// Find straight wrinkle segments among the marked pixels.
///
/// Peaks of the (rho, theta) accumulator are visited strongest first. Each
/// peak's line is refined by a weighted fit over nearby unclaimed pixels,
/// the pixels within the gating distance are split into runs, and the
/// strongest run becomes a segment after trimming the band half-width off
/// both ends. Accepted segments claim their pixels and suppress later
/// peaks within the NMS radius.
pub fn extract_segments(
    map: &ScoreMap,
    transform: WorldTransform,
    params: &DiscontParams,
) -> Vec<Discontinuity> {
    extract(map, None, transform, params)
}

/// [`extract_segments`] with endpoints refined on the combined image.
///
/// The classifier's window makes the marked band run on past a ridge's
/// end, by an amount that depends on contrast. Each end is instead placed
/// where the ridge-ness profile (gradient magnitude of the combined image
/// summed across the band) falls below half its interior median, pulled
/// back by the band half-width.
pub fn extract_segments_refined(
    map: &ScoreMap,
    image: &NormalizedImage,
    transform: WorldTransform,
    params: &DiscontParams,
) -> Vec<Discontinuity> {
    assert_eq!(
        (map.width, map.height),
        (image.width, image.height),
        "score map and image differ in size"
    );
    let gradient = GradientField::new(image);
    extract(map, Some(&gradient), transform, params)
}

/// Gradient magnitude of the combined image; zero next to invalid pixels.
struct GradientField {
    width: usize,
    height: usize,
    magnitude: Vec<f64>,
}

impl GradientField {
    fn new(img: &NormalizedImage) -> Self {
        let (w, h) = (img.width, img.height);
        let at = |u: isize, v: isize| {
            let k = reflect_index(v, h) * w + reflect_index(u, w);
            (img.combined[k], img.valid[k])
        };
        let mut magnitude = vec![0.0; w * h];
        for v in 0..h as isize {
            for u in 0..w as isize {
                let (l, r, t, b) = (at(u - 1, v), at(u + 1, v), at(u, v - 1), at(u, v + 1));
                if l.1 && r.1 && t.1 && b.1 && at(u, v).1 {
                    magnitude[v as usize * w + u as usize] =
                        (0.5 * (r.0 - l.0)).hypot(0.5 * (b.0 - t.0));
                }
            }
        }
        Self {
            width: w,
            height: h,
            magnitude,
        }
    }

    /// Bilinear sample; zero outside the image.
    fn sample(&self, x: f64, y: f64) -> f64 {
        if !(x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64)
        {
            return 0.0;
        }
        let (u0, v0) = (x.floor() as usize, y.floor() as usize);
        let (u1, v1) = ((u0 + 1).min(self.width - 1), (v0 + 1).min(self.height - 1));
        let (fx, fy) = (x - u0 as f64, y - v0 as f64);
        let g = |u: usize, v: usize| self.magnitude[v * self.width + u];
        (1.0 - fy) * ((1.0 - fx) * g(u0, v0) + fx * g(u1, v0))
            + fy * ((1.0 - fx) * g(u0, v1) + fx * g(u1, v1))
    }

    /// Ridge-ness at `s` along the line: gradient summed across the band.
    fn profile(&self, center: Point, dir: Point, s: f64, half: f64) -> f64 {
        let steps = half.ceil() as i64;
        (-steps..=steps)
            .map(|k| {
                let d = k as f64;
                self.sample(
                    center[0] + s * dir[0] - d * dir[1],
                    center[1] + s * dir[1] + d * dir[0],
                )
            })
            .sum()
    }

    /// Refined `(start, end)` along the line, or `None` when the profile
    /// gives no usable crossing.
    fn refine_ends(
        &self,
        center: Point,
        dir: Point,
        t0: f64,
        t1: f64,
        band: f64,
    ) -> Option<(f64, f64)> {
        let half = band + 2.0;
        let quarter = 0.25 * (t1 - t0);
        let n = ((t1 - t0 - 2.0 * quarter).floor() as usize).max(1);
        let mut interior: Vec<f64> = (0..=n)
            .map(|k| self.profile(center, dir, t0 + quarter + k as f64, half))
            .collect();
        interior.sort_by(f64::total_cmp);
        let cut = 0.5 * interior[interior.len() / 2];
        if !(cut > 1e-9) {
            return None;
        }
        let mid = 0.5 * (t0 + t1);
        let reach = 0.5 * (t1 - t0) + 2.0 * band + 6.0;
        let crossing = |step: f64| -> Option<f64> {
            let mut s = mid;
            let mut prev = self.profile(center, dir, s, half);
            while (s - mid).abs() < reach {
                let next = s + step;
                let value = self.profile(center, dir, next, half);
                if value < cut {
                    return Some(s + step * (prev - cut) / (prev - value));
                }
                prev = value;
                s = next;
            }
            None
        };
        let a = crossing(-1.0)? + band;
        let b = crossing(1.0)? - band;
        (b - a >= 1.0).then_some((a, b))
    }
}

fn extract(
    map: &ScoreMap,
    gradient: Option<&GradientField>,
    transform: WorldTransform,
    params: &DiscontParams,
) -> Vec<Discontinuity> {
    let (w, h) = (map.width, map.height);
    let index: Vec<usize> = (0..w * h).filter(|&k| map.marked[k]).collect();
    let pixels: Vec<(f64, f64, f64)> = index
        .iter()
        .map(|&k| {
            let wgt = if params.weighted_votes {
                map.scores[k]
            } else {
                1.0
            };
            ((k % w) as f64, (k / w) as f64, wgt)
        })
        .collect();
    if pixels.is_empty() {
        return Vec::new();
    }
    let acc = accumulate(&pixels, w, h, params);
    let mut claimed = vec![false; pixels.len()];
    let mut accepted: Vec<Discontinuity> = Vec::new();
    let mut accepted_lines: Vec<(f64, f64)> = Vec::new();

    for (t, r, _) in peaks(&acc, params.min_votes, params.max_peaks) {
        let (s, c) = acc.theta(t).sin_cos();
        let rho = acc.rho(r);
        // start from the peak line, expressed as a point and direction
        let mut center = [rho * c, rho * s];
        let mut dir = [-s, c];
        for _ in 0..3 {
            let near: Vec<(f64, f64, f64)> = pixels
                .iter()
                .zip(&claimed)
                .filter(|(p, cl)| !**cl && perp(p, center, dir).abs() <= params.nms_rho)
                .map(|(p, _)| *p)
                .collect();
            match fit_line(&near) {
                Some((c0, d0)) => {
                    center = c0;
                    dir = d0;
                }
                None => break,
            }
        }

        let mut cand: Vec<(f64, usize)> = pixels
            .iter()
            .enumerate()
            .filter(|(i, p)| !claimed[*i] && perp(p, center, dir).abs() <= params.gating_distance)
            .map(|(i, p)| (along(p, center, dir), i))
            .collect();
        if cand.len() < params.min_support {
            continue;
        }
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let Some((lo, hi)) = best_run(&cand, &pixels, params.gap_tolerance) else {
            continue;
        };
        let run = &cand[lo..hi];
        let run_votes: f64 = run.iter().map(|&(_, i)| pixels[i].2).sum();
        let (t0, t1) = (run[0].0, run[run.len() - 1].0);

        // band half-width from the spread of nearby pixels across the line
        let band: Vec<f64> = pixels
            .iter()
            .zip(&claimed)
            .filter(|(p, cl)| {
                let a = along(p, center, dir);
                !**cl && a >= t0 && a <= t1 && perp(p, center, dir).abs() <= 2.0 * params.nms_rho
            })
            .map(|(p, _)| perp(p, center, dir).abs())
            .collect();
        let half_width = if band.is_empty() {
            0.0
        } else {
            2.0 * band.iter().sum::<f64>() / band.len() as f64
        };
        let trim = half_width.min(0.5 * (t1 - t0));
        let (a_t, b_t) = gradient
            .and_then(|g| g.refine_ends(center, dir, t0, t1, half_width))
            .unwrap_or((t0 + trim, t1 - trim));
        let pa = [center[0] + a_t * dir[0], center[1] + a_t * dir[1]];
        let pb = [center[0] + b_t * dir[0], center[1] + b_t * dir[1]];
        let len_px = b_t - a_t;
        if len_px < params.min_length || run_votes < params.min_votes {
            continue;
        }
        if params.max_length.is_some_and(|m| len_px > m) {
            continue;
        }
        let line = line_params(pa, pb);
        if accepted_lines
            .iter()
            .any(|&other| nms_conflict(line, other, params.nms_rho, params.nms_theta))
        {
            continue;
        }
        let support: Vec<SupportPixel> = run
            .iter()
            .filter(|&&(_, i)| {
                point_segment_distance([pixels[i].0, pixels[i].1], pa, pb) <= params.gating_distance
            })
            .map(|&(_, i)| {
                let k = index[i];
                SupportPixel {
                    u: (k % w) as u32,
                    v: (k / w) as u32,
                    score: map.scores[k],
                }
            })
            .collect();
        if support.len() < params.min_support {
            continue;
        }
        let claim = (2.0 * half_width).max(params.nms_rho) + 1.0;
        for (i, p) in pixels.iter().enumerate() {
            if !claimed[i] && point_segment_distance([p.0, p.1], pa, pb) <= claim {
                claimed[i] = true;
            }
        }
        let wa = transform.pixel_to_world(pa[0], pa[1]);
        let wb = transform.pixel_to_world(pb[0], pb[1]);
        let (wa, wb) = ([wa.0, wa.1], [wb.0, wb.1]);
        accepted_lines.push(line);
        accepted.push(Discontinuity {
            id: 0,
            endpoints: [wa, wb],
            pixel_endpoints: [pa, pb],
            length: dist(wa, wb),
            direction: undirected_angle(wa, wb),
            support_count: support.len(),
            support,
        });
    }
    canonical_order(&mut accepted);
    accepted
}

/// Sort segments by position so ids do not depend on peak order, and point
/// every segment in a canonical direction.
fn canonical_order(segs: &mut [Discontinuity]) {
    for d in segs.iter_mut() {
        let [a, b] = d.pixel_endpoints;
        if (b[0], b[1]) < (a[0], a[1]) {
            d.pixel_endpoints = [b, a];
            d.endpoints = [d.endpoints[1], d.endpoints[0]];
        }
    }
    segs.sort_by(|x, y| {
        let (a, b) = (x.pixel_endpoints[0], y.pixel_endpoints[0]);
        a[1].total_cmp(&b[1]).then(a[0].total_cmp(&b[0]))
    });
    for (i, d) in segs.iter_mut().enumerate() {
        d.id = i;
    }
}

#[inline]
fn perp(p: &(f64, f64, f64), center: Point, dir: Point) -> f64 {
    (p.0 - center[0]) * -dir[1] + (p.1 - center[1]) * dir[0]
}

#[inline]
fn along(p: &(f64, f64, f64), center: Point, dir: Point) -> f64 {
    (p.0 - center[0]) * dir[0] + (p.1 - center[1]) * dir[1]
}

/// Index range of the heaviest maximal run with gaps at most `gap`.
fn best_run(cand: &[(f64, usize)], pixels: &[(f64, f64, f64)], gap: f64) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize, f64)> = None;
    let mut start = 0;
    for k in 1..=cand.len() {
        if k == cand.len() || cand[k].0 - cand[k - 1].0 > gap {
            let weight: f64 = cand[start..k].iter().map(|&(_, i)| pixels[i].2).sum();
            if best.is_none_or(|b| weight > b.2) {
                best = Some((start, k, weight));
            }
            start = k;
        }
    }
    best.map(|(a, b, _)| (a, b))
}
