//! Seeded scene presets used by the corpus, the tests and `wrinkle synth`.
//!
//! Image scenes use 1 mm cells with the default two-light rig; ridges are
//! 3 mm half-width and at most 2 mm high so they stay well below the bump
//! volume threshold.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geom::{dist, Point};
use crate::synth::{BumpSpec, Noise, SceneSpec, WrinkleSpec};

const IMAGE_CELL: f64 = 0.001;
const RIDGE_HALF_WIDTH: f64 = 0.003;

fn rng_for(seed: u64, preset: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ preset.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn image_noise() -> Noise {
    Noise {
        height_sigma: 1e-5,
        image_sigma: 0.01,
    }
}

fn ridge(a: Point, b: Point, height: f64) -> WrinkleSpec {
    WrinkleSpec {
        points: vec![a, b],
        half_width: RIDGE_HALF_WIDTH,
        ridge_height: height,
    }
}

/// Segment of `length` at `angle` centered on `c`.
fn centered(c: Point, length: f64, angle: f64) -> [Point; 2] {
    let (s, co) = angle.sin_cos();
    let h = 0.5 * length;
    [[c[0] - h * co, c[1] - h * s], [c[0] + h * co, c[1] + h * s]]
}

/// One anisotropic bump on a 160x160 grid of 2 mm cells.
pub fn single_bump(seed: u64) -> (SceneSpec, BumpSpec) {
    let mut rng = rng_for(seed, 1);
    let mut spec = SceneSpec::flat(160, 160, 0.002);
    spec.seed = seed;
    spec.noise = image_noise();
    let bump = BumpSpec {
        center: [
            0.16 + rng.gen_range(-0.02..0.02),
            0.16 + rng.gen_range(-0.02..0.02),
        ],
        sigma_major: 0.04,
        sigma_minor: 0.02,
        orientation: rng.gen_range(0.0..PI),
        peak_height: 0.02,
    };
    spec.bumps.push(bump);
    (spec, bump)
}

/// One straight ridge of 30 to 200 px at a random orientation on a
/// 256x256 image scene. Returns the ridge's world endpoints.
pub fn single_ridge(seed: u64) -> (SceneSpec, [Point; 2]) {
    let mut rng = rng_for(seed, 2);
    let mut spec = SceneSpec::flat(256, 256, IMAGE_CELL);
    spec.seed = seed;
    spec.noise = image_noise();
    let length = rng.gen_range(30.0..200.0) * IMAGE_CELL;
    let angle = rng.gen_range(0.0..PI);
    let c = [
        0.1275 + rng.gen_range(-0.01..0.01),
        0.1275 + rng.gen_range(-0.01..0.01),
    ];
    let ends = centered(c, length, angle);
    spec.wrinkles.push(ridge(ends[0], ends[1], 0.0015));
    (spec, ends)
}

/// Labeled training scene: 320x240 with one or two bumps and two to four
/// ridges, some of which may cross a bump.
pub fn training_scene(seed: u64) -> SceneSpec {
    let mut rng = rng_for(seed, 3);
    let mut spec = SceneSpec::flat(320, 240, IMAGE_CELL);
    spec.seed = seed;
    spec.noise = image_noise();
    let (w, h) = (0.32, 0.24);
    for _ in 0..rng.gen_range(1..=2) {
        spec.bumps.push(BumpSpec {
            center: [rng.gen_range(0.06..w - 0.06), rng.gen_range(0.06..h - 0.06)],
            sigma_major: rng.gen_range(0.025..0.045),
            sigma_minor: rng.gen_range(0.015..0.025),
            orientation: rng.gen_range(0.0..PI),
            peak_height: rng.gen_range(0.008..0.02),
        });
    }
    let n_ridges = rng.gen_range(2..=4);
    while spec.wrinkles.len() < n_ridges {
        let length = rng.gen_range(0.03..0.16);
        let ends = centered(
            [rng.gen_range(0.02..w - 0.02), rng.gen_range(0.02..h - 0.02)],
            length,
            rng.gen_range(0.0..PI),
        );
        let inside = ends
            .iter()
            .all(|p| (0.012..w - 0.012).contains(&p[0]) && (0.012..h - 0.012).contains(&p[1]));
        if inside {
            spec.wrinkles
                .push(ridge(ends[0], ends[1], rng.gen_range(0.001..0.002)));
        }
    }
    spec
}

/// Scene for the fusion check: one bump, a ridge through its center
/// spanning one standard deviation either side, and a ridge at least
/// 3 standard deviations clear of it.
#[derive(Clone, Debug)]
pub struct FusionScene {
    pub spec: SceneSpec,
    pub bump: BumpSpec,
    pub on_bump: [Point; 2],
    pub clear: [Point; 2],
}

/// Mahalanobis distance of `p` from the bump center in sigma units.
pub fn mahalanobis(bump: &BumpSpec, p: Point) -> f64 {
    (-2.0 * bump.unit_profile(p).ln()).max(0.0).sqrt()
}

pub fn fusion_scene(seed: u64) -> FusionScene {
    let mut rng = rng_for(seed, 4);
    let mut spec = SceneSpec::flat(320, 240, IMAGE_CELL);
    spec.seed = seed;
    spec.noise = image_noise();
    let bump = BumpSpec {
        center: [
            0.1 + rng.gen_range(-0.01..0.01),
            0.12 + rng.gen_range(-0.015..0.015),
        ],
        sigma_major: rng.gen_range(0.035..0.045),
        sigma_minor: rng.gen_range(0.025..0.03),
        orientation: rng.gen_range(0.0..PI),
        peak_height: rng.gen_range(0.012..0.02),
    };
    let angle = rng.gen_range(0.0..PI);
    // half-length reaching Mahalanobis distance 1 along `angle`
    let probe = [bump.center[0] + angle.cos(), bump.center[1] + angle.sin()];
    let half = 1.0 / mahalanobis(&bump, probe);
    let on_bump = centered(bump.center, 2.0 * half, angle);
    let clear = loop {
        let cand = centered(
            [rng.gen_range(0.23..0.28), rng.gen_range(0.06..0.18)],
            rng.gen_range(0.06..0.09),
            rng.gen_range(0.0..PI),
        );
        let inside = cand
            .iter()
            .all(|p| (0.015..0.305).contains(&p[0]) && (0.015..0.225).contains(&p[1]));
        let far = (0..=20).all(|k| {
            let t = k as f64 / 20.0;
            let p = [
                cand[0][0] + t * (cand[1][0] - cand[0][0]),
                cand[0][1] + t * (cand[1][1] - cand[0][1]),
            ];
            mahalanobis(&bump, p) >= 3.0 && dist(p, bump.center) >= 3.0 * bump.sigma_major
        });
        if inside && far {
            break cand;
        }
    };
    spec.bumps.push(bump);
    spec.wrinkles.push(ridge(on_bump[0], on_bump[1], 0.0015));
    spec.wrinkles.push(ridge(clear[0], clear[1], 0.0015));
    FusionScene {
        spec,
        bump,
        on_bump,
        clear,
    }
}

/// The 640x480 reference scene: two bumps and one ridge clear of both.
pub fn reference_scene() -> SceneSpec {
    let mut spec = SceneSpec::flat(640, 480, IMAGE_CELL);
    spec.seed = 2024;
    spec.noise = image_noise();
    spec.bumps = vec![
        BumpSpec {
            center: [0.15, 0.25],
            sigma_major: 0.045,
            sigma_minor: 0.03,
            orientation: 0.4,
            peak_height: 0.02,
        },
        BumpSpec {
            center: [0.47, 0.33],
            sigma_major: 0.04,
            sigma_minor: 0.025,
            orientation: 1.9,
            peak_height: 0.015,
        },
    ];
    spec.wrinkles = vec![ridge([0.26, 0.06], [0.43, 0.13], 0.0015)];
    spec
}
