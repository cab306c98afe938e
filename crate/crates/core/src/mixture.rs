//! Bump-clearance model: one peak-normalized Gaussian per detected bump.

use serde::{Deserialize, Serialize};

use crate::curvature::HeightBump;
use crate::geom::{lerp, Point};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ComponentRecord")]
pub struct MixtureComponent {
    /// Id of the bump this component came from.
    pub bump_id: usize,
    pub mean: Point,
    pub covariance: [[f64; 2]; 2],
    #[serde(skip)]
    inverse: [[f64; 2]; 2],
}

#[derive(Deserialize)]
struct ComponentRecord {
    bump_id: usize,
    mean: Point,
    covariance: [[f64; 2]; 2],
}

impl TryFrom<ComponentRecord> for MixtureComponent {
    type Error = String;

    fn try_from(r: ComponentRecord) -> Result<Self, Self::Error> {
        Self::new(r.bump_id, r.mean, r.covariance).ok_or_else(|| {
            format!(
                "component {}: covariance is not positive definite",
                r.bump_id
            )
        })
    }
}

impl MixtureComponent {
    /// Component from a mean and a symmetric covariance; `None` unless the
    /// covariance is finite and positive definite.
    pub fn new(bump_id: usize, mean: Point, covariance: [[f64; 2]; 2]) -> Option<Self> {
        let [[a, b], [b2, c]] = covariance;
        let det = a * c - b * b2;
        let finite = [a, b, b2, c, mean[0], mean[1]]
            .iter()
            .all(|v| v.is_finite());
        if !(finite && a > 0.0 && det > 0.0 && b == b2) {
            return None;
        }
        let inverse = [[c / det, -b / det], [-b / det, a / det]];
        Some(Self {
            bump_id,
            mean,
            covariance,
            inverse,
        })
    }

    /// Covariance `R diag(d1^2, d2^2) R^T` for a major axis at `orientation`.
    pub fn from_axes(
        bump_id: usize,
        mean: Point,
        d1: f64,
        d2: f64,
        orientation: f64,
    ) -> Option<Self> {
        let (s, c) = orientation.sin_cos();
        let (v1, v2) = (d1 * d1, d2 * d2);
        let xx = c * c * v1 + s * s * v2;
        let yy = s * s * v1 + c * c * v2;
        let xy = c * s * (v1 - v2);
        Self::new(bump_id, mean, [[xx, xy], [xy, yy]])
    }

    /// Squared Mahalanobis distance from the component mean.
    pub fn mahalanobis2(&self, p: Point) -> f64 {
        let dx = p[0] - self.mean[0];
        let dy = p[1] - self.mean[1];
        let [[a, b], [_, c]] = self.inverse;
        a * dx * dx + 2.0 * b * dx * dy + c * dy * dy
    }

    /// Unnormalized Gaussian with peak 1 at the mean.
    pub fn proximity(&self, p: Point) -> f64 {
        (-0.5 * self.mahalanobis2(p)).exp()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BumpMixture {
    pub components: Vec<MixtureComponent>,
    /// Bumps whose covariance was not positive definite.
    #[serde(default)]
    pub rejected: Vec<usize>,
}

/// One component per bump; bumps with a degenerate covariance are rejected.
pub fn build_mixture(bumps: &[HeightBump]) -> BumpMixture {
    let mut mixture = BumpMixture::default();
    for b in bumps {
        match MixtureComponent::from_axes(b.id, b.center, b.d1, b.d2, b.orientation) {
            Some(c) if b.d2 > 0.0 => mixture.components.push(c),
            _ => mixture.rejected.push(b.id),
        }
    }
    mixture
}

impl BumpMixture {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn component_proximity(&self, j: usize, point: Point) -> f64 {
        self.components[j].proximity(point)
    }

    /// Probability that `point` avoids every bump: `prod_j (1 - prox_j)`.
    pub fn point_clearance(&self, point: Point) -> f64 {
        self.components
            .iter()
            .map(|c| 1.0 - c.proximity(point))
            .product()
    }

    /// Mean point clearance over `samples` equally spaced points of the
    /// segment `a`-`b`, endpoints included. Empty mixture gives 1.
    pub fn clearance(&self, a: Point, b: Point, samples: usize) -> f64 {
        if self.components.is_empty() {
            return 1.0;
        }
        let n = samples.max(2);
        let total: f64 = (0..n)
            .map(|k| self.point_clearance(lerp(a, b, k as f64 / (n - 1) as f64)))
            .sum();
        (total / n as f64).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bump(id: usize, center: Point, d1: f64, d2: f64, orientation: f64) -> HeightBump {
        HeightBump {
            id,
            center,
            volume: 1e-4,
            d1,
            d2,
            orientation,
            peak_height: 0.02,
            pixel_count: 100,
            pixels: Vec::new(),
        }
    }

    #[test]
    fn empty_input_gives_empty_mixture_and_unit_clearance() {
        let m = build_mixture(&[]);
        assert!(m.is_empty());
        assert_eq!(m.clearance([0.0, 0.0], [1.0, 1.0], 16), 1.0);
    }

    #[test]
    fn axis_aligned_covariance_squares_axes() {
        let m = build_mixture(&[bump(0, [0.0, 0.0], 0.04, 0.02, 0.0)]);
        let cov = m.components[0].covariance;
        assert!((cov[0][0] - 1.6e-3).abs() < 1e-15);
        assert!((cov[1][1] - 4e-4).abs() < 1e-15);
        assert_eq!(cov[0][1], 0.0);
    }

    #[test]
    fn quarter_turn_swaps_the_diagonal() {
        let m = build_mixture(&[bump(0, [0.0, 0.0], 0.04, 0.02, std::f64::consts::FRAC_PI_2)]);
        let cov = m.components[0].covariance;
        // oracle: explicit R diag R^T product
        let (s, c) = std::f64::consts::FRAC_PI_2.sin_cos();
        let r = [[c, -s], [s, c]];
        let d = [1.6e-3, 4e-4];
        for i in 0..2 {
            for j in 0..2 {
                let expect: f64 = (0..2).map(|k| r[i][k] * d[k] * r[j][k]).sum();
                assert!((cov[i][j] - expect).abs() < 1e-15);
            }
        }
        assert!((cov[0][0] - 4e-4).abs() < 1e-15 && (cov[1][1] - 1.6e-3).abs() < 1e-15);
    }

    #[test]
    fn degenerate_axes_are_rejected() {
        let m = build_mixture(&[
            bump(3, [0.0, 0.0], 0.04, 0.0, 0.0),
            bump(4, [1.0, 0.0], 0.02, 0.01, 0.0),
        ]);
        assert_eq!(m.len(), 1);
        assert_eq!(m.rejected, vec![3]);
    }

    #[test]
    fn proximity_at_center_and_one_sigma() {
        let m = build_mixture(&[bump(0, [0.3, 0.2], 0.04, 0.02, 0.5)]);
        assert_eq!(m.component_proximity(0, [0.3, 0.2]), 1.0);
        let along = [0.3 + 0.04 * 0.5f64.cos(), 0.2 + 0.04 * 0.5f64.sin()];
        assert!((m.component_proximity(0, along) - (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn proximity_decays_along_rays() {
        let m = build_mixture(&[bump(0, [0.0, 0.0], 0.05, 0.01, 1.1)]);
        for k in 0..24 {
            let ang = k as f64 * std::f64::consts::PI / 12.0;
            let mut last = 1.0;
            for step in 1..60 {
                let r = step as f64 * 0.003;
                let p = m.component_proximity(0, [r * ang.cos(), r * ang.sin()]);
                assert!(p <= last);
                last = p;
            }
        }
    }

    #[test]
    fn segment_through_bump_center_has_low_clearance() {
        let m = build_mixture(&[bump(0, [0.0, 0.0], 0.04, 0.03, 0.0)]);
        let q = m.clearance([-0.04, 0.0], [0.04, 0.0], 16);
        // oracle: evaluate the product directly at the 16 sample points
        let oracle: f64 = (0..16)
            .map(|k| {
                let x = -0.04 + 0.08 * k as f64 / 15.0;
                1.0 - (-0.5 * x * x / 0.0016f64).exp()
            })
            .sum::<f64>()
            / 16.0;
        assert!((q - oracle).abs() < 1e-12);
        assert!(q < 0.5);
    }

    #[test]
    fn product_of_two_component_factors() {
        // place the sample where the two proximities are exactly 0.3 and 0.5
        let s1 = 0.02;
        let s2 = 0.03;
        let r1 = s1 * (2.0 * (1.0f64 / 0.3).ln()).sqrt();
        let r2 = s2 * (2.0 * (1.0f64 / 0.5).ln()).sqrt();
        let p = [0.0, 0.0];
        let m = build_mixture(&[
            bump(0, [r1, 0.0], s1, s1, 0.0),
            bump(1, [0.0, -r2], s2, s2, 0.0),
        ]);
        assert!((m.component_proximity(0, p) - 0.3).abs() < 1e-12);
        assert!((m.component_proximity(1, p) - 0.5).abs() < 1e-12);
        assert!((m.clearance(p, p, 8) - 0.35).abs() < 1e-12);
    }

    fn arb_bump() -> impl Strategy<Value = HeightBump> {
        (
            -0.5f64..0.5,
            -0.5f64..0.5,
            0.01f64..0.08,
            0.2f64..1.0,
            0.0f64..std::f64::consts::PI,
        )
            .prop_map(|(x, y, d1, ratio, o)| bump(0, [x, y], d1, d1 * ratio, o))
    }

    proptest! {
        #[test]
        fn clearance_bounded_and_monotone_in_components(
            bumps in proptest::collection::vec(arb_bump(), 1..5),
            extra in arb_bump(),
            a in (-0.5f64..0.5, -0.5f64..0.5),
            b in (-0.5f64..0.5, -0.5f64..0.5),
        ) {
            let (a, b) = ([a.0, a.1], [b.0, b.1]);
            let m = build_mixture(&bumps);
            let q = m.clearance(a, b, 16);
            prop_assert!((0.0..=1.0).contains(&q));
            let mut more = bumps.clone();
            more.push(extra);
            prop_assert!(build_mixture(&more).clearance(a, b, 16) <= q + 1e-15);
            let mut reversed = bumps.clone();
            reversed.reverse();
            prop_assert!((build_mixture(&reversed).clearance(a, b, 16) - q).abs() < 1e-12);
        }

        #[test]
        fn clearance_is_rigid_motion_invariant(
            bumps in proptest::collection::vec(arb_bump(), 1..4),
            a in (-0.3f64..0.3, -0.3f64..0.3),
            b in (-0.3f64..0.3, -0.3f64..0.3),
            angle in 0.0f64..std::f64::consts::TAU,
            shift in (-1.0f64..1.0, -1.0f64..1.0),
        ) {
            let (s, c) = angle.sin_cos();
            let mv = |p: Point| [c * p[0] - s * p[1] + shift.0, s * p[0] + c * p[1] + shift.1];
            let moved: Vec<HeightBump> = bumps
                .iter()
                .map(|bp| bump(0, mv(bp.center), bp.d1, bp.d2, bp.orientation + angle))
                .collect();
            let (a, b) = ([a.0, a.1], [b.0, b.1]);
            let q0 = build_mixture(&bumps).clearance(a, b, 16);
            let q1 = build_mixture(&moved).clearance(mv(a), mv(b), 16);
            prop_assert!((q0 - q1).abs() < 1e-9);
        }
    }
}
