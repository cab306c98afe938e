//! Fuse bump clearance and classifier confidence into the probability that
//! a discontinuity is a permanent wrinkle.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discont::Discontinuity;
use crate::error::{Error, Result};
use crate::mixture::BumpMixture;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionParams {
    /// Wrinkles with `p >= p_min` are accepted for ironing.
    pub p_min: f64,
    /// Points sampled along a segment for its clearance.
    pub clearance_samples: usize,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            p_min: 0.3,
            clearance_samples: 16,
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_min) {
            return Err(Error::InvalidConfig(
                "fusion.p_min must lie in [0, 1]".into(),
            ));
        }
        if self.clearance_samples < 2 {
            return Err(Error::InvalidConfig(
                "fusion.clearance_samples must be at least 2".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusedWrinkle {
    pub discontinuity: Discontinuity,
    /// Probability of avoiding every bump.
    pub q: f64,
    /// Mean classifier score over the supporting pixels.
    pub r: f64,
    /// `q * r`.
    pub p: f64,
    pub accepted: bool,
}

/// Mean score of the supporting pixels; 0 without support.
pub fn confidence(d: &Discontinuity) -> f64 {
    if d.support.is_empty() {
        return 0.0;
    }
    d.support.iter().map(|s| s.score).sum::<f64>() / d.support.len() as f64
}

/// Score every discontinuity and order by `p` descending, ties by id.
pub fn fuse(ds: &[Discontinuity], mix: &BumpMixture, params: &FusionParams) -> Vec<FusedWrinkle> {
    let mut out: Vec<FusedWrinkle> = ds
        .par_iter()
        .map(|d| {
            let [a, b] = d.endpoints;
            let q = mix.clearance(a, b, params.clearance_samples);
            let r = confidence(d);
            let p = q * r;
            FusedWrinkle {
                discontinuity: d.clone(),
                q,
                r,
                p,
                accepted: p >= params.p_min,
            }
        })
        .collect();
    sort_by_probability(&mut out);
    out
}

pub(crate) fn sort_by_probability(ws: &mut [FusedWrinkle]) {
    ws.sort_by(|a, b| {
        b.p.total_cmp(&a.p)
            .then(a.discontinuity.id.cmp(&b.discontinuity.id))
    });
}
