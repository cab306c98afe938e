//! Pipeline configuration, read from a single TOML file.
//!
//! Every section and key is optional; omitted values take their defaults.
//! Unknown keys are rejected.
//!
//! ```toml
//! seed = 7
//!
//! [curvature]
//! smoothing_sigma = 2.0
//! min_volume = 1e-6
//! polarity = "negated"
//!
//! [classifier]
//! negative_ratio = 3
//! lambda = 1e-4
//!
//! [discont]
//! min_length = 15.0
//!
//! [fusion]
//! p_min = 0.3
//!
//! [iron]
//! long_axis = 0.2
//!
//! [plan]
//! home = [0.0, 0.0]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classify::SvmHyper;
use crate::curvature::BumpParams;
use crate::discont::DiscontParams;
use crate::error::{Error, Result};
use crate::fusion::FusionParams;
use crate::geom::Point;
use crate::planner::IronSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    /// Negatives sampled per positive when building training sets.
    pub negative_ratio: usize,
    /// Fraction of corpus scenes held out for the accuracy printout.
    pub holdout_fraction: f64,
    pub lambda: f64,
    pub epochs: u32,
    pub batch_fraction: f64,
    pub positive_weight: f64,
    pub calibrate: bool,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        let h = SvmHyper::default();
        Self {
            negative_ratio: 3,
            holdout_fraction: 0.2,
            lambda: h.lambda,
            epochs: h.epochs,
            batch_fraction: h.batch_fraction,
            positive_weight: h.positive_weight,
            calibrate: h.calibrate,
        }
    }
}

impl ClassifierConfig {
    pub fn hyper(&self, seed: u64) -> SvmHyper {
        SvmHyper {
            lambda: self.lambda,
            epochs: self.epochs,
            batch_fraction: self.batch_fraction,
            positive_weight: self.positive_weight,
            seed,
            calibrate: self.calibrate,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanConfig {
    /// Iron start position in world meters; the grid origin when unset.
    pub home: Option<Point>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub curvature: BumpParams,
    pub classifier: ClassifierConfig,
    pub discont: DiscontParams,
    pub fusion: FusionParams,
    pub iron: IronSpec,
    pub plan: PlanConfig,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.curvature.validate()?;
        self.discont.validate()?;
        self.fusion.validate()?;
        self.iron.validate()?;
        let c = &self.classifier;
        if c.negative_ratio == 0 {
            return Err(Error::InvalidConfig(
                "classifier.negative_ratio must be at least 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&c.holdout_fraction) {
            return Err(Error::InvalidConfig(
                "classifier.holdout_fraction must lie in [0, 1)".into(),
            ));
        }
        if !(c.lambda > 0.0 && c.lambda.is_finite()) || c.epochs == 0 {
            return Err(Error::InvalidConfig(
                "classifier.lambda and epochs must be positive".into(),
            ));
        }
        if !(c.batch_fraction > 0.0 && c.batch_fraction <= 1.0) || !(c.positive_weight > 0.0) {
            return Err(Error::InvalidConfig(
                "classifier.batch_fraction must lie in (0, 1] and positive_weight be positive"
                    .into(),
            ));
        }
        if let Some(h) = self.plan.home {
            if !(h[0].is_finite() && h[1].is_finite()) {
                return Err(Error::InvalidConfig("plan.home must be finite".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(
            PipelineConfig::from_toml_str("").unwrap(),
            PipelineConfig::default()
        );
    }

    #[test]
    fn defaults_round_trip() {
        let cfg = PipelineConfig::default();
        assert_eq!(
            PipelineConfig::from_toml_str(&cfg.to_toml_string()).unwrap(),
            cfg
        );
    }

    #[test]
    fn doc_example_parses() {
        let text = "seed = 7\n[curvature]\nsmoothing_sigma = 2.0\nmin_volume = 1e-6\npolarity = \"negated\"\n\
                    [classifier]\nnegative_ratio = 3\nlambda = 1e-4\n[discont]\nmin_length = 15.0\n\
                    [fusion]\np_min = 0.3\n[iron]\nlong_axis = 0.2\n[plan]\nhome = [0.0, 0.0]\n";
        let cfg = PipelineConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.plan.home, Some([0.0, 0.0]));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            "bogus = 1",
            "[fusion]\npmin = 0.3",
            "[nope]\nx = 1",
            "[iron]\nspeed = 1.0",
        ] {
            assert!(
                matches!(
                    PipelineConfig::from_toml_str(text),
                    Err(Error::InvalidConfig(_))
                ),
                "{text}"
            );
        }
    }

    #[test]
    fn invalid_values_are_rejected() {
        for text in [
            "[fusion]\np_min = 1.5",
            "[iron]\nshort_axis = 0.3",
            "[iron]\npress_depth = 0.1",
            "[classifier]\nnegative_ratio = 0",
            "[discont]\nnms_rho = 0.0",
        ] {
            assert!(PipelineConfig::from_toml_str(text).is_err(), "{text}");
        }
    }
}
