//! JSON report: the single machine-readable output of `detect` and `plan`.
//!
//! Keys are emitted in sorted order and floats in shortest round-trip form,
//! so a fixed input produces byte-identical output. Stage timings are only
//! included on request because they are the one non-deterministic field.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::curvature::{BumpDiagnostics, HeightBump};
use crate::error::{Error, Result};
use crate::fusion::FusedWrinkle;
use crate::mixture::BumpMixture;
use crate::planner::IroningPlan;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub origin: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub schema_version: u32,
    /// Input name to lowercase hex SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    pub config: PipelineConfig,
    pub grid: GridInfo,
    pub bumps: Vec<HeightBump>,
    pub bump_diagnostics: BumpDiagnostics,
    pub mixture: BumpMixture,
    /// Marked pixels in the score map.
    pub marked_pixels: usize,
    /// Ranked by `p` descending.
    pub wrinkles: Vec<FusedWrinkle>,
    pub plan: IroningPlan,
    /// Seconds per stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<BTreeMap<String, f64>>,
}

impl Report {
    pub fn accepted(&self) -> impl Iterator<Item = &FusedWrinkle> {
        self.wrinkles.iter().filter(|w| w.accepted)
    }

    /// Pretty JSON with sorted keys and a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        let value = serde_json::to_value(self).map_err(|e| Error::Report(e.to_string()))?;
        let mut text =
            serde_json::to_string_pretty(&value).map_err(|e| Error::Report(e.to_string()))?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(text).map_err(|e| Error::Report(e.to_string()))?;
        if report.schema_version != SCHEMA_VERSION {
            return Err(Error::Report(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                report.schema_version
            )));
        }
        report.config.validate()?;
        Ok(report)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
