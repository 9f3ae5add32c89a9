use serde::{Deserialize, Serialize};

use super::metrics::MetricValue;
use crate::error::{Result, VdmError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub name: String,
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
}

/// Evaluation results with the seed and checkpoint they came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub checkpoint_id: String,
    pub seed: u64,
    #[serde(default)]
    pub notes: Vec<String>,
    #[serde(default, rename = "metric")]
    pub metrics: Vec<MetricRow>,
}

impl MetricReport {
    pub fn push(&mut self, name: &str, v: MetricValue) {
        self.metrics.push(MetricRow {
            name: name.into(),
            value: v.value,
            stderr: v.stderr,
            n: v.n,
        });
    }

    pub fn get(&self, name: &str) -> Option<&MetricRow> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| VdmError::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| VdmError::Config(e.to_string()))
    }
}
