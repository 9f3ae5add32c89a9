use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, VdmError};

/// Record of a simulated or prepared dataset directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub generator: String,
    pub seed: u64,
    pub d_x: usize,
    pub seq_len: usize,
    pub prefix_len: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    #[serde(default)]
    pub n_groups: usize,
    #[serde(default)]
    pub group_size: usize,
    pub train_file: String,
    pub val_file: String,
    pub test_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups_file: Option<String>,
}

impl Manifest {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| VdmError::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let m: Self = toml::from_str(text).map_err(|e| VdmError::Config(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| VdmError::file(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_x == 0 {
            return Err(VdmError::Config("manifest d_x must be positive".into()));
        }
        if self.prefix_len == 0 || self.prefix_len >= self.seq_len {
            return Err(VdmError::Config(format!(
                "manifest prefix_len {} must be in 1..{}",
                self.prefix_len, self.seq_len
            )));
        }
        Ok(())
    }

    /// Hex SHA-256 of the serialized manifest.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let m = Manifest {
            generator: "lorenz".into(),
            seed: 7,
            d_x: 3,
            seq_len: 100,
            prefix_len: 10,
            n_train: 5000,
            n_val: 200,
            n_test: 800,
            n_groups: 10,
            group_size: 100,
            train_file: "train.csv".into(),
            val_file: "val.csv".into(),
            test_file: "test.csv".into(),
            groups_file: Some("groups.csv".into()),
        };
        let back = Manifest::from_toml(&m.to_toml().unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.hash().unwrap(), m.hash().unwrap());
        let bad = Manifest {
            prefix_len: 100,
            ..m
        };
        assert!(bad.validate().is_err());
    }
}
