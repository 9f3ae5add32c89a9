//! Binary checkpoint container.
//!
//! Layout: magic `VDMCKPT\n`, format version (u32 LE), header length (u64 LE),
//! a JSON header, then every tensor listed in the header as f64 LE values.

use std::path::Path;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Normalizer;
use crate::diffcore::{DenseArray, ParameterStore};
use crate::error::{Result, VdmError};
use crate::nets::{Discriminator, Model, ModelConfig};
use crate::VdmRng;

pub const MAGIC: &[u8; 8] = b"VDMCKPT\n";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub manifest_hash: Option<String>,
    pub epoch: usize,
    pub val_nll: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    /// Word position as decimal text (it is a u128).
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &VdmRng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<VdmRng> {
        let mut rng = VdmRng::from_seed(self.seed);
        rng.set_stream(self.stream);
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|_| VdmError::Checkpoint("bad rng word position".into()))?;
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    store: String,
    name: String,
    kind: String,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    normalizer: Option<Normalizer>,
    provenance: Provenance,
    rng: RngState,
    model_step: u64,
    disc_step: u64,
    tensors: Vec<TensorEntry>,
}

/// Everything needed to resume training or to forecast.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model,
    pub disc: Discriminator,
    pub normalizer: Option<Normalizer>,
    pub provenance: Provenance,
    pub rng: RngState,
}

const KINDS: [&str; 3] = ["value", "first_moment", "second_moment"];

fn store_tensors<'a>(
    label: &str,
    store: &'a ParameterStore,
) -> impl Iterator<Item = (TensorEntry, &'a DenseArray)> + 'a {
    let label = label.to_string();
    store.ids().flat_map(move |id| {
        let arrays = [
            store.value(id),
            store.first_moment(id),
            store.second_moment(id),
        ];
        let label = label.clone();
        KINDS.iter().zip(arrays).map(move |(kind, a)| {
            (
                TensorEntry {
                    store: label.clone(),
                    name: store.name(id).to_string(),
                    kind: kind.to_string(),
                    shape: a.shape().to_vec(),
                },
                a,
            )
        })
    })
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let entries: Vec<(TensorEntry, &DenseArray)> = store_tensors("model", &self.model.store)
            .chain(store_tensors("disc", &self.disc.store))
            .collect();
        let header = Header {
            config: self.model.config.clone(),
            normalizer: self.normalizer.clone(),
            provenance: Provenance {
                val_nll: self.provenance.val_nll.filter(|v| v.is_finite()),
                ..self.provenance.clone()
            },
            rng: self.rng.clone(),
            model_step: self.model.store.step(),
            disc_step: self.disc.store.step(),
            tensors: entries.iter().map(|(e, _)| e.clone()).collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| VdmError::Checkpoint(e.to_string()))?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, a) in entries {
            for v in a.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| VdmError::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(VdmError::Checkpoint(format!(
                "format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(20..).ok_or_else(|| bad("truncated"))?;
        if body.len() < hlen {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..hlen])
            .map_err(|e| VdmError::Checkpoint(e.to_string()))?;
        let mut payload = &body[hlen..];

        // Architecture comes from the config; values come from the payload.
        let mut init = VdmRng::seed_from_u64(0);
        let mut model = Model::new(header.config.clone(), &mut init)?;
        let mut disc = Discriminator::for_model(&header.config, &mut init);
        let mut pending: Vec<Option<DenseArray>> = vec![None; 3];
        for entry in &header.tensors {
            let n: usize = entry.shape.iter().product();
            if payload.len() < 8 * n {
                return Err(bad("truncated payload"));
            }
            let data = payload[..8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            payload = &payload[8 * n..];
            let store = match entry.store.as_str() {
                "model" => &mut model.store,
                "disc" => &mut disc.store,
                other => return Err(VdmError::Checkpoint(format!("unknown store {other}"))),
            };
            let id = store
                .find(&entry.name)
                .ok_or_else(|| VdmError::Checkpoint(format!("unknown tensor {}", entry.name)))?;
            if store.value(id).shape() != entry.shape.as_slice() {
                return Err(VdmError::Checkpoint(format!(
                    "tensor {} has shape {:?}, expected {:?}",
                    entry.name,
                    entry.shape,
                    store.value(id).shape()
                )));
            }
            let a = DenseArray::new(entry.shape.clone(), data)?;
            let slot = KINDS
                .iter()
                .position(|k| *k == entry.kind)
                .ok_or_else(|| VdmError::Checkpoint(format!("unknown kind {}", entry.kind)))?;
            pending[slot] = Some(a);
            if slot == 2 {
                let (v, m, s) = (pending[0].take(), pending[1].take(), pending[2].take());
                match (v, m, s) {
                    (Some(v), Some(m), Some(s)) => {
                        *store.value_mut(id) = v;
                        store.set_optimizer_state(id, m, s)?;
                    }
                    _ => return Err(bad("tensor triple out of order")),
                }
            }
        }
        if !payload.is_empty() {
            return Err(bad("trailing bytes"));
        }
        let expected = 3 * (model.store.len() + disc.store.len());
        if header.tensors.len() != expected {
            return Err(bad("tensor count does not match the configuration"));
        }
        model.store.set_step(header.model_step);
        disc.store.set_step(header.disc_step);
        Ok(Self {
            model,
            disc,
            normalizer: header.normalizer,
            provenance: header.provenance,
            rng: header.rng,
        })
    }

    pub fn save(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes()?;
        super::fsio::write_atomic(path, &bytes)?;
        Ok(checkpoint_id(&bytes))
    }

    /// Loads a checkpoint and returns it with its id.
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let bytes = std::fs::read(path).map_err(|e| VdmError::file(path, e))?;
        Ok((Self::from_bytes(&bytes)?, checkpoint_id(&bytes)))
    }
}

/// Hex SHA-256 of the checkpoint bytes.
pub fn checkpoint_id(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
