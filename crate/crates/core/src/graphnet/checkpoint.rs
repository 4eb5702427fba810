//! Checkpoint container: JSON header plus flat little-endian f64 arrays,
//! shared by the graph network and the Hamiltonian variant.

use super::{FeatureLayout, GnError, GnModel, Variant};
use crate::nn::MlpParams;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"SDCK";
const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointKind {
    Gn,
    FlatHgn,
}

#[derive(Debug, Serialize, Deserialize)]
struct MlpHeader {
    name: String,
    layer_sizes: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    kind: CheckpointKind,
    variant: Option<Variant>,
    layout: FeatureLayout,
    law: Option<String>,
    mlps: Vec<MlpHeader>,
}

/// A deserialized checkpoint: named perceptrons plus model metadata.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub kind: CheckpointKind,
    pub variant: Option<Variant>,
    pub layout: FeatureLayout,
    pub law: Option<String>,
    pub mlps: Vec<(String, MlpParams)>,
}

impl Checkpoint {
    pub fn from_gn(model: &GnModel, law: Option<String>) -> Checkpoint {
        Checkpoint {
            kind: CheckpointKind::Gn,
            variant: Some(model.variant),
            layout: model.layout.clone(),
            law,
            mlps: vec![
                ("phi_e".into(), model.phi_e.clone()),
                ("phi_v".into(), model.phi_v.clone()),
            ],
        }
    }

    pub fn to_gn(&self) -> Result<GnModel, GnError> {
        if self.kind != CheckpointKind::Gn {
            return Err(GnError::Schema("checkpoint is not a graph network".into()));
        }
        let variant = self
            .variant
            .ok_or_else(|| GnError::Schema("graph network checkpoint missing variant".into()))?;
        let find = |name: &str| -> Result<MlpParams, GnError> {
            self.mlps
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, p)| p.clone())
                .ok_or_else(|| GnError::Schema(format!("checkpoint missing mlp '{name}'")))
        };
        Ok(GnModel {
            variant,
            layout: self.layout.clone(),
            phi_e: find("phi_e")?,
            phi_v: find("phi_v")?,
        })
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), GnError> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = Header {
        schema_version: SCHEMA_VERSION,
        kind: ckpt.kind,
        variant: ckpt.variant,
        layout: ckpt.layout.clone(),
        law: ckpt.law.clone(),
        mlps: ckpt
            .mlps
            .iter()
            .map(|(name, p)| MlpHeader {
                name: name.clone(),
                layer_sizes: p.layer_sizes.clone(),
            })
            .collect(),
    };
    let header_bytes =
        serde_json::to_vec(&header).map_err(|e| GnError::Schema(format!("header encode: {e}")))?;
    w.write_all(MAGIC)?;
    w.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    for (_, mlp) in &ckpt.mlps {
        for v in mlp.flat() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, GnError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(GnError::Schema("bad magic, not a checkpoint file".into()));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut header_bytes = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut header_bytes)?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| GnError::Schema(format!("header decode: {e}")))?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(GnError::Schema(format!(
            "schema version {} unsupported",
            header.schema_version
        )));
    }
    let mut mlps = Vec::with_capacity(header.mlps.len());
    for mh in &header.mlps {
        if mh.layer_sizes.len() != 4 {
            return Err(GnError::Schema(format!(
                "mlp '{}' has {} layer sizes, expected 4",
                mh.name,
                mh.layer_sizes.len()
            )));
        }
        let mut params = MlpParams::zeros(&mh.layer_sizes);
        let n = params.n_params();
        let mut buf = vec![0u8; n * 8];
        r.read_exact(&mut buf)?;
        let flat: Vec<f64> = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params
            .set_flat(&flat)
            .map_err(|e| GnError::Schema(format!("mlp '{}': {e}", mh.name)))?;
        mlps.push((mh.name.clone(), params));
    }
    Ok(Checkpoint {
        kind: header.kind,
        variant: header.variant,
        layout: header.layout,
        law: header.law,
        mlps,
    })
}
