//! Checkpoints: the binary parameter file plus a JSON manifest describing
//! how to rebuild the model.

use serde::{Deserialize, Serialize};

use super::descriptor::SetDescriptor;
use super::model::{build_gnn_from_problem, GnnConfig, GnnModel};
use crate::error::{Error, Result};
use crate::pe::{read_params, write_params};

pub const MANIFEST_FORMAT: &str = "pe-align-gnn";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub library_version: String,
    pub descriptors: Vec<SetDescriptor>,
    pub config: GnnConfig,
    pub in_width: usize,
    pub out_width: usize,
    pub scalar_count: usize,
}

impl Manifest {
    pub fn of(model: &GnnModel) -> Self {
        Self {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            library_version: env!("CARGO_PKG_VERSION").into(),
            descriptors: model.descriptors().to_vec(),
            config: model.config().clone(),
            in_width: model.in_width(),
            out_width: model.out_width(),
            scalar_count: model.scalar_count(),
        }
    }
}

/// Manifest JSON and parameter bytes.
pub fn to_checkpoint(model: &GnnModel) -> Result<(String, Vec<u8>)> {
    let json = serde_json::to_string_pretty(&Manifest::of(model))
        .map_err(|e| Error::Format(e.to_string()))?;
    Ok((json, write_params(&model.param_set())))
}

pub fn from_checkpoint(manifest: &str, params: &[u8]) -> Result<GnnModel> {
    let m: Manifest = serde_json::from_str(manifest).map_err(|e| Error::Format(format!("manifest: {e}")))?;
    if m.format != MANIFEST_FORMAT || m.version != MANIFEST_VERSION {
        return Err(Error::Format(format!(
            "unsupported manifest {} version {}",
            m.format, m.version
        )));
    }
    let mut model = build_gnn_from_problem(&m.descriptors, m.in_width, m.out_width, &m.config, 0)?;
    model
        .set_params(&read_params(params)?)
        .map_err(|e| Error::Format(e.to_string()))?;
    if model.scalar_count() != m.scalar_count {
        return Err(Error::Format("parameter count disagrees with the manifest".into()));
    }
    Ok(model)
}
