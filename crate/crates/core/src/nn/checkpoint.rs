//! Parameter checkpoints: a JSON container holding a flat list of named f64
//! tensors. serde_json prints shortest-round-trip decimals, so save/load is
//! bit-exact for finite f64 values.
//!
//! Layout:
//! ```json
//! {
//!   "format": "cads-checkpoint-v1",
//!   "model": "mlp" | "conv",
//!   "meta": { ... architecture fields ... },
//!   "tensors": [ { "name": "w0", "shape": [2, 3], "data": [ ... ] }, ... ]
//! }
//! ```

use crate::error::{CoreError, Result};
use crate::nn::{ConvNetParams, MlpParams, ModelParams};
use serde::{Deserialize, Serialize};
use std::path::Path;

const FORMAT: &str = "cads-checkpoint-v1";

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    model: String,
    meta: Meta,
    tensors: Vec<TensorRecord>,
}

#[derive(Serialize, Deserialize, Default)]
struct Meta {
    #[serde(skip_serializing_if = "Option::is_none")]
    layer_dims: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    class_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    normalize: Option<(f64, f64)>,
}

pub fn to_json(params: &ModelParams) -> Result<String> {
    let (model, meta) = match params {
        ModelParams::Mlp(m) => (
            "mlp".to_string(),
            Meta { layer_dims: Some(m.layer_dims().to_vec()), ..Default::default() },
        ),
        ModelParams::Conv(c) => (
            "conv".to_string(),
            Meta {
                class_count: Some(c.class_count()),
                normalize: c.normalize(),
                ..Default::default()
            },
        ),
    };
    let tensors = params
        .tensors()
        .into_iter()
        .map(|(name, shape, data)| TensorRecord { name, shape, data: data.to_vec() })
        .collect();
    let file = CheckpointFile { format: FORMAT.into(), model, meta, tensors };
    Ok(serde_json::to_string(&file)?)
}

pub fn from_json(text: &str) -> Result<ModelParams> {
    let file: CheckpointFile = serde_json::from_str(text)?;
    if file.format != FORMAT {
        return Err(CoreError::config(format!("unknown checkpoint format {:?}", file.format)));
    }
    let mut params = match file.model.as_str() {
        "mlp" => {
            let dims = file
                .meta
                .layer_dims
                .ok_or_else(|| CoreError::config("mlp checkpoint missing layer_dims"))?;
            ModelParams::Mlp(MlpParams::new_zeros(&dims))
        }
        "conv" => {
            let classes = file
                .meta
                .class_count
                .ok_or_else(|| CoreError::config("conv checkpoint missing class_count"))?;
            ModelParams::Conv(ConvNetParams::new_zeros(classes, file.meta.normalize))
        }
        other => return Err(CoreError::config(format!("unknown model kind {other:?}"))),
    };
    {
        let expected: Vec<(String, usize)> = params
            .tensors()
            .into_iter()
            .map(|(n, _, d)| (n, d.len()))
            .collect();
        let mut views = params.tensors_mut();
        if file.tensors.len() != views.len() {
            return Err(CoreError::config("checkpoint tensor count mismatch"));
        }
        for (i, rec) in file.tensors.iter().enumerate() {
            let (ref name, len) = expected[i];
            if rec.name != *name || rec.data.len() != len {
                return Err(CoreError::config(format!(
                    "checkpoint tensor {:?} does not match expected {:?} ({} values)",
                    rec.name, name, len
                )));
            }
            views[i].copy_from_slice(&rec.data);
        }
    }
    Ok(params)
}

pub fn save(params: &ModelParams, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(params)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ModelParams> {
    from_json(&std::fs::read_to_string(path)?)
}
