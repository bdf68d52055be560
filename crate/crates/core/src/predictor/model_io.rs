use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{hidden_dim, input_dim, Normalization, RbfnModel};
use crate::{Error, Result};

pub const MODEL_FORMAT: &str = "dppsd-rbfn";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    version: u32,
    n_t: usize,
    constellation_size: usize,
    input_dim: usize,
    hidden_dim: usize,
    output_dim: usize,
    input_mean: Vec<f64>,
    input_scale: Vec<f64>,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

pub fn model_to_json(model: &RbfnModel) -> String {
    let doc = ModelDocument {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        n_t: model.n_t,
        constellation_size: model.constellation_size,
        input_dim: model.input_dim(),
        hidden_dim: model.hidden_dim(),
        output_dim: model.output_dim(),
        input_mean: model.normalization.mean.clone(),
        input_scale: model.normalization.scale.clone(),
        w1: model.w1.clone(),
        b1: model.b1.clone(),
        w2: model.w2.clone(),
        b2: model.b2.clone(),
    };
    serde_json::to_string_pretty(&doc).expect("model document serializes")
}

pub fn model_from_json(text: &str) -> Result<RbfnModel> {
    let doc: ModelDocument =
        serde_json::from_str(text).map_err(|e| Error::format("document", e.to_string()))?;
    if doc.format != MODEL_FORMAT {
        return Err(Error::format("format", format!("expected `{MODEL_FORMAT}`, found `{}`", doc.format)));
    }
    if doc.version != MODEL_VERSION {
        return Err(Error::format("version", format!("unsupported version {}", doc.version)));
    }
    if doc.n_t == 0 {
        return Err(Error::format("n_t", "must be positive"));
    }
    if doc.constellation_size == 0 {
        return Err(Error::format("constellation_size", "must be positive"));
    }
    let (i, h, o) = (
        input_dim(doc.n_t),
        hidden_dim(doc.n_t, doc.constellation_size),
        doc.constellation_size,
    );
    let expect = |field: &str, found: usize, expected: usize| -> Result<()> {
        if found == expected {
            Ok(())
        } else {
            Err(Error::format(field, format!("expected {expected}, found {found}")))
        }
    };
    expect("input_dim", doc.input_dim, i)?;
    expect("hidden_dim", doc.hidden_dim, h)?;
    expect("output_dim", doc.output_dim, o)?;
    expect("input_mean", doc.input_mean.len(), i)?;
    expect("input_scale", doc.input_scale.len(), i)?;
    expect("w1", doc.w1.len(), h * i)?;
    expect("b1", doc.b1.len(), h)?;
    expect("w2", doc.w2.len(), o * h)?;
    expect("b2", doc.b2.len(), o)?;
    if doc.input_scale.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::format("input_scale", "entries must be positive"));
    }
    let model = RbfnModel {
        n_t: doc.n_t,
        constellation_size: doc.constellation_size,
        normalization: Normalization {
            mean: doc.input_mean,
            scale: doc.input_scale,
        },
        w1: doc.w1,
        b1: doc.b1,
        w2: doc.w2,
        b2: doc.b2,
    };
    if !model.is_finite() {
        return Err(Error::format("parameters", "non-finite value"));
    }
    Ok(model)
}

/// Writes the model as JSON through a temporary file and a rename.
pub fn save_model(model: &RbfnModel, path: &Path) -> Result<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, model_to_json(model))?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<RbfnModel> {
    model_from_json(&fs::read_to_string(path)?)
}
