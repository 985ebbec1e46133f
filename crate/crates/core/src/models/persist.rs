use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelError, TrainedModel};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Serialize)]
struct DocumentRef<'a> {
    schema_version: &'a str,
    #[serde(flatten)]
    model: &'a TrainedModel,
}

#[derive(Deserialize)]
struct Header {
    schema_version: String,
}

#[derive(Deserialize)]
struct Document {
    #[serde(flatten)]
    model: TrainedModel,
}

pub fn model_to_json(model: &TrainedModel) -> String {
    serde_json::to_string(&DocumentRef {
        schema_version: SCHEMA_VERSION,
        model,
    })
    .expect("model serializes")
}

pub fn model_from_json(text: &str) -> Result<TrainedModel, ModelError> {
    let header: Header = serde_json::from_str(text).map_err(|e| ModelError::Corrupt(e.to_string()))?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(ModelError::VersionMismatch {
            found: header.schema_version,
            expected: SCHEMA_VERSION.to_string(),
        });
    }
    let doc: Document = serde_json::from_str(text).map_err(|e| ModelError::Corrupt(e.to_string()))?;
    Ok(doc.model)
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<(), ModelError> {
    fs::write(path, model_to_json(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TrainedModel, ModelError> {
    model_from_json(&fs::read_to_string(path)?)
}
