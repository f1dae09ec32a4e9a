//! Model checkpoints: a JSON document with a format tag and version.
//!
//! ```json
//! { "format": "hwrel-model", "version": 1, "model": { "input": {...}, "layers": [...] } }
//! ```
//! Weight matrices are stored row-major as ndarray's serde form
//! (`{"v":1,"dim":[rows,cols],"data":[...]}`).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::Model;
use super::NetError;

pub const CHECKPOINT_FORMAT: &str = "hwrel-model";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: Model,
}

impl Checkpoint {
    pub fn new(model: Model) -> Self {
        Self { format: CHECKPOINT_FORMAT.into(), version: CHECKPOINT_VERSION, model }
    }
}

pub fn to_json(model: &Model) -> String {
    serde_json::to_string(&Checkpoint::new(model.clone())).expect("model serializes")
}

pub fn from_json(text: &str) -> Result<Model, NetError> {
    let ck: Checkpoint = serde_json::from_str(text).map_err(|e| NetError::Checkpoint(e.to_string()))?;
    if ck.format != CHECKPOINT_FORMAT {
        return Err(NetError::Checkpoint(format!("unknown format {:?}", ck.format)));
    }
    if ck.version != CHECKPOINT_VERSION {
        return Err(NetError::Checkpoint(format!("unsupported version {}", ck.version)));
    }
    ck.model.validate()?;
    Ok(ck.model)
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<(), NetError> {
    fs::write(path, to_json(model)).map_err(|e| NetError::Io(format!("{}: {e}", path.display())))
}

pub fn load_checkpoint(path: &Path) -> Result<Model, NetError> {
    let text = fs::read_to_string(path).map_err(|e| NetError::Io(format!("{}: {e}", path.display())))?;
    from_json(&text)
}
