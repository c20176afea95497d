//! JSON checkpoints.
//!
//! ```text
//! {
//!   "format": "abyss-checkpoint",
//!   "version": 1,
//!   "dtype": "f32",
//!   "config": { ...ModelConfig... },
//!   "tensors": [ { "name": "enc.conv_in.weight", "shape": [16, 1, 3, 3], "data": [...] }, ... ]
//! }
//! ```
//!
//! Tensors appear in model registration order. Loading rebuilds the model
//! from `config` and requires names and shapes to match exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::model::{Model, ModelConfig};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const FORMAT: &str = "abyss-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedTensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint<T> {
    pub format: String,
    pub version: u32,
    pub dtype: String,
    pub config: ModelConfig,
    pub tensors: Vec<NamedTensor<T>>,
}

impl<T: Scalar + Serialize + for<'de> Deserialize<'de>> Checkpoint<T> {
    pub fn from_model(model: &Model<T>) -> Self {
        let tensors = model
            .params()
            .iter()
            .map(|(_, name, t)| NamedTensor { name: name.to_string(), shape: t.shape().to_vec(), data: t.data().to_vec() })
            .collect();
        Self { format: FORMAT.into(), version: VERSION, dtype: T::NAME.into(), config: model.config().clone(), tensors }
    }

    pub fn into_model(self) -> Result<Model<T>> {
        if self.format != FORMAT || self.version != VERSION {
            return Err(NnError::Checkpoint(format!("unsupported format {} v{}", self.format, self.version)));
        }
        if self.dtype != T::NAME {
            return Err(NnError::Checkpoint(format!("stored dtype {} but loading as {}", self.dtype, T::NAME)));
        }
        let mut store = ParamStore::new();
        for t in self.tensors {
            let tensor = Tensor::new(&t.shape, t.data).map_err(|e| NnError::Checkpoint(format!("{}: {e}", t.name)))?;
            store.add(t.name, tensor);
        }
        Model::from_parts(self.config, store)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn save<T: Scalar + Serialize + for<'de> Deserialize<'de>>(model: &Model<T>, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, Checkpoint::from_model(model).to_json()?)?;
    Ok(())
}

pub fn load<T: Scalar + Serialize + for<'de> Deserialize<'de>>(path: &Path) -> Result<Model<T>> {
    let text = fs::read_to_string(path).map_err(|e| NnError::Checkpoint(format!("{}: {e}", path.display())))?;
    Checkpoint::from_json(&text)?.into_model()
}
