//! Versioned checkpoint files in the safetensors container.
//!
//! Every parameter and normalization buffer is stored as an `f32` tensor
//! keyed by its dotted layer path. Training metadata travels as one JSON
//! string under the `coae` metadata key.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use safetensors::tensor::{Dtype, TensorView};
use safetensors::SafeTensors;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::DaeVariant;
use crate::nn::{Param, Parameterized};
use crate::profile::NetProfile;

pub const FORMAT_VERSION: u32 = 1;
const META_KEY: &str = "coae";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Cae,
    Dae,
    Visor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub kind: ModelKind,
    pub profile: NetProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<DaeVariant>,
    pub stage: String,
    pub step: u64,
    pub corpus_seed: u64,
    /// Patch size the model was trained at.
    pub patch: (usize, usize),
    /// Kind-specific extras (VISOR's MOS range, ablation tag, ...).
    #[serde(default)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl CheckpointMeta {
    pub fn new(kind: ModelKind, profile: NetProfile, stage: impl Into<String>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            kind,
            profile,
            variant: None,
            stage: stage.into(),
            step: 0,
            corpus_seed: 0,
            patch: (0, 0),
            extra: BTreeMap::new(),
        }
    }

    pub fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Checkpoint(format!("expected a {kind:?} checkpoint, found {:?}", self.kind)));
        }
        Ok(())
    }
}

/// An in-memory checkpoint: metadata plus named arrays.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub tensors: BTreeMap<String, (Vec<usize>, Vec<f32>)>,
}

impl Checkpoint {
    pub fn from_model(model: &mut dyn Parameterized<f32>, meta: CheckpointMeta) -> Self {
        let mut tensors = BTreeMap::new();
        model.visit("", &mut |name, p| {
            tensors.insert(name.to_owned(), (p.shape.clone(), p.value.clone()));
        });
        Self { meta, tensors }
    }

    /// Copies stored arrays into `model`. Names and shapes must match
    /// exactly in both directions.
    pub fn apply_to(&self, model: &mut dyn Parameterized<f32>) -> Result<()> {
        let mut seen = 0usize;
        let mut failure: Option<String> = None;
        model.visit("", &mut |name, p: &mut Param<f32>| {
            if failure.is_some() {
                return;
            }
            match self.tensors.get(name) {
                None => failure = Some(format!("checkpoint has no array `{name}`")),
                Some((shape, _)) if *shape != p.shape => {
                    failure = Some(format!("array `{name}` has shape {shape:?}, model expects {:?}", p.shape))
                }
                Some((_, values)) => {
                    p.value.copy_from_slice(values);
                    seen += 1;
                }
            }
        });
        if let Some(msg) = failure {
            return Err(Error::Checkpoint(msg));
        }
        if seen != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {} arrays, model consumed {seen}",
                self.tensors.len()
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_string(&self.meta).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let raw: Vec<(String, Vec<usize>, Vec<u8>)> = self
            .tensors
            .iter()
            .map(|(k, (shape, v))| (k.clone(), shape.clone(), v.iter().flat_map(|x| x.to_le_bytes()).collect()))
            .collect();
        let views = raw
            .iter()
            .map(|(k, shape, bytes)| {
                TensorView::new(Dtype::F32, shape.clone(), bytes)
                    .map(|v| (k.as_str(), v))
                    .map_err(|e| Error::Checkpoint(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        safetensors::serialize(views, Some(HashMap::from([(META_KEY.to_owned(), meta)])))
            .map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let meta = read_meta_bytes(bytes)?;
        let st = SafeTensors::deserialize(bytes).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut tensors = BTreeMap::new();
        for (name, view) in st.tensors() {
            if view.dtype() != Dtype::F32 {
                return Err(Error::Checkpoint(format!("array `{name}` is {:?}, expected F32", view.dtype())));
            }
            let values = view
                .data()
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.insert(name, (view.shape().to_vec(), values));
        }
        Ok(Self { meta, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }
}

fn read_meta_bytes(bytes: &[u8]) -> Result<CheckpointMeta> {
    let (_, header) = SafeTensors::read_metadata(bytes).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let json = header
        .metadata()
        .as_ref()
        .and_then(|m| m.get(META_KEY))
        .ok_or_else(|| Error::Checkpoint("missing checkpoint metadata".into()))?;
    let meta: CheckpointMeta = serde_json::from_str(json).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint format version {} (expected {FORMAT_VERSION})",
            meta.format_version
        )));
    }
    Ok(meta)
}
