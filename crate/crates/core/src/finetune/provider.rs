use std::path::{Path, PathBuf};

use ctaug_autograd::{Archive, Group, ParamStore, Scalar};

use super::{BackboneSpec, FinetuneError};

pub const WEIGHTS_HEADER: &str = "CTAUG-WEIGHTS-v1";

/// Source of pretrained body parameters, keyed by parameter name.
pub trait WeightProvider {
    fn body_weights(&self, spec: &BackboneSpec) -> Result<Archive, FinetuneError>;
}

/// Reads `<root>/<id>-<variant>.weights` archives.
#[derive(Clone, Debug)]
pub struct WeightDir {
    root: PathBuf,
}

impl WeightDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path_for(&self, spec: &BackboneSpec) -> PathBuf {
        self.root
            .join(format!("{}-{}.weights", spec.id.as_str(), spec.variant.as_str()))
    }
}

impl WeightProvider for WeightDir {
    fn body_weights(&self, spec: &BackboneSpec) -> Result<Archive, FinetuneError> {
        let path = self.path_for(spec);
        if !path.is_file() {
            return Err(FinetuneError::MissingWeights(format!("{} ({})", spec.id, path.display())));
        }
        Archive::load(&path, WEIGHTS_HEADER).map_err(|e| FinetuneError::Checkpoint(e.to_string()))
    }
}

/// Provider with no weights; only specs with `pretrained: false` build.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoPretrained;

impl WeightProvider for NoPretrained {
    fn body_weights(&self, spec: &BackboneSpec) -> Result<Archive, FinetuneError> {
        Err(FinetuneError::MissingWeights(spec.id.to_string()))
    }
}

/// Writes the body-group parameters of `store` as a provider archive.
pub fn export_body_weights<T: Scalar>(store: &ParamStore<T>, path: &Path) -> Result<(), FinetuneError> {
    let mut archive = Archive::new(WEIGHTS_HEADER);
    for (_, p) in store.iter().filter(|(_, p)| p.group == Group::Body) {
        archive.put(p.name.clone(), &p.value);
    }
    archive.save(path).map_err(|e| FinetuneError::Checkpoint(e.to_string()))
}

/// Overwrites every body parameter with the archive's tensor of the same name.
pub(crate) fn load_body_weights<T: Scalar>(store: &mut ParamStore<T>, archive: &Archive) -> Result<(), FinetuneError> {
    let ids: Vec<_> = store.ids().filter(|&id| store.param(id).group == Group::Body).collect();
    for id in ids {
        let name = store.param(id).name.clone();
        if !archive.contains(&name) {
            return Err(FinetuneError::MissingWeights(format!("tensor `{name}`")));
        }
        let t = archive.get::<T>(&name)?;
        if t.shape() != store.value(id).shape() {
            return Err(FinetuneError::Shape(format!(
                "pretrained `{name}` has shape {:?}, expected {:?}",
                t.shape(),
                store.value(id).shape()
            )));
        }
        *store.value_mut(id) = t;
    }
    Ok(())
}
