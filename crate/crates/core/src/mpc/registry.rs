use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use super::{Algorithm, ClassicScheme, MpcError, MpcScheme, MultiStepScheme, ShrinkingScheme};
use crate::model::FsClf;

/// Creates a scheme for a horizon and candidate.
pub type SchemeFactory = Arc<dyn Fn(usize, &FsClf) -> Result<Box<dyn MpcScheme>, MpcError> + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemeInfo {
    pub name: String,
    pub description: String,
}

struct Entry {
    description: String,
    factory: SchemeFactory,
}

/// Named MPC schemes, selectable at runtime.
#[derive(Default)]
pub struct SchemeRegistry {
    entries: BTreeMap<String, Entry>,
}

impl SchemeRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry holding the three built-in schemes.
    pub fn with_builtin() -> Self {
        let mut reg = Self::new();
        reg.register(
            Algorithm::MultiStep.name(),
            "contractive multi-step MPC: solve every M steps, apply the whole sequence",
            Arc::new(|h, v: &FsClf| Ok(Box::new(MultiStepScheme::new(h, v)?) as Box<dyn MpcScheme>)),
        );
        reg.register(
            Algorithm::ShrinkingUpdated.name(),
            "contractive MPC re-optimized on shrinking horizons M, M-1, ..., 1",
            Arc::new(|h, v: &FsClf| Ok(Box::new(ShrinkingScheme::new(h, v)?) as Box<dyn MpcScheme>)),
        );
        reg.register(
            Algorithm::Classic.name(),
            "fixed-horizon MPC without terminal ingredients, first input applied",
            Arc::new(|h, _: &FsClf| Ok(Box::new(ClassicScheme::new(h)?) as Box<dyn MpcScheme>)),
        );
        reg
    }

    /// Adds or replaces a scheme.
    pub fn register(&mut self, name: &str, description: &str, factory: SchemeFactory) {
        self.entries.insert(
            name.to_string(),
            Entry {
                description: description.to_string(),
                factory,
            },
        );
    }

    pub fn create(&self, name: &str, horizon: usize, fsclf: &FsClf) -> Result<Box<dyn MpcScheme>, MpcError> {
        let entry = self
            .entries
            .get(name)
            .ok_or_else(|| MpcError::UnknownScheme(name.to_string()))?;
        (entry.factory)(horizon, fsclf)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn list(&self) -> Vec<SchemeInfo> {
        self.entries
            .iter()
            .map(|(name, e)| SchemeInfo {
                name: name.clone(),
                description: e.description.clone(),
            })
            .collect()
    }
}

impl fmt::Debug for SchemeRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.entries.keys()).finish()
    }
}
