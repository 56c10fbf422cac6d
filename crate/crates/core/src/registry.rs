//! Named hooks that configuration files refer to: custom transformers, input
//! processors, dependency functions, custom scorers and feature extractors.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::constraints::DependencyFn;
use crate::error::{Error, Result};
use crate::model::features::{DomainStats, FeatureExtractor};
use crate::processor::{InputProcessor, TldSplit};
use crate::scoring::ScoreFunction;
use crate::transform::{BinaryHeaderDemo, CustomTransformer};

#[derive(Default, Clone)]
pub struct Registry {
    transformers: BTreeMap<String, Arc<dyn CustomTransformer>>,
    processors: BTreeMap<String, Arc<dyn InputProcessor>>,
    dependencies: BTreeMap<String, Arc<DependencyFn>>,
    scorers: BTreeMap<String, Arc<dyn ScoreFunction>>,
    extractors: BTreeMap<String, Arc<dyn FeatureExtractor>>,
}

fn insert<T: ?Sized>(map: &mut BTreeMap<String, Arc<T>>, name: &str, value: Arc<T>) -> Result<()> {
    if map.contains_key(name) {
        return Err(Error::DuplicateName(name.to_string()));
    }
    map.insert(name.to_string(), value);
    Ok(())
}

impl Registry {
    pub fn empty() -> Self {
        Registry::default()
    }

    /// Registry with the bundled hooks: `tld_split`, `binary_header` and
    /// `domain_stats`.
    pub fn with_builtins() -> Self {
        let mut reg = Registry::default();
        reg.processors.insert("tld_split".into(), Arc::new(TldSplit));
        reg.transformers.insert("binary_header".into(), Arc::new(BinaryHeaderDemo));
        reg.extractors.insert("domain_stats".into(), Arc::new(DomainStats));
        reg
    }

    pub fn register_custom_transformer(&mut self, name: &str, t: Arc<dyn CustomTransformer>) -> Result<()> {
        if matches!(name, "numeric" | "boolean" | "categorical" | "onehot" | "string") {
            return Err(Error::DuplicateName(name.to_string()));
        }
        insert(&mut self.transformers, name, t)
    }

    pub fn register_processor(&mut self, name: &str, p: Arc<dyn InputProcessor>) -> Result<()> {
        insert(&mut self.processors, name, p)
    }

    pub fn register_dependency(&mut self, name: &str, f: Arc<DependencyFn>) -> Result<()> {
        if crate::constraints::DependencyKind::builtin(name).is_some() {
            return Err(Error::DuplicateName(name.to_string()));
        }
        insert(&mut self.dependencies, name, f)
    }

    pub fn register_scorer(&mut self, name: &str, s: Arc<dyn ScoreFunction>) -> Result<()> {
        insert(&mut self.scorers, name, s)
    }

    pub fn register_extractor(&mut self, name: &str, e: Arc<dyn FeatureExtractor>) -> Result<()> {
        insert(&mut self.extractors, name, e)
    }

    pub fn transformer(&self, name: &str) -> Result<Arc<dyn CustomTransformer>> {
        self.transformers
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownTransformer(name.to_string()))
    }

    pub fn processor(&self, name: &str) -> Result<Arc<dyn InputProcessor>> {
        self.processors
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownProcessor(name.to_string()))
    }

    pub fn dependency(&self, name: &str) -> Option<Arc<DependencyFn>> {
        self.dependencies.get(name).cloned()
    }

    pub fn scorer(&self, name: &str) -> Option<Arc<dyn ScoreFunction>> {
        self.scorers.get(name).cloned()
    }

    pub fn extractor(&self, name: &str) -> Option<Arc<dyn FeatureExtractor>> {
        self.extractors.get(name).cloned()
    }
}
