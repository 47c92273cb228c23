use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::array::DenseArray;
use crate::error::{NumericError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub value: DenseArray,
    pub trainable: bool,
}

/// Named parameter arrays, keyed by dot-separated path and iterated in
/// lexicographic order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamTree {
    entries: BTreeMap<String, ParamEntry>,
}

impl ParamTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: DenseArray, trainable: bool) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(NumericError::Config(format!("duplicate parameter `{name}`")));
        }
        self.entries.insert(name, ParamEntry { value, trainable });
        Ok(())
    }

    pub fn entry(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.get(name)
    }

    pub fn get(&self, name: &str) -> Option<&DenseArray> {
        self.entries.get(name).map(|e| &e.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut DenseArray> {
        self.entries.get_mut(name).map(|e| &mut e.value)
    }

    pub fn set(&mut self, name: &str, value: DenseArray) -> Result<()> {
        let slot = self
            .get_mut(name)
            .ok_or_else(|| NumericError::MissingParam(name.to_string()))?;
        if slot.shape() != value.shape() {
            return Err(NumericError::Dimension {
                op: "set",
                lhs: slot.shape().to_vec(),
                rhs: value.shape().to_vec(),
            });
        }
        *slot = value;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut ParamEntry)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(|e| e.value.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(k, e)| {
                    (
                        k.clone(),
                        ParamEntry {
                            value: DenseArray::zeros(e.value.shape()),
                            trainable: e.trainable,
                        },
                    )
                })
                .collect(),
        }
    }

    /// Marks every parameter under `prefix` as trainable or frozen.
    pub fn set_trainable(&mut self, prefix: &str, trainable: bool) {
        for (name, e) in &mut self.entries {
            if name.starts_with(prefix) {
                e.trainable = trainable;
            }
        }
    }

    /// Same names, shapes and flags.
    pub fn same_layout(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((a, ea), (b, eb))| a == b && ea.value.shape() == eb.value.shape())
    }

    pub fn all_finite(&self) -> bool {
        self.entries.values().all(|e| e.value.is_finite())
    }

    /// Largest absolute element under `prefix`.
    pub fn max_abs(&self, prefix: &str) -> f64 {
        self.entries
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .flat_map(|(_, e)| e.value.data().iter().map(|v| v.abs()))
            .fold(0.0, f64::max)
    }
}
