use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A named block inside a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub name: String,
    pub offset: usize,
    pub dims: Vec<usize>,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Maps flat indices to structured slots.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParamShape {
    slots: Vec<Slot>,
}

impl ParamShape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(mut self, name: impl Into<String>, dims: &[usize]) -> Self {
        let offset = self.len();
        self.slots.push(Slot {
            name: name.into(),
            offset,
            dims: dims.to_vec(),
        });
        self
    }

    pub fn len(&self) -> usize {
        self.slots.last().map_or(0, |s| s.offset + s.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn slot(&self, name: &str) -> Option<&Slot> {
        self.slots.iter().find(|s| s.name == name)
    }

    /// Concatenates per-slot blocks in slot order.
    pub fn flatten(&self, blocks: &[&[f64]]) -> Result<ParamVector> {
        if blocks.len() != self.slots.len() {
            return Err(Error::Contract(format!(
                "expected {} parameter blocks, got {}",
                self.slots.len(),
                blocks.len()
            )));
        }
        let mut values = Vec::with_capacity(self.len());
        for (slot, block) in self.slots.iter().zip(blocks) {
            if block.len() != slot.len() {
                return Err(Error::Contract(format!(
                    "block `{}` has {} entries, expected {}",
                    slot.name,
                    block.len(),
                    slot.len()
                )));
            }
            values.extend_from_slice(block);
        }
        Ok(ParamVector {
            shape: self.clone(),
            values,
        })
    }
}

/// All trainable parameters of one player, flattened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub shape: ParamShape,
    pub values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(shape: ParamShape) -> Self {
        let values = vec![0.0; shape.len()];
        ParamVector { shape, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn block(&self, name: &str) -> &[f64] {
        let slot = self.shape.slot(name).expect("unknown parameter slot");
        &self.values[slot.range()]
    }

    pub fn block_mut(&mut self, name: &str) -> &mut [f64] {
        let range = self.shape.slot(name).expect("unknown parameter slot").range();
        &mut self.values[range]
    }

    /// Per-slot views in slot order; inverse of [`ParamShape::flatten`].
    pub fn unflatten(&self) -> Vec<&[f64]> {
        self.shape
            .slots()
            .iter()
            .map(|s| &self.values[s.range()])
            .collect()
    }
}
