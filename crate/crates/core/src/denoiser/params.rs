use crate::error::{Error, Result};

/// One named parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// Network parameters in canonical order.
///
/// The order is fixed by the architecture definition and is the order used
/// on disk, so two sets built from the same config always line up.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterSet {
    tensors: Vec<ParamTensor>,
}

impl ParameterSet {
    pub fn new(tensors: Vec<ParamTensor>) -> Result<Self> {
        for t in &tensors {
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(Error::ShapeMismatch {
                    left: t.shape.clone(),
                    right: vec![t.data.len()],
                });
            }
        }
        Ok(Self { tensors })
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamTensor> {
        self.tensors.iter()
    }

    pub fn tensors(&self) -> &[ParamTensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [ParamTensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&ParamTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Number of arrays.
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalars.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    fn locate(&self, mut flat: usize) -> (usize, usize) {
        for (i, t) in self.tensors.iter().enumerate() {
            if flat < t.data.len() {
                return (i, flat);
            }
            flat -= t.data.len();
        }
        panic!("flat parameter index out of range");
    }

    /// Scalar at a position in the flattened canonical order.
    pub fn scalar(&self, flat: usize) -> f32 {
        let (i, j) = self.locate(flat);
        self.tensors[i].data[j]
    }

    pub fn set_scalar(&mut self, flat: usize, value: f32) {
        let (i, j) = self.locate(flat);
        self.tensors[i].data[j] = value;
    }

    /// Name of the array holding a flattened position.
    pub fn scalar_owner(&self, flat: usize) -> &str {
        &self.tensors[self.locate(flat).0].name
    }

    pub fn is_finite(&self) -> bool {
        self.tensors
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}
