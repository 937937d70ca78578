//! Dense 64-bit float tensors in row-major order.
//!
//! Tensors here are plain value holders; differentiable computation happens
//! on a [`Tape`](super::tape::Tape). A tensor owns its gradient buffer when
//! `requires_grad` is set, and the tape's backward pass accumulates into it.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    /// Constant tensor (no gradient buffer).
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::shape(format!("zero-sized dimension in {shape:?}")));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} wants {numel} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data, requires_grad: false, grad: None })
    }

    /// Trainable tensor with a zeroed gradient buffer.
    pub fn with_grad(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let mut t = Tensor::new(shape, data)?;
        t.requires_grad = true;
        t.grad = Some(vec![0.0; t.data.len()]);
        Ok(t)
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        Tensor::new(shape, vec![0.0; numel])
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::new(vec![1], vec![value]).unwrap()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub(crate) fn accumulate_grad(&mut self, delta: &[f64]) {
        if let Some(g) = &mut self.grad {
            debug_assert_eq!(g.len(), delta.len());
            for (a, b) in g.iter_mut().zip(delta) {
                *a += b;
            }
        }
    }

    /// Rows and columns of a 2-D tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            other => Err(Error::shape(format!("expected 2-D tensor, got {other:?}"))),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Named, index-addressed set of model parameters.
///
/// Insertion order is the declaration order used both by the optimizer and by
/// the checkpoint format, so it must stay stable for a given configuration.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    tensors: Vec<Tensor>,
    names: Vec<String>,
}

/// Handle into a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        self.tensors.push(tensor);
        self.names.push(name.into());
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Ids in declaration order.
    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.tensors.len()).map(ParamId)
    }

    /// Ids of parameters that participate in optimization.
    pub fn trainable_ids(&self) -> Vec<ParamId> {
        self.ids().filter(|&id| self.get(id).requires_grad()).collect()
    }

    pub fn zero_grads(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }
}

/// Boolean matrix used for attention and softmax masking. `true` = visible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "mask {rows}x{cols} wants {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Mask { rows, cols, data })
    }

    pub fn all_visible(rows: usize, cols: usize) -> Self {
        Mask { rows, cols, data: vec![true; rows * cols] }
    }

    /// Lower-triangular mask: row i sees columns 0..=i.
    pub fn causal(n: usize) -> Self {
        let mut data = vec![false; n * n];
        for i in 0..n {
            for j in 0..=i {
                data[i * n + j] = true;
            }
        }
        Mask { rows: n, cols: n, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn visible(&self, row: usize, col: usize) -> bool {
        self.data[row * self.cols + col]
    }

    pub fn row_has_visible(&self, row: usize) -> bool {
        (0..self.cols).any(|c| self.visible(row, c))
    }
}
