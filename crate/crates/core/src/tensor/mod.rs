//! Dense 64-bit tensors, a define-by-run gradient tape, LSTM primitives and
//! the Adam optimizer.
//!
//! Tensors are rank 0, 1 or 2 and stored row-major. A [`Graph`] records the
//! operations applied to [`Var`] handles and replays them backward to produce
//! [`Gradients`]. Trainable state lives in a [`ParamSet`], which a graph
//! borrows read-only; gradients flow back into the set through
//! [`ParamSet::accumulate`] and are consumed by [`Adam::step`].

mod gradcheck;
mod graph;
mod kernels;
mod lstm;
mod optim;
mod param;
mod rng;

pub use gradcheck::{grad_check, grad_check_sampled, relative_error, GradCheckReport};
pub use graph::{Gradients, Graph, Var};
pub use lstm::{lstm_step, LstmWeights};
pub use optim::Adam;
pub use param::{ParamId, ParamSet, Parameter};
pub use rng::Rng;

use crate::error::{Error, Result};

/// A shape-carrying array of `f64` values.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        if shape.len() > 2 {
            return Err(Error::shape(format!(
                "rank {} tensors are not supported",
                shape.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(&[rows, cols], data)
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

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Rows of a matrix; a vector counts as a single row.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            2 => self.shape[0],
            _ => 1,
        }
    }

    /// Columns of a matrix, or the length of a vector.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[1],
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Splits a vector into consecutive pieces of the given lengths.
    pub fn split(&self, sizes: &[usize]) -> Result<Vec<Tensor>> {
        if self.rank() != 1 || sizes.iter().sum::<usize>() != self.len() {
            return Err(Error::shape(format!(
                "cannot split {:?} into {:?}",
                self.shape, sizes
            )));
        }
        let mut out = Vec::with_capacity(sizes.len());
        let mut at = 0;
        for &s in sizes {
            out.push(Tensor::vector(self.data[at..at + s].to_vec()));
            at += s;
        }
        Ok(out)
    }

    /// Concatenates vectors end to end.
    pub fn concat(parts: &[&Tensor]) -> Result<Tensor> {
        let mut data = Vec::new();
        for p in parts {
            if p.rank() != 1 {
                return Err(Error::shape(format!("concat expects vectors, got {:?}", p.shape)));
            }
            data.extend_from_slice(&p.data);
        }
        Ok(Tensor::vector(data))
    }
}
