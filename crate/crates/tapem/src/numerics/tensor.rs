//! Dense double-precision vectors and matrices.

use crate::error::{Result, TapemError};

/// Shape of a [`Tensor`]: rank 1 or rank 2 only.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Vector(n) => n,
            Shape::Matrix(r, c) => r * c,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            Shape::Vector(n) => write!(f, "[{n}]"),
            Shape::Matrix(r, c) => write!(f, "[{r}x{c}]"),
        }
    }
}

/// Contiguous row-major buffer of `f64` with a 1-D or 2-D shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: Shape::Vector(data.len()),
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(TapemError::Shape {
                op: "matrix".into(),
                left: format!("[{rows}x{cols}]"),
                right: format!("buffer of {}", data.len()),
            });
        }
        Ok(Tensor {
            shape: Shape::Matrix(rows, cols),
            data,
        })
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::vector(vec![v])
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    /// Row `i` of a matrix as a slice.
    pub fn row(&self, i: usize) -> &[f64] {
        match self.shape {
            Shape::Matrix(r, c) => {
                assert!(i < r, "row {i} out of bounds for {r} rows");
                &self.data[i * c..(i + 1) * c]
            }
            Shape::Vector(_) => panic!("row() on a vector"),
        }
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        match self.shape {
            Shape::Matrix(r, c) => {
                assert!(i < r, "row {i} out of bounds for {r} rows");
                &mut self.data[i * c..(i + 1) * c]
            }
            Shape::Vector(_) => panic!("row_mut() on a vector"),
        }
    }

    pub fn rows(&self) -> usize {
        match self.shape {
            Shape::Matrix(r, _) => r,
            Shape::Vector(n) => n,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Single element of a 1-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on a {} tensor", self.shape);
        self.data[0]
    }
}
