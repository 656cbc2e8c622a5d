//! Dense row-major maps used throughout the engine.
//!
//! [`Grid`] is a single `[H, W]` map; [`Planes`] stacks `N` maps of equal size
//! as `[N, H, W]`, matching the on-disk channel-first tensor layout.

use crate::error::{Error, Result};
use crate::tensor::{Tensor, TensorData};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Copy> Grid<T> {
    pub fn new(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "grid {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Self { height, width, data: vec![value; height * width] }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.width + col] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Grid<U> {
        Grid { height: self.height, width: self.width, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn same_dims<U>(&self, other: &Grid<U>) -> bool {
        self.height == other.height && self.width == other.width
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Planes<T> {
    count: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Copy> Planes<T> {
    pub fn new(count: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != count * height * width {
            return Err(Error::ShapeMismatch(format!(
                "planes {count}x{height}x{width} need {} values, got {}",
                count * height * width,
                data.len()
            )));
        }
        Ok(Self { count, height, width, data })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn plane(&self, index: usize) -> &[T] {
        let n = self.plane_len();
        &self.data[index * n..(index + 1) * n]
    }

    /// Value of plane `index` at flat pixel offset `pixel`.
    #[inline]
    pub fn at(&self, index: usize, pixel: usize) -> T {
        self.data[index * self.height * self.width + pixel]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn matches_grid<U>(&self, grid: &Grid<U>) -> bool {
        self.height == grid.height && self.width == grid.width
    }
}

macro_rules! tensor_conversions {
    ($ty:ty, $variant:ident) => {
        impl TryFrom<Tensor> for Grid<$ty> {
            type Error = Error;

            fn try_from(tensor: Tensor) -> Result<Self> {
                let shape = tensor.shape().to_vec();
                if shape.len() != 2 {
                    return Err(Error::ShapeMismatch(format!("expected a 2-D tensor, got shape {shape:?}")));
                }
                match tensor.into_data() {
                    TensorData::$variant(data) => Grid::new(shape[0], shape[1], data),
                    other => Err(Error::InvalidTensor(format!(
                        "expected {} tensor, got {:?}",
                        stringify!($variant),
                        other.dtype()
                    ))),
                }
            }
        }

        impl TryFrom<Tensor> for Planes<$ty> {
            type Error = Error;

            fn try_from(tensor: Tensor) -> Result<Self> {
                let shape = tensor.shape().to_vec();
                if shape.len() != 3 {
                    return Err(Error::ShapeMismatch(format!("expected a 3-D tensor, got shape {shape:?}")));
                }
                match tensor.into_data() {
                    TensorData::$variant(data) => Planes::new(shape[0], shape[1], shape[2], data),
                    other => Err(Error::InvalidTensor(format!(
                        "expected {} tensor, got {:?}",
                        stringify!($variant),
                        other.dtype()
                    ))),
                }
            }
        }

        impl TryFrom<&Grid<$ty>> for Tensor {
            type Error = Error;

            fn try_from(grid: &Grid<$ty>) -> Result<Self> {
                Tensor::new(vec![grid.height, grid.width], TensorData::$variant(grid.data.clone()))
            }
        }

        impl TryFrom<&Planes<$ty>> for Tensor {
            type Error = Error;

            fn try_from(planes: &Planes<$ty>) -> Result<Self> {
                Tensor::new(
                    vec![planes.count, planes.height, planes.width],
                    TensorData::$variant(planes.data.clone()),
                )
            }
        }
    };
}

tensor_conversions!(f32, F32);
tensor_conversions!(u8, U8);
tensor_conversions!(i32, I32);
