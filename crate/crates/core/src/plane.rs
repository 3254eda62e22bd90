//! Row-major sample grids.
//!
//! [`Plane`] is a single 2D channel and [`Tensor`] an arbitrary-rank array.
//! Both are generic over the sample type so the same kernels run on `f32`
//! storage and on an `f64` shadow used by gradient checks. Reductions always
//! accumulate in `f64`.

use std::fmt::Debug;
use std::ops::{AddAssign, MulAssign, SubAssign};

use crate::error::{Error, Result};

/// Floating-point sample type.
pub trait Real:
    num_traits::Float + Default + Debug + Send + Sync + AddAssign + SubAssign + MulAssign + 'static
{
    fn lit(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plane<T: Real = f32> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Real> Plane<T> {
    pub fn new(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "plane dimensions must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::shape(format!(
                "{height}x{width} plane needs {} samples, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Plane {
            height,
            width,
            data,
        })
    }

    /// Panics on zero dimensions.
    pub fn filled(height: usize, width: usize, value: T) -> Self {
        assert!(height > 0 && width > 0, "plane dimensions must be positive");
        Plane {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, T::zero())
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(height > 0 && width > 0, "plane dimensions must be positive");
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Plane {
            height,
            width,
            data,
        }
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

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    pub fn row(&self, y: usize) -> &[T] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn same_dims(&self, other: &Plane<T>) -> bool {
        self.dims() == other.dims()
    }

    pub(crate) fn check_same_dims(&self, other: &Plane<T>, what: &str) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "{what}: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )))
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Plane<T> {
        Plane {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination. Panics on mismatched dimensions.
    pub fn zip_map(&self, other: &Plane<T>, f: impl Fn(T, T) -> T) -> Plane<T> {
        assert!(self.same_dims(other), "zip_map on mismatched planes");
        Plane {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &Plane<T>) -> Plane<T> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Plane<T>) -> Plane<T> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, k: T) -> Plane<T> {
        self.map(|v| v * k)
    }

    pub fn add_assign(&mut self, other: &Plane<T>) {
        assert!(self.same_dims(other), "add_assign on mismatched planes");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Sum of squares.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64() * v.as_f64()).sum()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64()).sum()
    }

    pub fn dot(&self, other: &Plane<T>) -> f64 {
        assert!(self.same_dims(other), "dot on mismatched planes");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.as_f64() * b.as_f64())
            .sum()
    }

    pub fn max_abs_diff(&self, other: &Plane<T>) -> f64 {
        assert!(self.same_dims(other), "max_abs_diff on mismatched planes");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max)
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Plane<T>> {
        if h == 0 || w == 0 || y0 + h > self.height || x0 + w > self.width {
            return Err(Error::invalid(format!(
                "crop {h}x{w} at ({y0},{x0}) outside {}x{} plane",
                self.height, self.width
            )));
        }
        Ok(Plane::from_fn(h, w, |y, x| self.get(y0 + y, x0 + x)))
    }

    /// Extends to `h`×`w` by replicating the last row and column.
    pub fn pad_edge(&self, h: usize, w: usize) -> Result<Plane<T>> {
        if h < self.height || w < self.width {
            return Err(Error::invalid(format!(
                "cannot pad {}x{} down to {h}x{w}",
                self.height, self.width
            )));
        }
        Ok(Plane::from_fn(h, w, |y, x| {
            self.get(y.min(self.height - 1), x.min(self.width - 1))
        }))
    }

    pub fn cast<U: Real>(&self) -> Plane<U> {
        Plane {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

/// Dense row-major array of any rank ≥ 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T: Real = f32> {
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(dims: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::invalid("tensor rank must be at least 1"));
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::invalid(format!("extents {dims:?} overflow")))?;
        if count != data.len() {
            return Err(Error::shape(format!(
                "extents {dims:?} need {count} samples, got {}",
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        assert!(!dims.is_empty(), "tensor rank must be at least 1");
        let n = dims.iter().product();
        Tensor {
            dims,
            data: vec![T::zero(); n],
        }
    }

    /// Stacks equally sized planes into a `C×H×W` tensor.
    pub fn from_planes(planes: &[Plane<T>]) -> Result<Self> {
        let first = planes.first().ok_or(Error::Empty("plane list"))?;
        let mut data = Vec::with_capacity(planes.len() * first.len());
        for p in planes {
            first.check_same_dims(p, "stacking planes")?;
            data.extend_from_slice(p.data());
        }
        Ok(Tensor {
            dims: vec![planes.len(), first.height(), first.width()],
            data,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(channels, height, width)` for rank-3 tensors.
    pub fn chw(&self) -> Result<(usize, usize, usize)> {
        match self.dims[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::shape(format!(
                "expected a C×H×W tensor, got extents {:?}",
                self.dims
            ))),
        }
    }

    pub fn channel(&self, c: usize) -> Result<Plane<T>> {
        let (channels, h, w) = self.chw()?;
        if c >= channels {
            return Err(Error::invalid(format!(
                "channel {c} out of range for {channels} channels"
            )));
        }
        Plane::new(h, w, self.data[c * h * w..(c + 1) * h * w].to_vec())
    }

    pub fn planes(&self) -> Result<Vec<Plane<T>>> {
        let (c, _, _) = self.chw()?;
        (0..c).map(|i| self.channel(i)).collect()
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}
