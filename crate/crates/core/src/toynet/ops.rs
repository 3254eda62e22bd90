//! Channel-wise tensor helpers used by the network passes.

use crate::error::{Error, Result};
use crate::plane::{Plane, Real, Tensor};
use crate::pyramid::{upsample_bilinear, upsample_bilinear_adjoint};

pub fn relu<T: Real>(t: &Tensor<T>) -> Tensor<T> {
    let data = t.data().iter().map(|&v| v.max(T::zero())).collect();
    Tensor::new(t.dims().to_vec(), data).expect("same extents")
}

/// Passes gradient where the activation was positive.
pub fn relu_backward<T: Real>(activation: &Tensor<T>, grad: &Tensor<T>) -> Tensor<T> {
    let data = activation
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&a, &g)| if a > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(grad.dims().to_vec(), data).expect("same extents")
}

pub fn add<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.dims() != b.dims() {
        return Err(Error::shape(format!("adding {:?} and {:?}", a.dims(), b.dims())));
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
    Tensor::new(a.dims().to_vec(), data)
}

pub fn concat_channels<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (ca, h, w) = a.chw()?;
    let (cb, hb, wb) = b.chw()?;
    if (h, w) != (hb, wb) {
        return Err(Error::shape(format!("concatenating {h}x{w} with {hb}x{wb}")));
    }
    let mut data = a.data().to_vec();
    data.extend_from_slice(b.data());
    Tensor::new(vec![ca + cb, h, w], data)
}

pub fn split_channels<T: Real>(t: &Tensor<T>, first: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let (c, h, w) = t.chw()?;
    if first > c {
        return Err(Error::shape(format!("cannot split {first} of {c} channels")));
    }
    let (a, b) = t.data().split_at(first * h * w);
    Ok((
        Tensor::new(vec![first, h, w], a.to_vec())?,
        Tensor::new(vec![c - first, h, w], b.to_vec())?,
    ))
}

fn map_planes<T: Real>(
    t: &Tensor<T>,
    f: impl Fn(&Plane<T>) -> Result<Plane<T>>,
) -> Result<Tensor<T>> {
    let planes = t.planes()?.iter().map(f).collect::<Result<Vec<_>>>()?;
    Tensor::from_planes(&planes)
}

pub fn upsample<T: Real>(t: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    map_planes(t, |p| upsample_bilinear(p, h, w))
}

pub fn upsample_adjoint<T: Real>(grad: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    map_planes(grad, |p| upsample_bilinear_adjoint(p, h, w))
}

/// Index of the largest logit per pixel; ties go to the lowest category.
pub fn argmax_channels<T: Real>(logits: &Tensor<T>) -> Result<Vec<u8>> {
    let (c, h, w) = logits.chw()?;
    let hw = h * w;
    let d = logits.data();
    Ok((0..hw)
        .map(|p| {
            let mut best = 0;
            for k in 1..c {
                if d[k * hw + p] > d[best * hw + p] {
                    best = k;
                }
            }
            best as u8
        })
        .collect())
}
