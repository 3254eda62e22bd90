//! Gaussian reduction, bilinear upsampling and Laplacian residual stacks.
//!
//! Blur uses the separable binomial kernel `[1, 4, 6, 4, 1] / 16` with
//! mirror borders that do not repeat the edge sample (`dcb|abcd|cba`).
//! Upsampling is bilinear with corner-aligned sampling: output sample `i`
//! reads source coordinate `i · (in − 1) / (out − 1)`.

use crate::error::{Error, Result};
use crate::plane::{Plane, Real, Tensor};

const BINOMIAL_TAPS: [f64; 5] = [1.0, 4.0, 6.0, 4.0, 1.0];

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    debug_assert!(n >= 2);
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

fn check_reducible<T: Real>(p: &Plane<T>) -> Result<()> {
    if p.height() < 2 || p.width() < 2 {
        return Err(Error::invalid(format!(
            "gaussian blur needs at least 2x2 samples, got {}x{}",
            p.height(),
            p.width()
        )));
    }
    Ok(())
}

/// Full-resolution binomial blur.
///
/// Taps are applied as integers and accumulated in `f64` before the final
/// division by 16, so constant `f32` planes come back bit-identical.
pub fn gaussian_blur<T: Real>(p: &Plane<T>) -> Result<Plane<T>> {
    check_reducible(p)?;
    let (h, w) = p.dims();
    let mut tmp = vec![0.0f64; h * w];
    for y in 0..h {
        let row = p.row(y);
        for x in 0..w {
            let mut acc = 0.0;
            for (t, &kv) in BINOMIAL_TAPS.iter().enumerate() {
                acc += kv * row[reflect(x as isize + t as isize - 2, w)].as_f64();
            }
            tmp[y * w + x] = acc / 16.0;
        }
    }
    let mut out = Plane::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (t, &kv) in BINOMIAL_TAPS.iter().enumerate() {
                acc += kv * tmp[reflect(y as isize + t as isize - 2, h) * w + x];
            }
            out.set(y, x, T::lit(acc / 16.0));
        }
    }
    Ok(out)
}

/// Blur then keep even rows and columns; output is `ceil(h/2)×ceil(w/2)`.
pub fn gaussian_reduce<T: Real>(p: &Plane<T>) -> Result<Plane<T>> {
    let blurred = gaussian_blur(p)?;
    let (h, w) = p.dims();
    Ok(Plane::from_fn(h.div_ceil(2), w.div_ceil(2), |y, x| {
        blurred.get(2 * y, 2 * x)
    }))
}

/// Per-output-index `(lower, upper, upper weight)` along one axis.
fn axis_taps(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    (0..n_out)
        .map(|i| {
            let src = if n_out > 1 {
                i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64
            } else {
                0.0
            };
            let lo = (src.floor() as usize).min(n_in - 1);
            let hi = (lo + 1).min(n_in - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

fn check_upsample<T: Real>(p: &Plane<T>, out_h: usize, out_w: usize) -> Result<()> {
    if out_h < p.height() || out_w < p.width() {
        return Err(Error::invalid(format!(
            "upsample target {out_h}x{out_w} is smaller than source {}x{}",
            p.height(),
            p.width()
        )));
    }
    Ok(())
}

pub fn upsample_bilinear<T: Real>(p: &Plane<T>, out_h: usize, out_w: usize) -> Result<Plane<T>> {
    check_upsample(p, out_h, out_w)?;
    let ys = axis_taps(p.height(), out_h);
    let xs = axis_taps(p.width(), out_w);
    Ok(Plane::from_fn(out_h, out_w, |y, x| {
        let (y0, y1, fy) = ys[y];
        let (x0, x1, fx) = xs[x];
        let (fy, fx) = (T::lit(fy), T::lit(fx));
        // a + (b - a)·f returns a exactly when a == b.
        let lerp = |a: T, b: T, f: T| a + (b - a) * f;
        let top = lerp(p.get(y0, x0), p.get(y0, x1), fx);
        let bottom = lerp(p.get(y1, x0), p.get(y1, x1), fx);
        lerp(top, bottom, fy)
    }))
}

/// Transpose of [`upsample_bilinear`]: scatters an output-space gradient back
/// onto the `in_h`×`in_w` source grid.
pub fn upsample_bilinear_adjoint<T: Real>(
    grad: &Plane<T>,
    in_h: usize,
    in_w: usize,
) -> Result<Plane<T>> {
    let (out_h, out_w) = grad.dims();
    if in_h == 0 || in_w == 0 || out_h < in_h || out_w < in_w {
        return Err(Error::invalid(format!(
            "upsample adjoint from {out_h}x{out_w} to {in_h}x{in_w}"
        )));
    }
    let ys = axis_taps(in_h, out_h);
    let xs = axis_taps(in_w, out_w);
    let mut out = Plane::zeros(in_h, in_w);
    let one = T::one();
    for (y, &(y0, y1, fy)) in ys.iter().enumerate() {
        let fy = T::lit(fy);
        for (x, &(x0, x1, fx)) in xs.iter().enumerate() {
            let fx = T::lit(fx);
            let g = grad.get(y, x);
            let d = out.data_mut();
            d[y0 * in_w + x0] += g * (one - fy) * (one - fx);
            d[y0 * in_w + x1] += g * (one - fy) * fx;
            d[y1 * in_w + x0] += g * fy * (one - fx);
            d[y1 * in_w + x1] += g * fy * fx;
        }
    }
    Ok(out)
}

/// Laplacian residuals `H_i = g_i − U(g_{i+1})` for `i < n` and the base `g_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualStack<T: Real = f32> {
    pub residuals: Vec<Plane<T>>,
    pub base: Plane<T>,
}

impl<T: Real> ResidualStack<T> {
    /// Telescoped reconstruction of the input.
    pub fn reconstruct(&self) -> Result<Plane<T>> {
        let mut g = self.base.clone();
        for h in self.residuals.iter().rev() {
            g = h.add(&upsample_bilinear(&g, h.height(), h.width())?);
        }
        Ok(g)
    }

    /// Every residual brought to full resolution, finest first.
    pub fn upsampled_residuals(&self) -> Result<Vec<Plane<T>>> {
        let (h, w) = self.residuals[0].dims();
        self.residuals
            .iter()
            .map(|r| {
                if r.dims() == (h, w) {
                    Ok(r.clone())
                } else {
                    upsample_bilinear(r, h, w)
                }
            })
            .collect()
    }
}

pub fn laplacian_residuals<T: Real>(p: &Plane<T>, levels: usize) -> Result<ResidualStack<T>> {
    if levels == 0 {
        return Err(Error::invalid("residual levels must be at least 1"));
    }
    crate::wavelet::check_divisible(p.height(), p.width(), levels)?;
    let mut g = p.clone();
    let mut residuals = Vec::with_capacity(levels);
    for _ in 0..levels {
        let next = gaussian_reduce(&g)?;
        let up = upsample_bilinear(&next, g.height(), g.width())?;
        residuals.push(g.sub(&up));
        g = next;
    }
    Ok(ResidualStack { residuals, base: g })
}

/// Residual levels fed to the shallow branch.
pub const SHALLOW_RESIDUAL_LEVELS: usize = 2;

/// Builds the full-resolution residual stack `[H_0 (all channels), U(H_1) (all
/// channels)]` from a `C×H×W` image, giving `2C` channels.
pub fn shallow_input<T: Real>(image: &Tensor<T>) -> Result<Tensor<T>> {
    let planes = image.planes()?;
    let stacks = planes
        .iter()
        .map(|p| laplacian_residuals(p, SHALLOW_RESIDUAL_LEVELS)?.upsampled_residuals())
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(planes.len() * SHALLOW_RESIDUAL_LEVELS);
    for level in 0..SHALLOW_RESIDUAL_LEVELS {
        out.extend(stacks.iter().map(|s| s[level].clone()));
    }
    Tensor::from_planes(&out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect(-1, 4), 1);
        assert_eq!(reflect(-2, 4), 2);
        assert_eq!(reflect(4, 4), 2);
        assert_eq!(reflect(5, 4), 1);
        assert_eq!(reflect(-2, 2), 0);
        assert_eq!(reflect(3, 2), 1);
    }

    #[test]
    fn reduce_keeps_constants() {
        let r = gaussian_reduce(&Plane::filled(8, 8, 7.0f32)).unwrap();
        assert_eq!(r.dims(), (4, 4));
        assert!(r.data().iter().all(|&v| (v - 7.0).abs() < 1e-6));
        assert_eq!(gaussian_reduce(&Plane::filled(5, 3, 1.0f32)).unwrap().dims(), (3, 2));
    }

    #[test]
    fn degenerate_reduce_is_error() {
        assert!(gaussian_reduce(&Plane::<f32>::zeros(1, 8)).is_err());
    }

    #[test]
    fn impulse_blur_matches_direct_convolution() {
        // Interior impulse: mass is conserved and the response is the outer
        // product of the binomial taps.
        let mut p = Plane::<f64>::zeros(16, 16);
        p.set(8, 8, 1.0);
        let b = gaussian_blur(&p).unwrap();
        assert!((b.sum() - 1.0).abs() < 1e-12);
        for dy in 0..5 {
            for dx in 0..5 {
                let want = BINOMIAL_TAPS[dy] * BINOMIAL_TAPS[dx] / 256.0;
                assert!((b.get(6 + dy, 6 + dx) - want).abs() < 1e-15);
            }
        }
        let r = gaussian_reduce(&p).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!(r.get(y, x), b.get(2 * y, 2 * x));
            }
        }
    }

    #[test]
    fn upsample_cases() {
        let c = upsample_bilinear(&Plane::filled(2, 2, 5.0f32), 4, 4).unwrap();
        assert!(c.data().iter().all(|&v| (v - 5.0).abs() < 1e-6));
        let p = Plane::new(1, 2, vec![0.0f64, 1.0]).unwrap();
        let u = upsample_bilinear(&p, 1, 4).unwrap();
        for (got, want) in u.data().iter().zip([0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        let one = upsample_bilinear(&Plane::filled(1, 1, 2.5f32), 2, 2).unwrap();
        assert_eq!(one.data(), &[2.5; 4]);
        assert!(upsample_bilinear(&Plane::<f32>::zeros(4, 4), 2, 4).is_err());
    }

    #[test]
    fn upsample_adjoint_identity() {
        let mut rng = SeededRng::new(3);
        let x = Plane::<f64>::from_fn(3, 5, |_, _| rng.normal());
        let y = Plane::<f64>::from_fn(9, 11, |_, _| rng.normal());
        let lhs = upsample_bilinear(&x, 9, 11).unwrap().dot(&y);
        let rhs = x.dot(&upsample_bilinear_adjoint(&y, 3, 5).unwrap());
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn constant_residuals_are_zero() {
        let s = laplacian_residuals(&Plane::filled(16, 16, 0.25f32), 2).unwrap();
        assert_eq!(s.residuals[0].dims(), (16, 16));
        assert_eq!(s.residuals[1].dims(), (8, 8));
        assert_eq!(s.base.dims(), (4, 4));
        for r in &s.residuals {
            assert!(r.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn telescoped_reconstruction() {
        let mut rng = SeededRng::new(8);
        let p = Plane::from_fn(16, 16, |_, _| rng.next_f64() as f32);
        let s = laplacian_residuals(&p, 2).unwrap();
        assert!(s.reconstruct().unwrap().max_abs_diff(&p) < 1e-5);
    }

    #[test]
    fn shallow_input_layout() {
        let t = Tensor::<f32>::zeros(vec![3, 16, 16]);
        assert_eq!(shallow_input(&t).unwrap().dims(), &[6, 16, 16]);
    }
}
