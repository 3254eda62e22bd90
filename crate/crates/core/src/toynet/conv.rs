use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::plane::{Real, Tensor};
use crate::rng::SeededRng;

/// 2D convolution with square kernels. 3×3 kernels use padding 1, 1×1 none.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T: Real = f32> {
    pub name: &'static str,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// `out_ch × in_ch × kernel × kernel`, row-major.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// Valid output range along one axis for kernel tap `t`.
#[inline]
fn tap_range(t: usize, pad: usize, stride: usize, n_in: usize, n_out: usize) -> (usize, usize) {
    let off = t as isize - pad as isize;
    let lo = if off >= 0 {
        0
    } else {
        ((-off) as usize).div_ceil(stride)
    };
    let last = n_in as isize - 1 - off;
    let hi = if last < 0 {
        0
    } else {
        (last as usize / stride + 1).min(n_out)
    };
    (lo, hi.max(lo))
}

impl<T: Real> ConvLayer<T> {
    pub fn zeros(name: &'static str, in_ch: usize, out_ch: usize, kernel: usize, stride: usize) -> Self {
        assert!(kernel == 1 || kernel == 3, "only 1x1 and 3x3 kernels");
        assert!(stride == 1 || stride == 2, "only strides 1 and 2");
        ConvLayer {
            name,
            in_ch,
            out_ch,
            kernel,
            stride,
            padding: kernel / 2,
            weight: vec![T::zero(); out_ch * in_ch * kernel * kernel],
            bias: vec![T::zero(); out_ch],
        }
    }

    /// Uniform in `±1/√fan_in` for weights and biases.
    pub fn init_uniform(&mut self, rng: &mut SeededRng) {
        let bound = 1.0 / ((self.in_ch * self.kernel * self.kernel) as f64).sqrt();
        for v in self.weight.iter_mut().chain(self.bias.iter_mut()) {
            *v = T::lit(rng.uniform(-bound, bound));
        }
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_ch, self.in_ch, self.kernel, self.kernel]
    }

    pub fn output_dims(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.padding - self.kernel) / self.stride + 1,
            (w + 2 * self.padding - self.kernel) / self.stride + 1,
        )
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<(usize, usize)> {
        let (c, h, w) = input.chw()?;
        if c != self.in_ch {
            return Err(Error::shape(format!(
                "{} expects {} input channels, got {c}",
                self.name, self.in_ch
            )));
        }
        if h + 2 * self.padding < self.kernel || w + 2 * self.padding < self.kernel {
            return Err(Error::shape(format!("{} input {h}x{w} too small", self.name)));
        }
        Ok((h, w))
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let (h, w) = self.check_input(input)?;
        let (oh, ow) = self.output_dims(h, w);
        let (k, s, p) = (self.kernel, self.stride, self.padding);
        let x = input.data();
        let planes: Vec<Vec<T>> = (0..self.out_ch)
            .into_par_iter()
            .map(|o| {
                let mut out = vec![self.bias[o]; oh * ow];
                for i in 0..self.in_ch {
                    let inp = &x[i * h * w..(i + 1) * h * w];
                    for ky in 0..k {
                        let (y_lo, y_hi) = tap_range(ky, p, s, h, oh);
                        for kx in 0..k {
                            let (x_lo, x_hi) = tap_range(kx, p, s, w, ow);
                            let wv = self.weight[((o * self.in_ch + i) * k + ky) * k + kx];
                            for oy in y_lo..y_hi {
                                let iy = oy * s + ky - p;
                                let row = &inp[iy * w..(iy + 1) * w];
                                let orow = &mut out[oy * ow..(oy + 1) * ow];
                                for ox in x_lo..x_hi {
                                    orow[ox] += wv * row[ox * s + kx - p];
                                }
                            }
                        }
                    }
                }
                out
            })
            .collect();
        Tensor::new(vec![self.out_ch, oh, ow], planes.concat())
    }

    /// Returns `(input gradient if requested, weight gradient, bias gradient)`.
    pub fn backward(
        &self,
        input: &Tensor<T>,
        grad_out: &Tensor<T>,
        want_input_grad: bool,
    ) -> Result<(Option<Tensor<T>>, Vec<T>, Vec<T>)> {
        let (h, w) = self.check_input(input)?;
        let (oh, ow) = self.output_dims(h, w);
        if grad_out.dims() != [self.out_ch, oh, ow] {
            return Err(Error::shape(format!(
                "{} output gradient {:?}, expected {:?}",
                self.name,
                grad_out.dims(),
                [self.out_ch, oh, ow]
            )));
        }
        let (k, s, p) = (self.kernel, self.stride, self.padding);
        let x = input.data();
        let g = grad_out.data();

        let per_out: Vec<(Vec<T>, T)> = (0..self.out_ch)
            .into_par_iter()
            .map(|o| {
                let go = &g[o * oh * ow..(o + 1) * oh * ow];
                let mut wg = vec![T::zero(); self.in_ch * k * k];
                for i in 0..self.in_ch {
                    let inp = &x[i * h * w..(i + 1) * h * w];
                    for ky in 0..k {
                        let (y_lo, y_hi) = tap_range(ky, p, s, h, oh);
                        for kx in 0..k {
                            let (x_lo, x_hi) = tap_range(kx, p, s, w, ow);
                            let mut acc = T::zero();
                            for oy in y_lo..y_hi {
                                let iy = oy * s + ky - p;
                                let row = &inp[iy * w..(iy + 1) * w];
                                let grow = &go[oy * ow..(oy + 1) * ow];
                                for ox in x_lo..x_hi {
                                    acc += grow[ox] * row[ox * s + kx - p];
                                }
                            }
                            wg[(i * k + ky) * k + kx] = acc;
                        }
                    }
                }
                let bg = go.iter().fold(T::zero(), |a, &v| a + v);
                (wg, bg)
            })
            .collect();
        let mut weight_grad = Vec::with_capacity(self.weight.len());
        let mut bias_grad = Vec::with_capacity(self.out_ch);
        for (wg, bg) in per_out {
            weight_grad.extend(wg);
            bias_grad.push(bg);
        }

        let input_grad = if want_input_grad {
            let planes: Vec<Vec<T>> = (0..self.in_ch)
                .into_par_iter()
                .map(|i| {
                    let mut gi = vec![T::zero(); h * w];
                    for o in 0..self.out_ch {
                        let go = &g[o * oh * ow..(o + 1) * oh * ow];
                        for ky in 0..k {
                            let (y_lo, y_hi) = tap_range(ky, p, s, h, oh);
                            for kx in 0..k {
                                let (x_lo, x_hi) = tap_range(kx, p, s, w, ow);
                                let wv = self.weight[((o * self.in_ch + i) * k + ky) * k + kx];
                                for oy in y_lo..y_hi {
                                    let iy = oy * s + ky - p;
                                    let grow = &go[oy * ow..(oy + 1) * ow];
                                    let irow = &mut gi[iy * w..(iy + 1) * w];
                                    for ox in x_lo..x_hi {
                                        irow[ox * s + kx - p] += wv * grow[ox];
                                    }
                                }
                            }
                        }
                    }
                    gi
                })
                .collect();
            Some(Tensor::new(vec![self.in_ch, h, w], planes.concat())?)
        } else {
            None
        };
        Ok((input_grad, weight_grad, bias_grad))
    }

    pub fn cast<U: Real>(&self) -> ConvLayer<U> {
        ConvLayer {
            name: self.name,
            in_ch: self.in_ch,
            out_ch: self.out_ch,
            kernel: self.kernel,
            stride: self.stride,
            padding: self.padding,
            weight: self.weight.iter().map(|v| U::lit(v.as_f64())).collect(),
            bias: self.bias.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct definition with explicit zero padding.
    fn naive_forward(layer: &ConvLayer<f64>, input: &Tensor<f64>) -> Tensor<f64> {
        let (_, h, w) = input.chw().unwrap();
        let (oh, ow) = layer.output_dims(h, w);
        let k = layer.kernel;
        let mut out = Tensor::zeros(vec![layer.out_ch, oh, ow]);
        for o in 0..layer.out_ch {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = layer.bias[o];
                    for i in 0..layer.in_ch {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * layer.stride + ky) as isize - layer.padding as isize;
                                let ix = (ox * layer.stride + kx) as isize - layer.padding as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                acc += layer.weight[((o * layer.in_ch + i) * k + ky) * k + kx]
                                    * input.data()[(i * h + iy as usize) * w + ix as usize];
                            }
                        }
                    }
                    out.data_mut()[(o * oh + oy) * ow + ox] = acc;
                }
            }
        }
        out
    }

    fn random_input(rng: &mut SeededRng, c: usize, h: usize, w: usize) -> Tensor<f64> {
        Tensor::new(vec![c, h, w], (0..c * h * w).map(|_| rng.normal()).collect()).unwrap()
    }

    #[test]
    fn output_dims_formula() {
        let l = ConvLayer::<f32>::zeros("t", 1, 1, 3, 2);
        assert_eq!(l.output_dims(32, 32), (16, 16));
        assert_eq!(l.output_dims(7, 5), (4, 3));
        let l = ConvLayer::<f32>::zeros("t", 1, 1, 1, 1);
        assert_eq!(l.output_dims(7, 5), (7, 5));
    }

    #[test]
    fn matches_naive_convolution() {
        let mut rng = SeededRng::new(1);
        for &(k, s, h, w) in &[(3, 2, 8, 6), (3, 2, 7, 5), (3, 1, 5, 4), (1, 1, 4, 3)] {
            let mut l = ConvLayer::<f64>::zeros("t", 3, 4, k, s);
            l.init_uniform(&mut rng);
            let x = random_input(&mut rng, 3, h, w);
            let got = l.forward(&x).unwrap();
            let want = naive_forward(&l, &x);
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_is_adjoint_of_forward() {
        // With bias zero, forward is linear in both input and weight, so
        // <conv(x), g> == <x, dX> == <w, dW>.
        let mut rng = SeededRng::new(2);
        let mut l = ConvLayer::<f64>::zeros("t", 3, 5, 3, 2);
        l.init_uniform(&mut rng);
        l.bias.iter_mut().for_each(|b| *b = 0.0);
        let x = random_input(&mut rng, 3, 9, 8);
        let y = l.forward(&x).unwrap();
        let g = random_input(&mut rng, 5, y.dims()[1], y.dims()[2]);
        let lhs: f64 = y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let (dx, dw, db) = l.backward(&x, &g, true).unwrap();
        let via_x: f64 = x.data().iter().zip(dx.unwrap().data()).map(|(a, b)| a * b).sum();
        let via_w: f64 = l.weight.iter().zip(&dw).map(|(a, b)| a * b).sum();
        assert!((lhs - via_x).abs() < 1e-9);
        assert!((lhs - via_w).abs() < 1e-9);
        let gsum: Vec<f64> = (0..5)
            .map(|o| g.data()[o * y.dims()[1] * y.dims()[2]..(o + 1) * y.dims()[1] * y.dims()[2]].iter().sum())
            .collect();
        for (a, b) in db.iter().zip(&gsum) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn channel_mismatch_is_error() {
        let l = ConvLayer::<f32>::zeros("t", 2, 2, 1, 1);
        assert!(l.forward(&Tensor::zeros(vec![3, 2, 2])).is_err());
    }
}
