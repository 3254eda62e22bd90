//! Wavelet smooth loss, pixel cross-entropy and the combined objective.
//!
//! The wavelet smooth loss compares two images node by node in their
//! wavelet-packet trees. At every level and for every parent node, the
//! low-frequency child is penalized with the mean squared difference and the
//! three high-frequency children with the mean absolute difference:
//!
//! ```text
//! wsl = Σ_levels Σ_parents ( λ1 · mean((Δ_ll)²) + λ2 · Σ_{lh,hl,hh} mean(|Δ|) )
//! ```
//!
//! summed over channels and divided by the channel count. Because the packet
//! transform is linear, the tree of differences is the packet tree of
//! `i_rec − i`, and its gradient maps back to image space through the
//! adjoint scatter.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{LabelMap, IGNORE};
use crate::plane::{Plane, Real, Tensor};
use crate::wavelet::{check_divisible, packet_adjoint_scatter, packet_decompose, PacketTree};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub depth: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda1: 1.0,
            lambda2: 0.8,
            lambda3: 0.1,
            depth: 3,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let weights = [self.lambda1, self.lambda2, self.lambda3];
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid(format!(
                "loss weights must be finite and non-negative, got {weights:?}"
            )));
        }
        if self.depth == 0 {
            return Err(Error::invalid("wavelet loss depth must be at least 1"));
        }
        Ok(())
    }
}

/// Weighted low- and high-frequency parts of the wavelet smooth loss.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WslParts {
    pub low: f64,
    pub high: f64,
}

impl WslParts {
    pub fn total(&self) -> f64 {
        self.low + self.high
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub seg: f64,
    pub aux: f64,
    pub wsl: f64,
    pub wsl_low: f64,
    pub wsl_high: f64,
}

impl LossReport {
    /// Adds `k` times every field of `other`.
    pub fn accumulate(&mut self, other: &LossReport, k: f64) {
        self.total += k * other.total;
        self.seg += k * other.seg;
        self.aux += k * other.aux;
        self.wsl += k * other.wsl;
        self.wsl_low += k * other.wsl_low;
        self.wsl_high += k * other.wsl_high;
    }
}

fn check_pair<T: Real>(i: &Tensor<T>, i_rec: &Tensor<T>, w: &LossWeights) -> Result<usize> {
    w.validate()?;
    if i.dims() != i_rec.dims() {
        return Err(Error::shape(format!(
            "wavelet loss inputs differ: {:?} vs {:?}",
            i.dims(),
            i_rec.dims()
        )));
    }
    let (c, h, wd) = i.chw()?;
    check_divisible(h, wd, w.depth)?;
    Ok(c)
}

fn difference_trees<T: Real>(
    i: &Tensor<T>,
    i_rec: &Tensor<T>,
    w: &LossWeights,
) -> Result<Vec<PacketTree<T>>> {
    let c = check_pair(i, i_rec, w)?;
    (0..c)
        .into_par_iter()
        .map(|k| {
            let diff = i_rec.channel(k)?.sub(&i.channel(k)?);
            packet_decompose(&diff, w.depth)
        })
        .collect()
}

fn tree_parts<T: Real>(tree: &PacketTree<T>, w: &LossWeights) -> WslParts {
    let mut parts = WslParts::default();
    for level in 1..=tree.depth() {
        for (n, node) in tree.nodes(level).iter().enumerate() {
            let count = node.len() as f64;
            if n % 4 == 0 {
                parts.low += w.lambda1 * node.energy() / count;
            } else {
                let abs: f64 = node.data().iter().map(|v| v.as_f64().abs()).sum();
                parts.high += w.lambda2 * abs / count;
            }
        }
    }
    parts
}

fn tree_gradient<T: Real>(tree: &PacketTree<T>, w: &LossWeights, channels: usize) -> PacketTree<T> {
    let mut grad = tree.zeros_like();
    for level in 1..=tree.depth() {
        for (n, (node, g)) in tree
            .nodes(level)
            .iter()
            .zip(grad.nodes_mut(level))
            .enumerate()
        {
            let count = (node.len() * channels) as f64;
            let data = g.data_mut();
            if n % 4 == 0 {
                let k = T::lit(2.0 * w.lambda1 / count);
                for (gv, &d) in data.iter_mut().zip(node.data()) {
                    *gv = k * d;
                }
            } else {
                let k = T::lit(w.lambda2 / count);
                for (gv, &d) in data.iter_mut().zip(node.data()) {
                    // Subgradient 0 at the kink.
                    *gv = if d > T::zero() {
                        k
                    } else if d < T::zero() {
                        -k
                    } else {
                        T::zero()
                    };
                }
            }
        }
    }
    grad
}

fn average_parts(parts: impl Iterator<Item = WslParts>, channels: usize) -> WslParts {
    let sum = parts.fold(WslParts::default(), |acc, p| WslParts {
        low: acc.low + p.low,
        high: acc.high + p.high,
    });
    WslParts {
        low: sum.low / channels as f64,
        high: sum.high / channels as f64,
    }
}

pub fn wsl_value<T: Real>(i: &Tensor<T>, i_rec: &Tensor<T>, w: &LossWeights) -> Result<WslParts> {
    let trees = difference_trees(i, i_rec, w)?;
    let n = trees.len();
    Ok(average_parts(trees.iter().map(|t| tree_parts(t, w)), n))
}

/// Gradient of [`wsl_value`] with respect to `i_rec`.
pub fn wsl_gradient<T: Real>(i: &Tensor<T>, i_rec: &Tensor<T>, w: &LossWeights) -> Result<Tensor<T>> {
    Ok(wsl_value_and_gradient(i, i_rec, w)?.1)
}

pub fn wsl_value_and_gradient<T: Real>(
    i: &Tensor<T>,
    i_rec: &Tensor<T>,
    w: &LossWeights,
) -> Result<(WslParts, Tensor<T>)> {
    let trees = difference_trees(i, i_rec, w)?;
    let channels = trees.len();
    let parts = average_parts(trees.iter().map(|t| tree_parts(t, w)), channels);
    let grads = trees
        .par_iter()
        .map(|t| packet_adjoint_scatter(&tree_gradient(t, w, channels)))
        .collect::<Result<Vec<Plane<T>>>>()?;
    Ok((parts, Tensor::from_planes(&grads)?))
}

/// Mean cross-entropy over non-ignore pixels of `C×H×W` logits, with its
/// gradient `(softmax − onehot) / N_valid` (zero at ignore pixels).
pub fn cross_entropy<T: Real>(logits: &Tensor<T>, labels: &LabelMap) -> Result<(f64, Tensor<T>)> {
    let (c, h, w) = logits.chw()?;
    if (h, w) != labels.dims() {
        return Err(Error::shape(format!(
            "logits are {h}x{w}, labels are {}x{}",
            labels.height(),
            labels.width()
        )));
    }
    labels.validate(c)?;
    let valid = labels.valid_pixels();
    if valid == 0 {
        return Err(Error::NoValidPixels);
    }
    let hw = h * w;
    let data = logits.data();
    let mut grad = Tensor::zeros(vec![c, h, w]);
    let g = grad.data_mut();
    let inv_n = 1.0 / valid as f64;
    let mut total = 0.0f64;
    let mut probs = vec![0.0f64; c];
    for (p, &label) in labels.labels().iter().enumerate() {
        if label == IGNORE {
            continue;
        }
        let max = (0..c)
            .map(|k| data[k * hw + p].as_f64())
            .fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (k, pr) in probs.iter_mut().enumerate() {
            *pr = (data[k * hw + p].as_f64() - max).exp();
            z += *pr;
        }
        let label = label as usize;
        total += z.ln() - (data[label * hw + p].as_f64() - max);
        for (k, pr) in probs.iter().enumerate() {
            let onehot = if k == label { 1.0 } else { 0.0 };
            g[k * hw + p] = T::lit((pr / z - onehot) * inv_n);
        }
    }
    Ok((total * inv_n, grad))
}

/// Gradients of the combined objective with respect to each network output.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradients<T: Real = f32> {
    pub seg_logits: Tensor<T>,
    pub aux_logits: Tensor<T>,
    pub i_rec: Tensor<T>,
}

/// `total = seg + λ3·aux + wsl`.
pub fn total_loss<T: Real>(
    seg_logits: &Tensor<T>,
    aux_logits: &Tensor<T>,
    labels: &LabelMap,
    i: &Tensor<T>,
    i_rec: &Tensor<T>,
    w: &LossWeights,
) -> Result<(LossReport, LossGradients<T>)> {
    w.validate()?;
    let (seg, seg_grad) = cross_entropy(seg_logits, labels)?;
    let (aux, mut aux_grad) = cross_entropy(aux_logits, labels)?;
    let (parts, rec_grad) = wsl_value_and_gradient(i, i_rec, w)?;
    let l3 = T::lit(w.lambda3);
    for v in aux_grad.data_mut() {
        *v *= l3;
    }
    let wsl = parts.total();
    Ok((
        LossReport {
            total: seg + w.lambda3 * aux + wsl,
            seg,
            aux,
            wsl,
            wsl_low: parts.low,
            wsl_high: parts.high,
        },
        LossGradients {
            seg_logits: seg_grad,
            aux_logits: aux_grad,
            i_rec: rec_grad,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn single(h: usize, w: usize, data: Vec<f32>) -> Tensor {
        Tensor::new(vec![1, h, w], data).unwrap()
    }

    fn l1(depth: usize) -> LossWeights {
        LossWeights {
            depth,
            ..LossWeights::default()
        }
    }

    #[test]
    fn identical_inputs_give_zero() {
        let mut rng = SeededRng::new(1);
        let t = Tensor::new(
            vec![3, 8, 8],
            (0..192).map(|_| rng.next_f64() as f32).collect(),
        )
        .unwrap();
        let parts = wsl_value(&t, &t, &l1(3)).unwrap();
        assert_eq!(parts.total(), 0.0);
        let g = wsl_gradient(&t, &t, &l1(3)).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_by_two_hand_value() {
        // Subbands of [[1,2],[3,4]] are (5,-2,-1,0); of zeros, all 0.
        // low = 1·25, high = 0.8·(2+1+0).
        let i = single(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let z = single(2, 2, vec![0.0; 4]);
        let parts = wsl_value(&i, &z, &l1(1)).unwrap();
        assert_eq!(parts.low, 25.0);
        assert!((parts.high - 2.4).abs() < 1e-12);
        assert!((parts.total() - 27.4).abs() < 1e-12);
        assert_eq!(wsl_value(&z, &z, &l1(1)).unwrap().total(), 0.0);
    }

    #[test]
    fn rejects_shape_and_divisibility() {
        let a = single(4, 4, vec![0.0; 16]);
        let b = single(2, 8, vec![0.0; 16]);
        assert!(matches!(wsl_value(&a, &b, &l1(1)), Err(Error::Shape(_))));
        assert!(matches!(wsl_value(&a, &a, &l1(3)), Err(Error::Dimension { .. })));
        let bad = LossWeights {
            lambda2: -1.0,
            ..l1(1)
        };
        assert!(wsl_value(&a, &a, &bad).is_err());
    }

    #[test]
    fn constant_shift_uses_only_the_low_path() {
        // Dyadic values keep i_rec - i exactly constant, so every detail
        // coefficient of the difference is exactly zero.
        let mut rng = SeededRng::new(2);
        let data: Vec<f32> = (0..64).map(|_| rng.below(256) as f32 / 256.0).collect();
        let i = single(8, 8, data.clone());
        let shifted = single(8, 8, data.iter().map(|v| v + 0.25).collect());
        let g = wsl_gradient(&i, &shifted, &l1(2)).unwrap();
        let low_only = LossWeights {
            lambda2: 0.0,
            ..l1(2)
        };
        let g_low = wsl_gradient(&i, &shifted, &low_only).unwrap();
        assert_eq!(g, g_low);
        assert!(g.data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn symmetric_in_arguments() {
        let mut rng = SeededRng::new(3);
        let a = single(8, 8, (0..64).map(|_| rng.next_f64() as f32).collect());
        let b = single(8, 8, (0..64).map(|_| rng.next_f64() as f32).collect());
        let ab = wsl_value(&a, &b, &l1(2)).unwrap();
        let ba = wsl_value(&b, &a, &l1(2)).unwrap();
        assert!((ab.total() - ba.total()).abs() < 1e-12);
        assert!(ab.total() > 0.0);
    }

    #[test]
    fn uniform_logits_give_log_c() {
        let logits = Tensor::<f32>::zeros(vec![8, 2, 2]);
        let labels = LabelMap::new(2, 2, vec![0, 3, 7, IGNORE]).unwrap();
        let (loss, grad) = cross_entropy(&logits, &labels).unwrap();
        assert!((loss - 8f64.ln()).abs() < 1e-9);
        // Ignore pixel carries no gradient.
        assert!((0..8).all(|k| grad.data()[k * 4 + 3] == 0.0));
    }

    #[test]
    fn saturated_logits_give_zero() {
        let mut logits = Tensor::<f32>::zeros(vec![3, 1, 1]);
        logits.data_mut()[1] = 1000.0;
        let labels = LabelMap::new(1, 1, vec![1]).unwrap();
        let (loss, _) = cross_entropy(&logits, &labels).unwrap();
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn two_class_scalar_oracle() {
        let logits = Tensor::new(vec![2, 1, 1], vec![0.0f64, 1.0]).unwrap();
        let labels = LabelMap::new(1, 1, vec![0]).unwrap();
        let (loss, grad) = cross_entropy(&logits, &labels).unwrap();
        let e = std::f64::consts::E;
        assert!((loss - (1.0 + e).ln()).abs() < 1e-12);
        assert!((grad.data()[0] - (1.0 / (1.0 + e) - 1.0)).abs() < 1e-12);
        assert!((grad.data()[1] - e / (1.0 + e)).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_errors() {
        let logits = Tensor::<f32>::zeros(vec![2, 1, 2]);
        let all_ignore = LabelMap::new(1, 2, vec![IGNORE, IGNORE]).unwrap();
        assert!(matches!(cross_entropy(&logits, &all_ignore), Err(Error::NoValidPixels)));
        let too_big = LabelMap::new(1, 2, vec![0, 2]).unwrap();
        assert!(matches!(
            cross_entropy(&logits, &too_big),
            Err(Error::LabelOutOfRange { .. })
        ));
        let wrong = LabelMap::new(2, 1, vec![0, 1]).unwrap();
        assert!(matches!(cross_entropy(&logits, &wrong), Err(Error::Shape(_))));
    }

    #[test]
    fn total_is_seg_when_aux_off_and_reconstruction_exact() {
        let mut rng = SeededRng::new(4);
        let logits = Tensor::new(
            vec![4, 8, 8],
            (0..256).map(|_| rng.normal() as f32).collect(),
        )
        .unwrap();
        let labels = LabelMap::new(8, 8, (0..64).map(|_| rng.below(4) as u8).collect()).unwrap();
        let img = Tensor::new(vec![3, 8, 8], (0..192).map(|_| rng.next_f64() as f32).collect()).unwrap();
        let w = LossWeights {
            lambda3: 0.0,
            ..LossWeights::default()
        };
        let (report, _) = total_loss(&logits, &logits, &labels, &img, &img, &w).unwrap();
        assert_eq!(report.total, report.seg);
        assert_eq!(report.wsl, 0.0);
    }

    #[test]
    fn defaults_follow_reported_settings() {
        let w = LossWeights::default();
        assert_eq!((w.lambda1, w.lambda2, w.lambda3, w.depth), (1.0, 0.8, 0.1, 3));
    }
}
