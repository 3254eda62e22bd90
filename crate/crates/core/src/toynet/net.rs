//! Two-branch network: a shallow branch on Laplacian residuals at full
//! resolution and a deep branch on the two-level wavelet packet of the image.
//!
//! ```text
//! shallow: [H0, U(H1)] 6×H → 16 (/2) → 32 (/4) → 32 (/8) → 32 (/16)
//!          s8 + U(s16)                                   → 32 @ /8
//! deep:    DWT² 48 @ /4 → 1×1 32 → 64 (/8) → 64 (/16) → 64 (/32)
//!          1×1 → 256 @ /32 → IWT² → 16 @ /8 → ReLU
//! fuse:    concat(32 + 16) → 1×1 → C @ /8 → bilinear ×8
//! aux:     deep 16 → 1×1 → C @ /8 → bilinear ×8           (training only)
//! sr:      deep 16 → 1×1 → 192 @ /8 → IWT³ → 3 @ /1      (training only)
//! ```

use crate::error::{Error, Result};
use crate::plane::{Real, Tensor};
use crate::pyramid::shallow_input;
use crate::rng::SeededRng;
use crate::wavelet::{check_divisible, packet_dwt_channels, packet_iwt_channels};

use super::conv::ConvLayer;
use super::ops::{
    add, argmax_channels, concat_channels, relu, relu_backward, split_channels, upsample,
    upsample_adjoint,
};

pub const SHALLOW1: usize = 0;
pub const SHALLOW2: usize = 1;
pub const SHALLOW3: usize = 2;
pub const SHALLOW4: usize = 3;
pub const DEEP_ENTRY: usize = 4;
pub const DEEP1: usize = 5;
pub const DEEP2: usize = 6;
pub const DEEP3: usize = 7;
pub const DEEP_EXPAND: usize = 8;
pub const FUSE: usize = 9;
pub const AUX: usize = 10;
pub const SR: usize = 11;
pub const LAYER_COUNT: usize = 12;

const SHALLOW_OUT: usize = 32;
const DEEP_OUT: usize = 16;
const DEEP_DWT_LEVELS: usize = 2;
const SR_IWT_LEVELS: usize = 3;
/// Input sides must be multiples of the deepest stride.
pub const INPUT_MULTIPLE: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyWsdNet<T: Real = f32> {
    pub num_categories: usize,
    pub layers: Vec<ConvLayer<T>>,
}

/// Activations kept by a training forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T: Real = f32> {
    image_dims: (usize, usize),
    shallow_in: Option<Tensor<T>>,
    a1: Option<Tensor<T>>,
    a2: Option<Tensor<T>>,
    a3: Option<Tensor<T>>,
    a4: Option<Tensor<T>>,
    deep_in: Option<Tensor<T>>,
    e: Option<Tensor<T>>,
    d1: Option<Tensor<T>>,
    d2: Option<Tensor<T>>,
    d3: Option<Tensor<T>>,
    deep_feat: Option<Tensor<T>>,
    fused_in: Option<Tensor<T>>,
}

impl<T: Real> ForwardCache<T> {
    /// Which rectified units are active, over every cached ReLU output.
    /// Two passes with equal patterns share one linear region of the net.
    pub fn relu_pattern(&self) -> Vec<bool> {
        [&self.a1, &self.a2, &self.a3, &self.a4, &self.e, &self.d1, &self.d2, &self.d3, &self.deep_feat]
            .into_iter()
            .flatten()
            .flat_map(|t| t.data().iter().map(|&v| v > T::zero()))
            .collect()
    }
}

fn need<'a, T: Real>(t: &'a Option<Tensor<T>>, what: &'static str) -> Result<&'a Tensor<T>> {
    t.as_ref().ok_or(Error::MissingCache(what))
}

#[derive(Debug, Clone)]
pub struct ForwardOutput<T: Real = f32> {
    pub seg_logits: Tensor<T>,
    pub aux_logits: Tensor<T>,
    pub i_rec: Tensor<T>,
    pub cache: ForwardCache<T>,
}

/// Per-layer `(weight, bias)` gradients in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads<T: Real = f32> {
    pub layers: Vec<(Vec<T>, Vec<T>)>,
}

impl<T: Real> ParamGrads<T> {
    pub fn zeros_like(net: &ToyWsdNet<T>) -> Self {
        ParamGrads {
            layers: net
                .layers
                .iter()
                .map(|l| (vec![T::zero(); l.weight.len()], vec![T::zero(); l.bias.len()]))
                .collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &ParamGrads<T>, k: T) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            for (a, &g) in w.iter_mut().zip(ow) {
                *a += k * g;
            }
            for (a, &g) in b.iter_mut().zip(ob) {
                *a += k * g;
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.layers.iter().flat_map(|(w, b)| w.iter().chain(b))
    }
}

impl<T: Real> ToyWsdNet<T> {
    /// All weights and biases zero.
    pub fn zeros(num_categories: usize) -> Result<Self> {
        if !(1..=255).contains(&num_categories) {
            return Err(Error::invalid(format!(
                "category count must be in 1..=255, got {num_categories}"
            )));
        }
        let c = num_categories;
        let layers = vec![
            ConvLayer::zeros("shallow1", 6, 16, 3, 2),
            ConvLayer::zeros("shallow2", 16, 32, 3, 2),
            ConvLayer::zeros("shallow3", 32, 32, 3, 2),
            ConvLayer::zeros("shallow4", 32, 32, 3, 2),
            ConvLayer::zeros("deep_entry", 48, 32, 1, 1),
            ConvLayer::zeros("deep1", 32, 64, 3, 2),
            ConvLayer::zeros("deep2", 64, 64, 3, 2),
            ConvLayer::zeros("deep3", 64, 64, 3, 2),
            ConvLayer::zeros("deep_expand", 64, 256, 1, 1),
            ConvLayer::zeros("fuse", SHALLOW_OUT + DEEP_OUT, c, 1, 1),
            ConvLayer::zeros("aux", DEEP_OUT, c, 1, 1),
            ConvLayer::zeros("sr", DEEP_OUT, 192, 1, 1),
        ];
        debug_assert_eq!(layers.len(), LAYER_COUNT);
        Ok(ToyWsdNet {
            num_categories,
            layers,
        })
    }

    /// Uniform `±1/√fan_in` initialization, layer by layer from one stream.
    pub fn seeded(num_categories: usize, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(num_categories)?;
        let mut rng = SeededRng::new(seed);
        for l in &mut net.layers {
            l.init_uniform(&mut rng);
        }
        Ok(net)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> ToyWsdNet<U> {
        ToyWsdNet {
            num_categories: self.num_categories,
            layers: self.layers.iter().map(|l| l.cast()).collect(),
        }
    }

    fn check_image(&self, image: &Tensor<T>) -> Result<(usize, usize)> {
        let (c, h, w) = image.chw()?;
        if c != 3 {
            return Err(Error::shape(format!("expected a 3-channel image, got {c}")));
        }
        check_divisible(h, w, 5)?;
        Ok((h, w))
    }

    fn conv_relu(&self, layer: usize, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(relu(&self.layers[layer].forward(x)?))
    }

    /// Shared trunk: shallow and deep features at 1/8.
    fn trunk(&self, image: &Tensor<T>, keep: bool) -> Result<(Tensor<T>, ForwardCache<T>)> {
        let (h, w) = self.check_image(image)?;
        let xs = shallow_input(image)?;
        let a1 = self.conv_relu(SHALLOW1, &xs)?;
        let a2 = self.conv_relu(SHALLOW2, &a1)?;
        let a3 = self.conv_relu(SHALLOW3, &a2)?;
        let a4 = self.conv_relu(SHALLOW4, &a3)?;
        let (h8, w8) = (h / 8, w / 8);
        let shallow = add(&a3, &upsample(&a4, h8, w8)?)?;

        let xd = packet_dwt_channels(image, DEEP_DWT_LEVELS)?;
        let e = self.conv_relu(DEEP_ENTRY, &xd)?;
        let d1 = self.conv_relu(DEEP1, &e)?;
        let d2 = self.conv_relu(DEEP2, &d1)?;
        let d3 = self.conv_relu(DEEP3, &d2)?;
        let expanded = self.layers[DEEP_EXPAND].forward(&d3)?;
        let deep_feat = relu(&packet_iwt_channels(&expanded, DEEP_DWT_LEVELS)?);
        let fused_in = concat_channels(&shallow, &deep_feat)?;

        let keep_t = |t: Tensor<T>| if keep { Some(t) } else { None };
        let cache = ForwardCache {
            image_dims: (h, w),
            shallow_in: keep_t(xs),
            a1: keep_t(a1),
            a2: keep_t(a2),
            a3: keep_t(a3),
            a4: keep_t(a4),
            deep_in: keep_t(xd),
            e: keep_t(e),
            d1: keep_t(d1),
            d2: keep_t(d2),
            d3: keep_t(d3),
            deep_feat: Some(deep_feat),
            fused_in: keep_t(fused_in.clone()),
        };
        Ok((fused_in, cache))
    }

    /// Training forward pass with all heads.
    pub fn forward(&self, image: &Tensor<T>) -> Result<ForwardOutput<T>> {
        let (fused_in, cache) = self.trunk(image, true)?;
        let (h, w) = cache.image_dims;
        let deep_feat = need(&cache.deep_feat, "deep features")?;
        let seg8 = self.layers[FUSE].forward(&fused_in)?;
        let aux8 = self.layers[AUX].forward(deep_feat)?;
        let sr8 = self.layers[SR].forward(deep_feat)?;
        Ok(ForwardOutput {
            seg_logits: upsample(&seg8, h, w)?,
            aux_logits: upsample(&aux8, h, w)?,
            i_rec: packet_iwt_channels(&sr8, SR_IWT_LEVELS)?,
            cache,
        })
    }

    /// Inference: segmentation logits only; auxiliary and reconstruction
    /// heads are not evaluated and no activations are kept.
    pub fn infer(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        let (fused_in, cache) = self.trunk(image, false)?;
        let (h, w) = cache.image_dims;
        upsample(&self.layers[FUSE].forward(&fused_in)?, h, w)
    }

    pub fn predict(&self, image: &Tensor<T>) -> Result<crate::labels::LabelMap> {
        let logits = self.infer(image)?;
        let (_, h, w) = logits.chw()?;
        crate::labels::LabelMap::new(h, w, argmax_channels(&logits)?)
    }

    /// Parameter gradients given loss gradients at the three outputs.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        grad_seg: &Tensor<T>,
        grad_aux: &Tensor<T>,
        grad_rec: &Tensor<T>,
    ) -> Result<ParamGrads<T>> {
        let (h, w) = cache.image_dims;
        let (h8, w8) = (h / 8, w / 8);
        let mut grads = ParamGrads::zeros_like(self);
        let mut put = |layer: usize, wg: Vec<T>, bg: Vec<T>| grads.layers[layer] = (wg, bg);

        let fused_in = need(&cache.fused_in, "fusion input")?;
        let deep_feat = need(&cache.deep_feat, "deep features")?;

        let g_seg8 = upsample_adjoint(grad_seg, h8, w8)?;
        let (g_fused, wg, bg) = self.layers[FUSE].backward(fused_in, &g_seg8, true)?;
        put(FUSE, wg, bg);
        let (g_shallow, g_deep_from_fuse) = split_channels(&g_fused.expect("requested"), SHALLOW_OUT)?;

        let g_aux8 = upsample_adjoint(grad_aux, h8, w8)?;
        let (g_deep_aux, wg, bg) = self.layers[AUX].backward(deep_feat, &g_aux8, true)?;
        put(AUX, wg, bg);

        let g_sr8 = packet_dwt_channels(grad_rec, SR_IWT_LEVELS)?;
        let (g_deep_sr, wg, bg) = self.layers[SR].backward(deep_feat, &g_sr8, true)?;
        put(SR, wg, bg);

        let g_deep = add(
            &add(&g_deep_from_fuse, &g_deep_aux.expect("requested"))?,
            &g_deep_sr.expect("requested"),
        )?;
        // deep_feat = relu(iwt(expanded)); the packet DWT is the adjoint of the IWT.
        let g_iwt = relu_backward(deep_feat, &g_deep);
        let g_expanded = packet_dwt_channels(&g_iwt, DEEP_DWT_LEVELS)?;

        let d3 = need(&cache.d3, "deep3 activation")?;
        let (g, wg, bg) = self.layers[DEEP_EXPAND].backward(d3, &g_expanded, true)?;
        put(DEEP_EXPAND, wg, bg);
        let mut g = g.expect("requested");
        let chain = [
            (DEEP3, &cache.d3, &cache.d2, "deep2 activation"),
            (DEEP2, &cache.d2, &cache.d1, "deep1 activation"),
            (DEEP1, &cache.d1, &cache.e, "deep entry activation"),
            (DEEP_ENTRY, &cache.e, &cache.deep_in, "deep input"),
        ];
        for (layer, out, input, what) in chain {
            let out = need(out, what)?;
            let input = need(input, what)?;
            let g_pre = relu_backward(out, &g);
            let (gi, wg, bg) = self.layers[layer].backward(input, &g_pre, layer != DEEP_ENTRY)?;
            put(layer, wg, bg);
            if let Some(gi) = gi {
                g = gi;
            }
        }

        // shallow = a3 + U(a4)
        let a3 = need(&cache.a3, "shallow3 activation")?;
        let a4 = need(&cache.a4, "shallow4 activation")?;
        let g_a4 = upsample_adjoint(&g_shallow, a4.dims()[1], a4.dims()[2])?;
        let (g_from4, wg, bg) = self.layers[SHALLOW4].backward(a3, &relu_backward(a4, &g_a4), true)?;
        put(SHALLOW4, wg, bg);
        let mut g = add(&g_shallow, &g_from4.expect("requested"))?;
        let chain = [
            (SHALLOW3, &cache.a3, &cache.a2, "shallow2 activation"),
            (SHALLOW2, &cache.a2, &cache.a1, "shallow1 activation"),
            (SHALLOW1, &cache.a1, &cache.shallow_in, "shallow input"),
        ];
        for (layer, out, input, what) in chain {
            let out = need(out, what)?;
            let input = need(input, what)?;
            let g_pre = relu_backward(out, &g);
            let (gi, wg, bg) = self.layers[layer].backward(input, &g_pre, layer != SHALLOW1)?;
            put(layer, wg, bg);
            if let Some(gi) = gi {
                g = gi;
            }
        }
        Ok(grads)
    }
}
