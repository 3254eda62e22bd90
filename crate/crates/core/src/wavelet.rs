//! Orthonormal 2D Haar transforms.
//!
//! Each 2×2 block `[[a, b], [c, d]]` maps to
//!
//! ```text
//! ll = (a + b + c + d) / 2     lh = (a + b - c - d) / 2
//! hl = (a - b + c - d) / 2     hh = (a - b - c + d) / 2
//! ```
//!
//! The transform matrix is symmetric and orthogonal, so the inverse, the
//! adjoint and the forward transform share the same butterfly.
//!
//! Three decompositions are provided: a single level ([`dwt2`]), the Mallat
//! form that recurses on `ll` only ([`dwt_multilevel`]), and the full wavelet
//! packet that recurses on all four children ([`packet_decompose`]).

use crate::error::{Error, Result};
use crate::plane::{Plane, Real, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct SubbandQuad<T: Real = f32> {
    pub ll: Plane<T>,
    pub lh: Plane<T>,
    pub hl: Plane<T>,
    pub hh: Plane<T>,
}

impl<T: Real> SubbandQuad<T> {
    pub fn from_array([ll, lh, hl, hh]: [Plane<T>; 4]) -> Result<Self> {
        for p in [&lh, &hl, &hh] {
            ll.check_same_dims(p, "subband dimensions")?;
        }
        Ok(SubbandQuad { ll, lh, hl, hh })
    }

    pub fn into_array(self) -> [Plane<T>; 4] {
        [self.ll, self.lh, self.hl, self.hh]
    }

    pub fn bands(&self) -> [&Plane<T>; 4] {
        [&self.ll, &self.lh, &self.hl, &self.hh]
    }

    pub fn energy(&self) -> f64 {
        self.bands().iter().map(|p| p.energy()).sum()
    }
}

/// The three detail bands of one Mallat level.
#[derive(Debug, Clone, PartialEq)]
pub struct DetailBands<T: Real = f32> {
    pub lh: Plane<T>,
    pub hl: Plane<T>,
    pub hh: Plane<T>,
}

/// `details[0]` is the finest level, `low` the coarsest approximation.
#[derive(Debug, Clone, PartialEq)]
pub struct MallatDecomposition<T: Real = f32> {
    pub low: Plane<T>,
    pub details: Vec<DetailBands<T>>,
}

impl<T: Real> MallatDecomposition<T> {
    pub fn levels(&self) -> usize {
        self.details.len()
    }

    pub fn energy(&self) -> f64 {
        self.low.energy()
            + self
                .details
                .iter()
                .map(|d| d.lh.energy() + d.hl.energy() + d.hh.energy())
                .sum::<f64>()
    }

    /// Packs every band into one plane of the input's size. Level `k` owns the
    /// top-left `H/2^(k-1) × W/2^(k-1)` block, split as `[[ll, lh], [hl, hh]]`.
    pub fn to_layout(&self) -> Plane<T> {
        let (lh, lw) = self.low.dims();
        let scale = 1 << self.levels();
        let (h, w) = (lh * scale, lw * scale);
        let mut out = Plane::zeros(h, w);
        let mut put = |p: &Plane<T>, y0: usize, x0: usize| {
            for y in 0..p.height() {
                for x in 0..p.width() {
                    out.set(y0 + y, x0 + x, p.get(y, x));
                }
            }
        };
        put(&self.low, 0, 0);
        for d in &self.details {
            let (bh, bw) = d.lh.dims();
            put(&d.lh, 0, bw);
            put(&d.hl, bh, 0);
            put(&d.hh, bh, bw);
        }
        out
    }

    /// Inverse of [`to_layout`](Self::to_layout).
    pub fn from_layout(p: &Plane<T>, levels: usize) -> Result<Self> {
        if levels == 0 {
            return Err(Error::invalid("levels must be at least 1"));
        }
        check_divisible(p.height(), p.width(), levels)?;
        let (h, w) = p.dims();
        let details = (1..=levels)
            .map(|k| {
                let (bh, bw) = (h >> k, w >> k);
                Ok(DetailBands {
                    lh: p.crop(0, bw, bh, bw)?,
                    hl: p.crop(bh, 0, bh, bw)?,
                    hh: p.crop(bh, bw, bh, bw)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MallatDecomposition {
            low: p.crop(0, 0, h >> levels, w >> levels)?,
            details,
        })
    }
}

/// Full wavelet-packet decomposition.
///
/// `nodes(l)` holds the `4^l` planes of level `l` (1-based). The child `i`
/// (0 = ll, 1 = lh, 2 = hl, 3 = hh) of the parent at position `b` on the level
/// above sits at position `4b + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketTree<T: Real = f32> {
    levels: Vec<Vec<Plane<T>>>,
}

impl<T: Real> PacketTree<T> {
    /// Builds a tree from per-level node lists, checking counts and dimensions.
    pub fn from_levels(levels: Vec<Vec<Plane<T>>>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Empty("packet tree levels"));
        }
        let mut prev: Option<(usize, usize)> = None;
        for (k, nodes) in levels.iter().enumerate() {
            let want = 4usize.pow(k as u32 + 1);
            if nodes.len() != want {
                return Err(Error::shape(format!(
                    "packet level {} needs {want} nodes, got {}",
                    k + 1,
                    nodes.len()
                )));
            }
            let dims = nodes[0].dims();
            if nodes.iter().any(|n| n.dims() != dims) {
                return Err(Error::shape(format!(
                    "packet level {} has nodes of differing sizes",
                    k + 1
                )));
            }
            if let Some((h, w)) = prev {
                if dims != (h / 2, w / 2) || h % 2 != 0 || w % 2 != 0 {
                    return Err(Error::shape(format!(
                        "packet level {} is {}x{}, expected half of {h}x{w}",
                        k + 1,
                        dims.0,
                        dims.1
                    )));
                }
            }
            prev = Some(dims);
        }
        Ok(PacketTree { levels })
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Nodes of level `l`, 1-based.
    pub fn nodes(&self, level: usize) -> &[Plane<T>] {
        &self.levels[level - 1]
    }

    pub fn nodes_mut(&mut self, level: usize) -> &mut [Plane<T>] {
        &mut self.levels[level - 1]
    }

    pub fn leaves(&self) -> &[Plane<T>] {
        self.levels.last().expect("depth >= 1")
    }

    pub fn into_levels(self) -> Vec<Vec<Plane<T>>> {
        self.levels
    }

    /// A tree of the same geometry filled with zeros.
    pub fn zeros_like(&self) -> PacketTree<T> {
        PacketTree {
            levels: self
                .levels
                .iter()
                .map(|nodes| {
                    nodes
                        .iter()
                        .map(|n| Plane::zeros(n.height(), n.width()))
                        .collect()
                })
                .collect(),
        }
    }
}

/// Requires both dimensions divisible by `2^levels`.
pub fn check_divisible(height: usize, width: usize, levels: usize) -> Result<()> {
    let divisor = 1usize << levels;
    if height % divisor != 0 {
        return Err(Error::Dimension {
            axis: "height",
            size: height,
            divisor,
        });
    }
    if width % divisor != 0 {
        return Err(Error::Dimension {
            axis: "width",
            size: width,
            divisor,
        });
    }
    Ok(())
}

#[inline]
fn butterfly<T: Real>(a: T, b: T, c: T, d: T) -> [T; 4] {
    let half = T::lit(0.5);
    let (s0, d0) = (a + b, a - b);
    let (s1, d1) = (c + d, c - d);
    [
        (s0 + s1) * half,
        (s0 - s1) * half,
        (d0 + d1) * half,
        (d0 - d1) * half,
    ]
}

pub fn dwt2<T: Real>(p: &Plane<T>) -> Result<SubbandQuad<T>> {
    check_divisible(p.height(), p.width(), 1)?;
    let (h, w) = (p.height() / 2, p.width() / 2);
    let mut out: [Vec<T>; 4] = std::array::from_fn(|_| Vec::with_capacity(h * w));
    for y in 0..h {
        let top = p.row(2 * y);
        let bottom = p.row(2 * y + 1);
        for x in 0..w {
            let q = butterfly(top[2 * x], top[2 * x + 1], bottom[2 * x], bottom[2 * x + 1]);
            for (band, v) in out.iter_mut().zip(q) {
                band.push(v);
            }
        }
    }
    let [ll, lh, hl, hh] = out.map(|d| Plane::new(h, w, d).expect("sizes match"));
    Ok(SubbandQuad { ll, lh, hl, hh })
}

pub fn iwt2<T: Real>(q: &SubbandQuad<T>) -> Result<Plane<T>> {
    for p in [&q.lh, &q.hl, &q.hh] {
        q.ll.check_same_dims(p, "subband dimensions")?;
    }
    let (h, w) = q.ll.dims();
    let mut out = Plane::zeros(2 * h, 2 * w);
    let ow = 2 * w;
    let data = out.data_mut();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let [a, b, c, d] = butterfly(
                q.ll.data()[i],
                q.lh.data()[i],
                q.hl.data()[i],
                q.hh.data()[i],
            );
            data[2 * y * ow + 2 * x] = a;
            data[2 * y * ow + 2 * x + 1] = b;
            data[(2 * y + 1) * ow + 2 * x] = c;
            data[(2 * y + 1) * ow + 2 * x + 1] = d;
        }
    }
    Ok(out)
}

pub fn dwt_multilevel<T: Real>(p: &Plane<T>, levels: usize) -> Result<MallatDecomposition<T>> {
    if levels == 0 {
        return Err(Error::invalid("levels must be at least 1"));
    }
    check_divisible(p.height(), p.width(), levels)?;
    let mut low = p.clone();
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let q = dwt2(&low)?;
        details.push(DetailBands {
            lh: q.lh,
            hl: q.hl,
            hh: q.hh,
        });
        low = q.ll;
    }
    Ok(MallatDecomposition { low, details })
}

pub fn iwt_multilevel<T: Real>(m: &MallatDecomposition<T>) -> Result<Plane<T>> {
    let mut low = m.low.clone();
    for d in m.details.iter().rev() {
        low = iwt2(&SubbandQuad::from_array([
            low,
            d.lh.clone(),
            d.hl.clone(),
            d.hh.clone(),
        ])?)?;
    }
    Ok(low)
}

pub fn packet_decompose<T: Real>(p: &Plane<T>, depth: usize) -> Result<PacketTree<T>> {
    if depth == 0 {
        return Err(Error::invalid("packet depth must be at least 1"));
    }
    check_divisible(p.height(), p.width(), depth)?;
    let mut levels: Vec<Vec<Plane<T>>> = Vec::with_capacity(depth);
    let mut current = vec![p.clone()];
    for _ in 0..depth {
        let mut next = Vec::with_capacity(current.len() * 4);
        for node in &current {
            next.extend(dwt2(node)?.into_array());
        }
        levels.push(next.clone());
        current = next;
    }
    Ok(PacketTree { levels })
}

/// Inverts a packet decomposition from its leaves alone.
pub fn packet_reconstruct<T: Real>(leaves: &[Plane<T>], depth: usize) -> Result<Plane<T>> {
    if depth == 0 || leaves.len() != 4usize.pow(depth as u32) {
        return Err(Error::shape(format!(
            "{} leaves do not form a depth-{depth} packet level",
            leaves.len()
        )));
    }
    let mut current: Vec<Plane<T>> = leaves.to_vec();
    while current.len() > 1 {
        current = collapse_level(&current)?;
    }
    Ok(current.pop().expect("one node left"))
}

fn collapse_level<T: Real>(nodes: &[Plane<T>]) -> Result<Vec<Plane<T>>> {
    nodes
        .chunks_exact(4)
        .map(|c| {
            iwt2(&SubbandQuad::from_array([
                c[0].clone(),
                c[1].clone(),
                c[2].clone(),
                c[3].clone(),
            ])?)
        })
        .collect()
}

/// Adjoint of a single-level transform; equal to [`iwt2`] for orthonormal Haar.
pub fn dwt_adjoint_scatter<T: Real>(grad: &SubbandQuad<T>) -> Result<Plane<T>> {
    iwt2(grad)
}

/// Adjoint of the map from a plane to every node of its packet tree.
///
/// Gradients at all levels are pulled back, so a loss that reads nodes at
/// several depths gets the sum of every path back to image space.
pub fn packet_adjoint_scatter<T: Real>(grad: &PacketTree<T>) -> Result<Plane<T>> {
    let depth = grad.depth();
    let mut carry: Vec<Plane<T>> = grad.nodes(depth).to_vec();
    for level in (1..depth).rev() {
        carry = collapse_level(&carry)?;
        for (c, g) in carry.iter_mut().zip(grad.nodes(level)) {
            c.add_assign(g);
        }
    }
    let mut top = collapse_level(&carry)?;
    Ok(top.pop().expect("single root"))
}

/// Packet transform of every channel of a `C×H×W` tensor, stacking the
/// `4^levels` leaves of channel `c` at output channels `c·4^levels ..`.
pub fn packet_dwt_channels<T: Real>(t: &Tensor<T>, levels: usize) -> Result<Tensor<T>> {
    let (c, h, w) = t.chw()?;
    check_divisible(h, w, levels)?;
    let mut leaves = Vec::with_capacity(c * 4usize.pow(levels as u32));
    for k in 0..c {
        let plane = t.channel(k)?;
        if levels == 0 {
            leaves.push(plane);
        } else {
            leaves.extend(packet_decompose(&plane, levels)?.into_levels().pop().unwrap());
        }
    }
    Tensor::from_planes(&leaves)
}

/// Inverse of [`packet_dwt_channels`]; also its adjoint.
pub fn packet_iwt_channels<T: Real>(t: &Tensor<T>, levels: usize) -> Result<Tensor<T>> {
    let (c, _, _) = t.chw()?;
    let group = 4usize.pow(levels as u32);
    if c % group != 0 {
        return Err(Error::shape(format!(
            "{c} channels are not divisible into groups of {group} for a {levels}-level inverse"
        )));
    }
    let planes = t.planes()?;
    let out = planes
        .chunks_exact(group)
        .map(|leaves| {
            if levels == 0 {
                Ok(leaves[0].clone())
            } else {
                packet_reconstruct(leaves, levels)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Tensor::from_planes(&out)
}
