//! Overlapping tile plans for large images and the two merge policies.
//!
//! Window starts advance by `patch − overlap`; the last start on each axis is
//! clamped to `dim − patch` so every window stays inside the image.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelMap;
use crate::plane::Tensor;

pub const DEFAULT_PATCH: usize = 1000;
pub const DEFAULT_OVERLAP: usize = 120;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TileWindow {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

impl TileWindow {
    fn key(&self) -> (usize, usize, usize, usize) {
        (self.y0, self.x0, self.h, self.w)
    }
}

/// Serialized as the plan manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilePlan {
    pub image_w: usize,
    pub image_h: usize,
    pub patch: usize,
    pub overlap: usize,
    pub windows: Vec<TileWindow>,
}

/// Window starts and extent along one axis.
pub fn axis_starts(dim: usize, patch: usize, overlap: usize) -> (Vec<usize>, usize) {
    if dim <= patch {
        return (vec![0], dim);
    }
    let stride = patch - overlap;
    let mut starts = Vec::new();
    let mut s = 0;
    while s + patch < dim {
        starts.push(s);
        s += stride;
    }
    starts.push(dim - patch);
    (starts, patch)
}

pub fn plan_tiles(image_w: usize, image_h: usize, patch: usize, overlap: usize) -> Result<TilePlan> {
    if patch == 0 {
        return Err(Error::invalid("patch size must be positive"));
    }
    if overlap >= patch {
        return Err(Error::invalid(format!(
            "overlap {overlap} must be smaller than patch {patch}"
        )));
    }
    if image_w == 0 || image_h == 0 {
        return Err(Error::invalid("image dimensions must be positive"));
    }
    let (xs, w) = axis_starts(image_w, patch, overlap);
    let (ys, h) = axis_starts(image_h, patch, overlap);
    let windows = ys
        .iter()
        .flat_map(|&y0| xs.iter().map(move |&x0| TileWindow { x0, y0, w, h }))
        .collect();
    Ok(TilePlan {
        image_w,
        image_h,
        patch,
        overlap,
        windows,
    })
}

impl TilePlan {
    /// Checks that every window lies inside the image.
    pub fn validate(&self) -> Result<()> {
        if self.windows.is_empty() {
            return Err(Error::Empty("tile plan windows"));
        }
        for win in &self.windows {
            if win.w == 0 || win.h == 0 || win.x0 + win.w > self.image_w || win.y0 + win.h > self.image_h
            {
                return Err(Error::invalid(format!(
                    "window {win:?} outside {}x{} image",
                    self.image_w, self.image_h
                )));
            }
        }
        Ok(())
    }

    /// Number of windows covering each pixel, row-major.
    pub fn coverage(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.image_w * self.image_h];
        for win in &self.windows {
            for y in win.y0..win.y0 + win.h {
                let row = &mut counts[y * self.image_w + win.x0..y * self.image_w + win.x0 + win.w];
                row.iter_mut().for_each(|c| *c += 1);
            }
        }
        counts
    }

    /// Window indices in canonical (y0, x0, h, w) order.
    fn canonical_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.windows.len()).collect();
        order.sort_by_key(|&i| (self.windows[i].key(), i));
        order
    }

    pub fn crop_labels(&self, labels: &LabelMap) -> Result<Vec<LabelMap>> {
        if labels.dims() != (self.image_h, self.image_w) {
            return Err(Error::shape(format!(
                "label map is {}x{}, plan expects {}x{}",
                labels.width(),
                labels.height(),
                self.image_w,
                self.image_h
            )));
        }
        self.windows
            .iter()
            .map(|w| labels.crop(w.y0, w.x0, w.h, w.w))
            .collect()
    }
}

/// Per-pixel majority vote over covering patches; ties go to the lowest id.
pub fn merge_labels(plan: &TilePlan, patches: &[LabelMap]) -> Result<LabelMap> {
    plan.validate()?;
    if patches.len() != plan.windows.len() {
        return Err(Error::shape(format!(
            "{} patches for {} windows",
            patches.len(),
            plan.windows.len()
        )));
    }
    for (win, p) in plan.windows.iter().zip(patches) {
        if p.dims() != (win.h, win.w) {
            return Err(Error::shape(format!(
                "patch is {}x{}, window {win:?} needs {}x{}",
                p.width(),
                p.height(),
                win.w,
                win.h
            )));
        }
    }
    let (w, h) = (plan.image_w, plan.image_h);
    let mut out = LabelMap::filled(h, w, 0);
    let mut ballot: Vec<u8> = Vec::new();
    for y in 0..h {
        let rows: Vec<usize> = plan
            .windows
            .iter()
            .enumerate()
            .filter(|(_, win)| y >= win.y0 && y < win.y0 + win.h)
            .map(|(i, _)| i)
            .collect();
        for x in 0..w {
            ballot.clear();
            for &i in &rows {
                let win = &plan.windows[i];
                if x >= win.x0 && x < win.x0 + win.w {
                    ballot.push(patches[i].get(y - win.y0, x - win.x0));
                }
            }
            if ballot.is_empty() {
                return Err(Error::invalid(format!("pixel ({x},{y}) not covered by any window")));
            }
            // Sorted ballots make the tally order-free; the first longest run
            // is the lowest id among the tied.
            ballot.sort_unstable();
            let (mut best, mut best_n) = (ballot[0], 0);
            let mut k = 0;
            while k < ballot.len() {
                let run = ballot[k..].iter().take_while(|&&l| l == ballot[k]).count();
                if run > best_n {
                    best = ballot[k];
                    best_n = run;
                }
                k += run;
            }
            out.set(y, x, best);
        }
    }
    Ok(out)
}

/// Equal-weight mean of overlapping `C×h×w` logit patches into `C×H×W`.
///
/// Contributions are summed in canonical window order, so permuting the plan's
/// windows together with their patches yields bit-identical output.
pub fn merge_logits(plan: &TilePlan, patches: &[Tensor]) -> Result<Tensor> {
    plan.validate()?;
    if patches.len() != plan.windows.len() {
        return Err(Error::shape(format!(
            "{} patches for {} windows",
            patches.len(),
            plan.windows.len()
        )));
    }
    let c = patches[0].chw()?.0;
    for (win, p) in plan.windows.iter().zip(patches) {
        if p.chw()? != (c, win.h, win.w) {
            return Err(Error::shape(format!(
                "patch {:?} does not match window {win:?} with {c} channels",
                p.dims()
            )));
        }
    }
    let (w, h) = (plan.image_w, plan.image_h);
    let mut sums = vec![0.0f64; c * h * w];
    let mut counts = vec![0u32; h * w];
    for i in plan.canonical_order() {
        let win = &plan.windows[i];
        let data = patches[i].data();
        for y in 0..win.h {
            for x in 0..win.w {
                let p = (win.y0 + y) * w + win.x0 + x;
                counts[p] += 1;
                for k in 0..c {
                    sums[k * h * w + p] += data[(k * win.h + y) * win.w + x] as f64;
                }
            }
        }
    }
    if let Some(p) = counts.iter().position(|&n| n == 0) {
        return Err(Error::invalid(format!(
            "pixel ({},{}) not covered by any window",
            p % w,
            p / w
        )));
    }
    let data = sums
        .iter()
        .enumerate()
        .map(|(j, &s)| (s / counts[j % (h * w)] as f64) as f32)
        .collect();
    Tensor::new(vec![c, h, w], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn full_size_plan() {
        let plan = plan_tiles(5120, 5120, 1000, 120).unwrap();
        let (xs, _) = axis_starts(5120, 1000, 120);
        assert_eq!(xs, vec![0, 880, 1760, 2640, 3520, 4120]);
        assert_eq!(plan.windows.len(), 36);
        assert_eq!(plan.windows[1], TileWindow { x0: 880, y0: 0, w: 1000, h: 1000 });
    }

    #[test]
    fn small_image_single_window() {
        let plan = plan_tiles(800, 800, 1000, 120).unwrap();
        assert_eq!(plan.windows, vec![TileWindow { x0: 0, y0: 0, w: 800, h: 800 }]);
    }

    #[test]
    fn overlap_must_be_below_patch() {
        assert!(plan_tiles(5000, 5000, 1000, 1000).is_err());
        assert!(plan_tiles(5000, 5000, 0, 0).is_err());
    }

    #[test]
    fn neighbor_overlap_is_exact_except_last() {
        let (xs, w) = axis_starts(2500, 1000, 120);
        for pair in xs.windows(2) {
            let inter = pair[0] + w - pair[1];
            if pair[1] == 2500 - 1000 {
                assert!(inter >= 120);
            } else {
                assert_eq!(inter, 120);
            }
        }
    }

    #[test]
    fn majority_and_tie_break() {
        let plan = TilePlan {
            image_w: 1,
            image_h: 1,
            patch: 1,
            overlap: 0,
            windows: vec![TileWindow { x0: 0, y0: 0, w: 1, h: 1 }; 3],
        };
        let p = |l| LabelMap::filled(1, 1, l);
        assert_eq!(merge_labels(&plan, &[p(1), p(2), p(1)]).unwrap().get(0, 0), 1);
        assert_eq!(merge_labels(&plan, &[p(2), p(2), p(1)]).unwrap().get(0, 0), 2);
        let two = TilePlan {
            windows: plan.windows[..2].to_vec(),
            ..plan.clone()
        };
        assert_eq!(merge_labels(&two, &[p(2), p(1)]).unwrap().get(0, 0), 1);
        assert!(merge_labels(&two, &[p(2)]).is_err());
    }

    #[test]
    fn crop_merge_identity() {
        let mut rng = SeededRng::new(5);
        let m = LabelMap::new(37, 23, (0..37 * 23).map(|_| rng.below(5) as u8).collect()).unwrap();
        let plan = plan_tiles(23, 37, 10, 3).unwrap();
        assert_eq!(merge_labels(&plan, &plan.crop_labels(&m).unwrap()).unwrap(), m);
    }

    #[test]
    fn logits_average() {
        let plan = TilePlan {
            image_w: 1,
            image_h: 1,
            patch: 1,
            overlap: 0,
            windows: vec![TileWindow { x0: 0, y0: 0, w: 1, h: 1 }; 2],
        };
        let a = Tensor::new(vec![1, 1, 1], vec![0.0]).unwrap();
        let b = Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap();
        assert_eq!(merge_logits(&plan, &[a, b]).unwrap().data(), &[0.5]);
    }

    #[test]
    fn constant_logit_patches_stay_constant() {
        let plan = plan_tiles(30, 20, 8, 3).unwrap();
        let patches: Vec<Tensor> = plan
            .windows
            .iter()
            .map(|w| Tensor::new(vec![2, w.h, w.w], vec![0.3; 2 * w.h * w.w]).unwrap())
            .collect();
        let m = merge_logits(&plan, &patches).unwrap();
        assert_eq!(m.dims(), &[2, 20, 30]);
        assert!(m.data().iter().all(|&v| (v - 0.3).abs() < 1e-7));
    }

    #[test]
    fn manifest_field_names() {
        let plan = plan_tiles(4, 4, 4, 1).unwrap();
        let json = serde_json::to_value(&plan).unwrap();
        assert_eq!(
            json,
            serde_json::json!({
                "image_w": 4, "image_h": 4, "patch": 4, "overlap": 1,
                "windows": [{"x0": 0, "y0": 0, "w": 4, "h": 4}]
            })
        );
    }
}
