//! Scene context richness of label maps.
//!
//! `R = −Σ_c O_c^{1/q} · p_c · ln p_c`, where `O_c` is the mean number of
//! instances of category `c` per sampled region and `p_c` its mean pixel
//! fraction per region. Instances are 4-connected components of at least
//! `min_area` pixels, counted inside each region.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{LabelMap, IGNORE};
use crate::rng::SeededRng;

pub const DEFAULT_Q: f64 = 2.0;
pub const DEFAULT_MIN_AREA: usize = 32;
pub const DEFAULT_REGION_SIZE: usize = 512;
pub const DEFAULT_REGION_COUNT: usize = 64;

/// Connected components of one category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    /// Pixel indices (row-major) of each retained component.
    pub masks: Vec<Vec<usize>>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.masks.len()
    }
}

/// Maximal 4-connected sets of `category`, dropping those below `min_area`.
pub fn connected_components(
    labels: &LabelMap,
    category: u8,
    min_area: usize,
    categories: usize,
) -> Result<Components> {
    if category as usize >= categories {
        return Err(Error::LabelOutOfRange {
            label: category,
            categories,
        });
    }
    let (h, w) = labels.dims();
    let data = labels.labels();
    let mut seen = vec![false; h * w];
    let mut masks = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if seen[start] || data[start] != category {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut mask = Vec::new();
        while let Some(p) = queue.pop_front() {
            mask.push(p);
            let (y, x) = (p / w, p % w);
            let mut visit = |q: usize| {
                if !seen[q] && data[q] == category {
                    seen[q] = true;
                    queue.push_back(q);
                }
            };
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
        }
        if mask.len() >= min_area {
            mask.sort_unstable();
            masks.push(mask);
        }
    }
    Ok(Components { masks })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionStats {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
    /// Pixel fraction per category over non-ignore pixels; all zero when the
    /// region holds only ignore pixels.
    pub fractions: Vec<f64>,
    pub instances: Vec<usize>,
}

/// Statistics of one region of `labels`.
pub fn region_stats(
    labels: &LabelMap,
    x0: usize,
    y0: usize,
    width: usize,
    height: usize,
    categories: usize,
    min_area: usize,
) -> Result<RegionStats> {
    let crop = labels.crop(y0, x0, height, width)?;
    crop.validate(categories)?;
    let mut counts = vec![0usize; categories];
    for &l in crop.labels() {
        if l != IGNORE {
            counts[l as usize] += 1;
        }
    }
    let valid: usize = counts.iter().sum();
    let fractions = counts
        .iter()
        .map(|&n| if valid == 0 { 0.0 } else { n as f64 / valid as f64 })
        .collect();
    let instances = (0..categories)
        .map(|c| {
            if counts[c] == 0 {
                Ok(0)
            } else {
                connected_components(&crop, c as u8, min_area, categories).map(|cc| cc.count())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RegionStats {
        x0,
        y0,
        width,
        height,
        fractions,
        instances,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionSampling {
    pub width: usize,
    pub height: usize,
    pub count: usize,
    pub min_area: usize,
}

impl Default for RegionSampling {
    fn default() -> Self {
        RegionSampling {
            width: DEFAULT_REGION_SIZE,
            height: DEFAULT_REGION_SIZE,
            count: DEFAULT_REGION_COUNT,
            min_area: DEFAULT_MIN_AREA,
        }
    }
}

/// Samples region corners uniformly, then evaluates each region.
///
/// Corners are drawn up front in order, so the result does not depend on how
/// the region evaluations are scheduled.
pub fn sample_regions(
    labels: &LabelMap,
    rng: &mut SeededRng,
    sampling: &RegionSampling,
    categories: usize,
) -> Result<Vec<RegionStats>> {
    let (h, w) = labels.dims();
    if sampling.width == 0 || sampling.height == 0 {
        return Err(Error::invalid("region size must be positive"));
    }
    if sampling.width > w || sampling.height > h {
        return Err(Error::invalid(format!(
            "region {}x{} larger than {w}x{h} label map",
            sampling.width, sampling.height
        )));
    }
    let corners: Vec<(usize, usize)> = (0..sampling.count)
        .map(|_| {
            let x0 = rng.range_inclusive(0, w - sampling.width);
            let y0 = rng.range_inclusive(0, h - sampling.height);
            (x0, y0)
        })
        .collect();
    corners
        .into_par_iter()
        .map(|(x0, y0)| {
            region_stats(
                labels,
                x0,
                y0,
                sampling.width,
                sampling.height,
                categories,
                sampling.min_area,
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRichness {
    pub id: usize,
    #[serde(rename = "O")]
    pub mean_instances: f64,
    #[serde(rename = "p")]
    pub mean_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RichnessReport {
    #[serde(rename = "R")]
    pub richness: f64,
    pub q: f64,
    pub regions: usize,
    pub per_category: Vec<CategoryRichness>,
}

pub fn richness_score(stats: &[RegionStats], q: f64) -> Result<RichnessReport> {
    let first = stats.first().ok_or(Error::Empty("region statistics"))?;
    if !(q.is_finite() && q > 0.0) {
        return Err(Error::invalid(format!("temperature q must be positive, got {q}")));
    }
    let categories = first.fractions.len();
    if stats
        .iter()
        .any(|s| s.fractions.len() != categories || s.instances.len() != categories)
    {
        return Err(Error::shape("regions disagree on the category count"));
    }
    let n = stats.len() as f64;
    let per_category: Vec<CategoryRichness> = (0..categories)
        .map(|c| CategoryRichness {
            id: c,
            mean_instances: stats.iter().map(|s| s.instances[c] as f64).sum::<f64>() / n,
            mean_fraction: stats.iter().map(|s| s.fractions[c]).sum::<f64>() / n,
        })
        .collect();
    let richness = -per_category
        .iter()
        .filter(|c| c.mean_fraction > 0.0)
        .map(|c| c.mean_instances.powf(1.0 / q) * c.mean_fraction * c.mean_fraction.ln())
        .sum::<f64>();
    // p ln p is exactly zero at p = 1; avoid reporting -0.
    let richness = if richness == 0.0 { 0.0 } else { richness };
    Ok(RichnessReport {
        richness,
        q,
        regions: stats.len(),
        per_category,
    })
}
