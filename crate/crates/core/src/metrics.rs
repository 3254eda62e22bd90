//! Confusion-matrix segmentation metrics.
//!
//! Categories absent from both ground truth and prediction (TP + FP + FN = 0)
//! are left out of the macro means.

use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{LabelMap, IGNORE};

/// Rows are ground truth, columns are prediction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    categories: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(categories: usize) -> Result<Self> {
        if categories == 0 || categories > IGNORE as usize {
            return Err(Error::invalid(format!(
                "category count must be in 1..={}, got {categories}",
                IGNORE
            )));
        }
        Ok(ConfusionMatrix {
            categories,
            counts: vec![0; categories * categories],
        })
    }

    pub fn from_counts(categories: usize, counts: Vec<u64>) -> Result<Self> {
        let mut cm = Self::new(categories)?;
        if counts.len() != categories * categories {
            return Err(Error::shape(format!(
                "{categories}x{categories} matrix needs {} counts, got {}",
                categories * categories,
                counts.len()
            )));
        }
        cm.counts = counts;
        Ok(cm)
    }

    pub fn categories(&self) -> usize {
        self.categories
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.categories + pred]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Adds one image pair. Pixels ignored in either map are skipped.
    pub fn accumulate(&mut self, pred: &LabelMap, gt: &LabelMap) -> Result<()> {
        if pred.dims() != gt.dims() {
            return Err(Error::shape(format!(
                "prediction is {}x{}, ground truth is {}x{}",
                pred.width(),
                pred.height(),
                gt.width(),
                gt.height()
            )));
        }
        pred.validate(self.categories)?;
        gt.validate(self.categories)?;
        for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
            if p == IGNORE || g == IGNORE {
                continue;
            }
            self.counts[g as usize * self.categories + p as usize] += 1;
        }
        Ok(())
    }

    fn tp_fp_fn(&self, c: usize) -> (u64, u64, u64) {
        let tp = self.get(c, c);
        let row: u64 = (0..self.categories).map(|p| self.get(c, p)).sum();
        let col: u64 = (0..self.categories).map(|g| self.get(g, c)).sum();
        (tp, col - tp, row - tp)
    }

    fn check_nonempty(&self) -> Result<()> {
        if self.total() == 0 {
            Err(Error::Empty("confusion matrix"))
        } else {
            Ok(())
        }
    }

    /// Per-category IoU; `None` for categories with no support.
    pub fn iou_per_category(&self) -> Vec<Option<f64>> {
        (0..self.categories)
            .map(|c| {
                let (tp, fp, fnn) = self.tp_fp_fn(c);
                let denom = tp + fp + fnn;
                (denom > 0).then(|| tp as f64 / denom as f64)
            })
            .collect()
    }

    pub fn f1_per_category(&self) -> Vec<Option<f64>> {
        (0..self.categories)
            .map(|c| {
                let (tp, fp, fnn) = self.tp_fp_fn(c);
                let denom = 2 * tp + fp + fnn;
                (denom > 0).then(|| 2.0 * tp as f64 / denom as f64)
            })
            .collect()
    }

    pub fn miou(&self) -> Result<f64> {
        self.check_nonempty()?;
        Ok(macro_mean(&self.iou_per_category()))
    }

    /// Macro-averaged F1.
    pub fn f1(&self) -> Result<f64> {
        self.check_nonempty()?;
        Ok(macro_mean(&self.f1_per_category()))
    }

    pub fn accuracy(&self) -> Result<f64> {
        self.check_nonempty()?;
        let trace: u64 = (0..self.categories).map(|c| self.get(c, c)).sum();
        Ok(trace as f64 / self.total() as f64)
    }

    pub fn report(&self) -> Result<EvalReport> {
        let iou = self.iou_per_category();
        let f1 = self.f1_per_category();
        Ok(EvalReport {
            miou: self.miou()?,
            f1: self.f1()?,
            accuracy: self.accuracy()?,
            per_category: (0..self.categories)
                .map(|id| CategoryScore {
                    id,
                    iou: iou[id],
                    f1: f1[id],
                })
                .collect(),
        })
    }
}

fn macro_mean(values: &[Option<f64>]) -> f64 {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    present.iter().sum::<f64>() / present.len() as f64
}

impl AddAssign<&ConfusionMatrix> for ConfusionMatrix {
    fn add_assign(&mut self, rhs: &ConfusionMatrix) {
        assert_eq!(self.categories, rhs.categories, "merging matrices of different sizes");
        for (a, b) in self.counts.iter_mut().zip(&rhs.counts) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub id: usize,
    pub iou: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub miou: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub per_category: Vec<CategoryScore>,
}
