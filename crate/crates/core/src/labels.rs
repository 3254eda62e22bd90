use crate::error::{Error, Result};

/// Per-pixel category ids. [`IGNORE`] marks pixels excluded from losses and metrics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

pub const IGNORE: u8 = 255;

impl LabelMap {
    pub fn new(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "label map dimensions must be positive, got {height}x{width}"
            )));
        }
        if labels.len() != height * width {
            return Err(Error::shape(format!(
                "{height}x{width} label map needs {} labels, got {}",
                height * width,
                labels.len()
            )));
        }
        Ok(LabelMap {
            height,
            width,
            labels,
        })
    }

    pub fn filled(height: usize, width: usize, label: u8) -> Self {
        assert!(height > 0 && width > 0);
        LabelMap {
            height,
            width,
            labels: vec![label; height * width],
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

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [u8] {
        &mut self.labels
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: u8) {
        self.labels[y * self.width + x] = v;
    }

    /// Checks that every non-ignore label is below `categories`.
    pub fn validate(&self, categories: usize) -> Result<()> {
        match self
            .labels
            .iter()
            .find(|&&l| l != IGNORE && l as usize >= categories)
        {
            Some(&label) => Err(Error::LabelOutOfRange { label, categories }),
            None => Ok(()),
        }
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<LabelMap> {
        if h == 0 || w == 0 || y0 + h > self.height || x0 + w > self.width {
            return Err(Error::invalid(format!(
                "crop {h}x{w} at ({y0},{x0}) outside {}x{} label map",
                self.height, self.width
            )));
        }
        let mut labels = Vec::with_capacity(h * w);
        for y in y0..y0 + h {
            labels.extend_from_slice(&self.labels[y * self.width + x0..y * self.width + x0 + w]);
        }
        Ok(LabelMap {
            height: h,
            width: w,
            labels,
        })
    }

    /// Applies `f` to every non-ignore label.
    pub fn relabel(&self, f: impl Fn(u8) -> u8) -> LabelMap {
        LabelMap {
            height: self.height,
            width: self.width,
            labels: self
                .labels
                .iter()
                .map(|&l| if l == IGNORE { l } else { f(l) })
                .collect(),
        }
    }

    pub fn valid_pixels(&self) -> usize {
        self.labels.iter().filter(|&&l| l != IGNORE).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_allows_ignore() {
        let m = LabelMap::new(1, 3, vec![0, IGNORE, 3]).unwrap();
        assert!(m.validate(4).is_ok());
        assert!(matches!(
            m.validate(3),
            Err(Error::LabelOutOfRange { label: 3, categories: 3 })
        ));
    }

    #[test]
    fn crop_extracts_window() {
        let m = LabelMap::new(2, 3, vec![0, 1, 2, 3, 4, 5]).unwrap();
        assert_eq!(m.crop(1, 1, 1, 2).unwrap().labels(), &[4, 5]);
        assert!(m.crop(1, 2, 1, 2).is_err());
    }
}
