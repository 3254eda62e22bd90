//! Procedural training scenes: rectangles and ellipses over a background.

use crate::error::{Error, Result};
use crate::labels::LabelMap;
use crate::plane::Tensor;
use crate::rng::SeededRng;

const NOISE_SIGMA: f64 = 0.05;
const MIN_SHAPES: usize = 3;
const MAX_SHAPES: usize = 6;

struct Style {
    color: [f64; 3],
    amplitude: f64,
    freq_y: f64,
    freq_x: f64,
    phase: f64,
}

impl Style {
    fn draw(rng: &mut SeededRng) -> Self {
        Style {
            color: [rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)],
            amplitude: rng.uniform(0.03, 0.12),
            freq_y: rng.uniform(0.1, 0.8),
            freq_x: rng.uniform(0.1, 0.8),
            phase: rng.uniform(0.0, std::f64::consts::TAU),
        }
    }

    fn value(&self, channel: usize, y: usize, x: usize) -> f64 {
        let t = self.freq_y * y as f64 + self.freq_x * x as f64 + self.phase + channel as f64;
        self.color[channel] + self.amplitude * libm::sin(t)
    }
}

fn paint_shapes(rng: &mut SeededRng, h: usize, w: usize, categories: usize) -> LabelMap {
    let mut labels = LabelMap::filled(h, w, 0);
    let shapes = rng.range_inclusive(MIN_SHAPES, MAX_SHAPES);
    for _ in 0..shapes {
        let category = rng.range_inclusive(1, categories - 1) as u8;
        let sh = rng.range_inclusive((h / 6).max(1), (h / 2).max(1));
        let sw = rng.range_inclusive((w / 6).max(1), (w / 2).max(1));
        let y0 = rng.range_inclusive(0, h - sh);
        let x0 = rng.range_inclusive(0, w - sw);
        let ellipse = rng.below(2) == 1;
        let (cy, cx) = (y0 as f64 + sh as f64 / 2.0, x0 as f64 + sw as f64 / 2.0);
        let (ry, rx) = (sh as f64 / 2.0, sw as f64 / 2.0);
        for y in y0..y0 + sh {
            for x in x0..x0 + sw {
                let inside = !ellipse || {
                    let dy = (y as f64 + 0.5 - cy) / ry;
                    let dx = (x as f64 + 0.5 - cx) / rx;
                    dy * dy + dx * dx <= 1.0
                };
                if inside {
                    labels.set(y, x, category);
                }
            }
        }
    }
    labels
}

fn distinct(labels: &LabelMap) -> usize {
    let mut seen = [false; 256];
    labels.labels().iter().for_each(|&l| seen[l as usize] = true);
    seen.iter().filter(|&&s| s).count()
}

/// One textured scene and its labels. Shapes are redrawn until at least two
/// categories are visible.
pub fn gen_scene(
    rng: &mut SeededRng,
    h: usize,
    w: usize,
    num_categories: usize,
) -> Result<(Tensor, LabelMap)> {
    if !(2..=8).contains(&num_categories) {
        return Err(Error::invalid(format!(
            "scene category count must be in 2..=8, got {num_categories}"
        )));
    }
    if h < 2 || w < 2 {
        return Err(Error::invalid(format!("scene must be at least 2x2, got {h}x{w}")));
    }
    let styles: Vec<Style> = (0..num_categories).map(|_| Style::draw(rng)).collect();
    let labels = loop {
        let l = paint_shapes(rng, h, w, num_categories);
        if distinct(&l) >= 2 {
            break l;
        }
    };
    let mut data = vec![0.0f32; 3 * h * w];
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                let style = &styles[labels.get(y, x) as usize];
                let v = style.value(c, y, x) + NOISE_SIGMA * rng.normal();
                data[(c * h + y) * w + x] = v.clamp(0.0, 1.0) as f32;
            }
        }
    }
    Ok((Tensor::new(vec![3, h, w], data)?, labels))
}
