use super::GazeError;
use crate::geometry::PixelBox;
use serde::{Deserialize, Serialize};

pub const DEFAULT_SIGMA_PX: f64 = 57.0;

/// Isotropic Gaussian focal density over image pixels, normalized to sum 1.
/// `center` is in image coordinates (x right, y down).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub width: u32,
    pub height: u32,
    pub center: (f64, f64),
    pub sigma_px: f64,
    /// Set when the center falls outside the image.
    pub off_image: bool,
    #[serde(skip)]
    pub grid: Vec<f64>,
}

fn gaussian_1d(n: u32, c: f64, sigma: f64) -> Vec<f64> {
    let k = -0.5 / (sigma * sigma);
    (0..n).map(|i| {
        let d = i as f64 - c;
        (k * d * d).exp()
    }).collect()
}

pub fn build_heatmap(center: (f64, f64), width: u32, height: u32, sigma_px: f64) -> Result<Heatmap, GazeError> {
    if !(sigma_px > 0.0) || !sigma_px.is_finite() {
        return Err(GazeError::Sigma(sigma_px));
    }
    let gx = gaussian_1d(width, center.0, sigma_px);
    let gy = gaussian_1d(height, center.1, sigma_px);
    let sx: f64 = gx.iter().sum();
    let sy: f64 = gy.iter().sum();
    if !(sx > 0.0 && sy > 0.0) {
        return Err(GazeError::EmptyHeatmap);
    }
    let gx: Vec<f64> = gx.iter().map(|v| v / sx).collect();
    let gy: Vec<f64> = gy.iter().map(|v| v / sy).collect();
    let mut grid = Vec::with_capacity(width as usize * height as usize);
    for y in &gy {
        grid.extend(gx.iter().map(|x| x * y));
    }
    let off_image = !(center.0 >= -0.5 && center.0 < width as f64 - 0.5 && center.1 >= -0.5 && center.1 < height as f64 - 0.5);
    Ok(Heatmap { width, height, center, sigma_px, off_image, grid })
}

impl Heatmap {
    pub fn at(&self, x: u32, y: u32) -> f64 {
        self.grid[y as usize * self.width as usize + x as usize]
    }

    pub fn total(&self) -> f64 {
        self.grid.iter().sum()
    }

    pub fn max_density(&self) -> f64 {
        self.grid.iter().copied().fold(0.0, f64::max)
    }

    /// First pixel (row-major) with the maximal density.
    pub fn argmax(&self) -> (u32, u32) {
        let mut best = 0;
        for (i, v) in self.grid.iter().enumerate() {
            if *v > self.grid[best] {
                best = i;
            }
        }
        ((best % self.width as usize) as u32, (best / self.width as usize) as u32)
    }

    /// Density mass inside an inclusive box (pixels outside the image count zero).
    pub fn mass_in(&self, b: &PixelBox) -> f64 {
        if b.x0 >= self.width || b.y0 >= self.height {
            return 0.0;
        }
        let x1 = b.x1.min(self.width - 1);
        let y1 = b.y1.min(self.height - 1);
        let mut s = 0.0;
        for y in b.y0..=y1 {
            let row = y as usize * self.width as usize;
            s += self.grid[row + b.x0 as usize..=row + x1 as usize].iter().sum::<f64>();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sigma_must_be_positive() {
        assert_eq!(build_heatmap((1.0, 1.0), 4, 4, 0.0), Err(GazeError::Sigma(0.0)));
    }

    #[test]
    fn narrow_kernel_concentrates() {
        let h = build_heatmap((100.0, 50.0), 200, 100, 0.5).unwrap();
        let near = h.mass_in(&PixelBox::new(98, 48, 102, 52));
        assert!(near > 0.99);
    }

    #[test]
    fn off_image_center_is_flagged_but_valid() {
        let h = build_heatmap((-40.0, 700.0), 640, 480, 57.0).unwrap();
        assert!(h.off_image);
        assert!((h.total() - 1.0).abs() < 1e-9);
        assert_eq!(h.argmax(), (0, 479));
    }

    #[test]
    fn box_far_outside_three_sigma_has_little_mass() {
        let h = build_heatmap((100.0, 100.0), 640, 480, 57.0).unwrap();
        let far = PixelBox::new(100 + 172, 100 + 172, 400, 400);
        assert!(h.mass_in(&far) < 0.02);
    }

    proptest! {
        #[test]
        fn sums_to_one_and_argmax_at_rounded_center(cx in 0.0f64..639.0, cy in 0.0f64..479.0) {
            let h = build_heatmap((cx, cy), 640, 480, 57.0).unwrap();
            prop_assert!((h.total() - 1.0).abs() < 1e-6);
            let (ax, ay) = h.argmax();
            prop_assert!((ax as f64 - cx).abs() <= 0.5 + 1e-9 && (ay as f64 - cy).abs() <= 0.5 + 1e-9);
            prop_assert!(!h.off_image);
        }

        #[test]
        fn score_is_additive(cx in 0.0f64..639.0, cy in 0.0f64..479.0, x0 in 0u32..600, y0 in 0u32..440, w in 2u32..40, hgt in 1u32..40, split in 1u32..40) {
            let h = build_heatmap((cx, cy), 640, 480, 57.0).unwrap();
            let b = PixelBox::new(x0, y0, x0 + w, y0 + hgt);
            let s = x0 + split.min(w);
            let left = PixelBox::new(x0, y0, s - 1, y0 + hgt);
            let right = PixelBox::new(s, y0, x0 + w, y0 + hgt);
            prop_assert!((h.mass_in(&left) + h.mass_in(&right) - h.mass_in(&b)).abs() < 1e-9);
        }
    }
}
