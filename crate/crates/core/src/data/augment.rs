use rand::Rng;
use serde::{Deserialize, Serialize};

use super::image::{sample_bilinear, ImageSample, DEFAULT_RESCALE};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Training-time augmentation. Intensity rescaling happens at decode; flip,
/// shear and zoom are drawn per sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    pub rescale: f32,
    /// Shear angles are drawn uniformly from `[-shear_degrees, shear_degrees]`.
    pub shear_degrees: f32,
    pub flip_probability: f64,
    pub zoom_range: (f32, f32),
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            rescale: DEFAULT_RESCALE,
            shear_degrees: 10.0,
            flip_probability: 0.5,
            zoom_range: (0.9, 1.1),
            seed: 0,
        }
    }
}

impl AugmentationConfig {
    /// No flips, no shear, unit zoom.
    pub fn identity() -> Self {
        Self {
            shear_degrees: 0.0,
            flip_probability: 0.0,
            zoom_range: (1.0, 1.0),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.zoom_range;
        if !(0.5..=2.0).contains(&lo) || !(0.5..=2.0).contains(&hi) || lo > hi {
            return Err(Error::invalid(format!(
                "zoom range {:?} outside [0.5, 2.0]",
                self.zoom_range
            )));
        }
        if !(0.0..=45.0).contains(&self.shear_degrees) {
            return Err(Error::invalid(format!(
                "shear {} outside [0, 45] degrees",
                self.shear_degrees
            )));
        }
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(Error::invalid("flip probability must lie in [0, 1]"));
        }
        if !(self.rescale > 0.0 && self.rescale.is_finite()) {
            return Err(Error::invalid("rescale factor must be positive"));
        }
        Ok(())
    }
}

/// The random draws for one sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentParams {
    pub flip: bool,
    pub shear_degrees: f32,
    pub zoom: f32,
}

impl AugmentParams {
    pub fn draw(config: &AugmentationConfig, rng: &mut impl Rng) -> Self {
        let flip = rng.random_bool(config.flip_probability);
        let s = config.shear_degrees;
        let shear_degrees = if s > 0.0 {
            rng.random_range(-s..=s)
        } else {
            0.0
        };
        let (lo, hi) = config.zoom_range;
        let zoom = if hi > lo {
            rng.random_range(lo..=hi)
        } else {
            lo
        };
        Self {
            flip,
            shear_degrees,
            zoom,
        }
    }
}

/// Mirrors an `(H, W, 3)` tensor left to right.
pub fn flip_horizontal(pixels: &Tensor<f32>) -> Tensor<f32> {
    let (h, w) = (pixels.shape()[0], pixels.shape()[1]);
    let src = pixels.data();
    let mut out = Vec::with_capacity(src.len());
    for y in 0..h {
        for x in (0..w).rev() {
            let at = (y * w + x) * 3;
            out.extend_from_slice(&src[at..at + 3]);
        }
    }
    Tensor::new(pixels.shape().to_vec(), out).expect("same shape")
}

/// Shear (horizontal, about the centre) and zoom (about the centre) by
/// inverse mapping with bilinear sampling. Samples falling outside the image
/// replicate the nearest edge pixel.
pub fn shear_zoom(pixels: &Tensor<f32>, shear_degrees: f32, zoom: f32) -> Tensor<f32> {
    if shear_degrees == 0.0 && zoom == 1.0 {
        return pixels.clone();
    }
    let (h, w) = (pixels.shape()[0], pixels.shape()[1]);
    let (cx, cy) = ((w as f32 - 1.0) / 2.0, (h as f32 - 1.0) / 2.0);
    let shear = shear_degrees.to_radians().tan();
    let mut out = Vec::with_capacity(pixels.len());
    let mut px = [0.0f32; 3];
    for y in 0..h {
        let v = (y as f32 - cy) / zoom;
        for x in 0..w {
            let u = (x as f32 - cx) / zoom - shear * v;
            sample_bilinear(pixels.data(), w, h, u + cx, v + cy, &mut px);
            out.extend(px.iter().map(|p| p.clamp(0.0, 1.0)));
        }
    }
    Tensor::new(pixels.shape().to_vec(), out).expect("same shape")
}

pub fn apply(sample: &ImageSample, params: AugmentParams) -> ImageSample {
    let flipped;
    let base = if params.flip {
        flipped = flip_horizontal(&sample.pixels);
        &flipped
    } else {
        &sample.pixels
    };
    ImageSample {
        pixels: shear_zoom(base, params.shear_degrees, params.zoom),
        label: sample.label,
        path: sample.path.clone(),
    }
}

/// Draws flip / shear / zoom from `rng` and applies them. The label is
/// unchanged and pixels stay in [0,1].
pub fn augment(
    sample: &ImageSample,
    config: &AugmentationConfig,
    rng: &mut impl Rng,
) -> ImageSample {
    apply(sample, AugmentParams::draw(config, rng))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random_sample(h: usize, w: usize, seed: u64) -> ImageSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..h * w * 3)
            .map(|_| rng.random_range(0.0f32..=1.0))
            .collect();
        ImageSample::new(Tensor::new(vec![h, w, 3], data).unwrap(), 2, "s.ppm").unwrap()
    }

    #[test]
    fn identity_config_is_identity() {
        let s = random_sample(6, 5, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            assert_eq!(augment(&s, &AugmentationConfig::identity(), &mut rng), s);
        }
    }

    #[test]
    fn constant_image_stays_constant() {
        let s = ImageSample::new(Tensor::full(vec![9, 7, 3], 0.3137f32).unwrap(), 1, "c").unwrap();
        let cfg = AugmentationConfig {
            shear_degrees: 45.0,
            zoom_range: (0.5, 2.0),
            ..AugmentationConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let a = augment(&s, &cfg, &mut rng);
            assert!(a.pixels.data().iter().all(|&v| v == 0.3137f32));
            assert_eq!(a.label, 1);
        }
    }

    #[test]
    fn flip_mirrors_columns() {
        let t = Tensor::new(vec![1, 2, 3], vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        assert_eq!(flip_horizontal(&t).data(), &[0.4, 0.5, 0.6, 0.1, 0.2, 0.3]);
    }

    #[test]
    fn zoom_in_magnifies_centre() {
        // 1-pixel bright centre on a 5x5 dark image spreads when zoomed in.
        let mut data = vec![0.0f32; 75];
        data[(2 * 5 + 2) * 3..(2 * 5 + 2) * 3 + 3].copy_from_slice(&[1.0, 1.0, 1.0]);
        let t = Tensor::new(vec![5, 5, 3], data).unwrap();
        let z = shear_zoom(&t, 0.0, 2.0);
        assert_eq!(z.data()[(2 * 5 + 2) * 3], 1.0);
        assert!(z.data()[(2 * 5 + 3) * 3] > 0.0);
        assert_eq!(z.data()[0], 0.0);
    }

    #[test]
    fn validation_bounds() {
        let mut c = AugmentationConfig::default();
        assert!(c.validate().is_ok());
        c.zoom_range = (0.4, 1.0);
        assert!(c.validate().is_err());
        c.zoom_range = (1.0, 2.5);
        assert!(c.validate().is_err());
        c = AugmentationConfig {
            shear_degrees: 46.0,
            ..AugmentationConfig::default()
        };
        assert!(c.validate().is_err());
    }

    proptest! {
        #[test]
        fn flip_is_an_involution(h in 1usize..8, w in 1usize..8, seed in any::<u64>()) {
            let s = random_sample(h, w, seed);
            prop_assert_eq!(flip_horizontal(&flip_horizontal(&s.pixels)), s.pixels);
        }

        #[test]
        fn augmentation_stays_in_unit_range(seed in any::<u64>(), shear in 0.0f32..45.0, lo in 0.5f32..1.0, hi in 1.0f32..2.0) {
            let s = random_sample(8, 8, seed);
            let cfg = AugmentationConfig { shear_degrees: shear, zoom_range: (lo, hi), ..AugmentationConfig::default() };
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
            let a = augment(&s, &cfg, &mut rng);
            prop_assert!(a.pixels.data().iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert_eq!(a.pixels.shape(), s.pixels.shape());
        }
    }
}
