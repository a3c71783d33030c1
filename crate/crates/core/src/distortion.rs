//! Parametric distortion operators with five severity levels each.
//!
//! Level tables (level `L` in `1..=5`):
//!
//! | type               | parameter                          |
//! |--------------------|------------------------------------|
//! | `gaussian_blur`    | σ = 0.8·L                          |
//! | `motion_blur`      | length = 2·L + 1, seeded angle     |
//! | `gaussian_noise`   | σ = 0.02·L                         |
//! | `impulse_noise`    | p = 0.01·L                         |
//! | `quantize`         | 2^(7−L) levels per channel         |
//! | `contrast_decrease`| gain = 1 − 0.15·L                  |
//! | `overexposure`     | offset = +0.1·L                    |
//! | `underexposure`    | offset = −0.1·L                    |
//! | `pixelate`         | block = L + 1                      |
//! | `color_saturation` | saturation gain = 1 − 0.18·L       |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistortionType {
    GaussianBlur,
    MotionBlur,
    GaussianNoise,
    ImpulseNoise,
    Quantize,
    ContrastDecrease,
    Overexposure,
    Underexposure,
    Pixelate,
    ColorSaturation,
}

impl DistortionType {
    pub const ALL: [DistortionType; 10] = [
        DistortionType::GaussianBlur,
        DistortionType::MotionBlur,
        DistortionType::GaussianNoise,
        DistortionType::ImpulseNoise,
        DistortionType::Quantize,
        DistortionType::ContrastDecrease,
        DistortionType::Overexposure,
        DistortionType::Underexposure,
        DistortionType::Pixelate,
        DistortionType::ColorSaturation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DistortionType::GaussianBlur => "gaussian_blur",
            DistortionType::MotionBlur => "motion_blur",
            DistortionType::GaussianNoise => "gaussian_noise",
            DistortionType::ImpulseNoise => "impulse_noise",
            DistortionType::Quantize => "quantize",
            DistortionType::ContrastDecrease => "contrast_decrease",
            DistortionType::Overexposure => "overexposure",
            DistortionType::Underexposure => "underexposure",
            DistortionType::Pixelate => "pixelate",
            DistortionType::ColorSaturation => "color_saturation",
        }
    }

    /// The resolved numeric parameter for `level` (see the module table).
    pub fn parameter(self, level: u8) -> f64 {
        let l = level as f64;
        match self {
            DistortionType::GaussianBlur => 0.8 * l,
            DistortionType::MotionBlur => 2.0 * l + 1.0,
            DistortionType::GaussianNoise => 0.02 * l,
            DistortionType::ImpulseNoise => 0.01 * l,
            DistortionType::Quantize => 2f64.powi(7 - level as i32),
            DistortionType::ContrastDecrease => 1.0 - 0.15 * l,
            DistortionType::Overexposure => 0.1 * l,
            DistortionType::Underexposure => -0.1 * l,
            DistortionType::Pixelate => l + 1.0,
            DistortionType::ColorSaturation => 1.0 - 0.18 * l,
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(
            self,
            DistortionType::MotionBlur | DistortionType::GaussianNoise | DistortionType::ImpulseNoise
        )
    }
}

impl fmt::Display for DistortionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistortionType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DistortionType::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::arg(format!("unknown distortion type `{s}`")))
    }
}

/// One corruption: type, severity, its resolved parameter and the seed used
/// by stochastic operators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionSpec {
    pub type_id: DistortionType,
    pub level: u8,
    pub param: f64,
    pub seed: u64,
}

impl DistortionSpec {
    pub fn new(type_id: DistortionType, level: u8, seed: u64) -> Result<Self> {
        if !(1..=5).contains(&level) {
            return Err(Error::arg(format!("level {level} outside 1..=5")));
        }
        Ok(Self {
            type_id,
            level,
            param: type_id.parameter(level),
            seed,
        })
    }

    fn validate(&self) -> Result<()> {
        if !(1..=5).contains(&self.level) {
            return Err(Error::arg(format!("level {} outside 1..=5", self.level)));
        }
        if self.param != self.type_id.parameter(self.level) {
            return Err(Error::arg(format!(
                "parameter {} does not match the level table for {} level {}",
                self.param, self.type_id, self.level
            )));
        }
        Ok(())
    }
}

/// Applies `spec` to `img`, returning a new image of the same size.
pub fn apply_distortion(img: &Image, spec: &DistortionSpec) -> Result<Image> {
    spec.validate()?;
    let p = spec.param;
    let mut rng = Rng::new(spec.seed);
    Ok(match spec.type_id {
        DistortionType::GaussianBlur => gaussian_blur(img, p),
        DistortionType::MotionBlur => {
            const DIRECTIONS: [(isize, isize); 4] = [(1, 0), (1, 1), (0, 1), (1, -1)];
            motion_blur(img, p as usize, DIRECTIONS[rng.below(4)])
        }
        DistortionType::GaussianNoise => gaussian_noise(img, p, &mut rng),
        DistortionType::ImpulseNoise => impulse_noise(img, p, &mut rng),
        DistortionType::Quantize => quantize(img, p as usize),
        DistortionType::ContrastDecrease => contrast(img, p as f32),
        DistortionType::Overexposure | DistortionType::Underexposure => img.map(|v| v + p as f32),
        DistortionType::Pixelate => pixelate(img, p as usize),
        DistortionType::ColorSaturation => saturation(img, p as f32),
    })
}

fn luminance([r, g, b]: [f32; 3]) -> f32 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// Separable Gaussian blur with clamped borders. `sigma <= 0` is the identity.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let (w, h) = (img.width() as isize, img.height() as isize);
    let horizontal = Image::from_fn(img.width(), img.height(), |x, y| {
        let mut acc = [0.0f64; 3];
        for (k, &wk) in kernel.iter().enumerate() {
            let xs = (x as isize + k as isize - radius).clamp(0, w - 1) as usize;
            let p = img.pixel(xs, y);
            for c in 0..3 {
                acc[c] += wk * p[c] as f64;
            }
        }
        acc.map(|v| v as f32)
    });
    Image::from_fn(img.width(), img.height(), |x, y| {
        let mut acc = [0.0f64; 3];
        for (k, &wk) in kernel.iter().enumerate() {
            let ys = (y as isize + k as isize - radius).clamp(0, h - 1) as usize;
            let p = horizontal.pixel(x, ys);
            for c in 0..3 {
                acc[c] += wk * p[c] as f64;
            }
        }
        acc.map(|v| v as f32)
    })
}

/// Box average along a line of `length` taps centred on each pixel.
fn motion_blur(img: &Image, length: usize, (dx, dy): (isize, isize)) -> Image {
    let half = (length / 2) as isize;
    let (w, h) = (img.width() as isize, img.height() as isize);
    Image::from_fn(img.width(), img.height(), |x, y| {
        let mut acc = [0.0f32; 3];
        for t in -half..=half {
            let xs = (x as isize + t * dx).clamp(0, w - 1) as usize;
            let ys = (y as isize + t * dy).clamp(0, h - 1) as usize;
            let p = img.pixel(xs, ys);
            for c in 0..3 {
                acc[c] += p[c];
            }
        }
        acc.map(|v| v / (2 * half + 1) as f32)
    })
}

fn gaussian_noise(img: &Image, sigma: f64, rng: &mut Rng) -> Image {
    let data = img
        .data()
        .iter()
        .map(|&v| v + (sigma * rng.normal()) as f32)
        .collect();
    Image::from_rgb(img.width(), img.height(), data).expect("same shape")
}

/// Salt-and-pepper: each pixel is replaced by black or white with probability `p`.
fn impulse_noise(img: &Image, p: f64, rng: &mut Rng) -> Image {
    let mut out = img.clone();
    for y in 0..img.height() {
        for x in 0..img.width() {
            let hit = rng.uniform() < p;
            let salt = rng.uniform() < 0.5;
            if hit {
                let v = if salt { 1.0 } else { 0.0 };
                out.set_pixel(x, y, [v; 3]);
            }
        }
    }
    out
}

fn quantize(img: &Image, levels: usize) -> Image {
    let steps = (levels - 1) as f32;
    img.map(|v| (v * steps).round() / steps)
}

fn contrast(img: &Image, gain: f32) -> Image {
    let n = (img.width() * img.height()) as f64;
    let mut mean = 0.0f64;
    for y in 0..img.height() {
        for x in 0..img.width() {
            mean += luminance(img.pixel(x, y)) as f64;
        }
    }
    let mean = (mean / n) as f32;
    img.map(|v| mean + gain * (v - mean))
}

fn pixelate(img: &Image, block: usize) -> Image {
    let mut out = img.clone();
    for by in (0..img.height()).step_by(block) {
        for bx in (0..img.width()).step_by(block) {
            let ye = (by + block).min(img.height());
            let xe = (bx + block).min(img.width());
            let mut acc = [0.0f32; 3];
            for y in by..ye {
                for x in bx..xe {
                    let p = img.pixel(x, y);
                    for c in 0..3 {
                        acc[c] += p[c];
                    }
                }
            }
            let count = ((ye - by) * (xe - bx)) as f32;
            let avg = acc.map(|v| v / count);
            for y in by..ye {
                for x in bx..xe {
                    out.set_pixel(x, y, avg);
                }
            }
        }
    }
    out
}

fn saturation(img: &Image, gain: f32) -> Image {
    Image::from_fn(img.width(), img.height(), |x, y| {
        let p = img.pixel(x, y);
        let l = luminance(p);
        p.map(|v| l + gain * (v - l))
    })
}
