//! Procedural pristine images: smooth gradients, band-limited sinusoidal
//! textures and flat-shaded geometric shapes.

use crate::error::{Error, Result};
use crate::image::{Image, MIN_SIDE};
use crate::rng::{derive_seed, Rng};

/// `n` deterministic pristine images of size `(height, width)`. Image `i`
/// draws from the sub-stream `derive_seed(seed, i)`.
pub fn synth_pristine(n: usize, (height, width): (usize, usize), seed: u64) -> Result<Vec<Image>> {
    if n == 0 {
        return Err(Error::arg("need at least one image"));
    }
    if height < MIN_SIDE || width < MIN_SIDE {
        return Err(Error::arg(format!(
            "size {width}x{height} below minimum {MIN_SIDE}x{MIN_SIDE}"
        )));
    }
    Ok((0..n)
        .map(|i| synth_one(height, width, &mut Rng::new(derive_seed(seed, i as u64))))
        .collect())
}

enum Shape {
    Disc { cx: f64, cy: f64, r: f64 },
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    Ring { cx: f64, cy: f64, r: f64, thickness: f64 },
    Stripe { nx: f64, ny: f64, offset: f64, half_width: f64 },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Disc { cx, cy, r } => (x - cx).hypot(y - cy) <= r,
            Shape::Rect { x0, y0, x1, y1 } => x >= x0 && x <= x1 && y >= y0 && y <= y1,
            Shape::Ring { cx, cy, r, thickness } => ((x - cx).hypot(y - cy) - r).abs() <= thickness,
            Shape::Stripe { nx, ny, offset, half_width } => (x * nx + y * ny - offset).abs() <= half_width,
        }
    }
}

struct Wave {
    fx: f64,
    fy: f64,
    phase: f64,
    amp: [f64; 3],
}

fn random_color(rng: &mut Rng) -> [f64; 3] {
    [rng.uniform(), rng.uniform(), rng.uniform()]
}

fn synth_one(height: usize, width: usize, rng: &mut Rng) -> Image {
    let c0 = random_color(rng);
    let c1 = random_color(rng);
    let angle = rng.range(0.0, std::f64::consts::TAU);
    let (gx, gy) = (angle.cos(), angle.sin());

    let waves: Vec<Wave> = (0..4 + rng.below(5))
        .map(|_| {
            let cycles = rng.range(1.0, 12.0);
            let dir = rng.range(0.0, std::f64::consts::TAU);
            let a = rng.range(0.02, 0.09);
            Wave {
                fx: cycles * dir.cos() * std::f64::consts::TAU,
                fy: cycles * dir.sin() * std::f64::consts::TAU,
                phase: rng.range(0.0, std::f64::consts::TAU),
                amp: [a * rng.range(0.5, 1.0), a * rng.range(0.5, 1.0), a * rng.range(0.5, 1.0)],
            }
        })
        .collect();

    let shapes: Vec<(Shape, [f64; 3], f64)> = (0..3 + rng.below(6))
        .map(|_| {
            let shape = match rng.below(4) {
                0 => Shape::Disc {
                    cx: rng.uniform(),
                    cy: rng.uniform(),
                    r: rng.range(0.05, 0.3),
                },
                1 => {
                    let (x0, y0) = (rng.range(-0.1, 0.9), rng.range(-0.1, 0.9));
                    Shape::Rect {
                        x0,
                        y0,
                        x1: x0 + rng.range(0.1, 0.5),
                        y1: y0 + rng.range(0.1, 0.5),
                    }
                }
                2 => Shape::Ring {
                    cx: rng.uniform(),
                    cy: rng.uniform(),
                    r: rng.range(0.1, 0.35),
                    thickness: rng.range(0.01, 0.05),
                },
                _ => {
                    let a = rng.range(0.0, std::f64::consts::PI);
                    Shape::Stripe {
                        nx: a.cos(),
                        ny: a.sin(),
                        offset: rng.range(-0.5, 1.2),
                        half_width: rng.range(0.01, 0.08),
                    }
                }
            };
            (shape, random_color(rng), rng.range(0.5, 1.0))
        })
        .collect();

    Image::from_fn(width, height, |px, py| {
        let x = (px as f64 + 0.5) / width as f64;
        let y = (py as f64 + 0.5) / height as f64;
        let t = ((x - 0.5) * gx + (y - 0.5) * gy + 0.5).clamp(0.0, 1.0);
        let mut rgb = [0.0f64; 3];
        for c in 0..3 {
            rgb[c] = c0[c] * (1.0 - t) + c1[c] * t;
        }
        for w in &waves {
            let s = (w.fx * x + w.fy * y + w.phase).sin();
            for c in 0..3 {
                rgb[c] += w.amp[c] * s;
            }
        }
        for (shape, color, alpha) in &shapes {
            if shape.contains(x, y) {
                for c in 0..3 {
                    rgb[c] = rgb[c] * (1.0 - alpha) + color[c] * alpha;
                }
            }
        }
        [rgb[0] as f32, rgb[1] as f32, rgb[2] as f32]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_images() {
        let imgs = synth_pristine(2, (64, 64), 7).unwrap();
        assert_eq!(imgs.len(), 2);
        assert!(imgs[0].l2_distance(&imgs[1]).unwrap() > 0.0);
    }

    #[test]
    fn deterministic() {
        let a = synth_pristine(1, (64, 64), 7).unwrap();
        let b = synth_pristine(1, (64, 64), 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn every_image_has_spread() {
        let imgs = synth_pristine(16, (96, 96), 3).unwrap();
        for (i, img) in imgs.iter().enumerate() {
            assert!(img.std_dev() > 0.02, "image {i} std {}", img.std_dev());
            assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(synth_pristine(0, (64, 64), 1).is_err());
        assert!(synth_pristine(1, (16, 64), 1).is_err());
    }
}
