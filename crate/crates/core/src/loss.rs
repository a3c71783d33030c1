//! Reconstruction losses: the pixel-wise Frobenius term and a pluggable
//! perceptual distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::nn::{Real, Tensor};

/// A perceptual distance between two images stored as planar `c × h × w`
/// buffers. Implementations must be symmetric and zero on identical inputs.
pub trait PerceptualDistance: Send + Sync {
    fn name(&self) -> &str;

    /// Returns the distance and, when `grad_a` is given, writes
    /// `∂distance/∂a` into it.
    fn eval(&self, a: &[f64], b: &[f64], dims: (usize, usize, usize), grad_a: Option<&mut [f64]>) -> f64;
}

/// Multi-scale distance: RMS difference between Gaussian-pyramid levels
/// `0..levels`, averaged over levels.
///
/// Each level is the previous one blurred with the binomial kernel
/// `[1,4,6,4,1]/16` (clamped borders) and decimated by two, rounding up.
#[derive(Clone, Debug)]
pub struct PyramidDistance {
    pub levels: usize,
}

impl Default for PyramidDistance {
    fn default() -> Self {
        Self { levels: 4 }
    }
}

const BINOMIAL: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Blur and decimate one `h × w` plane along both axes.
fn reduce(src: &[f64], h: usize, w: usize) -> (Vec<f64>, usize, usize) {
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let mut rows = vec![0.0; oh * w];
    for oy in 0..oh {
        for (t, k) in BINOMIAL.iter().enumerate() {
            let y = clamp_index((2 * oy + t) as isize - 2, h);
            for x in 0..w {
                rows[oy * w + x] += k * src[y * w + x];
            }
        }
    }
    let mut out = vec![0.0; oh * ow];
    for oy in 0..oh {
        for ox in 0..ow {
            let mut acc = 0.0;
            for (t, k) in BINOMIAL.iter().enumerate() {
                acc += k * rows[oy * w + clamp_index((2 * ox + t) as isize - 2, w)];
            }
            out[oy * ow + ox] = acc;
        }
    }
    (out, oh, ow)
}

/// Transpose of [`reduce`]: scatters an `oh × ow` gradient back to `h × w`.
fn reduce_transpose(g: &[f64], h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let mut rows = vec![0.0; oh * w];
    for oy in 0..oh {
        for ox in 0..ow {
            let v = g[oy * ow + ox];
            for (t, k) in BINOMIAL.iter().enumerate() {
                rows[oy * w + clamp_index((2 * ox + t) as isize - 2, w)] += k * v;
            }
        }
    }
    let mut out = vec![0.0; h * w];
    for oy in 0..oh {
        for (t, k) in BINOMIAL.iter().enumerate() {
            let y = clamp_index((2 * oy + t) as isize - 2, h);
            for x in 0..w {
                out[y * w + x] += k * rows[oy * w + x];
            }
        }
    }
    out
}

impl PerceptualDistance for PyramidDistance {
    fn name(&self) -> &str {
        "pyramid"
    }

    fn eval(&self, a: &[f64], b: &[f64], (c, h, w): (usize, usize, usize), grad_a: Option<&mut [f64]>) -> f64 {
        // The pyramid is linear, so the pyramid of the difference is the
        // difference of the pyramids.
        let plane = h * w;
        let mut levels: Vec<(Vec<f64>, usize, usize)> = Vec::with_capacity(self.levels);
        levels.push((a.iter().zip(b).map(|(x, y)| x - y).collect(), h, w));
        for _ in 1..self.levels {
            let (prev, ph, pw) = levels.last().expect("level 0 exists");
            let (nh, nw) = (ph.div_ceil(2), pw.div_ceil(2));
            let mut next = Vec::with_capacity(c * nh * nw);
            for ch in 0..c {
                next.extend(reduce(&prev[ch * ph * pw..(ch + 1) * ph * pw], *ph, *pw).0);
            }
            levels.push((next, nh, nw));
        }
        let rms: Vec<f64> = levels
            .iter()
            .map(|(d, _, _)| (d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64).sqrt())
            .collect();
        let dist = rms.iter().sum::<f64>() / self.levels as f64;
        if let Some(grad) = grad_a {
            let l = self.levels as f64;
            // Walk from the coarsest level down, pulling each level's
            // gradient back through one reduce step at a time.
            let mut carry: Option<Vec<f64>> = None;
            for (k, (d, lh, lw)) in levels.iter().enumerate().rev() {
                let scale = if rms[k] > 0.0 { 1.0 / (l * d.len() as f64 * rms[k]) } else { 0.0 };
                let mut g: Vec<f64> = d.iter().map(|v| v * scale).collect();
                if let Some(coarse) = carry.take() {
                    let (ch_len, ch_coarse) = (lh * lw, lh.div_ceil(2) * lw.div_ceil(2));
                    for ch in 0..c {
                        let up = reduce_transpose(&coarse[ch * ch_coarse..(ch + 1) * ch_coarse], *lh, *lw);
                        for (dst, u) in g[ch * ch_len..(ch + 1) * ch_len].iter_mut().zip(up) {
                            *dst += u;
                        }
                    }
                }
                carry = Some(g);
            }
            let g = carry.expect("at least one level");
            debug_assert_eq!(g.len(), c * plane);
            grad.copy_from_slice(&g);
        }
        dist
    }
}

/// Frobenius norm of the difference over all pixels and channels.
pub fn loss_recon(a: &Image, b: &Image) -> Result<f64> {
    check_same(a, b)?;
    Ok(frobenius(a.data(), b.data()))
}

/// `provider` distance between two images.
pub fn loss_percep(a: &Image, b: &Image, provider: &dyn PerceptualDistance) -> Result<f64> {
    check_same(a, b)?;
    let (pa, pb) = (planar(a), planar(b));
    let (h, w) = a.dims();
    Ok(provider.eval(&pa, &pb, (3, h, w), None))
}

fn check_same(a: &Image, b: &Image) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::arg(format!("image sizes differ: {:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

fn frobenius(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

fn planar(img: &Image) -> Vec<f64> {
    let (h, w) = img.dims();
    let mut out = vec![0.0; 3 * h * w];
    for (i, px) in img.data().chunks(3).enumerate() {
        for c in 0..3 {
            out[c * h * w + i] = px[c] as f64;
        }
    }
    out
}

/// Per-batch loss components, each averaged over batch items.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    #[serde(rename = "L_recon")]
    pub recon: f64,
    #[serde(rename = "L_percep")]
    pub percep: f64,
    #[serde(rename = "L_overall")]
    pub overall: f64,
}

/// `mean_i [‖out_i − target_i‖_F + weight · percep(out_i, target_i)]` and its
/// gradient with respect to `out`.
pub fn overall_loss<R: Real>(
    out: &Tensor<R>,
    target: &Tensor<R>,
    provider: &dyn PerceptualDistance,
    weight: f64,
) -> Result<(LossBreakdown, Tensor<R>)> {
    if out.shape != target.shape {
        return Err(Error::arg(format!("loss shapes differ: {:?} vs {:?}", out.shape, target.shape)));
    }
    let [n, c, h, w] = out.shape;
    let len = out.item_len();
    let mut grad = Tensor::zeros(out.shape);
    let mut total = LossBreakdown::default();
    let mut gp = vec![0.0; len];
    for i in 0..n {
        let a: Vec<f64> = out.item(i).iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect();
        let b: Vec<f64> = target.item(i).iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect();
        let norm = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let percep = if weight != 0.0 { provider.eval(&a, &b, (c, h, w), Some(&mut gp)) } else { 0.0 };
        total.recon += norm;
        total.percep += percep;
        let inv = if norm > 0.0 { 1.0 / norm } else { 0.0 };
        let scale = 1.0 / n as f64;
        for (j, g) in grad.item_mut(i).iter_mut().enumerate() {
            let pg = if weight != 0.0 { weight * gp[j] } else { 0.0 };
            *g = R::lit(scale * ((a[j] - b[j]) * inv + pg));
        }
    }
    total.recon /= n as f64;
    total.percep /= n as f64;
    total.overall = total.recon + weight * total.percep;
    Ok((total, grad))
}
