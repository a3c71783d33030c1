//! Spatial pyramid max pooling.
//!
//! Level `l` splits each axis of length `n` into `l` cells; cell `i` spans
//! `[⌊i·n/l⌋, ⌈(i+1)·n/l⌉)`. Cells are near-equal, cover the axis, and stay
//! non-empty even when `l > n` (neighbouring cells then overlap). Output
//! order is level, then channel, then cell in row-major order.

use super::{Layer, Mode, Param, Parameterized, Real, Tensor};
use crate::error::{Error, Result};

pub fn spp_cell(i: usize, level: usize, n: usize) -> (usize, usize) {
    let start = i * n / level;
    let end = ((i + 1) * n).div_ceil(level);
    (start, end.max(start + 1))
}

/// Bins per channel: `Σ l²`.
pub fn spp_len(levels: &[usize]) -> usize {
    levels.iter().map(|l| l * l).sum()
}

fn pool<R: Real>(x: &Tensor<R>, levels: &[usize], argmax: Option<&mut Vec<usize>>) -> Tensor<R> {
    let [n, c, h, w] = x.shape;
    let bins = spp_len(levels);
    let mut out = Tensor::zeros([n, c * bins, 1, 1]);
    let mut idx = Vec::with_capacity(n * c * bins);
    for b in 0..n {
        let item = x.item(b);
        let mut o = 0;
        let dst = out.item_mut(b);
        for &l in levels {
            for ch in 0..c {
                let plane = &item[ch * h * w..(ch + 1) * h * w];
                for cy in 0..l {
                    let (y0, y1) = spp_cell(cy, l, h);
                    for cx in 0..l {
                        let (x0, x1) = spp_cell(cx, l, w);
                        let mut best = y0 * w + x0;
                        for y in y0..y1 {
                            for xx in x0..x1 {
                                if plane[y * w + xx] > plane[best] {
                                    best = y * w + xx;
                                }
                            }
                        }
                        dst[o] = plane[best];
                        idx.push(b * c * h * w + ch * h * w + best);
                        o += 1;
                    }
                }
            }
        }
    }
    if let Some(a) = argmax {
        *a = idx;
    }
    out
}

/// Pools a `[n, c, h, w]` map into `[n, c·Σl², 1, 1]`. Requires every level
/// to fit the map (`h, w ≥ max(levels)`).
pub fn spp_pool<R: Real>(feat: &Tensor<R>, levels: &[usize]) -> Result<Tensor<R>> {
    if levels.is_empty() || levels.contains(&0) {
        return Err(Error::arg("pyramid levels must be positive"));
    }
    let max = *levels.iter().max().expect("non-empty");
    if feat.height() < max || feat.width() < max {
        return Err(Error::arg(format!(
            "level {max} exceeds {}x{} feature map",
            feat.height(),
            feat.width()
        )));
    }
    Ok(pool(feat, levels, None))
}

/// Layer form of [`spp_pool`]. Maps smaller than a level are pooled with
/// overlapping single-pixel cells rather than rejected.
pub struct SpatialPyramidPool {
    levels: Vec<usize>,
    cache: Option<([usize; 4], Vec<usize>)>,
}

impl SpatialPyramidPool {
    pub fn new(levels: &[usize]) -> Self {
        assert!(!levels.is_empty() && !levels.contains(&0));
        Self {
            levels: levels.to_vec(),
            cache: None,
        }
    }

    pub fn bins(&self) -> usize {
        spp_len(&self.levels)
    }
}

impl<R: Real> Parameterized<R> for SpatialPyramidPool {
    fn visit(&mut self, _: &str, _: &mut dyn FnMut(&str, &mut Param<R>)) {}
}

impl<R: Real> Layer<R> for SpatialPyramidPool {
    fn forward(&mut self, x: &Tensor<R>, mode: Mode) -> Tensor<R> {
        if mode == Mode::Train {
            let mut idx = Vec::new();
            let y = pool(x, &self.levels, Some(&mut idx));
            self.cache = Some((x.shape, idx));
            y
        } else {
            pool(x, &self.levels, None)
        }
    }

    fn backward(&mut self, grad: &Tensor<R>) -> Tensor<R> {
        let (shape, idx) = self.cache.take().expect("SpatialPyramidPool::backward without a training forward");
        let mut dx = Tensor::zeros(shape);
        for (&i, &g) in idx.iter().zip(&grad.data) {
            dx.data[i] += g;
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::{check_layer_grads, random_tensor};
    use crate::rng::Rng;

    #[test]
    fn bins_per_channel() {
        assert_eq!(spp_len(&[1, 2, 4]), 21);
        let x = Tensor::<f32>::zeros([1, 3, 13, 9]);
        assert_eq!(spp_pool(&x, &[1, 2, 4]).unwrap().shape, [1, 63, 1, 1]);
    }

    #[test]
    fn constant_map() {
        let x = Tensor::<f32>::from_vec([1, 2, 5, 7], vec![0.25; 70]);
        let y = spp_pool(&x, &[1, 2, 4]).unwrap();
        assert!(y.data.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn hand_evaluated_two_by_two() {
        let x = Tensor::<f64>::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(spp_pool(&x, &[1, 2]).unwrap().data, vec![4.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn level_too_large() {
        let x = Tensor::<f64>::zeros([1, 1, 3, 8]);
        assert!(spp_pool(&x, &[1, 4]).is_err());
        assert!(spp_pool(&x, &[]).is_err());
    }

    #[test]
    fn cells_cover_axis() {
        for n in 1..20 {
            for l in 1..6 {
                let mut covered = vec![false; n];
                for i in 0..l {
                    let (a, b) = spp_cell(i, l, n);
                    assert!(a < b && b <= n, "n={n} l={l} i={i}: {a}..{b}");
                    covered[a..b].iter_mut().for_each(|c| *c = true);
                }
                assert!(covered.iter().all(|&c| c));
            }
        }
    }

    #[test]
    fn small_maps_in_layer_form() {
        let mut layer = SpatialPyramidPool::new(&[1, 2, 4]);
        let x = Tensor::<f64>::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let y = layer.forward(&x, Mode::Eval);
        assert_eq!(y.data.len(), 21);
        assert_eq!(&y.data[..5], &[4.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn gradients() {
        let mut rng = Rng::new(2);
        let x = random_tensor([2, 3, 6, 5], &mut rng);
        check_layer_grads(&mut SpatialPyramidPool::new(&[1, 2, 4]), &x, &mut rng);
    }
}
