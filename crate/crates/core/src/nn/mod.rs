//! A small CPU neural-network toolkit: NCHW tensors, layers with explicit
//! backward passes, and an Adam optimizer.
//!
//! Layers cache what they need during a [`Mode::Train`] forward pass and
//! consume it in `backward`, which accumulates parameter gradients and
//! returns the gradient with respect to the layer input. Everything is
//! generic over [`Real`] so the same code runs in `f32` for training and in
//! `f64` for finite-difference gradient checks.

mod conv;
mod layers;
mod norm;
mod optim;
mod spp;
#[cfg(test)]
pub(crate) mod testutil;

pub use conv::{Conv2d, ConvTranspose2d};
pub use layers::{GlobalAvgPool, LeakyRelu, Linear, Relu, Sigmoid};
pub use norm::BatchNorm2d;
pub use optim::Adam;
pub use spp::{spp_cell, spp_len, spp_pool, SpatialPyramidPool};

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use sha2::{Digest, Sha256};

use crate::rng::Rng;

pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Send
    + Sync
    + 'static
{
    /// Raw strided GEMM: `C = alpha·A·B + beta·C` with `A` m×k, `B` k×n.
    ///
    /// # Safety
    /// Strides must describe in-bounds views of the given slices.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("representable literal")
    }
}

impl Real for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// `C = op(A)·op(B)` (or `C += ...` when `accumulate`), all row-major.
/// `op(A)` is m×k and `op(B)` is k×n; a transposed operand is stored with
/// its dimensions swapped.
#[allow(clippy::too_many_arguments)]
pub fn matmul<R: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[R],
    trans_a: bool,
    b: &[R],
    trans_b: bool,
    c: &mut [R],
    accumulate: bool,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { R::one() } else { R::zero() };
    // SAFETY: the length checks above bound every strided access.
    unsafe {
        R::gemm_raw(
            m,
            k,
            n,
            R::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}

/// Dense NCHW tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<R> {
    pub shape: [usize; 4],
    pub data: Vec<R>,
}

impl<R: Real> Tensor<R> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![R::zero(); shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<R>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape/data mismatch");
        Self { shape, data }
    }

    /// A batch of feature vectors, `[n, dim, 1, 1]`.
    pub fn from_rows(n: usize, dim: usize, data: Vec<R>) -> Self {
        Self::from_vec([n, dim, 1, 1], data)
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    /// Elements per batch item.
    pub fn item_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn item(&self, n: usize) -> &[R] {
        let len = self.item_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn item_mut(&mut self, n: usize) -> &mut [R] {
        let len = self.item_len();
        &mut self.data[n * len..(n + 1) * len]
    }

    pub fn add_assign(&mut self, other: &Tensor<R>) {
        assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(R) -> R) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Concatenates along channels. Batch and spatial sizes must agree.
    pub fn concat_channels(parts: &[&Tensor<R>]) -> Tensor<R> {
        let [n, _, h, w] = parts[0].shape;
        for p in parts {
            assert_eq!((p.shape[0], p.shape[2], p.shape[3]), (n, h, w));
        }
        let c: usize = parts.iter().map(|p| p.channels()).sum();
        let mut data = Vec::with_capacity(n * c * h * w);
        for i in 0..n {
            for p in parts {
                data.extend_from_slice(p.item(i));
            }
        }
        Tensor::from_vec([n, c, h, w], data)
    }

    /// Splits along channels into pieces of the given channel counts.
    pub fn split_channels(&self, sizes: &[usize]) -> Vec<Tensor<R>> {
        assert_eq!(sizes.iter().sum::<usize>(), self.channels());
        let [n, _, h, w] = self.shape;
        let hw = h * w;
        let mut out: Vec<Tensor<R>> = sizes.iter().map(|&c| Tensor::zeros([n, c, h, w])).collect();
        for i in 0..n {
            let item = self.item(i);
            let mut offset = 0;
            for (t, &c) in out.iter_mut().zip(sizes) {
                t.item_mut(i).copy_from_slice(&item[offset * hw..(offset + c) * hw]);
                offset += c;
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, caches kept for `backward`.
    Train,
    /// Running statistics, nothing cached.
    Eval,
}

/// A named array of values. Non-trainable entries (normalization running
/// statistics) are stored and checkpointed but never optimized.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<R> {
    pub value: Vec<R>,
    pub grad: Vec<R>,
    pub shape: Vec<usize>,
    pub trainable: bool,
}

impl<R: Real> Param<R> {
    pub fn new(shape: &[usize], value: Vec<R>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), value.len());
        Self {
            grad: vec![R::zero(); value.len()],
            value,
            shape: shape.to_vec(),
            trainable: true,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::new(shape, vec![R::zero(); shape.iter().product()])
    }

    pub fn filled(shape: &[usize], v: R) -> Self {
        Self::new(shape, vec![v; shape.iter().product()])
    }

    pub fn buffer(shape: &[usize], v: R) -> Self {
        Self {
            value: vec![v; shape.iter().product()],
            grad: Vec::new(),
            shape: shape.to_vec(),
            trainable: false,
        }
    }

    /// Normal entries with standard deviation `std`.
    pub fn normal(shape: &[usize], std: f64, rng: &mut Rng) -> Self {
        let n = shape.iter().product();
        Self::new(shape, (0..n).map(|_| R::lit(std * rng.normal())).collect())
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = R::zero());
    }
}

/// Anything that owns named parameters.
pub trait Parameterized<R: Real> {
    /// Calls `f` on every parameter with its dotted path under `prefix`,
    /// in a fixed order.
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<R>));
}

pub trait Layer<R: Real>: Parameterized<R> {
    fn forward(&mut self, x: &Tensor<R>, mode: Mode) -> Tensor<R>;
    fn backward(&mut self, grad: &Tensor<R>) -> Tensor<R>;
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub fn zero_grad<R: Real>(model: &mut dyn Parameterized<R>) {
    model.visit("", &mut |_, p| p.zero_grad());
}

pub fn param_count<R: Real>(model: &mut dyn Parameterized<R>) -> usize {
    let mut n = 0;
    model.visit("", &mut |_, p| {
        if p.trainable {
            n += p.len()
        }
    });
    n
}

/// SHA-256 over every parameter path, shape and value (little-endian `f64`).
pub fn param_hash<R: Real>(model: &mut dyn Parameterized<R>) -> String {
    let mut h = Sha256::new();
    model.visit("", &mut |name, p| {
        h.update(name.as_bytes());
        for &d in &p.shape {
            h.update((d as u64).to_le_bytes());
        }
        for v in &p.value {
            h.update(v.to_f64().unwrap_or(f64::NAN).to_le_bytes());
        }
    });
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Named layers applied in order.
#[derive(Default)]
pub struct Sequential<R: Real> {
    layers: Vec<(String, Box<dyn Layer<R>>)>,
}

impl<R: Real> Sequential<R> {
    pub fn new() -> Self {
        Self { layers: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, layer: impl Layer<R> + 'static) -> &mut Self {
        self.layers.push((name.into(), Box::new(layer)));
        self
    }

    pub fn with(mut self, name: impl Into<String>, layer: impl Layer<R> + 'static) -> Self {
        self.push(name, layer);
        self
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

impl<R: Real> Parameterized<R> for Sequential<R> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<R>)) {
        for (name, layer) in &mut self.layers {
            layer.visit(&join(prefix, name), f);
        }
    }
}

impl<R: Real> Layer<R> for Sequential<R> {
    fn forward(&mut self, x: &Tensor<R>, mode: Mode) -> Tensor<R> {
        let mut iter = self.layers.iter_mut();
        let Some((_, first)) = iter.next() else {
            return x.clone();
        };
        let mut h = first.forward(x, mode);
        for (_, layer) in iter {
            h = layer.forward(&h, mode);
        }
        h
    }

    fn backward(&mut self, grad: &Tensor<R>) -> Tensor<R> {
        let mut iter = self.layers.iter_mut().rev();
        let Some((_, last)) = iter.next() else {
            return grad.clone();
        };
        let mut g = last.backward(grad);
        for (_, layer) in iter {
            g = layer.backward(&g);
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_all_transpositions() {
        // A = [[1,2,3],[4,5,6]] (2x3), B = [[1,0],[0,1],[1,1]] (3x2)
        let a = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0];
        let at = [1.0f64, 4.0, 2.0, 5.0, 3.0, 6.0];
        let b = [1.0f64, 0.0, 0.0, 1.0, 1.0, 1.0];
        let bt = [1.0f64, 0.0, 1.0, 0.0, 1.0, 1.0];
        let expect = [4.0, 5.0, 10.0, 11.0];
        for (aa, ta) in [(&a, false), (&at, true)] {
            for (bb, tb) in [(&b, false), (&bt, true)] {
                let mut c = [0.0f64; 4];
                matmul(2, 3, 2, aa, ta, bb, tb, &mut c, false);
                assert_eq!(c, expect);
                matmul(2, 3, 2, aa, ta, bb, tb, &mut c, true);
                assert_eq!(c, expect.map(|v| 2.0 * v));
            }
        }
    }

    #[test]
    fn concat_split_inverse() {
        let a = Tensor::<f32>::from_vec([2, 1, 1, 2], vec![1., 2., 3., 4.]);
        let b = Tensor::<f32>::from_vec([2, 2, 1, 2], vec![5., 6., 7., 8., 9., 10., 11., 12.]);
        let c = Tensor::concat_channels(&[&a, &b]);
        assert_eq!(c.data, vec![1., 2., 5., 6., 7., 8., 3., 4., 9., 10., 11., 12.]);
        let parts = c.split_channels(&[1, 2]);
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }
}
