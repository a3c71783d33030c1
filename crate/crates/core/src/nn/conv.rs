use super::{join, matmul, Layer, Mode, Param, Parameterized, Real, Tensor};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug)]
struct Geometry {
    channels: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn new(channels: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize) -> Self {
        assert!(
            h + 2 * pad >= k && w + 2 * pad >= k,
            "{h}x{w} input too small for kernel {k} with padding {pad}"
        );
        Self {
            channels,
            h,
            w,
            k,
            stride,
            pad,
            oh: (h + 2 * pad - k) / stride + 1,
            ow: (w + 2 * pad - k) / stride + 1,
        }
    }

    fn rows(&self) -> usize {
        self.channels * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }

    /// Source index along one axis, or `None` when it falls in the padding.
    #[inline]
    fn src(&self, o: usize, kk: usize, n: usize) -> Option<usize> {
        let i = (o * self.stride + kk) as isize - self.pad as isize;
        (i >= 0 && (i as usize) < n).then_some(i as usize)
    }
}

/// Unfolds `x` (`channels × h × w`) into a `(channels·k·k) × (oh·ow)` matrix.
fn im2col<R: Real>(x: &[R], g: &Geometry, col: &mut [R]) {
    let p = g.cols();
    for c in 0..g.channels {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = &mut col[((c * g.k + ki) * g.k + kj) * p..][..p];
                for oy in 0..g.oh {
                    let dst = &mut row[oy * g.ow..(oy + 1) * g.ow];
                    match g.src(oy, ki, g.h) {
                        None => dst.iter_mut().for_each(|v| *v = R::zero()),
                        Some(iy) => {
                            let src_row = &plane[iy * g.w..(iy + 1) * g.w];
                            for (ox, d) in dst.iter_mut().enumerate() {
                                *d = match g.src(ox, kj, g.w) {
                                    Some(ix) => src_row[ix],
                                    None => R::zero(),
                                };
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates `col` back into `x`.
fn col2im<R: Real>(col: &[R], g: &Geometry, x: &mut [R]) {
    let p = g.cols();
    for c in 0..g.channels {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = &col[((c * g.k + ki) * g.k + kj) * p..][..p];
                for oy in 0..g.oh {
                    let Some(iy) = g.src(oy, ki, g.h) else { continue };
                    let src = &row[oy * g.ow..(oy + 1) * g.ow];
                    let dst_row = &mut plane[iy * g.w..(iy + 1) * g.w];
                    for (ox, &v) in src.iter().enumerate() {
                        if let Some(ix) = g.src(ox, kj, g.w) {
                            dst_row[ix] += v;
                        }
                    }
                }
            }
        }
    }
}

fn add_bias<R: Real>(out: &mut [R], bias: &[R], plane: usize) {
    for (c, &b) in bias.iter().enumerate() {
        out[c * plane..(c + 1) * plane].iter_mut().for_each(|v| *v += b);
    }
}

fn accumulate_bias_grad<R: Real>(grad_bias: &mut [R], g: &[R], plane: usize) {
    for (c, gb) in grad_bias.iter_mut().enumerate() {
        *gb += g[c * plane..(c + 1) * plane].iter().copied().sum::<R>();
    }
}

/// 2-D convolution with square kernel and zero padding.
/// Weight layout `[out, in, k, k]`.
pub struct Conv2d<R: Real> {
    pub weight: Param<R>,
    pub bias: Option<Param<R>>,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    /// When false, `backward` skips the input gradient and returns zeros
    /// (first layers, whose input is data).
    pub input_grad: bool,
    cache: Option<Tensor<R>>,
}

impl<R: Real> Conv2d<R> {
    /// He-normal initialization.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        rng: &mut Rng,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        Self {
            weight: Param::normal(
                &[out_channels, in_channels, kernel, kernel],
                (2.0 / fan_in as f64).sqrt(),
                rng,
            ),
            bias: bias.then(|| Param::zeros(&[out_channels])),
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
            input_grad: true,
            cache: None,
        }
    }

    pub fn zero_init(mut self) -> Self {
        self.weight.value.iter_mut().for_each(|v| *v = R::zero());
        if let Some(b) = &mut self.bias {
            b.value.iter_mut().for_each(|v| *v = R::zero());
        }
        self
    }

    pub fn without_input_grad(mut self) -> Self {
        self.input_grad = false;
        self
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    fn geometry(&self, x: &Tensor<R>) -> Geometry {
        assert_eq!(
            x.channels(),
            self.in_channels,
            "conv expects {} input channels, got {}",
            self.in_channels,
            x.channels()
        );
        Geometry::new(self.in_channels, x.height(), x.width(), self.kernel, self.stride, self.pad)
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.pad == 0
    }
}

impl<R: Real> Parameterized<R> for Conv2d<R> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<R>)) {
        f(&join(prefix, "weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(&join(prefix, "bias"), b);
        }
    }
}

impl<R: Real> Layer<R> for Conv2d<R> {
    fn forward(&mut self, x: &Tensor<R>, mode: Mode) -> Tensor<R> {
        let g = self.geometry(x);
        let (k, p) = (g.rows(), g.cols());
        let mut out = Tensor::zeros([x.batch(), self.out_channels, g.oh, g.ow]);
        let mut col = if self.is_pointwise() { Vec::new() } else { vec![R::zero(); k * p] };
        for n in 0..x.batch() {
            let src: &[R] = if self.is_pointwise() {
                x.item(n)
            } else {
                im2col(x.item(n), &g, &mut col);
                &col
            };
            let dst = out.item_mut(n);
            matmul(self.out_channels, k, p, &self.weight.value, false, src, false, dst, false);
            if let Some(b) = &self.bias {
                add_bias(dst, &b.value, p);
            }
        }
        if mode == Mode::Train {
            self.cache = Some(x.clone());
        }
        out
    }

    fn backward(&mut self, grad: &Tensor<R>) -> Tensor<R> {
        let x = self.cache.take().expect("Conv2d::backward without a training forward");
        let g = self.geometry(&x);
        let (k, p) = (g.rows(), g.cols());
        let mut dx = Tensor::zeros(x.shape);
        let mut col = vec![R::zero(); k * p];
        let mut dcol = vec![R::zero(); k * p];
        for n in 0..x.batch() {
            let gn = grad.item(n);
            let src: &[R] = if self.is_pointwise() {
                x.item(n)
            } else {
                im2col(x.item(n), &g, &mut col);
                &col
            };
            matmul(self.out_channels, p, k, gn, false, src, true, &mut self.weight.grad, true);
            if let Some(b) = &mut self.bias {
                accumulate_bias_grad(&mut b.grad, gn, p);
            }
            if self.input_grad {
                if self.is_pointwise() {
                    matmul(k, self.out_channels, p, &self.weight.value, true, gn, false, dx.item_mut(n), false);
                } else {
                    matmul(k, self.out_channels, p, &self.weight.value, true, gn, false, &mut dcol, false);
                    col2im(&dcol, &g, dx.item_mut(n));
                }
            }
        }
        dx
    }
}

/// Transposed 2-D convolution (the adjoint of [`Conv2d`] with the same
/// kernel, stride and padding). Weight layout `[in, out, k, k]`; output side
/// `(h − 1)·stride − 2·pad + k`.
pub struct ConvTranspose2d<R: Real> {
    pub weight: Param<R>,
    pub bias: Option<Param<R>>,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    cache: Option<Tensor<R>>,
}

impl<R: Real> ConvTranspose2d<R> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        rng: &mut Rng,
    ) -> Self {
        // Each output pixel receives about in·k²/stride² contributions.
        let fan_in = (in_channels * kernel * kernel) / (stride * stride).max(1);
        Self {
            weight: Param::normal(
                &[in_channels, out_channels, kernel, kernel],
                (2.0 / fan_in.max(1) as f64).sqrt(),
                rng,
            ),
            bias: bias.then(|| Param::zeros(&[out_channels])),
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
            cache: None,
        }
    }

    fn output_geometry(&self, x: &Tensor<R>) -> Geometry {
        assert_eq!(x.channels(), self.in_channels, "deconv channel mismatch");
        let oh = (x.height() - 1) * self.stride + self.kernel - 2 * self.pad;
        let ow = (x.width() - 1) * self.stride + self.kernel - 2 * self.pad;
        let g = Geometry::new(self.out_channels, oh, ow, self.kernel, self.stride, self.pad);
        debug_assert_eq!((g.oh, g.ow), (x.height(), x.width()));
        g
    }
}

impl<R: Real> Parameterized<R> for ConvTranspose2d<R> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<R>)) {
        f(&join(prefix, "weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(&join(prefix, "bias"), b);
        }
    }
}

impl<R: Real> Layer<R> for ConvTranspose2d<R> {
    fn forward(&mut self, x: &Tensor<R>, mode: Mode) -> Tensor<R> {
        let g = self.output_geometry(x);
        let (k, p) = (g.rows(), g.cols());
        let mut out = Tensor::zeros([x.batch(), self.out_channels, g.h, g.w]);
        let mut col = vec![R::zero(); k * p];
        for n in 0..x.batch() {
            matmul(k, self.in_channels, p, &self.weight.value, true, x.item(n), false, &mut col, false);
            let dst = out.item_mut(n);
            col2im(&col, &g, dst);
            if let Some(b) = &self.bias {
                add_bias(dst, &b.value, g.h * g.w);
            }
        }
        if mode == Mode::Train {
            self.cache = Some(x.clone());
        }
        out
    }

    fn backward(&mut self, grad: &Tensor<R>) -> Tensor<R> {
        let x = self.cache.take().expect("ConvTranspose2d::backward without a training forward");
        let g = self.output_geometry(&x);
        let (k, p) = (g.rows(), g.cols());
        let mut dx = Tensor::zeros(x.shape);
        let mut gcol = vec![R::zero(); k * p];
        for n in 0..x.batch() {
            let gn = grad.item(n);
            im2col(gn, &g, &mut gcol);
            matmul(self.in_channels, k, p, &self.weight.value, false, &gcol, false, dx.item_mut(n), false);
            matmul(self.in_channels, p, k, x.item(n), false, &gcol, true, &mut self.weight.grad, true);
            if let Some(b) = &mut self.bias {
                accumulate_bias_grad(&mut b.grad, gn, g.h * g.w);
            }
        }
        dx
    }
}
