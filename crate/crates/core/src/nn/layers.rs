use super::{join, matmul, Layer, Mode, Param, Parameterized, Real, Tensor};
use crate::rng::Rng;

/// Fully connected layer on `[n, in, 1, 1]` (any input whose per-item size
/// is `in` is accepted and flattened). Weight layout `[out, in]`.
pub struct Linear<R: Real> {
    pub weight: Param<R>,
    pub bias: Param<R>,
    in_features: usize,
    out_features: usize,
    cache: Option<Tensor<R>>,
}

impl<R: Real> Linear<R> {
    /// He-normal weights, zero bias.
    pub fn new(in_features: usize, out_features: usize, rng: &mut Rng) -> Self {
        Self::with_std(in_features, out_features, (2.0 / in_features as f64).sqrt(), rng)
    }

    pub fn with_std(in_features: usize, out_features: usize, std: f64, rng: &mut Rng) -> Self {
        Self {
            weight: Param::normal(&[out_features, in_features], std, rng),
            bias: Param::zeros(&[out_features]),
            in_features,
            out_features,
            cache: None,
        }
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }
}

impl<R: Real> Parameterized<R> for Linear<R> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<R>)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

impl<R: Real> Layer<R> for Linear<R> {
    fn forward(&mut self, x: &Tensor<R>, mode: Mode) -> Tensor<R> {
        assert_eq!(x.item_len(), self.in_features, "linear layer input width");
        let n = x.batch();
        let mut out = Tensor::zeros([n, self.out_features, 1, 1]);
        matmul(n, self.in_features, self.out_features, &x.data, false, &self.weight.value, true, &mut out.data, false);
        for row in out.data.chunks_mut(self.out_features) {
            for (v, &b) in row.iter_mut().zip(&self.bias.value) {
                *v += b;
            }
        }
        if mode == Mode::Train {
            self.cache = Some(x.clone());
        }
        out
    }

    fn backward(&mut self, grad: &Tensor<R>) -> Tensor<R> {
        let x = self.cache.take().expect("Linear::backward without a training forward");
        let n = x.batch();
        matmul(self.out_features, n, self.in_features, &grad.data, true, &x.data, false, &mut self.weight.grad, true);
        for row in grad.data.chunks(self.out_features) {
            for (gb, &g) in self.bias.grad.iter_mut().zip(row) {
                *gb += g;
            }
        }
        let mut dx = Tensor::zeros(x.shape);
        matmul(n, self.out_features, self.in_features, &grad.data, false, &self.weight.value, false, &mut dx.data, false);
        dx
    }
}

#[derive(Default)]
pub struct Relu<R: Real> {
    cache: Option<Tensor<R>>,
}

impl<R: Real> Relu<R> {
    pub fn new() -> Self {
        Self { cache: None }
    }
}

impl<R: Real> Parameterized<R> for Relu<R> {
    fn visit(&mut self, _: &str, _: &mut dyn FnMut(&str, &mut Param<R>)) {}
}

impl<R: Real> Layer<R> for Relu<R> {
    fn forward(&mut self, x: &Tensor<R>, mode: Mode) -> Tensor<R> {
        let y = x.map(|v| v.max(R::zero()));
        if mode == Mode::Train {
            self.cache = Some(y.clone());
        }
        y
    }

    fn backward(&mut self, grad: &Tensor<R>) -> Tensor<R> {
        let y = self.cache.take().expect("Relu::backward without a training forward");
        let mut g = grad.clone();
        for (gv, &yv) in g.data.iter_mut().zip(&y.data) {
            if yv <= R::zero() {
                *gv = R::zero();
            }
        }
        g
    }
}

pub struct LeakyRelu<R: Real> {
    slope: R,
    cache: Option<Tensor<R>>,
}

impl<R: Real> LeakyRelu<R> {
    pub fn new(slope: f64) -> Self {
        Self {
            slope: R::lit(slope),
            cache: None,
        }
    }
}

impl<R: Real> Parameterized<R> for LeakyRelu<R> {
    fn visit(&mut self, _: &str, _: &mut dyn FnMut(&str, &mut Param<R>)) {}
}

impl<R: Real> Layer<R> for LeakyRelu<R> {
    fn forward(&mut self, x: &Tensor<R>, mode: Mode) -> Tensor<R> {
        let s = self.slope;
        if mode == Mode::Train {
            self.cache = Some(x.clone());
        }
        x.map(|v| if v > R::zero() { v } else { v * s })
    }

    fn backward(&mut self, grad: &Tensor<R>) -> Tensor<R> {
        let x = self.cache.take().expect("LeakyRelu::backward without a training forward");
        let mut g = grad.clone();
        for (gv, &xv) in g.data.iter_mut().zip(&x.data) {
            if xv <= R::zero() {
                *gv *= self.slope;
            }
        }
        g
    }
}

#[derive(Default)]
pub struct Sigmoid<R: Real> {
    cache: Option<Tensor<R>>,
}

impl<R: Real> Sigmoid<R> {
    pub fn new() -> Self {
        Self { cache: None }
    }
}

impl<R: Real> Parameterized<R> for Sigmoid<R> {
    fn visit(&mut self, _: &str, _: &mut dyn FnMut(&str, &mut Param<R>)) {}
}

impl<R: Real> Layer<R> for Sigmoid<R> {
    fn forward(&mut self, x: &Tensor<R>, mode: Mode) -> Tensor<R> {
        let y = x.map(|v| R::one() / (R::one() + (-v).exp()));
        if mode == Mode::Train {
            self.cache = Some(y.clone());
        }
        y
    }

    fn backward(&mut self, grad: &Tensor<R>) -> Tensor<R> {
        let y = self.cache.take().expect("Sigmoid::backward without a training forward");
        let mut g = grad.clone();
        for (gv, &yv) in g.data.iter_mut().zip(&y.data) {
            *gv *= yv * (R::one() - yv);
        }
        g
    }
}

/// `[n, c, h, w] → [n, c, 1, 1]` spatial mean.
#[derive(Default)]
pub struct GlobalAvgPool {
    shape: Option<[usize; 4]>,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        Self { shape: None }
    }
}

impl<R: Real> Parameterized<R> for GlobalAvgPool {
    fn visit(&mut self, _: &str, _: &mut dyn FnMut(&str, &mut Param<R>)) {}
}

impl<R: Real> Layer<R> for GlobalAvgPool {
    fn forward(&mut self, x: &Tensor<R>, mode: Mode) -> Tensor<R> {
        let [n, c, h, w] = x.shape;
        let hw = h * w;
        let inv = R::one() / R::lit(hw as f64);
        let data = x.data.chunks(hw).map(|plane| plane.iter().copied().sum::<R>() * inv).collect();
        if mode == Mode::Train {
            self.shape = Some(x.shape);
        }
        Tensor::from_vec([n, c, 1, 1], data)
    }

    fn backward(&mut self, grad: &Tensor<R>) -> Tensor<R> {
        let shape = self.shape.take().expect("GlobalAvgPool::backward without a training forward");
        let hw = shape[2] * shape[3];
        let inv = R::one() / R::lit(hw as f64);
        let mut data = Vec::with_capacity(shape.iter().product());
        for &g in &grad.data {
            data.extend(std::iter::repeat_n(g * inv, hw));
        }
        Tensor::from_vec(shape, data)
    }
}
