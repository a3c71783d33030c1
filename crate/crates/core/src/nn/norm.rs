use super::{join, Layer, Mode, Param, Parameterized, Real, Tensor};

/// Per-channel batch normalization over `(n, h, w)`.
///
/// Training mode normalizes with the biased batch variance and folds the
/// unbiased variance into the running estimate with momentum 0.1; eval mode
/// uses the running estimates.
pub struct BatchNorm2d<R: Real> {
    pub gamma: Param<R>,
    pub beta: Param<R>,
    pub running_mean: Param<R>,
    pub running_var: Param<R>,
    momentum: R,
    eps: R,
    cache: Option<(Tensor<R>, Vec<R>)>,
}

impl<R: Real> BatchNorm2d<R> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::filled(&[channels], R::one()),
            beta: Param::zeros(&[channels]),
            running_mean: Param::buffer(&[channels], R::zero()),
            running_var: Param::buffer(&[channels], R::one()),
            momentum: R::lit(0.1),
            eps: R::lit(1e-5),
            cache: None,
        }
    }

    fn channels(&self) -> usize {
        self.gamma.len()
    }
}

impl<R: Real> Parameterized<R> for BatchNorm2d<R> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<R>)) {
        f(&join(prefix, "gamma"), &mut self.gamma);
        f(&join(prefix, "beta"), &mut self.beta);
        f(&join(prefix, "running_mean"), &mut self.running_mean);
        f(&join(prefix, "running_var"), &mut self.running_var);
    }
}

impl<R: Real> Layer<R> for BatchNorm2d<R> {
    fn forward(&mut self, x: &Tensor<R>, mode: Mode) -> Tensor<R> {
        let [n, c, h, w] = x.shape;
        assert_eq!(c, self.channels(), "batch norm channel mismatch");
        let hw = h * w;
        let m = n * hw;
        let mut y = Tensor::zeros(x.shape);
        match mode {
            Mode::Eval => {
                for ch in 0..c {
                    let inv = R::one() / (self.running_var.value[ch] + self.eps).sqrt();
                    let scale = self.gamma.value[ch] * inv;
                    let shift = self.beta.value[ch] - self.running_mean.value[ch] * scale;
                    for i in 0..n {
                        let off = (i * c + ch) * hw;
                        for (o, &v) in y.data[off..off + hw].iter_mut().zip(&x.data[off..off + hw]) {
                            *o = v * scale + shift;
                        }
                    }
                }
            }
            Mode::Train => {
                let mut xhat = Tensor::zeros(x.shape);
                let mut inv_std = vec![R::zero(); c];
                let mf = R::lit(m as f64);
                for ch in 0..c {
                    let mut sum = R::zero();
                    for i in 0..n {
                        let off = (i * c + ch) * hw;
                        sum += x.data[off..off + hw].iter().copied().sum::<R>();
                    }
                    let mean = sum / mf;
                    let mut sq = R::zero();
                    for i in 0..n {
                        let off = (i * c + ch) * hw;
                        sq += x.data[off..off + hw].iter().map(|&v| (v - mean) * (v - mean)).sum::<R>();
                    }
                    let var = sq / mf;
                    let inv = R::one() / (var + self.eps).sqrt();
                    inv_std[ch] = inv;
                    let (g, b) = (self.gamma.value[ch], self.beta.value[ch]);
                    for i in 0..n {
                        let off = (i * c + ch) * hw;
                        for j in off..off + hw {
                            let xh = (x.data[j] - mean) * inv;
                            xhat.data[j] = xh;
                            y.data[j] = g * xh + b;
                        }
                    }
                    let unbiased = if m > 1 { sq / R::lit((m - 1) as f64) } else { var };
                    let mom = self.momentum;
                    let rm = &mut self.running_mean.value[ch];
                    *rm = (R::one() - mom) * *rm + mom * mean;
                    let rv = &mut self.running_var.value[ch];
                    *rv = (R::one() - mom) * *rv + mom * unbiased;
                }
                self.cache = Some((xhat, inv_std));
            }
        }
        y
    }

    fn backward(&mut self, grad: &Tensor<R>) -> Tensor<R> {
        let (xhat, inv_std) = self.cache.take().expect("BatchNorm2d::backward without a training forward");
        let [n, c, h, w] = xhat.shape;
        let hw = h * w;
        let mf = R::lit((n * hw) as f64);
        let mut dx = Tensor::zeros(xhat.shape);
        for ch in 0..c {
            let mut sum_g = R::zero();
            let mut sum_gx = R::zero();
            for i in 0..n {
                let off = (i * c + ch) * hw;
                for j in off..off + hw {
                    sum_g += grad.data[j];
                    sum_gx += grad.data[j] * xhat.data[j];
                }
            }
            self.gamma.grad[ch] += sum_gx;
            self.beta.grad[ch] += sum_g;
            let k = self.gamma.value[ch] * inv_std[ch] / mf;
            for i in 0..n {
                let off = (i * c + ch) * hw;
                for j in off..off + hw {
                    dx.data[j] = k * (mf * grad.data[j] - sum_g - xhat.data[j] * sum_gx);
                }
            }
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
    fn normalizes_batch() {
        let mut rng = Rng::new(0);
        let mut bn = BatchNorm2d::<f64>::new(2);
        let x = random_tensor([4, 2, 3, 3], &mut rng).map(|v| 3.0 * v + 1.0);
        let y = bn.forward(&x, Mode::Train);
        for ch in 0..2 {
            let vals: Vec<f64> = (0..4).flat_map(|i| y.item(i)[ch * 9..(ch + 1) * 9].to_vec()).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-3);
        }
        assert!(bn.running_mean.value.iter().all(|&m| m != 0.0));
    }

    #[test]
    fn gradients() {
        let mut rng = Rng::new(1);
        let mut bn = BatchNorm2d::<f64>::new(3);
        bn.gamma.value = vec![0.5, 1.5, -1.0];
        bn.beta.value = vec![0.1, 0.0, -0.2];
        let x = random_tensor([2, 3, 3, 2], &mut rng);
        check_layer_grads(&mut bn, &x, &mut rng);
    }
}
