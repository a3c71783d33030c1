use std::collections::HashMap;

use super::{Param, Parameterized, Real};

/// Adam with bias correction. State is keyed by parameter path.
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: HashMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            moments: HashMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to every trainable parameter of `model` and
    /// clears its gradients.
    pub fn step<R: Real>(&mut self, model: &mut dyn Parameterized<R>) {
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let moments = &mut self.moments;
        model.visit("", &mut |name: &str, p: &mut Param<R>| {
            if !p.trainable {
                return;
            }
            let (m, v) = moments
                .entry(name.to_string())
                .or_insert_with(|| (vec![0.0; p.len()], vec![0.0; p.len()]));
            for i in 0..p.len() {
                let g = p.grad[i].to_f64().unwrap_or(0.0);
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                let update = lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                p.value[i] -= R::lit(update);
            }
            p.zero_grad();
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Layer, Linear, Mode, Tensor};
    use crate::rng::Rng;

    #[test]
    fn fits_a_line() {
        let mut rng = Rng::new(0);
        let mut lin = Linear::<f64>::new(1, 1, &mut rng);
        let mut opt = Adam::new(0.05);
        let xs: Vec<f64> = (0..16).map(|i| i as f64 / 8.0 - 1.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 0.5).collect();
        for _ in 0..2000 {
            let pred = lin.forward(&Tensor::from_rows(16, 1, xs.clone()), Mode::Train);
            let grad: Vec<f64> = pred.data.iter().zip(&ys).map(|(p, y)| 2.0 * (p - y) / 16.0).collect();
            lin.backward(&Tensor::from_rows(16, 1, grad));
            opt.step(&mut lin);
        }
        assert!((lin.weight.value[0] - 3.0).abs() < 1e-3);
        assert!((lin.bias.value[0] + 0.5).abs() < 1e-3);
        assert!(lin.weight.grad.iter().all(|&g| g == 0.0));
    }
}
