//! Finite-difference helpers shared by the layer tests.

use super::{Layer, Mode, Tensor};
use crate::rng::Rng;

pub fn random_tensor(shape: [usize; 4], rng: &mut Rng) -> Tensor<f64> {
    Tensor::from_vec(shape, (0..shape.iter().product()).map(|_| rng.normal()).collect())
}

pub fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
}

/// Checks input and parameter gradients of `layer` against central
/// differences of `loss = <layer(x), r>` for a random `r`. The loss is
/// evaluated in training mode so batch statistics match the analytic pass.
pub fn check_layer_grads(layer: &mut dyn Layer<f64>, x: &Tensor<f64>, rng: &mut Rng) {
    let y = layer.forward(x, Mode::Train);
    let r = random_tensor(y.shape, rng);
    let dx = layer.backward(&r);
    let eps = 1e-6;
    let loss = |layer: &mut dyn Layer<f64>, x: &Tensor<f64>| {
        let y = layer.forward(x, Mode::Train);
        dot(&y, &r)
    };
    for i in (0..x.data.len()).step_by(7) {
        let mut xp = x.clone();
        xp.data[i] += eps;
        let mut xm = x.clone();
        xm.data[i] -= eps;
        let fd = (loss(layer, &xp) - loss(layer, &xm)) / (2.0 * eps);
        assert!(
            (fd - dx.data[i]).abs() < 1e-6 * (1.0 + fd.abs()),
            "input grad {i}: {fd} vs {}",
            dx.data[i]
        );
    }
    let mut grads = Vec::new();
    layer.visit("", &mut |_, p| grads.push((p.trainable, p.grad.clone())));
    for (idx, (trainable, gvec)) in grads.into_iter().enumerate() {
        if !trainable {
            continue;
        }
        for j in (0..gvec.len()).step_by(5) {
            let bump = |delta: f64, layer: &mut dyn Layer<f64>| {
                let mut seen = 0;
                layer.visit("", &mut |_, p| {
                    if seen == idx {
                        p.value[j] += delta;
                    }
                    seen += 1;
                });
            };
            bump(eps, layer);
            let up = loss(layer, x);
            bump(-2.0 * eps, layer);
            let down = loss(layer, x);
            bump(eps, layer);
            let fd = (up - down) / (2.0 * eps);
            assert!(
                (fd - gvec[j]).abs() < 1e-6 * (1.0 + fd.abs()),
                "param {idx}[{j}]: {fd} vs {}",
                gvec[j]
            );
        }
    }
}
