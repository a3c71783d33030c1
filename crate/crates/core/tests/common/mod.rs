//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use coae::loss::{overall_loss, PyramidDistance};
use coae::nets::{ContentAutoencoder, DaeVariant, DistortionAutoencoder};
use coae::nn::{zero_grad, Mode, Parameterized, Tensor};
use coae::profile::NetProfile;
use coae::rng::Rng;

const EPS: f64 = 1e-6;
/// Parameters sampled per network.
pub const SAMPLES: usize = 120;

fn random_input(rng: &mut Rng) -> Tensor<f64> {
    Tensor::from_vec([2, 3, 8, 8], (0..2 * 3 * 64).map(|_| rng.uniform()).collect())
}

/// Flat (parameter, element) positions of every trainable value.
fn positions(model: &mut dyn Parameterized<f64>) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut idx = 0;
    model.visit("", &mut |_, p| {
        if p.trainable {
            out.extend((0..p.len()).map(|j| (idx, j)));
        }
        idx += 1;
    });
    out
}

fn bump(model: &mut dyn Parameterized<f64>, (pi, j): (usize, usize), delta: f64) {
    let mut idx = 0;
    model.visit("", &mut |_, p| {
        if idx == pi {
            p.value[j] += delta;
        }
        idx += 1;
    });
}

fn grad_at(model: &mut dyn Parameterized<f64>, (pi, j): (usize, usize)) -> f64 {
    let mut idx = 0;
    let mut g = 0.0;
    model.visit("", &mut |_, p| {
        if idx == pi {
            g = p.grad[j];
        }
        idx += 1;
    });
    g
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Compares sampled analytic gradients with central differences and returns
/// the worst relative error.
fn check<M: Parameterized<f64>>(
    model: &mut M,
    loss: &mut dyn FnMut(&mut M, bool) -> f64,
    rng: &mut Rng,
) -> f64 {
    zero_grad(model);
    loss(model, true);
    let mut all = positions(model);
    rng.shuffle(&mut all);
    let mut worst = 0.0f64;
    for &pos in &all[..SAMPLES] {
        let analytic = grad_at(model, pos);
        bump(model, pos, EPS);
        let up = loss(model, false);
        bump(model, pos, -2.0 * EPS);
        let down = loss(model, false);
        bump(model, pos, EPS);
        let numeric = (up - down) / (2.0 * EPS);
        worst = worst.max(rel_err(analytic, numeric));
    }
    worst
}

/// Worst relative error over the sampled CAE parameters.
pub fn cae_check() -> f64 {
    let mut rng = Rng::new(10);
    let x = random_input(&mut rng);
    let provider = PyramidDistance::default();
    let mut cae = ContentAutoencoder::<f64>::new(NetProfile::tiny(), 3);
    let mut loss = |m: &mut ContentAutoencoder<f64>, backward: bool| {
        let f = m.encode(&x, Mode::Train).unwrap();
        let y = m.decode(&f, Mode::Train).unwrap();
        let (l, g) = overall_loss(&y, &x, &provider, 1.0).unwrap();
        if backward {
            m.backward(&g);
        }
        l.overall
    };
    check(&mut cae, &mut loss, &mut rng)
}

/// Worst relative error over the sampled DAE parameters.
pub fn dae_check(variant: DaeVariant) -> f64 {
    let mut rng = Rng::new(20);
    let x = random_input(&mut rng);
    let provider = PyramidDistance::default();
    let mut cae = ContentAutoencoder::<f64>::new(NetProfile::tiny(), 4);
    let f_c = cae.encode(&random_input(&mut rng), Mode::Eval).unwrap();
    let mut dae = DistortionAutoencoder::<f64>::new(NetProfile::tiny(), variant, (8, 8), 5);
    // The modulation branch starts at zero; perturb it so its gradients are live.
    let mut init = Rng::new(6);
    dae.visit("", &mut |name, p| {
        if name.contains("smres") && name.contains("conv2") {
            p.value.iter_mut().for_each(|v| *v = 0.05 * init.normal());
        }
    });
    let content = variant.uses_content().then_some(f_c);
    let mut loss = |m: &mut DistortionAutoencoder<f64>, backward: bool| {
        let y = m.forward(content.as_ref(), &x, Mode::Train).unwrap();
        let (l, g) = overall_loss(&y, &x, &provider, 1.0).unwrap();
        if backward {
            m.backward(&g);
        }
        l.overall
    };
    check(&mut dae, &mut loss, &mut rng)
}

/// Rank by counting: smaller values plus the mean position among equals.
pub fn oracle_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let less = v.iter().filter(|&&y| y < x).count() as f64;
            let equal = v.iter().filter(|&&y| y == x).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Covariance over the product of standard deviations, all as plain sums.
pub fn oracle_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n;
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum::<f64>() / n;
    cov / (va.sqrt() * vb.sqrt())
}

pub fn random_pair(rng: &mut Rng, ties: bool) -> (Vec<f64>, Vec<f64>) {
    let n = 5 + rng.below(46);
    let draw = |rng: &mut Rng| if ties { rng.below(6) as f64 } else { rng.normal() };
    loop {
        let a: Vec<f64> = (0..n).map(|_| draw(rng)).collect();
        let b: Vec<f64> = (0..n).map(|_| draw(rng)).collect();
        let constant = |v: &[f64]| v.iter().all(|&x| x == v[0]);
        if !constant(&a) && !constant(&b) {
            return (a, b);
        }
    }
}
