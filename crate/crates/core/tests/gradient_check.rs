//! Whole-network gradients of the overall loss against central differences.

mod common;

use coae::nets::DaeVariant;
use common::{cae_check, dae_check, SAMPLES};

#[test]
fn samples_enough_parameters() {
    assert!(SAMPLES >= 100);
}

#[test]
fn cae_gradients_match_finite_differences() {
    let worst = cae_check();
    assert!(worst < 1e-3, "worst relative error {worst}");
}

#[test]
fn dae_gradients_match_finite_differences() {
    let worst = dae_check(DaeVariant::Collaborative);
    assert!(worst < 1e-3, "worst relative error {worst}");
}

#[test]
fn standalone_dae_gradients_match_finite_differences() {
    let worst = dae_check(DaeVariant::Standalone);
    assert!(worst < 1e-3, "worst relative error {worst}");
}
