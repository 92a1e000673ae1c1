//! Finite-difference checks for every layer kind and for reduced versions of
//! both detector stacks.

mod common;

use common::{grad_error, gradient_cases, GRAD_TOL};
use strokescreen::nn::{grad_check, LayerSpec, Model};
use strokescreen::tensor::Tensor;

fn case(name: &str) -> f64 {
    let (_, shape, layers) = gradient_cases().into_iter().find(|c| c.0 == name).unwrap();
    grad_error(&shape, layers, name.len() as u64)
}

#[test]
fn dense() {
    let e = case("dense");
    assert!(e < 1e-6, "{e}");
}

#[test]
fn every_layer_kind() {
    for name in [
        "conv1d",
        "conv1d_strided",
        "conv2d",
        "avgpool1d",
        "avgpool2d",
        "recurrent",
        "relu",
        "sigmoid",
        "softmax",
    ] {
        let e = case(name);
        assert!(e < GRAD_TOL, "{name}: {e}");
    }
}

#[test]
fn saturated_sigmoid_is_flagged_not_failed() {
    let mut model = Model::new(vec![2], vec![LayerSpec::dense(2, 2), LayerSpec::Sigmoid], 9).unwrap();
    for (name, p) in model.params_mut().iter_mut() {
        let v = if name.ends_with("bias") { 60.0 } else { 0.0 };
        p.data_mut().iter_mut().for_each(|x| *x = v);
    }
    let report = grad_check(&model, &Tensor::vector(vec![1.0, 1.0]));
    assert_eq!(report.max_rel_error, 0.0, "{report:?}");
    assert_eq!(report.saturated.len(), 2, "{report:?}");
    assert_eq!(report.checked, 6);
}

#[test]
fn reduced_vocal_stack() {
    let e = case("vocal_stack");
    assert!(e < GRAD_TOL, "{e}");
}

#[test]
fn reduced_retina_stack() {
    let e = case("retina_stack");
    assert!(e < GRAD_TOL, "{e}");
}

#[test]
fn stacks_hold_across_seeds() {
    for seed in 20..25 {
        for name in ["vocal_stack", "retina_stack"] {
            let (_, shape, layers) = gradient_cases().into_iter().find(|c| c.0 == name).unwrap();
            let e = grad_error(&shape, layers, seed);
            assert!(e < GRAD_TOL, "{name} seed {seed}: {e}");
        }
    }
}
