use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Model;
use crate::tensor::Tensor;

const EPS: f64 = 1e-5;
/// Gradients smaller than this on both routes count as saturated.
const FLAT: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// max |analytic − numeric| / max(1e-8, |analytic| + |numeric|) over
    /// entries that are not flat on both routes, where `numeric` is the
    /// closest of the central and two one-sided differences
    pub max_rel_error: f64,
    /// Parameters whose gradient is ~0 on both routes (e.g. saturated sigmoids).
    pub saturated: Vec<String>,
    pub checked: usize,
}

/// Compares backpropagated gradients with central differences on the scalar
/// probe loss `L = Σ c_i · y_i`, where `c` is a fixed pseudo-random vector.
pub fn grad_check(model: &Model, input: &Tensor) -> GradCheckReport {
    let out_shape = model.output_shape();
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9);
    let n: usize = out_shape.iter().product();
    let probe = Tensor::new(out_shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .expect("probe matches output shape");
    let loss = |m: &Model| -> f64 {
        let y = m.forward(input).expect("checked model must accept the input");
        y.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum()
    };

    let analytic = model
        .backward(input, &probe)
        .expect("checked model must accept the input");
    let base = loss(model);
    let mut work = model.clone();
    let mut max_rel_error = 0.0f64;
    let mut saturated = Vec::new();
    let mut checked = 0;
    for (name, grad) in &analytic {
        let mut flat = true;
        for (i, &a) in grad.data().iter().enumerate() {
            let original = work.params()[name].data()[i];
            work.params_mut().get_mut(name).unwrap().data_mut()[i] = original + EPS;
            let plus = loss(&work);
            work.params_mut().get_mut(name).unwrap().data_mut()[i] = original - EPS;
            let minus = loss(&work);
            work.params_mut().get_mut(name).unwrap().data_mut()[i] = original;

            let numeric = (plus - minus) / (2.0 * EPS);
            checked += 1;
            if a.abs() < FLAT && numeric.abs() < FLAT {
                continue;
            }
            flat = false;
            // a step straddling a ReLU kink breaks the central difference;
            // the analytic value then matches the one-sided slope on its side
            let rel = [numeric, (plus - base) / EPS, (base - minus) / EPS]
                .iter()
                .map(|&d| (a - d).abs() / (a.abs() + d.abs()).max(1e-8))
                .fold(f64::INFINITY, f64::min);
            max_rel_error = max_rel_error.max(rel);
        }
        if flat {
            saturated.push(name.clone());
        }
    }
    GradCheckReport {
        max_rel_error,
        saturated,
        checked,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec;

    fn input(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn dense_only_model_is_tight() {
        let model = Model::new(vec![5], vec![LayerSpec::dense(5, 4), LayerSpec::dense(4, 3)], 3).unwrap();
        let r = grad_check(&model, &input(&[5], 1));
        assert!(r.max_rel_error < 1e-6, "{r:?}");
        assert_eq!(r.checked, model.param_count());
    }

    #[test]
    fn saturated_sigmoid_is_flagged_not_failed() {
        let mut model = Model::new(vec![2], vec![LayerSpec::dense(2, 2), LayerSpec::Sigmoid], 0).unwrap();
        model
            .params_mut()
            .insert("0.bias".into(), Tensor::vector(vec![200.0, -200.0]));
        let r = grad_check(&model, &input(&[2], 2));
        assert!(r.max_rel_error < 1e-4, "{r:?}");
        assert!(r.saturated.contains(&"0.weight".to_string()));
        assert!(r.saturated.contains(&"0.bias".to_string()));
    }
}
