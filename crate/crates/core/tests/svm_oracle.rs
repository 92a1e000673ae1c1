//! Brute-force checks of the linear SVM against an exhaustive (w, b) grid.

mod common;

use common::{grid_optimum, random_instance, rng, svm_case, trained_objective};
use strokescreen::svm::SvmTrainConfig;

#[test]
fn tiny_set_objective_near_grid_minimum() {
    let pts = vec![
        (vec![0.0, 0.0], -1),
        (vec![1.0, 0.2], -1),
        (vec![0.3, 1.1], -1),
        (vec![2.0, 2.1], 1),
        (vec![2.6, 1.2], 1),
        (vec![1.4, 2.8], 1),
    ];
    let (grid, _, _) = grid_optimum(&pts);
    let (obj, _) = trained_objective(&pts, &SvmTrainConfig::default());
    assert!(obj <= grid * 1.05, "trained {obj} vs grid {grid}");
}

#[test]
fn random_instances_match_grid_signs() {
    let mut r = rng(2024);
    for case in 0..20 {
        let pts = random_instance(&mut r);
        if let Err(e) = svm_case(&pts, case) {
            panic!("case {case}: {e}");
        }
    }
}
