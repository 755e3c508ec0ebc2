use approx::assert_abs_diff_eq;
use ndarray::Array2;

use mtp_core::learners::{default_library, LearnerSpec};
use mtp_core::sim::standard_normal_vec;
use mtp_core::super_learner::{ensemble_predict, fit_super_learner, make_folds, SuperLearnerConfig};
use mtp_core::{Execution, Task};

fn column(v: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((v.len(), 1), v.to_vec()).unwrap()
}

#[test]
fn noiseless_linear_picks_glm() {
    let xs: Vec<f64> = (0..50).map(|i| i as f64 / 10.0).collect();
    let y: Vec<f64> = xs.iter().map(|x| 3.0 * x).collect();
    let x = column(&xs);
    let lib = vec![LearnerSpec::mean(), LearnerSpec::glm()];
    let m = fit_super_learner(
        x.view(),
        &y,
        None,
        &lib,
        &SuperLearnerConfig::new(Task::Regression, 5, 1),
        None,
    )
    .unwrap();
    assert!(m.weights()[1] > 0.99, "weights {:?}", m.weights());
    let pred = ensemble_predict(&m, x.view()).unwrap();
    for (p, t) in pred.iter().zip(&y) {
        assert_abs_diff_eq!(p, t, epsilon = 1e-6);
    }
}

#[test]
fn library_order_does_not_matter() {
    let n = 300;
    let a = standard_normal_vec(n, 11);
    let e = standard_normal_vec(n, 12);
    let y: Vec<f64> = a.iter().zip(&e).map(|(a, e)| a * a + 0.5 * e).collect();
    let x = column(&a);
    let lib = default_library();
    let mut rev = lib.clone();
    rev.reverse();
    let cfg = SuperLearnerConfig::new(Task::Regression, 5, 3);
    let m1 = fit_super_learner(x.view(), &y, None, &lib, &cfg, None).unwrap();
    let m2 = fit_super_learner(x.view(), &y, None, &rev, &cfg, None).unwrap();
    let j = lib.len();
    for k in 0..j {
        assert_abs_diff_eq!(m1.cv_risks()[k], m2.cv_risks()[j - 1 - k], epsilon = 1e-12);
        assert_abs_diff_eq!(m1.weights()[k], m2.weights()[j - 1 - k], epsilon = 1e-6);
    }
    let p1 = ensemble_predict(&m1, x.view()).unwrap();
    let p2 = ensemble_predict(&m2, x.view()).unwrap();
    for (u, v) in p1.iter().zip(&p2) {
        assert_abs_diff_eq!(u, v, epsilon = 1e-6);
    }
}

#[test]
fn execution_mode_does_not_change_fit() {
    let n = 200;
    let a = standard_normal_vec(n, 21);
    let y: Vec<f64> = a.iter().map(|&v| if v > 0.3 { 1.0 } else { 0.0 }).collect();
    let x = column(&a);
    let lib = default_library();
    let mut cfg = SuperLearnerConfig::new(Task::BinaryProbability, 4, 9);
    cfg.execution = Execution::Sequential;
    let seq = fit_super_learner(x.view(), &y, None, &lib, &cfg, None).unwrap();
    cfg.execution = Execution::Parallel;
    let par = fit_super_learner(x.view(), &y, None, &lib, &cfg, None).unwrap();
    assert_eq!(seq.weights(), par.weights());
    assert_eq!(seq.cv_risks(), par.cv_risks());
    assert!(seq.ensemble_cv_risk() <= seq.cv_risks().iter().copied().fold(f64::INFINITY, f64::min) + 1e-10);
}

#[test]
fn folds_are_balanced() {
    let f = make_folds(103, 5, 4).unwrap();
    let sizes = f.sizes();
    assert_eq!(sizes.iter().sum::<usize>(), 103);
    assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
}
