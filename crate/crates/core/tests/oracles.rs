//! Checks against closed forms computed independently of the library.

use legendretron::autodiff::{gradient, Arith, Tape};
use legendretron::losses::{bregman_divergence, kl_divergence};
use legendretron::simplex::{log_sum_exp_plus, softmax_plus, unproject, LogitVector};
use legendretron::verify::{
    check_cyclic, check_monotone, jacobian_report, numerical_jacobian, symmetric_eigenvalues, JacobianReport,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn two_by_two_eigenvalues() {
    // [[a, b], [b, c]]: (a + c)/2 ± sqrt(((a − c)/2)² + b²)
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let (a, b, c): (f64, f64, f64) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let m = DMatrix::from_row_slice(2, 2, &[a, b, b, c]);
        let mid = 0.5 * (a + c);
        let rad = (0.25 * (a - c).powi(2) + b * b).sqrt();
        let ev = symmetric_eigenvalues(&m);
        assert!((ev[0] - (mid - rad)).abs() < 1e-12 * (1.0 + rad));
        assert!((ev[1] - (mid + rad)).abs() < 1e-12 * (1.0 + rad));
    }
}

#[test]
fn three_by_three_eigenvalues() {
    // Tridiagonal Toeplitz (2, −1): 2 − 2cos(kπ/4), k = 1, 2, 3.
    let m = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
    let ev = symmetric_eigenvalues(&m);
    let expected = [2.0 - 2f64.sqrt(), 2.0, 2.0 + 2f64.sqrt()];
    for (a, b) in ev.iter().zip(expected) {
        assert!((a - b).abs() < 1e-12, "{ev:?}");
    }
    // All-ones: 0, 0, 3.
    let ev = symmetric_eigenvalues(&DMatrix::from_element(3, 3, 1.0));
    assert!(ev[0].abs() < 1e-12 && ev[1].abs() < 1e-12 && (ev[2] - 3.0).abs() < 1e-12);
}

#[test]
fn jacobian_of_linear_map_is_its_matrix() {
    let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, -1.0, 0.0, 1.0, 3.0, 4.0, -2.0, 0.25]);
    let f = |x: &[f64]| (0..3).map(|i| (0..3).map(|j| a[(i, j)] * x[j]).sum()).collect::<Vec<f64>>();
    let jac = numerical_jacobian(f, &[0.3, -7.0, 2.0], 1e-5).unwrap();
    assert!((&jac - &a).abs().max() < 1e-9);
    let r = JacobianReport::from_jacobian(&[0.0; 3], &a);
    assert!((r.max_asymmetry - 5.0).abs() < 1e-15, "|a13 − a31| = 5");
}

#[test]
fn softmax_plus_jacobian_is_mean_covariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
        let link = |z: &[f64]| softmax_plus(&LogitVector::new(z.to_vec()).unwrap()).into_vec();
        let r = jacobian_report(link, &x, 1e-5).unwrap();
        let mu = link(&x);
        let jac = numerical_jacobian(link, &x, 1e-5).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { mu[i] } else { 0.0 } - mu[i] * mu[j];
                assert!((jac[(i, j)] - expected).abs() < 1e-8);
            }
        }
        assert!(r.is_definite());
    }
}

#[test]
fn log_sum_exp_plus_bregman_is_kl() {
    // D_A(x, y) = KL(softmax(y) ‖ softmax(x)) on the full simplex.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let lse = |v: &[f64]| log_sum_exp_plus(&LogitVector::new(v.to_vec()).unwrap());
    let grad = |v: &[f64]| softmax_plus(&LogitVector::new(v.to_vec()).unwrap()).into_vec();
    for _ in 0..200 {
        let d = rng.random_range(1..6);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-6.0..6.0)).collect();
        let y: Vec<f64> = (0..d).map(|_| rng.random_range(-6.0..6.0)).collect();
        let breg = bregman_divergence(lse, grad, &x, &y);
        let px = unproject(&softmax_plus(&LogitVector::new(x.clone()).unwrap())).unwrap();
        let py = unproject(&softmax_plus(&LogitVector::new(y.clone()).unwrap())).unwrap();
        let kl = kl_divergence(&py, &px).unwrap();
        assert!((breg - kl).abs() < 1e-10 * (1.0 + kl), "{breg} vs {kl}");
    }
}

#[test]
fn half_square_norm_bregman_is_half_squared_distance() {
    let f = |v: &[f64]| 0.5 * v.iter().map(|a| a * a).sum::<f64>();
    let g = |v: &[f64]| v.to_vec();
    let x = [1.0, -2.0, 0.5];
    let y = [0.0, 1.0, 2.5];
    let expected = 0.5 * (1.0 + 9.0 + 4.0);
    assert!((bregman_divergence(f, g, &x, &y) - expected).abs() < 1e-15);
}

#[test]
fn tape_derivatives_of_closed_forms() {
    // f(x, y) = x² y + exp(x y); ∇f = (2xy + y e^{xy}, x² + x e^{xy}).
    let f = |t: &mut Tape, v: &[legendretron::autodiff::Var]| {
        let xx = t.mul(v[0], v[0]);
        let a = t.mul(xx, v[1]);
        let xy = t.mul(v[0], v[1]);
        let e = t.exp(xy);
        t.add(a, e)
    };
    let (x, y) = (0.7, -1.3);
    let g = gradient(f, &[x, y]);
    let e = (x * y).exp();
    assert!((g[0] - (2.0 * x * y + y * e)).abs() < 1e-14);
    assert!((g[1] - (x * x + x * e)).abs() < 1e-14);

    // Hessian by differentiating the recorded gradient.
    let mut t = Tape::new();
    let v = t.vars(&[x, y]);
    let out = f(&mut t, &v);
    let gv = t.grad(out, &v).unwrap();
    let hxx = t.grad(gv[0], &v).unwrap();
    let hyy = t.grad(gv[1], &v).unwrap();
    assert!((t.value(hxx[0]) - (2.0 * y + y * y * e)).abs() < 1e-14);
    assert!((t.value(hxx[1]) - (2.0 * x + e + x * y * e)).abs() < 1e-14);
    assert!((t.value(hyy[1]) - x * x * e).abs() < 1e-14);
    assert!((t.value(hxx[1]) - t.value(hyy[0])).abs() < 1e-15);
}

#[test]
fn rotation_is_monotone_but_not_cyclically_monotone() {
    // Skew part plus a small identity: monotone, yet not a gradient.
    let rot = |x: &[f64]| vec![0.1 * x[0] - x[1], x[0] + 0.1 * x[1]];
    let mono = check_monotone(rot, 2, 500, 10.0, 4);
    assert!(mono.strictly_monotone);
    let cyc = check_cyclic(rot, 2, 3, 500, 10.0, 5).unwrap();
    assert!(!cyc.passed && cyc.max_sum > 1.0);
    let grad = |x: &[f64]| vec![2.0 * x[0], 0.5 * x[1]];
    for n in 2..=4 {
        assert!(check_cyclic(grad, 2, n, 200, 10.0, 6).unwrap().passed);
    }
}
