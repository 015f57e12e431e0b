//! Library results checked against independent computations.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use zs_seek::game::LocalCost;
use zs_seek::graph::{
    default_ring_self_weights, make_ring_topology, perron_left_eigenvector,
    validate_row_stochastic, RowStochasticMatrix, PERRON_TOL,
};
use zs_seek::smoothing::{draw_sample, oracle_g1, oracle_g2, RunningMoments, SmoothingParams};

fn dense_perron(a: &RowStochasticMatrix) -> Vec<f64> {
    let m = a.size();
    let mut sys = DMatrix::from_fn(m, m, |r, c| a.get(c, r) - if r == c { 1.0 } else { 0.0 });
    for c in 0..m {
        sys[(m - 1, c)] = 1.0;
    }
    let mut rhs = DVector::zeros(m);
    rhs[m - 1] = 1.0;
    sys.lu().solve(&rhs).unwrap().iter().copied().collect()
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    for (u, v) in a.iter().zip(b) {
        assert!((u - v).abs() <= tol, "{a:?} vs {b:?}");
    }
}

#[test]
fn perron_matches_dense_solve() {
    let ring = make_ring_topology(3, &[0.3, 0.5, 0.7]).unwrap();
    assert_close(
        &perron_left_eigenvector(&ring, PERRON_TOL).unwrap(),
        &dense_perron(&ring),
        1e-10,
    );

    let two = validate_row_stochastic(&[vec![0.5, 0.5], vec![0.25, 0.75]]).unwrap();
    let rho = perron_left_eigenvector(&two, PERRON_TOL).unwrap();
    assert_close(&rho, &[1.0 / 3.0, 2.0 / 3.0], 1e-10);
    assert_close(&dense_perron(&two), &[1.0 / 3.0, 2.0 / 3.0], 1e-12);

    let ten = make_ring_topology(10, &default_ring_self_weights(10)).unwrap();
    assert_close(
        &perron_left_eigenvector(&ten, PERRON_TOL).unwrap(),
        &dense_perron(&ten),
        1e-10,
    );
}

#[test]
fn matrix_powers_approach_perron_rows() {
    let ring = make_ring_topology(10, &default_ring_self_weights(10)).unwrap();
    let rho = dense_perron(&ring);
    let a = DMatrix::from_fn(10, 10, |r, c| ring.get(r, c));
    let mut p = DMatrix::<f64>::identity(10, 10);
    for _ in 0..500 {
        p = &a * p;
    }
    for i in 0..10 {
        for s in 0..10 {
            assert!((p[(i, s)] - rho[s]).abs() <= 1e-8);
        }
    }
}

/// Mean and variance estimates with standard errors from the first four sample moments.
fn moment_check(values: &[f64], mean: f64, var: f64) {
    let n = values.len() as f64;
    let mut m = RunningMoments::default();
    values.iter().for_each(|&v| m.push(v));
    let e = m.estimate();
    assert!(
        (e.mean - mean).abs() <= 3.0 * e.std_error,
        "mean {} vs {mean}",
        e.mean
    );
    let centred_fourth = values.iter().map(|v| (v - e.mean).powi(4)).sum::<f64>() / n;
    let var_se = ((centred_fourth - m.variance().powi(2)) / n).sqrt();
    assert!(
        (m.variance() - var).abs() <= 3.0 * var_se,
        "variance {} vs {var}",
        m.variance()
    );
}

#[test]
fn gaussian_draws_have_unit_moments() {
    let params = SmoothingParams::gaussian(0.001, 2, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let draws: Vec<_> = (0..1_000_000)
        .map(|_| draw_sample(&params, &mut rng))
        .collect();
    for coord in 0..2 {
        let v: Vec<f64> = draws.iter().map(|d| d.xi[coord]).collect();
        moment_check(&v, 0.0, 1.0);
    }
    let v: Vec<f64> = draws.iter().map(|d| d.eta[0]).collect();
    moment_check(&v, 0.0, 1.0);
}

#[test]
fn truncated_draws_match_truncated_normal_variance() {
    let n = Normal::standard();
    let expected = 1.0 - 2.0 * n.pdf(1.0) / (2.0 * n.cdf(1.0) - 1.0);
    assert!((expected - 0.2912).abs() < 1e-4);

    let params = SmoothingParams::truncated_cube(0.001, 1, 1, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let draws: Vec<_> = (0..1_000_000)
        .map(|_| draw_sample(&params, &mut rng))
        .collect();
    assert!(draws
        .iter()
        .all(|d| d.xi[0].abs() <= 1.0 && d.eta[0].abs() <= 1.0));
    moment_check(
        &draws.iter().map(|d| d.xi[0]).collect::<Vec<_>>(),
        0.0,
        expected,
    );
    moment_check(
        &draws.iter().map(|d| d.eta[0]).collect::<Vec<_>>(),
        0.0,
        expected,
    );
}

#[test]
fn oracle_means_match_smoothed_gradients() {
    // f = x^2 smooths to x^2 + mu^2, f = x*y to x*y: gradients 2x and x.
    let params = SmoothingParams::gaussian(0.001, 1, 1).unwrap();
    let square = LocalCost::new(|x, _| x[0] * x[0]);
    let bilinear = LocalCost::new(|x, y| x[0] * y[0]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut g1 = RunningMoments::default();
    let mut g2 = RunningMoments::default();
    for _ in 0..1_000_000 {
        let s = draw_sample(&params, &mut rng);
        g1.push(oracle_g1(&square, &[1.0], &[0.0], &params, &s).unwrap()[0]);
        g2.push(oracle_g2(&bilinear, &[-1.0], &[0.4], &params, &s).unwrap()[0]);
    }
    let (e1, e2) = (g1.estimate(), g2.estimate());
    assert!((e1.mean - 2.0).abs() <= 3.0 * e1.std_error, "{e1:?}");
    assert!((e2.mean + 1.0).abs() <= 3.0 * e2.std_error, "{e2:?}");
}
