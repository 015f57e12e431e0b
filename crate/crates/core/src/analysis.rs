//! Error metrics and the closed-form bound constants.

use thiserror::Error;

use crate::game::{network_cost, GameError, GameSpec, Network};
use crate::smoothing::SmoothingParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("got {states} states but {weights} weights")]
    CountMismatch { states: usize, weights: usize },
    #[error("state {index} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("no states to average")]
    Empty,
    #[error(transparent)]
    Game(#[from] GameError),
}

/// `sum_i rho_i * states_i`.
pub fn weighted_average(states: &[Vec<f64>], rho: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    if states.len() != rho.len() {
        return Err(AnalysisError::CountMismatch {
            states: states.len(),
            weights: rho.len(),
        });
    }
    let dim = states.first().ok_or(AnalysisError::Empty)?.len();
    let mut out = vec![0.0; dim];
    for (index, (s, r)) in states.iter().zip(rho).enumerate() {
        if s.len() != dim {
            return Err(AnalysisError::DimensionMismatch {
                index,
                expected: dim,
                got: s.len(),
            });
        }
        for (o, v) in out.iter_mut().zip(s) {
            *o += r * v;
        }
    }
    Ok(out)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `sqrt(sum_i |s_i - c|^2)`.
pub fn total_deviation(states: &[Vec<f64>], center: &[f64]) -> f64 {
    states
        .iter()
        .map(|s| sq_dist(s, center))
        .sum::<f64>()
        .sqrt()
}

/// `max_i |s_i - c|`.
pub fn max_deviation(states: &[Vec<f64>], center: &[f64]) -> f64 {
    states
        .iter()
        .map(|s| sq_dist(s, center).sqrt())
        .fold(0.0, f64::max)
}

/// One line of the per-round metrics stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub k: u64,
    pub alpha: f64,
    pub cons_err_x: f64,
    pub cons_err_y: f64,
    pub ne_err_x: f64,
    pub ne_err_y: f64,
    pub max_residual: f64,
}

impl MetricsRow {
    pub const CSV_HEADER: &'static str =
        "k,alpha,cons_err_x,cons_err_y,ne_err_x,ne_err_y,max_residual";

    /// Numbers carry 17 significant digits.
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.k,
            self.alpha,
            self.cons_err_x,
            self.cons_err_y,
            self.ne_err_x,
            self.ne_err_y,
            self.max_residual
        )
    }

    pub fn parse_csv_line(line: &str) -> Option<Self> {
        let mut parts = line.trim().split(',');
        let k = parts.next()?.parse().ok()?;
        let mut next = || -> Option<f64> { parts.next()?.parse().ok() };
        let row = Self {
            k,
            alpha: next()?,
            cons_err_x: next()?,
            cons_err_y: next()?,
            ne_err_x: next()?,
            ne_err_y: next()?,
            max_residual: next()?,
        };
        Some(row)
    }
}

/// Builds a [`MetricsRow`]. Consensus errors are measured against the
/// Perron-weighted averages, equilibrium errors against `(x*, y*)`.
#[allow(clippy::too_many_arguments)]
pub fn metrics_row(
    k: u64,
    alpha: f64,
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    rho1: &[f64],
    rho2: &[f64],
    x_star: &[f64],
    y_star: &[f64],
    max_residual: f64,
) -> Result<MetricsRow, AnalysisError> {
    let x_bar = weighted_average(xs, rho1)?;
    let y_bar = weighted_average(ys, rho2)?;
    Ok(MetricsRow {
        k,
        alpha,
        cons_err_x: total_deviation(xs, &x_bar),
        cons_err_y: total_deviation(ys, &y_bar),
        ne_err_x: total_deviation(xs, x_star),
        ne_err_y: total_deviation(ys, y_star),
        max_residual,
    })
}

/// Closed-form constants of the smoothed problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    /// Bound on the network-1 oracle second moment (square root).
    pub m1_const: f64,
    /// Bound on the network-2 oracle second moment (square root).
    pub m2_const: f64,
    /// Lower sandwich slack `mu * D2 * sqrt(n2)`.
    pub c: f64,
    /// Upper sandwich slack `mu * (D1 * sqrt(n1) + D2 * sqrt(n2))`.
    pub d: f64,
    /// Neighbourhood radius `mu * min(m1, m2) * (D1 sqrt(n1) + 2 D2 sqrt(n2))`.
    pub theta: f64,
}

/// Inputs of [`BoundReport::from_constants`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub mu: f64,
    pub m1: usize,
    pub m2: usize,
    pub n1: usize,
    pub n2: usize,
    pub d1: f64,
    pub d2: f64,
}

/// `M = [D_own^2 (4 + n_own)^2 + D_other^2 n1 n2 + 2 D1 D2 (3 + n_own)^{3/2} n_other^{1/2}]^{1/2}`.
pub fn moment_constant(own_d: f64, other_d: f64, own_n: usize, other_n: usize) -> f64 {
    let (own_n, other_n) = (own_n as f64, other_n as f64);
    (own_d.powi(2) * (4.0 + own_n).powi(2)
        + other_d.powi(2) * own_n * other_n
        + 2.0 * own_d * other_d * (3.0 + own_n).powf(1.5) * other_n.sqrt())
    .sqrt()
}

impl BoundReport {
    pub fn from_constants(b: BoundInputs) -> Self {
        let (sn1, sn2) = ((b.n1 as f64).sqrt(), (b.n2 as f64).sqrt());
        let m_min = b.m1.min(b.m2) as f64;
        Self {
            m1_const: moment_constant(b.d1, b.d2, b.n1, b.n2),
            m2_const: moment_constant(b.d2, b.d1, b.n2, b.n1),
            c: b.mu * b.d2 * sn2,
            d: b.mu * (b.d1 * sn1 + b.d2 * sn2),
            theta: b.mu * m_min * (b.d1 * sn1 + 2.0 * b.d2 * sn2),
        }
    }
}

pub fn compute_bounds(
    game: &GameSpec,
    params: &SmoothingParams,
) -> Result<BoundReport, AnalysisError> {
    let b = game.bounds()?;
    Ok(BoundReport::from_constants(BoundInputs {
        mu: params.mu(),
        m1: game.m1(),
        m2: game.m2(),
        n1: game.n1(),
        n2: game.n2(),
        d1: b.d1,
        d2: b.d2,
    }))
}

/// `(F(x, y*) - F(x*, y*), F(x*, y) - F(x*, y*))`.
pub fn saddle_gap(
    game: &GameSpec,
    x: &[f64],
    y: &[f64],
    x_star: &[f64],
    y_star: &[f64],
) -> (f64, f64) {
    let f = |a: &[f64], b: &[f64]| network_cost(game, Network::One, a, b);
    let at_star = f(x_star, y_star);
    (f(x, y_star) - at_star, f(x_star, y) - at_star)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::builtin_game;
    use proptest::prelude::*;

    #[test]
    fn weighted_average_examples() {
        let v = vec![1.5, -2.0];
        assert_eq!(
            weighted_average(&[v.clone(), v.clone()], &[0.25, 0.75]).unwrap(),
            v
        );
        let avg = weighted_average(&[vec![0.0], vec![3.0]], &[1.0 / 3.0, 2.0 / 3.0]).unwrap();
        assert!((avg[0] - 2.0).abs() < 1e-15);
        let mean = weighted_average(&[vec![1.0], vec![2.0], vec![6.0]], &[1.0 / 3.0; 3]).unwrap();
        assert!((mean[0] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn weighted_average_errors() {
        assert!(matches!(
            weighted_average(&[vec![0.0], vec![1.0, 2.0]], &[0.5, 0.5]),
            Err(AnalysisError::DimensionMismatch { index: 1, .. })
        ));
        assert!(matches!(
            weighted_average(&[vec![0.0]], &[0.5, 0.5]),
            Err(AnalysisError::CountMismatch { .. })
        ));
        assert_eq!(weighted_average(&[], &[]), Err(AnalysisError::Empty));
    }

    #[test]
    fn metrics_examples() {
        let at_eq = metrics_row(
            1,
            0.1,
            &vec![vec![0.0]; 3],
            &vec![vec![0.0]; 2],
            &[1.0 / 3.0; 3],
            &[0.5; 2],
            &[0.0],
            &[0.0],
            0.0,
        )
        .unwrap();
        assert_eq!(
            (
                at_eq.cons_err_x,
                at_eq.cons_err_y,
                at_eq.ne_err_x,
                at_eq.ne_err_y
            ),
            (0.0, 0.0, 0.0, 0.0)
        );
        // two agents at 0 and 2, uniform weights: mean 1, deviations 1 and 1
        let row = metrics_row(
            1,
            0.1,
            &[vec![0.0], vec![2.0]],
            &[vec![0.0]],
            &[0.5, 0.5],
            &[1.0],
            &[0.0],
            &[0.0],
            0.0,
        )
        .unwrap();
        assert!((row.cons_err_x - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(row.ne_err_x, 2.0);
        assert_eq!(row.cons_err_y, 0.0);
    }

    #[test]
    fn csv_line_round_trips() {
        let row = MetricsRow {
            k: 300,
            alpha: 0.1 / 301.0,
            cons_err_x: 1.0 / 3.0,
            cons_err_y: 2e-17,
            ne_err_x: std::f64::consts::PI,
            ne_err_y: 0.0,
            max_residual: 1e-300,
        };
        assert_eq!(MetricsRow::parse_csv_line(&row.to_csv_line()), Some(row));
    }

    #[test]
    fn bounds_scale_with_mu() {
        let zero = BoundReport::from_constants(BoundInputs {
            mu: 0.0,
            m1: 4,
            m2: 3,
            n1: 2,
            n2: 1,
            d1: 1.0,
            d2: 2.0,
        });
        assert_eq!((zero.c, zero.d, zero.theta), (0.0, 0.0, 0.0));
        assert!(zero.m1_const > 0.0 && zero.m2_const > 0.0);
    }

    #[test]
    fn moment_constant_unit_case() {
        // 1 * 25 + 1 * 1 + 2 * 4^{3/2} = 42
        let r = BoundReport::from_constants(BoundInputs {
            mu: 0.1,
            m1: 1,
            m2: 1,
            n1: 1,
            n2: 1,
            d1: 1.0,
            d2: 1.0,
        });
        assert!((r.m1_const - 42f64.sqrt()).abs() < 1e-14);
        assert!((r.m2_const - 42f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn theta_decomposes_into_sandwich_parts() {
        let inputs = BoundInputs {
            mu: 0.03,
            m1: 7,
            m2: 4,
            n1: 3,
            n2: 2,
            d1: 1.7,
            d2: 0.6,
        };
        let r = BoundReport::from_constants(inputs);
        let m = 4.0;
        let theta1 = inputs.mu * m * inputs.d2 * 2f64.sqrt();
        let theta2 = inputs.mu * m * (inputs.d1 * 3f64.sqrt() + inputs.d2 * 2f64.sqrt());
        assert!((r.theta - (theta1 + theta2)).abs() < 1e-14);
        assert!((r.theta - m * (r.c + r.d)).abs() < 1e-14);
    }

    #[test]
    fn builtin_theta_from_estimated_bounds() {
        let g = builtin_game();
        let p = SmoothingParams::truncated_cube(0.001, 1, 1, 1.0).unwrap();
        let r = compute_bounds(&g, &p).unwrap();
        let b = g.bounds().unwrap();
        let expected = 0.001 * 10.0 * (b.d1 + 2.0 * b.d2);
        assert!((r.theta - expected).abs() < 1e-15);
        // d1 = 1.1 * (2 + 0.05 sin 0.5), d2 = 1.1 * 18.1
        assert!((r.theta - 0.4205).abs() < 1e-3, "{}", r.theta);
    }

    #[test]
    fn saddle_gap_builtin() {
        let g = builtin_game();
        assert_eq!(saddle_gap(&g, &[0.0], &[0.0], &[0.0], &[0.0]), (0.0, 0.0));
        // F(x, 0) - F(0, 0) = 0.1|x| + 5.4 x^2 + 0.9 (1 - cos(x/2))
        let (gx, _) = saddle_gap(&g, &[0.1], &[0.0], &[0.0], &[0.0]);
        let expected = 0.01 + 0.054 + 0.9 * (1.0 - 0.05f64.cos());
        assert!((gx - expected).abs() < 1e-14, "{gx}");
    }

    proptest! {
        #[test]
        fn saddle_property_on_builtin(x in -1.0..1.0f64, y in -1.0..1.0f64) {
            let g = builtin_game();
            let (gx, gy) = saddle_gap(&g, &[x], &[y], &[0.0], &[0.0]);
            prop_assert!(gx >= 0.0);
            prop_assert!(gy <= 0.0);
        }

        #[test]
        fn weighted_average_is_permutation_equivariant(
            pairs in prop::collection::vec((-10.0..10.0f64, 0.01..1.0f64), 1..12),
            rot in 0usize..12,
        ) {
            let total: f64 = pairs.iter().map(|p| p.1).sum();
            let states: Vec<Vec<f64>> = pairs.iter().map(|p| vec![p.0]).collect();
            let rho: Vec<f64> = pairs.iter().map(|p| p.1 / total).collect();
            let mut s2 = states.clone();
            let mut r2 = rho.clone();
            let shift = rot % states.len();
            s2.rotate_left(shift);
            r2.rotate_left(shift);
            let a = weighted_average(&states, &rho).unwrap();
            let b = weighted_average(&s2, &r2).unwrap();
            prop_assert!((a[0] - b[0]).abs() <= 1e-12);
            let ma = metrics_row(0, 1.0, &states, &states, &rho, &rho, &[0.0], &[0.0], 0.0).unwrap();
            let mb = metrics_row(0, 1.0, &s2, &s2, &r2, &r2, &[0.0], &[0.0], 0.0).unwrap();
            prop_assert!((ma.cons_err_x - mb.cons_err_x).abs() <= 1e-12);
            prop_assert!((ma.ne_err_x - mb.ne_err_x).abs() <= 1e-12);
        }
    }
}
