//! Gaussian perturbations and the two-variable gradient-free oracles.
//!
//! The oracle for network 1 is
//! `g1 = [f(x + mu*xi, pi + mu*eta) - f(x, pi)] / mu * xi`
//! and the one for network 2 weights the same difference by `eta` instead.
//! The Monte-Carlo evaluators for the smoothed cost `f_mu(x, y) = E f(x + mu*xi, y + mu*eta)`
//! are reference tools for tests and diagnostics; the simulator never calls them.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::game::LocalCost;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmoothingError {
    #[error("smoothing parameter must be positive and finite, got {0}")]
    BadMu(f64),
    #[error("truncation half-width {0} must be positive and finite")]
    BadHalfWidth(f64),
    #[error("truncation box has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cost measurement is not finite")]
    NonFiniteCost,
    #[error("need at least {min} Monte-Carlo samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
}

/// Support of the perturbation pair `(xi, eta)`.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleDomain {
    /// Unrestricted standard Gaussian.
    Gaussian,
    /// Standard Gaussian conditioned on the symmetric boxes
    /// `prod [-u_i, u_i]` and `prod [-w_j, w_j]`.
    Truncated { u_half: Vec<f64>, w_half: Vec<f64> },
}

/// Smoothing parameter, dimensions and perturbation domain.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingParams {
    mu: f64,
    n1: usize,
    n2: usize,
    domain: SampleDomain,
}

impl SmoothingParams {
    pub fn new(
        mu: f64,
        n1: usize,
        n2: usize,
        domain: SampleDomain,
    ) -> Result<Self, SmoothingError> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(SmoothingError::BadMu(mu));
        }
        if let SampleDomain::Truncated { u_half, w_half } = &domain {
            for (expected, half) in [(n1, u_half), (n2, w_half)] {
                if half.len() != expected {
                    return Err(SmoothingError::DimensionMismatch {
                        expected,
                        got: half.len(),
                    });
                }
                if let Some(&bad) = half.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
                    return Err(SmoothingError::BadHalfWidth(bad));
                }
            }
        }
        Ok(Self { mu, n1, n2, domain })
    }

    pub fn gaussian(mu: f64, n1: usize, n2: usize) -> Result<Self, SmoothingError> {
        Self::new(mu, n1, n2, SampleDomain::Gaussian)
    }

    /// Truncation to the cubes `[-half, half]^n1` and `[-half, half]^n2`.
    pub fn truncated_cube(
        mu: f64,
        n1: usize,
        n2: usize,
        half: f64,
    ) -> Result<Self, SmoothingError> {
        Self::new(
            mu,
            n1,
            n2,
            SampleDomain::Truncated {
                u_half: vec![half; n1],
                w_half: vec![half; n2],
            },
        )
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn domain(&self) -> &SampleDomain {
        &self.domain
    }
}

/// One perturbation pair.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSample {
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Standard normal conditioned on `[-half, half]`, by rejection.
fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, half: f64) -> f64 {
    loop {
        let z = standard_normal(rng);
        if z.abs() <= half {
            return z;
        }
    }
}

/// Draws `(xi, eta)`. Box truncation factorises over coordinates, so each
/// coordinate is rejected independently.
pub fn draw_sample<R: Rng + ?Sized>(params: &SmoothingParams, rng: &mut R) -> OracleSample {
    match &params.domain {
        SampleDomain::Gaussian => OracleSample {
            xi: (0..params.n1).map(|_| standard_normal(rng)).collect(),
            eta: (0..params.n2).map(|_| standard_normal(rng)).collect(),
        },
        SampleDomain::Truncated { u_half, w_half } => OracleSample {
            xi: u_half.iter().map(|&h| truncated_normal(rng, h)).collect(),
            eta: w_half.iter().map(|&h| truncated_normal(rng, h)).collect(),
        },
    }
}

fn shifted(base: &[f64], dir: &[f64], mu: f64) -> Vec<f64> {
    base.iter().zip(dir).map(|(b, d)| b + mu * d).collect()
}

/// Scaled difference `[f(x + mu*xi, y + mu*eta) - f(x, y)] / mu`, two measurements.
fn difference_quotient(
    f: &LocalCost,
    x: &[f64],
    y: &[f64],
    mu: f64,
    sample: &OracleSample,
) -> Result<f64, SmoothingError> {
    let probe = f.measure(&shifted(x, &sample.xi, mu), &shifted(y, &sample.eta, mu));
    let base = f.measure(x, y);
    if !probe.is_finite() || !base.is_finite() {
        return Err(SmoothingError::NonFiniteCost);
    }
    Ok((probe - base) / mu)
}

/// Oracle of a network-1 agent at its state `x` and estimate `pi` of `y`.
pub fn oracle_g1(
    f: &LocalCost,
    x: &[f64],
    pi: &[f64],
    params: &SmoothingParams,
    sample: &OracleSample,
) -> Result<Vec<f64>, SmoothingError> {
    let q = difference_quotient(f, x, pi, params.mu, sample)?;
    Ok(sample.xi.iter().map(|xi| q * xi).collect())
}

/// Oracle of a network-2 agent at its estimate `pi` of `x` and state `y`.
pub fn oracle_g2(
    f: &LocalCost,
    pi: &[f64],
    y: &[f64],
    params: &SmoothingParams,
    sample: &OracleSample,
) -> Result<Vec<f64>, SmoothingError> {
    let q = difference_quotient(f, pi, y, params.mu, sample)?;
    Ok(sample.eta.iter().map(|eta| q * eta).collect())
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Welford accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningMoments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        let delta = v - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (v - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn estimate(&self) -> McEstimate {
        McEstimate {
            mean: self.mean,
            std_error: (self.variance() / self.n.max(1) as f64).sqrt(),
        }
    }
}

pub const MIN_VALUE_SAMPLES: usize = 1_000;
pub const MIN_GRADIENT_SAMPLES: usize = 10_000;

/// Monte-Carlo estimate of `f_mu(x, y)`.
pub fn smoothed_value<R: Rng + ?Sized>(
    f: &LocalCost,
    x: &[f64],
    y: &[f64],
    params: &SmoothingParams,
    n_mc: usize,
    rng: &mut R,
) -> Result<McEstimate, SmoothingError> {
    if n_mc < MIN_VALUE_SAMPLES {
        return Err(SmoothingError::TooFewSamples {
            min: MIN_VALUE_SAMPLES,
            got: n_mc,
        });
    }
    let mut acc = RunningMoments::default();
    for _ in 0..n_mc {
        let s = draw_sample(params, rng);
        let v = f.measure(
            &shifted(x, &s.xi, params.mu),
            &shifted(y, &s.eta, params.mu),
        );
        if !v.is_finite() {
            return Err(SmoothingError::NonFiniteCost);
        }
        acc.push(v);
    }
    Ok(acc.estimate())
}

/// Argument a gradient is taken with respect to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wrt {
    X,
    Y,
}

/// Per-coordinate Monte-Carlo mean of the corresponding oracle, with standard errors.
pub fn smoothed_gradient<R: Rng + ?Sized>(
    f: &LocalCost,
    x: &[f64],
    y: &[f64],
    params: &SmoothingParams,
    wrt: Wrt,
    n_mc: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>), SmoothingError> {
    if n_mc < MIN_GRADIENT_SAMPLES {
        return Err(SmoothingError::TooFewSamples {
            min: MIN_GRADIENT_SAMPLES,
            got: n_mc,
        });
    }
    let dim = match wrt {
        Wrt::X => params.n1,
        Wrt::Y => params.n2,
    };
    let mut acc = vec![RunningMoments::default(); dim];
    for _ in 0..n_mc {
        let s = draw_sample(params, rng);
        let g = match wrt {
            Wrt::X => oracle_g1(f, x, y, params, &s)?,
            Wrt::Y => oracle_g2(f, x, y, params, &s)?,
        };
        for (a, v) in acc.iter_mut().zip(g) {
            a.push(v);
        }
    }
    Ok((
        acc.iter().map(|a| a.mean()).collect(),
        acc.iter().map(|a| a.estimate().std_error).collect(),
    ))
}

/// Central difference of `f_mu` along one coordinate, estimated with common
/// perturbations on both sides: the mean of
/// `[f(p + h e + mu*s) - f(p - h e + mu*s)] / (2h)` over draws `s`.
#[allow(clippy::too_many_arguments)]
pub fn smoothed_central_difference<R: Rng + ?Sized>(
    f: &LocalCost,
    x: &[f64],
    y: &[f64],
    params: &SmoothingParams,
    wrt: Wrt,
    coord: usize,
    h: f64,
    n_mc: usize,
    rng: &mut R,
) -> Result<McEstimate, SmoothingError> {
    let mut acc = RunningMoments::default();
    for _ in 0..n_mc {
        let s = draw_sample(params, rng);
        let mut xp = shifted(x, &s.xi, params.mu);
        let mut yp = shifted(y, &s.eta, params.mu);
        let (hi, lo) = match wrt {
            Wrt::X => {
                let mut xm = xp.clone();
                xp[coord] += h;
                xm[coord] -= h;
                (f.measure(&xp, &yp), f.measure(&xm, &yp))
            }
            Wrt::Y => {
                let mut ym = yp.clone();
                yp[coord] += h;
                ym[coord] -= h;
                (f.measure(&xp, &yp), f.measure(&xp, &ym))
            }
        };
        if !hi.is_finite() || !lo.is_finite() {
            return Err(SmoothingError::NonFiniteCost);
        }
        acc.push((hi - lo) / (2.0 * h));
    }
    Ok(acc.estimate())
}
