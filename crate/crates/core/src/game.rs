//! Two-network zero-sum games with black-box local costs.
//!
//! The simulator only ever sees [`LocalCost::measure`]. Analytic subgradients,
//! when a game has them, sit in [`ReferenceSubgradients`] and are used by the
//! bound estimator and the verification tests.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::rng::{Channel, StreamKey};

/// Lower floor for estimated subgradient bounds.
pub const BOUND_FLOOR: f64 = 1e-9;
/// Safety margin applied to sampled subgradient maxima.
pub const BOUND_INFLATION: f64 = 1.1;
/// Tolerance for the zero-sum consistency check.
pub const ZERO_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("vector has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("box bound {index}: lo {lo} > hi {hi}")]
    InvertedBox { index: usize, lo: f64, hi: f64 },
    #[error("ball radius {0} must be positive")]
    BadRadius(f64),
    #[error("set description contains a non-finite number")]
    NonFiniteSet,
    #[error("network {0} has no agents")]
    NoAgents(usize),
    #[error("subgradient bounds must be positive, got ({0}, {1})")]
    BadBounds(f64, f64),
    #[error("subgradient bounds have not been set")]
    BoundsUnset,
    #[error("no analytic subgradients and no finite-difference fallback")]
    NoSubgradientInfo,
    #[error("reference subgradients cover {got} agents of network {network}, expected {expected}")]
    ReferenceCount {
        network: usize,
        expected: usize,
        got: usize,
    },
    #[error("network costs differ by {gap} at a sampled point, game is not zero-sum")]
    NotZeroSum { gap: f64 },
}

/// Closed convex strategy set with an exact projection.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvexSet {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl ConvexSet {
    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, GameError> {
        if lo.len() != hi.len() {
            return Err(GameError::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        for (index, (&l, &h)) in lo.iter().zip(&hi).enumerate() {
            if !l.is_finite() || !h.is_finite() {
                return Err(GameError::NonFiniteSet);
            }
            if l > h {
                return Err(GameError::InvertedBox {
                    index,
                    lo: l,
                    hi: h,
                });
            }
        }
        Ok(ConvexSet::Box { lo, hi })
    }

    /// The cube `[lo, hi]^n`.
    pub fn cube(n: usize, lo: f64, hi: f64) -> Result<Self, GameError> {
        Self::boxed(vec![lo; n], vec![hi; n])
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self, GameError> {
        if center.iter().any(|c| !c.is_finite()) || !radius.is_finite() {
            return Err(GameError::NonFiniteSet);
        }
        if radius <= 0.0 {
            return Err(GameError::BadRadius(radius));
        }
        Ok(ConvexSet::Ball { center, radius })
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::Box { lo, .. } => lo.len(),
            ConvexSet::Ball { center, .. } => center.len(),
        }
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        if v.len() != self.dim() {
            return false;
        }
        match self {
            ConvexSet::Box { lo, hi } => v
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(x, (l, h))| *l <= *x && *x <= *h),
            ConvexSet::Ball { center, radius } => dist(v, center) <= *radius,
        }
    }

    pub fn center(&self) -> Vec<f64> {
        match self {
            ConvexSet::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect(),
            ConvexSet::Ball { center, .. } => center.clone(),
        }
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>, GameError> {
        if v.len() != self.dim() {
            return Err(GameError::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(match self {
            ConvexSet::Box { lo, hi } => v
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(x, (l, h))| x.clamp(*l, *h))
                .collect(),
            ConvexSet::Ball { center, radius } => {
                let d = dist(v, center);
                if d <= *radius {
                    return Ok(v.to_vec());
                }
                // shrink until the rounded point passes `contains`, so a second
                // projection returns it unchanged
                let mut scale = radius / d;
                loop {
                    let p: Vec<f64> = v
                        .iter()
                        .zip(center)
                        .map(|(x, c)| c + scale * (x - c))
                        .collect();
                    if dist(&p, center) <= *radius {
                        break p;
                    }
                    scale *= 1.0 - f64::EPSILON;
                }
            }
        })
    }

    /// Uniform draw from the set.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            ConvexSet::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(l, h)| l + (h - l) * rng.random::<f64>())
                .collect(),
            ConvexSet::Ball { center, radius } => {
                let n = center.len();
                let dir: Vec<f64> = (0..n)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let norm = norm2(&dir).max(f64::MIN_POSITIVE);
                let r = radius * rng.random::<f64>().powf(1.0 / n as f64);
                let p: Vec<f64> = center
                    .iter()
                    .zip(&dir)
                    .map(|(c, d)| c + r * d / norm)
                    .collect();
                self.project(&p).expect("dimension matches")
            }
        }
    }
}

/// Free-function form of [`ConvexSet::project`].
pub fn project(set: &ConvexSet, v: &[f64]) -> Result<Vec<f64>, GameError> {
    set.project(v)
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

type CostFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;
type SubgradientFn = dyn Fn(&[f64], &[f64]) -> (Vec<f64>, Vec<f64>) + Send + Sync;

/// A local cost the owning agent can only measure.
#[derive(Clone)]
pub struct LocalCost {
    eval: Arc<CostFn>,
}

impl LocalCost {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        Self { eval: Arc::new(f) }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_, _| c)
    }

    /// One measurement `f(x, y)`.
    #[inline]
    pub fn measure(&self, x: &[f64], y: &[f64]) -> f64 {
        (self.eval)(x, y)
    }
}

impl fmt::Debug for LocalCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("LocalCost(<black box>)")
    }
}

/// Subgradient selection `(d_x f, d_y f)` for one local cost.
#[derive(Clone)]
pub struct Subgradient(Arc<SubgradientFn>);

impl Subgradient {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> (Vec<f64>, Vec<f64>) + Send + Sync + 'static,
    {
        Self(Arc::new(f))
    }

    pub fn at(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (self.0)(x, y)
    }
}

impl fmt::Debug for Subgradient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Subgradient(..)")
    }
}

/// Analytic subgradients of every local cost, for verification only.
#[derive(Debug, Clone)]
pub struct ReferenceSubgradients {
    pub net1: Vec<Subgradient>,
    pub net2: Vec<Subgradient>,
}

/// Bound constants on `|d_x f|` and `|d_y f|` over the strategy sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubgradientBounds {
    pub d1: f64,
    pub d2: f64,
}

/// Scalar cost built from the term family
/// `c0 x^2 + c1 y^2 + c2 |x| + c3 |y| + c4 cos(x/2) + c5 cos(y/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScalarTerms {
    pub x2: f64,
    pub y2: f64,
    pub abs_x: f64,
    pub abs_y: f64,
    pub cos_half_x: f64,
    pub cos_half_y: f64,
}

impl ScalarTerms {
    pub const COUNT: usize = 6;

    pub fn from_coefficients(c: [f64; 6]) -> Self {
        Self {
            x2: c[0],
            y2: c[1],
            abs_x: c[2],
            abs_y: c[3],
            cos_half_x: c[4],
            cos_half_y: c[5],
        }
    }

    pub fn coefficients(&self) -> [f64; 6] {
        [
            self.x2,
            self.y2,
            self.abs_x,
            self.abs_y,
            self.cos_half_x,
            self.cos_half_y,
        ]
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        self.x2 * x * x
            + self.y2 * y * y
            + self.abs_x * x.abs()
            + self.abs_y * y.abs()
            + self.cos_half_x * (0.5 * x).cos()
            + self.cos_half_y * (0.5 * y).cos()
    }

    /// Subgradient selection with `d|t|/dt = 0` at `t = 0`.
    pub fn subgradient(&self, x: f64, y: f64) -> (f64, f64) {
        let gx =
            2.0 * self.x2 * x + self.abs_x * sign0(x) - 0.5 * self.cos_half_x * (0.5 * x).sin();
        let gy =
            2.0 * self.y2 * y + self.abs_y * sign0(y) - 0.5 * self.cos_half_y * (0.5 * y).sin();
        (gx, gy)
    }

    pub fn to_cost(self) -> LocalCost {
        LocalCost::new(move |x, y| self.value(x[0], y[0]))
    }

    pub fn to_subgradient(self) -> Subgradient {
        Subgradient::new(move |x, y| {
            let (gx, gy) = self.subgradient(x[0], y[0]);
            (vec![gx], vec![gy])
        })
    }
}

fn sign0(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else if t < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// The game: local costs of both networks, strategy sets, bound constants.
#[derive(Debug, Clone)]
pub struct GameSpec {
    n1: usize,
    n2: usize,
    costs1: Vec<LocalCost>,
    costs2: Vec<LocalCost>,
    set_x: ConvexSet,
    set_y: ConvexSet,
    bounds: Option<SubgradientBounds>,
    reference: Option<ReferenceSubgradients>,
    equilibrium: Option<(Vec<f64>, Vec<f64>)>,
}

impl GameSpec {
    pub fn new(
        set_x: ConvexSet,
        set_y: ConvexSet,
        costs1: Vec<LocalCost>,
        costs2: Vec<LocalCost>,
    ) -> Result<Self, GameError> {
        if costs1.is_empty() {
            return Err(GameError::NoAgents(1));
        }
        if costs2.is_empty() {
            return Err(GameError::NoAgents(2));
        }
        Ok(Self {
            n1: set_x.dim(),
            n2: set_y.dim(),
            costs1,
            costs2,
            set_x,
            set_y,
            bounds: None,
            reference: None,
            equilibrium: None,
        })
    }

    /// Scalar game (`n1 = n2 = 1`) from term tables; attaches analytic subgradients.
    pub fn scalar(
        set_x: ConvexSet,
        set_y: ConvexSet,
        terms1: &[ScalarTerms],
        terms2: &[ScalarTerms],
    ) -> Result<Self, GameError> {
        for set in [&set_x, &set_y] {
            if set.dim() != 1 {
                return Err(GameError::DimensionMismatch {
                    expected: 1,
                    got: set.dim(),
                });
            }
        }
        let costs1 = terms1.iter().map(|t| t.to_cost()).collect();
        let costs2 = terms2.iter().map(|t| t.to_cost()).collect();
        let reference = ReferenceSubgradients {
            net1: terms1.iter().map(|t| t.to_subgradient()).collect(),
            net2: terms2.iter().map(|t| t.to_subgradient()).collect(),
        };
        Self::new(set_x, set_y, costs1, costs2)?.with_reference(reference)
    }

    pub fn with_bounds(mut self, d1: f64, d2: f64) -> Result<Self, GameError> {
        if !(d1 > 0.0 && d2 > 0.0 && d1.is_finite() && d2.is_finite()) {
            return Err(GameError::BadBounds(d1, d2));
        }
        self.bounds = Some(SubgradientBounds { d1, d2 });
        Ok(self)
    }

    pub fn with_reference(mut self, reference: ReferenceSubgradients) -> Result<Self, GameError> {
        for (network, expected, got) in [
            (1, self.costs1.len(), reference.net1.len()),
            (2, self.costs2.len(), reference.net2.len()),
        ] {
            if expected != got {
                return Err(GameError::ReferenceCount {
                    network,
                    expected,
                    got,
                });
            }
        }
        self.reference = Some(reference);
        Ok(self)
    }

    pub fn with_equilibrium(
        mut self,
        x_star: Vec<f64>,
        y_star: Vec<f64>,
    ) -> Result<Self, GameError> {
        check_dim(self.n1, &x_star)?;
        check_dim(self.n2, &y_star)?;
        self.equilibrium = Some((x_star, y_star));
        Ok(self)
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn m1(&self) -> usize {
        self.costs1.len()
    }

    pub fn m2(&self) -> usize {
        self.costs2.len()
    }

    pub fn costs1(&self) -> &[LocalCost] {
        &self.costs1
    }

    pub fn costs2(&self) -> &[LocalCost] {
        &self.costs2
    }

    pub fn set_x(&self) -> &ConvexSet {
        &self.set_x
    }

    pub fn set_y(&self) -> &ConvexSet {
        &self.set_y
    }

    pub fn bounds(&self) -> Result<SubgradientBounds, GameError> {
        self.bounds.ok_or(GameError::BoundsUnset)
    }

    pub fn reference(&self) -> Option<&ReferenceSubgradients> {
        self.reference.as_ref()
    }

    /// Known Nash equilibrium `(x*, y*)`, if the scenario supplies one.
    pub fn equilibrium(&self) -> Option<(&[f64], &[f64])> {
        self.equilibrium
            .as_ref()
            .map(|(x, y)| (x.as_slice(), y.as_slice()))
    }

    /// Largest `|sum_i f_1i - sum_j f_2j|` over `samples` uniform points of `X x Y`.
    pub fn zero_sum_gap(&self, samples: usize, seed: u64) -> f64 {
        let mut rng = StreamKey::plain(seed, Channel::MonteCarlo).rng();
        (0..samples)
            .map(|_| {
                let x = self.set_x.sample_uniform(&mut rng);
                let y = self.set_y.sample_uniform(&mut rng);
                let f1 = network_cost(self, Network::One, &x, &y);
                let f2 = network_cost(self, Network::Two, &x, &y);
                (f1 - f2).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn check_zero_sum(&self, samples: usize, seed: u64, tol: f64) -> Result<(), GameError> {
        let gap = self.zero_sum_gap(samples, seed);
        if gap > tol {
            return Err(GameError::NotZeroSum { gap });
        }
        Ok(())
    }
}

fn check_dim(expected: usize, v: &[f64]) -> Result<(), GameError> {
    if v.len() != expected {
        return Err(GameError::DimensionMismatch {
            expected,
            got: v.len(),
        });
    }
    Ok(())
}

/// Which of the two networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Network {
    One,
    Two,
}

impl Network {
    pub fn id(self) -> u8 {
        match self {
            Network::One => 1,
            Network::Two => 2,
        }
    }
}

/// Sum of one network's local costs. Network 2 returns `sum_j f_2j`, which
/// equals `F` for a zero-sum game.
pub fn network_cost(game: &GameSpec, which: Network, x: &[f64], y: &[f64]) -> f64 {
    let costs = match which {
        Network::One => game.costs1(),
        Network::Two => game.costs2(),
    };
    costs.iter().map(|c| c.measure(x, y)).sum()
}

/// Term tables of the built-in ten-plus-ten agent scalar game.
pub fn builtin_terms() -> (Vec<ScalarTerms>, Vec<ScalarTerms>) {
    let mut net1 = vec![ScalarTerms {
        abs_x: 0.1,
        abs_y: -0.1,
        cos_half_y: 1.0,
        ..Default::default()
    }];
    for i in 2..=10 {
        let i = i as f64;
        net1.push(ScalarTerms {
            x2: i / 10.0,
            y2: -i / 5.0,
            cos_half_x: -0.1,
            ..Default::default()
        });
    }
    let mut net2 = vec![ScalarTerms {
        abs_x: 0.1,
        abs_y: -0.1,
        cos_half_x: -0.9,
        y2: -9.0,
        ..Default::default()
    }];
    for j in 2..=10 {
        net2.push(ScalarTerms {
            x2: j as f64 / 10.0,
            y2: -0.2,
            cos_half_y: 1.0 / 9.0,
            ..Default::default()
        });
    }
    (net1, net2)
}

/// Sample count used for the built-in game's bound estimate.
pub const BUILTIN_BOUND_SAMPLES: usize = 1000;

/// The built-in scalar game on `X = Y = [-1, 1]` with equilibrium `(0, 0)`.
pub fn builtin_game() -> GameSpec {
    let (t1, t2) = builtin_terms();
    let interval = ConvexSet::cube(1, -1.0, 1.0).expect("valid interval");
    let game = GameSpec::scalar(interval.clone(), interval, &t1, &t2)
        .and_then(|g| g.with_equilibrium(vec![0.0], vec![0.0]))
        .expect("built-in game is well formed");
    let bounds = estimate_subgradient_bounds(&game, BUILTIN_BOUND_SAMPLES, 0, BoundFallback::None)
        .expect("built-in game carries analytic subgradients");
    game.with_bounds(bounds.d1, bounds.d2)
        .expect("positive bounds")
}

/// What to do when a game has no analytic subgradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundFallback {
    None,
    /// Central differences with this step; probes leave the set by at most `h`.
    FiniteDifference {
        h: f64,
    },
}

impl Default for BoundFallback {
    fn default() -> Self {
        BoundFallback::FiniteDifference { h: 1e-6 }
    }
}

/// Evaluation points for the bound estimate: a tensor grid (endpoints
/// included) when both sets are boxes, uniform draws otherwise.
fn bound_sample_points(game: &GameSpec, samples: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    if let (ConvexSet::Box { lo: lx, hi: hx }, ConvexSet::Box { lo: ly, hi: hy }) =
        (game.set_x(), game.set_y())
    {
        let dims = lx.len() + ly.len();
        let per_axis = ((samples.max(2) as f64).powf(1.0 / dims as f64).floor() as usize).max(2);
        if (per_axis as f64).powi(dims as i32) <= 4.0 * samples.max(2) as f64 {
            let lo: Vec<f64> = lx.iter().chain(ly).copied().collect();
            let hi: Vec<f64> = hx.iter().chain(hy).copied().collect();
            let total = per_axis.pow(dims as u32);
            return (0..total)
                .map(|mut idx| {
                    let p: Vec<f64> = (0..dims)
                        .map(|d| {
                            let t = (idx % per_axis) as f64 / (per_axis - 1) as f64;
                            idx /= per_axis;
                            lo[d] + t * (hi[d] - lo[d])
                        })
                        .collect();
                    (p[..lx.len()].to_vec(), p[lx.len()..].to_vec())
                })
                .collect();
        }
    }
    let mut rng = StreamKey::plain(seed, Channel::Bounds).rng();
    (0..samples.max(1))
        .map(|_| {
            (
                game.set_x().sample_uniform(&mut rng),
                game.set_y().sample_uniform(&mut rng),
            )
        })
        .collect()
}

fn finite_difference_subgradient(
    cost: &LocalCost,
    x: &[f64],
    y: &[f64],
    h: f64,
) -> (Vec<f64>, Vec<f64>) {
    let partial = |v: &[f64], i: usize, wrt_x: bool| {
        let mut plus = v.to_vec();
        let mut minus = v.to_vec();
        plus[i] += h;
        minus[i] -= h;
        let (fp, fm) = if wrt_x {
            (cost.measure(&plus, y), cost.measure(&minus, y))
        } else {
            (cost.measure(x, &plus), cost.measure(x, &minus))
        };
        (fp - fm) / (2.0 * h)
    };
    let gx = (0..x.len()).map(|i| partial(x, i, true)).collect();
    let gy = (0..y.len()).map(|i| partial(y, i, false)).collect();
    (gx, gy)
}

/// Sampled maxima of `|d_x f|` and `|d_y f|` over all local costs and points
/// of `X x Y`, inflated by 10% and floored at [`BOUND_FLOOR`].
pub fn estimate_subgradient_bounds(
    game: &GameSpec,
    samples: usize,
    seed: u64,
    fallback: BoundFallback,
) -> Result<SubgradientBounds, GameError> {
    let points = bound_sample_points(game, samples, seed);
    let mut max_x: f64 = 0.0;
    let mut max_y: f64 = 0.0;
    let mut record = |gx: &[f64], gy: &[f64]| {
        max_x = max_x.max(norm2(gx));
        max_y = max_y.max(norm2(gy));
    };
    match (game.reference(), fallback) {
        (Some(reference), _) => {
            for sub in reference.net1.iter().chain(&reference.net2) {
                for (x, y) in &points {
                    let (gx, gy) = sub.at(x, y);
                    record(&gx, &gy);
                }
            }
        }
        (None, BoundFallback::FiniteDifference { h }) => {
            for cost in game.costs1().iter().chain(game.costs2()) {
                for (x, y) in &points {
                    let (gx, gy) = finite_difference_subgradient(cost, x, y, h);
                    record(&gx, &gy);
                }
            }
        }
        (None, BoundFallback::None) => return Err(GameError::NoSubgradientInfo),
    }
    Ok(SubgradientBounds {
        d1: (BOUND_INFLATION * max_x).max(BOUND_FLOOR),
        d2: (BOUND_INFLATION * max_y).max(BOUND_FLOOR),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn interval() -> ConvexSet {
        ConvexSet::cube(1, -1.0, 1.0).unwrap()
    }

    #[test]
    fn box_projection() {
        let s = interval();
        assert_eq!(s.project(&[0.5]).unwrap(), vec![0.5]);
        assert_eq!(s.project(&[2.3]).unwrap(), vec![1.0]);
        assert_eq!(s.project(&[-7.0]).unwrap(), vec![-1.0]);
        assert_eq!(
            s.project(&[0.0, 1.0]),
            Err(GameError::DimensionMismatch {
                expected: 1,
                got: 2
            })
        );
    }

    #[test]
    fn ball_projection() {
        let s = ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap();
        let p = s.project(&[3.0, 4.0]).unwrap();
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
        assert_eq!(
            ConvexSet::ball(vec![0.0], 0.0),
            Err(GameError::BadRadius(0.0))
        );
    }

    #[test]
    fn set_constructors_reject_bad_input() {
        assert!(matches!(
            ConvexSet::boxed(vec![1.0], vec![0.0]),
            Err(GameError::InvertedBox { .. })
        ));
        assert_eq!(
            ConvexSet::boxed(vec![f64::NAN], vec![0.0]),
            Err(GameError::NonFiniteSet)
        );
    }

    fn arb_set() -> impl Strategy<Value = ConvexSet> {
        prop_oneof![
            prop::collection::vec((-5.0..5.0f64, 0.0..3.0f64), 1..4).prop_map(|v| {
                let lo: Vec<f64> = v.iter().map(|(l, _)| *l).collect();
                let hi: Vec<f64> = v.iter().map(|(l, w)| l + w).collect();
                ConvexSet::boxed(lo, hi).unwrap()
            }),
            (prop::collection::vec(-5.0..5.0f64, 1..4), 0.01..4.0f64)
                .prop_map(|(c, r)| ConvexSet::ball(c, r).unwrap()),
        ]
    }

    fn arb_set_and_points() -> impl Strategy<Value = (ConvexSet, Vec<f64>, Vec<f64>)> {
        arb_set().prop_flat_map(|s| {
            let n = s.dim();
            (
                Just(s),
                prop::collection::vec(-20.0..20.0f64, n),
                prop::collection::vec(-20.0..20.0f64, n),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn projection_is_idempotent_feasible_nonexpansive((s, u, v) in arb_set_and_points()) {
            let pu = s.project(&u).unwrap();
            prop_assert!(s.contains(&pu));
            prop_assert_eq!(s.project(&pu).unwrap(), pu.clone());
            let pv = s.project(&v).unwrap();
            prop_assert!(dist(&pu, &pv) <= dist(&u, &v) + 1e-12);
        }
    }

    #[test]
    fn all_zero_costs_sum_to_zero() {
        let zero = ScalarTerms::default();
        let g = GameSpec::scalar(interval(), interval(), &[zero; 3], &[zero; 2]).unwrap();
        assert_eq!(network_cost(&g, Network::One, &[0.3], &[-0.2]), 0.0);
        assert_eq!(network_cost(&g, Network::Two, &[0.3], &[-0.2]), 0.0);
    }

    #[test]
    fn builtin_values_at_origin() {
        let g = builtin_game();
        // cos(0) - 9 * 0.1 * cos(0)
        assert!((network_cost(&g, Network::One, &[0.0], &[0.0]) - 0.1).abs() < 1e-15);
        assert!((g.costs2()[0].measure(&[0.0], &[0.0]) + 0.9).abs() < 1e-15);
        assert_eq!(g.equilibrium(), Some((&[0.0][..], &[0.0][..])));
        assert_eq!((g.m1(), g.m2(), g.n1(), g.n2()), (10, 10, 1, 1));
    }

    #[test]
    fn builtin_is_zero_sum() {
        let g = builtin_game();
        assert!(g.zero_sum_gap(100, 11) <= ZERO_SUM_TOL);
    }

    #[test]
    fn zero_sum_check_rejects_mismatch() {
        let a = ScalarTerms {
            x2: 1.0,
            ..Default::default()
        };
        let b = ScalarTerms {
            x2: 0.5,
            ..Default::default()
        };
        let g = GameSpec::scalar(interval(), interval(), &[a], &[b]).unwrap();
        assert!(matches!(
            g.check_zero_sum(50, 0, 1e-9),
            Err(GameError::NotZeroSum { .. })
        ));
    }

    // Hand-derived: max over [-1,1]^2 grid (endpoints included) of each partial.
    // d_x: f_1,10 gives 2x + 0.05 sin(x/2) -> 2 + 0.05 sin(0.5) at x = 1.
    // d_y: f_21 gives -18y - 0.1 sign(y) -> 18.1 at y = +-1.
    #[test]
    fn builtin_bounds_match_hand_maxima() {
        let b = builtin_game().bounds().unwrap();
        let d1 = 1.1 * (2.0 + 0.05 * 0.5f64.sin());
        let d2 = 1.1 * 18.1;
        assert!((b.d1 - d1).abs() < 1e-12, "{}", b.d1);
        assert!((b.d2 - d2).abs() < 1e-12, "{}", b.d2);
    }

    #[test]
    fn constant_cost_bound_is_floored() {
        let c = ScalarTerms {
            cos_half_x: 0.0,
            ..Default::default()
        };
        let g = GameSpec::scalar(interval(), interval(), &[c], &[c]).unwrap();
        let b = estimate_subgradient_bounds(&g, 100, 0, BoundFallback::None).unwrap();
        assert_eq!((b.d1, b.d2), (BOUND_FLOOR, BOUND_FLOOR));
    }

    #[test]
    fn quadratic_bound_analytic_and_finite_difference() {
        let t = ScalarTerms {
            x2: 1.0,
            ..Default::default()
        };
        let g = GameSpec::scalar(interval(), interval(), &[t], &[t]).unwrap();
        let b = estimate_subgradient_bounds(&g, 1000, 0, BoundFallback::None).unwrap();
        assert!((b.d1 - 2.2).abs() < 1e-12);

        let black_box = GameSpec::new(
            interval(),
            interval(),
            vec![LocalCost::new(|x, _| x[0] * x[0])],
            vec![LocalCost::new(|x, _| x[0] * x[0])],
        )
        .unwrap();
        let fd =
            estimate_subgradient_bounds(&black_box, 1000, 0, BoundFallback::default()).unwrap();
        assert!((fd.d1 - 2.2).abs() < 1e-8);
        assert_eq!(
            estimate_subgradient_bounds(&black_box, 1000, 0, BoundFallback::None),
            Err(GameError::NoSubgradientInfo)
        );
    }

    #[test]
    fn bounds_on_ball_sets_use_random_points() {
        let ball = ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap();
        let g = GameSpec::new(
            ball.clone(),
            ball,
            vec![LocalCost::new(|x, y| {
                x[0] * x[0] + x[1] * x[1] - y[0] * y[0]
            })],
            vec![LocalCost::new(|x, y| {
                x[0] * x[0] + x[1] * x[1] - y[0] * y[0]
            })],
        )
        .unwrap();
        let b = estimate_subgradient_bounds(&g, 5000, 3, BoundFallback::default()).unwrap();
        // |grad_x| = 2|x| <= 2 on the unit ball
        assert!(b.d1 <= 2.2 + 1e-6 && b.d1 > 2.0);
    }

    #[test]
    fn builtin_convex_concave_inequalities() {
        let (t1, t2) = builtin_terms();
        let mut rng = StreamKey::plain(5, Channel::MonteCarlo).rng();
        for t in t1.iter().chain(&t2) {
            for _ in 0..10_000 {
                let x1: f64 = rng.random_range(-1.0..1.0);
                let x2: f64 = rng.random_range(-1.0..1.0);
                let y1: f64 = rng.random_range(-1.0..1.0);
                let y2: f64 = rng.random_range(-1.0..1.0);
                let (gx, _) = t.subgradient(x1, y1);
                assert!(t.value(x2, y1) - t.value(x1, y1) >= gx * (x2 - x1) - 1e-9);
                let (_, gy) = t.subgradient(x1, y1);
                assert!(t.value(x1, y2) - t.value(x1, y1) <= gy * (y2 - y1) + 1e-9);
            }
        }
    }

    #[test]
    fn scalar_game_rejects_vector_sets() {
        let sq = ConvexSet::cube(2, -1.0, 1.0).unwrap();
        let t = ScalarTerms::default();
        assert!(matches!(
            GameSpec::scalar(sq, interval(), &[t], &[t]),
            Err(GameError::DimensionMismatch { .. })
        ));
        assert_eq!(
            GameSpec::scalar(interval(), interval(), &[], &[t]).unwrap_err(),
            GameError::NoAgents(1)
        );
    }
}
