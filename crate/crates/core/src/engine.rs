//! Round-synchronous simulation of both networks.
//!
//! Each round reads only the previous round's states and writes a fresh set,
//! so per-agent updates can run on any number of workers with identical results.
//! Network-1 agents descend, network-2 agents ascend:
//!
//! ```text
//! x_i' = P_X( sum_s a1[i][s] x_s - alpha_k / v_i[i] * g1_i(x_i, pi1_i) )
//! v_i' = sum_s a1[i][s] v_s
//! y_j' = P_Y( sum_s a2[j][s] y_s + alpha_k / w_j[j] * g2_j(pi2_j, y_j) )
//! w_j' = sum_s a2[j][s] w_s
//! ```

use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::{metrics_row, AnalysisError, MetricsRow};
use crate::game::{norm2, ConvexSet, GameError, GameSpec, LocalCost, Network};
use crate::graph::{
    perron_left_eigenvector, CrossWeights, GraphError, NetworkTopology, RowStochasticMatrix,
    PERRON_TOL,
};
use crate::rng::StreamKey;
use crate::smoothing::{draw_sample, oracle_g1, oracle_g2, SmoothingError, SmoothingParams};

/// Slack on the per-round residual inequality.
pub const RESIDUAL_TOL: f64 = 1e-12;
/// Smallest admissible own-index Perron estimate.
pub const MIN_PERRON_ESTIMATE: f64 = 1e-300;
pub const DEFAULT_METRICS_EVERY: u64 = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("step schedule needs a > 0 and p in (0.5, 1], got a = {a}, p = {p}")]
    BadSchedule { a: f64, p: f64 },
    #[error("initial state of agent {agent} in network {network} lies outside its set")]
    InfeasibleInit { network: u8, agent: usize },
    #[error("expected {expected} initial states for network {network}, got {got}")]
    InitCount {
        network: u8,
        expected: usize,
        got: usize,
    },
    #[error("cross-weight row {row} has zero sum")]
    ZeroCrossRow { row: usize },
    #[error("game has {game} agents in network {network} but topology has {topology}")]
    SizeMismatch {
        network: u8,
        game: usize,
        topology: usize,
    },
    #[error("smoothing dimensions ({p1}, {p2}) differ from game dimensions ({g1}, {g2})")]
    SmoothingDims {
        p1: usize,
        p2: usize,
        g1: usize,
        g2: usize,
    },
    #[error("residual bound violated at agent {agent} of network {network} in round {round}: {residual} > {bound}")]
    BoundViolation {
        network: u8,
        agent: usize,
        round: u64,
        residual: f64,
        bound: f64,
    },
    #[error(
        "non-finite or degenerate state at agent {agent} of network {network} in round {round}"
    )]
    NonFiniteState {
        network: u8,
        agent: usize,
        round: u64,
    },
    #[error("rounds must be at least 1")]
    InvalidRounds,
    #[error("metrics interval must be at least 1")]
    InvalidMetricsEvery,
    #[error("scenario has no known equilibrium to measure against")]
    MissingEquilibrium,
    #[error("metrics sink failed: {0}")]
    Sink(String),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Smoothing(#[from] SmoothingError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

/// Decision vector plus the agent's running estimate of its own network's
/// Perron vector (a row of `A^k`).
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub z: Vec<f64>,
    pub perron_est: Vec<f64>,
}

/// `alpha_k = a / (k + 1)^p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    a: f64,
    p: f64,
}

impl StepSchedule {
    pub fn new(a: f64, p: f64) -> Result<Self, EngineError> {
        if !(a > 0.0 && a.is_finite() && p > 0.5 && p <= 1.0) {
            return Err(EngineError::BadSchedule { a, p });
        }
        Ok(Self { a, p })
    }

    pub fn alpha(&self, k: u64) -> f64 {
        self.a / ((k + 1) as f64).powf(self.p)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

/// How the decision vectors start. Perron estimates always start at `I_i`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitRule {
    Given {
        x0: Vec<Vec<f64>>,
        y0: Vec<Vec<f64>>,
    },
    SetCenter,
    RandomInSet,
}

fn unit_vector(m: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; m];
    v[i] = 1.0;
    v
}

fn init_network(
    set: &ConvexSet,
    m: usize,
    network: u8,
    rule: &InitRule,
    seed: u64,
) -> Result<Vec<AgentState>, EngineError> {
    (0..m)
        .map(|i| {
            let z = match rule {
                InitRule::SetCenter => set.center(),
                InitRule::RandomInSet => {
                    set.sample_uniform(&mut StreamKey::init(seed, network, i).rng())
                }
                InitRule::Given { x0, y0 } => {
                    let given = if network == 1 { x0 } else { y0 };
                    if given.len() != m {
                        return Err(EngineError::InitCount {
                            network,
                            expected: m,
                            got: given.len(),
                        });
                    }
                    if !set.contains(&given[i]) {
                        return Err(EngineError::InfeasibleInit { network, agent: i });
                    }
                    given[i].clone()
                }
            };
            Ok(AgentState {
                z,
                perron_est: unit_vector(m, i),
            })
        })
        .collect()
}

pub fn init_states(
    game: &GameSpec,
    topo: &NetworkTopology,
    rule: &InitRule,
    seed: u64,
) -> Result<(Vec<AgentState>, Vec<AgentState>), EngineError> {
    check_sizes(game, topo)?;
    Ok((
        init_network(game.set_x(), game.m1(), 1, rule, seed)?,
        init_network(game.set_y(), game.m2(), 2, rule, seed)?,
    ))
}

fn check_sizes(game: &GameSpec, topo: &NetworkTopology) -> Result<(), EngineError> {
    for (network, g, t) in [(1, game.m1(), topo.m1()), (2, game.m2(), topo.m2())] {
        if g != t {
            return Err(EngineError::SizeMismatch {
                network,
                game: g,
                topology: t,
            });
        }
    }
    Ok(())
}

/// Estimate of the other network's decision: the cross-weighted average of its states.
pub fn compute_pi(
    cross: &CrossWeights,
    other: &[Vec<f64>],
    i: usize,
) -> Result<Vec<f64>, EngineError> {
    let row = cross.row(i);
    let total: f64 = row.iter().sum();
    if total <= 0.0 {
        return Err(EngineError::ZeroCrossRow { row: i });
    }
    let dim = other.first().map_or(0, Vec::len);
    let mut pi = vec![0.0; dim];
    for (w, state) in row.iter().zip(other) {
        if *w == 0.0 {
            continue;
        }
        for (p, v) in pi.iter_mut().zip(state) {
            *p += w * v;
        }
    }
    pi.iter_mut().for_each(|p| *p /= total);
    Ok(pi)
}

/// Residual and oracle norms of one round.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoundDiagnostics {
    pub residual_norms1: Vec<f64>,
    pub residual_norms2: Vec<f64>,
    pub oracle_norms1: Vec<f64>,
    pub oracle_norms2: Vec<f64>,
    pub bound_violations: usize,
}

impl RoundDiagnostics {
    pub fn max_residual(&self) -> f64 {
        self.residual_norms1
            .iter()
            .chain(&self.residual_norms2)
            .copied()
            .fold(0.0, f64::max)
    }
}

struct AgentOutcome {
    state: AgentState,
    residual: f64,
    oracle_norm: f64,
    bound: f64,
}

/// Everything a run needs besides the mutable states.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    pub game: &'a GameSpec,
    pub topo: &'a NetworkTopology,
    pub params: &'a SmoothingParams,
    pub schedule: StepSchedule,
    pub seed: u64,
}

struct NetworkView<'a> {
    id: u8,
    weights: &'a RowStochasticMatrix,
    cross: &'a CrossWeights,
    costs: &'a [LocalCost],
    set: &'a ConvexSet,
}

impl<'a> Simulator<'a> {
    pub fn new(
        game: &'a GameSpec,
        topo: &'a NetworkTopology,
        params: &'a SmoothingParams,
        schedule: StepSchedule,
        seed: u64,
    ) -> Result<Self, EngineError> {
        check_sizes(game, topo)?;
        if params.n1() != game.n1() || params.n2() != game.n2() {
            return Err(EngineError::SmoothingDims {
                p1: params.n1(),
                p2: params.n2(),
                g1: game.n1(),
                g2: game.n2(),
            });
        }
        Ok(Self {
            game,
            topo,
            params,
            schedule,
            seed,
        })
    }

    fn view(&self, network: Network) -> NetworkView<'a> {
        match network {
            Network::One => NetworkView {
                id: 1,
                weights: &self.topo.a1,
                cross: &self.topo.b1,
                costs: self.game.costs1(),
                set: self.game.set_x(),
            },
            Network::Two => NetworkView {
                id: 2,
                weights: &self.topo.a2,
                cross: &self.topo.b2,
                costs: self.game.costs2(),
                set: self.game.set_y(),
            },
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn update_agent(
        &self,
        net: &NetworkView<'_>,
        i: usize,
        k: u64,
        alpha: f64,
        own_z: &[Vec<f64>],
        own_perron: &[Vec<f64>],
        other_z: &[Vec<f64>],
    ) -> Result<AgentOutcome, EngineError> {
        let mixed = net.weights.mix_row(i, own_z);
        let perron_est = net.weights.mix_row(i, own_perron);
        let pi = compute_pi(net.cross, other_z, i)?;
        let sample = draw_sample(
            self.params,
            &mut StreamKey::oracle(self.seed, net.id, i, k).rng(),
        );

        let scale = own_perron[i][i];
        if !(scale >= MIN_PERRON_ESTIMATE) {
            return Err(EngineError::NonFiniteState {
                network: net.id,
                agent: i,
                round: k,
            });
        }
        let step = alpha / scale;
        // network 1 descends along g1, network 2 ascends along g2
        let (g, signed_step) = if net.id == 1 {
            (
                oracle_g1(&net.costs[i], &own_z[i], &pi, self.params, &sample)?,
                -step,
            )
        } else {
            (
                oracle_g2(&net.costs[i], &pi, &own_z[i], self.params, &sample)?,
                step,
            )
        };
        let candidate: Vec<f64> = mixed
            .iter()
            .zip(&g)
            .map(|(m, gi)| m + signed_step * gi)
            .collect();
        let z = net.set.project(&candidate)?;
        if z.iter().chain(&perron_est).any(|v| !v.is_finite()) {
            return Err(EngineError::NonFiniteState {
                network: net.id,
                agent: i,
                round: k,
            });
        }
        let residual = z
            .iter()
            .zip(&mixed)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let oracle_norm = norm2(&g);
        Ok(AgentOutcome {
            state: AgentState { z, perron_est },
            residual,
            oracle_norm,
            bound: step * oracle_norm,
        })
    }

    fn update_network(
        &self,
        network: Network,
        k: u64,
        own: &[AgentState],
        other: &[AgentState],
    ) -> Result<Vec<AgentOutcome>, EngineError> {
        let net = self.view(network);
        let alpha = self.schedule.alpha(k);
        let own_z: Vec<Vec<f64>> = own.iter().map(|s| s.z.clone()).collect();
        let own_perron: Vec<Vec<f64>> = own.iter().map(|s| s.perron_est.clone()).collect();
        let other_z: Vec<Vec<f64>> = other.iter().map(|s| s.z.clone()).collect();
        (0..own.len())
            .into_par_iter()
            .map(|i| self.update_agent(&net, i, k, alpha, &own_z, &own_perron, &other_z))
            .collect()
    }

    /// One synchronous round `k -> k + 1`.
    pub fn round_update(
        &self,
        k: u64,
        states1: &[AgentState],
        states2: &[AgentState],
    ) -> Result<(Vec<AgentState>, Vec<AgentState>, RoundDiagnostics), EngineError> {
        let (out1, out2) = rayon::join(
            || self.update_network(Network::One, k, states1, states2),
            || self.update_network(Network::Two, k, states2, states1),
        );
        let (out1, out2) = (out1?, out2?);

        let mut diag = RoundDiagnostics::default();
        let mut first_violation = None;
        for (network, outcomes) in [(1u8, &out1), (2u8, &out2)] {
            for (agent, o) in outcomes.iter().enumerate() {
                if o.residual > o.bound + RESIDUAL_TOL {
                    diag.bound_violations += 1;
                    first_violation.get_or_insert(EngineError::BoundViolation {
                        network,
                        agent,
                        round: k,
                        residual: o.residual,
                        bound: o.bound,
                    });
                }
            }
        }
        if let Some(err) = first_violation {
            return Err(err);
        }
        diag.residual_norms1 = out1.iter().map(|o| o.residual).collect();
        diag.residual_norms2 = out2.iter().map(|o| o.residual).collect();
        diag.oracle_norms1 = out1.iter().map(|o| o.oracle_norm).collect();
        diag.oracle_norms2 = out2.iter().map(|o| o.oracle_norm).collect();
        Ok((
            out1.into_iter().map(|o| o.state).collect(),
            out2.into_iter().map(|o| o.state).collect(),
            diag,
        ))
    }
}

/// Receives metrics rows as a run progresses.
pub trait MetricsSink {
    fn record(&mut self, row: &MetricsRow) -> Result<(), String>;
}

impl MetricsSink for Vec<MetricsRow> {
    fn record(&mut self, row: &MetricsRow) -> Result<(), String> {
        self.push(*row);
        Ok(())
    }
}

/// Discards every row.
pub struct NullSink;

impl MetricsSink for NullSink {
    fn record(&mut self, _row: &MetricsRow) -> Result<(), String> {
        Ok(())
    }
}

/// Final states of a run and the running totals of its diagnostics.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub states1: Vec<AgentState>,
    pub states2: Vec<AgentState>,
    pub rounds: u64,
    pub bound_violations: usize,
    pub max_residual: f64,
}

/// Runs `rounds` rounds from the given states. After round `k` completes,
/// a row for `k` is recorded whenever `k % metrics_every == 0`.
pub fn run_from(
    sim: &Simulator<'_>,
    mut states1: Vec<AgentState>,
    mut states2: Vec<AgentState>,
    rounds: u64,
    metrics_every: u64,
    sink: &mut dyn MetricsSink,
) -> Result<RunOutcome, EngineError> {
    if rounds == 0 {
        return Err(EngineError::InvalidRounds);
    }
    if metrics_every == 0 {
        return Err(EngineError::InvalidMetricsEvery);
    }
    let (x_star, y_star) = sim
        .game
        .equilibrium()
        .ok_or(EngineError::MissingEquilibrium)?;
    let rho1 = perron_left_eigenvector(&sim.topo.a1, PERRON_TOL)?;
    let rho2 = perron_left_eigenvector(&sim.topo.a2, PERRON_TOL)?;

    let mut bound_violations = 0;
    let mut max_residual: f64 = 0.0;
    let mut window_residual: f64 = 0.0;
    for k in 0..rounds {
        let (next1, next2, diag) = sim.round_update(k, &states1, &states2)?;
        states1 = next1;
        states2 = next2;
        bound_violations += diag.bound_violations;
        let r = diag.max_residual();
        max_residual = max_residual.max(r);
        window_residual = window_residual.max(r);
        let done = k + 1;
        if done % metrics_every == 0 {
            let xs: Vec<Vec<f64>> = states1.iter().map(|s| s.z.clone()).collect();
            let ys: Vec<Vec<f64>> = states2.iter().map(|s| s.z.clone()).collect();
            let row = metrics_row(
                done,
                sim.schedule.alpha(k),
                &xs,
                &ys,
                &rho1,
                &rho2,
                x_star,
                y_star,
                window_residual,
            )?;
            sink.record(&row).map_err(EngineError::Sink)?;
            window_residual = 0.0;
        }
    }
    Ok(RunOutcome {
        states1,
        states2,
        rounds,
        bound_violations,
        max_residual,
    })
}

/// Initialises with `init` and runs; see [`run_from`].
pub fn run(
    sim: &Simulator<'_>,
    init: &InitRule,
    rounds: u64,
    metrics_every: u64,
    sink: &mut dyn MetricsSink,
) -> Result<RunOutcome, EngineError> {
    let (s1, s2) = init_states(sim.game, sim.topo, init, sim.seed)?;
    run_from(sim, s1, s2, rounds, metrics_every, sink)
}
