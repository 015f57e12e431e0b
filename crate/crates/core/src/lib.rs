//! Distributed gradient-free Nash equilibrium seeking for two-network
//! zero-sum games over unbalanced directed graphs.
//!
//! Two networks of agents play a zero-sum game: network 1 minimises
//! `F(x, y) = sum_i f_1i(x, y)` over `x` while network 2 maximises
//! `F = sum_j f_2j` over `y`. Agents only measure their own local cost,
//! mix states with in-neighbours through row-stochastic weights, correct for
//! the weight imbalance with running Perron-vector estimates, and step along
//! randomized two-point finite-difference oracles.

pub mod analysis;
pub mod engine;
pub mod game;
pub mod graph;
pub mod harness;
pub mod rng;
pub mod smoothing;
