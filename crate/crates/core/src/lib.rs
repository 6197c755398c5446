//! Stochastic-geometry model of an RIS-aided mmWave downlink with
//! imperfect beam alignment: analytic metrics, a Monte Carlo network
//! simulator and training-overhead / deployment optimisers.

pub mod analytic;
pub mod channel;
pub mod cli;
pub mod geometry;
pub mod kernel;
pub mod montecarlo;
pub mod optimizer;
pub mod params;
pub mod quadrature;
