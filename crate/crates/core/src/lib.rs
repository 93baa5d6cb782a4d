//! Two-stage Bayesian forecasting of carpooling driver flow and passenger
//! waiting times.
//!
//! Stage one models the daily driver flow as a multi-level moving average
//! with day-type coefficients ([`flow`]); stage two regresses sub-daily
//! passenger pseudo waiting times on the daily flow through a Gamma model
//! ([`waiting`]). Both stages are fit with an in-house adaptive random-walk
//! Metropolis engine ([`mcmc`]) and compared against frequentist baselines
//! ([`baselines`]) through predictive metrics ([`eval`]).
//!
//! The [`pipeline`] module exposes the same operations as the `flowcast`
//! command-line binary: simulate, fit, predict, and evaluate, all driven by
//! a serialisable [`config::RunConfig`] and exchanging data through CSV and
//! JSON files ([`io`]).

pub mod baselines;
pub mod calendar;
pub mod config;
pub mod eval;
pub mod flow;
pub mod io;
pub mod ks;
pub mod mcmc;
pub mod pipeline;
pub mod rng;
pub mod waiting;

pub(crate) mod util;
