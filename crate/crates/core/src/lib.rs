//! Exact finite-alphabet analysis of state-dependent channels with causal
//! encoder state knowledge: rate-leakage-coordination regions, minimal-leakage
//! curves, a channel-state-estimation zero-sum game, a block-Markov
//! random-coding simulator, and exact posterior-belief audits.
//!
//! The crate is organized around a small probability engine ([`probcore`])
//! that every other module builds on:
//!
//! * [`model`] — problem definitions (source, channel, coordination targets)
//!   and the auxiliary-variable factorizations each coding scenario uses,
//! * [`regions`] — information constraints, achievability search, minimal
//!   leakage, and region boundary tracing,
//! * [`game`] — the zero-sum state-estimation game (maximin / minimax),
//! * [`codec`] — an executable block-Markov random code with binning,
//! * [`beliefs`] — exact posterior computations and divergence-bound audits,
//! * [`cli`] — the `coordlab` command-line front end.
//!
//! All information quantities are in bits (base-2 logarithms).

pub mod beliefs;
pub mod cli;
pub mod codec;
pub mod game;
pub mod model;
pub mod probcore;
pub mod regions;
