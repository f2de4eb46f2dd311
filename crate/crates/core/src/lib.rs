//! Leader selection for linear multi-agent systems with noisy links.
//!
//! Followers track their neighbors through links corrupted by white noise; a
//! set of leaders holds fixed states. The steady-state mean-square deviation of
//! the followers is `R(S) = ½·Tr(L_ff⁻¹)`, a nonincreasing supermodular function
//! of the leader set `S`, so greedy selection comes with approximation
//! guarantees. The crate provides:
//!
//! - [`graph`]: noisy graphs, weighted Laplacians, grounding at a leader set;
//! - [`metric`]: `R(S)`, per-node errors, marginal gains and the link-failure
//!   trace bound;
//! - [`walk`]: the random-walk commute-time characterization of `R(S, u)`;
//! - [`static_select`], [`dynamic`], [`online`]: greedy selection for static,
//!   failing, switching and arbitrarily time-varying topologies;
//! - [`sim`]: Euler–Maruyama simulation of the noisy follower dynamics;
//! - [`bench`]: random geometric deployments, mobility traces, baselines and
//!   experiment sweeps.
//!
//! ```
//! use leader_select::{graph::NoisyGraph, static_select::select_static_k};
//!
//! let g = NoisyGraph::new(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
//! let picked = select_static_k(&g, 1).unwrap();
//! assert_eq!(picked.leaders.as_slice(), &[1]);
//! assert!((picked.final_error() - 1.0).abs() < 1e-12);
//! ```

pub mod bench;
pub mod dynamic;
pub mod error;
pub mod format;
pub mod graph;
pub mod greedy;
pub mod metric;
pub mod objective;
pub mod online;
pub mod rng;
pub mod sim;
pub mod static_select;
pub mod walk;

pub use error::{Error, Result};
pub use graph::{LeaderSet, NoisyGraph};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/error-metric.md")]
    mod error_metric {}
    #[doc = include_str!("../../../book/src/commute-times.md")]
    mod commute_times {}
    #[doc = include_str!("../../../book/src/static-selection.md")]
    mod static_selection {}
    #[doc = include_str!("../../../book/src/dynamic-topologies.md")]
    mod dynamic_topologies {}
    #[doc = include_str!("../../../book/src/online.md")]
    mod online {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
