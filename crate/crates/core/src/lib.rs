//! Estimation of unrecorded inventory losses from sales and replenishment
//! histories.
//!
//! The hidden inventory follows `I_t = I_{t-1} - S_t - L_t + R_t` with
//! stock-truncated Poisson sales and at most one unrecorded loss per period.
//! [`em::run_em`] fits the sale rate and loss probability by hard EM: a
//! Viterbi-style dynamic program picks the most likely inventory history
//! ([`estep`]), then each parameter is refitted on its own ([`mstep`]).
//! [`filter`] tracks the filtered distribution of the current level and
//! [`sim`] reproduces the stock-freezing behaviour of a naive (Q, R) system.

pub mod em;
pub mod error;
pub mod estep;
pub mod filter;
pub mod io;
pub mod model;
pub mod mstep;
pub mod oracle;
pub mod registry;
pub mod sim;

pub use error::{Error, Result};
pub use model::{LogLik, ObservedTrace, Params, Trajectory, Units};
