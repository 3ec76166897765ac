//! Small MLP classifiers trained by SGD, RMSprop, SGLD, and pSGLD, with a
//! membership-privacy toolkit on top: posterior snapshot ensembles, the
//! optimal-attack posterior and its leakage bounds, an empirical threshold
//! attack, and a reproducible experiment runner.
//!
//! Layering (bottom up): [`error`] and [`matrix`] are foundations; [`net`]
//! implements the bounded-loss MLP; [`optim`] the optimizer family and step
//! schedules; [`posterior`] snapshot collection and ensemble prediction;
//! [`privacy`] the leakage quantities and bounds; [`attack`] the threshold
//! attack; [`data`] ingestion and synthesis; [`toy`] a conjugate oracle
//! model; [`experiment`] the config-driven runner used by the CLI.

pub mod attack;
pub mod data;
pub mod error;
pub mod experiment;
pub mod matrix;
pub mod net;
pub mod optim;
pub mod posterior;
pub mod privacy;
pub mod toy;

pub use error::{Error, Result};
