//! Hybrid analog/digital MIMO precoder optimization.
//!
//! The crate optimizes multi-band hybrid precoders for the achievable
//! sum-rate via projected gradient ascent, robustly under bounded channel
//! estimation error via projected conceptual mirror prox, and through a
//! single-band ADMM baseline. Per-iteration step-size schedules can be
//! learned from channel datasets so the optimizers converge within a fixed,
//! small iteration budget.

pub mod admm;
pub mod channel;
pub mod learn;
pub mod matcore;
pub mod objective;
pub mod optim;
