//! First-arrival statistics of drift-diffusion molecular channels.
//!
//! A molecule released from the transmitter plane drifts and diffuses until
//! it is absorbed by a parallel receiver plane. This crate provides
//!
//! - closed-form joint time/position densities, the position marginal
//!   (through `K_{D/2}`), score and Fisher information ([`analytic`]);
//! - an Euler-Maruyama particle simulator with reproducible parallel
//!   streams ([`simulate`]);
//! - closed-form maximum likelihood, empirical Fisher information and
//!   Cramer-Rao comparisons ([`estimate`]);
//! - histogram goodness-of-fit against the horizon-conditioned model
//!   ([`validate`]).
//!
//! All computation is in dimensionless units (see [`channel`]).

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod analytic;
pub mod channel;
pub mod error;
pub mod estimate;
mod quad;
pub mod rng;
pub mod samples;
pub mod simulate;
pub mod special;
mod sum;
pub mod validate;

pub use channel::{
    denormalize, denormalize_sample, normalize, normalize_sample, ArrivalSample, ChannelParams,
    DiffusionConvention, PhysicalConfig,
};
pub use error::{Error, Result};
pub use simulate::{simulate, Arrivals, CrossingMode, SimResult, SimSpec};
