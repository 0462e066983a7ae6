//! Robust time-driven TSN schedules through (m,k)-firm priority elevation.
//!
//! The crate takes a primary TAS/PSFP schedule, derives per-link token
//! buckets for traffic that may be elevated to PCP 7, augments the schedule
//! (prolonged and deferred gate windows, extended PSFP entries with an
//! *elevate* state) and checks the result both analytically and in a
//! discrete-event 5G-TSN simulator.
//!
//! Module map:
//!
//! * [`model`]: network, streams, windows and schedule containers
//! * [`weakly_hard`]: mu-pattern semantics and (m,k)-firm verdicts
//! * [`token_bucket`]: burst/rate bounds on elevated traffic per link
//! * [`augment_port`]: single egress port augmentation
//! * [`tgraph`]: transmission graphs of a primary schedule
//! * [`augment`]: multi-hop augmentation and latency verification
//! * [`sim`]: discrete-event data-plane simulator
//! * [`harness`]: scenarios, primary scheduler, studies, file formats

pub mod augment;
pub mod augment_port;
pub mod error;
pub mod harness;
pub mod model;
pub mod sim;
pub mod tgraph;
pub mod time;
pub mod token_bucket;
pub mod weakly_hard;

pub use error::{Error, Result};
