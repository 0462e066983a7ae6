//! Discrete-event simulation of the augmented data plane.

pub mod adversary;
pub mod analyze;
pub mod delay;
pub mod engine;

pub use adversary::TokenBucketSource;
pub use analyze::{analyze, events_csv, frames_of, StreamStats};
pub use delay::{DelayModel, EpochSchedule, Histogram};
pub use engine::{
    run, AdversarySpec, Discard, DiscardReason, EventKind, FrameRecord, SimConfig, SimEvent,
    SimTrace,
};
