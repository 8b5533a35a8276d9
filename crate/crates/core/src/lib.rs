//! Peak storm surge surrogate modeling.
//!
//! The crate covers the whole point-based workflow: loading mesh and forcing
//! data ([`ingest`]), tide synthesis and residuals ([`tides`]), surge event
//! detection from gauge residuals ([`events`]), per-point feature
//! construction ([`features`]), two-stage wet/dry plus inundation models
//! ([`models`]), metrics ([`eval`]), the end-to-end driver ([`pipeline`])
//! and a synthetic corpus generator with an analytic truth ([`synth`]).

pub mod ingest;
pub mod events;
pub mod features;
pub mod tides;
pub mod eval;
pub mod models;
pub mod pipeline;
pub mod synth;
