//! Appeal and Scope influence metrics for misinformation on social networks,
//! with a Tweedie GLM for bot-versus-human effects.
//!
//! Stages, in pipeline order: [`corpus`] ingestion and validation,
//! [`classify`] labelling, [`netgraph`] per-period networks, [`influence`]
//! metrics, [`design`] and [`tweedie`] regression, and [`pipeline`]
//! orchestration. [`synth`] generates seeded corpora with planted effects.

pub mod classify;
pub mod config;
pub mod corpus;
pub mod design;
pub mod influence;
pub mod netgraph;
pub mod pipeline;
pub mod synth;
pub mod table;
pub mod tweedie;
