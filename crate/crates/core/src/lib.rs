//! Orchestration engine for canvas-driven generative media.
//!
//! A [`project::Project`] owns one canvas document: assets in a
//! content-addressed [`blob::BlobStore`], canvas items, the provenance DAG,
//! collections and the exhibit. Every mutation is journaled before it is
//! acknowledged. [`easel`] compiles declarative easel specs into backend
//! workflow graphs, [`gateway`] schedules them on a backend, and
//! [`engine::Engine`] ties the three together.

pub mod asset;
pub mod blob;
pub mod clock;
pub mod demo;
pub mod document;
pub mod easel;
pub mod engine;
pub mod gateway;
pub mod ids;
pub mod journal;
pub mod media;
pub mod metadata;
pub mod organization;
pub mod project;
pub mod provenance;
pub mod raster;
