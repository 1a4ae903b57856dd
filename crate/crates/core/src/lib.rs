// SPDX-License-Identifier: Apache-2.0

//! Scene-graph annotation toolkit: document model, tag-based relationship
//! recommender, per-image and merged dataset formats, dataset statistics and
//! the project server.

pub mod cli;
pub mod config;
pub mod formats;
pub mod model;
pub mod recommender;
pub mod service;
pub mod stats;

pub use config::ProjectConfig;
