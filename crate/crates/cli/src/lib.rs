//! Service and command-line front ends for the temporal curation engine.

pub mod api;
pub mod cli;
pub mod client;
pub mod service;
