//! Configuration and HTTP service for the burnout screening pipeline.

pub mod config;
pub mod service;
