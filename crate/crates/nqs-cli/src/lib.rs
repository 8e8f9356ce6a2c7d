//! Experiment driver around the `nqs` library: config files, the five
//! experiment pipelines, delimited trace output, and a self-check battery.

pub mod config;
pub mod experiments;
pub mod output;
pub mod verify;
