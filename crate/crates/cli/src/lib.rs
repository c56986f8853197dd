//! Command-line harness for the nilheat library: verification suite, kernel tables,
//! sector decomposition and pointwise heat transforms.

pub mod app;
pub mod checks;
pub mod config;
pub mod decompose;
pub mod fieldio;
pub mod report;
pub mod tables;
