//! Experiment runner, result records, plots and the acceptance suite for
//! `rotdyn`.

pub mod config;
pub mod error;
pub mod plot;
pub mod record;
pub mod run;
pub mod suite;
