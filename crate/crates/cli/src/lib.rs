//! Experiment runner for reach-avoid value function synthesis: configuration
//! files, evaluation against baselines and the shipped benchmark suites.

pub mod commands;
pub mod config;
pub mod evaluate;
pub mod output;
pub mod suites;
