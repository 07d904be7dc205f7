//! Wrapper generation for web information extraction.
//!
//! A wrapper maps attribute names to XPaths. It is generated once from a
//! page and then applied to every page of the same group.

pub mod baselines;
pub mod browser;
pub mod config;
pub mod dom;
pub mod evaluation;
pub mod gateway;
pub mod html_tools;
pub mod marker;
pub mod pipeline;
pub mod runner;
pub mod wrapper;
pub mod xpath;
