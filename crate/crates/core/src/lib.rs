//! Spectral Galerkin simulation of the stochastic Burgers equation on the circle
//! and Monte-Carlo checks of the regularity estimates for its semigroup.

pub mod config;
pub mod constants;
pub mod convolution;
pub mod error;
pub mod experiments;
pub mod fields;
pub mod spectral;
pub mod galerkin;
pub mod mc;
pub mod noise;
pub mod report;
pub mod runner;
