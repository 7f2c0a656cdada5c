pub mod cli;
pub mod data;
pub mod divergence;
pub mod experiments;
pub mod format;
pub mod gaussian;
pub mod portfolio;
pub mod ridge;
pub mod signature;
pub mod spd;
mod stats;
