pub mod cli;
pub mod latent;
pub mod mpm;
pub mod render;
pub mod rom;
pub mod train;
