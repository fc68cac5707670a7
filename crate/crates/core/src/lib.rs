pub mod config;
pub mod dynamics;
pub mod ensemble;
pub mod kernels;
pub mod random;
pub mod runner;
pub mod spectral;
pub mod stats;
pub mod torus;
pub mod verify;
