pub mod cli;
pub mod cloud;
pub mod config;
pub mod grouping;
pub mod losses;
pub mod metrics;
pub mod network;
pub mod selfcheck;
pub mod synth;
pub mod tensor;
pub mod train;
