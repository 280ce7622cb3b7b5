pub mod data;
pub mod error;
pub mod network;
pub mod tensor;
pub mod manifold;
pub mod workflow;
pub mod cluster;
pub mod cli;
pub mod service;
