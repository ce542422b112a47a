//! Spiking neural network with unsupervised STDP learning, fixed-point weight
//! quantization and a class-incremental training scenario.

pub mod artifact;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod network;
pub mod neuron;
pub mod plasticity;
pub mod quant;
pub mod scalar;
pub mod scenario;
pub mod search;
pub mod seed;

pub use error::{Error, ParamError, Result};
pub use quant::{FixedPointFormat, RoundingMode, WeightPrecision};
pub use scalar::Scalar;

pub type SnnModelF32 = network::SnnModel<f32>;
pub type SnnModelF64 = network::SnnModel<f64>;
pub type NetworkConfigF32 = network::NetworkConfig<f32>;
pub type NetworkConfigF64 = network::NetworkConfig<f64>;
pub type SynapseMatrixF32 = plasticity::SynapseMatrix<f32>;
pub type SynapseMatrixF64 = plasticity::SynapseMatrix<f64>;
pub type LifParamsF32 = neuron::LifParams<f32>;
pub type LifParamsF64 = neuron::LifParams<f64>;
