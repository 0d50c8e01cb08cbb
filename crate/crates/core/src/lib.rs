pub mod config;
pub mod experiments;
pub mod layers;
pub mod mesh;
pub mod runtime;
pub mod sim;
pub mod tensor;
