pub mod image;
pub mod io;
pub mod metrics;
pub mod network;
pub mod scenes;
pub mod seed;
pub mod sim;
pub mod tensor;
pub mod training;
pub mod workflow;
