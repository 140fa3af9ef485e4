pub mod attribution;
pub mod causal;
pub mod classifiers;
pub mod consensus;
pub mod dataset;
pub mod evaluation;
pub mod pipeline;
pub mod resampling;
pub mod rng;
pub mod synth;
