pub mod bounds;
pub mod cli;
pub mod crd;
pub mod error;
pub mod gaussian;
pub mod lattice;
pub mod markov;
pub mod math;
pub mod mc;
pub mod quad;
pub mod source;
pub mod tilted;
