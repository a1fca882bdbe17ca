pub mod chain;
pub mod contracts;
pub mod harness;
pub mod primitives;
pub mod scaffold;
pub mod script;
pub mod strategies;
