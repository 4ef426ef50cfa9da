//! Position- and distance-controlled graph prompts for measuring how LLM
//! accuracy degrades with the absolute position of relevant context
//! (lost-in-the-middle) and with the token distance between pieces of
//! context that must be cross-referenced (lost-in-distance).

pub mod encoding;
pub mod config;
pub mod eval;
pub mod fit;
pub mod graph;
pub mod manifest;
pub mod pipeline;
pub mod prng;
pub mod runner;
pub mod tasks;
pub mod tokens;
