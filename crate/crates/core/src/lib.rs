pub mod agents;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod diff;
pub mod eval;
pub mod fixture;
pub mod git;
pub mod llm;
pub mod retrieval;
