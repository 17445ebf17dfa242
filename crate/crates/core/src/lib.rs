//! Automatic heuristic design with an LLM-guided Monte Carlo Tree Search.
//!
//! The engine keeps every generated heuristic in a search tree, selects
//! promising nodes with a decaying, normalized UCT rule, distills experience
//! from a candidate set of tree and elite heuristics, and expands the tree
//! with five generation actions. Heuristics are scored by plugging them into
//! one of three solving frameworks:
//!
//! - ant colony optimization (orienteering, CVRP, multiple knapsack),
//! - guided local search (TSP),
//! - step-by-step construction (0/1 knapsack).
//!
//! The main entry point is [`orchestrator::run`].

pub mod actions;
pub mod artifact;
pub mod cognition;
pub mod cop;
pub mod digest;
pub mod exec;
pub mod llm;
pub mod orchestrator;
pub mod prompts;
pub mod summary;
pub mod tree;

pub use artifact::{Dialect, HeuristicArtifact, SignatureKind};
pub use cop::{Dataset, Problem, ProblemInstance};
pub use orchestrator::{run, RunConfig, RunReport};
