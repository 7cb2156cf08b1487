//! Gradient-free optimization with language-model agents.
//!
//! The crate is organised bottom-up:
//!
//! - [`benchfns`]: shifted Ackley / Rastrigin / sphere objectives with analytic gradients.
//! - [`optimizers`]: gradient descent, Adam, Nelder-Mead and random search under one
//!   evaluation budget, plus the benchmark matrix that aggregates them.
//! - [`agent`]: the conversational optimizer protocol (prompts, response grammar, loop)
//!   and the agents that speak it (HTTP, mock, replay, recording, scripted).
//! - [`trace`]: execution traces, their prompt rendering and the in-context cache.
//! - [`env`]: the closed-form ballistic surrogate that turns parameters into traces.
//! - [`sas`]: the summarize / analyze / synthesize prompt, its reply grammar and the
//!   self-improvement loop.
//! - [`retrieval`]: ground-truth ranking of cached traces and Top-k scoring.

pub mod agent;
pub mod benchfns;
pub mod env;
pub mod optimizers;
pub mod retrieval;
pub mod sas;
pub mod seed;
pub mod trace;

pub use benchfns::{BenchmarkFunction, EvalPoint, FunctionKind};
pub use optimizers::{OptimizerConfig, OptimizerKind, RunHistory, StepRecord};
pub use trace::{ExecutionTrace, LandingRecord, ParamVector, TraceCache, TraceRow};
