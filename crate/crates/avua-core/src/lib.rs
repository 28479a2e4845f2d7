//! Adaptive video-understanding agent framework.
//!
//! An orchestration library for query-adaptive video question answering:
//! a planning loop that decides which frames to access, a policy engine
//! that sets a per-question sampling strategy, a self-reflective
//! evaluate/refine cycle across trials, an embedding-indexed episodic
//! memory, a tool registry with frame-access accounting, and a benchmark
//! harness. All model calls go through interchangeable backends (remote
//! HTTP, recorded replay, scripted mock) so the whole stack runs
//! deterministically offline.

pub mod answer;
pub mod gateway;
pub mod harness;
pub mod memory;
pub mod planner;
pub mod policy;
pub mod prompts;
pub mod reflection;
pub mod sampler;
pub mod toolbox;
pub mod trace;
