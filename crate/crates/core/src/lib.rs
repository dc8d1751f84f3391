//! Must-hit cache analysis of programs whose branches may be mispredicted.
//!
//! The crate parses a small CFG-level IR ([`ir`]), runs an abstract LRU
//! cache analysis over it ([`fixpoint`]) with or without speculative flows
//! ([`speculation`]), turns the result into per-access verdicts and leak
//! reports ([`analyses`]), and can check all of that against exhaustive
//! concrete execution ([`oracle`]).

pub mod analyses;
pub mod cli;
pub mod config;
pub mod domain;
pub mod fixpoint;
pub mod ir;
pub mod oracle;
pub mod speculation;

pub use config::{FileConfig, RegionMode, Strategy};
pub use domain::{AbstractCacheState, CacheConfig};
pub use fixpoint::{EngineConfig, FixpointResult};
pub use ir::{parse_program, Program};
pub use speculation::SpecConfig;
