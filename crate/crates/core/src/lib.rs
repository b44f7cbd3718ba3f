//! Automated formulaic-alpha strategy search.
//!
//! The crate covers the whole path from raw daily panels to a backtested strategy:
//!
//! * [`market`]: panel ingestion, validation, splitting and a seeded synthesizer;
//! * [`dsl`]: the alpha expression language (parser, printer, static analysis);
//! * [`eval`]: vectorized evaluation of expressions over panels;
//! * [`catalog`]: the categorized seed-alpha catalog and its manifest format;
//! * [`llm`]: prompt rendering and LLM providers (HTTP and a deterministic stub);
//! * [`agents`]: regime classification, IC, confidence / risk scoring and selection;
//! * [`mlp`]: the weight-optimizing MLP and its linearization into alpha weights;
//! * [`backtest`]: top-k/drop-n portfolio simulation and performance metrics;
//! * [`pipeline`]: the end-to-end run used by the `alphaforge` binary.

pub mod agents;
pub mod backtest;
pub mod catalog;
pub mod dsl;
pub mod eval;
pub mod llm;
pub mod market;
pub mod mlp;
pub mod pipeline;
