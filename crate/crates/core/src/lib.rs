//! Multi-agent graph chain-of-thought engine with a prefix KV-cache serving
//! simulator.

pub mod agents;
pub mod bench;
pub mod config;
pub mod embed;
pub mod facts;
pub mod graph;
pub mod hash;
pub mod kvcache;
pub mod llm;
pub mod num;
pub mod orchestrator;
pub mod pipeline;
pub mod retriever;
pub mod snippet;

/// Index over `f64` embeddings, the scalar used throughout the engine.
pub type Index = embed::VectorIndex<f64>;
/// Timing with simulated cost units.
pub type Timing = pipeline::TimingModel<f64>;
pub type Trace = pipeline::PipelineTrace<f64>;
pub type CostInput = bench::cost::CostModelInput<f64>;
pub type CostOutput = bench::cost::CostModelOutput<f64>;
