//! TOML configuration, found through the `GLM_CONFIG` environment variable.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::{env, fs};

use serde::Deserialize;
use thiserror::Error;

use crate::agents::{Chunking, TemplateError, Templates};
use crate::bench::BenchConfig;
use crate::embed::{IndexConfig, DEFAULT_DIM};
use crate::kvcache::{EvictionPolicy, DEFAULT_BLOCK_SIZE};
use crate::llm::RemoteConfig;
use crate::orchestrator::{OrchestratorConfig, DEFAULT_MAX_STEPS, DEFAULT_REPAIR_BUDGET};
use crate::pipeline::{RetrievalLatency, TimingMode, TimingModel};
use crate::retriever::{ChunkConfig, RetrieverConfig, DEFAULT_CACHE_CAPACITY};

pub const CONFIG_ENV: &str = "GLM_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("llm.endpoint and llm.model are required for the remote provider")]
    MissingLlm,
    #[error(transparent)]
    Templates(#[from] TemplateError),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlmConfig {
    pub max_steps: usize,
    pub repair_budget: usize,
    /// Provider call timeout; `llm.timeout_ms` takes precedence.
    pub timeout_ms: Option<u64>,
    pub concurrency: ConcurrencySection,
    pub pipeline: PipelineSection,
    pub timing: TimingSection,
    pub embed: EmbedSection,
    pub index: IndexSection,
    pub chunk: ChunkConfig,
    pub retrieval_cache: RetrievalCacheSection,
    pub cache: CacheSection,
    pub llm: LlmSection,
    pub templates: TemplatesSection,
}

impl Default for GlmConfig {
    fn default() -> Self {
        GlmConfig {
            max_steps: DEFAULT_MAX_STEPS,
            repair_budget: DEFAULT_REPAIR_BUDGET,
            timeout_ms: None,
            concurrency: ConcurrencySection::default(),
            pipeline: PipelineSection::default(),
            timing: TimingSection::default(),
            embed: EmbedSection::default(),
            index: IndexSection::default(),
            chunk: ChunkConfig::default(),
            retrieval_cache: RetrievalCacheSection::default(),
            cache: CacheSection::default(),
            llm: LlmSection::default(),
            templates: TemplatesSection::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConcurrencySection {
    pub sessions: usize,
}

impl Default for ConcurrencySection {
    fn default() -> Self {
        ConcurrencySection { sessions: 8 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub enabled: bool,
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection { enabled: true }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingSection {
    pub mode: TimingMode,
    pub retrieval_latency: RetrievalLatency<f64>,
    pub c_prefill: f64,
    pub c_decode: f64,
}

impl Default for TimingSection {
    fn default() -> Self {
        let t = TimingModel::simulated(20.0);
        TimingSection {
            mode: t.mode,
            retrieval_latency: t.retrieval_latency,
            c_prefill: t.c_prefill,
            c_decode: t.c_decode,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedSection {
    pub dim: usize,
}

impl Default for EmbedSection {
    fn default() -> Self {
        EmbedSection { dim: DEFAULT_DIM }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexSection {
    /// node_type -> attribute holding the indexable text.
    pub text_field: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalCacheSection {
    pub capacity: usize,
}

impl Default for RetrievalCacheSection {
    fn default() -> Self {
        RetrievalCacheSection {
            capacity: DEFAULT_CACHE_CAPACITY,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheSection {
    pub policy: EvictionPolicy,
    pub block_size: usize,
    /// Blocks; absent means unbounded.
    pub capacity: Option<usize>,
}

impl Default for CacheSection {
    fn default() -> Self {
        CacheSection {
            policy: EvictionPolicy::Priority,
            block_size: DEFAULT_BLOCK_SIZE,
            capacity: None,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub timeout_ms: Option<u64>,
    pub api_key: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemplatesSection {
    /// Directory of `<agent>.prompt` overrides.
    pub dir: Option<PathBuf>,
    pub chunking: Chunking,
}

impl GlmConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Loads the file named by `GLM_CONFIG`, or the defaults when it is unset.
    pub fn from_env() -> Result<Self, ConfigError> {
        match env::var_os(CONFIG_ENV) {
            Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
            _ => Ok(Self::default()),
        }
    }

    pub fn timing(&self) -> TimingModel<f64> {
        TimingModel {
            mode: self.timing.mode,
            retrieval_latency: self.timing.retrieval_latency,
            c_prefill: self.timing.c_prefill,
            c_decode: self.timing.c_decode,
        }
    }

    pub fn orchestrator(&self) -> OrchestratorConfig {
        OrchestratorConfig {
            max_steps: self.max_steps,
            repair_budget: self.repair_budget,
            pipeline: self.pipeline.enabled,
            timing: self.timing(),
            ..OrchestratorConfig::default()
        }
    }

    pub fn index(&self) -> IndexConfig {
        IndexConfig {
            dim: self.embed.dim,
            text_field: self.index.text_field.clone(),
        }
    }

    pub fn retriever(&self) -> RetrieverConfig {
        RetrieverConfig {
            chunk: self.chunk.clone(),
            cache_capacity: self.retrieval_cache.capacity,
            node_info: self.templates.chunking == Chunking::Vertex,
        }
    }

    pub fn bench(&self) -> BenchConfig {
        BenchConfig {
            policy: self.cache.policy,
            chunking: self.templates.chunking,
            pipeline: self.pipeline.enabled,
            concurrency: self.concurrency.sessions,
            block_size: self.cache.block_size,
            timing: self.timing(),
            retrieval_cache: self.retrieval_cache.capacity,
            max_steps: self.max_steps,
            repair_budget: self.repair_budget,
            index: self.index(),
            ..BenchConfig::default()
        }
    }

    pub fn remote(&self) -> Result<RemoteConfig, ConfigError> {
        match (&self.llm.endpoint, &self.llm.model) {
            (Some(endpoint), Some(model)) => Ok(RemoteConfig {
                endpoint: endpoint.clone(),
                model: model.clone(),
                timeout_ms: self.llm.timeout_ms.or(self.timeout_ms).unwrap_or(60_000),
                api_key: self.llm.api_key.clone(),
            }),
            _ => Err(ConfigError::MissingLlm),
        }
    }

    pub fn load_templates(&self) -> Result<Templates, ConfigError> {
        Ok(match &self.templates.dir {
            Some(dir) => Templates::from_dir(dir, self.templates.chunking)?,
            None => Templates::builtin(self.templates.chunking),
        })
    }
}
