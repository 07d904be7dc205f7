use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::browser::{EngineKind, Viewport, DEFAULT_VIEWPORT};
use crate::gateway::ModelConfig;
use crate::html_tools::DEFAULT_SEGMENT_DISTANCE;

pub const DEFAULT_CANDIDATE_CAP: usize = 50;
pub const DEFAULT_SYNTHESIS_RETRIES: u32 = 1;
pub const DEFAULT_REFLEXION_BUDGET: u32 = 3;
pub const DEFAULT_SAMPLE_PAGES: usize = 3;

/// Settings shared by every generation method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    #[serde(with = "viewport_str")]
    pub viewport: Viewport,
    pub segment_distance: usize,
    pub candidate_cap: usize,
    /// Synthesis retries after a rejected XPath.
    pub retry_budget: u32,
    pub reflexion_budget: u32,
    pub sample_pages: usize,
    pub engine: EngineKind,
    pub model: ModelConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            viewport: DEFAULT_VIEWPORT,
            segment_distance: DEFAULT_SEGMENT_DISTANCE,
            candidate_cap: DEFAULT_CANDIDATE_CAP,
            retry_budget: DEFAULT_SYNTHESIS_RETRIES,
            reflexion_budget: DEFAULT_REFLEXION_BUDGET,
            sample_pages: DEFAULT_SAMPLE_PAGES,
            engine: EngineKind::Static,
            model: ModelConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        cfg.model.apply_env();
        Ok(cfg)
    }
}

mod viewport_str {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::browser::Viewport;

    pub fn serialize<S: Serializer>(v: &Viewport, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Viewport, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}
