//! Per-sample orchestration shared by the command-line tool and tests.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::baselines::{Baselines, PageInput};
use crate::browser::PageSession;
use crate::config::RunConfig;
use crate::evaluation::{extraction_from_values, ExtractionResult, Sample};
use crate::gateway::{Gateway, GatewayError, MockBackend, Transcript};
use crate::html_tools::simplify;
use crate::pipeline::{PipelineError, Vgs};
use crate::wrapper::{Clock, Method, Stage, Trace, Wrapper};

/// Where model responses come from.
#[derive(Debug, Clone)]
pub enum ModelSource {
    /// Scripted responses; every sample replays its own slice from the
    /// start, and the clock is frozen.
    Mock(Transcript),
    Live,
}

impl ModelSource {
    pub fn gateway(&self, sample_id: &str, config: &RunConfig) -> Result<Gateway, GatewayError> {
        let backend = match self {
            ModelSource::Mock(t) => Box::new(MockBackend::new(t.for_sample(sample_id))),
            ModelSource::Live => config.model.build_backend()?,
        };
        Ok(Gateway::new(backend)
            .with_retry(config.model.retry_policy())
            .with_decode_params(config.model.decode_params()))
    }

    pub fn clock(&self) -> Clock {
        match self {
            ModelSource::Mock(_) => Clock::frozen(),
            ModelSource::Live => Clock::System,
        }
    }

    pub fn is_mock(&self) -> bool {
        matches!(self, ModelSource::Mock(_))
    }
}

fn failed_wrapper(sample: &Sample, method: Method, clock: &Clock, stage: Stage, detail: String) -> Wrapper {
    let mut w = Wrapper::new(&sample.id, sample.urls.first().map_or("", String::as_str), method, clock);
    w.traces.push(Trace::failed(None, stage, detail));
    w
}

/// Loads and simplifies up to `limit` pages of the sample's group.
pub fn load_pages(sample: &Sample, config: &RunConfig, limit: usize, traces: &mut Vec<Trace>) -> Vec<PageInput> {
    let mut pages = Vec::new();
    for url in sample.urls.iter().take(limit.max(1)) {
        match PageSession::load_with(url, config.viewport, config.engine).and_then(|mut s| s.dom_snapshot()) {
            Ok(html) => pages.push(PageInput::new(url, simplify(&html))),
            Err(e) => traces.push(Trace::failed(None, Stage::Navigation, e.to_string())),
        }
    }
    pages
}

/// Generates a wrapper for one sample. Failures are recorded as traces on
/// the returned wrapper.
pub fn generate(method: Method, sample: &Sample, config: &RunConfig, source: &ModelSource) -> Wrapper {
    let clock = source.clock();
    let gateway = match source.gateway(&sample.id, config) {
        Ok(g) => g,
        Err(e) => return failed_wrapper(sample, method, &clock, Stage::AttributeIdentification, e.to_string()),
    };
    let query = sample.extraction_query();
    let Some(first) = sample.urls.first() else {
        return failed_wrapper(sample, method, &clock, Stage::Navigation, "sample has no urls".into());
    };
    if method == Method::Vgs {
        let vgs = Vgs { gateway: &gateway, config, clock: &clock };
        return match vgs.run(&query, first) {
            Ok(w) => w,
            Err(PipelineError::AllAttributesFailed(w)) => *w,
            Err(PipelineError::Browser(e)) => failed_wrapper(sample, method, &clock, Stage::Navigation, e.to_string()),
            Err(e) => failed_wrapper(sample, method, &clock, Stage::AttributeIdentification, e.to_string()),
        };
    }
    let mut nav = Vec::new();
    let pages = load_pages(sample, config, config.sample_pages, &mut nav);
    if pages.first().map(|p| &p.url) != Some(first) {
        let mut w = failed_wrapper(sample, method, &clock, Stage::Navigation, format!("{first} could not be loaded"));
        w.traces.splice(0..0, nav);
        return w;
    }
    let base = Baselines { gateway: &gateway, config, clock: &clock };
    let result = match method {
        Method::Cot => base.cot_wrapper(&query, &pages),
        Method::Reflexion => base.reflexion_wrapper(&query, &pages),
        Method::Autoscraper => base.autoscraper_wrapper(&query, &pages).map(|r| r.wrapper),
        Method::Vgs | Method::Direct => {
            return failed_wrapper(sample, method, &clock, Stage::Synthesis, format!("{method} does not produce wrappers"))
        }
    };
    let mut w = result.unwrap_or_else(|e| failed_wrapper(sample, method, &clock, Stage::TopDown, e.to_string()));
    w.traces.splice(0..0, nav);
    w
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyRecord {
    pub sample_id: String,
    pub url: String,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Runs the direct extractor on every page of the sample.
pub fn direct(sample: &Sample, config: &RunConfig, source: &ModelSource) -> (ExtractionResult, Vec<LatencyRecord>) {
    let clock = source.clock();
    let mut pages = Vec::new();
    let mut latency = Vec::new();
    let gateway = source.gateway(&sample.id, config);
    for url in &sample.urls {
        let mut traces = Vec::new();
        let one = Sample { urls: vec![url.clone()], ..sample.clone() };
        let loaded = load_pages(&one, config, 1, &mut traces);
        let outcome = match (&gateway, loaded.first()) {
            (Err(e), _) => Err(e.to_string()),
            (Ok(_), None) => Err(traces.first().map(|t| t.detail.clone()).unwrap_or_default()),
            (Ok(g), Some(page)) => Baselines { gateway: g, config, clock: &clock }
                .direct_extract(&sample.extraction_query(), page)
                .map_err(|e| e.to_string()),
        };
        match outcome {
            Ok(r) => {
                latency.push(LatencyRecord { sample_id: sample.id.clone(), url: url.clone(), latency_ms: r.latency_ms, error: None });
                pages.push((url.clone(), r.values));
            }
            Err(e) => {
                latency.push(LatencyRecord { sample_id: sample.id.clone(), url: url.clone(), latency_ms: 0, error: Some(e) });
                pages.push((url.clone(), BTreeMap::new()));
            }
        }
    }
    (extraction_from_values(&sample.id, pages), latency)
}
