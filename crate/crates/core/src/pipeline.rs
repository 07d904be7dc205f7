//! The four-stage wrapper generator: attribute identification, visual
//! grounding, element pinpointing and XPath synthesis.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::browser::{BrowserError, PageSession, Region};
use crate::config::RunConfig;
use crate::gateway::{Gateway, GatewayError, InstructionId, ModelResponse};
use crate::html_tools::local_segment;
use crate::marker::{Candidate, HostMarker, MarkedScreenshot, Marker, MarkerError};
use crate::wrapper::{Category, Clock, ExtractionQuery, Method, Stage, Trace, Wrapper};
use crate::xpath::{evaluate_strings, XPath};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("the model returned no attributes")]
    EmptyDecomposition,
    #[error("model output could not be parsed: {0}")]
    ModelParseFailure(String),
    #[error("model chose region {0:?}, which was not offered")]
    UnknownRegionId(String),
    #[error("scan returned neither texts nor tags")]
    EmptyScan,
    #[error("no candidate elements found in the region")]
    NoCandidates,
    #[error("the model selected no offered candidate")]
    EmptySelection,
    #[error("xpath synthesis failed: {0}")]
    SynthesisFailed(String),
    #[error("page has no regions to ground against")]
    NoRegions,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Marker(#[from] MarkerError),
    #[error(transparent)]
    Browser(#[from] BrowserError),
    #[error("every attribute failed")]
    AllAttributesFailed(Box<Wrapper>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cardinality {
    Single,
    List,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub category: Category,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cardinality: Option<Cardinality>,
}

impl AttributeSpec {
    pub fn new(name: &str) -> AttributeSpec {
        AttributeSpec { name: name.to_string(), category: Category::from_name(name), cardinality: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundingMap {
    pub entries: Vec<(AttributeSpec, usize)>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanResult {
    pub texts: Vec<String>,
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PinpointResult {
    pub attribute: AttributeSpec,
    /// Candidates shown to the selection model.
    pub offered: Vec<Candidate>,
    pub selected: Vec<Candidate>,
    /// Region re-marked with only the selected candidates.
    pub marked_region: MarkedScreenshot,
    pub truncated: usize,
}

/// Appends user content after a template that has no placeholders.
fn prompt(id: InstructionId, context: &[(&str, String)]) -> String {
    let mut s = id.template().to_string();
    s.push_str("\n\n");
    for (label, value) in context {
        s.push_str(label);
        s.push_str(": ");
        s.push_str(value);
        s.push('\n');
    }
    s
}

fn parsed(resp: ModelResponse) -> Result<Value, PipelineError> {
    resp.parsed.ok_or_else(|| PipelineError::ModelParseFailure(resp.parse_error.unwrap_or_default()))
}

fn string_list(v: &Value) -> Vec<String> {
    v.as_array()
        .map(|a| {
            a.iter()
                .filter_map(|x| match x {
                    Value::String(s) => Some(s.trim().to_string()),
                    Value::Number(n) => Some(n.to_string()),
                    _ => None,
                })
                .filter(|s| !s.is_empty())
                .collect()
        })
        .unwrap_or_default()
}

/// Appends `/@href` or `/@src` when the category requires it.
pub fn apply_category_suffix(xpath: &str, category: Category) -> String {
    let attr = match category {
        Category::Hyperlink => "href",
        Category::Image => "src",
        Category::Text => return xpath.to_string(),
    };
    match XPath::compile(xpath) {
        Ok(x) if x.ends_in_attribute(attr) => xpath.to_string(),
        _ => format!("{}/@{attr}", xpath.trim_end_matches('/')),
    }
}

/// Reads a region choice such as `region_2`, `Region 2` or `2`.
pub fn parse_region_id(v: &Value) -> Option<usize> {
    match v {
        Value::Number(n) => n.as_u64().map(|n| n as usize),
        Value::String(s) => {
            let s = s.trim().to_ascii_lowercase();
            let digits = s.strip_prefix("region").unwrap_or(&s).trim_start_matches(['_', ' ', '-', '#']);
            digits.parse().ok()
        }
        _ => None,
    }
}

/// Runs the stages against one gateway and configuration.
pub struct Vgs<'a> {
    pub gateway: &'a Gateway,
    pub config: &'a RunConfig,
    pub clock: &'a Clock,
}

impl Vgs<'_> {
    pub fn identify_attributes(&self, query: &str) -> Result<Vec<AttributeSpec>, PipelineError> {
        if query.trim().is_empty() {
            return Err(PipelineError::EmptyDecomposition);
        }
        let text = prompt(InstructionId::VgsAttributeIdentification, &[("User request", query.to_string())]);
        let resp = self.gateway.complete(&self.gateway.request(InstructionId::VgsAttributeIdentification, text, vec![]))?;
        let v = parsed(resp)?;
        let mut names: Vec<String> = Vec::new();
        for n in string_list(&v["attributes"]) {
            if !names.contains(&n) {
                names.push(n);
            }
        }
        if names.is_empty() {
            return Err(PipelineError::EmptyDecomposition);
        }
        Ok(names.iter().map(|n| AttributeSpec::new(n)).collect())
    }

    pub fn ground_attribute(&self, attribute: &AttributeSpec, regions: &[Region]) -> Result<usize, PipelineError> {
        if regions.is_empty() {
            return Err(PipelineError::NoRegions);
        }
        let images = regions
            .iter()
            .map(|r| r.screenshot.clone().ok_or_else(|| BrowserError::CaptureFailed(format!("{} has no screenshot", r.id()))))
            .collect::<Result<Vec<_>, _>>()?;
        let ids: Vec<String> = regions.iter().map(Region::id).collect();
        let text = prompt(
            InstructionId::VgsVisualGrounding,
            &[("Target attribute", attribute.name.clone()), ("Regions (in screenshot order)", ids.join(", "))],
        );
        let resp = self.gateway.complete(&self.gateway.request(InstructionId::VgsVisualGrounding, text, images))?;
        let v = parsed(resp)?;
        let raw = &v["matching_region"];
        match parse_region_id(raw) {
            Some(i) if i < regions.len() => Ok(i),
            _ => Err(PipelineError::UnknownRegionId(raw.as_str().map(str::to_string).unwrap_or_else(|| raw.to_string()))),
        }
    }

    pub fn scan_region(&self, attribute: &AttributeSpec, region: &Region) -> Result<ScanResult, PipelineError> {
        let image = region.screenshot.clone().ok_or_else(|| BrowserError::CaptureFailed(format!("{} has no screenshot", region.id())))?;
        let text = prompt(InstructionId::VgsElementScanning, &[("Attribute", attribute.name.clone())]);
        let resp = self.gateway.complete(&self.gateway.request(InstructionId::VgsElementScanning, text, vec![image]))?;
        let v = parsed(resp)?;
        let mut scan = ScanResult { texts: string_list(&v["texts"]), tags: string_list(&v["tags"]) };
        scan.tags.iter_mut().for_each(|t| *t = t.to_ascii_lowercase());
        match attribute.category {
            Category::Text => scan.tags.clear(),
            Category::Image | Category::Hyperlink => scan.texts.clear(),
        }
        if scan.texts.is_empty() && scan.tags.is_empty() {
            return Err(PipelineError::EmptyScan);
        }
        Ok(scan)
    }

    pub fn pinpoint(
        &self,
        attribute: &AttributeSpec,
        region: &Region,
        scan: &ScanResult,
        session: &mut PageSession,
        marker: &mut dyn Marker,
    ) -> Result<PinpointResult, PipelineError> {
        let mut offered = match attribute.category {
            Category::Text => marker.enumerate_by_text(session, region, &scan.texts)?,
            _ => marker.enumerate_by_tag(session, region, &scan.tags)?,
        };
        if offered.is_empty() {
            return Err(PipelineError::NoCandidates);
        }
        let truncated = offered.len().saturating_sub(self.config.candidate_cap.max(1));
        offered.truncate(self.config.candidate_cap.max(1));
        let marked = marker.apply_marks(session, region, &offered);
        let selection = marked.and_then(|m| m.png()).map_err(PipelineError::from).and_then(|png| {
            let text = prompt(InstructionId::VgsElementSelection, &[("Target attribute", attribute.name.clone())]);
            let resp = self.gateway.complete(&self.gateway.request(InstructionId::VgsElementSelection, text, vec![png]))?;
            parsed(resp)
        });
        marker.clear_marks(session)?;
        let v = selection?;
        let chosen: Vec<u64> = string_list(&v).iter().filter_map(|s| s.parse().ok()).collect();
        let selected: Vec<Candidate> = offered.iter().filter(|c| chosen.contains(&(c.label as u64))).cloned().collect();
        if selected.is_empty() {
            return Err(PipelineError::EmptySelection);
        }
        debug_assert!(selected.iter().all(|s| offered.contains(s)));
        let marked_region = marker.apply_marks(session, region, &selected);
        marker.clear_marks(session)?;
        Ok(PinpointResult { attribute: attribute.clone(), offered, selected, marked_region: marked_region?, truncated })
    }

    /// Local HTML segments around each selected candidate.
    pub fn segments(&self, pinpoint: &PinpointResult, session: &mut PageSession, distance: usize) -> Result<Vec<String>, PipelineError> {
        let mut out = Vec::new();
        for c in &pinpoint.selected {
            let (cx, cy) = c.rect.center();
            let xpath = match session.element_at(cx, cy) {
                Ok(e) => e.absolute_xpath,
                Err(_) => c.element.absolute_xpath.clone(),
            };
            let node = session
                .node_for_xpath(&xpath)
                .or_else(|| session.node_for_xpath(&c.element.absolute_xpath))
                .ok_or_else(|| PipelineError::SynthesisFailed(format!("{xpath} is not in the snapshot")))?;
            let seg = local_segment(session.document()?, node, distance as i64)
                .map_err(|e| PipelineError::SynthesisFailed(e.to_string()))?;
            if !out.contains(&seg.content) {
                out.push(seg.content);
            }
        }
        Ok(out)
    }

    pub fn synthesize_xpath(
        &self,
        pinpoint: &PinpointResult,
        session: &mut PageSession,
        distance: usize,
    ) -> Result<String, PipelineError> {
        let attribute = &pinpoint.attribute;
        let segments = self.segments(pinpoint, session, distance)?;
        let listing = segments.iter().enumerate().map(|(i, s)| format!("Segment {}:\n{s}", i + 1)).collect::<Vec<_>>().join("\n\n");
        let image = pinpoint.marked_region.png()?;
        let base = prompt(
            InstructionId::VgsXpathSynthesis,
            &[("Target attribute", attribute.name.clone()), ("HTML segments", format!("\n{listing}"))],
        );
        let mut text = base.clone();
        let mut last_error = String::new();
        for _ in 0..=self.config.retry_budget {
            let resp = self.gateway.complete(&self.gateway.request(InstructionId::VgsXpathSynthesis, text.clone(), vec![image.clone()]))?;
            let (candidate, problem) = match resp.parsed.as_ref().and_then(|v| v["xpath"].as_str()).map(str::trim) {
                None => (String::new(), format!("no xpath in response ({})", resp.parse_error.unwrap_or_else(|| "missing key".into()))),
                Some(x) => {
                    let x = apply_category_suffix(x, attribute.category);
                    match evaluate_strings(session.document()?, &x) {
                        Ok(v) if !v.is_empty() => return Ok(x),
                        Ok(_) => (x, "it matches nothing on the page".to_string()),
                        Err(e) => (x, e.to_string()),
                    }
                }
            };
            last_error = if candidate.is_empty() { problem.clone() } else { format!("{candidate}: {problem}") };
            text = format!("{base}\nThe previous answer was rejected because {problem}. Previous XPath: {candidate}\n");
        }
        Err(PipelineError::SynthesisFailed(last_error))
    }

    fn attribute_pass(
        &self,
        attribute: &AttributeSpec,
        regions: &[Region],
        session: &mut PageSession,
        marker: &mut dyn Marker,
        traces: &mut Vec<Trace>,
    ) -> Option<String> {
        let name = Some(attribute.name.as_str());
        let fail = |traces: &mut Vec<Trace>, stage, e: PipelineError| {
            traces.push(Trace::failed(name, stage, e.to_string()));
            None
        };
        let index = match self.ground_attribute(attribute, regions) {
            Ok(i) => i,
            Err(e) => return fail(traces, Stage::Grounding, e),
        };
        traces.push(Trace::ok(name, Stage::Grounding, regions[index].id()));
        let region = &regions[index];
        let scan = match self.scan_region(attribute, region) {
            Ok(s) => s,
            Err(e) => return fail(traces, Stage::Pinpointing, e),
        };
        let pin = match self.pinpoint(attribute, region, &scan, session, marker) {
            Ok(p) => p,
            Err(e) => return fail(traces, Stage::Pinpointing, e),
        };
        let mut detail = format!(
            "selected {:?} of {} candidates",
            pin.selected.iter().map(|c| c.label).collect::<Vec<_>>(),
            pin.offered.len()
        );
        if pin.truncated > 0 {
            detail.push_str(&format!("; {} candidates beyond the cap were dropped", pin.truncated));
        }
        traces.push(Trace::ok(name, Stage::Pinpointing, detail));
        match self.synthesize_xpath(&pin, session, self.config.segment_distance) {
            Ok(x) => {
                traces.push(Trace::ok(name, Stage::XpathSynthesis, x.clone()));
                Some(x)
            }
            Err(e) => fail(traces, Stage::XpathSynthesis, e),
        }
    }

    /// Generates a wrapper from the page at `url`.
    pub fn run(&self, query: &ExtractionQuery, url: &str) -> Result<Wrapper, PipelineError> {
        let mut session = PageSession::load_with(url, self.config.viewport, self.config.engine)?;
        self.run_session(query, &mut session)
    }

    pub fn run_session(&self, query: &ExtractionQuery, session: &mut PageSession) -> Result<Wrapper, PipelineError> {
        let watch = self.clock.start();
        let mut wrapper = Wrapper::new(&query.id, session.url(), Method::Vgs, self.clock);
        wrapper.segment_distance = Some(self.config.segment_distance);
        let regions = session.tile_regions()?;
        let attributes = match self.identify_attributes(&query.text) {
            Ok(a) => {
                let names: Vec<&str> = a.iter().map(|a| a.name.as_str()).collect();
                wrapper.traces.push(Trace::ok(None, Stage::AttributeIdentification, names.join(", ")));
                a
            }
            Err(e) => {
                wrapper.traces.push(Trace::failed(None, Stage::AttributeIdentification, e.to_string()));
                wrapper.duration_ms = watch.elapsed_ms();
                return Err(PipelineError::AllAttributesFailed(Box::new(wrapper)));
            }
        };
        let mut marker = HostMarker::new();
        for attribute in &attributes {
            if let Some(x) = self.attribute_pass(attribute, &regions, session, &mut marker, &mut wrapper.traces) {
                wrapper.entries.insert(attribute.name.clone(), x);
            }
        }
        wrapper.duration_ms = watch.elapsed_ms();
        if wrapper.entries.is_empty() {
            return Err(PipelineError::AllAttributesFailed(Box::new(wrapper)));
        }
        Ok(wrapper)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn suffix_rule() {
        assert_eq!(apply_category_suffix("//a[@class=\"t\"]", Category::Hyperlink), "//a[@class=\"t\"]/@href");
        assert_eq!(apply_category_suffix("//a/@href", Category::Hyperlink), "//a/@href");
        assert_eq!(apply_category_suffix("//img", Category::Image), "//img/@src");
        assert_eq!(apply_category_suffix("//h1", Category::Text), "//h1");
    }

    #[test]
    fn region_ids() {
        assert_eq!(parse_region_id(&json!("region_2")), Some(2));
        assert_eq!(parse_region_id(&json!("Region 3")), Some(3));
        assert_eq!(parse_region_id(&json!(1)), Some(1));
        assert_eq!(parse_region_id(&json!("top")), None);
    }
}
