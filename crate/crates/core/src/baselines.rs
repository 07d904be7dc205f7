//! HTML-only comparison methods: single-pass CoT, Reflexion, an
//! AutoScraper-style pruning walk, and a direct per-page extractor.
//!
//! Every entry point takes [`SimplifiedHtml`], so raw markup cannot reach
//! a prompt.

use std::collections::BTreeMap;

use serde_json::{json, Value};
use thiserror::Error;

use crate::config::RunConfig;
use crate::dom::{Document, NodeId};
use crate::gateway::{render_positional, Gateway, GatewayError, InstructionId};
use crate::html_tools::{absolute_xpath, SimplifiedHtml};
use crate::wrapper::{Clock, ExtractionQuery, Method, Stage, Trace, Wrapper};
use crate::xpath::{evaluate_strings, XPath};

/// Values shown in one step-back prompt at most.
pub const STEP_BACK_VALUE_LIMIT: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("model output could not be parsed: {0}")]
    ModelParseFailure(String),
    #[error("no pages given")]
    NoPages,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// One page of a group, already simplified.
#[derive(Debug, Clone)]
pub struct PageInput {
    pub url: String,
    pub html: SimplifiedHtml,
}

impl PageInput {
    pub fn new(url: &str, html: SimplifiedHtml) -> PageInput {
        PageInput { url: url.to_string(), html }
    }
}

/// Field → XPath list produced by one generation call.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Sequence {
    pub xpaths: BTreeMap<String, Vec<String>>,
    pub values: BTreeMap<String, Vec<String>>,
}

fn list_of(v: &Value) -> Vec<String> {
    match v {
        Value::String(s) => vec![s.clone()],
        Value::Array(a) => a
            .iter()
            .filter_map(|x| match x {
                Value::String(s) => Some(s.clone()),
                Value::Number(n) => Some(n.to_string()),
                _ => None,
            })
            .collect(),
        _ => Vec::new(),
    }
}

/// Reads `{value, xpath}` from a generation response. Fields present in
/// only one of the two maps are dropped and reported.
pub fn parse_sequence(v: &Value, traces: &mut Vec<Trace>, stage: Stage) -> Sequence {
    let empty = serde_json::Map::new();
    let values = v["value"].as_object().unwrap_or(&empty);
    let xpaths = v["xpath"].as_object().unwrap_or(&empty);
    let mut seq = Sequence::default();
    for (k, xv) in xpaths {
        if values.contains_key(k) {
            seq.xpaths.insert(k.clone(), list_of(xv));
            seq.values.insert(k.clone(), list_of(&values[k]));
        } else {
            traces.push(Trace::failed(Some(k), stage, "key mismatch: field has an xpath but no value list"));
        }
    }
    for k in values.keys().filter(|k| !xpaths.contains_key(*k)) {
        traces.push(Trace::failed(Some(k), stage, "key mismatch: field has values but no xpath list"));
    }
    seq
}

/// Runs every xpath of a sequence on a page.
pub fn execute(seq: &Sequence, doc: &Document) -> BTreeMap<String, Vec<String>> {
    seq.xpaths
        .iter()
        .map(|(k, xs)| (k.clone(), xs.iter().flat_map(|x| evaluate_strings(doc, x).unwrap_or_default()).collect()))
        .collect()
}

fn is_yes(v: &Value) -> bool {
    match v {
        Value::Bool(b) => *b,
        Value::String(s) => s.trim().to_ascii_lowercase().starts_with("yes"),
        _ => false,
    }
}

pub struct Baselines<'a> {
    pub gateway: &'a Gateway,
    pub config: &'a RunConfig,
    pub clock: &'a Clock,
}

/// Result of an AutoScraper run, including the pruning path.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoScraperRun {
    pub wrapper: Wrapper,
    /// Absolute XPaths (in the simplified page) of the yes-judged subtrees,
    /// from the root down.
    pub path: Vec<String>,
}

/// Per-page output of the direct extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectResult {
    pub url: String,
    pub values: BTreeMap<String, Vec<String>>,
    pub latency_ms: u64,
}

impl Baselines<'_> {
    fn ask(&self, id: InstructionId, args: &[&str]) -> Result<Value, BaselineError> {
        let text = render_positional(id, args)?;
        let resp = self.gateway.complete(&self.gateway.request(id, text, vec![]))?;
        resp.parsed.ok_or_else(|| BaselineError::ModelParseFailure(resp.parse_error.unwrap_or_default()))
    }

    fn generate(&self, id: InstructionId, query: &str, html: &str, traces: &mut Vec<Trace>) -> Result<Sequence, BaselineError> {
        let v = self.ask(id, &[query, html])?;
        let seq = parse_sequence(&v, traces, Stage::TopDown);
        traces.push(Trace::ok(None, Stage::TopDown, format!("{} fields", seq.xpaths.len())));
        Ok(seq)
    }

    /// Asks the discriminator to pick one candidate after running each on
    /// the sample pages.
    fn synthesize(
        &self,
        id: InstructionId,
        query: &str,
        candidates: &[Sequence],
        samples: &[Document],
        traces: &mut Vec<Trace>,
    ) -> Result<usize, BaselineError> {
        let mut listing = String::new();
        for (i, seq) in candidates.iter().enumerate() {
            listing.push_str(&format!("Action sequence {i}:\n{}\n", json!(seq.xpaths)));
            for (p, doc) in samples.iter().enumerate() {
                listing.push_str(&format!("Extracted results on webpage {}: {}\n", p + 1, json!(execute(seq, doc))));
            }
            listing.push('\n');
        }
        let v = self.ask(id, &[query, listing.trim_end()])?;
        let pick = match &v["number"] {
            Value::Number(n) => n.as_u64().map(|n| n as usize),
            Value::String(s) => s.trim().parse().ok(),
            _ => None,
        };
        match pick {
            Some(i) if i < candidates.len() => {
                traces.push(Trace::ok(None, Stage::Synthesis, format!("chose sequence {i} of {}", candidates.len())));
                Ok(i)
            }
            other => {
                traces.push(Trace::failed(None, Stage::Synthesis, format!("invalid choice {other:?}, using sequence 0")));
                Ok(0)
            }
        }
    }

    /// First xpath of every field, keeping only ones that compile.
    fn finish(&self, mut wrapper: Wrapper, seq: &Sequence, watch: crate::wrapper::Stopwatch) -> Wrapper {
        for (k, xs) in &seq.xpaths {
            match xs.first() {
                Some(x) if XPath::compile(x).is_ok() => {
                    wrapper.entries.insert(k.clone(), x.clone());
                }
                Some(x) => wrapper.traces.push(Trace::failed(Some(k), Stage::Synthesis, format!("invalid xpath {x}"))),
                None => wrapper.traces.push(Trace::failed(Some(k), Stage::Synthesis, "empty xpath list")),
            }
        }
        wrapper.duration_ms = watch.elapsed_ms();
        wrapper
    }

    fn sample_docs(&self, pages: &[PageInput]) -> Vec<Document> {
        pages.iter().take(self.config.sample_pages.max(1)).map(|p| Document::parse(&p.html.content)).collect()
    }

    pub fn cot_wrapper(&self, query: &ExtractionQuery, pages: &[PageInput]) -> Result<Wrapper, BaselineError> {
        let first = pages.first().ok_or(BaselineError::NoPages)?;
        let watch = self.clock.start();
        let mut wrapper = Wrapper::new(&query.id, &first.url, Method::Cot, self.clock);
        let seq = self.generate(InstructionId::CotTopDown, &query.text, &first.html.content, &mut wrapper.traces)?;
        let candidates = vec![seq];
        let pick = self.synthesize(InstructionId::CotSynthesis, &query.text, &candidates, &self.sample_docs(pages), &mut wrapper.traces)?;
        Ok(self.finish(wrapper, &candidates[pick], watch))
    }

    pub fn reflexion_wrapper(&self, query: &ExtractionQuery, pages: &[PageInput]) -> Result<Wrapper, BaselineError> {
        let first = pages.first().ok_or(BaselineError::NoPages)?;
        let watch = self.clock.start();
        let mut wrapper = Wrapper::new(&query.id, &first.url, Method::Reflexion, self.clock);
        let doc = Document::parse(&first.html.content);
        let mut current = self.generate(InstructionId::ReflexionTopDown, &query.text, &first.html.content, &mut wrapper.traces)?;
        let mut candidates = vec![current.clone()];
        let mut history = String::new();
        let mut consistent = false;
        for round in 1..=self.config.reflexion_budget {
            let results = execute(&current, &doc);
            history.push_str(&format!(
                "Round {round}:\nxpath: {}\nexpected values: {}\nextracted results: {}\n\n",
                json!(current.xpaths),
                json!(current.values),
                json!(results)
            ));
            let v = self.ask(InstructionId::ReflexionSelfReflection, &[&query.text, history.trim_end(), &first.html.content])?;
            if is_yes(&v["consistent"]) {
                wrapper.traces.push(Trace::ok(None, Stage::Reflection, format!("round {round}: consistent")));
                consistent = true;
                break;
            }
            wrapper.traces.push(Trace::ok(None, Stage::Reflection, format!("round {round}: inconsistent")));
            current = parse_sequence(&v, &mut wrapper.traces, Stage::Reflection);
            candidates.push(current.clone());
        }
        if !consistent {
            wrapper.traces.push(Trace::failed(
                None,
                Stage::Reflection,
                format!("budget exhausted after {} rounds", self.config.reflexion_budget),
            ));
        }
        let pick = self.synthesize(InstructionId::ReflexionSynthesis, &query.text, &candidates, &self.sample_docs(pages), &mut wrapper.traces)?;
        Ok(self.finish(wrapper, &candidates[pick], watch))
    }

    fn judge(&self, query: &str, values: &str, html: &str) -> Result<bool, BaselineError> {
        Ok(is_yes(&self.ask(InstructionId::AutoscraperStepBack, &[query, values, html])?["judgement"]))
    }

    pub fn autoscraper_wrapper(&self, query: &ExtractionQuery, pages: &[PageInput]) -> Result<AutoScraperRun, BaselineError> {
        let first = pages.first().ok_or(BaselineError::NoPages)?;
        let watch = self.clock.start();
        let mut wrapper = Wrapper::new(&query.id, &first.url, Method::Autoscraper, self.clock);
        let doc = Document::parse(&first.html.content);
        let seq = self.generate(InstructionId::AutoscraperTopDown, &query.text, &first.html.content, &mut wrapper.traces)?;
        let expected: Vec<String> = seq.values.values().flatten().take(STEP_BACK_VALUE_LIMIT).cloned().collect();
        let shown = json!(expected).to_string();
        let mut candidates = vec![seq];
        let mut path: Vec<NodeId> = Vec::new();
        let root = doc
            .all_elements()
            .into_iter()
            .find(|&n| doc.tag(n) == Some("body"))
            .or_else(|| doc.document_element());
        match root {
            Some(root) if !expected.is_empty() => {
                if self.judge(&query.text, &shown, &doc.outer_html(root))? {
                    path.push(root);
                    let mut cur = root;
                    'descend: loop {
                        for child in doc.element_children(cur).collect::<Vec<_>>() {
                            if self.judge(&query.text, &shown, &doc.outer_html(child))? {
                                path.push(child);
                                cur = child;
                                continue 'descend;
                            }
                        }
                        break;
                    }
                } else {
                    wrapper.traces.push(Trace::failed(None, Stage::StepBack, "prune dead end: root judged no, using the whole page"));
                }
            }
            _ => wrapper.traces.push(Trace::failed(None, Stage::StepBack, "nothing to prune against, using the whole page")),
        }
        let path_xpaths: Vec<String> = path.iter().filter_map(|&n| absolute_xpath(&doc, n).ok()).collect();
        if let Some(&deepest) = path.last() {
            wrapper.traces.push(Trace::ok(None, Stage::StepBack, format!("pruned to {}", path_xpaths.join(" > "))));
            let context = doc.outer_html(deepest);
            candidates.push(self.generate(InstructionId::AutoscraperTopDown, &query.text, &context, &mut wrapper.traces)?);
        }
        let pick = self.synthesize(InstructionId::AutoscraperSynthesis, &query.text, &candidates, &self.sample_docs(pages), &mut wrapper.traces)?;
        let wrapper = self.finish(wrapper, &candidates[pick], watch);
        Ok(AutoScraperRun { wrapper, path: path_xpaths })
    }

    /// One extraction call for one page; no wrapper is produced.
    pub fn direct_extract(&self, query: &ExtractionQuery, page: &PageInput) -> Result<DirectResult, BaselineError> {
        let watch = self.clock.start();
        let v = self.ask(InstructionId::LlmExtractor, &[&query.text, &page.html.content])?;
        let obj = v.as_object().ok_or_else(|| BaselineError::ModelParseFailure("expected an object".into()))?;
        let values = obj.iter().map(|(k, vs)| (k.clone(), list_of(vs))).collect();
        Ok(DirectResult { url: page.url.clone(), values, latency_ms: watch.elapsed_ms() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_mismatch_drops_field() {
        let mut traces = Vec::new();
        let v = json!({"value": {"title": ["A"], "price": ["1"]}, "xpath": {"title": ["//h1"], "author": ["//b"]}});
        let seq = parse_sequence(&v, &mut traces, Stage::TopDown);
        assert_eq!(seq.xpaths.keys().collect::<Vec<_>>(), ["title"]);
        assert_eq!(traces.len(), 2);
        assert!(traces.iter().all(|t| t.detail.starts_with("key mismatch")));
    }

    #[test]
    fn empty_objects_are_allowed() {
        let mut traces = Vec::new();
        assert_eq!(parse_sequence(&json!({"thought": "", "value": {}, "xpath": {}}), &mut traces, Stage::TopDown), Sequence::default());
        assert!(traces.is_empty());
    }

    #[test]
    fn yes_variants() {
        assert!(is_yes(&json!("Yes.")));
        assert!(is_yes(&json!(true)));
        assert!(!is_yes(&json!("no")));
        assert!(!is_yes(&Value::Null));
    }
}
