//! Dataset loading, wrapper application, attribute alignment, scoring and
//! reporting.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use url::Url;

use crate::browser::{EngineKind, PageSession, Viewport};
use crate::dom::{normalize_whitespace, Document};
use crate::gateway::{render_positional, Gateway, InstructionId};
use crate::wrapper::{Category, ExtractionQuery, Wrapper};
use crate::xpath::{evaluate_strings, XPath};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("sample {sample}: field {field}: {message}")]
    SchemaViolation { sample: String, field: String, message: String },
    #[error("{0}")]
    IoFailure(String),
    #[error("nothing to report")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskType {
    I,
    II,
    III,
    IV,
}

impl TaskType {
    pub const ALL: [TaskType; 4] = [TaskType::I, TaskType::II, TaskType::III, TaskType::IV];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskType::I => "I",
            TaskType::II => "II",
            TaskType::III => "III",
            TaskType::IV => "IV",
        }
    }

    pub fn multi_attribute(self) -> bool {
        matches!(self, TaskType::II | TaskType::IV)
    }

    pub fn list_valued(self) -> bool {
        matches!(self, TaskType::III | TaskType::IV)
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAttribute {
    pub category: Category,
    pub values_per_url: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub website: String,
    pub page_group: String,
    pub task_type: TaskType,
    pub query: String,
    pub urls: Vec<String>,
    pub gold: BTreeMap<String, GoldAttribute>,
}

impl Sample {
    pub fn extraction_query(&self) -> ExtractionQuery {
        ExtractionQuery { id: self.id.clone(), text: self.query.clone() }
    }

    /// Checks the cardinality rules of the task type.
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |field: &str, message: String| {
            Err(EvalError::SchemaViolation { sample: self.id.clone(), field: field.to_string(), message })
        };
        if self.id.trim().is_empty() {
            return bad("id", "empty".into());
        }
        if self.query.trim().is_empty() {
            return bad("query", "empty".into());
        }
        if self.urls.is_empty() {
            return bad("urls", "at least one url is required".into());
        }
        if self.gold.is_empty() {
            return bad("gold", "no attributes".into());
        }
        let n = self.gold.len();
        if self.task_type.multi_attribute() && n < 2 {
            return bad("gold", format!("type {} needs more than one attribute, found {n}", self.task_type));
        }
        if !self.task_type.multi_attribute() && n != 1 {
            return bad("gold", format!("type {} needs exactly one attribute, found {n}", self.task_type));
        }
        for (name, attr) in &self.gold {
            let field = format!("gold.{name}");
            if attr.values_per_url.len() != self.urls.len() {
                return bad(&field, format!("{} value lists for {} urls", attr.values_per_url.len(), self.urls.len()));
            }
            if attr.values_per_url.iter().flatten().any(|v| v.trim().is_empty()) {
                return bad(&field, "empty value".into());
            }
            let sizes: Vec<usize> = attr.values_per_url.iter().map(Vec::len).collect();
            if self.task_type.list_valued() {
                if sizes.iter().all(|&s| s < 2) {
                    return bad(&field, format!("type {} needs a list of values on some page, sizes {sizes:?}", self.task_type));
                }
            } else if sizes.iter().any(|&s| s != 1) {
                return bad(&field, format!("type {} needs one value per page, sizes {sizes:?}", self.task_type));
            }
        }
        Ok(())
    }
}

/// Reads a JSON Lines dataset. Relative urls resolve against the
/// dataset's directory.
pub fn load_dataset(path: &Path) -> Result<Vec<Sample>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::IoFailure(format!("{}: {e}", path.display())))?;
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .canonicalize()
        .map_err(|e| EvalError::IoFailure(e.to_string()))?;
    let base = Url::from_directory_path(&dir).map_err(|_| EvalError::IoFailure(format!("{} is not absolute", dir.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: Value = serde_json::from_str(line).map_err(|e| EvalError::SchemaViolation {
            sample: format!("line {}", i + 1),
            field: "json".into(),
            message: e.to_string(),
        })?;
        let id = raw["id"].as_str().map(str::to_string).unwrap_or_else(|| format!("line {}", i + 1));
        let mut sample: Sample = serde_json::from_value(raw).map_err(|e| EvalError::SchemaViolation {
            sample: id.clone(),
            field: "schema".into(),
            message: e.to_string(),
        })?;
        for u in sample.urls.iter_mut() {
            if Url::parse(u).is_err() {
                *u = base
                    .join(u)
                    .map_err(|e| EvalError::SchemaViolation { sample: id.clone(), field: "urls".into(), message: e.to_string() })?
                    .to_string();
            }
        }
        sample.validate()?;
        out.push(sample);
    }
    Ok(out)
}

/// Trims, collapses whitespace and, for URL-valued attributes, resolves
/// relative references against `base`.
pub fn normalize_value(value: &str, base: Option<&Url>) -> String {
    let v = normalize_whitespace(value);
    match base {
        Some(b) if Url::parse(&v).is_err() && !v.is_empty() => b.join(&v).map(|u| u.to_string()).unwrap_or(v),
        _ => v,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageExtraction {
    pub url: String,
    pub values: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub sample_id: String,
    pub pages: Vec<PageExtraction>,
}

fn url_valued(name: &str, xpath: Option<&str>) -> bool {
    let by_xpath = xpath
        .and_then(|x| XPath::compile(x).ok())
        .is_some_and(|x| x.ends_in_attribute("href") || x.ends_in_attribute("src"));
    by_xpath || Category::from_name(name) != Category::Text
}

fn clean(values: Vec<String>, base: Option<&Url>) -> Vec<String> {
    values.iter().map(|v| normalize_value(v, base)).filter(|v| !v.is_empty()).collect()
}

/// Runs every wrapper entry on one parsed page. URL-valued results are
/// resolved against `page_url` when given.
pub fn extract_document(wrapper: &Wrapper, doc: &Document, page_url: Option<&Url>) -> BTreeMap<String, Vec<String>> {
    wrapper
        .entries
        .iter()
        .map(|(name, xpath)| {
            let values = evaluate_strings(doc, xpath).unwrap_or_default();
            let base = page_url.filter(|_| url_valued(name, Some(xpath)));
            (name.clone(), clean(values, base))
        })
        .collect()
}

/// Runs every wrapper entry on every page of the sample's group.
pub fn apply_wrapper(wrapper: &Wrapper, sample: &Sample, viewport: Viewport, engine: EngineKind) -> ExtractionResult {
    let mut pages = Vec::new();
    for url in &sample.urls {
        let mut page = PageExtraction { url: url.clone(), ..Default::default() };
        match PageSession::load_with(url, viewport, engine) {
            Ok(session) => match session.document() {
                Ok(doc) => page.values = extract_document(wrapper, doc, Url::parse(url).ok().as_ref()),
                Err(e) => page.error = Some(e.to_string()),
            },
            Err(e) => {
                page.error = Some(e.to_string());
                for name in wrapper.entries.keys() {
                    page.values.insert(name.clone(), Vec::new());
                }
            }
        }
        pages.push(page);
    }
    ExtractionResult { sample_id: sample.id.clone(), pages }
}

/// Builds an extraction result from per-page attribute → values maps.
pub fn extraction_from_values(sample_id: &str, pages: Vec<(String, BTreeMap<String, Vec<String>>)>) -> ExtractionResult {
    let pages = pages
        .into_iter()
        .map(|(url, values)| {
            let base = Url::parse(&url).ok();
            let values = values
                .into_iter()
                .map(|(k, vs)| {
                    let b = base.as_ref().filter(|_| url_valued(&k, None));
                    let cleaned = clean(vs, b);
                    (k, cleaned)
                })
                .collect();
            PageExtraction { url, values, error: None }
        })
        .collect();
    ExtractionResult { sample_id: sample_id.to_string(), pages }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    /// (predicted, gold) pairs; each gold name appears at most once.
    pub pairs: Vec<(String, String)>,
    pub unaligned_predicted: Vec<String>,
    pub unaligned_gold: Vec<String>,
    pub judge_calls: usize,
    pub judge_unavailable: bool,
}

impl Alignment {
    pub fn predicted_for(&self, gold: &str) -> Option<&str> {
        self.pairs.iter().find(|(_, g)| g == gold).map(|(p, _)| p.as_str())
    }
}

/// Exact case-insensitive matches first, then the judge model for the
/// rest. Judge failures fall back to exact matches only.
pub fn align_attributes(predicted: &[String], gold: &[String], judge: Option<&Gateway>) -> Alignment {
    let mut pairs: Vec<(String, String)> = Vec::new();
    let mut free_pred: Vec<String> = Vec::new();
    let mut free_gold: Vec<String> = gold.to_vec();
    for p in predicted {
        let key = p.trim().to_lowercase();
        if pairs.iter().any(|(q, _)| q == p) {
            continue;
        }
        match free_gold.iter().position(|g| g.trim().to_lowercase() == key) {
            Some(i) => pairs.push((p.clone(), free_gold.remove(i))),
            None => free_pred.push(p.clone()),
        }
    }
    let mut out = Alignment::default();
    if let Some(gw) = judge.filter(|_| !free_pred.is_empty() && !free_gold.is_empty()) {
        out.judge_calls = 1;
        let text = render_positional(
            InstructionId::AlignmentJudge,
            &[&serde_json::to_string(&free_pred).unwrap_or_default(), &serde_json::to_string(&free_gold).unwrap_or_default()],
        );
        match text.map_err(|e| e.to_string()).and_then(|t| {
            gw.complete(&gw.request(InstructionId::AlignmentJudge, t, vec![])).map_err(|e| e.to_string())
        }) {
            Ok(resp) => {
                let judged = resp.parsed.as_ref().and_then(|v| v["pairs"].as_array()).cloned().unwrap_or_default();
                for pair in judged {
                    let (Some(p), Some(g)) = (pair[0].as_str(), pair[1].as_str()) else { continue };
                    let (Some(pi), Some(gi)) = (free_pred.iter().position(|x| x == p), free_gold.iter().position(|x| x == g)) else {
                        continue;
                    };
                    pairs.push((free_pred.remove(pi), free_gold.remove(gi)));
                }
            }
            Err(_) => out.judge_unavailable = true,
        }
    }
    out.pairs = pairs;
    out.unaligned_predicted = free_pred;
    out.unaligned_gold = free_gold;
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(rename = "p")]
    pub precision: f64,
    #[serde(rename = "r")]
    pub recall: f64,
    pub f1: f64,
}

impl Metrics {
    pub fn new(precision: f64, recall: f64) -> Metrics {
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Metrics { precision, recall, f1 }
    }

    pub const ZERO: Metrics = Metrics { precision: 0.0, recall: 0.0, f1: 0.0 };

    /// Component-wise mean; F1 is averaged, not recomputed.
    pub fn mean(items: &[Metrics]) -> Metrics {
        if items.is_empty() {
            return Metrics::ZERO;
        }
        let n = items.len() as f64;
        Metrics {
            precision: items.iter().map(|m| m.precision).sum::<f64>() / n,
            recall: items.iter().map(|m| m.recall).sum::<f64>() / n,
            f1: items.iter().map(|m| m.f1).sum::<f64>() / n,
        }
    }
}

/// Multiset precision/recall of one attribute on one page. Two empty
/// lists agree perfectly; one empty list scores zero.
pub fn cell_metrics(pred: &[String], gold: &[String]) -> Metrics {
    match (pred.is_empty(), gold.is_empty()) {
        (true, true) => return Metrics::new(1.0, 1.0),
        (true, false) | (false, true) => return Metrics::ZERO,
        _ => {}
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for g in gold {
        *counts.entry(g.as_str()).or_default() += 1;
    }
    let mut hit = 0usize;
    for p in pred {
        if let Some(c) = counts.get_mut(p.as_str()).filter(|c| **c > 0) {
            *c -= 1;
            hit += 1;
        }
    }
    Metrics::new(hit as f64 / pred.len() as f64, hit as f64 / gold.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub sample_id: String,
    pub task_type: TaskType,
    pub metrics: Metrics,
    pub by_category: BTreeMap<Category, Metrics>,
    pub alignment: Alignment,
}

/// Scores one sample: a cell per (gold attribute, url), plus a zero
/// precision cell per unaligned predicted attribute and url.
pub fn score(result: &ExtractionResult, sample: &Sample, alignment: &Alignment) -> ScoredSample {
    let mut cells: Vec<Metrics> = Vec::new();
    let mut by_cat: BTreeMap<Category, Vec<Metrics>> = BTreeMap::new();
    for (name, attr) in &sample.gold {
        let pred_name = alignment.predicted_for(name);
        for (i, gold_values) in attr.values_per_url.iter().enumerate() {
            let url = &sample.urls[i];
            let base = Url::parse(url).ok().filter(|_| attr.category != Category::Text);
            let gold = clean(gold_values.clone(), base.as_ref());
            let m = match pred_name {
                Some(p) => {
                    let pred = result
                        .pages
                        .get(i)
                        .and_then(|pg| pg.values.get(p))
                        .cloned()
                        .unwrap_or_default();
                    cell_metrics(&pred, &gold)
                }
                None => Metrics::ZERO,
            };
            cells.push(m);
            by_cat.entry(attr.category).or_default().push(m);
        }
    }
    let recall = Metrics::mean(&cells).recall;
    for _ in &alignment.unaligned_predicted {
        cells.extend(std::iter::repeat_n(Metrics::ZERO, sample.urls.len()));
    }
    let mean = Metrics::mean(&cells);
    ScoredSample {
        sample_id: sample.id.clone(),
        task_type: sample.task_type,
        metrics: Metrics { precision: mean.precision, recall, f1: mean.f1 },
        by_category: by_cat.into_iter().map(|(c, ms)| (c, Metrics::mean(&ms))).collect(),
        alignment: alignment.clone(),
    }
}

/// Aligns the extracted attribute names with the gold ones and scores.
pub fn evaluate_sample(result: &ExtractionResult, sample: &Sample, judge: Option<&Gateway>) -> ScoredSample {
    let mut predicted: Vec<String> = Vec::new();
    for page in &result.pages {
        for k in page.values.keys() {
            if !predicted.contains(k) {
                predicted.push(k.clone());
            }
        }
    }
    let gold: Vec<String> = sample.gold.keys().cloned().collect();
    let alignment = align_attributes(&predicted, &gold, judge);
    score(result, sample, &alignment)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    #[serde(flatten)]
    pub metrics: Metrics,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: Stratum,
    pub by_type: BTreeMap<TaskType, Stratum>,
    pub by_category: BTreeMap<Category, Stratum>,
    pub judge_unavailable: usize,
    pub samples: Vec<ScoredSample>,
}

fn stratum(ms: &[Metrics]) -> Stratum {
    Stratum { metrics: Metrics::mean(ms), n: ms.len() }
}

/// Macro-averages over samples per task type, per category and overall.
pub fn report(samples: Vec<ScoredSample>) -> Result<EvalReport, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut by_type: BTreeMap<TaskType, Vec<Metrics>> = BTreeMap::new();
    let mut by_cat: BTreeMap<Category, Vec<Metrics>> = BTreeMap::new();
    for s in &samples {
        by_type.entry(s.task_type).or_default().push(s.metrics);
        for (c, m) in &s.by_category {
            by_cat.entry(*c).or_default().push(*m);
        }
    }
    let all: Vec<Metrics> = samples.iter().map(|s| s.metrics).collect();
    Ok(EvalReport {
        overall: stratum(&all),
        by_type: by_type.iter().map(|(k, v)| (*k, stratum(v))).collect(),
        by_category: by_cat.iter().map(|(k, v)| (*k, stratum(v))).collect(),
        judge_unavailable: samples.iter().filter(|s| s.alignment.judge_unavailable).count(),
        samples,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Plain-text tables: task types then categories, as percentages.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let row = |out: &mut String, name: &str, s: &Stratum| {
            let _ = writeln!(
                out,
                "{name:<10} {:>7.2} {:>7.2} {:>7.2} {:>5}",
                s.metrics.precision * 100.0,
                s.metrics.recall * 100.0,
                s.metrics.f1 * 100.0,
                s.n
            );
        };
        let _ = writeln!(out, "{:<10} {:>7} {:>7} {:>7} {:>5}", "type", "P", "R", "F1", "n");
        for (t, s) in &self.by_type {
            row(&mut out, &format!("Type {t}"), s);
        }
        row(&mut out, "Overall", &self.overall);
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<10} {:>7} {:>7} {:>7} {:>5}", "category", "P", "R", "F1", "n");
        for (c, s) in &self.by_category {
            row(&mut out, c.as_str(), s);
        }
        out
    }
}
