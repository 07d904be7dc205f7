//! Wrapper documents, stage traces and the run clock.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::xpath::XPath;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Vgs,
    Cot,
    Reflexion,
    Autoscraper,
    Direct,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Vgs => "vgs",
            Method::Cot => "cot",
            Method::Reflexion => "reflexion",
            Method::Autoscraper => "autoscraper",
            Method::Direct => "direct",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vgs" => Ok(Method::Vgs),
            "cot" => Ok(Method::Cot),
            "reflexion" => Ok(Method::Reflexion),
            "autoscraper" => Ok(Method::Autoscraper),
            "direct" => Ok(Method::Direct),
            _ => Err(format!("unknown method {s:?}")),
        }
    }
}

/// Data category of an attribute value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Text,
    Image,
    Hyperlink,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Text => "text",
            Category::Image => "image",
            Category::Hyperlink => "hyperlink",
        }
    }

    /// Classifies an attribute by name: image words first, then link words,
    /// otherwise text.
    pub fn from_name(name: &str) -> Category {
        const IMAGE: &[&str] =
            &["image", "img", "photo", "logo", "poster", "banner", "badge", "thumb", "fanart", "picture", "icon", "avatar", "cover", "flag"];
        const LINK: &[&str] = &["link", "url", "href", "hyperlink", "uri"];
        let lower = name.to_lowercase();
        let tokens: Vec<&str> = lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).collect();
        if tokens.iter().any(|t| IMAGE.iter().any(|p| t.starts_with(p))) {
            Category::Image
        } else if tokens.iter().any(|t| LINK.iter().any(|p| t == p || t.strip_suffix('s') == Some(p))) {
            Category::Hyperlink
        } else {
            Category::Text
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Navigation,
    AttributeIdentification,
    Grounding,
    Pinpointing,
    XpathSynthesis,
    TopDown,
    Reflection,
    StepBack,
    Synthesis,
    Extraction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute: Option<String>,
    pub stage: Stage,
    pub status: Status,
    pub detail: String,
}

impl Trace {
    pub fn ok(attribute: Option<&str>, stage: Stage, detail: impl Into<String>) -> Trace {
        Trace { attribute: attribute.map(str::to_string), stage, status: Status::Ok, detail: detail.into() }
    }

    pub fn failed(attribute: Option<&str>, stage: Stage, detail: impl Into<String>) -> Trace {
        Trace { attribute: attribute.map(str::to_string), stage, status: Status::Failed, detail: detail.into() }
    }
}

/// Attribute → XPath map generated from one page, applied to its group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wrapper {
    pub query_id: String,
    pub source_url: String,
    pub method: Method,
    pub generated_at: String,
    pub duration_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment_distance: Option<usize>,
    pub entries: BTreeMap<String, String>,
    pub traces: Vec<Trace>,
}

impl Wrapper {
    pub fn new(query_id: &str, source_url: &str, method: Method, clock: &Clock) -> Wrapper {
        Wrapper {
            query_id: query_id.to_string(),
            source_url: source_url.to_string(),
            method,
            generated_at: clock.now(),
            duration_ms: 0,
            segment_distance: None,
            entries: BTreeMap::new(),
            traces: Vec::new(),
        }
    }

    /// Checks that every entry compiles.
    pub fn validate(&self) -> Result<(), String> {
        for (name, xpath) in &self.entries {
            XPath::compile(xpath).map_err(|e| format!("{name}: {e}"))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("wrapper serializes") + "\n"
    }

    pub fn has_failures(&self) -> bool {
        self.traces.iter().any(|t| t.status == Status::Failed)
    }
}

/// A natural-language extraction request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionQuery {
    pub id: String,
    pub text: String,
}

/// Wall clock, or a frozen one for reproducible runs.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Clock {
    #[default]
    System,
    Frozen(String),
}

pub const FROZEN_TIME: &str = "1970-01-01T00:00:00Z";

impl Clock {
    pub fn frozen() -> Clock {
        Clock::Frozen(FROZEN_TIME.to_string())
    }

    pub fn now(&self) -> String {
        match self {
            Clock::System => chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            Clock::Frozen(t) => t.clone(),
        }
    }

    pub fn start(&self) -> Stopwatch {
        Stopwatch { started: Instant::now(), frozen: matches!(self, Clock::Frozen(_)) }
    }
}

pub struct Stopwatch {
    started: Instant,
    frozen: bool,
}

impl Stopwatch {
    pub fn elapsed_ms(&self) -> u64 {
        if self.frozen {
            0
        } else {
            self.started.elapsed().as_millis() as u64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrapper_json_shape() {
        let mut w = Wrapper::new("q1", "file:///p.html", Method::Vgs, &Clock::frozen());
        w.entries.insert("title".into(), "//h1".into());
        w.traces.push(Trace::ok(Some("title"), Stage::Grounding, "region_0"));
        let v: serde_json::Value = serde_json::from_str(&w.to_json()).unwrap();
        assert_eq!(v["generated_at"], FROZEN_TIME);
        assert_eq!(v["entries"]["title"], "//h1");
        assert_eq!(v["traces"][0]["stage"], "grounding");
        assert_eq!(v["method"], "vgs");
        assert_eq!(serde_json::from_value::<Wrapper>(v).unwrap(), w);
    }

    #[test]
    fn validate_rejects_bad_xpath() {
        let mut w = Wrapper::new("q", "u", Method::Cot, &Clock::frozen());
        w.entries.insert("a".into(), "//div[".into());
        assert!(w.validate().is_err());
    }

    #[test]
    fn category_rule() {
        assert_eq!(Category::from_name("cover image"), Category::Image);
        assert_eq!(Category::from_name("Thumbnail"), Category::Image);
        assert_eq!(Category::from_name("book link"), Category::Hyperlink);
        assert_eq!(Category::from_name("detail_url"), Category::Hyperlink);
        assert_eq!(Category::from_name("article title"), Category::Text);
        assert_eq!(Category::from_name("linkedin followers"), Category::Text);
        assert_eq!(Category::from_name("related links"), Category::Hyperlink);
    }

    #[test]
    fn frozen_clock_is_constant() {
        let c = Clock::frozen();
        assert_eq!(c.now(), c.now());
        assert_eq!(c.start().elapsed_ms(), 0);
        assert!(Clock::System.now().ends_with('Z'));
    }
}
