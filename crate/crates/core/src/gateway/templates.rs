use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::GatewayError;

/// Registered prompt templates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstructionId {
    VgsAttributeIdentification,
    VgsVisualGrounding,
    VgsElementScanning,
    VgsElementSelection,
    VgsXpathSynthesis,
    CotTopDown,
    CotSynthesis,
    ReflexionTopDown,
    ReflexionSelfReflection,
    ReflexionSynthesis,
    AutoscraperTopDown,
    AutoscraperStepBack,
    AutoscraperSynthesis,
    LlmExtractor,
    AlignmentJudge,
}

/// Top-level JSON kind a template asks the model to return.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseShape {
    Object,
    Array,
}

impl InstructionId {
    pub const ALL: [InstructionId; 15] = [
        InstructionId::VgsAttributeIdentification,
        InstructionId::VgsVisualGrounding,
        InstructionId::VgsElementScanning,
        InstructionId::VgsElementSelection,
        InstructionId::VgsXpathSynthesis,
        InstructionId::CotTopDown,
        InstructionId::CotSynthesis,
        InstructionId::ReflexionTopDown,
        InstructionId::ReflexionSelfReflection,
        InstructionId::ReflexionSynthesis,
        InstructionId::AutoscraperTopDown,
        InstructionId::AutoscraperStepBack,
        InstructionId::AutoscraperSynthesis,
        InstructionId::LlmExtractor,
        InstructionId::AlignmentJudge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InstructionId::VgsAttributeIdentification => "vgs_attribute_identification",
            InstructionId::VgsVisualGrounding => "vgs_visual_grounding",
            InstructionId::VgsElementScanning => "vgs_element_scanning",
            InstructionId::VgsElementSelection => "vgs_element_selection",
            InstructionId::VgsXpathSynthesis => "vgs_xpath_synthesis",
            InstructionId::CotTopDown => "cot_top_down",
            InstructionId::CotSynthesis => "cot_synthesis",
            InstructionId::ReflexionTopDown => "reflexion_top_down",
            InstructionId::ReflexionSelfReflection => "reflexion_self_reflection",
            InstructionId::ReflexionSynthesis => "reflexion_synthesis",
            InstructionId::AutoscraperTopDown => "autoscraper_top_down",
            InstructionId::AutoscraperStepBack => "autoscraper_step_back",
            InstructionId::AutoscraperSynthesis => "autoscraper_synthesis",
            InstructionId::LlmExtractor => "llm_extractor",
            InstructionId::AlignmentJudge => "alignment_judge",
        }
    }

    pub fn template(self) -> &'static str {
        match self {
            InstructionId::VgsAttributeIdentification => include_str!("../../templates/vgs_attribute_identification.txt"),
            InstructionId::VgsVisualGrounding => include_str!("../../templates/vgs_visual_grounding.txt"),
            InstructionId::VgsElementScanning => include_str!("../../templates/vgs_element_scanning.txt"),
            InstructionId::VgsElementSelection => include_str!("../../templates/vgs_element_selection.txt"),
            InstructionId::VgsXpathSynthesis => include_str!("../../templates/vgs_xpath_synthesis.txt"),
            InstructionId::CotTopDown => include_str!("../../templates/cot_top_down.txt"),
            InstructionId::CotSynthesis => include_str!("../../templates/cot_synthesis.txt"),
            InstructionId::ReflexionTopDown => include_str!("../../templates/reflexion_top_down.txt"),
            InstructionId::ReflexionSelfReflection => include_str!("../../templates/reflexion_self_reflection.txt"),
            InstructionId::ReflexionSynthesis => include_str!("../../templates/reflexion_synthesis.txt"),
            InstructionId::AutoscraperTopDown => include_str!("../../templates/autoscraper_top_down.txt"),
            InstructionId::AutoscraperStepBack => include_str!("../../templates/autoscraper_step_back.txt"),
            InstructionId::AutoscraperSynthesis => include_str!("../../templates/autoscraper_synthesis.txt"),
            InstructionId::LlmExtractor => include_str!("../../templates/llm_extractor.txt"),
            InstructionId::AlignmentJudge => include_str!("../../templates/alignment_judge.txt"),
        }
    }

    pub fn shape(self) -> ResponseShape {
        match self {
            InstructionId::VgsElementSelection => ResponseShape::Array,
            _ => ResponseShape::Object,
        }
    }

    /// Stages that send screenshots along with the prompt.
    pub fn is_vision(self) -> bool {
        matches!(
            self,
            InstructionId::VgsVisualGrounding
                | InstructionId::VgsElementScanning
                | InstructionId::VgsElementSelection
                | InstructionId::VgsXpathSynthesis
        )
    }
}

impl fmt::Display for InstructionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InstructionId {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        InstructionId::ALL
            .into_iter()
            .find(|i| i.as_str() == s)
            .ok_or_else(|| GatewayError::UnknownInstruction(s.to_string()))
    }
}

/// Placeholder names in template order, without duplicates.
pub fn placeholders(template: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    scan(template, |tok| {
        if let Token::Placeholder(name) = tok {
            if !out.iter().any(|n| n == name) {
                out.push(name.to_string());
            }
        }
    });
    out
}

/// Substitutes `{name}` placeholders verbatim. Braces that do not enclose
/// a non-empty run of letters, digits or underscores are literal text.
pub fn render(template: &str, bindings: &BTreeMap<String, String>) -> Result<String, GatewayError> {
    let mut out = String::with_capacity(template.len());
    let mut missing = None;
    scan(template, |tok| match tok {
        Token::Literal(s) => out.push_str(s),
        Token::Placeholder(name) => match bindings.get(name) {
            Some(v) => out.push_str(v),
            None => {
                missing.get_or_insert_with(|| name.to_string());
            }
        },
    });
    match missing {
        Some(name) => Err(GatewayError::MissingBinding(name)),
        None => Ok(out),
    }
}

/// Renders a registered template.
pub fn render_template(id: InstructionId, bindings: &BTreeMap<String, String>) -> Result<String, GatewayError> {
    render(id.template(), bindings)
}

/// Renders a template whose placeholders are `{0}`, `{1}`, ...
pub fn render_positional(id: InstructionId, args: &[&str]) -> Result<String, GatewayError> {
    let bindings = args.iter().enumerate().map(|(i, a)| (i.to_string(), a.to_string())).collect();
    render_template(id, &bindings)
}

enum Token<'a> {
    Literal(&'a str),
    Placeholder(&'a str),
}

fn scan<'a>(template: &'a str, mut emit: impl FnMut(Token<'a>)) {
    let bytes = template.as_bytes();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let name_len = bytes[i + 1..].iter().take_while(|b| b.is_ascii_alphanumeric() || **b == b'_').count();
            let close = i + 1 + name_len;
            if name_len > 0 && bytes.get(close) == Some(&b'}') {
                emit(Token::Literal(&template[start..i]));
                emit(Token::Placeholder(&template[i + 1..close]));
                i = close + 1;
                start = i;
                continue;
            }
        }
        i += 1;
    }
    emit(Token::Literal(&template[start..]));
}
