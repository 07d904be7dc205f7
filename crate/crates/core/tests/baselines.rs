mod common;

use serde_json::json;
use vgs_core::baselines::{execute, Baselines, PageInput, STEP_BACK_VALUE_LIMIT};
use vgs_core::config::RunConfig;
use vgs_core::dom::Document;
use vgs_core::gateway::{Gateway, InstructionId, MockBackend, TranscriptEntry};
use vgs_core::html_tools::simplify;
use vgs_core::wrapper::{Clock, ExtractionQuery, Stage, Status};

use common::bookstore_dir;
use InstructionId::*;

fn pages() -> Vec<PageInput> {
    (1..=3)
        .map(|i| {
            let path = bookstore_dir().join(format!("pages/book{i}.html"));
            let url = url::Url::from_file_path(&path).unwrap().to_string();
            PageInput::new(&url, simplify(&std::fs::read_to_string(&path).unwrap()))
        })
        .collect()
}

fn gateway(script: &[(InstructionId, serde_json::Value)]) -> Gateway {
    let entries = script
        .iter()
        .map(|(id, v)| TranscriptEntry { instruction_id: *id, response_text: v.to_string(), sample: None })
        .collect();
    Gateway::new(Box::new(MockBackend::new(entries)))
}

fn query() -> ExtractionQuery {
    ExtractionQuery { id: "q".into(), text: "Extract the book title and price.".into() }
}

fn title_price(title_xpath: &str) -> serde_json::Value {
    json!({
        "thought": "title and price sit in the product block",
        "value": {"title": ["The Silent Orchard"], "price": ["£23.50"]},
        "xpath": {"title": [title_xpath], "price": ["//p[@class=\"price\"]"]}
    })
}

#[test]
fn cot_is_one_generation_and_one_synthesis() {
    let gw = gateway(&[(CotTopDown, title_price("//h1")), (CotSynthesis, json!({"thought": "", "number": "0"}))]);
    let config = RunConfig::default();
    let clock = Clock::frozen();
    let w = Baselines { gateway: &gw, config: &config, clock: &clock }.cot_wrapper(&query(), &pages()).unwrap();
    assert_eq!(gw.call_count(CotTopDown), 1);
    assert_eq!(gw.call_count(CotSynthesis), 1);
    assert_eq!(gw.calls().len(), 2);
    assert_eq!(w.entries["title"], "//h1");
    assert!(!w.has_failures());
    let calls = gw.calls();
    assert!(!calls[0].prompt.contains("<script") && !calls[0].prompt.contains("window.analytics"));
    assert!(!calls[0].prompt.contains("Salt and Cinder</h1>"), "generation sees the first page only");
    let synth = &calls[1].prompt;
    assert!(synth.contains("Action sequence 0:"));
    assert!(synth.contains("Extracted results on webpage 3: {\"price\":[\"£9.25\"],\"title\":[\"Salt and Cinder\"]}"));
}

#[test]
fn reflexion_stops_on_consistent() {
    let gw = gateway(&[
        (ReflexionTopDown, title_price("//h1")),
        (ReflexionSelfReflection, json!({"thought": "", "consistent": "yes", "value": {}, "xpath": {}})),
        (ReflexionSelfReflection, json!({"consistent": "no"})),
        (ReflexionSynthesis, json!({"number": 0})),
    ]);
    let config = RunConfig::default();
    let clock = Clock::frozen();
    let w = Baselines { gateway: &gw, config: &config, clock: &clock }.reflexion_wrapper(&query(), &pages()).unwrap();
    assert_eq!(gw.call_count(ReflexionTopDown) + gw.call_count(ReflexionSelfReflection), 2);
    assert_eq!(gw.call_count(ReflexionSynthesis), 1);
    assert!(!w.has_failures());
    assert!(gw.calls()[1].prompt.contains("extracted results: {\"price\":[\"£23.50\"],\"title\":[\"The Silent Orchard\"]}"));
}

#[test]
fn reflexion_budget_bounds_calls() {
    let mut script = vec![(ReflexionTopDown, title_price("//h2"))];
    for i in 0..5 {
        script.push((ReflexionSelfReflection, json!({"consistent": "no", "value": {"title": ["x"], "price": ["y"]}, "xpath": {"title": [format!("//h1[{}]", i + 1)], "price": ["//p"]}})));
    }
    script.push((ReflexionSynthesis, json!({"number": 2})));
    let gw = gateway(&script);
    let config = RunConfig { reflexion_budget: 3, ..RunConfig::default() };
    let clock = Clock::frozen();
    let w = Baselines { gateway: &gw, config: &config, clock: &clock }.reflexion_wrapper(&query(), &pages()).unwrap();
    let generation_or_reflection = gw.call_count(ReflexionTopDown) + gw.call_count(ReflexionSelfReflection);
    assert_eq!(generation_or_reflection, 4);
    assert!(w.traces.iter().any(|t| t.stage == Stage::Reflection && t.status == Status::Failed && t.detail.contains("budget")));
    assert_eq!(w.entries["title"], "//h1[2]");
    let synth = gw.calls().last().unwrap().prompt.clone();
    assert!(synth.contains("Action sequence 3:") && !synth.contains("Action sequence 4:"));
}

#[test]
fn autoscraper_walk_is_ancestor_closed() {
    let values: Vec<String> = (0..12).map(|i| format!("value {i}")).collect();
    let mut script = vec![(
        AutoscraperTopDown,
        json!({"value": {"title": ["The Silent Orchard"], "misc": values}, "xpath": {"title": ["//h1"], "misc": ["//li"]}}),
    )];
    // body yes; nav no, product yes; six product children no.
    let judgements = ["yes", "no", "yes", "no", "no", "no", "no", "no", "no"];
    for j in judgements {
        script.push((AutoscraperStepBack, json!({"thought": "", "judgement": j})));
    }
    script.push((AutoscraperTopDown, title_price("//div[@class=\"product\"]/h1")));
    script.push((AutoscraperSynthesis, json!({"number": "1"})));
    let gw = gateway(&script);
    let config = RunConfig::default();
    let clock = Clock::frozen();
    let run = Baselines { gateway: &gw, config: &config, clock: &clock }.autoscraper_wrapper(&query(), &pages()).unwrap();

    assert_eq!(run.path, ["/html/body", "/html/body/div[2]"]);
    for pair in run.path.windows(2) {
        assert!(pair[1].starts_with(&format!("{}/", pair[0])), "{pair:?}");
    }
    assert_eq!(gw.call_count(AutoscraperStepBack), judgements.len());
    let calls = gw.calls();
    let shown = |n: usize| json!(values.iter().cloned().chain(["The Silent Orchard".to_string()]).take(n).collect::<Vec<_>>()).to_string();
    for c in calls.iter().filter(|c| c.instruction_id == AutoscraperStepBack) {
        assert!(c.prompt.contains(&shown(STEP_BACK_VALUE_LIMIT)));
        assert!(!c.prompt.contains(&shown(STEP_BACK_VALUE_LIMIT + 1)));
    }
    let regen = calls.iter().filter(|c| c.instruction_id == AutoscraperTopDown).nth(1).unwrap();
    assert!(regen.prompt.contains("<div class=\"product\">"));
    assert!(!regen.prompt.contains("Pagewise Books"), "regeneration sees the pruned subtree only");
    assert_eq!(run.wrapper.entries["title"], "//div[@class=\"product\"]/h1");
}

#[test]
fn autoscraper_root_rejection_is_a_dead_end() {
    let gw = gateway(&[
        (AutoscraperTopDown, title_price("//h1")),
        (AutoscraperStepBack, json!({"judgement": "no"})),
        (AutoscraperSynthesis, json!({"number": 0})),
    ]);
    let config = RunConfig::default();
    let clock = Clock::frozen();
    let run = Baselines { gateway: &gw, config: &config, clock: &clock }.autoscraper_wrapper(&query(), &pages()).unwrap();
    assert!(run.path.is_empty());
    assert_eq!(gw.call_count(AutoscraperTopDown), 1);
    assert!(run.wrapper.traces.iter().any(|t| t.stage == Stage::StepBack && t.status == Status::Failed));
    assert_eq!(run.wrapper.entries.len(), 2);
}

#[test]
fn invalid_xpaths_are_not_kept() {
    let gw = gateway(&[
        (CotTopDown, json!({"value": {"title": ["A"], "price": ["1"]}, "xpath": {"title": ["//h1[["], "price": ["//p"]}})),
        (CotSynthesis, json!({"number": 7})),
    ]);
    let config = RunConfig::default();
    let clock = Clock::frozen();
    let w = Baselines { gateway: &gw, config: &config, clock: &clock }.cot_wrapper(&query(), &pages()).unwrap();
    assert_eq!(w.entries.keys().collect::<Vec<_>>(), ["price"]);
    assert!(w.traces.iter().any(|t| t.stage == Stage::Synthesis && t.status == Status::Failed));
}

#[test]
fn direct_extractor_returns_values() {
    let gw = gateway(&[(LlmExtractor, json!({"title": ["The Silent Orchard"], "price": "£23.50"}))]);
    let config = RunConfig::default();
    let clock = Clock::frozen();
    let p = pages();
    let r = Baselines { gateway: &gw, config: &config, clock: &clock }.direct_extract(&query(), &p[0]).unwrap();
    assert_eq!(r.values["title"], ["The Silent Orchard"]);
    assert_eq!(r.values["price"], ["£23.50"]);
    assert_eq!(r.latency_ms, 0);
}

#[test]
fn execute_runs_each_xpath() {
    let doc = Document::parse(&pages()[1].html.content);
    let seq = vgs_core::baselines::Sequence {
        xpaths: [("genre".to_string(), vec!["//ul/li".to_string()])].into(),
        values: Default::default(),
    };
    assert_eq!(execute(&seq, &doc)["genre"], ["History", "Economics", "Nonfiction"]);
}
