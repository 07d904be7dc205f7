mod common;

use serde_json::json;
use vgs_core::browser::{PageSession, DEFAULT_VIEWPORT};
use vgs_core::config::RunConfig;
use vgs_core::gateway::{Gateway, InstructionId, MockBackend, Transcript, TranscriptEntry};
use vgs_core::pipeline::{AttributeSpec, PipelineError, Vgs};
use vgs_core::wrapper::{Clock, ExtractionQuery, Stage, Status};

use common::{bookstore_dir, vgs_transcript};
use InstructionId::*;

fn book_url(i: usize) -> String {
    url::Url::from_file_path(bookstore_dir().join(format!("pages/book{i}.html"))).unwrap().to_string()
}

fn gateway(script: &[(InstructionId, serde_json::Value)]) -> Gateway {
    let entries = script
        .iter()
        .map(|(id, v)| TranscriptEntry { instruction_id: *id, response_text: v.to_string(), sample: None })
        .collect();
    Gateway::new(Box::new(MockBackend::new(entries)))
}

fn q(text: &str) -> ExtractionQuery {
    ExtractionQuery { id: "q".into(), text: text.into() }
}

fn one_attribute(name: &str, scan: serde_json::Value, selection: serde_json::Value, xpaths: &[&str]) -> Vec<(InstructionId, serde_json::Value)> {
    let mut s = vec![
        (VgsAttributeIdentification, json!({"attributes": [name]})),
        (VgsVisualGrounding, json!({"matching_region": "region_0"})),
        (VgsElementScanning, scan),
        (VgsElementSelection, selection),
    ];
    for x in xpaths {
        s.push((VgsXpathSynthesis, json!({"xpath": x})));
    }
    s
}

#[test]
fn bundled_sample_runs_stage_by_stage() {
    let transcript = Transcript::load(&vgs_transcript()).unwrap();
    let gw = Gateway::new(Box::new(MockBackend::new(transcript.for_sample("b-ii-2"))));
    let config = RunConfig::default();
    let clock = Clock::frozen();
    let w = Vgs { gateway: &gw, config: &config, clock: &clock }
        .run(&q("Who wrote the book, and where is the author's page?"), &book_url(1))
        .unwrap();
    assert_eq!(w.entries["author link"], "//a[@class=\"author\"]/@href");
    assert_eq!(w.entries["author name"], "//p[@class=\"byline\"]/a[@class=\"author\"]");
    assert_eq!(w.segment_distance, Some(2));
    assert!(!w.has_failures());
    assert_eq!(gw.call_count(VgsAttributeIdentification), 1);
    for id in [VgsVisualGrounding, VgsElementScanning, VgsElementSelection, VgsXpathSynthesis] {
        assert_eq!(gw.call_count(id), 2, "{id}");
    }
    let calls = gw.calls();
    assert!(calls.iter().filter(|c| c.instruction_id != VgsAttributeIdentification).all(|c| c.image_count == 1));
    assert!(calls[0].prompt.ends_with("\n\nUser request: Who wrote the book, and where is the author's page?\n"));
    let synth = calls.iter().find(|c| c.instruction_id == VgsXpathSynthesis).unwrap();
    assert!(synth.prompt.contains("Segment 1:") && synth.prompt.contains("Mara Quill"));
}

#[test]
fn synthesis_retries_once_with_feedback() {
    let script = one_attribute("price", json!({"texts": ["£23.50"], "tags": []}), json!([1]), &["//h5", "//p[@class='price']"]);
    let gw = gateway(&script);
    let config = RunConfig::default();
    let clock = Clock::frozen();
    let w = Vgs { gateway: &gw, config: &config, clock: &clock }.run(&q("price"), &book_url(1)).unwrap();
    assert_eq!(w.entries["price"], "//p[@class='price']");
    let retry = gw.calls().into_iter().filter(|c| c.instruction_id == VgsXpathSynthesis).nth(1).unwrap();
    assert!(retry.prompt.contains("matches nothing") && retry.prompt.contains("//h5"));
}

#[test]
fn exhausted_synthesis_keeps_partial_wrapper() {
    let script = one_attribute("price", json!({"texts": ["£23.50"]}), json!([1]), &["//h5", "//h6[", "//p"]);
    let gw = gateway(&script);
    let config = RunConfig::default();
    let clock = Clock::frozen();
    let vgs = Vgs { gateway: &gw, config: &config, clock: &clock };
    match vgs.run(&q("price"), &book_url(1)) {
        Err(PipelineError::AllAttributesFailed(w)) => {
            assert!(w.entries.is_empty());
            let last = w.traces.last().unwrap();
            assert_eq!((last.stage, last.status), (Stage::XpathSynthesis, Status::Failed));
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(gw.call_count(VgsXpathSynthesis), 2);
}

#[test]
fn unknown_region_fails_only_that_attribute() {
    let gw = gateway(&[
        (VgsAttributeIdentification, json!({"attributes": ["title", "price"]})),
        (VgsVisualGrounding, json!({"matching_region": "region_9"})),
        (VgsVisualGrounding, json!({"matching_region": "Region 0"})),
        (VgsElementScanning, json!({"texts": ["£23.50"]})),
        (VgsElementSelection, json!(["1"])),
        (VgsXpathSynthesis, json!({"xpath": "//p[@class='price']"})),
    ]);
    let config = RunConfig::default();
    let clock = Clock::frozen();
    let w = Vgs { gateway: &gw, config: &config, clock: &clock }.run(&q("title and price"), &book_url(1)).unwrap();
    assert_eq!(w.entries.keys().collect::<Vec<_>>(), ["price"]);
    let t = w.traces.iter().find(|t| t.attribute.as_deref() == Some("title")).unwrap();
    assert_eq!((t.stage, t.status), (Stage::Grounding, Status::Failed));
    assert!(t.detail.contains("region_9"));
}

#[test]
fn candidates_beyond_the_cap_are_dropped() {
    let script = one_attribute("author link", json!({"texts": [], "tags": ["a"]}), json!([2, 3]), &["//a[@class='author']"]);
    let gw = gateway(&script);
    let config = RunConfig { candidate_cap: 3, ..RunConfig::default() };
    let clock = Clock::frozen();
    let w = Vgs { gateway: &gw, config: &config, clock: &clock }.run(&q("author link"), &book_url(1)).unwrap();
    assert_eq!(w.entries["author link"], "//a[@class='author']/@href");
    let pin = w.traces.iter().find(|t| t.stage == Stage::Pinpointing).unwrap();
    assert_eq!(pin.detail, "selected [2, 3] of 3 candidates; 4 candidates beyond the cap were dropped");
}

#[test]
fn pinpoint_filters_selection_to_offered_labels() {
    let gw = gateway(&[(VgsElementSelection, json!([99, 3, "x"]))]);
    let config = RunConfig::default();
    let clock = Clock::frozen();
    let vgs = Vgs { gateway: &gw, config: &config, clock: &clock };
    let mut session = PageSession::load(&book_url(1), DEFAULT_VIEWPORT).unwrap();
    let regions = session.tile_regions().unwrap();
    let attr = AttributeSpec::new("related book link");
    let scan = vgs_core::pipeline::ScanResult { texts: vec![], tags: vec!["a".into()] };
    let mut marker = vgs_core::marker::HostMarker::new();
    let pin = vgs.pinpoint(&attr, &regions[0], &scan, &mut session, &mut marker).unwrap();
    assert_eq!(pin.offered.len(), 7);
    assert_eq!(pin.selected.iter().map(|c| c.label).collect::<Vec<_>>(), [3]);
    assert_eq!(pin.marked_region.candidates, pin.selected);
    assert!(!marker.has_marks());
}

#[test]
fn scan_repairs_modality() {
    let gw = gateway(&[
        (VgsElementScanning, json!({"texts": ["Mara Quill"], "tags": ["A"]})),
        (VgsElementScanning, json!({"texts": ["Mara Quill"], "tags": ["A"]})),
        (VgsElementScanning, json!({"texts": [], "tags": []})),
    ]);
    let config = RunConfig::default();
    let clock = Clock::frozen();
    let vgs = Vgs { gateway: &gw, config: &config, clock: &clock };
    let mut session = PageSession::load(&book_url(1), DEFAULT_VIEWPORT).unwrap();
    let region = session.tile_regions().unwrap().remove(0);
    let text = vgs.scan_region(&AttributeSpec::new("author"), &region).unwrap();
    assert_eq!((text.texts.len(), text.tags.len()), (1, 0));
    let link = vgs.scan_region(&AttributeSpec::new("author link"), &region).unwrap();
    assert_eq!(link.texts.len(), 0);
    assert_eq!(link.tags, ["a"]);
    assert!(matches!(vgs.scan_region(&AttributeSpec::new("author"), &region), Err(PipelineError::EmptyScan)));
}

#[test]
fn tall_pages_ground_into_later_regions() {
    let mut html = String::from("<html><body>");
    for i in 0..120 {
        html.push_str(&format!("<p>filler line {i}</p>"));
    }
    html.push_str("<p class=\"target\">Deep value</p></body></html>");
    let mut session = PageSession::from_html(&html, "file:///tall.html", DEFAULT_VIEWPORT).unwrap();
    assert_eq!(session.page_height(), 121.0 * 20.0);
    let gw = gateway(&[
        (VgsAttributeIdentification, json!({"attributes": ["deep value"]})),
        (VgsVisualGrounding, json!({"matching_region": 2})),
        (VgsElementScanning, json!({"texts": ["Deep value"]})),
        (VgsElementSelection, json!([1])),
        (VgsXpathSynthesis, json!({"xpath": "//p[@class='target']"})),
    ]);
    let config = RunConfig::default();
    let clock = Clock::frozen();
    let w = Vgs { gateway: &gw, config: &config, clock: &clock }.run_session(&q("deep value"), &mut session).unwrap();
    assert_eq!(w.entries["deep value"], "//p[@class='target']");
    let grounding = gw.calls().into_iter().find(|c| c.instruction_id == VgsVisualGrounding).unwrap();
    assert_eq!(grounding.image_count, 3);
    assert!(grounding.prompt.contains("region_0, region_1, region_2"));
}

#[test]
fn empty_query_is_rejected() {
    let gw = gateway(&[]);
    let config = RunConfig::default();
    let clock = Clock::frozen();
    let vgs = Vgs { gateway: &gw, config: &config, clock: &clock };
    assert!(matches!(vgs.identify_attributes("  "), Err(PipelineError::EmptyDecomposition)));
    assert_eq!(gw.calls().len(), 0);
}
