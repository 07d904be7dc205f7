//! Set-of-Mark candidate enumeration and label drawing.
//!
//! [`HostMarker`] walks the parsed snapshot on the host and draws marks
//! straight onto the captured raster, so the page DOM is never touched.
//! [`MarkPayload`] is the JSON record exchanged with an in-page marking
//! script.

use std::collections::HashSet;

use image::{Rgba, RgbaImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::browser::raster::{self, draw_digits, fill, stroke, text_width, GLYPH_HEIGHT};
use crate::browser::{BrowserError, ElementRef, PageSession, Rect, Region};
use crate::dom::{normalize_whitespace, NodeId};

pub const PALETTE: [Rgba<u8>; 8] = [
    Rgba([230, 25, 75, 255]),
    Rgba([60, 140, 60, 255]),
    Rgba([0, 92, 230, 255]),
    Rgba([245, 130, 48, 255]),
    Rgba([145, 30, 180, 255]),
    Rgba([0, 128, 128, 255]),
    Rgba([170, 110, 40, 255]),
    Rgba([128, 0, 0, 255]),
];
pub const BORDER_WIDTH: u32 = 2;
const CHIP_PAD: u32 = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarkerError {
    #[error("marking script could not run: {0}")]
    InjectionFailed(String),
    #[error("capture failed: {0}")]
    CaptureFailed(String),
    #[error("no candidates to mark")]
    NoCandidates,
    #[error("query list is empty")]
    EmptyQuery,
    #[error("invalid marker payload: {0}")]
    InvalidPayload(String),
}

impl From<BrowserError> for MarkerError {
    fn from(e: BrowserError) -> Self {
        match e {
            BrowserError::CaptureFailed(m) => MarkerError::CaptureFailed(m),
            other => MarkerError::InjectionFailed(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateKind {
    TextMatch,
    TagMatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub label: u32,
    pub element: ElementRef,
    pub rect: Rect,
    pub kind: CandidateKind,
}

/// One marked element as reported by a marking script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkPayload {
    pub label: u32,
    pub xpath: String,
    pub rect: Rect,
    pub tag: String,
}

impl Candidate {
    pub fn to_payload(&self) -> MarkPayload {
        MarkPayload {
            label: self.label,
            xpath: self.element.absolute_xpath.clone(),
            rect: self.rect,
            tag: self.element.tag.clone(),
        }
    }
}

/// Decodes a script response into candidates. Labels must run 1..=n and
/// every xpath must name an element of the session's snapshot.
pub fn decode_payloads(session: &PageSession, json: &str, kind: CandidateKind) -> Result<Vec<Candidate>, MarkerError> {
    let payloads: Vec<MarkPayload> = serde_json::from_str(json).map_err(|e| MarkerError::InvalidPayload(e.to_string()))?;
    let mut out = Vec::with_capacity(payloads.len());
    for (i, p) in payloads.into_iter().enumerate() {
        if p.label != i as u32 + 1 {
            return Err(MarkerError::InvalidPayload(format!("label {} at position {}", p.label, i + 1)));
        }
        let node = session
            .node_for_xpath(&p.xpath)
            .ok_or_else(|| MarkerError::InvalidPayload(format!("{} does not resolve", p.xpath)))?;
        let mut element = session.element_ref(node)?;
        if element.tag != p.tag {
            return Err(MarkerError::InvalidPayload(format!("{} is a {}, not a {}", p.xpath, element.tag, p.tag)));
        }
        element.client_rect = p.rect;
        out.push(Candidate { label: p.label, element, rect: p.rect, kind });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkedScreenshot {
    pub region_index: usize,
    pub raster: RgbaImage,
    pub candidates: Vec<Candidate>,
    /// Label chip boxes in region coordinates, parallel to `candidates`.
    pub chips: Vec<Rect>,
}

impl MarkedScreenshot {
    pub fn png(&self) -> Result<Vec<u8>, MarkerError> {
        raster::encode_png(&self.raster).map_err(|e| MarkerError::CaptureFailed(e.to_string()))
    }
}

pub trait Marker {
    fn enumerate_by_tag(&mut self, session: &PageSession, region: &Region, tags: &[String]) -> Result<Vec<Candidate>, MarkerError>;
    fn enumerate_by_text(&mut self, session: &PageSession, region: &Region, texts: &[String]) -> Result<Vec<Candidate>, MarkerError>;
    fn apply_marks(&mut self, session: &mut PageSession, region: &Region, candidates: &[Candidate]) -> Result<MarkedScreenshot, MarkerError>;
    fn clear_marks(&mut self, session: &mut PageSession) -> Result<(), MarkerError>;
}

/// Marker that reads geometry from the host-side DOM walk.
#[derive(Debug, Default)]
pub struct HostMarker {
    marked: bool,
}

impl HostMarker {
    pub fn new() -> Self {
        HostMarker::default()
    }

    pub fn has_marks(&self) -> bool {
        self.marked
    }
}

fn in_region(session: &PageSession, id: NodeId, region: &Region) -> Option<Rect> {
    session.rect(id).filter(|r| r.w > 0.0 && r.h > 0.0 && r.intersects(&region.rect()))
}

fn label_all(session: &PageSession, ids: Vec<(NodeId, Rect)>, kind: CandidateKind) -> Result<Vec<Candidate>, MarkerError> {
    ids.into_iter()
        .enumerate()
        .map(|(i, (id, rect))| Ok(Candidate { label: i as u32 + 1, element: session.element_ref(id)?, rect, kind }))
        .collect()
}

impl Marker for HostMarker {
    fn enumerate_by_tag(&mut self, session: &PageSession, region: &Region, tags: &[String]) -> Result<Vec<Candidate>, MarkerError> {
        if tags.is_empty() {
            return Err(MarkerError::EmptyQuery);
        }
        let wanted: HashSet<String> = tags.iter().map(|t| t.trim().to_ascii_lowercase()).collect();
        let doc = session.document()?;
        let hits = doc
            .all_elements()
            .into_iter()
            .filter(|&id| doc.tag(id).is_some_and(|t| wanted.contains(t)))
            .filter_map(|id| in_region(session, id, region).map(|r| (id, r)))
            .collect();
        label_all(session, hits, CandidateKind::TagMatch)
    }

    fn enumerate_by_text(&mut self, session: &PageSession, region: &Region, texts: &[String]) -> Result<Vec<Candidate>, MarkerError> {
        if texts.is_empty() {
            return Err(MarkerError::EmptyQuery);
        }
        let queries: Vec<String> = texts.iter().map(|t| normalize_whitespace(t)).filter(|t| !t.is_empty()).collect();
        let doc = session.document()?;
        let elements = doc.all_elements();
        let mut matched = vec![false; doc.len()];
        for &id in &elements {
            if session.is_visible(id) {
                let text = normalize_whitespace(&doc.visible_text(id));
                matched[id.0] = queries.iter().any(|q| text.contains(q.as_str()));
            }
        }
        let mut has_matching_descendant = vec![false; doc.len()];
        for &id in &elements {
            if matched[id.0] {
                for a in doc.ancestors(id) {
                    has_matching_descendant[a.0] = true;
                }
            }
        }
        let hits = elements
            .into_iter()
            .filter(|id| matched[id.0] && !has_matching_descendant[id.0])
            .filter_map(|id| in_region(session, id, region).map(|r| (id, r)))
            .collect();
        label_all(session, hits, CandidateKind::TextMatch)
    }

    fn apply_marks(&mut self, session: &mut PageSession, region: &Region, candidates: &[Candidate]) -> Result<MarkedScreenshot, MarkerError> {
        if candidates.is_empty() {
            return Err(MarkerError::NoCandidates);
        }
        let mut img = session.capture(region)?;
        let chips = draw_marks(&mut img, region.y_offset as f64, candidates);
        self.marked = true;
        Ok(MarkedScreenshot { region_index: region.index, raster: img, candidates: candidates.to_vec(), chips })
    }

    fn clear_marks(&mut self, _session: &mut PageSession) -> Result<(), MarkerError> {
        self.marked = false;
        Ok(())
    }
}

pub fn color_for(label: u32) -> Rgba<u8> {
    PALETTE[(label.max(1) as usize - 1) % PALETTE.len()]
}

/// Draws a border and a top-right label chip per candidate. Chips that
/// would overlap an earlier chip move down until they fit.
pub fn draw_marks(img: &mut RgbaImage, y_offset: f64, candidates: &[Candidate]) -> Vec<Rect> {
    let mut chips: Vec<Rect> = Vec::new();
    for c in candidates {
        let color = color_for(c.label);
        let r = Rect::new(c.rect.x, c.rect.y - y_offset, c.rect.w, c.rect.h);
        stroke(img, r, BORDER_WIDTH, color);
        let digits = c.label.to_string();
        let cw = (text_width(&digits) + 2 * CHIP_PAD) as f64;
        let ch = (GLYPH_HEIGHT + 2 * CHIP_PAD) as f64;
        let max_x = (img.width() as f64 - cw).max(0.0);
        let mut chip = Rect::new((r.x + r.w - cw).clamp(0.0, max_x), r.y.max(0.0), cw, ch);
        while chips.iter().any(|p| p.intersects(&chip)) {
            chip.y += ch;
        }
        fill(img, chip, color);
        draw_digits(img, chip.x + CHIP_PAD as f64, chip.y + CHIP_PAD as f64, &digits, raster::WHITE);
        chips.push(chip);
    }
    chips
}
