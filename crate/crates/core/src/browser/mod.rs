//! Page rendering sessions: loading, tiling, screenshots, DOM snapshots,
//! XPath evaluation and hit-testing.
//!
//! All geometry is in full-page coordinates.

mod cdp;
pub mod layout;
pub mod raster;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use image::RgbaImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::dom::{Document, NodeId};
use crate::html_tools::absolute_xpath;
use crate::xpath::{evaluate_strings, XPathError};

pub use cdp::{find_chrome, ChromeEngine};
use layout::Layout;

pub const DEFAULT_VIEWPORT: Viewport = Viewport { width: 1280, height: 1100 };
pub const LOAD_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BrowserError {
    #[error("navigation to {url} failed: {reason}")]
    NavigationFailed { url: String, reason: String },
    #[error("page did not finish rendering: {0}")]
    RenderTimeout(String),
    #[error("screenshot capture failed: {0}")]
    CaptureFailed(String),
    #[error("session is closed")]
    SessionClosed,
    #[error("invalid XPath: {0}")]
    XPathSyntax(String),
    #[error("point ({x}, {y}) is outside the page")]
    OutOfBounds { x: f64, y: f64 },
    #[error("no element at ({x}, {y})")]
    NoElement { x: f64, y: f64 },
    #[error("invalid viewport {0:?}, expected WIDTHxHEIGHT")]
    InvalidViewport(String),
    #[error("browser protocol error: {0}")]
    Protocol(String),
}

impl From<XPathError> for BrowserError {
    fn from(e: XPathError) -> Self {
        BrowserError::XPathSyntax(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Viewport {
    pub width: u32,
    pub height: u32,
}

impl Default for Viewport {
    fn default() -> Self {
        DEFAULT_VIEWPORT
    }
}

impl FromStr for Viewport {
    type Err = BrowserError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || BrowserError::InvalidViewport(s.to_string());
        let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
        let width: u32 = w.trim().parse().map_err(|_| bad())?;
        let height: u32 = h.trim().parse().map_err(|_| bad())?;
        if width == 0 || height == 0 {
            return Err(bad());
        }
        Ok(Viewport { width, height })
    }
}

impl fmt::Display for Viewport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Rect {
        Rect { x, y, w, h }
    }

    pub fn contains(&self, px: f64, py: f64) -> bool {
        px >= self.x && px < self.x + self.w && py >= self.y && py < self.y + self.h
    }

    /// True when the interiors overlap.
    pub fn intersects(&self, o: &Rect) -> bool {
        self.x < o.x + o.w && o.x < self.x + self.w && self.y < o.y + o.h && o.y < self.y + self.h
    }

    pub fn union(self, o: Rect) -> Rect {
        let x = self.x.min(o.x);
        let y = self.y.min(o.y);
        Rect::new(x, y, (self.x + self.w).max(o.x + o.w) - x, (self.y + self.h).max(o.y + o.h) - y)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementRef {
    pub absolute_xpath: String,
    pub tag: String,
    pub client_rect: Rect,
}

/// Element geometry as reported by a rendering engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementGeometry {
    pub xpath: String,
    pub tag: String,
    pub rect: Rect,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub index: usize,
    pub y_offset: u64,
    pub height: u64,
    pub width: u64,
    /// PNG bytes.
    pub screenshot: Option<Vec<u8>>,
}

impl Region {
    pub fn id(&self) -> String {
        format!("region_{}", self.index)
    }

    pub fn rect(&self) -> Rect {
        Rect::new(0.0, self.y_offset as f64, self.width as f64, self.height as f64)
    }
}

/// Splits `[0, page_height)` into disjoint viewport-sized tiles; the last
/// tile holds the remainder.
pub fn tile(page_height: u64, viewport: Viewport) -> Vec<Region> {
    let vh = viewport.height as u64;
    let count = page_height.div_ceil(vh);
    (0..count)
        .map(|i| Region {
            index: i as usize,
            y_offset: i * vh,
            height: vh.min(page_height - i * vh),
            width: viewport.width as u64,
            screenshot: None,
        })
        .collect()
}

/// Backend that renders a page and answers geometry queries.
pub trait RenderEngine: Send {
    fn snapshot(&mut self) -> Result<String, BrowserError>;
    fn page_height(&mut self) -> Result<f64, BrowserError>;
    fn geometry(&mut self) -> Result<Vec<ElementGeometry>, BrowserError>;
    /// Absolute XPath of the element at a page point, if any.
    fn hit_test(&mut self, x: f64, y: f64) -> Result<Option<String>, BrowserError>;
    fn capture(&mut self, y_offset: f64, width: u32, height: u32) -> Result<RgbaImage, BrowserError>;
    fn close(&mut self) {}
}

/// Script-free engine with the deterministic block/inline layout.
pub struct StaticEngine {
    doc: Document,
    layout: Layout,
}

impl StaticEngine {
    pub fn new(html: &str, viewport: Viewport) -> StaticEngine {
        let doc = Document::parse(html);
        let layout = Layout::compute(&doc, viewport.width as f64);
        StaticEngine { doc, layout }
    }
}

impl RenderEngine for StaticEngine {
    fn snapshot(&mut self) -> Result<String, BrowserError> {
        Ok(self.doc.to_html())
    }

    fn page_height(&mut self) -> Result<f64, BrowserError> {
        Ok(self.layout.page_height)
    }

    fn geometry(&mut self) -> Result<Vec<ElementGeometry>, BrowserError> {
        let mut out = Vec::new();
        for id in self.doc.all_elements() {
            if let (Some(rect), Ok(xpath)) = (self.layout.rect(id), absolute_xpath(&self.doc, id)) {
                out.push(ElementGeometry { xpath, tag: self.doc.tag(id).unwrap_or_default().to_string(), rect });
            }
        }
        Ok(out)
    }

    fn hit_test(&mut self, x: f64, y: f64) -> Result<Option<String>, BrowserError> {
        Ok(self.layout.hit_test(&self.doc, x, y).and_then(|id| absolute_xpath(&self.doc, id).ok()))
    }

    fn capture(&mut self, y_offset: f64, width: u32, height: u32) -> Result<RgbaImage, BrowserError> {
        if width == 0 || height == 0 {
            return Err(BrowserError::CaptureFailed(format!("empty clip {width}x{height}")));
        }
        Ok(raster::render(&self.layout, y_offset, width, height))
    }
}

/// Which engine [`PageSession::load`] uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    #[default]
    Static,
    Chrome,
}

impl FromStr for EngineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "static" => Ok(EngineKind::Static),
            "chrome" => Ok(EngineKind::Chrome),
            _ => Err(format!("unknown engine {s:?}, expected static or chrome")),
        }
    }
}

/// Fetches the raw bytes behind a `file:` or `http(s):` URL.
pub fn fetch(url: &Url) -> Result<String, BrowserError> {
    let fail = |reason: String| BrowserError::NavigationFailed { url: url.to_string(), reason };
    match url.scheme() {
        "file" => {
            let path = url.to_file_path().map_err(|_| fail("not a local path".into()))?;
            let bytes = std::fs::read(&path).map_err(|e| fail(e.to_string()))?;
            Ok(String::from_utf8_lossy(&bytes).into_owned())
        }
        "http" | "https" => {
            let client = reqwest::blocking::Client::builder()
                .timeout(LOAD_TIMEOUT)
                .build()
                .map_err(|e| fail(e.to_string()))?;
            let resp = client.get(url.clone()).send().map_err(|e| {
                if e.is_timeout() {
                    BrowserError::RenderTimeout(e.to_string())
                } else {
                    fail(e.to_string())
                }
            })?;
            if resp.status().as_u16() >= 400 {
                return Err(fail(format!("HTTP {}", resp.status())));
            }
            let bytes = resp.bytes().map_err(|e| fail(e.to_string()))?;
            Ok(String::from_utf8_lossy(&bytes).into_owned())
        }
        other => Err(fail(format!("unsupported scheme {other:?}"))),
    }
}

pub fn parse_url(url: &str) -> Result<Url, BrowserError> {
    Url::parse(url).map_err(|e| BrowserError::NavigationFailed { url: url.to_string(), reason: e.to_string() })
}

pub struct PageSession {
    url: String,
    viewport: Viewport,
    engine: Box<dyn RenderEngine>,
    dom: Document,
    rects: Vec<Option<Rect>>,
    by_xpath: HashMap<String, NodeId>,
    page_height: f64,
    closed: bool,
}

impl PageSession {
    /// Loads a page with the static engine.
    pub fn load(url: &str, viewport: Viewport) -> Result<PageSession, BrowserError> {
        Self::load_with(url, viewport, EngineKind::Static)
    }

    pub fn load_with(url: &str, viewport: Viewport, engine: EngineKind) -> Result<PageSession, BrowserError> {
        let parsed = parse_url(url)?;
        match engine {
            EngineKind::Static => {
                let html = fetch(&parsed)?;
                Self::from_engine(url, viewport, Box::new(StaticEngine::new(&html, viewport)))
            }
            EngineKind::Chrome => {
                let chrome = ChromeEngine::launch(&parsed, viewport)?;
                Self::from_engine(url, viewport, Box::new(chrome))
            }
        }
    }

    /// Session over in-memory HTML with the static engine.
    pub fn from_html(html: &str, url: &str, viewport: Viewport) -> Result<PageSession, BrowserError> {
        Self::from_engine(url, viewport, Box::new(StaticEngine::new(html, viewport)))
    }

    pub fn from_engine(url: &str, viewport: Viewport, mut engine: Box<dyn RenderEngine>) -> Result<PageSession, BrowserError> {
        let snapshot = engine.snapshot()?;
        let page_height = engine.page_height()?.max(1.0).ceil();
        let mut session = PageSession {
            url: url.to_string(),
            viewport,
            engine,
            dom: Document::parse(&snapshot),
            rects: Vec::new(),
            by_xpath: HashMap::new(),
            page_height,
            closed: false,
        };
        session.refresh_geometry()?;
        Ok(session)
    }

    fn refresh_geometry(&mut self) -> Result<(), BrowserError> {
        self.by_xpath.clear();
        for id in self.dom.all_elements() {
            if let Ok(x) = absolute_xpath(&self.dom, id) {
                self.by_xpath.insert(x, id);
            }
        }
        self.rects = vec![None; self.dom.len()];
        for g in self.engine.geometry()? {
            if let Some(&id) = self.by_xpath.get(&g.xpath) {
                self.rects[id.0] = Some(g.rect);
            }
        }
        Ok(())
    }

    fn check_open(&self) -> Result<(), BrowserError> {
        if self.closed {
            Err(BrowserError::SessionClosed)
        } else {
            Ok(())
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn viewport(&self) -> Viewport {
        self.viewport
    }

    pub fn page_height(&self) -> f64 {
        self.page_height
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn document(&self) -> Result<&Document, BrowserError> {
        self.check_open()?;
        Ok(&self.dom)
    }

    pub fn dom_snapshot(&mut self) -> Result<String, BrowserError> {
        self.check_open()?;
        self.engine.snapshot()
    }

    pub fn evaluate_xpath(&self, xpath: &str) -> Result<Vec<String>, BrowserError> {
        self.check_open()?;
        Ok(evaluate_strings(&self.dom, xpath)?)
    }

    /// Rendered border box of an element, if it has one.
    pub fn rect(&self, id: NodeId) -> Option<Rect> {
        self.rects.get(id.0).copied().flatten()
    }

    pub fn is_visible(&self, id: NodeId) -> bool {
        self.rect(id).is_some_and(|r| r.w > 0.0 && r.h > 0.0)
    }

    pub fn node_for_xpath(&self, xpath: &str) -> Option<NodeId> {
        self.by_xpath.get(xpath).copied()
    }

    pub fn element_ref(&self, id: NodeId) -> Result<ElementRef, BrowserError> {
        self.check_open()?;
        let xpath = absolute_xpath(&self.dom, id).map_err(|e| BrowserError::Protocol(e.to_string()))?;
        Ok(ElementRef {
            absolute_xpath: xpath,
            tag: self.dom.tag(id).unwrap_or_default().to_string(),
            client_rect: self.rect(id).unwrap_or(Rect::new(0.0, 0.0, 0.0, 0.0)),
        })
    }

    pub fn element_at(&mut self, x: f64, y: f64) -> Result<ElementRef, BrowserError> {
        self.check_open()?;
        if !(x >= 0.0 && x < self.viewport.width as f64 && y >= 0.0 && y < self.page_height) {
            return Err(BrowserError::OutOfBounds { x, y });
        }
        let xpath = self.engine.hit_test(x, y)?.ok_or(BrowserError::NoElement { x, y })?;
        let id = self.node_for_xpath(&xpath).ok_or(BrowserError::NoElement { x, y })?;
        self.element_ref(id)
    }

    pub fn regions(&self) -> Vec<Region> {
        tile(self.page_height as u64, self.viewport)
    }

    pub fn capture(&mut self, region: &Region) -> Result<RgbaImage, BrowserError> {
        self.check_open()?;
        self.engine.capture(region.y_offset as f64, region.width as u32, region.height as u32)
    }

    /// Tiles the page and captures every region. If the page grew while
    /// capturing, it is re-measured once and the new tail is captured too.
    pub fn tile_regions(&mut self) -> Result<Vec<Region>, BrowserError> {
        self.check_open()?;
        let mut regions = self.regions();
        for r in regions.iter_mut() {
            let img = self.capture(r)?;
            r.screenshot = Some(raster::encode_png(&img).map_err(|e| BrowserError::CaptureFailed(e.to_string()))?);
        }
        let remeasured = self.engine.page_height()?.max(1.0).ceil();
        if remeasured > self.page_height {
            self.page_height = remeasured;
            let snapshot = self.engine.snapshot()?;
            self.dom = Document::parse(&snapshot);
            self.refresh_geometry()?;
            let mut all = self.regions();
            let done = regions.len();
            for r in all.iter_mut() {
                if r.index + 1 < done {
                    r.screenshot = regions[r.index].screenshot.take();
                } else {
                    let img = self.capture(r)?;
                    r.screenshot = Some(raster::encode_png(&img).map_err(|e| BrowserError::CaptureFailed(e.to_string()))?);
                }
            }
            regions = all;
        }
        Ok(regions)
    }

    pub fn close(&mut self) {
        if !self.closed {
            self.engine.close();
            self.closed = true;
        }
    }
}

impl Drop for PageSession {
    fn drop(&mut self) {
        self.close();
    }
}
