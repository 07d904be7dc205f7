//! Deterministic block/inline layout used by the static engine.
//!
//! Text is monospaced at [`CHAR_WIDTH`] × [`LINE_HEIGHT`]. Pixel sizes from
//! inline `style` and `width`/`height` attributes are honored; everything
//! else is derived from content.

use crate::dom::{is_block_tag, Document, NodeData, NodeId};

use super::Rect;

pub const LINE_HEIGHT: f64 = 20.0;
pub const CHAR_WIDTH: f64 = 8.0;
const DEFAULT_IMAGE_SIZE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PaintKind {
    Text,
    LinkText,
    Image,
    Control,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Paint {
    pub rect: Rect,
    pub kind: PaintKind,
}

#[derive(Debug, Clone)]
pub struct Layout {
    /// Border box per node id; `None` for nodes that are not rendered.
    pub rects: Vec<Option<Rect>>,
    pub paints: Vec<Paint>,
    pub page_width: f64,
    pub page_height: f64,
}

impl Layout {
    pub fn compute(doc: &Document, page_width: f64) -> Layout {
        let mut cx = Ctx { doc, rects: vec![None; doc.len()], paints: Vec::new(), boxes: Vec::new() };
        let mut line = Line::new(0.0, 0.0, page_width);
        for &c in doc.children(doc.root()) {
            if doc.is_element(c) {
                cx.flow(c, &mut line, false);
            }
        }
        let bottom = line.bottom();
        Layout { rects: cx.rects, paints: cx.paints, page_width, page_height: bottom.ceil().max(1.0) }
    }

    pub fn rect(&self, id: NodeId) -> Option<Rect> {
        self.rects.get(id.0).copied().flatten()
    }

    /// Deepest rendered element whose box contains the point; later
    /// elements in document order win ties.
    pub fn hit_test(&self, doc: &Document, x: f64, y: f64) -> Option<NodeId> {
        let mut best: Option<(usize, NodeId)> = None;
        for id in doc.all_elements() {
            if let Some(r) = self.rect(id) {
                if r.w > 0.0 && r.h > 0.0 && r.contains(x, y) {
                    let depth = doc.depth(id);
                    if best.is_none_or(|(d, _)| depth >= d) {
                        best = Some((depth, id));
                    }
                }
            }
        }
        best.map(|(_, id)| id)
    }
}

struct Line {
    left: f64,
    right: f64,
    x: f64,
    y: f64,
    height: f64,
    empty: bool,
    /// A collapsible space precedes the next inline box.
    space: bool,
}

impl Line {
    fn new(left: f64, y: f64, width: f64) -> Line {
        Line { left, right: left + width, x: left, y, height: LINE_HEIGHT, empty: true, space: false }
    }

    fn newline(&mut self) {
        self.y += self.height;
        self.x = self.left;
        self.height = LINE_HEIGHT;
        self.empty = true;
        self.space = false;
    }

    fn break_if_used(&mut self) {
        if !self.empty {
            self.newline();
        }
    }

    fn bottom(&self) -> f64 {
        if self.empty {
            self.y
        } else {
            self.y + self.height
        }
    }

    /// Reserves an inline box of the given size and returns its origin.
    fn place(&mut self, w: f64, h: f64) -> (f64, f64) {
        let space = if self.space && !self.empty { CHAR_WIDTH } else { 0.0 };
        self.space = false;
        if !self.empty && self.x + space + w > self.right {
            self.newline();
        } else {
            self.x += space;
        }
        let at = (self.x, self.y);
        self.x += w;
        self.height = self.height.max(h);
        self.empty = false;
        at
    }
}

struct Ctx<'a> {
    doc: &'a Document,
    rects: Vec<Option<Rect>>,
    paints: Vec<Paint>,
    /// Every placed box, used to compute inline element extents.
    boxes: Vec<Rect>,
}

fn px(v: &str) -> Option<f64> {
    let v = v.trim();
    let n = v.strip_suffix("px").unwrap_or(v).trim();
    n.parse::<f64>().ok().filter(|n| n.is_finite() && *n >= 0.0)
}

impl Ctx<'_> {
    fn size_hint(&self, id: NodeId, prop: &str) -> Option<f64> {
        self.doc.style_property(id, prop).as_deref().and_then(px).or_else(|| self.doc.attr(id, prop).and_then(px))
    }

    fn is_block(&self, id: NodeId, tag: &str) -> bool {
        match self.doc.style_property(id, "display").as_deref() {
            Some("block" | "flex" | "grid" | "list-item" | "table" | "table-row") => true,
            Some("inline" | "inline-block" | "inline-flex") => false,
            _ => is_block_tag(tag) || matches!(tag, "html" | "body" | "tr" | "td" | "th" | "tbody" | "thead" | "tfoot"),
        }
    }

    fn flow(&mut self, id: NodeId, line: &mut Line, link: bool) {
        match &self.doc.node(id).data {
            NodeData::Text(t) => self.text(t, line, link),
            NodeData::Element { name, .. } => {
                if self.doc.is_hidden(id) {
                    return;
                }
                let tag = name.as_str();
                match tag {
                    "br" => {
                        let (x, y) = line.place(0.0, LINE_HEIGHT);
                        self.rects[id.0] = Some(Rect::new(x, y, 0.0, LINE_HEIGHT));
                        line.newline();
                    }
                    "img" | "input" | "select" | "textarea" | "iframe" | "video" | "canvas" | "svg" => {
                        let (dw, dh) = match tag {
                            "img" | "video" | "canvas" | "svg" => (DEFAULT_IMAGE_SIZE, DEFAULT_IMAGE_SIZE),
                            "textarea" => (160.0, 40.0),
                            "iframe" => (300.0, 150.0),
                            _ => (160.0, LINE_HEIGHT),
                        };
                        let w = self.size_hint(id, "width").unwrap_or(dw).min(line.right - line.left);
                        let h = self.size_hint(id, "height").unwrap_or(dh);
                        let (x, y) = line.place(w, h);
                        let r = Rect::new(x, y, w, h);
                        self.rects[id.0] = Some(r);
                        self.boxes.push(r);
                        let kind = if matches!(tag, "img" | "video" | "canvas" | "svg") { PaintKind::Image } else { PaintKind::Control };
                        self.paints.push(Paint { rect: r, kind });
                    }
                    _ if self.is_block(id, tag) => self.block(id, tag, line, link),
                    _ => {
                        let start = self.boxes.len();
                        let child_link = link || tag == "a";
                        for &c in self.doc.children(id) {
                            self.flow(c, line, child_link);
                        }
                        let r = self.boxes[start..].iter().copied().reduce(Rect::union).unwrap_or(Rect::new(line.x, line.y, 0.0, 0.0));
                        self.rects[id.0] = Some(r);
                    }
                }
            }
            _ => {}
        }
    }

    fn block(&mut self, id: NodeId, tag: &str, line: &mut Line, link: bool) {
        line.break_if_used();
        let avail = line.right - line.left;
        let width = self.size_hint(id, "width").map_or(avail, |w| w.min(avail));
        let (x, y) = (line.left, line.y);
        let content_height = if tag == "tr" {
            self.row(id, x, y, width, link)
        } else {
            let mut inner = Line::new(x, y, width);
            for &c in self.doc.children(id) {
                self.flow(c, &mut inner, link);
            }
            inner.bottom() - y
        };
        let height = self.size_hint(id, "height").unwrap_or(content_height);
        let r = Rect::new(x, y, width, height);
        self.rects[id.0] = Some(r);
        self.boxes.push(r);
        line.y = y + height;
        line.x = line.left;
    }

    fn row(&mut self, id: NodeId, x: f64, y: f64, width: f64, link: bool) -> f64 {
        let cells: Vec<NodeId> = self.doc.element_children(id).filter(|&c| !self.doc.is_hidden(c)).collect();
        if cells.is_empty() {
            return 0.0;
        }
        let cw = width / cells.len() as f64;
        let mut height: f64 = 0.0;
        for (i, &c) in cells.iter().enumerate() {
            let mut inner = Line::new(x + cw * i as f64, y, cw);
            self.block(c, self.doc.tag(c).unwrap_or(""), &mut inner, link);
            height = height.max(self.rects[c.0].map_or(0.0, |r| r.h));
        }
        for &c in &cells {
            if let Some(r) = self.rects[c.0].as_mut() {
                r.h = height;
            }
        }
        height
    }

    fn text(&mut self, t: &str, line: &mut Line, link: bool) {
        let kind = if link { PaintKind::LinkText } else { PaintKind::Text };
        let mut run: Option<Rect> = None;
        if t.starts_with(char::is_whitespace) {
            line.space = true;
        }
        for word in t.split_whitespace() {
            let w = word.chars().count() as f64 * CHAR_WIDTH;
            let (x, y) = line.place(w, LINE_HEIGHT);
            let r = Rect::new(x, y, w, LINE_HEIGHT);
            run = match run {
                Some(prev) if prev.y == y => Some(prev.union(r)),
                Some(prev) => {
                    self.flush_run(&mut Some(prev), kind);
                    Some(r)
                }
                None => Some(r),
            };
            line.space = true;
        }
        if !t.ends_with(char::is_whitespace) && !t.trim().is_empty() {
            line.space = false;
        }
        self.flush_run(&mut run, kind);
    }

    fn flush_run(&mut self, run: &mut Option<Rect>, kind: PaintKind) {
        if let Some(r) = run.take() {
            self.boxes.push(r);
            self.paints.push(Paint { rect: r, kind });
        }
    }
}
