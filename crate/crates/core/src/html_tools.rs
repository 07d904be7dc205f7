//! HTML simplification, local segment extraction and absolute XPaths.
//!
//! Everything here is a pure function over a parsed snapshot.

use std::collections::{BTreeSet, VecDeque};

use thiserror::Error;

use crate::dom::{Document, NodeData, NodeId, Rebuild};
use crate::xpath::{XNode, XPath};

/// Attributes kept by [`simplify`].
pub const ATTRIBUTE_WHITELIST: &[&str] = &["class", "href", "src", "alt"];

/// Default neighbor distance for local segments.
pub const DEFAULT_SEGMENT_DISTANCE: usize = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HtmlToolsError {
    #[error("input could not be parsed as HTML: {0}")]
    UnparseableInput(String),
    #[error("anchor {0} does not resolve to exactly one element")]
    AnchorNotFound(String),
    #[error("segment distance must be non-negative, got {0}")]
    NegativeDistance(i64),
    #[error("node {0} is not attached to the document")]
    DetachedNode(usize),
}

/// Output of [`simplify`]; the only HTML form the baselines accept.
#[derive(Debug, Clone, PartialEq, Eq)]
#[non_exhaustive]
pub struct SimplifiedHtml {
    pub content: String,
    pub source_length: usize,
    pub simplified_length: usize,
}

/// Removes `<script>`/`<style>` subtrees, comments and processing
/// instructions, and drops every attribute outside [`ATTRIBUTE_WHITELIST`].
///
/// Inputs without `<html>`, `<head>` or `<body>` tags are treated as
/// fragments and come back as fragments.
pub fn simplify(html: &str) -> SimplifiedHtml {
    let doc = Document::parse(html);
    let simplified = doc.rebuild(&|d, id| match &d.node(id).data {
        NodeData::Comment(_) | NodeData::ProcessingInstruction(_) => Rebuild::Drop,
        NodeData::Element { name, attrs } => {
            if name == "script" || name == "style" {
                Rebuild::Drop
            } else {
                Rebuild::Attrs(
                    attrs.iter().filter(|(k, _)| ATTRIBUTE_WHITELIST.contains(&k.as_str())).cloned().collect(),
                )
            }
        }
        _ => Rebuild::Keep,
    });
    let content = if is_fragment(html) { serialize_fragment(&simplified) } else { simplified.to_html() };
    SimplifiedHtml { source_length: html.chars().count(), simplified_length: content.chars().count(), content }
}

/// Byte-level entry point; rejects input that is not UTF-8.
pub fn simplify_bytes(bytes: &[u8]) -> Result<SimplifiedHtml, HtmlToolsError> {
    let text = std::str::from_utf8(bytes).map_err(|e| HtmlToolsError::UnparseableInput(e.to_string()))?;
    Ok(simplify(text))
}

fn is_fragment(html: &str) -> bool {
    let lower = html.to_ascii_lowercase();
    !["<html", "<head", "<body", "<!doctype"].iter().any(|t| lower.contains(t))
}

fn serialize_fragment(doc: &Document) -> String {
    let mut out = String::new();
    let Some(html) = doc.document_element() else { return out };
    for section in doc.element_children(html) {
        for &c in doc.children(section) {
            doc.serialize_filtered(c, &mut out, &|_| true);
        }
    }
    out
}

/// A bounded neighborhood of an anchor element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HtmlSegment {
    pub anchor: NodeId,
    pub anchor_xpath: String,
    pub distance: usize,
    /// Elements within `distance` edges of the anchor, in document order.
    pub nodes: Vec<NodeId>,
    pub content: String,
}

/// Element-graph neighbors: parent, element children, and the adjacent
/// previous/next element siblings.
pub fn element_neighbors(doc: &Document, id: NodeId) -> Vec<NodeId> {
    let mut out = Vec::new();
    if let Some(p) = doc.parent(id).filter(|&p| doc.is_element(p)) {
        out.push(p);
    }
    out.extend(doc.element_children(id));
    if let Some(p) = doc.parent(id) {
        let sibs: Vec<NodeId> = doc.element_children(p).collect();
        if let Some(i) = sibs.iter().position(|&s| s == id) {
            if i > 0 {
                out.push(sibs[i - 1]);
            }
            if i + 1 < sibs.len() {
                out.push(sibs[i + 1]);
            }
        }
    }
    out
}

/// Extracts the anchor plus every element within `distance` parent, child
/// or sibling hops. Included ancestors appear as enclosing tags with their
/// direct text; the anchor keeps its complete subtree.
pub fn local_segment(doc: &Document, anchor: NodeId, distance: i64) -> Result<HtmlSegment, HtmlToolsError> {
    if distance < 0 {
        return Err(HtmlToolsError::NegativeDistance(distance));
    }
    if !doc.contains(anchor) || !doc.is_element(anchor) {
        return Err(HtmlToolsError::AnchorNotFound(format!("node {}", anchor.0)));
    }
    let d = distance as usize;
    let mut dist = vec![usize::MAX; doc.len()];
    dist[anchor.0] = 0;
    let mut queue = VecDeque::from([anchor]);
    let mut set = BTreeSet::new();
    while let Some(n) = queue.pop_front() {
        set.insert(n);
        if dist[n.0] == d {
            continue;
        }
        for m in element_neighbors(doc, n) {
            if dist[m.0] == usize::MAX {
                dist[m.0] = dist[n.0] + 1;
                queue.push_back(m);
            }
        }
    }
    let top = set
        .iter()
        .copied()
        .min_by_key(|&n| doc.depth(n))
        .expect("segment contains the anchor");
    let mut content = String::new();
    let keep = |id: NodeId| -> bool {
        if id == anchor || doc.is_ancestor(anchor, id) || set.contains(&id) {
            return true;
        }
        // direct text of included elements
        !doc.is_element(id)
            && !matches!(doc.node(id).data, NodeData::Comment(_))
            && doc.parent(id).is_some_and(|p| set.contains(&p))
    };
    doc.serialize_filtered(top, &mut content, &keep);
    let order = doc.order_index();
    let mut nodes: Vec<NodeId> = set.into_iter().collect();
    nodes.sort_by_key(|n| order[n.0]);
    Ok(HtmlSegment { anchor, anchor_xpath: absolute_xpath(doc, anchor)?, distance: d, nodes, content })
}

/// Parses `snapshot`, resolves `anchor_xpath` to a single element and
/// extracts its segment.
pub fn local_segment_html(snapshot: &str, anchor_xpath: &str, distance: i64) -> Result<HtmlSegment, HtmlToolsError> {
    let doc = Document::parse(snapshot);
    let anchor = resolve_unique(&doc, anchor_xpath)?;
    local_segment(&doc, anchor, distance)
}

/// Resolves an XPath that must select exactly one element.
pub fn resolve_unique(doc: &Document, xpath: &str) -> Result<NodeId, HtmlToolsError> {
    let not_found = || HtmlToolsError::AnchorNotFound(xpath.to_string());
    let nodes = XPath::compile(xpath).and_then(|x| x.select(doc)).map_err(|_| not_found())?;
    match nodes.as_slice() {
        [XNode::Node(n)] if doc.is_element(*n) => Ok(*n),
        _ => Err(not_found()),
    }
}

/// Positional path from the document root, e.g. `/html/body/div[2]/ul/li[3]`.
/// The index is omitted when the element is the only one of its name among
/// its siblings. Text nodes end in `text()[k]`.
pub fn absolute_xpath(doc: &Document, node: NodeId) -> Result<String, HtmlToolsError> {
    if !doc.contains(node) || node == doc.root() {
        return Err(HtmlToolsError::DetachedNode(node.0));
    }
    let mut parts = Vec::new();
    let mut cur = node;
    while cur != doc.root() {
        let parent = doc.parent(cur).ok_or(HtmlToolsError::DetachedNode(node.0))?;
        let step = match &doc.node(cur).data {
            NodeData::Element { name, .. } => {
                let same: Vec<NodeId> =
                    doc.element_children(parent).filter(|&s| doc.tag(s) == Some(name.as_str())).collect();
                if same.len() == 1 {
                    name.clone()
                } else {
                    let k = same.iter().position(|&s| s == cur).unwrap_or(0) + 1;
                    format!("{name}[{k}]")
                }
            }
            NodeData::Text(_) => {
                let texts: Vec<NodeId> = doc.children(parent).iter().copied().filter(|&s| doc.is_text(s)).collect();
                let k = texts.iter().position(|&s| s == cur).unwrap_or(0) + 1;
                format!("text()[{k}]")
            }
            NodeData::Comment(_) => {
                let cs: Vec<NodeId> = doc
                    .children(parent)
                    .iter()
                    .copied()
                    .filter(|&s| matches!(doc.node(s).data, NodeData::Comment(_)))
                    .collect();
                let k = cs.iter().position(|&s| s == cur).unwrap_or(0) + 1;
                format!("comment()[{k}]")
            }
            _ => return Err(HtmlToolsError::DetachedNode(node.0)),
        };
        parts.push(step);
        cur = parent;
    }
    parts.reverse();
    Ok(format!("/{}", parts.join("/")))
}
