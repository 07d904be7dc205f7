//! Arena-backed HTML document model.
//!
//! Parsing goes through html5ever (via `scraper`) so error recovery matches
//! browsers; the resulting tree is copied into a flat arena that the XPath
//! engine, the layout engine and the segment extractor all share.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DomError {
    #[error("input is not valid UTF-8 at byte {0}")]
    InvalidUtf8(usize),
    #[error("node {0} is not part of this document")]
    DetachedNode(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeData {
    Document,
    Doctype(String),
    Element { name: String, attrs: Vec<(String, String)> },
    Text(String),
    Comment(String),
    ProcessingInstruction(String),
}

#[derive(Debug, Clone)]
pub struct Node {
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub data: NodeData,
}

/// Element names serialized without a closing tag.
pub const VOID_ELEMENTS: &[&str] = &[
    "area", "base", "br", "col", "embed", "hr", "img", "input", "keygen", "link", "meta",
    "param", "source", "track", "wbr",
];

const RAW_TEXT_ELEMENTS: &[&str] = &[
    "script", "style", "xmp", "iframe", "noembed", "noframes", "plaintext", "noscript",
];

/// Elements whose content never renders.
const NON_RENDERED: &[&str] = &[
    "head", "script", "style", "noscript", "template", "title", "meta", "link", "base",
];

#[derive(Debug, Clone)]
pub struct Document {
    nodes: Vec<Node>,
}

impl Document {
    pub fn parse(html: &str) -> Document {
        let parsed = scraper::Html::parse_document(html);
        let mut doc = Document {
            nodes: vec![Node { parent: None, children: Vec::new(), data: NodeData::Document }],
        };
        for child in parsed.tree.root().children() {
            doc.copy_subtree(child, NodeId(0));
        }
        doc
    }

    pub fn parse_bytes(bytes: &[u8]) -> Result<Document, DomError> {
        match std::str::from_utf8(bytes) {
            Ok(s) => Ok(Document::parse(s)),
            Err(e) => Err(DomError::InvalidUtf8(e.valid_up_to())),
        }
    }

    fn copy_subtree(&mut self, src: ego_tree_ref::NodeRef<'_>, parent: NodeId) {
        use scraper::Node as S;
        let data = match src.value() {
            S::Document | S::Fragment => {
                for c in src.children() {
                    self.copy_subtree(c, parent);
                }
                return;
            }
            S::Doctype(d) => NodeData::Doctype(d.name().to_string()),
            S::Comment(c) => NodeData::Comment(c.to_string()),
            S::Text(t) => NodeData::Text(t.to_string()),
            S::Element(e) => NodeData::Element {
                name: e.name().to_ascii_lowercase(),
                attrs: e.attrs().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            },
            S::ProcessingInstruction(p) => NodeData::ProcessingInstruction(p.target.to_string()),
        };
        let id = self.push(parent, data);
        for c in src.children() {
            self.copy_subtree(c, id);
        }
    }

    fn push(&mut self, parent: NodeId, data: NodeData) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { parent: Some(parent), children: Vec::new(), data });
        self.nodes[parent.0].children.push(id);
        id
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() <= 1
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id.0 < self.nodes.len()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id.0].parent
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.0].children
    }

    /// The document element (`<html>`), if present.
    pub fn document_element(&self) -> Option<NodeId> {
        self.children(self.root()).iter().copied().find(|&c| self.is_element(c))
    }

    pub fn is_element(&self, id: NodeId) -> bool {
        matches!(self.nodes[id.0].data, NodeData::Element { .. })
    }

    pub fn is_text(&self, id: NodeId) -> bool {
        matches!(self.nodes[id.0].data, NodeData::Text(_))
    }

    pub fn tag(&self, id: NodeId) -> Option<&str> {
        match &self.nodes[id.0].data {
            NodeData::Element { name, .. } => Some(name),
            _ => None,
        }
    }

    pub fn attrs(&self, id: NodeId) -> &[(String, String)] {
        match &self.nodes[id.0].data {
            NodeData::Element { attrs, .. } => attrs,
            _ => &[],
        }
    }

    pub fn attr(&self, id: NodeId, name: &str) -> Option<&str> {
        self.attrs(id).iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    /// Element children only.
    pub fn element_children(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.children(id).iter().copied().filter(move |&c| self.is_element(c))
    }

    /// All nodes in document (pre-)order, starting at the document node.
    pub fn descendants(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            out.push(n);
            for &c in self.children(n).iter().rev() {
                stack.push(c);
            }
        }
        out
    }

    pub fn all_elements(&self) -> Vec<NodeId> {
        self.descendants(self.root()).into_iter().filter(|&n| self.is_element(n)).collect()
    }

    /// Pre-order position of every node, for document-order sorting.
    pub fn order_index(&self) -> Vec<usize> {
        let mut idx = vec![0; self.nodes.len()];
        for (i, n) in self.descendants(self.root()).into_iter().enumerate() {
            idx[n.0] = i;
        }
        idx
    }

    pub fn ancestors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        std::iter::successors(self.parent(id), move |&n| self.parent(n))
    }

    pub fn depth(&self, id: NodeId) -> usize {
        self.ancestors(id).count()
    }

    pub fn is_ancestor(&self, ancestor: NodeId, node: NodeId) -> bool {
        self.ancestors(node).any(|a| a == ancestor)
    }

    /// Raw concatenated text of all descendant text nodes.
    pub fn text_content(&self, id: NodeId) -> String {
        let mut out = String::new();
        for n in self.descendants(id) {
            if let NodeData::Text(t) = &self.nodes[n.0].data {
                out.push_str(t);
            }
        }
        out
    }

    /// Whitespace-normalized text of the rendered descendants of `id`.
    pub fn visible_text(&self, id: NodeId) -> String {
        let mut out = String::new();
        self.collect_visible_text(id, &mut out);
        normalize_whitespace(&out)
    }

    fn collect_visible_text(&self, id: NodeId, out: &mut String) {
        match &self.nodes[id.0].data {
            NodeData::Text(t) => out.push_str(t),
            NodeData::Element { name, .. } => {
                if self.is_hidden(id) {
                    return;
                }
                if name == "br" {
                    out.push(' ');
                }
                for &c in self.children(id) {
                    self.collect_visible_text(c, out);
                }
                if is_block_tag(name) {
                    out.push(' ');
                }
            }
            NodeData::Document => {
                for &c in self.children(id) {
                    self.collect_visible_text(c, out);
                }
            }
            _ => {}
        }
    }

    /// True when the element itself is never rendered (ignores ancestors).
    pub fn is_hidden(&self, id: NodeId) -> bool {
        let Some(name) = self.tag(id) else { return false };
        if NON_RENDERED.contains(&name) || self.attr(id, "hidden").is_some() {
            return true;
        }
        if name == "input" && self.attr(id, "type").is_some_and(|t| t.eq_ignore_ascii_case("hidden")) {
            return true;
        }
        matches!(self.style_property(id, "display").as_deref(), Some("none"))
            || matches!(self.style_property(id, "visibility").as_deref(), Some("hidden"))
    }

    /// Value of an inline `style` declaration, lowercased and trimmed.
    pub fn style_property(&self, id: NodeId, prop: &str) -> Option<String> {
        let style = self.attr(id, "style")?;
        style.split(';').rev().find_map(|decl| {
            let (k, v) = decl.split_once(':')?;
            (k.trim().eq_ignore_ascii_case(prop)).then(|| v.trim().to_ascii_lowercase())
        })
    }

    /// Serializes `id` (and its subtree) as HTML.
    pub fn outer_html(&self, id: NodeId) -> String {
        let mut out = String::new();
        self.serialize_filtered(id, &mut out, &|_| true);
        out
    }

    /// Serializes the whole document.
    pub fn to_html(&self) -> String {
        self.outer_html(self.root())
    }

    /// Serializes `id`, descending only into nodes for which `keep` is true.
    /// Excluded nodes are omitted entirely.
    pub fn serialize_filtered(&self, id: NodeId, out: &mut String, keep: &dyn Fn(NodeId) -> bool) {
        if !keep(id) {
            return;
        }
        match &self.nodes[id.0].data {
            NodeData::Document => {
                for &c in self.children(id) {
                    self.serialize_filtered(c, out, keep);
                }
            }
            NodeData::Doctype(name) => {
                let _ = write!(out, "<!DOCTYPE {name}>");
            }
            NodeData::Comment(c) => {
                let _ = write!(out, "<!--{c}-->");
            }
            NodeData::ProcessingInstruction(p) => {
                let _ = write!(out, "<?{p}>");
            }
            NodeData::Text(t) => {
                let raw = self
                    .parent(id)
                    .and_then(|p| self.tag(p))
                    .is_some_and(|p| RAW_TEXT_ELEMENTS.contains(&p));
                if raw {
                    out.push_str(t);
                } else {
                    escape_text(t, out);
                }
            }
            NodeData::Element { name, attrs } => {
                out.push('<');
                out.push_str(name);
                for (k, v) in attrs {
                    out.push(' ');
                    out.push_str(k);
                    out.push_str("=\"");
                    escape_attr(v, out);
                    out.push('"');
                }
                out.push('>');
                if VOID_ELEMENTS.contains(&name.as_str()) {
                    return;
                }
                for &c in self.children(id) {
                    self.serialize_filtered(c, out, keep);
                }
                let _ = write!(out, "</{name}>");
            }
        }
    }

    /// Builds a new document by copying the tree while letting `edit` drop
    /// nodes or rewrite element attributes.
    pub fn rebuild(&self, edit: &dyn Fn(&Document, NodeId) -> Rebuild) -> Document {
        let mut doc = Document {
            nodes: vec![Node { parent: None, children: Vec::new(), data: NodeData::Document }],
        };
        for &c in self.children(self.root()) {
            self.rebuild_into(c, NodeId(0), &mut doc, edit);
        }
        doc
    }

    fn rebuild_into(&self, id: NodeId, parent: NodeId, doc: &mut Document, edit: &dyn Fn(&Document, NodeId) -> Rebuild) {
        let data = match edit(self, id) {
            Rebuild::Drop => return,
            Rebuild::Keep => self.nodes[id.0].data.clone(),
            Rebuild::Attrs(attrs) => match &self.nodes[id.0].data {
                NodeData::Element { name, .. } => NodeData::Element { name: name.clone(), attrs },
                other => other.clone(),
            },
        };
        let new = doc.push(parent, data);
        for &c in self.children(id) {
            self.rebuild_into(c, new, doc, edit);
        }
    }
}

/// Per-node decision for [`Document::rebuild`].
pub enum Rebuild {
    Keep,
    Drop,
    Attrs(Vec<(String, String)>),
}

mod ego_tree_ref {
    pub type NodeRef<'a> = ego_tree::NodeRef<'a, scraper::Node>;
}

pub fn is_block_tag(name: &str) -> bool {
    matches!(
        name,
        "html" | "body" | "div" | "p" | "ul" | "ol" | "li" | "h1" | "h2" | "h3" | "h4" | "h5"
            | "h6" | "section" | "article" | "header" | "footer" | "nav" | "main" | "aside"
            | "table" | "thead" | "tbody" | "tfoot" | "tr" | "td" | "th" | "form" | "figure"
            | "figcaption" | "blockquote" | "pre" | "dl" | "dt" | "dd" | "hr" | "address"
            | "fieldset" | "caption" | "details" | "summary" | "center"
    )
}

/// Trims and collapses internal whitespace runs to a single space.
pub fn normalize_whitespace(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

fn escape_text(s: &str, out: &mut String) {
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '\u{a0}' => out.push_str("&nbsp;"),
            c => out.push(c),
        }
    }
}

fn escape_attr(s: &str, out: &mut String) {
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '"' => out.push_str("&quot;"),
            '\u{a0}' => out.push_str("&nbsp;"),
            c => out.push(c),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_serializes_round_trip() {
        let html = "<!DOCTYPE html><html><head></head><body><p class=\"a\">x &amp; y</p><img src=\"u\"></body></html>";
        let doc = Document::parse(html);
        assert_eq!(doc.to_html(), html);
    }

    #[test]
    fn reparse_is_stable() {
        let doc = Document::parse("<div><p>a<b>b</div>");
        let once = doc.to_html();
        assert_eq!(Document::parse(&once).to_html(), once);
    }

    #[test]
    fn visible_text_skips_hidden_and_scripts() {
        let doc = Document::parse(
            "<body><div>a <script>x()</script><span style=\"display: none\">h</span> b</div></body>",
        );
        let div = doc.all_elements().into_iter().find(|&n| doc.tag(n) == Some("div")).unwrap();
        assert_eq!(doc.visible_text(div), "a b");
    }

    #[test]
    fn invalid_utf8_is_rejected() {
        assert_eq!(Document::parse_bytes(b"<p>\xff</p>").unwrap_err(), DomError::InvalidUtf8(3));
    }

    #[test]
    fn style_property_takes_last_declaration() {
        let doc = Document::parse("<div style=\"height: 10px; HEIGHT:20px\"></div>");
        let div = doc.all_elements().into_iter().find(|&n| doc.tag(n) == Some("div")).unwrap();
        assert_eq!(doc.style_property(div, "height").as_deref(), Some("20px"));
    }
}
