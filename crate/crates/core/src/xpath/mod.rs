//! XPath 1.0 over [`Document`](crate::dom::Document).
//!
//! Name tests follow HTML-document rules: element and attribute names are
//! compared ASCII case-insensitively. Results are always returned in
//! document order without duplicates.

mod parser;

use std::cmp::Ordering;
use std::collections::HashSet;

use thiserror::Error;

use crate::dom::{normalize_whitespace, Document, NodeData, NodeId};
pub use parser::{Axis, Expr, NodeTest};
use parser::{ArithOp, CmpOp, Function, Parser, PathStart, Step};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum XPathError {
    #[error("invalid XPath at offset {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("XPath evaluation error: {0}")]
    Eval(String),
}

/// A node in the XPath data model: a tree node or an attribute of an element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum XNode {
    Node(NodeId),
    Attr(NodeId, usize),
}

impl XNode {
    pub fn owner(self) -> NodeId {
        match self {
            XNode::Node(n) | XNode::Attr(n, _) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Nodes(Vec<XNode>),
    Bool(bool),
    Num(f64),
    Str(String),
}

/// A compiled expression.
#[derive(Debug, Clone)]
pub struct XPath {
    expr: Expr,
    source: String,
}

impl XPath {
    pub fn compile(src: &str) -> Result<XPath, XPathError> {
        Ok(XPath { expr: Parser::parse(src)?, source: src.to_string() })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn evaluate(&self, doc: &Document) -> Result<Value, XPathError> {
        let ev = Evaluator::new(doc);
        let ctx = Ctx { node: XNode::Node(doc.root()), pos: 1, size: 1 };
        ev.eval(&self.expr, &ctx)
    }

    /// Node-set result; non-node-set expressions are an error.
    pub fn select(&self, doc: &Document) -> Result<Vec<XNode>, XPathError> {
        match self.evaluate(doc)? {
            Value::Nodes(n) => Ok(n),
            _ => Err(XPathError::Eval("expression does not evaluate to a node-set".into())),
        }
    }

    /// Whether the expression's last location step selects attributes.
    pub fn ends_in_attribute(&self, name: &str) -> bool {
        match &self.expr {
            Expr::Path { steps, .. } => steps.last().is_some_and(|s| {
                s.axis == Axis::Attribute
                    && matches!(&s.test, NodeTest::Name(n) if n.eq_ignore_ascii_case(name))
            }),
            _ => false,
        }
    }
}

/// Evaluates `src` and renders each result as a string: elements give their
/// normalized visible text, attributes their value, text nodes their content.
/// Scalar results yield a single string.
pub fn evaluate_strings(doc: &Document, src: &str) -> Result<Vec<String>, XPathError> {
    let xp = XPath::compile(src)?;
    Ok(match xp.evaluate(doc)? {
        Value::Nodes(nodes) => nodes.into_iter().map(|n| node_display_string(doc, n)).collect(),
        Value::Str(s) => vec![s],
        Value::Num(n) => vec![number_to_string(n)],
        Value::Bool(b) => vec![b.to_string()],
    })
}

pub fn node_display_string(doc: &Document, n: XNode) -> String {
    match n {
        XNode::Attr(owner, i) => doc.attrs(owner)[i].1.clone(),
        XNode::Node(id) => match &doc.node(id).data {
            NodeData::Text(t) => t.clone(),
            NodeData::Element { .. } | NodeData::Document => doc.visible_text(id),
            NodeData::Comment(c) => c.clone(),
            _ => String::new(),
        },
    }
}

#[derive(Clone, Copy)]
struct Ctx {
    node: XNode,
    pos: usize,
    size: usize,
}

struct Evaluator<'a> {
    doc: &'a Document,
    order: Vec<usize>,
}

impl<'a> Evaluator<'a> {
    fn new(doc: &'a Document) -> Self {
        Evaluator { doc, order: doc.order_index() }
    }

    fn sort_key(&self, n: XNode) -> (usize, usize) {
        match n {
            XNode::Node(id) => (self.order[id.0], 0),
            XNode::Attr(id, i) => (self.order[id.0], i + 1),
        }
    }

    fn sort_dedup(&self, nodes: &mut Vec<XNode>) {
        nodes.sort_by_key(|&n| self.sort_key(n));
        nodes.dedup();
    }

    fn eval(&self, expr: &Expr, ctx: &Ctx) -> Result<Value, XPathError> {
        Ok(match expr {
            Expr::Or(a, b) => Value::Bool(self.boolean(&self.eval(a, ctx)?) || self.boolean(&self.eval(b, ctx)?)),
            Expr::And(a, b) => Value::Bool(self.boolean(&self.eval(a, ctx)?) && self.boolean(&self.eval(b, ctx)?)),
            Expr::Compare(op, a, b) => {
                let (a, b) = (self.eval(a, ctx)?, self.eval(b, ctx)?);
                Value::Bool(self.compare(*op, &a, &b))
            }
            Expr::Arith(op, a, b) => {
                let a = self.number(&self.eval(a, ctx)?);
                let b = self.number(&self.eval(b, ctx)?);
                Value::Num(match op {
                    ArithOp::Add => a + b,
                    ArithOp::Sub => a - b,
                    ArithOp::Mul => a * b,
                    ArithOp::Div => a / b,
                    ArithOp::Mod => a % b,
                })
            }
            Expr::Negate(a) => Value::Num(-self.number(&self.eval(a, ctx)?)),
            Expr::Union(a, b) => {
                let (Value::Nodes(mut a), Value::Nodes(b)) = (self.eval(a, ctx)?, self.eval(b, ctx)?) else {
                    return Err(XPathError::Eval("union of non-node-sets".into()));
                };
                a.extend(b);
                self.sort_dedup(&mut a);
                Value::Nodes(a)
            }
            Expr::Literal(s) => Value::Str(s.clone()),
            Expr::Number(n) => Value::Num(*n),
            Expr::Function(f, args) => self.call(*f, args, ctx)?,
            Expr::Path { start, steps } => {
                let mut nodes = match start {
                    PathStart::Root => vec![XNode::Node(self.doc.root())],
                    PathStart::Context => vec![ctx.node],
                    PathStart::Filter(primary, preds) => {
                        let Value::Nodes(mut nodes) = self.eval(primary, ctx)? else {
                            if preds.is_empty() && steps.is_empty() {
                                return self.eval(primary, ctx);
                            }
                            return Err(XPathError::Eval("predicate or step applied to a non-node-set".into()));
                        };
                        for p in preds {
                            nodes = self.filter(nodes, p)?;
                        }
                        nodes
                    }
                };
                for step in steps {
                    nodes = self.apply_step(&nodes, step)?;
                }
                Value::Nodes(nodes)
            }
        })
    }

    fn apply_step(&self, input: &[XNode], step: &Step) -> Result<Vec<XNode>, XPathError> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        for &n in input {
            // Axis order: reverse axes enumerate nearest-first.
            let mut selected: Vec<XNode> =
                self.axis(n, step.axis).into_iter().filter(|&c| self.test(c, step.axis, &step.test)).collect();
            for p in &step.predicates {
                selected = self.filter(selected, p)?;
            }
            for s in selected {
                if seen.insert(s) {
                    out.push(s);
                }
            }
        }
        self.sort_dedup(&mut out);
        Ok(out)
    }

    /// Applies one predicate to a node list given in axis order.
    fn filter(&self, nodes: Vec<XNode>, pred: &Expr) -> Result<Vec<XNode>, XPathError> {
        let size = nodes.len();
        let mut out = Vec::new();
        for (i, n) in nodes.into_iter().enumerate() {
            let ctx = Ctx { node: n, pos: i + 1, size };
            let keep = match self.eval(pred, &ctx)? {
                Value::Num(k) => k == (i + 1) as f64,
                v => self.boolean(&v),
            };
            if keep {
                out.push(n);
            }
        }
        Ok(out)
    }

    fn in_model(&self, id: NodeId) -> bool {
        !matches!(self.doc.node(id).data, NodeData::Doctype(_))
    }

    fn model_children(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.doc.children(id).iter().copied().filter(move |&c| self.in_model(c))
    }

    fn descendants(&self, id: NodeId, out: &mut Vec<XNode>) {
        for c in self.model_children(id).collect::<Vec<_>>() {
            out.push(XNode::Node(c));
            self.descendants(c, out);
        }
    }

    fn siblings(&self, id: NodeId) -> (Vec<NodeId>, usize) {
        match self.doc.parent(id) {
            Some(p) => {
                let sibs: Vec<NodeId> = self.model_children(p).collect();
                let idx = sibs.iter().position(|&s| s == id).unwrap_or(0);
                (sibs, idx)
            }
            None => (vec![id], 0),
        }
    }

    fn axis(&self, n: XNode, axis: Axis) -> Vec<XNode> {
        let mut out = Vec::new();
        match (axis, n) {
            (Axis::SelfAxis, _) => out.push(n),
            (Axis::Attribute, XNode::Node(id)) => {
                out.extend((0..self.doc.attrs(id).len()).map(|i| XNode::Attr(id, i)));
            }
            (Axis::Attribute | Axis::Namespace, _) => {}
            (Axis::Child, XNode::Node(id)) => out.extend(self.model_children(id).map(XNode::Node)),
            (Axis::Descendant, XNode::Node(id)) => self.descendants(id, &mut out),
            (Axis::DescendantOrSelf, XNode::Node(id)) => {
                out.push(n);
                self.descendants(id, &mut out);
            }
            (Axis::Child | Axis::Descendant, XNode::Attr(..)) => {}
            (Axis::DescendantOrSelf, XNode::Attr(..)) => out.push(n),
            (Axis::Parent, _) => {
                let parent = match n {
                    XNode::Attr(owner, _) => Some(owner),
                    XNode::Node(id) => self.doc.parent(id),
                };
                out.extend(parent.map(XNode::Node));
            }
            (Axis::Ancestor | Axis::AncestorOrSelf, _) => {
                if axis == Axis::AncestorOrSelf {
                    out.push(n);
                }
                let start = match n {
                    XNode::Attr(owner, _) => {
                        out.push(XNode::Node(owner));
                        owner
                    }
                    XNode::Node(id) => id,
                };
                out.extend(self.doc.ancestors(start).map(XNode::Node));
            }
            (Axis::FollowingSibling, XNode::Node(id)) => {
                let (sibs, idx) = self.siblings(id);
                out.extend(sibs[idx + 1..].iter().map(|&s| XNode::Node(s)));
            }
            (Axis::PrecedingSibling, XNode::Node(id)) => {
                let (sibs, idx) = self.siblings(id);
                out.extend(sibs[..idx].iter().rev().map(|&s| XNode::Node(s)));
            }
            (Axis::FollowingSibling | Axis::PrecedingSibling, XNode::Attr(..)) => {}
            (Axis::Following, _) => {
                let start = match n {
                    XNode::Attr(owner, _) => {
                        self.descendants(owner, &mut out);
                        owner
                    }
                    XNode::Node(id) => id,
                };
                let mut cur = Some(start);
                while let Some(c) = cur {
                    let (sibs, idx) = self.siblings(c);
                    if self.doc.parent(c).is_some() {
                        for &s in &sibs[idx + 1..] {
                            out.push(XNode::Node(s));
                            self.descendants(s, &mut out);
                        }
                    }
                    cur = self.doc.parent(c);
                }
                out.sort_by_key(|&x| self.sort_key(x));
            }
            (Axis::Preceding, _) => {
                let start = n.owner();
                let ancestors: HashSet<NodeId> = self.doc.ancestors(start).collect();
                let limit = self.order[start.0];
                let mut all = Vec::new();
                self.descendants(self.doc.root(), &mut all);
                out.extend(all.into_iter().filter(|&x| {
                    let id = x.owner();
                    self.order[id.0] < limit && !ancestors.contains(&id)
                }));
                out.reverse();
            }
        }
        out
    }

    fn test(&self, n: XNode, axis: Axis, test: &NodeTest) -> bool {
        match n {
            XNode::Attr(owner, i) => match test {
                NodeTest::Node => true,
                NodeTest::Any => axis == Axis::Attribute,
                NodeTest::Name(name) => {
                    axis == Axis::Attribute && self.doc.attrs(owner)[i].0.eq_ignore_ascii_case(local(name))
                }
                _ => false,
            },
            XNode::Node(id) => {
                let data = &self.doc.node(id).data;
                match test {
                    NodeTest::Node => true,
                    NodeTest::Text => matches!(data, NodeData::Text(_)),
                    NodeTest::Comment => matches!(data, NodeData::Comment(_)),
                    NodeTest::ProcessingInstruction(target) => match data {
                        NodeData::ProcessingInstruction(t) => target.as_ref().is_none_or(|x| x == t),
                        _ => false,
                    },
                    NodeTest::Any => axis != Axis::Attribute && matches!(data, NodeData::Element { .. }),
                    NodeTest::Name(name) => match data {
                        NodeData::Element { name: el, .. } => el.eq_ignore_ascii_case(local(name)),
                        _ => false,
                    },
                }
            }
        }
    }

    fn string_value(&self, n: XNode) -> String {
        match n {
            XNode::Attr(owner, i) => self.doc.attrs(owner)[i].1.clone(),
            XNode::Node(id) => match &self.doc.node(id).data {
                NodeData::Text(t) | NodeData::Comment(t) => t.clone(),
                NodeData::Element { .. } | NodeData::Document => self.doc.text_content(id),
                _ => String::new(),
            },
        }
    }

    fn string(&self, v: &Value) -> String {
        match v {
            Value::Nodes(n) => n.first().map(|&n| self.string_value(n)).unwrap_or_default(),
            Value::Bool(b) => b.to_string(),
            Value::Num(n) => number_to_string(*n),
            Value::Str(s) => s.clone(),
        }
    }

    fn number(&self, v: &Value) -> f64 {
        match v {
            Value::Num(n) => *n,
            Value::Bool(b) => f64::from(u8::from(*b)),
            other => string_to_number(&self.string(other)),
        }
    }

    fn boolean(&self, v: &Value) -> bool {
        match v {
            Value::Nodes(n) => !n.is_empty(),
            Value::Bool(b) => *b,
            Value::Num(n) => *n != 0.0 && !n.is_nan(),
            Value::Str(s) => !s.is_empty(),
        }
    }

    fn compare(&self, op: CmpOp, a: &Value, b: &Value) -> bool {
        match (a, b) {
            (Value::Nodes(xs), Value::Nodes(ys)) => xs.iter().any(|&x| {
                let sx = self.string_value(x);
                ys.iter().any(|&y| cmp_atomic(op, &Value::Str(sx.clone()), &Value::Str(self.string_value(y))))
            }),
            (Value::Nodes(xs), other) | (other, Value::Nodes(xs)) => {
                let flipped = !matches!(a, Value::Nodes(_));
                if let Value::Bool(_) = other {
                    let nb = Value::Bool(!xs.is_empty());
                    return if flipped { cmp_atomic(op, other, &nb) } else { cmp_atomic(op, &nb, other) };
                }
                xs.iter().any(|&x| {
                    let sv = self.string_value(x);
                    let nv = match other {
                        Value::Num(_) => Value::Num(string_to_number(&sv)),
                        _ => Value::Str(sv),
                    };
                    if flipped {
                        cmp_atomic(op, other, &nv)
                    } else {
                        cmp_atomic(op, &nv, other)
                    }
                })
            }
            _ => cmp_atomic(op, a, b),
        }
    }

    fn nodes_arg(&self, args: &[Expr], ctx: &Ctx, fname: &str) -> Result<Vec<XNode>, XPathError> {
        match self.eval(&args[0], ctx)? {
            Value::Nodes(n) => Ok(n),
            _ => Err(XPathError::Eval(format!("{fname}() expects a node-set"))),
        }
    }

    fn string_arg(&self, args: &[Expr], i: usize, ctx: &Ctx) -> Result<String, XPathError> {
        match args.get(i) {
            Some(e) => Ok(self.string(&self.eval(e, ctx)?)),
            None => Ok(self.string_value(ctx.node)),
        }
    }

    fn call(&self, f: Function, args: &[Expr], ctx: &Ctx) -> Result<Value, XPathError> {
        use Function::*;
        use std::string::String as Text;
        Ok(match f {
            Last => Value::Num(ctx.size as f64),
            Position => Value::Num(ctx.pos as f64),
            Count => Value::Num(self.nodes_arg(args, ctx, "count")?.len() as f64),
            Id => {
                let wanted: HashSet<Text> = match self.eval(&args[0], ctx)? {
                    Value::Nodes(ns) => ns
                        .iter()
                        .flat_map(|&n| self.string_value(n).split_whitespace().map(str::to_string).collect::<Vec<Text>>())
                        .collect(),
                    v => self.string(&v).split_whitespace().map(str::to_string).collect(),
                };
                let out = self
                    .doc
                    .all_elements()
                    .into_iter()
                    .filter(|&e| self.doc.attr(e, "id").is_some_and(|id| wanted.contains(id)))
                    .map(XNode::Node)
                    .collect();
                Value::Nodes(out)
            }
            LocalName | Name => {
                let node = match args.first() {
                    Some(_) => self.nodes_arg(args, ctx, "name")?.first().copied(),
                    None => Some(ctx.node),
                };
                Value::Str(match node {
                    Some(XNode::Attr(owner, i)) => self.doc.attrs(owner)[i].0.clone(),
                    Some(XNode::Node(id)) => self.doc.tag(id).unwrap_or("").to_string(),
                    None => Text::new(),
                })
            }
            NamespaceUri => Value::Str(Text::new()),
            String => Value::Str(self.string_arg(args, 0, ctx)?),
            Concat => {
                let mut s = std::string::String::new();
                for i in 0..args.len() {
                    s.push_str(&self.string_arg(args, i, ctx)?);
                }
                Value::Str(s)
            }
            StartsWith => Value::Bool(self.string_arg(args, 0, ctx)?.starts_with(&self.string_arg(args, 1, ctx)?)),
            Contains => Value::Bool(self.string_arg(args, 0, ctx)?.contains(&self.string_arg(args, 1, ctx)?)),
            SubstringBefore => {
                let (s, t) = (self.string_arg(args, 0, ctx)?, self.string_arg(args, 1, ctx)?);
                Value::Str(s.find(&t).map(|i| s[..i].to_string()).unwrap_or_default())
            }
            SubstringAfter => {
                let (s, t) = (self.string_arg(args, 0, ctx)?, self.string_arg(args, 1, ctx)?);
                Value::Str(s.find(&t).map(|i| s[i + t.len()..].to_string()).unwrap_or_default())
            }
            Substring => {
                let s = self.string_arg(args, 0, ctx)?;
                let start = xpath_round(self.number(&self.eval(&args[1], ctx)?));
                let end = match args.get(2) {
                    Some(e) => start + xpath_round(self.number(&self.eval(e, ctx)?)),
                    None => f64::INFINITY,
                };
                Value::Str(
                    s.chars()
                        .enumerate()
                        .filter(|&(i, _)| {
                            let p = (i + 1) as f64;
                            p >= start && p < end
                        })
                        .map(|(_, c)| c)
                        .collect(),
                )
            }
            StringLength => Value::Num(self.string_arg(args, 0, ctx)?.chars().count() as f64),
            NormalizeSpace => Value::Str(normalize_whitespace(&self.string_arg(args, 0, ctx)?)),
            Translate => {
                let s = self.string_arg(args, 0, ctx)?;
                let from: Vec<char> = self.string_arg(args, 1, ctx)?.chars().collect();
                let to: Vec<char> = self.string_arg(args, 2, ctx)?.chars().collect();
                Value::Str(
                    s.chars()
                        .filter_map(|c| match from.iter().position(|&f| f == c) {
                            Some(i) => to.get(i).copied(),
                            None => Some(c),
                        })
                        .collect(),
                )
            }
            Boolean => Value::Bool(self.boolean(&self.eval(&args[0], ctx)?)),
            Not => Value::Bool(!self.boolean(&self.eval(&args[0], ctx)?)),
            True => Value::Bool(true),
            False => Value::Bool(false),
            Lang => Value::Bool(false),
            Number => match args.first() {
                Some(e) => Value::Num(self.number(&self.eval(e, ctx)?)),
                None => Value::Num(string_to_number(&self.string_value(ctx.node))),
            },
            Sum => Value::Num(
                self.nodes_arg(args, ctx, "sum")?.iter().map(|&n| string_to_number(&self.string_value(n))).sum(),
            ),
            Floor => Value::Num(self.number(&self.eval(&args[0], ctx)?).floor()),
            Ceiling => Value::Num(self.number(&self.eval(&args[0], ctx)?).ceil()),
            Round => Value::Num(xpath_round(self.number(&self.eval(&args[0], ctx)?))),
        })
    }
}

fn local(name: &str) -> &str {
    name.rsplit(':').next().unwrap_or(name)
}

fn cmp_atomic(op: CmpOp, a: &Value, b: &Value) -> bool {
    let num = |v: &Value| match v {
        Value::Num(n) => *n,
        Value::Bool(b) => f64::from(u8::from(*b)),
        Value::Str(s) => string_to_number(s),
        Value::Nodes(_) => f64::NAN,
    };
    match op {
        CmpOp::Eq | CmpOp::Ne => {
            let eq = match (a, b) {
                (Value::Bool(x), y) | (y, Value::Bool(x)) => {
                    let yb = match y {
                        Value::Bool(b) => *b,
                        Value::Num(n) => *n != 0.0 && !n.is_nan(),
                        Value::Str(s) => !s.is_empty(),
                        Value::Nodes(n) => !n.is_empty(),
                    };
                    *x == yb
                }
                (Value::Num(_), _) | (_, Value::Num(_)) => num(a) == num(b),
                (Value::Str(x), Value::Str(y)) => x == y,
                _ => false,
            };
            if op == CmpOp::Eq {
                eq
            } else {
                !eq
            }
        }
        _ => {
            let (x, y) = (num(a), num(b));
            match x.partial_cmp(&y) {
                None => false,
                Some(o) => match op {
                    CmpOp::Lt => o == Ordering::Less,
                    CmpOp::Le => o != Ordering::Greater,
                    CmpOp::Gt => o == Ordering::Greater,
                    CmpOp::Ge => o != Ordering::Less,
                    _ => unreachable!(),
                },
            }
        }
    }
}

fn xpath_round(n: f64) -> f64 {
    if n.is_nan() || n.is_infinite() {
        n
    } else {
        (n + 0.5).floor()
    }
}

pub fn string_to_number(s: &str) -> f64 {
    let t = s.trim();
    let valid = !t.is_empty()
        && t.trim_start_matches('-').chars().all(|c| c.is_ascii_digit() || c == '.')
        && t.matches('.').count() <= 1
        && t != "-"
        && t != "."
        && t != "-.";
    if valid {
        t.parse().unwrap_or(f64::NAN)
    } else {
        f64::NAN
    }
}

pub fn number_to_string(n: f64) -> String {
    if n.is_nan() {
        "NaN".into()
    } else if n.is_infinite() {
        if n > 0.0 { "Infinity" } else { "-Infinity" }.into()
    } else if n == n.trunc() {
        format!("{}", n as i64)
    } else {
        format!("{n}")
    }
}
