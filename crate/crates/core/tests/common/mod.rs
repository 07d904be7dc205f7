#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::path::PathBuf;

use proptest::prelude::*;
use vgs_core::dom::{Document, NodeId};

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

pub fn corpus() -> Vec<(String, String)> {
    let mut pages: Vec<(String, String)> = std::fs::read_dir(fixtures_dir().join("corpus"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "html"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap()))
        .collect();
    pages.sort();
    pages
}

/// Generated element tree. Tag names are limited to ones the HTML parser
/// never restructures when nested.
#[derive(Debug, Clone)]
pub enum Tree {
    Text(String),
    Elem { tag: &'static str, class: Option<&'static str>, children: Vec<Tree> },
}

const TAGS: &[&str] = &["div", "span", "section", "article", "em", "strong", "aside", "nav", "header", "footer"];
const WORDS: &[&str] = &["lorem", "ipsum", "dolor", "sit", "amet", "price", "title", "10.5"];

pub fn tree_strategy() -> impl Strategy<Value = Tree> {
    let leaf = prop_oneof![
        prop::collection::vec(prop::sample::select(WORDS), 1..4).prop_map(|w| Tree::Text(w.join(" "))),
        (prop::sample::select(TAGS), prop::option::of(prop::sample::select(&["a", "b", "c"][..])))
            .prop_map(|(tag, class)| Tree::Elem { tag, class, children: vec![] }),
    ];
    leaf.prop_recursive(5, 60, 6, |inner| {
        (
            prop::sample::select(TAGS),
            prop::option::of(prop::sample::select(&["a", "b", "c"][..])),
            prop::collection::vec(inner, 0..6),
        )
            .prop_map(|(tag, class, children)| Tree::Elem { tag, class, children })
    })
}

pub fn render(tree: &Tree, out: &mut String) {
    match tree {
        Tree::Text(t) => out.push_str(t),
        Tree::Elem { tag, class, children } => {
            out.push('<');
            out.push_str(tag);
            if let Some(c) = class {
                out.push_str(&format!(" class=\"{c}\""));
            }
            out.push('>');
            for c in children {
                render(c, out);
            }
            out.push_str(&format!("</{tag}>"));
        }
    }
}

pub fn page_strategy() -> impl Strategy<Value = String> {
    prop::collection::vec(tree_strategy(), 1..4).prop_map(|trees| {
        let mut s = String::from("<html><head></head><body>");
        for t in &trees {
            render(t, &mut s);
        }
        s.push_str("</body></html>");
        s
    })
}

/// Element distances from `anchor` computed by BFS over an adjacency list
/// built by comparing every pair of elements.
pub fn bfs_oracle(doc: &Document, anchor: NodeId, d: usize) -> BTreeSet<NodeId> {
    let elems = doc.all_elements();
    let siblings_between = |a: NodeId, b: NodeId| -> bool {
        let p = doc.parent(a).unwrap();
        let kids: Vec<NodeId> = doc.children(p).iter().copied().filter(|&k| doc.is_element(k)).collect();
        let ia = kids.iter().position(|&k| k == a).unwrap();
        let ib = kids.iter().position(|&k| k == b).unwrap();
        ia.abs_diff(ib) == 1
    };
    let mut adj: HashMap<NodeId, Vec<NodeId>> = HashMap::new();
    for &a in &elems {
        for &b in &elems {
            if a == b {
                continue;
            }
            let edge = doc.parent(a) == Some(b)
                || doc.parent(b) == Some(a)
                || (doc.parent(a).is_some() && doc.parent(a) == doc.parent(b) && siblings_between(a, b));
            if edge {
                adj.entry(a).or_default().push(b);
            }
        }
    }
    let mut seen = HashMap::from([(anchor, 0usize)]);
    let mut q = VecDeque::from([anchor]);
    while let Some(n) = q.pop_front() {
        let dn = seen[&n];
        if dn == d {
            continue;
        }
        for &m in adj.get(&n).map(|v| v.as_slice()).unwrap_or(&[]) {
            if let std::collections::hash_map::Entry::Vacant(e) = seen.entry(m) {
                e.insert(dn + 1);
                q.push_back(m);
            }
        }
    }
    seen.into_keys().collect()
}

/// Whitespace tokens of all text outside script and style elements.
pub fn text_tokens(doc: &Document) -> Vec<String> {
    let mut tokens: Vec<String> = doc
        .descendants(doc.root())
        .into_iter()
        .filter(|&n| doc.is_text(n))
        .filter(|&n| !doc.ancestors(n).any(|a| matches!(doc.tag(a), Some("script" | "style"))))
        .flat_map(|n| doc.text_content(n).split_whitespace().map(str::to_string).collect::<Vec<_>>())
        .collect();
    tokens.sort();
    tokens
}

pub fn bookstore_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join("bookstore")
}

pub fn bookstore_dataset() -> PathBuf {
    bookstore_dir().join("dataset.jsonl")
}

pub fn vgs_transcript() -> PathBuf {
    bookstore_dir().join("transcript_vgs.json")
}

/// Precision and recall by pairing each prediction with the first unused
/// equal gold value.
pub fn brute_force_pr(pred: &[String], gold: &[String]) -> (f64, f64) {
    if pred.is_empty() && gold.is_empty() {
        return (1.0, 1.0);
    }
    if pred.is_empty() || gold.is_empty() {
        return (0.0, 0.0);
    }
    let mut used = vec![false; gold.len()];
    let mut hits = 0;
    for p in pred {
        for (i, g) in gold.iter().enumerate() {
            if !used[i] && g == p {
                used[i] = true;
                hits += 1;
                break;
            }
        }
    }
    (hits as f64 / pred.len() as f64, hits as f64 / gold.len() as f64)
}

/// Random value lists over a small alphabet so collisions are common.
pub fn value_lists() -> impl Strategy<Value = (Vec<String>, Vec<String>)> {
    let list = prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "a b"]).prop_map(String::from), 0..7);
    (list.clone(), list)
}
