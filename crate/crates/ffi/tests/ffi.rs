use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::ptr;

use vgs_ffi::*;

const PAGE: &str = r#"<html><head><style>p{}</style></head><body>
<div class="nav"><a href="/">Home</a></div>
<div class="product"><h1 class="title">Winter Ledger</h1><img class="cover" src="../covers/w.jpg" alt="Cover">
<p class="price" onclick="x()">£17.99</p><ul><li>History</li><li>Economics</li></ul></div>
<script>var t = 1;</script></body></html>"#;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take(p: *mut c_char) -> String {
    assert!(!p.is_null());
    let s = CStr::from_ptr(p).to_str().unwrap().to_string();
    vgs_string_free(p);
    s
}

unsafe fn last_error() -> String {
    let p = vgs_last_error_message();
    assert!(!p.is_null());
    CStr::from_ptr(p).to_string_lossy().into_owned()
}

unsafe fn parse(html: &str) -> *mut VgsDocument {
    let mut doc = ptr::null_mut();
    assert_eq!(vgs_document_parse(c(html).as_ptr(), &mut doc), VgsStatus::Ok);
    doc
}

#[test]
fn document_queries() {
    unsafe {
        let doc = parse(PAGE);
        let mut out = ptr::null_mut();
        assert_eq!(vgs_document_evaluate(doc, c("//ul/li").as_ptr(), &mut out), VgsStatus::Ok);
        assert_eq!(take(out), r#"["History","Economics"]"#);
        assert!(vgs_last_error_message().is_null());

        assert_eq!(vgs_document_absolute_xpath(doc, c("//h1").as_ptr(), &mut out), VgsStatus::Ok);
        assert_eq!(take(out), "/html/body/div[2]/h1");

        assert_eq!(vgs_document_local_segment(doc, c("//p[@class='price']").as_ptr(), 0, &mut out), VgsStatus::Ok);
        assert_eq!(take(out), r#"<p class="price" onclick="x()">£17.99</p>"#);
        assert_eq!(vgs_document_local_segment(doc, c("//p[@class='price']").as_ptr(), 1, &mut out), VgsStatus::Ok);
        let seg = take(out);
        assert!(seg.contains("<img") && seg.contains("<ul>") && !seg.contains("Home"), "{seg}");
        vgs_document_free(doc);
    }
}

#[test]
fn error_codes_and_messages() {
    unsafe {
        let doc = parse(PAGE);
        let mut out = ptr::null_mut();
        assert_eq!(vgs_document_evaluate(doc, c("//h1[").as_ptr(), &mut out), VgsStatus::InvalidXpath);
        assert!(out.is_null());
        assert!(last_error().contains("XPath"));
        assert_eq!(vgs_document_absolute_xpath(doc, c("//li").as_ptr(), &mut out), VgsStatus::NotFound);
        assert_eq!(vgs_document_local_segment(doc, c("//h1").as_ptr(), -1, &mut out), VgsStatus::InvalidArgument);
        assert_eq!(vgs_document_evaluate(ptr::null(), c("//h1").as_ptr(), &mut out), VgsStatus::NullPointer);
        assert_eq!(vgs_document_evaluate(doc, ptr::null(), &mut out), VgsStatus::NullPointer);
        assert_eq!(vgs_document_evaluate(doc, c("//h1").as_ptr(), ptr::null_mut()), VgsStatus::NullPointer);
        let bad_utf8 = [0xffu8, 0xfe, 0];
        assert_eq!(vgs_document_evaluate(doc, bad_utf8.as_ptr().cast(), &mut out), VgsStatus::InvalidUtf8);
        assert!(last_error().contains("UTF-8"));
        vgs_document_free(doc);
        vgs_document_free(ptr::null_mut());
        vgs_string_free(ptr::null_mut());
    }
}

#[test]
fn simplify_strips_noise() {
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(vgs_simplify_html(c(PAGE).as_ptr(), &mut out), VgsStatus::Ok);
        let s = take(out);
        assert!(!s.contains("<script") && !s.contains("<style") && !s.contains("onclick"));
        assert!(s.contains(r#"<img class="cover" src="../covers/w.jpg" alt="Cover">"#));
    }
}

#[test]
fn wrappers_apply_to_documents() {
    let json = serde_json::json!({
        "query_id": "q", "source_url": "file:///shop/p/a.html", "method": "vgs",
        "generated_at": "1970-01-01T00:00:00Z", "duration_ms": 0,
        "entries": {"title": "//h1", "cover image": "//img/@src", "genre": "//li"},
        "traces": []
    })
    .to_string();
    unsafe {
        let mut w = ptr::null_mut();
        assert_eq!(vgs_wrapper_from_json(c(&json).as_ptr(), &mut w), VgsStatus::Ok);
        assert_eq!(vgs_wrapper_entry_count(w), 3);
        let doc = parse(PAGE);
        let mut out = ptr::null_mut();
        assert_eq!(vgs_wrapper_apply(w, doc, c("file:///shop/p/b.html").as_ptr(), &mut out), VgsStatus::Ok);
        let values: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(
            values,
            serde_json::json!({"cover image": ["file:///shop/covers/w.jpg"], "genre": ["History", "Economics"], "title": ["Winter Ledger"]})
        );
        assert_eq!(vgs_wrapper_apply(w, doc, ptr::null(), &mut out), VgsStatus::Ok);
        assert!(take(out).contains("../covers/w.jpg"));
        assert_eq!(vgs_wrapper_apply(w, doc, c("not a url").as_ptr(), &mut out), VgsStatus::InvalidArgument);
        vgs_wrapper_free(w);
        vgs_document_free(doc);

        let mut w = ptr::null_mut();
        assert_eq!(vgs_wrapper_from_json(c("{").as_ptr(), &mut w), VgsStatus::InvalidJson);
        let broken = json.replace("//h1", "//h1[");
        assert_eq!(vgs_wrapper_from_json(c(&broken).as_ptr(), &mut w), VgsStatus::InvalidXpath);
        assert!(w.is_null());
        assert_eq!(vgs_wrapper_entry_count(ptr::null()), 0);
    }
}

#[test]
fn score_values() {
    unsafe {
        let mut m = VgsMetrics { precision: -1.0, recall: -1.0, f1: -1.0 };
        assert_eq!(vgs_score_values(c(r#"["a","b","b"]"#).as_ptr(), c(r#"["b","c"]"#).as_ptr(), &mut m), VgsStatus::Ok);
        assert_eq!((m.precision, m.recall), (1.0 / 3.0, 0.5));
        assert!((m.f1 - 0.4).abs() < 1e-12);
        assert_eq!(vgs_score_values(c("[]").as_ptr(), c("[]").as_ptr(), &mut m), VgsStatus::Ok);
        assert_eq!(m, VgsMetrics { precision: 1.0, recall: 1.0, f1: 1.0 });
        assert_eq!(vgs_score_values(c("[1]").as_ptr(), c("[]").as_ptr(), &mut m), VgsStatus::InvalidJson);
        assert!(last_error().starts_with("predicted_json"));
    }
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(vgs_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn header() -> String {
    std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/vgs.h")).unwrap()
}

#[test]
fn header_declares_every_export() {
    let src = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let h = header();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert_eq!(exports.len(), 14);
    for name in exports {
        assert!(h.contains(&format!("{name}(")), "{name} missing from header");
    }
    for code in ["VGS_STATUS_OK = 0", "VGS_STATUS_INVALID_XPATH = 4", "typedef struct VgsDocument VgsDocument;"] {
        assert!(h.contains(code), "{code}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Some(cc) = ["cc", "gcc", "clang"].into_iter().find(|c| std::process::Command::new(c).arg("--version").output().is_ok()) else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let dir = tempfile_dir();
    let main = dir.join("main.c");
    std::fs::write(&main, "#include \"vgs.h\"\nint main(void) { VgsMetrics m; return vgs_score_values(\"[]\", \"[]\", &m) == VGS_STATUS_OK ? 0 : 1; }\n").unwrap();
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&main)
        .status()
        .unwrap();
    assert!(status.success());
}

fn tempfile_dir() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("ffi-header");
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
