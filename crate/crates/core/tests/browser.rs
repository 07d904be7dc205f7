mod common;

use proptest::prelude::*;
use vgs_core::browser::raster::decode_png;
use vgs_core::browser::*;

use common::{bookstore_dir, corpus};

fn book1() -> PageSession {
    let url = url::Url::from_file_path(bookstore_dir().join("pages/book1.html")).unwrap();
    PageSession::load(url.as_str(), DEFAULT_VIEWPORT).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 300, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn tiling_covers_the_page(h in 1u64..=50_000, vh in prop::sample::select(vec![600u32, 1100, 1357])) {
        let vp = Viewport { width: 1280, height: vh };
        let regions = tile(h, vp);
        prop_assert_eq!(regions.len() as u64, h.div_ceil(vh as u64));
        prop_assert_eq!(regions.iter().map(|r| r.height).sum::<u64>(), h);
        for (i, r) in regions.iter().enumerate() {
            prop_assert_eq!(r.index, i);
            prop_assert_eq!(r.y_offset, i as u64 * vh as u64);
            prop_assert!(r.height >= 1 && r.height <= vh as u64);
            prop_assert_eq!(r.width, 1280);
            prop_assert_eq!(r.id(), format!("region_{i}"));
        }
    }
}

#[test]
fn tiling_examples() {
    let heights: Vec<u64> = tile(2500, DEFAULT_VIEWPORT).iter().map(|r| r.height).collect();
    assert_eq!(heights, [1100, 1100, 300]);
    assert_eq!(tile(1100, DEFAULT_VIEWPORT).len(), 1);
    assert_eq!(tile(1101, DEFAULT_VIEWPORT).len(), 2);
}

#[test]
fn viewport_parsing() {
    assert_eq!("1280x1100".parse::<Viewport>().unwrap(), DEFAULT_VIEWPORT);
    for bad in ["0x10", "10x0", "abc", "10", "10x", "-5x10"] {
        assert!(matches!(bad.parse::<Viewport>(), Err(BrowserError::InvalidViewport(_))), "{bad}");
    }
}

#[test]
fn fixture_session_geometry() {
    let mut s = book1();
    assert_eq!(s.page_height(), 620.0);
    let regions = s.tile_regions().unwrap();
    assert_eq!(regions.len(), 1);
    let shot = decode_png(regions[0].screenshot.as_ref().unwrap()).unwrap();
    assert_eq!(shot.dimensions(), (1280, 620));
    assert_eq!(s.evaluate_xpath("//h1").unwrap(), ["The Silent Orchard"]);
    assert_eq!(s.evaluate_xpath("//img/@alt").unwrap(), ["Cover of The Silent Orchard"]);
    let img = s.node_for_xpath("/html/body/div[2]/img").unwrap();
    assert_eq!(s.rect(img), Some(Rect::new(0.0, 40.0, 160.0, 240.0)));
    let again = s.capture(&regions[0]).unwrap();
    assert_eq!(again, shot, "captures are deterministic");
}

#[test]
fn hit_testing_round_trips() {
    let mut checked = 0;
    for (name, html) in corpus().into_iter().take(10) {
        let mut s = PageSession::from_html(&html, "file:///c.html", DEFAULT_VIEWPORT).unwrap();
        let doc = s.document().unwrap().clone();
        for id in doc.all_elements() {
            if !s.is_visible(id) {
                continue;
            }
            let r = s.element_ref(id).unwrap();
            assert_eq!(s.node_for_xpath(&r.absolute_xpath), Some(id), "{name}");
            let (cx, cy) = r.client_rect.center();
            if cx >= 1280.0 {
                continue;
            }
            let hit = s.element_at(cx, cy).unwrap();
            let hit_id = s.node_for_xpath(&hit.absolute_xpath).unwrap();
            assert!(hit_id == id || doc.is_ancestor(id, hit_id), "{name}: {} hit {}", r.absolute_xpath, hit.absolute_xpath);
            if doc.element_children(id).next().is_none() {
                assert_eq!(hit_id, id, "{name}: leaf {}", r.absolute_xpath);
            }
            checked += 1;
        }
    }
    assert!(checked > 200, "{checked}");
}

#[test]
fn session_errors() {
    let mut s = book1();
    assert!(matches!(s.element_at(-1.0, 5.0), Err(BrowserError::OutOfBounds { .. })));
    assert!(matches!(s.element_at(5.0, 620.0), Err(BrowserError::OutOfBounds { .. })));
    assert!(matches!(s.evaluate_xpath("//h1["), Err(BrowserError::XPathSyntax(_))));
    s.close();
    assert!(s.is_closed());
    assert!(matches!(s.evaluate_xpath("//h1"), Err(BrowserError::SessionClosed)));
    assert!(matches!(s.tile_regions(), Err(BrowserError::SessionClosed)));
    assert!(matches!(
        PageSession::load("file:///nonexistent/page.html", DEFAULT_VIEWPORT),
        Err(BrowserError::NavigationFailed { .. })
    ));
    assert!(matches!(PageSession::load("not a url", DEFAULT_VIEWPORT), Err(BrowserError::NavigationFailed { .. })));
}

#[test]
fn hidden_content_has_no_box() {
    let s = PageSession::from_html(
        "<div><p>shown</p><p style=\"display: none\">gone</p><p hidden>also gone</p></div>",
        "file:///h.html",
        DEFAULT_VIEWPORT,
    )
    .unwrap();
    let shown = s.node_for_xpath("/html/body/div/p[1]").unwrap();
    let gone = s.node_for_xpath("/html/body/div/p[2]").unwrap();
    let also = s.node_for_xpath("/html/body/div/p[3]").unwrap();
    assert!(s.is_visible(shown));
    assert!(!s.is_visible(gone) && !s.is_visible(also));
    assert_eq!(s.page_height(), 20.0);
}
