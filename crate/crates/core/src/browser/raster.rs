//! Wireframe rasterization for the static engine plus the drawing
//! primitives shared with the marker.

use image::{ImageFormat, Rgba, RgbaImage};

use super::layout::{Layout, PaintKind};
use super::Rect;

pub const WHITE: Rgba<u8> = Rgba([255, 255, 255, 255]);
const TEXT: Rgba<u8> = Rgba([60, 60, 60, 255]);
const LINK: Rgba<u8> = Rgba([30, 80, 200, 255]);
const IMAGE_FILL: Rgba<u8> = Rgba([210, 210, 210, 255]);
const IMAGE_EDGE: Rgba<u8> = Rgba([130, 130, 130, 255]);
const CONTROL: Rgba<u8> = Rgba([170, 170, 170, 255]);

/// Paints the page rows `[y_offset, y_offset + height)`.
pub fn render(layout: &Layout, y_offset: f64, width: u32, height: u32) -> RgbaImage {
    let mut img = RgbaImage::from_pixel(width, height, WHITE);
    let clip = Rect::new(0.0, y_offset, width as f64, height as f64);
    for p in &layout.paints {
        if !p.rect.intersects(&clip) {
            continue;
        }
        let r = Rect::new(p.rect.x, p.rect.y - y_offset, p.rect.w, p.rect.h);
        match p.kind {
            PaintKind::Text | PaintKind::LinkText => {
                let color = if p.kind == PaintKind::Text { TEXT } else { LINK };
                fill(&mut img, Rect::new(r.x, r.y + 5.0, r.w, r.h - 10.0), color);
            }
            PaintKind::Image => {
                fill(&mut img, r, IMAGE_FILL);
                stroke(&mut img, r, 1, IMAGE_EDGE);
                diagonal(&mut img, r, IMAGE_EDGE);
            }
            PaintKind::Control => stroke(&mut img, r, 1, CONTROL),
        }
    }
    img
}

pub fn encode_png(img: &RgbaImage) -> Result<Vec<u8>, image::ImageError> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn decode_png(bytes: &[u8]) -> Result<RgbaImage, image::ImageError> {
    Ok(image::load_from_memory_with_format(bytes, ImageFormat::Png)?.to_rgba8())
}

fn clamp_span(lo: f64, hi: f64, max: u32) -> (u32, u32) {
    let a = lo.round().clamp(0.0, max as f64) as u32;
    let b = hi.round().clamp(0.0, max as f64) as u32;
    (a, b)
}

pub fn fill(img: &mut RgbaImage, r: Rect, color: Rgba<u8>) {
    let (x0, x1) = clamp_span(r.x, r.x + r.w, img.width());
    let (y0, y1) = clamp_span(r.y, r.y + r.h, img.height());
    for y in y0..y1 {
        for x in x0..x1 {
            img.put_pixel(x, y, color);
        }
    }
}

/// Draws a border of `t` pixels just inside `r`.
pub fn stroke(img: &mut RgbaImage, r: Rect, t: u32, color: Rgba<u8>) {
    let t = t as f64;
    fill(img, Rect::new(r.x, r.y, r.w, t.min(r.h)), color);
    fill(img, Rect::new(r.x, r.y + r.h - t, r.w, t.min(r.h)), color);
    fill(img, Rect::new(r.x, r.y, t.min(r.w), r.h), color);
    fill(img, Rect::new(r.x + r.w - t, r.y, t.min(r.w), r.h), color);
}

fn diagonal(img: &mut RgbaImage, r: Rect, color: Rgba<u8>) {
    let steps = r.w.max(r.h).ceil() as u32;
    for i in 0..steps {
        let f = i as f64 / steps.max(1) as f64;
        let x = (r.x + f * r.w).floor();
        for y in [(r.y + f * r.h).floor(), (r.y + r.h - f * r.h).floor()] {
            if x >= 0.0 && y >= 0.0 && (x as u32) < img.width() && (y as u32) < img.height() {
                img.put_pixel(x as u32, y as u32, color);
            }
        }
    }
}

/// 3×5 digit glyphs, one row per entry, most significant bit on the left.
const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

pub const GLYPH_SCALE: u32 = 2;
pub const GLYPH_WIDTH: u32 = 3 * GLYPH_SCALE;
pub const GLYPH_HEIGHT: u32 = 5 * GLYPH_SCALE;
pub const GLYPH_GAP: u32 = GLYPH_SCALE;

pub fn text_width(digits: &str) -> u32 {
    let n = digits.len() as u32;
    n * GLYPH_WIDTH + n.saturating_sub(1) * GLYPH_GAP
}

/// Draws decimal digits with the top-left corner at `(x, y)`.
pub fn draw_digits(img: &mut RgbaImage, x: f64, y: f64, digits: &str, color: Rgba<u8>) {
    let mut cx = x;
    for ch in digits.chars() {
        let Some(d) = ch.to_digit(10) else { continue };
        for (row, bits) in DIGITS[d as usize].iter().enumerate() {
            for col in 0..3 {
                if bits & (0b100 >> col) != 0 {
                    let s = GLYPH_SCALE as f64;
                    fill(img, Rect::new(cx + col as f64 * s, y + row as f64 * s, s, s), color);
                }
            }
        }
        cx += (GLYPH_WIDTH + GLYPH_GAP) as f64;
    }
}

/// Reads back digits drawn by [`draw_digits`] in `color`.
pub fn read_digits(img: &RgbaImage, x: u32, y: u32, count: usize, color: Rgba<u8>) -> Option<String> {
    let mut out = String::new();
    for i in 0..count as u32 {
        let gx = x + i * (GLYPH_WIDTH + GLYPH_GAP);
        let mut rows = [0u8; 5];
        for (row, bits) in rows.iter_mut().enumerate() {
            for col in 0..3u32 {
                let px = gx + col * GLYPH_SCALE;
                let py = y + row as u32 * GLYPH_SCALE;
                if px < img.width() && py < img.height() && *img.get_pixel(px, py) == color {
                    *bits |= 0b100 >> col;
                }
            }
        }
        let d = DIGITS.iter().position(|g| *g == rows)?;
        out.push(char::from_digit(d as u32, 10)?);
    }
    Some(out)
}
