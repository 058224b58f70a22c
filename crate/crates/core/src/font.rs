//! 5x7 bitmap font used to print card labels, stamp cell digits, and build
//! the recognizer's glyph bank.

use crate::imagecore::GrayImage;

pub const GLYPH_W: usize = 5;
pub const GLYPH_H: usize = 7;

/// Rows top to bottom; bit 4 is the leftmost column.
fn glyph_rows(c: char) -> Option<[u8; 7]> {
    Some(match c {
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        'A' => [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'B' => [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E],
        'C' => [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
        'D' => [0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C],
        'E' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F],
        'F' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10],
        'G' => [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F],
        'H' => [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'I' => [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
        'J' => [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C],
        'K' => [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11],
        'L' => [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F],
        'M' => [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11],
        'N' => [0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11],
        'O' => [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'P' => [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10],
        'Q' => [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D],
        'R' => [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11],
        'S' => [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
        'T' => [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        'U' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'V' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04],
        'W' => [0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A],
        'X' => [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11],
        'Y' => [0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04],
        'Z' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C],
        ',' => [0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08],
        '-' => [0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00],
        '/' => [0x00, 0x01, 0x02, 0x04, 0x08, 0x10, 0x00],
        ':' => [0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00],
        '#' => [0x0A, 0x0A, 0x1F, 0x0A, 0x1F, 0x0A, 0x0A],
        '$' => [0x04, 0x0F, 0x14, 0x0E, 0x05, 0x1E, 0x04],
        ' ' => [0x00; 7],
        _ => return None,
    })
}

/// Whether the glyph cell `(col, row)` of `c` is inked.
pub fn glyph_bit(c: char, col: usize, row: usize) -> bool {
    glyph_rows(c.to_ascii_uppercase()).is_some_and(|rows| rows[row] & (1 << (GLYPH_W - 1 - col)) != 0)
}

pub fn is_supported(c: char) -> bool {
    glyph_rows(c.to_ascii_uppercase()).is_some()
}

/// Horizontal advance of one character at `scale`.
pub fn advance(scale: usize) -> usize {
    (GLYPH_W + 1) * scale
}

/// Pixel width of `text` at `scale` (no trailing gap).
pub fn text_width(text: &str, scale: usize) -> usize {
    let n = text.chars().count();
    if n == 0 {
        0
    } else {
        n * advance(scale) - scale
    }
}

pub fn text_height(scale: usize) -> usize {
    GLYPH_H * scale
}

/// Stamps one character with its top-left at `(x, y)`; ink is `value`.
/// `thickness` extra pixels widen each stroke to the right and down.
pub fn draw_char(img: &mut GrayImage, c: char, x: isize, y: isize, scale: usize, thickness: usize, value: u8) {
    for row in 0..GLYPH_H {
        for col in 0..GLYPH_W {
            if !glyph_bit(c, col, row) {
                continue;
            }
            for dy in 0..scale + thickness {
                for dx in 0..scale + thickness {
                    let px = x + (col * scale + dx) as isize;
                    let py = y + (row * scale + dy) as isize;
                    if px >= 0 && py >= 0 && (px as usize) < img.width() && (py as usize) < img.height() {
                        img.set(px as usize, py as usize, value);
                    }
                }
            }
        }
    }
}

pub fn draw_text(img: &mut GrayImage, text: &str, x: isize, y: isize, scale: usize, value: u8) {
    for (i, c) in text.chars().enumerate() {
        draw_char(img, c, x + (i * advance(scale)) as isize, y, scale, 0, value);
    }
}

/// Renders `text` on a white canvas with `margin` pixels of padding.
pub fn render_text(text: &str, scale: usize, margin: usize) -> GrayImage {
    let w = text_width(text, scale).max(1) + 2 * margin;
    let h = text_height(scale) + 2 * margin;
    let mut img = GrayImage::filled(w, h, 255).expect("non-empty canvas");
    draw_text(&mut img, text, margin as isize, margin as isize, scale, 0);
    img
}
