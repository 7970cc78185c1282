//! Minimal line charts rendered straight to PNG: axes, a light grid, numeric
//! tick labels in a 3x5 pixel font and one polyline per series.

use std::path::Path;

use image::{Rgb, RgbImage};

const WIDTH: u32 = 640;
const HEIGHT: u32 = 480;
const MARGIN_LEFT: i64 = 70;
const MARGIN_RIGHT: i64 = 20;
const MARGIN_TOP: i64 = 20;
const MARGIN_BOTTOM: i64 = 50;
const TICKS: usize = 5;
const FONT_SCALE: i64 = 2;

pub const BLUE: [u8; 3] = [31, 119, 180];
pub const ORANGE: [u8; 3] = [255, 127, 14];
pub const GREEN: [u8; 3] = [44, 160, 44];
pub const GRAY: [u8; 3] = [150, 150, 150];

#[derive(Clone, Debug)]
pub struct Series {
    pub points: Vec<[f64; 2]>,
    pub color: [u8; 3],
}

/// Rows top to bottom, three bits each, most significant bit leftmost.
fn glyph(c: char) -> Option<[u8; 5]> {
    Some(match c {
        '0' => [0b111, 0b101, 0b101, 0b101, 0b111],
        '1' => [0b010, 0b110, 0b010, 0b010, 0b111],
        '2' => [0b111, 0b001, 0b111, 0b100, 0b111],
        '3' => [0b111, 0b001, 0b111, 0b001, 0b111],
        '4' => [0b101, 0b101, 0b111, 0b001, 0b001],
        '5' => [0b111, 0b100, 0b111, 0b001, 0b111],
        '6' => [0b111, 0b100, 0b111, 0b101, 0b111],
        '7' => [0b111, 0b001, 0b001, 0b001, 0b001],
        '8' => [0b111, 0b101, 0b111, 0b101, 0b111],
        '9' => [0b111, 0b101, 0b111, 0b001, 0b111],
        '.' => [0, 0, 0, 0, 0b010],
        '-' => [0, 0, 0b111, 0, 0],
        _ => return None,
    })
}

struct Canvas {
    img: RgbImage,
}

impl Canvas {
    fn put(&mut self, x: i64, y: i64, color: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as u32) < WIDTH && (y as u32) < HEIGHT {
            self.img.put_pixel(x as u32, y as u32, Rgb(color));
        }
    }

    fn line(&mut self, (x0, y0): (i64, i64), (x1, y1): (i64, i64), color: [u8; 3], thick: bool) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        loop {
            self.put(x, y, color);
            if thick {
                self.put(x + 1, y, color);
                self.put(x, y + 1, color);
                self.put(x + 1, y + 1, color);
            }
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    fn text(&mut self, s: &str, x: i64, y: i64, color: [u8; 3]) {
        let mut cx = x;
        for c in s.chars() {
            if let Some(rows) = glyph(c) {
                for (r, bits) in rows.iter().enumerate() {
                    for col in 0..3 {
                        if bits & (0b100 >> col) != 0 {
                            for (ox, oy) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                                self.put(cx + col * FONT_SCALE + ox, y + r as i64 * FONT_SCALE + oy, color);
                            }
                        }
                    }
                }
            }
            cx += 4 * FONT_SCALE;
        }
    }
}

fn text_width(s: &str) -> i64 {
    s.chars().count() as i64 * 4 * FONT_SCALE
}

fn tick_label(v: f64, span: f64) -> String {
    if span >= 10.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn padded_range(lo: f64, hi: f64) -> (f64, f64) {
    if hi - lo > 1e-12 {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// Draws `series` into a PNG at `path`. Ranges default to the data extent.
pub fn line_chart(
    path: &Path,
    series: &[Series],
    x_range: Option<(f64, f64)>,
    y_range: Option<(f64, f64)>,
) -> Result<(), String> {
    let finite = || series.iter().flat_map(|s| s.points.iter()).filter(|p| p[0].is_finite() && p[1].is_finite());
    let extent = |k: usize| {
        finite().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[k]), hi.max(p[k])))
    };
    let (x0, x1) = padded_range(x_range.map_or_else(|| extent(0).0, |r| r.0), x_range.map_or_else(|| extent(0).1, |r| r.1));
    let (y0, y1) = padded_range(y_range.map_or_else(|| extent(1).0, |r| r.0), y_range.map_or_else(|| extent(1).1, |r| r.1));
    // An empty chart has an infinite extent.
    let (x0, x1) = if x0.is_finite() && x1.is_finite() { (x0, x1) } else { (0.0, 1.0) };
    let (y0, y1) = if y0.is_finite() && y1.is_finite() { (y0, y1) } else { (0.0, 1.0) };

    let mut c = Canvas {
        img: RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255])),
    };
    let (left, right) = (MARGIN_LEFT, WIDTH as i64 - MARGIN_RIGHT);
    let (top, bottom) = (MARGIN_TOP, HEIGHT as i64 - MARGIN_BOTTOM);
    let px = |x: f64| left + ((x - x0) / (x1 - x0) * (right - left) as f64).round() as i64;
    let py = |y: f64| bottom - ((y - y0) / (y1 - y0) * (bottom - top) as f64).round() as i64;

    for i in 0..=TICKS {
        let f = i as f64 / TICKS as f64;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (gx, gy) = (px(xv), py(yv));
        c.line((gx, top), (gx, bottom), [225, 225, 225], false);
        c.line((left, gy), (right, gy), [225, 225, 225], false);
        let xl = tick_label(xv, x1 - x0);
        c.text(&xl, gx - text_width(&xl) / 2, bottom + 10, [0, 0, 0]);
        let yl = tick_label(yv, y1 - y0);
        c.text(&yl, left - 8 - text_width(&yl), gy - 5, [0, 0, 0]);
    }
    c.line((left, top), (left, bottom), [0, 0, 0], false);
    c.line((left, bottom), (right, bottom), [0, 0, 0], false);

    for s in series {
        let pts: Vec<(i64, i64)> = s
            .points
            .iter()
            .filter(|p| p[0].is_finite() && p[1].is_finite())
            .map(|p| (px(p[0].clamp(x0, x1)), py(p[1].clamp(y0, y1))))
            .collect();
        if pts.len() == 1 {
            c.line(pts[0], pts[0], s.color, true);
        }
        for w in pts.windows(2) {
            c.line(w[0], w[1], s.color, true);
        }
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    }
    c.img.save(path).map_err(|e| format!("{}: {e}", path.display()))
}
