//! Static PNG figures drawn directly into RGB buffers with an 8x8 bitmap font.

use std::path::Path;

use anyhow::Context;
use font8x8::UnicodeFonts;
use image::{Rgb, RgbImage};

pub type Color = Rgb<u8>;

pub const WHITE: Color = Rgb([255, 255, 255]);
pub const BLACK: Color = Rgb([0, 0, 0]);
pub const GRAY: Color = Rgb([200, 200, 200]);
pub const DARK_GRAY: Color = Rgb([100, 100, 100]);
pub const BLUE: Color = Rgb([31, 119, 180]);
pub const ORANGE: Color = Rgb([255, 127, 14]);
pub const GREEN: Color = Rgb([44, 160, 44]);
pub const RED: Color = Rgb([214, 39, 40]);

const GLYPH: u32 = 8;

pub struct Canvas {
    img: RgbImage,
}

impl Canvas {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            img: RgbImage::from_pixel(width, height, WHITE),
        }
    }

    pub fn width(&self) -> u32 {
        self.img.width()
    }

    pub fn height(&self) -> u32 {
        self.img.height()
    }

    fn put(&mut self, x: i64, y: i64, c: Color) {
        if x >= 0 && y >= 0 && (x as u32) < self.img.width() && (y as u32) < self.img.height() {
            self.img.put_pixel(x as u32, y as u32, c);
        }
    }

    pub fn fill_rect(&mut self, x: i64, y: i64, w: i64, h: i64, c: Color) {
        for yy in y..y + h {
            for xx in x..x + w {
                self.put(xx, yy, c);
            }
        }
    }

    pub fn stroke_rect(&mut self, x: i64, y: i64, w: i64, h: i64, c: Color) {
        self.fill_rect(x, y, w, 1, c);
        self.fill_rect(x, y + h - 1, w, 1, c);
        self.fill_rect(x, y, 1, h, c);
        self.fill_rect(x + w - 1, y, 1, h, c);
    }

    /// Bresenham line with a square brush of side `thickness`.
    pub fn line(&mut self, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Color, thickness: i64) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        let half = thickness / 2;
        loop {
            self.fill_rect(x - half, y - half, thickness, thickness, c);
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

    pub fn text(&mut self, x: i64, y: i64, s: &str, c: Color, scale: u32) {
        let mut cx = x;
        for ch in s.chars() {
            let glyph = font8x8::BASIC_FONTS.get(ch).unwrap_or([0; 8]);
            for (row, bits) in glyph.iter().enumerate() {
                for col in 0..GLYPH {
                    if bits >> col & 1 == 1 {
                        self.fill_rect(
                            cx + (col * scale) as i64,
                            y + (row as u32 * scale) as i64,
                            scale as i64,
                            scale as i64,
                            c,
                        );
                    }
                }
            }
            cx += (GLYPH * scale) as i64;
        }
    }

    pub fn text_centered(&mut self, cx: i64, y: i64, s: &str, c: Color, scale: u32) {
        self.text(cx - text_width(s, scale) / 2, y, s, c, scale);
    }

    /// Draws `src` with nearest-neighbour upscaling by an integer factor.
    pub fn blit(&mut self, x: i64, y: i64, src: &RgbImage, scale: u32) {
        for (sx, sy, p) in src.enumerate_pixels() {
            self.fill_rect(
                x + (sx * scale) as i64,
                y + (sy * scale) as i64,
                scale as i64,
                scale as i64,
                *p,
            );
        }
    }

    pub fn into_image(self) -> RgbImage {
        self.img
    }
}

pub fn text_width(s: &str, scale: u32) -> i64 {
    (s.chars().count() as u32 * GLYPH * scale) as i64
}

pub fn save_png(img: &RgbImage, path: &Path) -> anyhow::Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .with_context(|| format!("writing {}", path.display()))
}

/// Up to ~6 round tick values covering `[lo, hi]`.
pub fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = if hi > lo { hi - lo } else { 1.0 };
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() * step;
    (0..)
        .map(|k| first + k as f64 * step)
        .take_while(|t| *t <= hi + step * 1e-9)
        .collect()
}

fn tick_label(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.round() {
        format!("{v:.0}")
    } else if (v * 10.0 - (v * 10.0).round()).abs() < 1e-9 {
        format!("{v:.1}")
    } else {
        format!("{v:.2}")
    }
}

struct Frame {
    left: i64,
    top: i64,
    width: i64,
    height: i64,
}

impl Frame {
    fn bottom(&self) -> i64 {
        self.top + self.height
    }
}

fn draw_y_axis(canvas: &mut Canvas, frame: &Frame, lo: f64, hi: f64) -> impl Fn(f64) -> i64 {
    let (top, h) = (frame.top, frame.height);
    let y_of = move |v: f64| top + h - ((v - lo) / (hi - lo) * h as f64).round() as i64;
    for t in nice_ticks(lo, hi) {
        let y = y_of(t);
        canvas.fill_rect(frame.left, y, frame.width, 1, GRAY);
        let label = tick_label(t);
        canvas.text(frame.left - 6 - text_width(&label, 1), y - 4, &label, BLACK, 1);
    }
    canvas.fill_rect(frame.left, frame.top, 1, frame.height + 1, BLACK);
    canvas.fill_rect(frame.left, frame.bottom(), frame.width, 1, BLACK);
    y_of
}

/// Vertical bars with the value printed above each.
pub fn bar_chart(title: &str, labels: &[&str], values: &[f64]) -> RgbImage {
    let mut c = Canvas::new(720, 420);
    c.text_centered(360, 12, title, BLACK, 2);
    let frame = Frame {
        left: 70,
        top: 50,
        width: 630,
        height: 310,
    };
    let max = values.iter().cloned().fold(0.0, f64::max).max(1.0);
    let y_of = draw_y_axis(&mut c, &frame, 0.0, max * 1.1);
    let slot = frame.width / labels.len().max(1) as i64;
    for (i, (label, &v)) in labels.iter().zip(values).enumerate() {
        let x = frame.left + i as i64 * slot + slot / 6;
        let y = y_of(v);
        c.fill_rect(x, y, slot * 2 / 3, frame.bottom() - y, BLUE);
        let cx = x + slot / 3;
        c.text_centered(cx, y - 12, &tick_label(v), BLACK, 1);
        c.text_centered(cx, frame.bottom() + 10, label, BLACK, 1);
    }
    c.into_image()
}

/// Per-epoch curves, x = epoch starting at 1, with a legend.
pub fn line_chart(title: &str, y_label: &str, series: &[(&str, Color, &[f64])]) -> RgbImage {
    let mut c = Canvas::new(720, 440);
    c.text_centered(360, 12, title, BLACK, 2);
    let frame = Frame {
        left: 80,
        top: 50,
        width: 610,
        height: 320,
    };
    let finite = series.iter().flat_map(|s| s.2.iter()).filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
        (a.min(v), b.max(v))
    });
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = (hi - lo) * 0.05;
    let (lo, hi) = (lo - pad, hi + pad);
    let y_of = draw_y_axis(&mut c, &frame, lo, hi);
    let n = series.iter().map(|s| s.2.len()).max().unwrap_or(0).max(1);
    let x_of = |i: usize| {
        if n == 1 {
            frame.left + frame.width / 2
        } else {
            frame.left + (i as f64 / (n - 1) as f64 * frame.width as f64).round() as i64
        }
    };
    for t in nice_ticks(1.0, n as f64) {
        if t.fract() == 0.0 {
            let x = x_of(t as usize - 1);
            c.fill_rect(x, frame.bottom(), 1, 5, BLACK);
            c.text_centered(x, frame.bottom() + 10, &tick_label(t), BLACK, 1);
        }
    }
    c.text_centered(frame.left + frame.width / 2, frame.bottom() + 30, "epoch", BLACK, 1);
    c.text(8, frame.top - 20, y_label, BLACK, 1);

    for (_, color, values) in series {
        let pts: Vec<(i64, i64)> = values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, &v)| (x_of(i), y_of(v)))
            .collect();
        for w in pts.windows(2) {
            c.line(w[0], w[1], *color, 2);
        }
        for &(x, y) in &pts {
            c.fill_rect(x - 2, y - 2, 5, 5, *color);
        }
    }
    let mut ly = frame.top + 8;
    for (name, color, _) in series {
        let lx = frame.left + frame.width - 120;
        c.fill_rect(lx, ly + 2, 16, 4, *color);
        c.text(lx + 22, ly, name, BLACK, 1);
        ly += 16;
    }
    c.into_image()
}

/// White-to-blue count heatmap; rows are true labels, columns predictions.
pub fn heatmap(title: &str, labels: &[&str], counts: &[Vec<u64>]) -> RgbImage {
    let k = labels.len() as i64;
    let cell = 64;
    let left = 110;
    let top = 60;
    let mut c = Canvas::new((left + k * cell + 30) as u32, (top + k * cell + 60) as u32);
    c.text_centered(c.width() as i64 / 2, 12, title, BLACK, 2);
    let max = counts.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
    for (i, row) in counts.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let t = v as f64 / max;
            let mix = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * t).round() as u8;
            let color = Rgb([mix(247, 8), mix(251, 48), mix(255, 107)]);
            let (x, y) = (left + j as i64 * cell, top + i as i64 * cell);
            c.fill_rect(x, y, cell, cell, color);
            c.stroke_rect(x, y, cell, cell, GRAY);
            let ink = if t > 0.5 { WHITE } else { BLACK };
            c.text_centered(x + cell / 2, y + cell / 2 - 4, &v.to_string(), ink, 1);
        }
    }
    for (i, label) in labels.iter().enumerate() {
        let y = top + i as i64 * cell + cell / 2 - 4;
        c.text(left - 8 - text_width(label, 1), y, label, BLACK, 1);
        let x = left + i as i64 * cell + cell / 2;
        c.text_centered(x, top + k * cell + 8, label, BLACK, 1);
    }
    c.text_centered(left + k * cell / 2, top + k * cell + 30, "predicted", BLACK, 1);
    c.text(4, top - 16, "true", BLACK, 1);
    c.into_image()
}

pub struct Tile {
    pub image: RgbImage,
    pub caption: String,
    pub color: Color,
}

/// Tiles upscaled by `scale`, laid out `cols` per row, captioned underneath.
pub fn tile_grid(title: &str, tiles: &[Tile], cols: usize, scale: u32) -> RgbImage {
    let cols = cols.max(1);
    let rows = tiles.len().div_ceil(cols).max(1);
    let tw = tiles.iter().map(|t| t.image.width()).max().unwrap_or(48) * scale;
    let th = tiles.iter().map(|t| t.image.height()).max().unwrap_or(48) * scale;
    let widest = tiles
        .iter()
        .map(|t| text_width(&t.caption, 1))
        .max()
        .unwrap_or(0)
        .max(tw as i64);
    let (cw, ch) = (widest + 12, th as i64 + 28);
    let top = 40;
    let mut c = Canvas::new(
        (cols as i64 * cw + 12).max(text_width(title, 2) + 20) as u32,
        (top + rows as i64 * ch + 6) as u32,
    );
    c.text_centered(c.width() as i64 / 2, 12, title, BLACK, 2);
    for (i, tile) in tiles.iter().enumerate() {
        let (r, col) = ((i / cols) as i64, (i % cols) as i64);
        let x = 12 + col * cw + (cw - 12 - (tile.image.width() * scale) as i64) / 2;
        let y = top + r * ch;
        c.blit(x, y, &tile.image, scale);
        c.text_centered(12 + col * cw + (cw - 12) / 2, y + th as i64 + 6, &tile.caption, tile.color, 1);
    }
    c.into_image()
}
