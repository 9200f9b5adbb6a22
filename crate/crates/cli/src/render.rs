//! Grayscale canvases: image grids, row labels, and the loss curve.

use image::GrayImage;

use ddpm_core::RawImage;

/// Pixels between grid cells.
pub const GAP: u32 = 2;
const BACKGROUND: u8 = 255;
const INK: u8 = 0;

/// 3x5 glyphs, one row per byte, bit 2 = leftmost column.
fn glyph(c: char) -> [u8; 5] {
    match c.to_ascii_uppercase() {
        '0' => [7, 5, 5, 5, 7],
        '1' => [2, 6, 2, 2, 7],
        '2' => [7, 1, 7, 4, 7],
        '3' => [7, 1, 7, 1, 7],
        '4' => [5, 5, 7, 1, 1],
        '5' => [7, 4, 7, 1, 7],
        '6' => [7, 4, 7, 5, 7],
        '7' => [7, 1, 1, 2, 2],
        '8' => [7, 5, 7, 5, 7],
        '9' => [7, 5, 7, 1, 7],
        '%' => [5, 1, 2, 4, 5],
        '.' => [0, 0, 0, 0, 2],
        '-' => [0, 0, 7, 0, 0],
        'A' => [2, 5, 7, 5, 5],
        'G' => [7, 4, 5, 5, 7],
        'I' => [7, 2, 2, 2, 7],
        'L' => [4, 4, 4, 4, 7],
        'N' => [6, 5, 5, 5, 5],
        'O' => [7, 5, 5, 5, 7],
        'R' => [6, 5, 6, 5, 5],
        'S' => [7, 4, 7, 1, 7],
        'T' => [7, 2, 2, 2, 2],
        _ => [0; 5],
    }
}

/// Width in pixels of `text` at `scale`.
pub fn text_width(text: &str, scale: u32) -> u32 {
    (text.chars().count() as u32 * 4).saturating_sub(1) * scale
}

pub fn draw_text(canvas: &mut GrayImage, text: &str, x: u32, y: u32, scale: u32) {
    for (i, c) in text.chars().enumerate() {
        let ox = x + i as u32 * 4 * scale;
        for (row, bits) in glyph(c).iter().enumerate() {
            for col in 0..3u32 {
                if bits & (4 >> col) == 0 {
                    continue;
                }
                for dy in 0..scale {
                    for dx in 0..scale {
                        let (px, py) = (ox + col * scale + dx, y + row as u32 * scale + dy);
                        if px < canvas.width() && py < canvas.height() {
                            canvas.put_pixel(px, py, image::Luma([INK]));
                        }
                    }
                }
            }
        }
    }
}

fn blit(canvas: &mut GrayImage, img: &RawImage, x: u32, y: u32) {
    for r in 0..img.height {
        for c in 0..img.width {
            canvas.put_pixel(
                x + c as u32,
                y + r as u32,
                image::Luma([img.pixels[r * img.width + c]]),
            );
        }
    }
}

/// Tiles equally sized images row-major with `ceil(sqrt(n))` columns.
pub fn tile_grid(images: &[RawImage]) -> GrayImage {
    let cols = (images.len() as f64).sqrt().ceil().max(1.0) as usize;
    let rows: Vec<&[RawImage]> = images.chunks(cols).collect();
    labeled_rows(&rows, &[])
}

/// One row of images per entry, optionally with a text label to the left of
/// each row.
pub fn labeled_rows(rows: &[&[RawImage]], labels: &[String]) -> GrayImage {
    let (w, h) = rows
        .iter()
        .flat_map(|r| r.iter())
        .next()
        .map_or((1, 1), |i| (i.width as u32, i.height as u32));
    let scale = (h / 16).max(1);
    let label_w = labels
        .iter()
        .map(|l| text_width(l, scale))
        .max()
        .map_or(0, |m| m + 2 * GAP);
    let cols = rows.iter().map(|r| r.len()).max().unwrap_or(0) as u32;
    let width = label_w + GAP + cols * (w + GAP);
    let height = GAP + rows.len() as u32 * (h + GAP);
    let mut canvas = GrayImage::from_pixel(width, height, image::Luma([BACKGROUND]));
    for (ri, row) in rows.iter().enumerate() {
        let y = GAP + ri as u32 * (h + GAP);
        if let Some(label) = labels.get(ri) {
            let ty = y + h.saturating_sub(5 * scale) / 2;
            draw_text(&mut canvas, label, GAP, ty, scale);
        }
        for (ci, img) in row.iter().enumerate() {
            blit(&mut canvas, img, label_w + GAP + ci as u32 * (w + GAP), y);
        }
    }
    canvas
}

fn line(canvas: &mut GrayImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), value: u8) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        if x >= 0 && y >= 0 && (x as u32) < canvas.width() && (y as u32) < canvas.height() {
            canvas.put_pixel(x as u32, y as u32, image::Luma([value]));
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

/// Epoch-mean loss against epoch, titled "TRAINING LOSS", with the y axis
/// spanning zero to the largest loss.
pub fn loss_curve(losses: &[f64]) -> GrayImage {
    const W: u32 = 360;
    const H: u32 = 220;
    const LEFT: i64 = 40;
    const TOP: i64 = 24;
    const RIGHT: i64 = W as i64 - 12;
    const BOTTOM: i64 = H as i64 - 20;
    let mut canvas = GrayImage::from_pixel(W, H, image::Luma([BACKGROUND]));
    let title = "TRAINING LOSS";
    draw_text(&mut canvas, title, (W - text_width(title, 2)) / 2, 6, 2);
    line(&mut canvas, (LEFT, TOP), (LEFT, BOTTOM), INK);
    line(&mut canvas, (LEFT, BOTTOM), (RIGHT, BOTTOM), INK);

    let top = losses
        .iter()
        .cloned()
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max);
    let top = if top > 0.0 { top } else { 1.0 };
    draw_text(&mut canvas, &format!("{top:.3}"), 2, TOP as u32, 1);
    draw_text(&mut canvas, "0", LEFT as u32 - 6, BOTTOM as u32 - 4, 1);
    draw_text(
        &mut canvas,
        &losses.len().to_string(),
        RIGHT as u32 - 8,
        BOTTOM as u32 + 6,
        1,
    );

    let span = (losses.len().max(2) - 1) as f64;
    let point = |i: usize, v: f64| {
        let x = LEFT + ((i as f64 / span) * (RIGHT - LEFT) as f64).round() as i64;
        let y = BOTTOM - ((v / top).clamp(0.0, 1.0) * (BOTTOM - TOP) as f64).round() as i64;
        (x, y)
    };
    let pts: Vec<(i64, i64)> = losses
        .iter()
        .enumerate()
        .map(|(i, &v)| point(i, v))
        .collect();
    for pair in pts.windows(2) {
        line(&mut canvas, pair[0], pair[1], 60);
    }
    if let [only] = pts.as_slice() {
        line(&mut canvas, *only, *only, 60);
    }
    canvas
}
