//! SLIC: k-means in the joint CIELAB + image-plane space, seeded on a regular grid.

use image::RgbImage;

use super::{enforce_connectivity, SuperpixelMap};
use crate::error::{Error, Result};

pub const SLIC_ITERATIONS: usize = 10;

fn srgb_to_linear(v: u8) -> f64 {
    let c = v as f64 / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const EPS: f64 = 216.0 / 24389.0;
    const KAPPA: f64 = 24389.0 / 27.0;
    if t > EPS {
        t.cbrt()
    } else {
        (KAPPA * t + 16.0) / 116.0
    }
}

/// CIELAB (D65) of every pixel, interleaved `[L, a, b]`.
pub(crate) fn to_lab(image: &RgbImage) -> Vec<[f64; 3]> {
    let lut: Vec<f64> = (0..=255u8).map(srgb_to_linear).collect();
    image
        .pixels()
        .map(|px| {
            let [r, g, b] = px.0.map(|v| lut[v as usize]);
            let x = (0.4124564 * r + 0.3575761 * g + 0.1804375 * b) / 0.95047;
            let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
            let z = (0.0193339 * r + 0.1191920 * g + 0.9503041 * b) / 1.08883;
            let (fx, fy, fz) = (lab_f(x), lab_f(y), lab_f(z));
            [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Center {
    lab: [f64; 3],
    y: f64,
    x: f64,
}

#[inline]
fn lab_dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let (d0, d1, d2) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    d0 * d0 + d1 * d1 + d2 * d2
}

/// Seed grid `(rows, cols)` with roughly `n_target` cells of near-square shape.
fn grid_shape(h: usize, w: usize, n_target: usize) -> (usize, usize) {
    let cols = ((n_target as f64 * w as f64 / h as f64).sqrt().round() as usize).clamp(1, w.min(n_target));
    let rows = ((n_target as f64 / cols as f64).round() as usize).clamp(1, h);
    (rows, cols)
}

/// Segments `image` into about `n_target` superpixels.
///
/// The result is deterministic in its inputs; grid seeding leaves no random
/// choices, so `_seed` does not influence the partition.
pub fn slic_segment(image: &RgbImage, n_target: usize, compactness: f64, _seed: u64) -> Result<SuperpixelMap> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    if n_target < 1 || n_target > h * w {
        return Err(Error::InvalidArgument(format!("n_target {n_target} outside 1..={}", h * w)));
    }
    if !(compactness.is_finite() && compactness > 0.0) {
        return Err(Error::InvalidArgument(format!("compactness must be positive, got {compactness}")));
    }
    let lab = to_lab(image);
    let (rows, cols) = grid_shape(h, w, n_target);
    let step_y = h as f64 / rows as f64;
    let step_x = w as f64 / cols as f64;
    let step = (step_y * step_x).sqrt();
    let spatial_weight = (compactness / step).powi(2);
    let win_y = step_y.ceil() as isize;
    let win_x = step_x.ceil() as isize;

    let gradient = |y: usize, x: usize| -> f64 {
        if y == 0 || x == 0 || y + 1 >= h || x + 1 >= w {
            return f64::INFINITY;
        }
        lab_dist2(&lab[y * w + x + 1], &lab[y * w + x - 1]) + lab_dist2(&lab[(y + 1) * w + x], &lab[(y - 1) * w + x])
    };

    let mut centers = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let cy = (((i as f64 + 0.5) * step_y) as usize).min(h - 1);
            let cx = (((j as f64 + 0.5) * step_x) as usize).min(w - 1);
            // nudge the seed off edges to the lowest-gradient neighbour
            let (mut by, mut bx, mut bg) = (cy, cx, gradient(cy, cx));
            for ny in cy.saturating_sub(1)..=(cy + 1).min(h - 1) {
                for nx in cx.saturating_sub(1)..=(cx + 1).min(w - 1) {
                    let g = gradient(ny, nx);
                    if g < bg {
                        (by, bx, bg) = (ny, nx, g);
                    }
                }
            }
            centers.push(Center { lab: lab[by * w + bx], y: by as f64, x: bx as f64 });
        }
    }

    let mut labels: Vec<i32> = (0..h * w)
        .map(|p| {
            let r = (((p / w) as f64 / step_y) as usize).min(rows - 1);
            let c = (((p % w) as f64 / step_x) as usize).min(cols - 1);
            (r * cols + c) as i32
        })
        .collect();
    let mut dist = vec![f64::INFINITY; h * w];
    let mut sums = vec![[0.0f64; 6]; centers.len()];

    for _ in 0..SLIC_ITERATIONS {
        dist.fill(f64::INFINITY);
        for (k, center) in centers.iter().enumerate() {
            let (cy, cx) = (center.y.round() as isize, center.x.round() as isize);
            let y0 = (cy - win_y).max(0) as usize;
            let y1 = ((cy + win_y) as usize).min(h - 1);
            let x0 = (cx - win_x).max(0) as usize;
            let x1 = ((cx + win_x) as usize).min(w - 1);
            for y in y0..=y1 {
                let dy = y as f64 - center.y;
                let row = y * w;
                for x in x0..=x1 {
                    let dx = x as f64 - center.x;
                    let p = row + x;
                    let d = lab_dist2(&lab[p], &center.lab) + spatial_weight * (dy * dy + dx * dx);
                    if d < dist[p] {
                        dist[p] = d;
                        labels[p] = k as i32;
                    }
                }
            }
        }
        for s in &mut sums {
            *s = [0.0; 6];
        }
        for (p, &l) in labels.iter().enumerate() {
            let s = &mut sums[l as usize];
            let v = &lab[p];
            s[0] += v[0];
            s[1] += v[1];
            s[2] += v[2];
            s[3] += (p / w) as f64;
            s[4] += (p % w) as f64;
            s[5] += 1.0;
        }
        for (center, s) in centers.iter_mut().zip(&sums) {
            if s[5] > 0.0 {
                let n = s[5];
                *center = Center { lab: [s[0] / n, s[1] / n, s[2] / n], y: s[3] / n, x: s[4] / n };
            }
        }
    }

    Ok(enforce_connectivity(&labels, h, w))
}
