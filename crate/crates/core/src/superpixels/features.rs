//! Hand-crafted 198-dimensional patch descriptor.
//!
//! | range     | content                                                |
//! |-----------|--------------------------------------------------------|
//! | 0..6      | per-channel mean, then per-channel standard deviation |
//! | 6..54     | 4x4 grid of block-averaged RGB                         |
//! | 54..102   | 16-bin histogram per channel, normalized               |
//! | 102..198  | 6-bin gradient orientation histogram per 4x4 cell      |
//!
//! Color values are scaled to `[0, 1]`.

use std::f32::consts::PI;

use super::patch::{Patch, PATCH_SIZE};

pub const FEATURE_DIM: usize = 198;
const BLOCK: usize = 4;
const HIST_BINS: usize = 16;
const ORIENT_BINS: usize = 6;

pub fn builtin_features(patch: &Patch) -> Vec<f32> {
    let n = (PATCH_SIZE * PATCH_SIZE) as f32;
    let px = |y: usize, x: usize| patch.get(y, x).map(|v| v / 255.0);
    let mut out = Vec::with_capacity(FEATURE_DIM);

    let mut mean = [0.0f32; 3];
    for y in 0..PATCH_SIZE {
        for x in 0..PATCH_SIZE {
            let p = px(y, x);
            for c in 0..3 {
                mean[c] += p[c];
            }
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = [0.0f32; 3];
    for y in 0..PATCH_SIZE {
        for x in 0..PATCH_SIZE {
            let p = px(y, x);
            for c in 0..3 {
                var[c] += (p[c] - mean[c]).powi(2);
            }
        }
    }
    out.extend_from_slice(&mean);
    out.extend(var.iter().map(|v| (v / n).sqrt()));

    let cells = PATCH_SIZE / BLOCK;
    for by in 0..cells {
        for bx in 0..cells {
            let mut acc = [0.0f32; 3];
            for y in by * BLOCK..(by + 1) * BLOCK {
                for x in bx * BLOCK..(bx + 1) * BLOCK {
                    let p = px(y, x);
                    for c in 0..3 {
                        acc[c] += p[c];
                    }
                }
            }
            out.extend(acc.iter().map(|a| a / (BLOCK * BLOCK) as f32));
        }
    }

    let mut hist = [[0.0f32; HIST_BINS]; 3];
    for y in 0..PATCH_SIZE {
        for x in 0..PATCH_SIZE {
            let p = patch.get(y, x);
            for c in 0..3 {
                let bin = ((p[c] / 16.0) as usize).min(HIST_BINS - 1);
                hist[c][bin] += 1.0;
            }
        }
    }
    for channel in &hist {
        out.extend(channel.iter().map(|v| v / n));
    }

    let gray = |y: usize, x: usize| {
        let p = px(y, x);
        (p[0] + p[1] + p[2]) / 3.0
    };
    let mut hog = [0.0f32; (PATCH_SIZE / BLOCK) * (PATCH_SIZE / BLOCK) * ORIENT_BINS];
    for y in 0..PATCH_SIZE {
        for x in 0..PATCH_SIZE {
            let gx = gray(y, (x + 1).min(PATCH_SIZE - 1)) - gray(y, x.saturating_sub(1));
            let gy = gray((y + 1).min(PATCH_SIZE - 1), x) - gray(y.saturating_sub(1), x);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let mut theta = gy.atan2(gx);
            if theta < 0.0 {
                theta += PI;
            }
            let bin = ((theta / (PI / ORIENT_BINS as f32)) as usize).min(ORIENT_BINS - 1);
            let cell = (y / BLOCK) * cells + x / BLOCK;
            hog[cell * ORIENT_BINS + bin] += mag;
        }
    }
    let norm = hog.iter().map(|v| v * v).sum::<f32>().sqrt();
    if norm > 1e-12 {
        hog.iter_mut().for_each(|v| *v /= norm);
    }
    out.extend_from_slice(&hog);

    debug_assert_eq!(out.len(), FEATURE_DIM);
    out
}
