use image::RgbImage;

use super::SuperpixelMap;
use crate::error::{Error, Result};

pub const PATCH_SIZE: usize = 16;

/// A `16 x 16` RGB patch, row-major with interleaved channels, values in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    data: Vec<f32>,
}

impl Patch {
    pub fn from_fn(mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(PATCH_SIZE * PATCH_SIZE * 3);
        for y in 0..PATCH_SIZE {
            for x in 0..PATCH_SIZE {
                data.extend_from_slice(&f(y, x));
            }
        }
        Self { data }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> [f32; 3] {
        let i = (y * PATCH_SIZE + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

/// Inclusive bounding box of a superpixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BBox {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

impl BBox {
    pub fn height(&self) -> usize {
        self.bottom - self.top + 1
    }

    pub fn width(&self) -> usize {
        self.right - self.left + 1
    }
}

pub fn superpixel_bboxes(map: &SuperpixelMap) -> Vec<BBox> {
    let (h, w) = map.dims();
    let mut boxes = vec![BBox { top: usize::MAX, left: usize::MAX, bottom: 0, right: 0 }; map.count()];
    for y in 0..h {
        for x in 0..w {
            let b = &mut boxes[map.id_at(y * w + x)];
            b.top = b.top.min(y);
            b.bottom = b.bottom.max(y);
            b.left = b.left.min(x);
            b.right = b.right.max(x);
        }
    }
    boxes
}

/// Smallest square window `(top, left, side)` with the box centered in it.
/// The window may extend past the image edges.
pub fn patch_window(bbox: &BBox) -> (isize, isize, usize) {
    let side = bbox.height().max(bbox.width());
    let top = bbox.top as isize - ((side - bbox.height()) / 2) as isize;
    let left = bbox.left as isize - ((side - bbox.width()) / 2) as isize;
    (top, left, side)
}

/// Bilinear resize (half-pixel centers) of the square window to `16 x 16`,
/// replicating edge pixels where the window leaves the image.
pub(crate) fn resample_window(image: &RgbImage, top: isize, left: isize, side: usize) -> Patch {
    let (w, h) = (image.width() as isize, image.height() as isize);
    let sample = |sy: usize, sx: usize| -> [f32; 3] {
        let y = (top + sy as isize).clamp(0, h - 1) as u32;
        let x = (left + sx as isize).clamp(0, w - 1) as u32;
        image.get_pixel(x, y).0.map(f32::from)
    };
    let scale = side as f64 / PATCH_SIZE as f64;
    let max = (side - 1) as f64;
    let coord = |d: usize| -> (usize, usize, f32) {
        let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, max);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(side - 1);
        (i0, i1, (s - i0 as f64) as f32)
    };
    Patch::from_fn(|py, px| {
        let (y0, y1, fy) = coord(py);
        let (x0, x1, fx) = coord(px);
        let (a, b, c, d) = (sample(y0, x0), sample(y0, x1), sample(y1, x0), sample(y1, x1));
        let mut out = [0.0f32; 3];
        for ch in 0..3 {
            let top = a[ch] + (b[ch] - a[ch]) * fx;
            let bottom = c[ch] + (d[ch] - c[ch]) * fx;
            out[ch] = top + (bottom - top) * fy;
        }
        out
    })
}

/// Fits the superpixel's bounding box at the center of the smallest enclosing
/// square and resizes that square to a `16 x 16` patch.
pub fn extract_patch(image: &RgbImage, map: &SuperpixelMap, superpixel_id: usize) -> Result<Patch> {
    let (h, w) = map.dims();
    if (image.height() as usize, image.width() as usize) != (h, w) {
        return Err(Error::ShapeMismatch("image and superpixel map differ in size".into()));
    }
    if superpixel_id >= map.count() {
        return Err(Error::InvalidArgument(format!("superpixel {superpixel_id} >= count {}", map.count())));
    }
    let mut bbox = BBox { top: usize::MAX, left: usize::MAX, bottom: 0, right: 0 };
    for (p, &l) in map.labels().as_slice().iter().enumerate() {
        if l as usize == superpixel_id {
            let (y, x) = (p / w, p % w);
            bbox.top = bbox.top.min(y);
            bbox.bottom = bbox.bottom.max(y);
            bbox.left = bbox.left.min(x);
            bbox.right = bbox.right.max(x);
        }
    }
    let (top, left, side) = patch_window(&bbox);
    Ok(resample_window(image, top, left, side))
}
