//! Superpixel partitioning, patch featurization and perceptual clustering.

mod features;
mod kmeans;
mod patch;
mod slic;

pub use features::{builtin_features, FEATURE_DIM};
pub use kmeans::{kmeans, ClusterAssignment, FeatureMatrix, DEFAULT_MAX_ITER};
pub use patch::{extract_patch, patch_window, superpixel_bboxes, BBox, Patch, PATCH_SIZE};
pub use slic::{slic_segment, SLIC_ITERATIONS};

use image::RgbImage;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::tensor::Tensor;

/// Side of the squares used to derive the superpixel budget of an image.
pub const SQUARE_SIDE: usize = 16;

/// Number of `16 x 16` squares needed to tile an `height x width` image.
pub fn target_superpixel_count(height: usize, width: usize) -> usize {
    height.div_ceil(SQUARE_SIDE) * width.div_ceil(SQUARE_SIDE)
}

/// A partition of an image into 4-connected superpixels with ids `0..count`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelMap {
    labels: Grid<i32>,
    count: usize,
}

impl SuperpixelMap {
    /// Validates an externally supplied label map.
    pub fn from_labels(labels: Grid<i32>) -> Result<Self> {
        let (h, w) = labels.dims();
        let max = labels.as_slice().iter().copied().max().unwrap_or(-1);
        if labels.as_slice().iter().any(|&l| l < 0) {
            return Err(Error::InvalidSuperpixels("negative superpixel id".into()));
        }
        let count = (max + 1) as usize;
        let mut sizes = vec![0usize; count];
        for &l in labels.as_slice() {
            sizes[l as usize] += 1;
        }
        if let Some(id) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidSuperpixels(format!("superpixel id {id} is empty; ids must be 0..{count}")));
        }
        let components = components(labels.as_slice(), h, w);
        if components.sizes.len() != count {
            let mut seen = vec![false; count];
            for &l in &components.labels {
                if seen[l as usize] {
                    return Err(Error::InvalidSuperpixels(format!("superpixel {l} is not 4-connected")));
                }
                seen[l as usize] = true;
            }
        }
        Ok(Self { labels, count })
    }

    pub(crate) fn from_parts(labels: Grid<i32>, count: usize) -> Self {
        Self { labels, count }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn labels(&self) -> &Grid<i32> {
        &self.labels
    }

    pub fn dims(&self) -> (usize, usize) {
        self.labels.dims()
    }

    #[inline]
    pub fn id_at(&self, pixel: usize) -> usize {
        self.labels.as_slice()[pixel] as usize
    }

    /// Pixel offsets of every superpixel, in raster order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count];
        for (i, &l) in self.labels.as_slice().iter().enumerate() {
            out[l as usize].push(i);
        }
        out
    }

    pub fn to_tensor(&self) -> Result<Tensor> {
        Tensor::try_from(&self.labels)
    }

    pub fn from_tensor(tensor: Tensor) -> Result<Self> {
        Self::from_labels(Grid::try_from(tensor)?)
    }
}

/// 4-connected components of a label image.
pub(crate) struct Components {
    /// Component index of every pixel.
    pub comp: Vec<usize>,
    /// Source label of every component.
    pub labels: Vec<i32>,
    pub sizes: Vec<usize>,
}

pub(crate) fn components(labels: &[i32], h: usize, w: usize) -> Components {
    let n = h * w;
    let mut comp = vec![usize::MAX; n];
    let mut comp_labels = Vec::new();
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = comp_labels.len();
        let label = labels[start];
        comp[start] = id;
        stack.push(start);
        let mut size = 0;
        while let Some(p) = stack.pop() {
            size += 1;
            let (r, c) = (p / w, p % w);
            let mut visit = |q: usize| {
                if comp[q] == usize::MAX && labels[q] == label {
                    comp[q] = id;
                    stack.push(q);
                }
            };
            if r > 0 {
                visit(p - w);
            }
            if r + 1 < h {
                visit(p + w);
            }
            if c > 0 {
                visit(p - 1);
            }
            if c + 1 < w {
                visit(p + 1);
            }
        }
        comp_labels.push(label);
        sizes.push(size);
    }
    Components { comp, labels: comp_labels, sizes }
}

/// Keeps the largest component of every label and merges each remaining
/// (orphan) component into the largest adjacent superpixel. Output ids are
/// assigned in raster order of first appearance.
pub(crate) fn enforce_connectivity(labels: &[i32], h: usize, w: usize) -> SuperpixelMap {
    let cc = components(labels, h, w);
    let ncomp = cc.sizes.len();

    let mut adjacency = vec![Vec::new(); ncomp];
    for p in 0..h * w {
        let (r, c) = (p / w, p % w);
        let a = cc.comp[p];
        for q in [(c + 1 < w).then(|| p + 1), (r + 1 < h).then(|| p + w)].into_iter().flatten() {
            let b = cc.comp[q];
            if a != b {
                adjacency[a].push(b);
                adjacency[b].push(a);
            }
        }
    }
    for adj in &mut adjacency {
        adj.sort_unstable();
        adj.dedup();
    }

    let max_label = cc.labels.iter().copied().max().unwrap_or(0).max(0) as usize;
    let mut largest: Vec<Option<usize>> = vec![None; max_label + 1];
    for (id, (&label, &size)) in cc.labels.iter().zip(&cc.sizes).enumerate() {
        let slot = &mut largest[label as usize];
        match *slot {
            Some(best) if cc.sizes[best] >= size => {}
            _ => *slot = Some(id),
        }
    }

    // group[comp] = kept component the comp belongs to
    let mut group: Vec<Option<usize>> = vec![None; ncomp];
    let mut group_size = vec![0usize; ncomp];
    for id in largest.into_iter().flatten() {
        group[id] = Some(id);
        group_size[id] = cc.sizes[id];
    }
    let mut pending: Vec<usize> = (0..ncomp).filter(|&c| group[c].is_none()).collect();
    while !pending.is_empty() {
        let before = pending.len();
        pending.retain(|&orphan| {
            let target = adjacency[orphan]
                .iter()
                .filter_map(|&nb| group[nb])
                .max_by(|&a, &b| group_size[a].cmp(&group_size[b]).then(b.cmp(&a)));
            match target {
                Some(g) => {
                    group[orphan] = Some(g);
                    group_size[g] += cc.sizes[orphan];
                    false
                }
                None => true,
            }
        });
        assert!(pending.len() < before, "orphan components without resolved neighbours");
    }

    let mut final_id = vec![-1i32; ncomp];
    let mut next = 0;
    let mut out = Vec::with_capacity(h * w);
    for p in 0..h * w {
        let g = group[cc.comp[p]].expect("resolved");
        if final_id[g] < 0 {
            final_id[g] = next;
            next += 1;
        }
        out.push(final_id[g]);
    }
    SuperpixelMap::from_parts(Grid::new(h, w, out).expect("dims"), next as usize)
}

/// Features of every superpixel of `image`, one row per superpixel id.
pub fn image_features(image: &RgbImage, map: &SuperpixelMap) -> Vec<Vec<f32>> {
    superpixel_bboxes(map)
        .iter()
        .map(|bbox| {
            let (top, left, side) = patch_window(bbox);
            builtin_features(&patch::resample_window(image, top, left, side))
        })
        .collect()
}
