//! Distribution-breakdown selection: superpixel and cluster uncertainty, cluster
//! budgets, and the image-level query procedure.

mod query;

pub use query::{
    build_hierarchy, random_cluster_assignment, select_queries, ClusterInput, ClusterStats, Hierarchy, ImageInput,
    Query, QuerySet, Selection, SelectionOptions, SuperpixelStats,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::uncertainty::{PixelUncertaintyMap, UncertaintyVariant};

/// The full method and its ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    Madbal,
    /// Weight maps replaced by 1/3.
    Averaging,
    /// No Jensen-Shannon terms.
    NoMaturity,
    /// Entropy of the final head only.
    Vanilla,
    /// Superpixels assigned to uniformly random clusters.
    RandomBreakdown,
    /// Top-uncertainty pixels per image, no hierarchy.
    NoBreakdown,
}

impl SelectionMode {
    pub const ALL: [SelectionMode; 6] = [
        SelectionMode::Madbal,
        SelectionMode::Averaging,
        SelectionMode::NoMaturity,
        SelectionMode::Vanilla,
        SelectionMode::RandomBreakdown,
        SelectionMode::NoBreakdown,
    ];

    pub fn uncertainty_variant(self) -> UncertaintyVariant {
        match self {
            SelectionMode::Madbal | SelectionMode::RandomBreakdown | SelectionMode::NoBreakdown => {
                UncertaintyVariant::Full
            }
            SelectionMode::Averaging => UncertaintyVariant::Averaged,
            SelectionMode::NoMaturity => UncertaintyVariant::NoMaturity,
            SelectionMode::Vanilla => UncertaintyVariant::EntropyOnly,
        }
    }

    pub fn uses_breakdown(self) -> bool {
        self != SelectionMode::NoBreakdown
    }

    pub fn random_clusters(self) -> bool {
        self == SelectionMode::RandomBreakdown
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SelectionMode::Madbal => "madbal",
            SelectionMode::Averaging => "averaging",
            SelectionMode::NoMaturity => "no-maturity",
            SelectionMode::Vanilla => "vanilla",
            SelectionMode::RandomBreakdown => "random-breakdown",
            SelectionMode::NoBreakdown => "no-breakdown",
        }
    }
}

impl fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SelectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SelectionMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown selection mode {s:?}")))
    }
}

/// Marks pixels whose Chebyshev neighbourhood of `radius` contains another
/// predicted class (1 = boundary, 0 = center).
pub fn boundary_mask(pred: &Grid<i32>, radius: usize) -> Grid<u8> {
    let (h, w) = pred.dims();
    let mut out = Grid::filled(h, w, 0u8);
    if radius == 0 {
        return out;
    }
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(radius), (y + radius).min(h - 1));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(radius), (x + radius).min(w - 1));
            let class = pred.get(y, x);
            let differs = (y0..=y1).any(|ny| (x0..=x1).any(|nx| pred.get(ny, nx) != class));
            if differs {
                out.set(y, x, 1);
            }
        }
    }
    out
}

/// Modal predicted class over `pixels` (flat offsets), ties toward the lowest class.
pub fn dominant_label(pixels: &[usize], pred: &Grid<i32>) -> Result<usize> {
    if pixels.is_empty() {
        return Err(Error::InvalidArgument("empty superpixel".into()));
    }
    let mut counts: Vec<usize> = Vec::new();
    for &p in pixels {
        let c = pred.as_slice()[p];
        if c < 0 {
            return Err(Error::InvalidArgument(format!("negative predicted class {c}")));
        }
        let c = c as usize;
        if c >= counts.len() {
            counts.resize(c + 1, 0);
        }
        counts[c] += 1;
    }
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    Ok(best)
}

/// Fraction of a cluster's superpixels whose dominant label is each class.
pub fn cluster_class_prob(dominant_labels: &[usize], num_classes: usize) -> Result<Vec<f64>> {
    if dominant_labels.is_empty() {
        return Err(Error::InvalidArgument("empty cluster".into()));
    }
    let mut counts = vec![0usize; num_classes];
    for &l in dominant_labels {
        if l >= num_classes {
            return Err(Error::InvalidArgument(format!("dominant label {l} >= {num_classes}")));
        }
        counts[l] += 1;
    }
    let n = dominant_labels.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// Mean pixel uncertainty over all of the superpixel's pixels, damped by
/// `exp(-p_dominant)`. Superpixels without an unlabeled pixel score 0.
pub fn superpixel_uncertainty(pixels: &[usize], map: &PixelUncertaintyMap, p_dominant: f64) -> f64 {
    let valid = map.valid.as_slice();
    if pixels.is_empty() || !pixels.iter().any(|&p| valid[p] == 1) {
        return 0.0;
    }
    let values = map.values.as_slice();
    let mean = pixels.iter().map(|&p| values[p]).sum::<f64>() / pixels.len() as f64;
    mean * (-p_dominant).exp()
}

pub fn cluster_uncertainty(member_uncertainties: &[f64]) -> Result<f64> {
    if member_uncertainties.is_empty() {
        return Err(Error::InvalidArgument("empty cluster".into()));
    }
    Ok(member_uncertainties.iter().sum::<f64>() / member_uncertainties.len() as f64)
}

// Products like 0.3 * 10 land a hair above the intended integer; snap those.
const INTEGER_SNAP: f64 = 1e-9;
const FRACTION_GRID: f64 = 1e-9;

fn proportional_shares(u: &[f64], total: usize) -> Result<Vec<f64>> {
    if total < 1 {
        return Err(Error::InvalidArgument("total budget must be >= 1".into()));
    }
    if let Some(v) = u.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidArgument(format!("cluster uncertainty {v} is negative or not finite")));
    }
    let sum: f64 = u.iter().sum();
    if sum <= 0.0 {
        return Err(Error::InvalidArgument("all cluster uncertainties are zero".into()));
    }
    Ok(u.iter()
        .map(|&v| {
            let exact = v * total as f64 / sum;
            let nearest = exact.round();
            if (exact - nearest).abs() <= INTEGER_SNAP * nearest.max(1.0) {
                nearest
            } else {
                exact
            }
        })
        .collect())
}

/// Untrimmed budgets `ceil(u_k / sum(u) * total)`.
pub fn ceil_budgets(u: &[f64], total: usize) -> Result<Vec<usize>> {
    Ok(proportional_shares(u, total)?.into_iter().map(|s| s.ceil() as usize).collect())
}

/// Cluster budgets proportional to uncertainty, rounded up and then trimmed back
/// to `total`. The overshoot is removed one unit at a time from the rounded-up
/// clusters with the smallest fractional share (ties toward the higher index),
/// each cluster losing at most one unit.
pub fn allocate_budgets(u: &[f64], total: usize) -> Result<Vec<usize>> {
    let shares = proportional_shares(u, total)?;
    let mut budgets: Vec<usize> = shares.iter().map(|s| s.ceil() as usize).collect();
    let mut overshoot = budgets.iter().sum::<usize>().saturating_sub(total);
    if overshoot == 0 {
        return Ok(budgets);
    }
    // Fractions are compared on a 1e-9 grid so that remainders which are equal
    // in exact arithmetic (0.1 * 90 / 6 against 0.3 * 90 / 6) still tie.
    let mut candidates: Vec<(u64, usize)> = shares
        .iter()
        .enumerate()
        .filter(|&(k, s)| s.fract() > 0.0 && budgets[k] > 0)
        .map(|(k, s)| ((s.fract() / FRACTION_GRID).round() as u64, k))
        .collect();
    candidates.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
    for (_, k) in candidates {
        if overshoot == 0 {
            break;
        }
        budgets[k] -= 1;
        overshoot -= 1;
    }
    // only reachable through floating-point drift in the shares
    while overshoot > 0 {
        let k = (0..budgets.len()).rev().max_by_key(|&k| budgets[k]).expect("non-empty");
        budgets[k] -= 1;
        overshoot -= 1;
    }
    Ok(budgets)
}
