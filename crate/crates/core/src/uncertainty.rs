//! Pixel-level uncertainty and the loss-prediction training targets.
//!
//! All logarithms are natural. Per-pixel uncertainty combines the entropy of the
//! fully-mature head with weighted Jensen-Shannon divergences to the three
//! varied-maturity heads, scaled by `exp(sigmoid(logit))` of the loss-prediction
//! channel matching the pixel's region (center or boundary).

use crate::error::{Error, Result};
use crate::grid::{Grid, Planes};
use crate::tensor::Tensor;

/// Per-pixel distributions must sum to one within this tolerance.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-4;

/// Default weights of the phase-II objective: center loss, boundary loss, then
/// the shallow-, semi- and almost-mature head segmentation losses.
pub const DEFAULT_PHASE2_WEIGHTS: [f64; 5] = [1.0, 1.0, 0.05, 0.1, 0.15];

fn check_distribution(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidDistribution("empty distribution".into()));
    }
    if let Some(v) = p.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidDistribution(format!("component {v} is negative or not finite")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE {
        return Err(Error::InvalidDistribution(format!("components sum to {sum}")));
    }
    Ok(())
}

#[inline]
pub(crate) fn entropy_unchecked(p: &[f64]) -> f64 {
    let mut h = 0.0;
    for &v in p {
        if v > 0.0 {
            h -= v * v.ln();
        }
    }
    h
}

#[inline]
pub(crate) fn js_unchecked(p: &[f64], q: &[f64]) -> f64 {
    let mut js = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        if a > 0.0 {
            js += a * (a / m).ln();
        }
        if b > 0.0 {
            js += b * (b / m).ln();
        }
    }
    0.5 * js
}

/// Shannon entropy `-sum p ln p`, with `0 ln 0 = 0`.
pub fn entropy(dist: &[f64]) -> Result<f64> {
    check_distribution(dist)?;
    Ok(entropy_unchecked(dist))
}

/// Jensen-Shannon divergence, bounded by `ln 2`.
pub fn js_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::ShapeMismatch(format!("distributions of length {} and {}", p.len(), q.len())));
    }
    check_distribution(p)?;
    check_distribution(q)?;
    Ok(js_unchecked(p, q))
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Varied-maturity head outputs and the weight maps that scale their divergences.
#[derive(Debug, Clone)]
pub struct MaturityHeads {
    /// Shallow-, semi- and almost-mature class probabilities, each `[C, H, W]`.
    pub probs: [Planes<f32>; 3],
    /// `[3, H, W]`, one weight per head, each in `[0, 1]`.
    pub weights: Option<Planes<f32>>,
}

/// Loss-prediction logits and the center/boundary partition they are read through.
#[derive(Debug, Clone)]
pub struct LossScores {
    /// `[2, H, W]`: channel 0 is the center logit, channel 1 the boundary logit.
    pub logits: Planes<f32>,
    /// `[H, W]`: 1 marks boundary pixels, 0 center pixels.
    pub boundary: Grid<u8>,
}

/// Everything the model adapter exports for one image.
#[derive(Debug, Clone)]
pub struct HeadOutputs {
    /// Fully-mature head, `[C, H, W]`.
    pub final_probs: Planes<f32>,
    pub heads: Option<MaturityHeads>,
    pub loss: Option<LossScores>,
}

fn check_prob_planes(name: &str, planes: &Planes<f32>) -> Result<()> {
    let c = planes.count();
    let n = planes.plane_len();
    let mut buf = vec![0.0f64; c];
    for i in 0..n {
        for (k, slot) in buf.iter_mut().enumerate() {
            *slot = planes.at(k, i) as f64;
        }
        check_distribution(&buf).map_err(|e| {
            let w = planes.width();
            Error::InvalidDistribution(format!("{name} at ({}, {}): {e}", i / w, i % w))
        })?;
    }
    Ok(())
}

impl HeadOutputs {
    /// Validates shapes and value ranges of every present map.
    pub fn new(final_probs: Planes<f32>, heads: Option<MaturityHeads>, loss: Option<LossScores>) -> Result<Self> {
        let (c, h, w) = (final_probs.count(), final_probs.height(), final_probs.width());
        if c < 2 {
            return Err(Error::ShapeMismatch(format!("need at least 2 classes, got {c}")));
        }
        check_prob_planes("final head", &final_probs)?;
        if let Some(heads) = &heads {
            for (k, p) in heads.probs.iter().enumerate() {
                if (p.count(), p.height(), p.width()) != (c, h, w) {
                    return Err(Error::ShapeMismatch(format!(
                        "head {} is {}x{}x{}, final head is {c}x{h}x{w}",
                        k + 1,
                        p.count(),
                        p.height(),
                        p.width()
                    )));
                }
                check_prob_planes(&format!("head {}", k + 1), p)?;
            }
            if let Some(wm) = &heads.weights {
                if (wm.count(), wm.height(), wm.width()) != (3, h, w) {
                    return Err(Error::ShapeMismatch(format!("weights must be 3x{h}x{w}")));
                }
                if let Some(v) = wm.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
                    return Err(Error::InvalidArgument(format!("weight {v} outside [0, 1]")));
                }
            }
        }
        if let Some(loss) = &loss {
            if (loss.logits.count(), loss.logits.height(), loss.logits.width()) != (2, h, w) {
                return Err(Error::ShapeMismatch(format!("loss scores must be 2x{h}x{w}")));
            }
            if loss.logits.as_slice().iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("non-finite loss logit".into()));
            }
            if loss.boundary.dims() != (h, w) {
                return Err(Error::ShapeMismatch(format!("boundary map must be {h}x{w}")));
            }
            if loss.boundary.as_slice().iter().any(|&b| b > 1) {
                return Err(Error::InvalidArgument("boundary map must be binary".into()));
            }
        }
        Ok(Self { final_probs, heads, loss })
    }

    pub fn num_classes(&self) -> usize {
        self.final_probs.count()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.final_probs.height(), self.final_probs.width())
    }

    /// Argmax of the fully-mature head, ties toward the lower class index.
    pub fn prediction(&self) -> Grid<i32> {
        argmax(&self.final_probs)
    }
}

pub fn argmax(probs: &Planes<f32>) -> Grid<i32> {
    let (h, w) = (probs.height(), probs.width());
    let mut out = Vec::with_capacity(h * w);
    for i in 0..h * w {
        let mut best = 0;
        let mut best_v = probs.at(0, i);
        for k in 1..probs.count() {
            let v = probs.at(k, i);
            if v > best_v {
                best = k;
                best_v = v;
            }
        }
        out.push(best as i32);
    }
    Grid::new(h, w, out).expect("dims consistent")
}

/// Which terms of the pixel uncertainty are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UncertaintyVariant {
    /// Entropy + learned-weight JS terms, times the loss multiplier.
    Full,
    /// JS terms weighted by 1/3 each instead of the weight maps.
    Averaged,
    /// Entropy times the loss multiplier; no JS terms.
    NoMaturity,
    /// Entropy of the final head only.
    EntropyOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PixelUncertaintyMap {
    pub values: Grid<f64>,
    /// 1 where the pixel is unlabeled and may be queried.
    pub valid: Grid<u8>,
}

impl PixelUncertaintyMap {
    pub fn dims(&self) -> (usize, usize) {
        self.values.dims()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.as_slice().iter().filter(|&&v| v == 1).count()
    }

    /// `F32 [H, W]` audit tensor.
    pub fn to_tensor(&self) -> Result<Tensor> {
        let (h, w) = self.dims();
        Tensor::f32(vec![h, w], self.values.as_slice().iter().map(|&v| v as f32).collect())
    }
}

pub fn pixel_uncertainty(
    outputs: &HeadOutputs,
    labeled_mask: &Grid<u8>,
    variant: UncertaintyVariant,
) -> Result<PixelUncertaintyMap> {
    let (h, w) = outputs.dims();
    if labeled_mask.dims() != (h, w) {
        return Err(Error::ShapeMismatch(format!(
            "labeled mask is {:?}, head outputs are {h}x{w}",
            labeled_mask.dims()
        )));
    }
    let heads = match variant {
        UncertaintyVariant::Full | UncertaintyVariant::Averaged => {
            let heads = outputs
                .heads
                .as_ref()
                .ok_or_else(|| Error::MissingInput("varied-maturity head outputs".into()))?;
            if variant == UncertaintyVariant::Full && heads.weights.is_none() {
                return Err(Error::MissingInput("weight maps".into()));
            }
            Some(heads)
        }
        _ => None,
    };
    let loss = match variant {
        UncertaintyVariant::EntropyOnly => None,
        _ => Some(outputs.loss.as_ref().ok_or_else(|| Error::MissingInput("loss prediction scores".into()))?),
    };

    let c = outputs.num_classes();
    let mut p = vec![0.0f64; c];
    let mut q = vec![0.0f64; c];
    let mut values = Vec::with_capacity(h * w);
    for i in 0..h * w {
        for (k, slot) in p.iter_mut().enumerate() {
            *slot = outputs.final_probs.at(k, i) as f64;
        }
        let mut u = entropy_unchecked(&p);
        if let Some(heads) = heads {
            for (head, probs) in heads.probs.iter().enumerate() {
                let weight = match (&heads.weights, variant) {
                    (Some(wm), UncertaintyVariant::Full) => wm.at(head, i) as f64,
                    _ => 1.0 / 3.0,
                };
                for (k, slot) in q.iter_mut().enumerate() {
                    *slot = probs.at(k, i) as f64;
                }
                u += weight * js_unchecked(&p, &q);
            }
        }
        if let Some(loss) = loss {
            let channel = if loss.boundary.as_slice()[i] == 0 { 0 } else { 1 };
            u *= sigmoid(loss.logits.at(channel, i) as f64).exp();
        }
        values.push(u);
    }
    Ok(PixelUncertaintyMap { values: Grid::new(h, w, values)?, valid: labeled_mask.map(|m| u8::from(m == 0)) })
}

/// Phase-I losses and ground truth of one image's labeled pixels.
#[derive(Debug, Clone, Copy)]
pub struct PoolLosses<'a> {
    pub per_pixel_loss: &'a Grid<f32>,
    pub gt_class: &'a Grid<i32>,
    pub pool_mask: &'a Grid<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossLabels {
    /// 1 where the pixel's loss reaches its class threshold.
    pub labels: Grid<u8>,
    /// 1 where the pixel is in the labeled pool.
    pub defined: Grid<u8>,
    /// Per-class mean loss over the whole pool; `None` for classes with no pool pixels.
    pub thresholds: Vec<Option<f64>>,
}

/// Exact sum of non-negative finite f32 values as a fixed-point integer in
/// units of 2^-149, the smallest subnormal. Six limbs hold any f32 times a u64.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct ExactSum([u64; 6]);

impl ExactSum {
    fn of(v: f32, times: u64) -> Self {
        let mut s = Self::default();
        s.add(v, times);
        s
    }

    /// Adds `v * times`.
    fn add(&mut self, v: f32, times: u64) {
        let bits = v.to_bits();
        let exp = (bits >> 23) & 0xff;
        let frac = u128::from(bits & 0x7f_ffff);
        let (mantissa, shift) = if exp == 0 { (frac, 0) } else { (frac | 1 << 23, exp as usize - 1) };
        let value = mantissa * u128::from(times);
        let (v0, v1) = (value as u64, (value >> 64) as u64);
        let (limb, o) = (shift / 64, (shift % 64) as u32);
        let words = if o == 0 { [v0, v1, 0] } else { [v0 << o, (v1 << o) | (v0 >> (64 - o)), v1 >> (64 - o)] };
        let mut carry = 0u128;
        for (i, slot) in self.0.iter_mut().enumerate().skip(limb) {
            let word = words.get(i - limb).copied().unwrap_or(0);
            let sum = u128::from(*slot) + u128::from(word) + carry;
            *slot = sum as u64;
            carry = sum >> 64;
        }
    }

    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.iter().rev().cmp(other.0.iter().rev())
    }
}

/// Binarizes phase-I losses against class-specific mean thresholds computed over
/// the entire labeled pool (all images). A loss equal to its threshold maps to 1.
/// The comparison `loss >= sum / n` is decided in exact arithmetic.
pub fn loss_labels(pool: &[PoolLosses<'_>], num_classes: usize) -> Result<Vec<LossLabels>> {
    let mut sums = vec![ExactSum::default(); num_classes];
    let mut approx = vec![0.0f64; num_classes];
    let mut counts = vec![0u64; num_classes];
    for img in pool {
        if !img.per_pixel_loss.same_dims(img.gt_class) || !img.per_pixel_loss.same_dims(img.pool_mask) {
            return Err(Error::ShapeMismatch("loss, ground truth and pool mask differ in size".into()));
        }
        for ((&loss, &class), &m) in
            img.per_pixel_loss.as_slice().iter().zip(img.gt_class.as_slice()).zip(img.pool_mask.as_slice())
        {
            if m == 0 {
                continue;
            }
            if class < 0 || class as usize >= num_classes {
                return Err(Error::InvalidArgument(format!("pool pixel has class {class}")));
            }
            if !loss.is_finite() || loss < 0.0 {
                return Err(Error::InvalidArgument(format!("pool pixel has loss {loss}")));
            }
            let k = class as usize;
            sums[k].add(loss, 1);
            approx[k] += loss as f64;
            counts[k] += 1;
        }
    }
    if counts.iter().all(|&n| n == 0) {
        return Err(Error::InvalidArgument("labeled pool is empty".into()));
    }
    let thresholds: Vec<Option<f64>> =
        approx.iter().zip(&counts).map(|(&s, &n)| (n > 0).then(|| s / n as f64)).collect();

    pool.iter()
        .map(|img| {
            let (h, w) = img.per_pixel_loss.dims();
            let mut labels = Grid::filled(h, w, 0u8);
            let mut defined = Grid::filled(h, w, 0u8);
            for i in 0..h * w {
                if img.pool_mask.as_slice()[i] == 0 {
                    continue;
                }
                let k = img.gt_class.as_slice()[i] as usize;
                let scaled = ExactSum::of(img.per_pixel_loss.as_slice()[i], counts[k]);
                defined.as_mut_slice()[i] = 1;
                labels.as_mut_slice()[i] = u8::from(scaled.cmp(&sums[k]).is_ge());
            }
            Ok(LossLabels { labels, defined, thresholds: thresholds.clone() })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossPredictionLoss {
    pub center: f64,
    pub boundary: f64,
    pub center_count: usize,
    pub boundary_count: usize,
}

impl LossPredictionLoss {
    /// True when a region had no defined pixels and its loss was reported as 0.
    pub fn center_empty(&self) -> bool {
        self.center_count == 0
    }

    pub fn boundary_empty(&self) -> bool {
        self.boundary_count == 0
    }
}

/// Binary cross-entropy of `sigmoid(logit)` against `target`, evaluated stably.
#[inline]
pub fn bce_with_logit(logit: f64, target: f64) -> f64 {
    logit.max(0.0) - logit * target + (-logit.abs()).exp().ln_1p()
}

/// Mean BCE of the center and boundary channels over the defined pixels of each region.
pub fn loss_prediction_loss(
    logits: &Planes<f32>,
    labels: &LossLabels,
    boundary: &Grid<u8>,
) -> Result<LossPredictionLoss> {
    if logits.count() != 2 || !logits.matches_grid(boundary) || !labels.labels.same_dims(boundary) {
        return Err(Error::ShapeMismatch("loss logits, labels and boundary map differ in size".into()));
    }
    if !labels.defined.same_dims(boundary) {
        return Err(Error::ShapeMismatch("defined mask differs in size".into()));
    }
    let mut sums = [0.0f64; 2];
    let mut counts = [0usize; 2];
    for i in 0..boundary.len() {
        if labels.defined.as_slice()[i] == 0 {
            continue;
        }
        let region = usize::from(boundary.as_slice()[i] != 0);
        let target = labels.labels.as_slice()[i] as f64;
        sums[region] += bce_with_logit(logits.at(region, i) as f64, target);
        counts[region] += 1;
    }
    if counts[0] + counts[1] == 0 {
        return Err(Error::InvalidArgument("no defined loss labels".into()));
    }
    let mean = |r: usize| if counts[r] == 0 { 0.0 } else { sums[r] / counts[r] as f64 };
    Ok(LossPredictionLoss { center: mean(0), boundary: mean(1), center_count: counts[0], boundary_count: counts[1] })
}

/// Weighted phase-II objective.
pub fn phase2_loss(center: f64, boundary: f64, seg_losses: [f64; 3], lambdas: [f64; 5]) -> f64 {
    lambdas[0] * center
        + lambdas[1] * boundary
        + seg_losses.iter().zip(&lambdas[2..]).map(|(l, w)| l * w).sum::<f64>()
}
