//! Brute-force reference implementations. Nothing here calls into the engine's
//! math; the checks compare the engine against these.

use madbal_core::UncertaintyVariant;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// `sum p ln(1/p)` over the support.
pub fn entropy(p: &[f64]) -> f64 {
    let mut h = 0.0;
    for &v in p {
        if v > 0.0 {
            h += v * (1.0 / v).ln();
        }
    }
    h
}

/// Jensen-Shannon divergence written term by term from its definition
/// `KL(p || m) / 2 + KL(q || m) / 2` with `m = (p + q) / 2`.
pub fn js(p: &[f64], q: &[f64]) -> f64 {
    let mut d = 0.0;
    for i in 0..p.len() {
        let s = p[i] + q[i];
        if p[i] > 0.0 {
            d += 0.5 * p[i] * (2.0 * p[i] / s).ln();
        }
        if q[i] > 0.0 {
            d += 0.5 * q[i] * (2.0 * q[i] / s).ln();
        }
    }
    d
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `|a - b| <= rel * max(|a|, |b|)`, with a small absolute floor for values near zero.
pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + 1e-15
}

/// Everything that enters one pixel's uncertainty.
#[derive(Debug, Clone)]
pub struct PixelInputs {
    pub final_probs: Vec<f64>,
    pub heads: [Vec<f64>; 3],
    pub weights: [f64; 3],
    pub logits: [f64; 2],
    pub boundary: bool,
}

pub fn pixel_u(px: &PixelInputs, variant: UncertaintyVariant) -> f64 {
    let h = entropy(&px.final_probs);
    let logit = if px.boundary { px.logits[1] } else { px.logits[0] };
    let multiplier = sigmoid(logit).exp();
    match variant {
        UncertaintyVariant::EntropyOnly => h,
        UncertaintyVariant::NoMaturity => h * multiplier,
        UncertaintyVariant::Averaged => {
            let js_sum: f64 = px.heads.iter().map(|q| js(&px.final_probs, q) / 3.0).sum();
            (h + js_sum) * multiplier
        }
        UncertaintyVariant::Full => {
            let js_sum: f64 = (0..3).map(|k| px.weights[k] * js(&px.final_probs, &px.heads[k])).sum();
            (h + js_sum) * multiplier
        }
    }
}

/// Class with the most votes, lowest class on ties.
pub fn majority(labels: impl Iterator<Item = usize>, num_classes: usize) -> usize {
    let mut hist = vec![0usize; num_classes];
    for l in labels {
        hist[l] += 1;
    }
    let mut best = 0;
    for c in 1..num_classes {
        if hist[c] > hist[best] {
            best = c;
        }
    }
    best
}

fn rational(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite")
}

/// Exact shares `u_k * total / sum(u)`; a share within 1e-9 relative of an
/// integer is taken as that integer.
pub fn shares(u: &[f64], total: usize) -> Vec<BigRational> {
    let sum = u.iter().fold(BigRational::zero(), |a, &v| a + rational(v));
    let b = BigRational::from_integer(BigInt::from(total));
    let one = BigRational::one();
    let tol = rational(1e-9);
    u.iter()
        .map(|&v| {
            let share = rational(v) * &b / &sum;
            let nearest = share.round();
            let scale = if nearest > one { nearest.clone() } else { one.clone() };
            if (&share - &nearest).abs() <= &tol * scale {
                nearest
            } else {
                share
            }
        })
        .collect()
}

fn small(r: &BigRational) -> usize {
    r.to_integer().to_usize().expect("small")
}

pub fn ceilings(u: &[f64], total: usize) -> Vec<usize> {
    shares(u, total).iter().map(|s| small(&s.ceil())).collect()
}

/// Ceiling shares, then one unit off each rounded-up cluster with the smallest
/// fractional part (ties toward the larger index) until the sum is `total`.
pub fn allocate(u: &[f64], total: usize) -> Vec<usize> {
    let shares = shares(u, total);
    let mut out: Vec<usize> = shares.iter().map(|s| small(&s.ceil())).collect();
    let mut excess = out.iter().sum::<usize>() - total;
    // fractions count as equal when they agree to 1e-9
    let grid = BigRational::from_integer(BigInt::from(1_000_000_000u64));
    let fract: Vec<BigRational> = shares.iter().map(|s| s - s.floor()).collect();
    let key: Vec<BigInt> = fract.iter().map(|f| (f * &grid).round().to_integer()).collect();
    let mut order: Vec<usize> = (0..u.len()).filter(|&k| !fract[k].is_zero()).collect();
    order.sort_by(|&a, &b| key[a].cmp(&key[b]).then(b.cmp(&a)));
    for k in order {
        if excess == 0 {
            break;
        }
        out[k] -= 1;
        excess -= 1;
    }
    assert_eq!(excess, 0, "trim ran out of candidates");
    out
}

/// One image as the selection oracle sees it. Flat row-major vectors.
#[derive(Debug, Clone)]
pub struct OracleImage {
    pub id: String,
    pub width: usize,
    pub u: Vec<f64>,
    pub labeled: Vec<bool>,
    pub pred: Vec<usize>,
    /// Superpixel id per pixel; ignored without breakdown.
    pub superpixel: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleQuery {
    pub image_id: String,
    pub row: usize,
    pub col: usize,
    pub u: f64,
    pub superpixel: Option<usize>,
    pub cluster: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct OracleSelection {
    pub queries: Vec<OracleQuery>,
    pub budgets: Option<Vec<usize>>,
}

/// Ordering of candidate pixels: larger u first, then raster order.
fn by_u(u: &[f64]) -> impl Fn(&usize, &usize) -> std::cmp::Ordering + '_ {
    move |&a, &b| u[b].partial_cmp(&u[a]).unwrap().then(a.cmp(&b))
}

/// Clustering for the breakdown modes: `k` and one cluster per superpixel,
/// image by image.
pub struct Clusters<'a> {
    pub k: usize,
    pub assignment: &'a [usize],
}

pub fn select(
    images: &[OracleImage],
    clusters: Option<Clusters<'_>>,
    num_classes: usize,
    per_image: usize,
    per_superpixel: usize,
) -> OracleSelection {
    let n_img = images.len();
    let unlabeled: Vec<Vec<usize>> =
        images.iter().map(|im| (0..im.u.len()).filter(|&p| !im.labeled[p]).collect()).collect();
    let eligible_images = unlabeled.iter().filter(|v| !v.is_empty()).count();
    let total = per_image * eligible_images;

    let Some(clusters) = clusters else {
        let mut queries = Vec::new();
        for (im, free) in images.iter().zip(&unlabeled) {
            let mut order = free.clone();
            order.sort_by(by_u(&im.u));
            for &p in order.iter().take(per_image) {
                queries.push(OracleQuery {
                    image_id: im.id.clone(),
                    row: p / im.width,
                    col: p % im.width,
                    u: im.u[p],
                    superpixel: None,
                    cluster: None,
                });
            }
        }
        return OracleSelection { queries, budgets: None };
    };

    // superpixel table, image by image
    struct Sp {
        image: usize,
        id: usize,
        pixels: Vec<usize>,
        dominant: usize,
        eligible: bool,
        cluster: usize,
        u: f64,
    }
    let mut sps: Vec<Sp> = Vec::new();
    for (i, im) in images.iter().enumerate() {
        let count = im.superpixel.iter().max().map_or(0, |m| m + 1);
        for s in 0..count {
            let pixels: Vec<usize> = (0..im.u.len()).filter(|&p| im.superpixel[p] == s).collect();
            let dominant = majority(pixels.iter().map(|&p| im.pred[p]), num_classes);
            let eligible = pixels.iter().any(|&p| !im.labeled[p]);
            let cluster = clusters.assignment[sps.len()];
            sps.push(Sp { image: i, id: s, pixels, dominant, eligible, cluster, u: 0.0 });
        }
    }
    assert_eq!(sps.len(), clusters.assignment.len());

    // class frequency of dominant labels per cluster
    let mut freq = vec![vec![0.0f64; num_classes]; clusters.k];
    let mut size = vec![0usize; clusters.k];
    for sp in &sps {
        freq[sp.cluster][sp.dominant] += 1.0;
        size[sp.cluster] += 1;
    }
    for c in 0..clusters.k {
        for v in freq[c].iter_mut() {
            if size[c] > 0 {
                *v /= size[c] as f64;
            }
        }
    }
    for sp in sps.iter_mut() {
        if sp.eligible {
            let im = &images[sp.image];
            let mean = sp.pixels.iter().map(|&p| im.u[p]).sum::<f64>() / sp.pixels.len() as f64;
            sp.u = mean * (-freq[sp.cluster][sp.dominant]).exp();
        }
    }
    let mut u_cl = vec![0.0f64; clusters.k];
    for c in 0..clusters.k {
        if size[c] > 0 {
            u_cl[c] = sps.iter().filter(|s| s.cluster == c).map(|s| s.u).sum::<f64>() / size[c] as f64;
        }
    }
    let budgets = if total > 0 && u_cl.iter().any(|&v| v > 0.0) { allocate(&u_cl, total) } else { vec![0; clusters.k] };

    let mut picked: Vec<Vec<usize>> = vec![Vec::new(); n_img];
    for c in 0..clusters.k {
        let b = budgets[c];
        if b == 0 {
            continue;
        }
        let counts: Vec<usize> =
            (0..n_img).map(|i| sps.iter().filter(|s| s.image == i && s.cluster == c && s.eligible).count()).collect();
        let n: usize = counts.iter().sum();
        if n == 0 {
            continue;
        }
        let mut share: Vec<usize> = counts.iter().map(|&m| b * m / n).collect();
        let mut left = b - share.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..n_img).collect();
        order.sort_by(|&x, &y| ((b * counts[y]) % n).cmp(&((b * counts[x]) % n)).then(images[x].id.cmp(&images[y].id)));
        for &i in &order {
            if left == 0 {
                break;
            }
            share[i] += 1;
            left -= 1;
        }

        for i in 0..n_img {
            let im = &images[i];
            let mut ranked: Vec<&Sp> = sps.iter().filter(|s| s.image == i && s.cluster == c && s.eligible).collect();
            ranked.sort_by(|a, b| b.u.partial_cmp(&a.u).unwrap().then(a.id.cmp(&b.id)));
            let mut queues: Vec<Vec<usize>> = ranked
                .iter()
                .map(|s| {
                    let mut q: Vec<usize> = s.pixels.iter().copied().filter(|&p| !im.labeled[p]).collect();
                    q.sort_by(by_u(&im.u));
                    q.reverse(); // pop from the back
                    q
                })
                .collect();
            let mut need = share[i];
            loop {
                let mut progressed = false;
                for q in queues.iter_mut() {
                    let mut taken = 0;
                    while taken < per_superpixel && need > 0 {
                        let Some(p) = q.pop() else { break };
                        picked[i].push(p);
                        taken += 1;
                        need -= 1;
                        progressed = true;
                    }
                }
                if need == 0 || !progressed {
                    break;
                }
            }
        }
    }

    let mut queries = Vec::new();
    let mut offset = 0;
    for (i, im) in images.iter().enumerate() {
        let target = per_image.min(unlabeled[i].len());
        let mut mine = picked[i].clone();
        mine.sort_by(by_u(&im.u));
        mine.truncate(target);
        if mine.len() < target {
            let mut rest: Vec<usize> = unlabeled[i].iter().copied().filter(|p| !picked[i].contains(p)).collect();
            rest.sort_by(by_u(&im.u));
            mine.extend(rest.into_iter().take(target - mine.len()));
            mine.sort_by(by_u(&im.u));
        }
        for p in mine {
            let s = im.superpixel[p];
            queries.push(OracleQuery {
                image_id: im.id.clone(),
                row: p / im.width,
                col: p % im.width,
                u: im.u[p],
                superpixel: Some(s),
                cluster: Some(clusters.assignment[offset + s]),
            });
        }
        offset += im.superpixel.iter().max().map_or(0, |m| m + 1);
    }
    OracleSelection { queries, budgets: Some(budgets) }
}
