//! Loss labels against exact per-class mean thresholds, and the loss values of
//! the loss-prediction and phase-II objectives.

use madbal_core::uncertainty::{
    loss_labels, loss_prediction_loss, phase2_loss, LossLabels, PoolLosses, DEFAULT_PHASE2_WEIGHTS,
};
use madbal_core::{Grid, Planes};
use num_rational::BigRational;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Outcome;

struct Image {
    loss: Grid<f32>,
    gt: Grid<i32>,
    mask: Grid<u8>,
}

fn random_loss(rng: &mut ChaCha8Rng, style: u8) -> f32 {
    match style {
        // few distinct dyadic values: exact ties with the mean are common
        0 => [0.25f32, 0.5, 0.75, 1.0][rng.random_range(0..4)],
        1 => [0.0f32, 1.0][rng.random_range(0..2)],
        2 => rng.random_range(0.0f32..1.0).powi(6) * 20.0,
        _ => rng.random_range(0.0f32..5.0),
    }
}

fn random_pool(rng: &mut ChaCha8Rng) -> (Vec<Image>, usize) {
    let c = rng.random_range(1..=8);
    let n_img = rng.random_range(1..=4);
    let style = rng.random_range(0..4);
    let budget = rng.random_range(1..=10_000usize);
    let images = (0..n_img)
        .map(|_| {
            let px = (budget / n_img).max(1);
            let w = rng.random_range(1..=px.min(100));
            let h = (px / w).max(1);
            let loss = Grid::from_fn(h, w, |_, _| random_loss(rng, style));
            let gt = Grid::from_fn(h, w, |_, _| rng.random_range(0..c as i32));
            let density = rng.random_range(0.05..1.0);
            let mask = Grid::from_fn(h, w, |_, _| u8::from(rng.random_bool(density)));
            Image { loss, gt, mask }
        })
        .collect();
    (images, c)
}

/// Equal-step triples around a non-dyadic center, so the middle value equals
/// its class mean exactly.
fn tie_pool(rng: &mut ChaCha8Rng) -> (Vec<Image>, usize) {
    let c = 3;
    let mut loss = Vec::new();
    let mut gt = Vec::new();
    for class in 0..c {
        let center = [0.1f32, 0.3, 1.7][class];
        let step = 2f32.powi(-rng.random_range(8..14));
        for v in [center - step, center, center + step] {
            loss.push(v);
            gt.push(class as i32);
        }
    }
    let n = loss.len();
    let image = Image {
        loss: Grid::new(1, n, loss).unwrap(),
        gt: Grid::new(1, n, gt).unwrap(),
        mask: Grid::filled(1, n, 1),
    };
    (vec![image], c)
}

fn rational(v: f32) -> BigRational {
    BigRational::from_float(v as f64).expect("finite")
}

/// Labels in exact arithmetic, plus the number of pixels sitting exactly on
/// their threshold.
fn oracle(images: &[Image], c: usize) -> (Vec<Vec<u8>>, Vec<Option<BigRational>>, usize) {
    let mut sums = vec![BigRational::zero(); c];
    let mut counts = vec![0u64; c];
    for im in images {
        for i in 0..im.loss.len() {
            if im.mask.as_slice()[i] == 1 {
                let k = im.gt.as_slice()[i] as usize;
                sums[k] += rational(im.loss.as_slice()[i]);
                counts[k] += 1;
            }
        }
    }
    let tau: Vec<Option<BigRational>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &n)| (n > 0).then(|| s / BigRational::from_integer(n.into())))
        .collect();
    let mut ties = 0;
    let labels = images
        .iter()
        .map(|im| {
            (0..im.loss.len())
                .map(|i| {
                    if im.mask.as_slice()[i] == 0 {
                        return 0;
                    }
                    let t = tau[im.gt.as_slice()[i] as usize].as_ref().unwrap();
                    let v = rational(im.loss.as_slice()[i]);
                    if &v == t {
                        ties += 1;
                    }
                    u8::from(&v >= t)
                })
                .collect()
        })
        .collect();
    (labels, tau, ties)
}

fn check(images: &[Image], c: usize, case: usize) -> Result<usize, String> {
    let pool: Vec<PoolLosses<'_>> = images
        .iter()
        .map(|im| PoolLosses { per_pixel_loss: &im.loss, gt_class: &im.gt, pool_mask: &im.mask })
        .collect();
    let got = loss_labels(&pool, c).map_err(|e| format!("case {case}: {e}"))?;
    let (want, tau, ties) = oracle(images, c);
    for (j, (g, w)) in got.iter().zip(&want).enumerate() {
        ensure!(g.labels.as_slice() == w.as_slice(), "case {case} image {j}: labels differ");
        ensure!(g.defined.as_slice() == images[j].mask.as_slice(), "case {case} image {j}: defined mask differs");
        for k in 0..c {
            match (&g.thresholds[k], &tau[k]) {
                (None, None) => {}
                (Some(a), Some(b)) => {
                    let b = num_traits::ToPrimitive::to_f64(b).unwrap();
                    ensure!((a - b).abs() <= 1e-9 * b.abs() + 1e-12, "case {case}: threshold {k} is {a}, not {b}");
                }
                _ => return Err(format!("case {case}: threshold {k} presence differs")),
            }
        }
    }
    Ok(ties)
}

pub fn run() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1055);
    let mut ties = 0;
    let mut pixels = 0;
    let cases = 300;
    for case in 0..cases {
        let (images, c) = if case % 5 == 4 { tie_pool(&mut rng) } else { random_pool(&mut rng) };
        ensure!(images.iter().map(|im| im.loss.len()).sum::<usize>() <= 10_000, "case {case}: pool too large");
        if images.iter().all(|im| im.mask.as_slice().iter().all(|&m| m == 0)) {
            continue;
        }
        pixels += images.iter().map(|im| im.mask.as_slice().iter().filter(|&&m| m == 1).count()).sum::<usize>();
        ties += check(&images, c, case)?;
    }
    ensure!(ties > 0, "no pixel sat exactly on its threshold; the tie case went untested");
    Ok(format!("{cases} pools, {pixels} labeled pixels, {ties} exact ties mapped to 1"))
}

pub fn run_values() -> Outcome {
    let one = |v: u8| Grid::new(1, 1, vec![v]).unwrap();
    let labels = LossLabels { labels: one(1), defined: one(1), thresholds: vec![Some(0.0)] };
    let logits = Planes::new(2, 1, 1, vec![0.0f32, 0.0]).unwrap();
    let out = loss_prediction_loss(&logits, &labels, &one(0)).map_err(|e| e.to_string())?;
    ensure!((out.center - 0.693147).abs() < 1e-6, "single-pixel center loss {}", out.center);
    ensure!(out.boundary == 0.0 && out.boundary_empty(), "empty boundary region gave {}", out.boundary);

    // all labels 0, all logits 0: ln 2 per pixel in both regions
    let n = 6;
    let labels = LossLabels {
        labels: Grid::filled(1, n, 0),
        defined: Grid::filled(1, n, 1),
        thresholds: vec![Some(0.0)],
    };
    let boundary = Grid::new(1, n, vec![0, 1, 0, 1, 1, 0]).unwrap();
    let out = loss_prediction_loss(&Planes::new(2, 1, n, vec![0.0; 2 * n]).unwrap(), &labels, &boundary)
        .map_err(|e| e.to_string())?;
    ensure!(
        (out.center - 0.693147).abs() < 1e-6 && (out.boundary - 0.693147).abs() < 1e-6,
        "symmetric case gave {} / {}",
        out.center,
        out.boundary
    );

    let total = phase2_loss(1.0, 1.0, [1.0; 3], DEFAULT_PHASE2_WEIGHTS);
    ensure!((total - 2.30).abs() < 1e-6, "weighted sum with unit components is {total}");
    ensure!(DEFAULT_PHASE2_WEIGHTS == [1.0, 1.0, 0.05, 0.1, 0.15], "default weights {DEFAULT_PHASE2_WEIGHTS:?}");
    Ok(format!("BCE {:.6}, weighted sum {total:.6}", out.center))
}
