//! Synthetic shape scenes with plausible head outputs, for demos and tests.

use std::path::Path;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{Grid, Planes};
use crate::selection::boundary_mask;
use crate::session::{load_session, Session, SessionManifest};
use crate::tensor::{write_tensor, Tensor};
use crate::uncertainty::{argmax, HeadOutputs, LossScores, MaturityHeads};

#[derive(Debug, Clone)]
pub struct ToyImage {
    pub image: RgbImage,
    pub gt: Grid<i32>,
    pub outputs: HeadOutputs,
}

/// Base color of a class.
pub fn class_color(class: usize) -> [u8; 3] {
    const PALETTE: [[u8; 3]; 8] = [
        [70, 70, 70],
        [200, 40, 40],
        [40, 170, 60],
        [40, 70, 200],
        [220, 200, 50],
        [160, 60, 190],
        [40, 190, 190],
        [230, 130, 40],
    ];
    if class < PALETTE.len() {
        PALETTE[class]
    } else {
        let h = (class as u32).wrapping_mul(2654435761);
        [(h >> 8) as u8, (h >> 16) as u8, (h >> 24) as u8]
    }
}

/// Ground truth of rectangles and discs of classes `1..C` on a class-0 background.
pub fn toy_ground_truth(h: usize, w: usize, num_classes: usize, rng: &mut impl Rng) -> Grid<i32> {
    let mut gt = Grid::filled(h, w, 0i32);
    let shapes = rng.random_range(3..7);
    let lo = (h.min(w) / 8).max(1);
    let hi = (h.min(w) / 3).max(lo + 1);
    for _ in 0..shapes {
        let class = rng.random_range(1..num_classes) as i32;
        let size = rng.random_range(lo..hi);
        let cy = rng.random_range(0..h) as isize;
        let cx = rng.random_range(0..w) as isize;
        let disc = rng.random_bool(0.5);
        let r = size as isize / 2;
        for y in (cy - r).max(0)..(cy + r + 1).min(h as isize) {
            for x in (cx - r).max(0)..(cx + r + 1).min(w as isize) {
                let (dy, dx) = (y - cy, x - cx);
                if !disc || dy * dy + dx * dx <= r * r {
                    gt.set(y as usize, x as usize, class);
                }
            }
        }
    }
    gt
}

/// Renders ground truth as a noisy color image.
pub fn render(gt: &Grid<i32>, noise: u8, rng: &mut impl Rng) -> RgbImage {
    let (h, w) = gt.dims();
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let base = class_color(gt.get(y as usize, x as usize) as usize);
        Rgb(base.map(|c| {
            let n = if noise == 0 { 0 } else { rng.random_range(-(noise as i32)..=noise as i32) };
            (c as i32 + n).clamp(0, 255) as u8
        }))
    })
}

fn mixture(pred: &Grid<i32>, conf: &[f32], c: usize) -> Planes<f32> {
    let n = pred.len();
    let mut data = vec![0.0f32; c * n];
    for i in 0..n {
        let rest = (1.0 - conf[i]) / c as f32;
        for k in 0..c {
            data[k * n + i] = rest;
        }
        data[pred.as_slice()[i] as usize * n + i] += conf[i];
    }
    Planes::new(c, pred.height(), pred.width(), data).expect("sized above")
}

/// A scene and head outputs that are confident inside shapes, unsure near
/// their edges, and less mature in the shallower heads.
pub fn toy_image(h: usize, w: usize, num_classes: usize, seed: u64) -> ToyImage {
    assert!(num_classes >= 2, "need at least two classes");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gt = toy_ground_truth(h, w, num_classes, &mut rng);
    let image = render(&gt, 20, &mut rng);
    let edges = boundary_mask(&gt, 2);
    let n = h * w;

    let mut conf = Vec::with_capacity(n);
    let mut pred = Vec::with_capacity(n);
    for i in 0..n {
        let c: f32 = if edges.as_slice()[i] == 1 { rng.random_range(0.2..0.7) } else { rng.random_range(0.55..0.98) };
        conf.push(c);
        let flip = rng.random::<f32>() < (1.0 - c) * 0.5;
        pred.push(if flip { rng.random_range(0..num_classes) as i32 } else { gt.as_slice()[i] });
    }
    let pred = Grid::new(h, w, pred).expect("sized");
    let final_probs = mixture(&pred, &conf, num_classes);

    let heads: [Planes<f32>; 3] = std::array::from_fn(|k| {
        let scale = 0.45 + 0.18 * k as f32;
        let head_pred = Grid::new(
            h,
            w,
            pred.as_slice()
                .iter()
                .map(|&p| if rng.random::<f32>() < 0.25 - 0.07 * k as f32 { rng.random_range(0..num_classes) as i32 } else { p })
                .collect(),
        )
        .expect("sized");
        let head_conf: Vec<f32> = conf.iter().map(|c| c * scale).collect();
        mixture(&head_pred, &head_conf, num_classes)
    });

    let mut weights = vec![0.0f32; 3 * n];
    for i in 0..n {
        let raw: [f32; 3] = std::array::from_fn(|_| rng.random_range(0.1..1.0));
        let sum: f32 = raw.iter().sum();
        for k in 0..3 {
            weights[k * n + i] = raw[k] / sum;
        }
    }
    let mut logits = vec![0.0f32; 2 * n];
    for i in 0..n {
        let base = 6.0 * (0.6 - conf[i]);
        logits[i] = base + rng.random_range(-0.5..0.5);
        logits[n + i] = base + 0.5 + rng.random_range(-0.5..0.5);
    }

    let boundary = boundary_mask(&argmax(&final_probs), 2);
    let outputs = HeadOutputs::new(
        final_probs,
        Some(MaturityHeads { probs: heads, weights: Some(Planes::new(3, h, w, weights).expect("sized")) }),
        Some(LossScores { logits: Planes::new(2, h, w, logits).expect("sized"), boundary }),
    )
    .expect("synthetic outputs are valid");
    ToyImage { image, gt, outputs }
}

/// Writes the image, ground truth and every head-output tensor into the
/// session's folder for `image_id`.
pub fn write_toy_image(session: &Session, image_id: &str, toy: &ToyImage) -> Result<()> {
    let file = |name: &str| session.image_file(image_id, name);
    let png = file("image.png");
    toy.image.save(&png).map_err(|e| Error::Image { path: png.clone(), source: e })?;
    write_tensor(file("gt.mdbt"), &Tensor::try_from(&toy.gt)?)?;
    let o = &toy.outputs;
    write_tensor(file("probs_final.mdbt"), &Tensor::try_from(&o.final_probs)?)?;
    if let Some(heads) = &o.heads {
        for (k, p) in heads.probs.iter().enumerate() {
            write_tensor(file(&format!("probs_head{}.mdbt", k + 1)), &Tensor::try_from(p)?)?;
        }
        if let Some(wm) = &heads.weights {
            write_tensor(file("weights.mdbt"), &Tensor::try_from(wm)?)?;
        }
    }
    if let Some(loss) = &o.loss {
        write_tensor(file("loss_scores.mdbt"), &Tensor::try_from(&loss.logits)?)?;
        write_tensor(file("boundary.mdbt"), &Tensor::try_from(&loss.boundary)?)?;
    }
    Ok(())
}

/// Creates a session of `images` synthetic `h x w` scenes with ids `img000`, ...
pub fn write_toy_session(
    dir: impl AsRef<Path>,
    images: usize,
    (h, w): (usize, usize),
    num_classes: usize,
    per_image_budget: usize,
    seed: u64,
) -> Result<Session> {
    let dir = dir.as_ref();
    let ids: Vec<String> = (0..images).map(|i| format!("img{i:03}")).collect();
    Session::create(dir, SessionManifest::new(ids.clone(), num_classes, per_image_budget))?;
    let toys: Vec<ToyImage> =
        (0..images).map(|i| toy_image(h, w, num_classes, seed.wrapping_add(i as u64))).collect();
    // image sizes are resolved from the PNGs when the session loads
    for (id, toy) in ids.iter().zip(&toys) {
        let png = dir.join("images").join(id).join("image.png");
        toy.image.save(&png).map_err(|e| Error::Image { path: png.clone(), source: e })?;
    }
    let session = load_session(dir)?;
    for (id, toy) in ids.iter().zip(&toys) {
        write_toy_image(&session, id, toy)?;
    }
    Ok(session)
}
