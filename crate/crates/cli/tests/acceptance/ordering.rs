//! Scaled-down active-learning comparison on synthetic shapes: selection modes
//! against random pixels, same seed pools, toy model retrained every round.

use std::time::Instant;

use madbal_core::round::{miou, run_round, seed_pool, OracleKind, RoundOptions};
use madbal_core::{load_session, write_tensor, LabelRecord, LabelSource, SelectionMode, Session, SessionManifest, Tensor};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::toy_model::{scene, write_outputs, Model, Scene, CLASSES, SIDE};
use crate::Outcome;

const TRAIN: usize = 50;
const VAL: usize = 20;
const PER_IMAGE: usize = 10;
const ROUNDS: u32 = 4;
const SEEDS: u64 = 5;
const CLUSTERS: usize = 12;

#[derive(Clone, Copy, PartialEq)]
enum Arm {
    Engine(SelectionMode),
    Random,
}

impl Arm {
    fn name(self) -> String {
        match self {
            Arm::Engine(m) => m.to_string(),
            Arm::Random => "random".into(),
        }
    }
}

fn pool(session: &Session) -> Vec<(usize, usize, usize)> {
    session
        .labels()
        .iter()
        .map(|r| (session.image_index(&r.image_id).unwrap(), r.row * SIDE + r.col, r.class_id))
        .collect()
}

fn val_miou(model: &Model, val: &[Scene]) -> f64 {
    let preds: Vec<_> = val.iter().map(|s| model.predict(s)).collect();
    let gts: Vec<_> = val.iter().map(|s| s.gt.clone()).collect();
    miou(&preds, &gts, CLASSES).expect("valid maps")
}

fn random_round(session: &mut Session, train: &[Scene], round: u32, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed * 1000 + round as u64);
    let mut records = Vec::new();
    for (i, id) in session.image_ids().to_vec().iter().enumerate() {
        let free: Vec<usize> = (0..SIDE * SIDE).filter(|&p| !session.is_labeled(i, p / SIDE, p % SIDE)).collect();
        for j in sample(&mut rng, free.len(), PER_IMAGE.min(free.len())) {
            let p = free[j];
            records.push(LabelRecord {
                image_id: id.clone(),
                row: p / SIDE,
                col: p % SIDE,
                class_id: train[i].gt.as_slice()[p] as usize,
                round,
                source: LabelSource::Oracle,
            });
        }
    }
    session.append_labels(&records).map_err(|e| e.to_string())
}

/// Final validation mIoU of one arm and seed, plus the curve after each round.
fn run_arm(arm: Arm, seed: u64, train: &[Scene], val: &[Scene]) -> Result<Vec<f64>, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ids: Vec<String> = (0..TRAIN).map(|i| format!("train{i:03}")).collect();
    let mut manifest = SessionManifest::new(ids.clone(), CLASSES, PER_IMAGE);
    manifest.config.clusters = CLUSTERS;
    Session::create(dir.path(), manifest).map_err(|e| e.to_string())?;
    for (id, s) in ids.iter().zip(train) {
        s.image.save(dir.path().join("images").join(id).join("image.png")).map_err(|e| e.to_string())?;
    }
    let mut session = load_session(dir.path()).map_err(|e| e.to_string())?;
    for (id, s) in ids.iter().zip(train) {
        write_tensor(session.image_file(id, "gt.mdbt"), &Tensor::try_from(&s.gt).unwrap()).map_err(|e| e.to_string())?;
    }
    seed_pool(&mut session, PER_IMAGE, seed).map_err(|e| e.to_string())?;

    let mut curve = Vec::new();
    for round in 1..=ROUNDS {
        let model = Model::train(train, &pool(&session));
        curve.push(val_miou(&model, val));
        match arm {
            Arm::Random => random_round(&mut session, train, round, seed)?,
            Arm::Engine(mode) => {
                for (id, s) in ids.iter().zip(train) {
                    write_outputs(&session, id, &model.outputs(s)).map_err(|e| e.to_string())?;
                }
                let opts = RoundOptions { mode, clusters: CLUSTERS, seed };
                run_round(&mut session, &opts, OracleKind::SimulatedGt).map_err(|e| e.to_string())?;
            }
        }
    }
    let expected = TRAIN * PER_IMAGE * (ROUNDS as usize + 1);
    ensure!(session.pool_size() == expected, "{}: pool has {} labels, expected {expected}", arm.name(), session.pool_size());
    let model = Model::train(train, &pool(&session));
    curve.push(val_miou(&model, val));
    Ok(curve)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn run() -> Outcome {
    let start = Instant::now();
    let train: Vec<Scene> = (0..TRAIN as u64).map(scene).collect();
    let val: Vec<Scene> = (0..VAL as u64).map(|i| scene(10_000 + i)).collect();
    let arms = [
        Arm::Engine(SelectionMode::Madbal),
        Arm::Engine(SelectionMode::Vanilla),
        Arm::Engine(SelectionMode::NoBreakdown),
        Arm::Random,
    ];
    let mut finals: Vec<Vec<f64>> = vec![Vec::new(); arms.len()];
    let mut curves: Vec<Vec<f64>> = vec![vec![0.0; ROUNDS as usize + 1]; arms.len()];
    for seed in 0..SEEDS {
        for (a, &arm) in arms.iter().enumerate() {
            let curve = run_arm(arm, seed, &train, &val)?;
            for (slot, v) in curves[a].iter_mut().zip(&curve) {
                *slot += v / SEEDS as f64;
            }
            finals[a].push(*curve.last().unwrap());
        }
    }
    let summary: Vec<String> = arms
        .iter()
        .zip(&finals)
        .zip(&curves)
        .map(|((arm, f), c)| {
            let c: Vec<String> = c.iter().map(|v| format!("{:.3}", v)).collect();
            format!("{} {:.4}±{:.4} [{}]", arm.name(), mean(f), std(f), c.join(" "))
        })
        .collect();
    let summary = summary.join("; ");
    let (madbal, vanilla, random) = (&finals[0], &finals[1], &finals[3]);
    let pooled = ((std(madbal).powi(2) + std(random).powi(2)) / 2.0).sqrt();
    let margin = mean(madbal) - mean(random);
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 1800.0, "took {secs:.0} s; {summary}");
    ensure!(
        margin > pooled,
        "madbal beats random by {margin:.4}, pooled std is {pooled:.4}; {summary}"
    );
    ensure!(mean(madbal) >= mean(vanilla), "madbal below vanilla; {summary}");
    Ok(format!("margin over random {margin:.4} > pooled std {pooled:.4}; {summary}"))
}
