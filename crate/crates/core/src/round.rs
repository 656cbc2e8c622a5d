//! One active-learning round: pixel uncertainty, superpixels and clusters,
//! query selection, labeling and the persisted report.
//!
//! Round `k = round_index + 1` writes into `rounds/<k>/`:
//!
//! ```text
//! queries.json            QuerySet
//! report.json             RoundReport (status pending until labels land)
//! clusters.json           K-means assignment over all superpixels
//! answers.json            buffered human answers
//! uncertainty/<id>.mdbt   F32 [H, W] pixel uncertainty
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Planes};
use crate::selection::{
    boundary_mask, random_cluster_assignment, select_queries, ClusterInput, ClusterStats, ImageInput, Query, QuerySet,
    Selection, SelectionMode, SelectionOptions,
};
use crate::session::{read_json, write_json_atomic, LabelRecord, LabelSource, Session};
use crate::superpixels::{
    image_features, kmeans, slic_segment, target_superpixel_count, FeatureMatrix, SuperpixelMap, DEFAULT_MAX_ITER,
};
use crate::tensor::{read_tensor, write_tensor, Tensor};
use crate::uncertainty::{
    argmax, pixel_uncertainty, HeadOutputs, LossScores, MaturityHeads, PixelUncertaintyMap, UncertaintyVariant,
};

pub const QUERIES_FILE: &str = "queries.json";
pub const REPORT_FILE: &str = "report.json";
pub const CLUSTERS_FILE: &str = "clusters.json";
pub const ANSWERS_FILE: &str = "answers.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleKind {
    /// Labels looked up in `gt.mdbt`.
    #[serde(rename = "sim")]
    SimulatedGt,
    /// Labels supplied through the annotation service.
    #[serde(rename = "human")]
    Human,
}

impl fmt::Display for OracleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OracleKind::SimulatedGt => "sim",
            OracleKind::Human => "human",
        })
    }
}

impl FromStr for OracleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sim" => Ok(OracleKind::SimulatedGt),
            "human" => Ok(OracleKind::Human),
            _ => Err(Error::InvalidArgument(format!("unknown oracle {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoundStatus {
    Pending,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageQueryCount {
    pub image_id: String,
    pub queries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: u32,
    pub mode: SelectionMode,
    /// `None` when only selection was run.
    pub oracle: Option<OracleKind>,
    pub status: RoundStatus,
    pub queries_issued: usize,
    pub labels_received: usize,
    pub pool_size_after: usize,
    pub per_cluster_budgets: Option<Vec<usize>>,
    pub clusters: Option<Vec<ClusterStats>>,
    pub per_image_queries: Vec<ImageQueryCount>,
    pub excluded_images: Vec<String>,
    /// mIoU of the model outputs this round was selected from, when ground truth exists.
    pub miou: Option<f64>,
    pub wall_time_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundOptions {
    pub mode: SelectionMode,
    /// K-means cluster count.
    pub clusters: usize,
    pub seed: u64,
}

impl RoundOptions {
    /// Mode and cluster count from the session manifest.
    pub fn from_session(session: &Session, seed: u64) -> Self {
        Self { mode: session.manifest.mode, clusters: session.manifest.config.clusters, seed }
    }
}

/// Global clustering of every superpixel in the session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterFile {
    pub k: usize,
    pub seed: u64,
    /// Superpixels per image, in manifest order.
    pub superpixel_counts: Vec<usize>,
    pub feature_dim: usize,
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub sse_history: Vec<f64>,
    pub iterations: usize,
}

fn round_file(session: &Session, round: u32, name: &str) -> std::path::PathBuf {
    session.round_dir(round).join(name)
}

fn ensure_round_dir(session: &Session, round: u32) -> Result<()> {
    let dir = session.round_dir(round);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))
}

fn read_required(path: &Path) -> Result<Tensor> {
    if !path.is_file() {
        return Err(Error::MissingInput(format!("{} not found", path.display())));
    }
    read_tensor(path)
}

fn read_planes(path: &Path) -> Result<Planes<f32>> {
    Planes::try_from(read_required(path)?)
}

pub fn load_image(session: &Session, image_id: &str) -> Result<RgbImage> {
    let path = session.image_file(image_id, "image.png");
    let img = image::open(&path).map_err(|e| Error::Image { path: path.clone(), source: e })?;
    Ok(img.to_rgb8())
}

pub fn load_ground_truth(session: &Session, image_id: &str) -> Result<Grid<i32>> {
    let path = session.image_file(image_id, "gt.mdbt");
    if !path.is_file() {
        return Err(Error::MissingGroundTruth(image_id.to_string()));
    }
    let gt = Grid::<i32>::try_from(read_tensor(&path)?)?;
    let idx = session.image_index(image_id).expect("image id from the session");
    if gt.dims() != session.image_dims(idx) {
        return Err(Error::ShapeMismatch(format!("{}: ground truth size differs from image", image_id)));
    }
    Ok(gt)
}

/// Reads the head-output tensors a variant needs. A missing `boundary.mdbt` is
/// derived from the final head's prediction.
pub fn load_head_outputs(session: &Session, image_index: usize, variant: UncertaintyVariant) -> Result<HeadOutputs> {
    let id = &session.image_ids()[image_index];
    let file = |name: &str| session.image_file(id, name);
    let final_probs = read_planes(&file("probs_final.mdbt"))?;
    let heads = match variant {
        UncertaintyVariant::Full | UncertaintyVariant::Averaged => Some(MaturityHeads {
            probs: [
                read_planes(&file("probs_head1.mdbt"))?,
                read_planes(&file("probs_head2.mdbt"))?,
                read_planes(&file("probs_head3.mdbt"))?,
            ],
            weights: match variant {
                UncertaintyVariant::Full => Some(read_planes(&file("weights.mdbt"))?),
                _ => None,
            },
        }),
        _ => None,
    };
    let loss = match variant {
        UncertaintyVariant::EntropyOnly => None,
        _ => {
            let logits = read_planes(&file("loss_scores.mdbt"))?;
            let boundary_path = file("boundary.mdbt");
            let boundary = if boundary_path.is_file() {
                Grid::<u8>::try_from(read_tensor(&boundary_path)?)?
            } else {
                boundary_mask(&argmax(&final_probs), session.manifest.config.boundary_radius)
            };
            Some(LossScores { logits, boundary })
        }
    };
    let outputs = HeadOutputs::new(final_probs, heads, loss)?;
    if outputs.dims() != session.image_dims(image_index) {
        return Err(Error::ShapeMismatch(format!("{id}: head outputs differ in size from the image")));
    }
    if outputs.num_classes() != session.manifest.num_classes {
        return Err(Error::ShapeMismatch(format!(
            "{id}: {} classes in probs_final, session has {}",
            outputs.num_classes(),
            session.manifest.num_classes
        )));
    }
    Ok(outputs)
}

/// Pixel uncertainty and final-head prediction of one image.
#[derive(Debug, Clone)]
pub struct ImageState {
    pub uncertainty: PixelUncertaintyMap,
    pub prediction: Grid<i32>,
}

pub fn compute_uncertainty(session: &Session, variant: UncertaintyVariant) -> Result<Vec<ImageState>> {
    (0..session.num_images())
        .map(|i| {
            let outputs = load_head_outputs(session, i, variant)?;
            let uncertainty = pixel_uncertainty(&outputs, &session.labeled_mask(i), variant)?;
            Ok(ImageState { uncertainty, prediction: outputs.prediction() })
        })
        .collect()
}

/// Reads `superpixels.mdbt` when present, otherwise segments `image.png` and
/// caches the result there.
pub fn load_or_segment(session: &Session, image_index: usize, compactness: f64, seed: u64) -> Result<SuperpixelMap> {
    let id = &session.image_ids()[image_index];
    let path = session.image_file(id, "superpixels.mdbt");
    let dims = session.image_dims(image_index);
    if path.is_file() {
        let map = SuperpixelMap::from_tensor(read_tensor(&path)?)?;
        if map.dims() != dims {
            return Err(Error::ShapeMismatch(format!("{id}: superpixel map differs in size from the image")));
        }
        return Ok(map);
    }
    let image = load_image(session, id)?;
    let map = slic_segment(&image, target_superpixel_count(dims.0, dims.1), compactness, seed)?;
    write_tensor(&path, &map.to_tensor()?)?;
    Ok(map)
}

pub fn prepare_superpixels(session: &Session, compactness: f64, seed: u64) -> Result<Vec<SuperpixelMap>> {
    (0..session.num_images()).map(|i| load_or_segment(session, i, compactness, seed)).collect()
}

/// Per-superpixel features: `features.mdbt` (`[S, D]`) when supplied, else the
/// built-in descriptor.
pub fn superpixel_features(session: &Session, image_index: usize, map: &SuperpixelMap) -> Result<Vec<Vec<f32>>> {
    let id = &session.image_ids()[image_index];
    let path = session.image_file(id, "features.mdbt");
    if path.is_file() {
        let tensor = read_tensor(&path)?;
        let shape = tensor.shape().to_vec();
        if shape.len() != 2 || shape[0] != map.count() {
            return Err(Error::ShapeMismatch(format!(
                "{id}: features.mdbt has shape {shape:?}, expected [{}, D]",
                map.count()
            )));
        }
        let flat = Grid::<f32>::try_from(tensor)?;
        let dim = shape[1];
        return Ok(flat.as_slice().chunks(dim).map(<[f32]>::to_vec).collect());
    }
    Ok(image_features(&load_image(session, id)?, map))
}

/// Runs K-means over every superpixel of the session and stores the result as
/// the next round's `clusters.json`. `k` is capped at the superpixel count.
pub fn cluster_superpixels(session: &Session, maps: &[SuperpixelMap], k: usize, seed: u64) -> Result<ClusterFile> {
    let mut rows = Vec::new();
    for (i, map) in maps.iter().enumerate() {
        rows.extend(superpixel_features(session, i, map)?);
    }
    let features = FeatureMatrix::from_rows(&rows)?;
    let k_eff = k.min(features.rows());
    if k_eff < k {
        log::warn!("only {} superpixels; using {k_eff} clusters instead of {k}", features.rows());
    }
    let out = kmeans(&features, k_eff, seed, DEFAULT_MAX_ITER)?;
    let file = ClusterFile {
        k: k_eff,
        seed,
        superpixel_counts: maps.iter().map(SuperpixelMap::count).collect(),
        feature_dim: features.dim(),
        assignment: out.assignment,
        centroids: out.centroids,
        sse_history: out.sse_history,
        iterations: out.iterations,
    };
    let round = session.next_round();
    ensure_round_dir(session, round)?;
    write_json_atomic(round_file(session, round, CLUSTERS_FILE), &file)?;
    Ok(file)
}

/// The next round's cached clustering if it matches, otherwise a fresh one.
pub fn load_or_cluster(session: &Session, maps: &[SuperpixelMap], k: usize, seed: u64) -> Result<ClusterFile> {
    let path = round_file(session, session.next_round(), CLUSTERS_FILE);
    if path.is_file() {
        let cached: ClusterFile = read_json(&path)?;
        let total: usize = maps.iter().map(SuperpixelMap::count).sum();
        let counts: Vec<usize> = maps.iter().map(SuperpixelMap::count).collect();
        if cached.seed == seed && cached.k == k.min(total) && cached.superpixel_counts == counts {
            return Ok(cached);
        }
    }
    cluster_superpixels(session, maps, k, seed)
}

struct SelectedRound {
    selection: Selection,
    predictions: Vec<Grid<i32>>,
}

fn select_inner(session: &Session, opts: &RoundOptions) -> Result<SelectedRound> {
    let round = session.next_round();
    let config = &session.manifest.config;
    let states = compute_uncertainty(session, opts.mode.uncertainty_variant())?;

    let maps = if opts.mode.uses_breakdown() {
        Some(prepare_superpixels(session, config.compactness, opts.seed)?)
    } else {
        None
    };
    let assignment = match &maps {
        Some(maps) if opts.mode.random_clusters() => {
            let total: usize = maps.iter().map(SuperpixelMap::count).sum();
            let k = opts.clusters.min(total);
            Some((k, random_cluster_assignment(total, k, opts.seed)?))
        }
        Some(maps) => {
            let file = load_or_cluster(session, maps, opts.clusters, opts.seed)?;
            Some((file.k, file.assignment))
        }
        None => None,
    };

    let inputs: Vec<ImageInput<'_>> = states
        .iter()
        .enumerate()
        .map(|(i, s)| ImageInput {
            image_id: &session.image_ids()[i],
            uncertainty: &s.uncertainty,
            prediction: Some(&s.prediction),
            superpixels: maps.as_ref().map(|m| &m[i]),
        })
        .collect();
    let cluster_input = assignment.as_ref().map(|(k, a)| ClusterInput { k: *k, assignment: a });
    let sel_opts = SelectionOptions {
        per_image_budget: session.manifest.per_image_budget,
        pixels_per_superpixel: config.pixels_per_superpixel,
        num_classes: session.manifest.num_classes,
    };
    let selection = select_queries(&inputs, cluster_input.as_ref(), opts.mode, &sel_opts, round)?;

    ensure_round_dir(session, round)?;
    let udir = session.round_dir(round).join("uncertainty");
    fs::create_dir_all(&udir).map_err(|e| Error::io(&udir, e))?;
    for (id, state) in session.image_ids().iter().zip(&states) {
        write_tensor(udir.join(format!("{id}.mdbt")), &state.uncertainty.to_tensor()?)?;
    }
    write_json_atomic(round_file(session, round, QUERIES_FILE), &selection.queries)?;
    Ok(SelectedRound { selection, predictions: states.into_iter().map(|s| s.prediction).collect() })
}

fn base_report(session: &Session, selection: &Selection, oracle: Option<OracleKind>, start: Instant) -> RoundReport {
    let queries = &selection.queries;
    let per_image_queries = session
        .image_ids()
        .iter()
        .map(|id| ImageQueryCount {
            image_id: id.clone(),
            queries: queries.queries.iter().filter(|q| &q.image_id == id).count(),
        })
        .collect();
    RoundReport {
        round: queries.round,
        mode: queries.mode,
        oracle,
        status: RoundStatus::Pending,
        queries_issued: queries.queries.len(),
        labels_received: 0,
        pool_size_after: session.pool_size(),
        per_cluster_budgets: selection.hierarchy.as_ref().map(|h| h.clusters.iter().map(|c| c.budget).collect()),
        clusters: selection.hierarchy.as_ref().map(|h| h.clusters.clone()),
        per_image_queries,
        excluded_images: queries.excluded_images.clone(),
        miou: None,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    }
}

/// Selects the next round's queries and writes `queries.json`, the uncertainty
/// maps and a pending `report.json`, without labeling anything.
pub fn select_round(session: &Session, opts: &RoundOptions) -> Result<Selection> {
    let start = Instant::now();
    if open_round(session)?.is_some() {
        return Err(Error::PendingLabels { round: session.next_round(), remaining: pending_count(session)? });
    }
    let selected = select_inner(session, opts)?;
    let report = base_report(session, &selected.selection, None, start);
    write_json_atomic(round_file(session, report.round, REPORT_FILE), &report)?;
    Ok(selected.selection)
}

/// Draws `n_per_image` distinct random pixels per image and labels them from
/// ground truth. Pixels whose ground truth is outside `0..C` (ignore values)
/// are skipped.
pub fn seed_pool(session: &mut Session, n_per_image: usize, seed: u64) -> Result<Vec<LabelRecord>> {
    if session.pool_size() > 0 {
        return Err(Error::InvalidSession(format!("pool already holds {} labels", session.pool_size())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for (i, id) in session.image_ids().iter().enumerate() {
        let (h, w) = session.image_dims(i);
        if n_per_image > h * w {
            return Err(Error::InvalidArgument(format!("{n_per_image} seed pixels requested, {id} has {}", h * w)));
        }
        let gt = load_ground_truth(session, id)?;
        let mut picks = rand::seq::index::sample(&mut rng, h * w, n_per_image).into_vec();
        picks.sort_unstable();
        for p in picks {
            let class = gt.as_slice()[p];
            if class < 0 || class as usize >= session.manifest.num_classes {
                continue;
            }
            records.push(LabelRecord {
                image_id: id.clone(),
                row: p / w,
                col: p % w,
                class_id: class as usize,
                round: 0,
                source: LabelSource::Seed,
            });
        }
    }
    session.append_labels(&records)?;
    Ok(records)
}

/// Ground-truth lookup for each query, in query order. Queries on ignore
/// pixels (ground truth outside `0..C`) produce no record.
pub fn simulated_oracle(
    queries: &[Query],
    ground_truth: &HashMap<String, Grid<i32>>,
    num_classes: usize,
    round: u32,
) -> Result<Vec<LabelRecord>> {
    let mut out = Vec::with_capacity(queries.len());
    for q in queries {
        let gt = ground_truth.get(&q.image_id).ok_or_else(|| Error::MissingGroundTruth(q.image_id.clone()))?;
        let (h, w) = gt.dims();
        if q.row >= h || q.col >= w {
            return Err(Error::LabelOutOfBounds(format!("({}, {}) outside {h}x{w} image {}", q.row, q.col, q.image_id)));
        }
        let class = gt.get(q.row, q.col);
        if class < 0 || class as usize >= num_classes {
            continue;
        }
        out.push(LabelRecord {
            image_id: q.image_id.clone(),
            row: q.row,
            col: q.col,
            class_id: class as usize,
            round,
            source: LabelSource::Oracle,
        });
    }
    Ok(out)
}

/// Mean IoU over classes present in the prediction or the ground truth,
/// accumulated over all images. Negative ground truth marks ignored pixels.
pub fn miou(predictions: &[Grid<i32>], ground_truth: &[Grid<i32>], num_classes: usize) -> Result<f64> {
    if predictions.len() != ground_truth.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions for {} ground-truth maps",
            predictions.len(),
            ground_truth.len()
        )));
    }
    let mut tp = vec![0u64; num_classes];
    let mut fp = vec![0u64; num_classes];
    let mut fn_ = vec![0u64; num_classes];
    let check = |c: i32| -> Result<usize> {
        if c < 0 || c as usize >= num_classes {
            Err(Error::ClassOutOfRange { class_id: c.max(0) as usize, num_classes })
        } else {
            Ok(c as usize)
        }
    };
    for (pred, gt) in predictions.iter().zip(ground_truth) {
        if !pred.same_dims(gt) {
            return Err(Error::ShapeMismatch("prediction and ground truth differ in size".into()));
        }
        for (&p, &g) in pred.as_slice().iter().zip(gt.as_slice()) {
            if g < 0 {
                continue;
            }
            let (p, g) = (check(p)?, check(g)?);
            if p == g {
                tp[p] += 1;
            } else {
                fp[p] += 1;
                fn_[g] += 1;
            }
        }
    }
    let ious: Vec<f64> = (0..num_classes)
        .filter_map(|c| {
            let union = tp[c] + fp[c] + fn_[c];
            (union > 0).then(|| tp[c] as f64 / union as f64)
        })
        .collect();
    if ious.is_empty() {
        return Err(Error::InvalidArgument("no labeled pixels to evaluate".into()));
    }
    Ok(ious.iter().sum::<f64>() / ious.len() as f64)
}

/// Reads `<id>.mdbt` predictions from `pred_dir` (I32 `[H, W]` labels or F32
/// `[C, H, W]` probabilities) and scores them against `gt_dir/<id>.mdbt` or the
/// session's own ground truth.
pub fn evaluate_predictions(session: &Session, pred_dir: &Path, gt_dir: Option<&Path>) -> Result<f64> {
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    for id in session.image_ids() {
        let tensor = read_required(&pred_dir.join(format!("{id}.mdbt")))?;
        let pred = if tensor.shape().len() == 3 {
            argmax(&Planes::<f32>::try_from(tensor)?)
        } else {
            Grid::<i32>::try_from(tensor)?
        };
        let gt = match gt_dir {
            Some(dir) => Grid::<i32>::try_from(read_required(&dir.join(format!("{id}.mdbt")))?)?,
            None => load_ground_truth(session, id)?,
        };
        preds.push(pred);
        gts.push(gt);
    }
    miou(&preds, &gts, session.manifest.num_classes)
}

fn finalize(session: &mut Session, mut report: RoundReport, start: Instant) -> Result<RoundReport> {
    report.status = RoundStatus::Complete;
    report.labels_received = session.labels().iter().filter(|r| r.round == report.round).count();
    report.pool_size_after = session.pool_size();
    report.wall_time_seconds += start.elapsed().as_secs_f64();
    session.manifest.round_index = report.round;
    write_json_atomic(round_file(session, report.round, REPORT_FILE), &report)?;
    session.save_manifest()?;
    Ok(report)
}

fn labels_in_round(session: &Session, round: u32) -> usize {
    session.labels().iter().filter(|r| r.round == round).count()
}

/// Runs the next round end to end. With the simulated oracle the labels are
/// appended and the round closes; with the human oracle the round stays open
/// until [`complete_round`].
///
/// If the labels of the round already reached the pool (a crash between the
/// append and the manifest update), only the report and manifest are written.
pub fn run_round(session: &mut Session, opts: &RoundOptions, oracle: OracleKind) -> Result<RoundReport> {
    let start = Instant::now();
    let round = session.next_round();
    if labels_in_round(session, round) > 0 {
        log::warn!("round {round} labels already in the pool; finishing the round");
        let report: RoundReport = read_json(round_file(session, round, REPORT_FILE))?;
        return finalize(session, report, start);
    }
    if open_round(session)?.is_some() {
        return Err(Error::PendingLabels { round, remaining: pending_count(session)? });
    }

    match oracle {
        OracleKind::SimulatedGt => {
            let gts: HashMap<String, Grid<i32>> = session
                .image_ids()
                .iter()
                .map(|id| Ok((id.clone(), load_ground_truth(session, id)?)))
                .collect::<Result<_>>()?;
            let selected = select_inner(session, opts)?;
            let mut report = base_report(session, &selected.selection, Some(oracle), start);
            let ordered_gts: Vec<Grid<i32>> = session.image_ids().iter().map(|id| gts[id].clone()).collect();
            report.miou = miou(&selected.predictions, &ordered_gts, session.manifest.num_classes).ok();
            let records =
                simulated_oracle(&selected.selection.queries.queries, &gts, session.manifest.num_classes, round)?;
            // the report is on disk before the append so that a crash can be finished later
            write_json_atomic(round_file(session, round, REPORT_FILE), &report)?;
            session.append_labels(&records)?;
            finalize(session, report, start)
        }
        OracleKind::Human => {
            let selected = select_inner(session, opts)?;
            let report = base_report(session, &selected.selection, Some(oracle), start);
            write_json_atomic(round_file(session, round, ANSWERS_FILE), &Answers::default())?;
            write_json_atomic(round_file(session, round, REPORT_FILE), &report)?;
            Ok(report)
        }
    }
}

/// Buffered human answers, keyed by query index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Answers {
    pub answers: BTreeMap<usize, usize>,
}

/// A round waiting for human labels.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenRound {
    pub round: u32,
    pub queries: QuerySet,
    pub answers: Answers,
    pub report: RoundReport,
}

impl OpenRound {
    pub fn remaining(&self) -> usize {
        self.queries.queries.len() - self.answers.answers.len()
    }
}

pub fn open_round(session: &Session) -> Result<Option<OpenRound>> {
    let round = session.next_round();
    let report_path = round_file(session, round, REPORT_FILE);
    if !report_path.is_file() {
        return Ok(None);
    }
    let report: RoundReport = read_json(&report_path)?;
    if report.status != RoundStatus::Pending || report.oracle != Some(OracleKind::Human) {
        return Ok(None);
    }
    let queries: QuerySet = read_json(round_file(session, round, QUERIES_FILE))?;
    let answers_path = round_file(session, round, ANSWERS_FILE);
    let answers = if answers_path.is_file() { read_json(&answers_path)? } else { Answers::default() };
    Ok(Some(OpenRound { round, queries, answers, report }))
}

fn pending_count(session: &Session) -> Result<usize> {
    Ok(open_round(session)?.map_or(0, |r| r.remaining()))
}

/// Buffers one answer of the open round. Nothing reaches the pool until
/// [`complete_round`].
pub fn record_answer(session: &Session, query_id: usize, class_id: usize) -> Result<()> {
    let mut open = open_round(session)?.ok_or(Error::NoOpenRound)?;
    if query_id >= open.queries.queries.len() {
        return Err(Error::UnknownQuery(query_id));
    }
    let num_classes = session.manifest.num_classes;
    if class_id >= num_classes {
        return Err(Error::ClassOutOfRange { class_id, num_classes });
    }
    if open.answers.answers.contains_key(&query_id) {
        return Err(Error::AlreadyAnswered(query_id));
    }
    open.answers.answers.insert(query_id, class_id);
    write_json_atomic(round_file(session, open.round, ANSWERS_FILE), &open.answers)
}

/// Commits every buffered answer of the open round to the pool, in query order,
/// and closes the round.
pub fn complete_round(session: &mut Session) -> Result<RoundReport> {
    let start = Instant::now();
    let open = open_round(session)?.ok_or(Error::NoOpenRound)?;
    if labels_in_round(session, open.round) == 0 {
        if open.remaining() > 0 {
            return Err(Error::PendingLabels { round: open.round, remaining: open.remaining() });
        }
        let records: Vec<LabelRecord> = open
            .queries
            .queries
            .iter()
            .enumerate()
            .map(|(i, q)| LabelRecord {
                image_id: q.image_id.clone(),
                row: q.row,
                col: q.col,
                class_id: open.answers.answers[&i],
                round: open.round,
                source: LabelSource::Human,
            })
            .collect();
        session.append_labels(&records)?;
    }
    finalize(session, open.report, start)
}
