//! Uncertainty and full selection on a Cityscapes-sized pool, single-threaded.

use std::time::{Duration, Instant};

use madbal_core::selection::{select_queries, ClusterInput, ImageInput, SelectionOptions};
use madbal_core::superpixels::{image_features, kmeans, slic_segment, target_superpixel_count, FeatureMatrix};
use madbal_core::synthetic::toy_image;
use madbal_core::uncertainty::pixel_uncertainty;
use madbal_core::{Grid, SelectionMode, UncertaintyVariant};

use crate::Outcome;

const IMAGES: usize = 20;
const SIDE: usize = 768;
const CLASSES: usize = 19;
const LIMIT: f64 = 60.0;

pub fn run() -> Outcome {
    let mut timed = Duration::ZERO;
    let mut parts = [Duration::ZERO; 4];
    let mut states = Vec::with_capacity(IMAGES);
    let mut rows = Vec::new();
    for i in 0..IMAGES {
        // scene generation is setup, not part of the measured work
        let toy = toy_image(SIDE, SIDE, CLASSES, 1000 + i as u64);
        let labeled = Grid::from_fn(SIDE, SIDE, |r, c| u8::from((r * 31 + c * 17 + i) % 97 == 0));

        let start = Instant::now();
        let u = pixel_uncertainty(&toy.outputs, &labeled, UncertaintyVariant::Full).map_err(|e| e.to_string())?;
        let pred = toy.outputs.prediction();
        let t1 = Instant::now();
        let map = slic_segment(&toy.image, target_superpixel_count(SIDE, SIDE), 10.0, 0).map_err(|e| e.to_string())?;
        let t2 = Instant::now();
        rows.extend(image_features(&toy.image, &map));
        let t3 = Instant::now();
        parts[0] += t1 - start;
        parts[1] += t2 - t1;
        parts[2] += t3 - t2;
        timed += t3 - start;
        states.push((format!("img{i:02}"), u, pred, map));
    }

    let start = Instant::now();
    let features = FeatureMatrix::from_rows(&rows).map_err(|e| e.to_string())?;
    let clusters = kmeans(&features, 12, 0, 100).map_err(|e| e.to_string())?;
    let inputs: Vec<ImageInput<'_>> = states
        .iter()
        .map(|(id, u, pred, map)| ImageInput { image_id: id, uncertainty: u, prediction: Some(pred), superpixels: Some(map) })
        .collect();
    let opts = SelectionOptions { per_image_budget: 50, pixels_per_superpixel: 1, num_classes: CLASSES };
    let cluster_input = ClusterInput { k: clusters.k, assignment: &clusters.assignment };
    let selection = select_queries(&inputs, Some(&cluster_input), SelectionMode::Madbal, &opts, 1)
        .map_err(|e| e.to_string())?;
    parts[3] = start.elapsed();
    timed += parts[3];

    let secs = timed.as_secs_f64();
    let n = selection.queries.queries.len();
    ensure!(n == IMAGES * 50, "{n} queries selected");
    ensure!(secs < LIMIT, "{secs:.1} s for {IMAGES} images of {SIDE}x{SIDE} with {CLASSES} classes");
    let [u, slic, feats, select] = parts.map(|d| d.as_secs_f64());
    Ok(format!(
        "{secs:.1} s for {IMAGES} x {SIDE}x{SIDE}, {CLASSES} classes (uncertainty {u:.1}, SLIC {slic:.1}, \
         features {feats:.1}, clustering and selection {select:.1}); {} superpixels, {} k-means iterations",
        features.rows(),
        clusters.iterations
    ))
}
