use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{allocate_budgets, cluster_class_prob, dominant_label, superpixel_uncertainty, SelectionMode};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::superpixels::SuperpixelMap;
use crate::uncertainty::PixelUncertaintyMap;

/// Per-image inputs to selection. `prediction` and `superpixels` are required
/// by every mode except [`SelectionMode::NoBreakdown`].
#[derive(Debug, Clone, Copy)]
pub struct ImageInput<'a> {
    pub image_id: &'a str,
    pub uncertainty: &'a PixelUncertaintyMap,
    pub prediction: Option<&'a Grid<i32>>,
    pub superpixels: Option<&'a SuperpixelMap>,
}

/// Cluster of every superpixel in the pool, ordered by image then superpixel id.
#[derive(Debug, Clone, Copy)]
pub struct ClusterInput<'a> {
    pub k: usize,
    pub assignment: &'a [usize],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectionOptions {
    pub per_image_budget: usize,
    pub pixels_per_superpixel: usize,
    pub num_classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub image_id: String,
    pub row: usize,
    pub col: usize,
    pub uncertainty: f64,
    pub superpixel_id: Option<usize>,
    pub cluster: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySet {
    pub round: u32,
    pub mode: SelectionMode,
    pub per_image_budget: usize,
    pub total_budget: usize,
    /// Images without a single unlabeled pixel.
    pub excluded_images: Vec<String>,
    pub queries: Vec<Query>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperpixelStats {
    pub image_id: String,
    pub superpixel_id: usize,
    pub pixels: usize,
    pub unlabeled_pixels: usize,
    pub dominant_label: usize,
    pub mean_pixel_uncertainty: f64,
    pub uncertainty: f64,
    pub cluster: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub cluster: usize,
    pub members: usize,
    /// Share of members per dominant class; all zero for an empty cluster.
    pub class_prob: Vec<f64>,
    pub uncertainty: f64,
    pub budget: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hierarchy {
    pub total_budget: usize,
    pub superpixels: Vec<SuperpixelStats>,
    pub clusters: Vec<ClusterStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub queries: QuerySet,
    pub hierarchy: Option<Hierarchy>,
}

/// Uniformly random cluster for each of `n` superpixels.
pub fn random_cluster_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 1 {
        return Err(Error::InvalidArgument("cluster count must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| rng.random_range(0..k)).collect())
}

struct ImageParts<'a> {
    input: &'a ImageInput<'a>,
    map: &'a SuperpixelMap,
    members: Vec<Vec<usize>>,
    /// Offset of this image's superpixels in the pool-wide ordering.
    offset: usize,
}

fn image_parts<'a>(images: &'a [ImageInput<'a>]) -> Result<Vec<ImageParts<'a>>> {
    let mut offset = 0;
    let mut parts = Vec::with_capacity(images.len());
    for input in images {
        let (Some(pred), Some(map)) = (input.prediction, input.superpixels) else {
            return Err(Error::MissingInput(format!("{}: prediction and superpixels are required", input.image_id)));
        };
        let dims = input.uncertainty.dims();
        if pred.dims() != dims || map.dims() != dims {
            return Err(Error::ShapeMismatch(format!("{}: inputs differ in size", input.image_id)));
        }
        let members = map.members();
        let count = members.len();
        parts.push(ImageParts { input, map, members, offset });
        offset += count;
    }
    Ok(parts)
}

fn hierarchy_from_parts(
    parts: &[ImageParts<'_>],
    clusters: &ClusterInput<'_>,
    num_classes: usize,
    total_budget: usize,
) -> Result<Hierarchy> {
    let total_superpixels: usize = parts.iter().map(|p| p.members.len()).sum();
    if clusters.assignment.len() != total_superpixels {
        return Err(Error::ShapeMismatch(format!(
            "{} cluster assignments for {total_superpixels} superpixels",
            clusters.assignment.len()
        )));
    }
    if let Some(&bad) = clusters.assignment.iter().find(|&&c| c >= clusters.k) {
        return Err(Error::InvalidArgument(format!("cluster {bad} >= k = {}", clusters.k)));
    }

    let mut dominant = Vec::with_capacity(total_superpixels);
    for part in parts {
        let pred = part.input.prediction.expect("checked");
        for pixels in &part.members {
            dominant.push(dominant_label(pixels, pred)?);
        }
    }
    let mut by_cluster: Vec<Vec<usize>> = vec![Vec::new(); clusters.k];
    for (g, &c) in clusters.assignment.iter().enumerate() {
        by_cluster[c].push(dominant[g]);
    }
    let class_prob: Vec<Vec<f64>> = by_cluster
        .iter()
        .map(|labels| {
            if labels.is_empty() {
                Ok(vec![0.0; num_classes])
            } else {
                cluster_class_prob(labels, num_classes)
            }
        })
        .collect::<Result<_>>()?;

    let mut superpixels = Vec::with_capacity(total_superpixels);
    for part in parts {
        let umap = part.input.uncertainty;
        let valid = umap.valid.as_slice();
        let values = umap.values.as_slice();
        for (s, pixels) in part.members.iter().enumerate() {
            let g = part.offset + s;
            let cluster = clusters.assignment[g];
            let p_dom = class_prob[cluster][dominant[g]];
            superpixels.push(SuperpixelStats {
                image_id: part.input.image_id.to_string(),
                superpixel_id: s,
                pixels: pixels.len(),
                unlabeled_pixels: pixels.iter().filter(|&&p| valid[p] == 1).count(),
                dominant_label: dominant[g],
                mean_pixel_uncertainty: pixels.iter().map(|&p| values[p]).sum::<f64>() / pixels.len() as f64,
                uncertainty: superpixel_uncertainty(pixels, umap, p_dom),
                cluster,
            });
        }
    }

    let mut sums = vec![0.0; clusters.k];
    for sp in &superpixels {
        sums[sp.cluster] += sp.uncertainty;
    }
    let u_cl: Vec<f64> = sums
        .iter()
        .zip(&by_cluster)
        .map(|(s, m)| if m.is_empty() { 0.0 } else { s / m.len() as f64 })
        .collect();
    let budgets = if total_budget > 0 && u_cl.iter().sum::<f64>() > 0.0 {
        allocate_budgets(&u_cl, total_budget)?
    } else {
        if total_budget > 0 {
            log::warn!("every cluster has zero uncertainty; filling images directly");
        }
        vec![0; clusters.k]
    };
    let clusters = (0..clusters.k)
        .map(|k| ClusterStats {
            cluster: k,
            members: by_cluster[k].len(),
            class_prob: class_prob[k].clone(),
            uncertainty: u_cl[k],
            budget: budgets[k],
        })
        .collect();
    Ok(Hierarchy { total_budget, superpixels, clusters })
}

/// Superpixel and cluster statistics with cluster budgets summing to `total_budget`.
pub fn build_hierarchy(
    images: &[ImageInput<'_>],
    clusters: &ClusterInput<'_>,
    num_classes: usize,
    total_budget: usize,
) -> Result<Hierarchy> {
    let parts = image_parts(images)?;
    hierarchy_from_parts(&parts, clusters, num_classes, total_budget)
}

/// Higher uncertainty first, then raster order.
fn pixel_order(values: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |a, b| values[*b].total_cmp(&values[*a]).then(a.cmp(b))
}

fn sorted_valid(pixels: impl Iterator<Item = usize>, map: &PixelUncertaintyMap) -> Vec<usize> {
    let valid = map.valid.as_slice();
    let mut out: Vec<usize> = pixels.filter(|&p| valid[p] == 1).collect();
    out.sort_by(pixel_order(map.values.as_slice()));
    out
}

/// Splits `budget` across images in proportion to `weights` by largest
/// remainder; equal remainders go to the smaller image id.
fn split_by_weight(budget: usize, weights: &[usize], ids: &[&str]) -> Vec<usize> {
    let total: usize = weights.iter().sum();
    if total == 0 {
        return vec![0; weights.len()];
    }
    let mut shares: Vec<usize> = weights.iter().map(|&w| budget * w / total).collect();
    let remainders: Vec<usize> = weights.iter().map(|&w| budget * w % total).collect();
    let leftover = budget - shares.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| remainders[b].cmp(&remainders[a]).then(ids[a].cmp(ids[b])));
    for &i in order.iter().take(leftover) {
        shares[i] += 1;
    }
    shares
}

fn top_pixels(input: &ImageInput<'_>, n: usize) -> Vec<Query> {
    let map = input.uncertainty;
    let w = map.values.width();
    sorted_valid(0..map.values.len(), map)
        .into_iter()
        .take(n)
        .map(|p| Query {
            image_id: input.image_id.to_string(),
            row: p / w,
            col: p % w,
            uncertainty: map.values.as_slice()[p],
            superpixel_id: None,
            cluster: None,
        })
        .collect()
}

fn breakdown_picks(
    parts: &[ImageParts<'_>],
    hierarchy: &Hierarchy,
    opts: &SelectionOptions,
) -> Vec<Vec<usize>> {
    let ids: Vec<&str> = parts.iter().map(|p| p.input.image_id).collect();
    let mut picked: Vec<Vec<usize>> = vec![Vec::new(); parts.len()];
    let mut taken: Vec<Vec<bool>> = parts.iter().map(|p| vec![false; p.input.uncertainty.values.len()]).collect();
    let per_sp = opts.pixels_per_superpixel.max(1);

    for cluster in &hierarchy.clusters {
        if cluster.budget == 0 {
            continue;
        }
        // eligible superpixels of this cluster in each image, best first
        let ranked: Vec<Vec<usize>> = parts
            .iter()
            .map(|part| {
                let stats = &hierarchy.superpixels[part.offset..part.offset + part.members.len()];
                let mut sps: Vec<usize> = (0..stats.len())
                    .filter(|&s| stats[s].cluster == cluster.cluster && stats[s].unlabeled_pixels > 0)
                    .collect();
                sps.sort_by(|&a, &b| stats[b].uncertainty.total_cmp(&stats[a].uncertainty).then(a.cmp(&b)));
                sps
            })
            .collect();
        let weights: Vec<usize> = ranked.iter().map(Vec::len).collect();
        let shares = split_by_weight(cluster.budget, &weights, &ids);

        for (i, part) in parts.iter().enumerate() {
            let mut need = shares[i];
            if need == 0 {
                continue;
            }
            let mut queues: Vec<std::vec::IntoIter<usize>> = ranked[i]
                .iter()
                .map(|&s| sorted_valid(part.members[s].iter().copied(), part.input.uncertainty).into_iter())
                .collect();
            while need > 0 {
                let before = need;
                for queue in &mut queues {
                    for p in queue.by_ref().take(per_sp.min(need)) {
                        taken[i][p] = true;
                        picked[i].push(p);
                        need -= 1;
                    }
                    if need == 0 {
                        break;
                    }
                }
                if need == before {
                    break;
                }
            }
        }
    }

    for (i, part) in parts.iter().enumerate() {
        let map = part.input.uncertainty;
        let target = opts.per_image_budget.min(map.valid_count());
        let order = pixel_order(map.values.as_slice());
        picked[i].sort_by(&order);
        if picked[i].len() > target {
            picked[i].truncate(target);
        } else if picked[i].len() < target {
            let fill: Vec<usize> = sorted_valid(0..map.values.len(), map)
                .into_iter()
                .filter(|&p| !taken[i][p])
                .take(target - picked[i].len())
                .collect();
            picked[i].extend(fill);
            picked[i].sort_by(&order);
        }
    }
    picked
}

/// Chooses this round's query pixels.
///
/// Every image with unlabeled pixels receives `min(per_image_budget, unlabeled)`
/// queries. `clusters` is required by the breakdown modes; for
/// [`SelectionMode::RandomBreakdown`] it should come from
/// [`random_cluster_assignment`].
pub fn select_queries(
    images: &[ImageInput<'_>],
    clusters: Option<&ClusterInput<'_>>,
    mode: SelectionMode,
    opts: &SelectionOptions,
    round: u32,
) -> Result<Selection> {
    if opts.per_image_budget < 1 {
        return Err(Error::InvalidArgument("per-image budget must be >= 1".into()));
    }
    let mut excluded_images = Vec::new();
    for input in images {
        if input.uncertainty.valid_count() == 0 {
            log::warn!("{}: every pixel is labeled; excluded from selection", input.image_id);
            excluded_images.push(input.image_id.to_string());
        }
    }
    let total_budget = opts.per_image_budget * (images.len() - excluded_images.len());

    let (queries, hierarchy) = if mode.uses_breakdown() {
        let clusters = clusters.ok_or_else(|| Error::MissingInput(format!("mode {mode} needs a cluster assignment")))?;
        let parts = image_parts(images)?;
        let hierarchy = hierarchy_from_parts(&parts, clusters, opts.num_classes, total_budget)?;
        let picks = breakdown_picks(&parts, &hierarchy, opts);
        let mut queries = Vec::with_capacity(total_budget);
        for (part, pixels) in parts.iter().zip(picks) {
            let w = part.map.dims().1;
            for p in pixels {
                let s = part.map.id_at(p);
                queries.push(Query {
                    image_id: part.input.image_id.to_string(),
                    row: p / w,
                    col: p % w,
                    uncertainty: part.input.uncertainty.values.as_slice()[p],
                    superpixel_id: Some(s),
                    cluster: Some(hierarchy.superpixels[part.offset + s].cluster),
                });
            }
        }
        (queries, Some(hierarchy))
    } else {
        let queries = images.iter().flat_map(|input| top_pixels(input, opts.per_image_budget)).collect();
        (queries, None)
    };

    Ok(Selection {
        queries: QuerySet {
            round,
            mode,
            per_image_budget: opts.per_image_budget,
            total_budget,
            excluded_images,
            queries,
        },
        hierarchy,
    })
}
