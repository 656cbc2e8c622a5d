//! On-disk session state: manifest, labeled pool and per-image tensors.
//!
//! ```text
//! session.json                 manifest
//! labels.jsonl                 one LabelRecord per line
//! images/<id>/image.png        H x W x 3, 8-bit
//! images/<id>/*.mdbt           model outputs, ground truth, superpixels
//! rounds/<k>/                  queries.json, report.json, clusters.json, ...
//! ```

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::selection::SelectionMode;
use crate::tensor::read_tensor_header;

pub const MANIFEST_FILE: &str = "session.json";
pub const LABELS_FILE: &str = "labels.jsonl";
pub const MANIFEST_VERSION: u32 = 1;

/// Tunables that are not part of the selection math proper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    /// Number of perceptual clusters for K-means.
    pub clusters: usize,
    /// SLIC compactness.
    pub compactness: f64,
    /// Chebyshev radius of the prediction-derived boundary band.
    pub boundary_radius: usize,
    /// Pixels taken from a superpixel per visit during image-level selection.
    pub pixels_per_superpixel: usize,
    /// Side of the context crop served to annotators.
    pub crop_size: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self { clusters: 12, compactness: 10.0, boundary_radius: 2, pixels_per_superpixel: 1, crop_size: 65 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionManifest {
    pub version: u32,
    pub num_classes: usize,
    pub image_ids: Vec<String>,
    pub per_image_budget: usize,
    /// Number of completed selection rounds. Seed labels belong to round 0.
    pub round_index: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_names: Option<Vec<String>>,
    pub mode: SelectionMode,
    #[serde(default)]
    pub config: SessionConfig,
}

impl SessionManifest {
    pub fn new(image_ids: Vec<String>, num_classes: usize, per_image_budget: usize) -> Self {
        Self {
            version: MANIFEST_VERSION,
            num_classes,
            image_ids,
            per_image_budget,
            round_index: 0,
            class_names: None,
            mode: SelectionMode::Madbal,
            config: SessionConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::InvalidSession(format!("unsupported manifest version {}", self.version)));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidSession(format!("num_classes must be >= 2, got {}", self.num_classes)));
        }
        if self.per_image_budget < 1 {
            return Err(Error::InvalidSession("per_image_budget must be >= 1".into()));
        }
        if self.image_ids.is_empty() {
            return Err(Error::InvalidSession("session has no images".into()));
        }
        let mut seen = HashSet::new();
        for id in &self.image_ids {
            if id.is_empty() || id == "." || id == ".." || id.contains(['/', '\\']) {
                return Err(Error::InvalidSession(format!("invalid image id {id:?}")));
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidSession(format!("duplicate image id {id:?}")));
            }
        }
        if let Some(names) = &self.class_names {
            if names.len() != self.num_classes {
                return Err(Error::InvalidSession(format!(
                    "{} class names for {} classes",
                    names.len(),
                    self.num_classes
                )));
            }
        }
        if self.config.clusters < 1 || self.config.pixels_per_superpixel < 1 || self.config.crop_size < 1 {
            return Err(Error::InvalidSession("config values must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    Seed,
    Oracle,
    Human,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub image_id: String,
    pub row: usize,
    pub col: usize,
    pub class_id: usize,
    pub round: u32,
    pub source: LabelSource,
}

/// A loaded session: manifest, labeled pool and resolved image sizes.
#[derive(Debug, Clone)]
pub struct Session {
    root: PathBuf,
    pub manifest: SessionManifest,
    labels: Vec<LabelRecord>,
    dims: Vec<(usize, usize)>,
    occupied: HashSet<(usize, usize, usize)>,
}

impl Session {
    /// Creates a new session directory with an empty pool. Image folders must be
    /// populated by the caller before the session is loaded again.
    pub fn create(root: impl AsRef<Path>, manifest: SessionManifest) -> Result<()> {
        let root = root.as_ref();
        manifest.validate()?;
        fs::create_dir_all(root.join("images")).map_err(|e| Error::io(root, e))?;
        fs::create_dir_all(root.join("rounds")).map_err(|e| Error::io(root, e))?;
        for id in &manifest.image_ids {
            let dir = root.join("images").join(id);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        write_json_atomic(root.join(MANIFEST_FILE), &manifest)?;
        write_atomic(root.join(LABELS_FILE), b"")?;
        Ok(())
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn image_ids(&self) -> &[String] {
        &self.manifest.image_ids
    }

    pub fn num_images(&self) -> usize {
        self.manifest.image_ids.len()
    }

    pub fn image_index(&self, id: &str) -> Option<usize> {
        self.manifest.image_ids.iter().position(|x| x == id)
    }

    /// `(height, width)` of image `index`.
    pub fn image_dims(&self, index: usize) -> (usize, usize) {
        self.dims[index]
    }

    pub fn labels(&self) -> &[LabelRecord] {
        &self.labels
    }

    pub fn pool_size(&self) -> usize {
        self.labels.len()
    }

    pub fn is_labeled(&self, image_index: usize, row: usize, col: usize) -> bool {
        self.occupied.contains(&(image_index, row, col))
    }

    pub fn image_dir(&self, id: &str) -> PathBuf {
        self.root.join("images").join(id)
    }

    pub fn image_file(&self, id: &str, name: &str) -> PathBuf {
        self.image_dir(id).join(name)
    }

    pub fn round_dir(&self, round: u32) -> PathBuf {
        self.root.join("rounds").join(round.to_string())
    }

    /// Round that the next selection will produce.
    pub fn next_round(&self) -> u32 {
        self.manifest.round_index + 1
    }

    /// `1` where the pixel is in the labeled pool.
    pub fn labeled_mask(&self, image_index: usize) -> Grid<u8> {
        let (h, w) = self.dims[image_index];
        let mut mask = Grid::filled(h, w, 0u8);
        let id = &self.manifest.image_ids[image_index];
        for rec in self.labels.iter().filter(|r| &r.image_id == id) {
            mask.set(rec.row, rec.col, 1);
        }
        mask
    }

    fn check_record(&self, rec: &LabelRecord, batch: &HashSet<(usize, usize, usize)>) -> Result<(usize, usize, usize)> {
        let idx = self
            .image_index(&rec.image_id)
            .ok_or_else(|| Error::LabelOutOfBounds(format!("unknown image id {:?}", rec.image_id)))?;
        let (h, w) = self.dims[idx];
        if rec.row >= h || rec.col >= w {
            return Err(Error::LabelOutOfBounds(format!(
                "({}, {}) outside {h}x{w} image {}",
                rec.row, rec.col, rec.image_id
            )));
        }
        if rec.class_id >= self.manifest.num_classes {
            return Err(Error::LabelOutOfBounds(format!(
                "class {} >= num_classes {}",
                rec.class_id, self.manifest.num_classes
            )));
        }
        let key = (idx, rec.row, rec.col);
        if self.occupied.contains(&key) || batch.contains(&key) {
            return Err(Error::DuplicateLabel { image_id: rec.image_id.clone(), row: rec.row, col: rec.col });
        }
        Ok(key)
    }

    /// Appends `records` to the pool, all or nothing. The labels file is rewritten
    /// through a temporary file and renamed into place.
    pub fn append_labels(&mut self, records: &[LabelRecord]) -> Result<()> {
        let mut batch = HashSet::with_capacity(records.len());
        for rec in records {
            let key = self.check_record(rec, &batch)?;
            batch.insert(key);
        }
        if records.is_empty() {
            return Ok(());
        }
        let path = self.root.join(LABELS_FILE);
        let mut contents = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if !contents.is_empty() && !contents.ends_with(b"\n") {
            contents.push(b'\n');
        }
        for rec in records {
            serde_json::to_writer(&mut contents, rec).map_err(|e| Error::json(&path, e))?;
            contents.push(b'\n');
        }
        write_atomic(&path, &contents)?;
        self.labels.extend_from_slice(records);
        self.occupied.extend(batch);
        Ok(())
    }

    pub fn save_manifest(&self) -> Result<()> {
        self.manifest.validate()?;
        write_json_atomic(self.root.join(MANIFEST_FILE), &self.manifest)
    }
}

/// Resolves `(height, width)` for an image from whichever file is present.
fn resolve_dims(dir: &Path) -> Result<(usize, usize)> {
    let png = dir.join("image.png");
    if png.exists() {
        let (w, h) = image::image_dimensions(&png).map_err(|e| Error::Image { path: png.clone(), source: e })?;
        return Ok((h as usize, w as usize));
    }
    for (name, channel_first) in
        [("gt.mdbt", false), ("probs_final.mdbt", true), ("superpixels.mdbt", false), ("boundary.mdbt", false)]
    {
        let path = dir.join(name);
        if path.exists() {
            let header = read_tensor_header(&path)?;
            let s = &header.shape;
            return match (channel_first, s.len()) {
                (false, 2) => Ok((s[0], s[1])),
                (true, 3) => Ok((s[1], s[2])),
                _ => Err(Error::ShapeMismatch(format!("{} has unexpected shape {s:?}", path.display()))),
            };
        }
    }
    Err(Error::InvalidSession(format!("cannot determine image size: no image.png or tensors in {}", dir.display())))
}

pub fn load_session(dir: impl AsRef<Path>) -> Result<Session> {
    let root = dir.as_ref().to_path_buf();
    let manifest_path = root.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(Error::MissingManifest(manifest_path));
    }
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: SessionManifest = serde_json::from_str(&text).map_err(|e| Error::json(&manifest_path, e))?;
    manifest.validate()?;

    let dims = manifest
        .image_ids
        .iter()
        .map(|id| resolve_dims(&root.join("images").join(id)))
        .collect::<Result<Vec<_>>>()?;

    let mut session = Session { root, manifest, labels: Vec::new(), dims, occupied: HashSet::new() };

    let labels_path = session.root.join(LABELS_FILE);
    if labels_path.exists() {
        let text = fs::read_to_string(&labels_path).map_err(|e| Error::io(&labels_path, e))?;
        let empty = HashSet::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let rec: LabelRecord = serde_json::from_str(line).map_err(|e| Error::json(&labels_path, e))?;
            let key = session.check_record(&rec, &empty)?;
            session.occupied.insert(key);
            session.labels.push(rec);
        }
    }
    Ok(session)
}

/// Writes `bytes` to a sibling temporary file, syncs it and renames it over `path`.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{file_name}.tmp{}", std::process::id()));
    {
        let mut file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        file.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        file.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_json_atomic<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::json(path, e))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}
