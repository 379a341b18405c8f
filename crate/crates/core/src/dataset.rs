//! Paired low/normal-light dataset ingestion, 8-bit RGB decode/encode at the
//! [0,1] boundary, and a synthetic pair generator for desk-scale runs.
//!
//! On-disk convention: a root directory with `low/` and `high/`
//! subdirectories holding identically named files. A manifest file with one
//! "low_path<TAB>high_path" line per pair overrides the layout.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use image::DynamicImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Tensor, CHANNELS};

enum PairSource {
    OnDisk { low: PathBuf, high: PathBuf },
    InMemory { low: Tensor, high: Tensor },
}

struct Entry {
    id: String,
    source: PairSource,
}

/// Ordered collection of (low, high) image pairs. Pair order is purely
/// lexicographic by id, never filesystem order. Immutable after
/// construction; `preload` caches decoded tensors.
pub struct PairedDataset {
    dataset_id: String,
    entries: Vec<Entry>,
    cache: Mutex<BTreeMap<usize, (Tensor, Tensor)>>,
}

impl PairedDataset {
    pub fn in_memory(dataset_id: &str, pairs: Vec<(String, Tensor, Tensor)>) -> Self {
        let entries = pairs
            .into_iter()
            .map(|(id, low, high)| Entry {
                id,
                source: PairSource::InMemory { low, high },
            })
            .collect();
        Self {
            dataset_id: dataset_id.to_string(),
            entries,
            cache: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    pub fn id(&self, index: usize) -> &str {
        &self.entries[index].id
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    /// Decodes (or returns the in-memory) pair at `index`.
    pub fn load_pair(&self, index: usize) -> Result<(Tensor, Tensor)> {
        let entry = &self.entries[index];
        match &entry.source {
            PairSource::InMemory { low, high } => Ok((low.clone(), high.clone())),
            PairSource::OnDisk { low, high } => {
                if let Some(pair) = self.cache.lock().unwrap().get(&index) {
                    return Ok(pair.clone());
                }
                let low_t = decode_image(low)?;
                let high_t = decode_image(high)?;
                if !low_t.same_shape(&high_t) {
                    return Err(Error::PairDimensionMismatch {
                        id: entry.id.clone(),
                        low_w: low_t.width() as u32,
                        low_h: low_t.height() as u32,
                        high_w: high_t.width() as u32,
                        high_h: high_t.height() as u32,
                    });
                }
                Ok((low_t, high_t))
            }
        }
    }

    /// Decodes every pair once and keeps the tensors in memory. Trades RAM
    /// for decode time across epochs.
    pub fn preload(&self) -> Result<()> {
        for i in 0..self.len() {
            let pair = self.load_pair(i)?;
            self.cache.lock().unwrap().insert(i, pair);
        }
        Ok(())
    }

    /// Paths of the pair at `index`, when the dataset is on disk.
    pub fn paths(&self, index: usize) -> Option<(&Path, &Path)> {
        match &self.entries[index].source {
            PairSource::OnDisk { low, high } => Some((low, high)),
            PairSource::InMemory { .. } => None,
        }
    }
}

fn list_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    let rd = fs::read_dir(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for entry in rd {
        let entry = entry.map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        if path.is_file() {
            if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                out.insert(name.to_string(), path);
            }
        }
    }
    Ok(out)
}

/// Loads a LOL-style directory: `root/low/*` paired with `root/high/*` by
/// filename. Pairs are ordered lexicographically by filename; image headers
/// are read to validate that each pair has matching dimensions.
pub fn load_paired_dataset(root: &Path) -> Result<PairedDataset> {
    let low_dir = root.join("low");
    let high_dir = root.join("high");
    if !low_dir.is_dir() {
        return Err(Error::MissingSubdir(low_dir));
    }
    if !high_dir.is_dir() {
        return Err(Error::MissingSubdir(high_dir));
    }
    let low_files = list_files(&low_dir)?;
    let mut high_files = list_files(&high_dir)?;

    let mut entries = Vec::with_capacity(low_files.len());
    for (name, low_path) in low_files {
        let high_path = high_files.remove(&name).ok_or_else(|| Error::UnmatchedFile {
            file: name.clone(),
            present: "low",
            missing: "high",
        })?;
        let (lw, lh) = image::image_dimensions(&low_path).map_err(|source| Error::Image {
            path: low_path.clone(),
            source,
        })?;
        let (hw, hh) = image::image_dimensions(&high_path).map_err(|source| Error::Image {
            path: high_path.clone(),
            source,
        })?;
        if (lw, lh) != (hw, hh) {
            return Err(Error::PairDimensionMismatch {
                id: name,
                low_w: lw,
                low_h: lh,
                high_w: hw,
                high_h: hh,
            });
        }
        entries.push(Entry {
            id: name,
            source: PairSource::OnDisk {
                low: low_path,
                high: high_path,
            },
        });
    }
    if let Some(name) = high_files.into_keys().next() {
        return Err(Error::UnmatchedFile {
            file: name,
            present: "high",
            missing: "low",
        });
    }
    let id = root
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("dataset")
        .to_string();
    Ok(PairedDataset {
        dataset_id: id,
        entries,
        cache: Mutex::new(BTreeMap::new()),
    })
}

/// Loads a manifest: one `low_path<TAB>high_path` pair per line, relative
/// paths resolved against the manifest's directory. Pair ids are the low
/// file names; ordering is lexicographic by id.
pub fn load_manifest(manifest: &Path) -> Result<PairedDataset> {
    let text = fs::read_to_string(manifest).map_err(|source| Error::Io {
        path: manifest.to_path_buf(),
        source,
    })?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (low, high) = line.split_once('\t').ok_or_else(|| {
            Error::InvalidConfig(format!(
                "{}:{}: expected low_path<TAB>high_path",
                manifest.display(),
                lineno + 1
            ))
        })?;
        let low = base.join(low.trim());
        let high = base.join(high.trim());
        let id = low
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or(line)
            .to_string();
        entries.push(Entry {
            id,
            source: PairSource::OnDisk { low, high },
        });
    }
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(PairedDataset {
        dataset_id: manifest
            .file_stem()
            .and_then(|n| n.to_str())
            .unwrap_or("manifest")
            .to_string(),
        entries,
        cache: Mutex::new(BTreeMap::new()),
    })
}

/// Decodes an 8-bit RGB image to a [0,1] tensor (v -> v/255).
pub fn decode_image(path: &Path) -> Result<Tensor> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let rgb = match img {
        DynamicImage::ImageRgb8(rgb) => rgb,
        other => {
            return Err(Error::UnsupportedImage {
                path: path.to_path_buf(),
                detail: format!("{:?}", other.color()),
            })
        }
    };
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let data = rgb.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
    Tensor::from_vec(h, w, data)
}

/// Encodes a tensor as 8-bit RGB: clamp to [0,1], then round half away from
/// zero onto the 0..255 grid.
pub fn encode_image(t: &Tensor, path: &Path) -> Result<()> {
    let (h, w, _) = t.shape();
    let bytes: Vec<u8> = t
        .data()
        .iter()
        .map(|&v| {
            let c = v.clamp(0.0, 1.0) as f64 * 255.0;
            // values are nonnegative after clamping, so half-away-from-zero
            // is floor(x + 0.5)
            (c + 0.5).floor().min(255.0) as u8
        })
        .collect();
    let img = image::RgbImage::from_raw(w as u32, h as u32, bytes)
        .expect("byte count matches dimensions");
    img.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Gamma darkening used by the synthetic generator: low = 0.3 * high^2.2.
pub fn darken(v: f32) -> f32 {
    (0.3 * v.powf(2.2)).clamp(0.0, 1.0)
}

/// Deterministic synthetic pairs: ground truth is a seeded smooth random
/// field in [0.2, 1.0] (blurred noise), the low-light counterpart is
/// 0.3 * high^2.2.
pub fn generate_synthetic_pairs(
    n: usize,
    height: usize,
    width: usize,
    seed: u64,
) -> Result<PairedDataset> {
    if n < 1 {
        return Err(Error::InvalidConfig("need at least one synthetic pair".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(n);
    for i in 0..n {
        let high = smooth_field(&mut rng, height, width);
        let low = high.map(darken);
        pairs.push((format!("synthetic-{i:04}"), low, high));
    }
    Ok(PairedDataset::in_memory(
        &format!("synthetic-n{n}-{height}x{width}-seed{seed}"),
        pairs,
    ))
}

/// Uniform noise passed twice through a 5x5 clamp-to-edge box blur, then
/// min-max rescaled into [0.2, 1.0] per image.
fn smooth_field(rng: &mut ChaCha8Rng, height: usize, width: usize) -> Tensor {
    let data: Vec<f32> = (0..height * width * CHANNELS)
        .map(|_| rng.gen_range(0.0..1.0))
        .collect();
    let mut t = Tensor::from_vec(height, width, data).expect("finite noise");
    for _ in 0..2 {
        t = box_blur5(&t);
    }
    let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
    for &v in t.data() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    t.map(|v| (0.2 + 0.8 * (v - lo) / span).clamp(0.0, 1.0))
}

fn box_blur5(input: &Tensor) -> Tensor {
    let (h, w, _) = input.shape();
    let mut out = Tensor::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            for c in 0..CHANNELS {
                let mut acc = 0.0f32;
                for dy in -2i64..=2 {
                    for dx in -2i64..=2 {
                        let sy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                        let sx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                        acc += input.get(sy, sx, c);
                    }
                }
                out.set(y, x, c, acc / 25.0);
            }
        }
    }
    out
}
