//! Checkpoint serialization: a line-oriented key/value text file carrying
//! the format version, a config echo, run metadata, and all 108 parameters
//! as hexadecimal f32 bit patterns (bit-exact round trip). Schema frozen in
//! docs/formats.md.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::tensor::CHANNELS;
use crate::train::{LossKind, OptimizerKind, TrainConfig, PARAM_COUNT};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "retina-restore checkpoint";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub format_version: u32,
    pub params: ModelParams,
    pub config: TrainConfig,
    pub epochs_completed: usize,
    pub final_loss: f32,
    pub dataset_id: String,
    /// Wall-clock stamp; None by default so identical runs serialize
    /// byte-identically.
    pub created_at: Option<String>,
}

impl Checkpoint {
    /// Checkpoint around fixed params, e.g. a zero (identity) model.
    pub fn from_params(params: ModelParams, dataset_id: &str) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            params,
            config: TrainConfig::default(),
            epochs_completed: 0,
            final_loss: 0.0,
            dataset_id: dataset_id.to_string(),
            created_at: None,
        }
    }
}

fn hex(v: f32) -> String {
    format!("0x{:08X}", v.to_bits())
}

fn parse_hex(s: &str) -> Result<f32> {
    let body = s
        .strip_prefix("0x")
        .or_else(|| s.strip_prefix("0X"))
        .ok_or_else(|| Error::CheckpointCorrupt(format!("expected hex float, got {s:?}")))?;
    let bits = u32::from_str_radix(body, 16)
        .map_err(|_| Error::CheckpointCorrupt(format!("bad hex float {s:?}")))?;
    Ok(f32::from_bits(bits))
}

fn hex_row(values: &[f32]) -> String {
    values.iter().map(|&v| hex(v)).collect::<Vec<_>>().join(" ")
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "format_version = {}", ckpt.format_version);
    let _ = writeln!(out, "dataset = {}", ckpt.dataset_id);
    let _ = writeln!(out, "epochs_completed = {}", ckpt.epochs_completed);
    let _ = writeln!(out, "final_loss = {}  # {}", hex(ckpt.final_loss), ckpt.final_loss);
    if let Some(ts) = &ckpt.created_at {
        let _ = writeln!(out, "created_at = {ts}");
    }
    let c = &ckpt.config;
    let _ = writeln!(out, "config.epochs = {}", c.epochs);
    let _ = writeln!(out, "config.learning_rate = {}  # {}", hex(c.learning_rate), c.learning_rate);
    let _ = writeln!(out, "config.batch_size = {}", c.batch_size);
    let _ = writeln!(out, "config.seed = {}", c.seed);
    let _ = writeln!(out, "config.loss = {}", c.loss);
    let _ = writeln!(out, "config.optimizer = {}", c.optimizer);
    let _ = writeln!(out, "config.adam_beta1 = {}  # {}", hex(c.adam_beta1), c.adam_beta1);
    let _ = writeln!(out, "config.adam_beta2 = {}  # {}", hex(c.adam_beta2), c.adam_beta2);
    let _ = writeln!(out, "config.adam_epsilon = {}  # {}", hex(c.adam_epsilon), c.adam_epsilon);
    let _ = writeln!(out, "param_count = {PARAM_COUNT}");
    for ch in 0..CHANNELS {
        let _ = writeln!(out, "g.weights.{ch} = {}", hex_row(&ckpt.params.g.weights()[ch]));
    }
    let _ = writeln!(out, "g.bias = {}", hex_row(ckpt.params.g.bias()));
    for ch in 0..CHANNELS {
        let _ = writeln!(out, "f.weights.{ch} = {}", hex_row(&ckpt.params.f.weights()[ch]));
    }
    let _ = writeln!(out, "f.bias = {}", hex_row(ckpt.params.f.bias()));
    fs::write(path, out).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_values(map: &BTreeMap<String, String>, key: &str, expected: usize) -> Result<Vec<f32>> {
    let raw = map
        .get(key)
        .ok_or_else(|| Error::CheckpointCorrupt(format!("missing key {key}")))?;
    let values: Result<Vec<f32>> = raw.split_whitespace().map(parse_hex).collect();
    let values = values?;
    if values.len() != expected {
        return Err(Error::CheckpointCorrupt(format!(
            "key {key}: expected {expected} values, found {}",
            values.len()
        )));
    }
    Ok(values)
}

fn get<'a>(map: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
    map.get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::CheckpointCorrupt(format!("missing key {key}")))
}

fn parse_int<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T> {
    get(map, key)?
        .parse()
        .map_err(|_| Error::CheckpointCorrupt(format!("bad integer for key {key}")))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = text.lines();
    match lines.next() {
        Some(line) if line.trim() == MAGIC => {}
        other => {
            return Err(Error::CheckpointCorrupt(format!(
                "missing {MAGIC:?} header, found {other:?}"
            )))
        }
    }
    let mut map = BTreeMap::new();
    for line in lines {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::CheckpointCorrupt(format!("expected key = value, got {line:?}")))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }

    let version_str = get(&map, "format_version")?;
    let version: u32 = version_str
        .parse()
        .map_err(|_| Error::CheckpointVersion {
            found: version_str.to_string(),
            supported: FORMAT_VERSION,
        })?;
    if version != FORMAT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version_str.to_string(),
            supported: FORMAT_VERSION,
        });
    }

    let declared: usize = parse_int(&map, "param_count")?;
    if declared != PARAM_COUNT {
        return Err(Error::CheckpointParamCount {
            found: declared,
            expected: PARAM_COUNT,
        });
    }

    let mut params = crate::model::zero_params();
    let mut total = 0usize;
    for ch in 0..CHANNELS {
        let w = parse_values(&map, &format!("g.weights.{ch}"), 9)?;
        total += w.len();
        params.g.weights_mut()[ch].copy_from_slice(&w);
    }
    let gb = parse_values(&map, "g.bias", 3)?;
    total += gb.len();
    params.g.bias_mut().copy_from_slice(&gb);
    for ch in 0..CHANNELS {
        let w = parse_values(&map, &format!("f.weights.{ch}"), 25)?;
        total += w.len();
        params.f.weights_mut()[ch].copy_from_slice(&w);
    }
    let fb = parse_values(&map, "f.bias", 3)?;
    total += fb.len();
    params.f.bias_mut().copy_from_slice(&fb);
    if total != PARAM_COUNT {
        return Err(Error::CheckpointParamCount {
            found: total,
            expected: PARAM_COUNT,
        });
    }

    let config = TrainConfig {
        epochs: parse_int(&map, "config.epochs")?,
        learning_rate: parse_hex(get(&map, "config.learning_rate")?)?,
        batch_size: parse_int(&map, "config.batch_size")?,
        seed: parse_int(&map, "config.seed")?,
        loss: LossKind::from_str(get(&map, "config.loss")?)?,
        optimizer: OptimizerKind::from_str(get(&map, "config.optimizer")?)?,
        adam_beta1: parse_hex(get(&map, "config.adam_beta1")?)?,
        adam_beta2: parse_hex(get(&map, "config.adam_beta2")?)?,
        adam_epsilon: parse_hex(get(&map, "config.adam_epsilon")?)?,
    };

    Ok(Checkpoint {
        format_version: version,
        params,
        config,
        epochs_completed: parse_int(&map, "epochs_completed")?,
        final_loss: parse_hex(get(&map, "final_loss")?)?,
        dataset_id: get(&map, "dataset")?.to_string(),
        created_at: map.get("created_at").cloned(),
    })
}
