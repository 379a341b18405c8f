//! Resolved run settings: built-in defaults, overlaid by an optional flat
//! `key = value` config file, overlaid by command-line flags. Every
//! effective value is echoed at the start of a run.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use retina_restore::model::DEFAULT_SIGMA_G;
use retina_restore::{Error, SsimConfig, TrainConfig};

#[derive(Clone, Debug)]
pub struct Settings {
    pub train: TrainConfig,
    pub ssim: SsimConfig,
    pub threads: usize,
    pub alpha: f32,
    pub beta: f32,
    pub sigma_g: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            ssim: SsimConfig::default(),
            threads: 1,
            alpha: 1.0,
            beta: 1.0,
            sigma_g: DEFAULT_SIGMA_G,
        }
    }
}

impl Settings {
    /// One `config key = value` line per effective setting.
    pub fn echo(&self) -> String {
        let t = &self.train;
        let s = &self.ssim;
        format!(
            "config epochs = {}\n\
             config learning_rate = {}\n\
             config batch_size = {}\n\
             config seed = {}\n\
             config loss = {}\n\
             config optimizer = {}\n\
             config adam_beta1 = {}\n\
             config adam_beta2 = {}\n\
             config adam_epsilon = {}\n\
             config threads = {}\n\
             config ssim_window = {}\n\
             config ssim_sigma = {}\n\
             config ssim_k1 = {}\n\
             config ssim_k2 = {}\n\
             config dynamic_range = {}\n\
             config alpha = {}\n\
             config beta = {}\n\
             config sigma_g = {}",
            t.epochs,
            t.learning_rate,
            t.batch_size,
            t.seed,
            t.loss,
            t.optimizer,
            t.adam_beta1,
            t.adam_beta2,
            t.adam_epsilon,
            self.threads,
            s.window_size,
            s.window_sigma,
            s.k1,
            s.k2,
            s.dynamic_range,
            self.alpha,
            self.beta,
            self.sigma_g,
        )
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, Error> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("bad value {value:?} for key {key}")))
}

/// Parses a flat `key = value` file and applies it over `settings`.
/// Unknown keys are errors, never ignored.
pub fn apply_config_file(path: &Path, settings: &mut Settings) -> Result<(), Error> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!(
                "{}:{}: expected key = value",
                path.display(),
                lineno + 1
            ))
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    for (key, value) in &map {
        match key.as_str() {
            "epochs" => settings.train.epochs = parse(key, value)?,
            "learning_rate" => settings.train.learning_rate = parse(key, value)?,
            "batch_size" => settings.train.batch_size = parse(key, value)?,
            "seed" => settings.train.seed = parse(key, value)?,
            "loss" => settings.train.loss = value.parse()?,
            "optimizer" => settings.train.optimizer = value.parse()?,
            "adam_beta1" => settings.train.adam_beta1 = parse(key, value)?,
            "adam_beta2" => settings.train.adam_beta2 = parse(key, value)?,
            "adam_epsilon" => settings.train.adam_epsilon = parse(key, value)?,
            "threads" => settings.threads = parse(key, value)?,
            "ssim_window" => settings.ssim.window_size = parse(key, value)?,
            "ssim_sigma" => settings.ssim.window_sigma = parse(key, value)?,
            "ssim_k1" => settings.ssim.k1 = parse(key, value)?,
            "ssim_k2" => settings.ssim.k2 = parse(key, value)?,
            "dynamic_range" => settings.ssim.dynamic_range = parse(key, value)?,
            "alpha" => settings.alpha = parse(key, value)?,
            "beta" => settings.beta = parse(key, value)?,
            "sigma_g" => settings.sigma_g = parse(key, value)?,
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "{}: unknown config key {key:?}",
                    path.display()
                )))
            }
        }
    }
    Ok(())
}
