//! Image quality assessment: Gaussian-windowed SSIM (the primary metric)
//! and PSNR, with per-pair and aggregate reporting.

use crate::error::{Error, Result};
use crate::tensor::{Tensor, CHANNELS};

#[derive(Clone, Debug, PartialEq)]
pub struct SsimConfig {
    pub window_size: usize,
    pub window_sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            window_size: 11,
            window_sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_size < 3 || self.window_size % 2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "SSIM window must be odd and >= 3, got {}",
                self.window_size
            )));
        }
        if !(self.k1 > 0.0) || !(self.k2 > 0.0) {
            return Err(Error::InvalidConfig("SSIM k1 and k2 must be > 0".into()));
        }
        if !(self.dynamic_range > 0.0) {
            return Err(Error::InvalidConfig("SSIM dynamic_range must be > 0".into()));
        }
        if !(self.window_sigma > 0.0) {
            return Err(Error::InvalidConfig("SSIM window_sigma must be > 0".into()));
        }
        Ok(())
    }
}

/// Unit-sum 1-D Gaussian window.
fn window_1d(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as i64;
    let mut w: Vec<f64> = (-r..=r)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Valid-mode separable blur: horizontal then vertical pass, output shrinks
/// by (window - 1) in each dimension.
fn blur_valid(plane: &[f64], h: usize, w: usize, win: &[f64]) -> Vec<f64> {
    let k = win.len();
    let ow = w - k + 1;
    let mut horiz = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, &wv) in win.iter().enumerate() {
                acc += plane[y * w + x + i] * wv;
            }
            horiz[y * ow + x] = acc;
        }
    }
    let oh = h - k + 1;
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, &wv) in win.iter().enumerate() {
                acc += horiz[(y + i) * ow + x] * wv;
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

/// Mean SSIM between two shape-matched tensors, computed per channel over
/// valid window positions and averaged across the three channels.
///
/// Callers are responsible for clamping to [0, dynamic_range];
/// [`evaluate_set`] does so.
pub fn ssim(a: &Tensor, b: &Tensor, config: &SsimConfig) -> Result<f64> {
    config.validate()?;
    if !a.same_shape(b) {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", a.shape()),
            actual: format!("{:?}", b.shape()),
        });
    }
    let (h, w, _) = a.shape();
    let k = config.window_size;
    if h < k || w < k {
        return Err(Error::ImageTooSmall { h, w, window: k });
    }

    let win = window_1d(k, config.window_sigma);
    let c1 = (config.k1 * config.dynamic_range).powi(2);
    let c2 = (config.k2 * config.dynamic_range).powi(2);

    let mut channel_scores = [0.0f64; CHANNELS];
    let mut xs = vec![0.0f64; h * w];
    let mut ys = vec![0.0f64; h * w];
    let mut xx = vec![0.0f64; h * w];
    let mut yy = vec![0.0f64; h * w];
    let mut xy = vec![0.0f64; h * w];
    for (c, score) in channel_scores.iter_mut().enumerate() {
        for i in 0..h * w {
            let x = a.data()[i * CHANNELS + c] as f64;
            let y = b.data()[i * CHANNELS + c] as f64;
            xs[i] = x;
            ys[i] = y;
            xx[i] = x * x;
            yy[i] = y * y;
            xy[i] = x * y;
        }
        let mu_x = blur_valid(&xs, h, w, &win);
        let mu_y = blur_valid(&ys, h, w, &win);
        let e_xx = blur_valid(&xx, h, w, &win);
        let e_yy = blur_valid(&yy, h, w, &win);
        let e_xy = blur_valid(&xy, h, w, &win);

        let mut sum = 0.0f64;
        for i in 0..mu_x.len() {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let var_x = e_xx[i] - mx * mx;
            let var_y = e_yy[i] - my * my;
            let cov = e_xy[i] - mx * my;
            let s = ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (var_x + var_y + c2));
            sum += s;
        }
        *score = sum / mu_x.len() as f64;
    }
    Ok(channel_scores.iter().sum::<f64>() / CHANNELS as f64)
}

/// Peak signal-to-noise ratio. Identical images get the distinguished
/// `Exact` value instead of an infinite dB figure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Psnr {
    Exact,
    Db(f64),
}

impl std::fmt::Display for Psnr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Psnr::Exact => f.write_str("exact"),
            Psnr::Db(v) => write!(f, "{v:.6}"),
        }
    }
}

pub fn psnr(a: &Tensor, b: &Tensor, peak: f64) -> Result<Psnr> {
    if !a.same_shape(b) {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", a.shape()),
            actual: format!("{:?}", b.shape()),
        });
    }
    let mut sum = 0.0f64;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let d = x as f64 - y as f64;
        sum += d * d;
    }
    let mse = sum / a.len() as f64;
    if mse == 0.0 {
        Ok(Psnr::Exact)
    } else {
        Ok(Psnr::Db(10.0 * (peak * peak / mse).log10()))
    }
}

#[derive(Clone, Debug)]
pub struct PairRecord {
    pub id: String,
    pub ssim: f64,
    pub psnr: Psnr,
}

/// Per-pair metrics plus arithmetic-mean aggregates. Failed pairs are
/// recorded, not fatal; aggregates cover the successes. `mean_psnr` averages
/// the finite dB values only.
#[derive(Clone, Debug)]
pub struct MetricReport {
    pub records: Vec<PairRecord>,
    pub failures: Vec<(String, String)>,
    pub mean_ssim: f64,
    pub mean_psnr: Option<f64>,
}

impl MetricReport {
    pub fn count(&self) -> usize {
        self.records.len()
    }

    /// Line-oriented text form; schema frozen in docs/formats.md.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&format!("pair {} ssim {:.6} psnr {}\n", r.id, r.ssim, r.psnr));
        }
        for (id, msg) in &self.failures {
            out.push_str(&format!("failure {id} {msg}\n"));
        }
        out.push_str(&format!("count {}\n", self.records.len()));
        out.push_str(&format!("mean_ssim {:.6}\n", self.mean_ssim));
        match self.mean_psnr {
            Some(v) => out.push_str(&format!("mean_psnr {v:.6}\n")),
            None => out.push_str("mean_psnr n/a\n"),
        }
        out
    }
}

/// Evaluates (restored, ground truth) pairs: both clamped to
/// [0, dynamic_range] first, then SSIM and PSNR per pair, arithmetic means
/// over successful pairs.
pub fn evaluate_set(pairs: &[(String, Tensor, Tensor)], config: &SsimConfig) -> Result<MetricReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (id, restored, truth) in pairs {
        let a = restored.clamped(0.0, config.dynamic_range as f32);
        let b = truth.clamped(0.0, config.dynamic_range as f32);
        match ssim(&a, &b, config).and_then(|s| psnr(&a, &b, config.dynamic_range).map(|p| (s, p))) {
            Ok((s, p)) => records.push(PairRecord {
                id: id.clone(),
                ssim: s,
                psnr: p,
            }),
            Err(e) => failures.push((id.clone(), e.to_string())),
        }
    }
    let mean_ssim = if records.is_empty() {
        0.0
    } else {
        records.iter().map(|r| r.ssim).sum::<f64>() / records.len() as f64
    };
    let finite: Vec<f64> = records
        .iter()
        .filter_map(|r| match r.psnr {
            Psnr::Db(v) => Some(v),
            Psnr::Exact => None,
        })
        .collect();
    let mean_psnr = if finite.is_empty() {
        None
    } else {
        Some(finite.iter().sum::<f64>() / finite.len() as f64)
    };
    Ok(MetricReport {
        records,
        failures,
        mean_ssim,
        mean_psnr,
    })
}
