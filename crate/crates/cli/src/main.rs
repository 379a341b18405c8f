mod config;

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use clap::{Parser, Subcommand, ValueEnum};

use retina_restore::model::{DOG_SIGMA1, DOG_SIGMA2};
use retina_restore::{
    dog_kernel, evaluate_set, forward_classic, gaussian_kernel, infer, init_params_with_sigma_g,
    load_checkpoint, load_manifest, load_paired_dataset, save_checkpoint, train, zero_params,
    Checkpoint, ClassicVariantConfig, DepthwiseKernel, Error, HcMode, PairedDataset, Tensor,
};

use config::{apply_config_file, Settings};

const EXIT_DATASET: u8 = 2;
const EXIT_TRAIN: u8 = 3;

/// Retina-inspired low-light image restoration: train, infer, evaluate.
#[derive(Parser)]
#[command(name = "retina-restore", version, about)]
struct Cli {
    /// RNG seed (shuffling, synthetic data)
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for per-image inference/evaluation (1 = bit-exact)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Flat key = value config file (or set RETINA_RESTORE_CONFIG)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum InitKind {
    /// DoG-initialized f and Gaussian g (the trained model's default)
    Dog,
    /// All-zero parameters (the identity network)
    Zero,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Divisive,
    Affine,
}

impl From<ModeArg> for HcMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Divisive => HcMode::Divisive,
            ModeArg::Affine => HcMode::Affine,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GKernelArg {
    Gaussian,
    Delta,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FKernelArg {
    Dog,
    Delta,
}

#[derive(Subcommand)]
enum Command {
    /// Train on a paired low/high dataset and write a checkpoint
    Train {
        /// Dataset root containing low/ and high/ subdirectories
        #[arg(long, conflicts_with = "manifest")]
        data: Option<PathBuf>,
        /// Manifest file: one low_path<TAB>high_path per line
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Output checkpoint path
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f32>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        optimizer: Option<String>,
        #[arg(long)]
        loss: Option<String>,
        /// Parameter initialization
        #[arg(long, value_enum, default_value = "dog")]
        init: InitKind,
        /// Sigma of the Gaussian-initialized g kernel
        #[arg(long)]
        sigma_g: Option<f64>,
        /// Decode the whole dataset into memory once instead of per epoch
        #[arg(long)]
        preload: bool,
        /// Record a wall-clock stamp in the checkpoint (off keeps identical
        /// runs byte-identical)
        #[arg(long)]
        stamp: bool,
    },
    /// Restore one image or a directory of images with a checkpoint
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Input image file or directory
        #[arg(long)]
        input: PathBuf,
        /// Output directory (filenames preserved)
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Evaluate a checkpoint on a paired dataset (SSIM/PSNR report)
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, conflicts_with = "manifest")]
        data: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Also write the metric report to this file
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        ssim_window: Option<usize>,
        #[arg(long)]
        ssim_sigma: Option<f64>,
        #[arg(long)]
        ssim_k1: Option<f64>,
        #[arg(long)]
        ssim_k2: Option<f64>,
        #[arg(long)]
        dynamic_range: Option<f64>,
    },
    /// Print a difference-of-Gaussians kernel matrix
    DumpDog {
        #[arg(long, default_value_t = 5)]
        size: usize,
        #[arg(long, default_value_t = DOG_SIGMA1)]
        sigma1: f64,
        #[arg(long, default_value_t = DOG_SIGMA2)]
        sigma2: f64,
    },
    /// Run a classic (non-learned) retina-circuit variant on one image
    Variant {
        /// Horizontal-cell modulation: divisive (IIR-like) or affine (FIR)
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Add the input back onto the bipolar convolution output
        #[arg(long)]
        residual: bool,
        #[arg(long)]
        alpha: Option<f32>,
        #[arg(long)]
        beta: Option<f32>,
        #[arg(long)]
        sigma_g: Option<f64>,
        /// Horizontal-cell kernel g
        #[arg(long, value_enum, default_value = "gaussian")]
        g_kernel: GKernelArg,
        /// Ganglion-stage kernel f
        #[arg(long, value_enum, default_value = "dog")]
        f_kernel: FKernelArg,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let mut settings = Settings::default();
    let config_path = cli
        .config
        .clone()
        .or_else(|| std::env::var_os("RETINA_RESTORE_CONFIG").map(PathBuf::from));
    if let Some(path) = &config_path {
        if let Err(e) = apply_config_file(path, &mut settings) {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    if let Some(seed) = cli.seed {
        settings.train.seed = seed;
    }
    if let Some(threads) = cli.threads {
        settings.threads = threads.max(1);
    }

    match run(cli.command, settings) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(classify(&e))
        }
    }
}

fn classify(e: &Error) -> u8 {
    match e {
        Error::MissingSubdir(_)
        | Error::UnmatchedFile { .. }
        | Error::PairDimensionMismatch { .. }
        | Error::UnsupportedImage { .. }
        | Error::EmptyDataset
        | Error::Io { .. }
        | Error::Image { .. } => EXIT_DATASET,
        Error::NonFinite(_) | Error::NonFiniteGradient(_) => EXIT_TRAIN,
        _ => 1,
    }
}

fn run(command: Command, mut settings: Settings) -> Result<ExitCode, Error> {
    match command {
        Command::Train {
            data,
            manifest,
            out,
            epochs,
            learning_rate,
            batch_size,
            optimizer,
            loss,
            init,
            sigma_g,
            preload,
            stamp,
        } => {
            if let Some(v) = epochs {
                settings.train.epochs = v;
            }
            if let Some(v) = learning_rate {
                settings.train.learning_rate = v;
            }
            if let Some(v) = batch_size {
                settings.train.batch_size = v;
            }
            if let Some(v) = optimizer {
                settings.train.optimizer = v.parse()?;
            }
            if let Some(v) = loss {
                settings.train.loss = v.parse()?;
            }
            if let Some(v) = sigma_g {
                settings.sigma_g = v;
            }
            println!("{}", settings.echo());
            let dataset = open_dataset(data.as_deref(), manifest.as_deref())?;
            println!("dataset {} pairs {}", dataset.dataset_id(), dataset.len());
            if preload {
                dataset.preload()?;
            }
            let params = match init {
                InitKind::Dog => init_params_with_sigma_g(settings.train.seed, settings.sigma_g)?,
                InitKind::Zero => zero_params(),
            };
            let mut ckpt = train(&dataset, &settings.train, params, |epoch, loss| {
                println!("epoch {} loss {:.6}", epoch + 1, loss);
            })?;
            if stamp {
                ckpt.created_at = Some(unix_timestamp());
            }
            save_checkpoint(&ckpt, &out)?;
            println!("checkpoint {}", out.display());
            Ok(ExitCode::SUCCESS)
        }

        Command::Infer {
            checkpoint,
            input,
            out_dir,
        } => {
            println!("{}", settings.echo());
            let ckpt = load_checkpoint(&checkpoint)?;
            std::fs::create_dir_all(&out_dir).map_err(|source| Error::Io {
                path: out_dir.clone(),
                source,
            })?;
            let files = collect_inputs(&input)?;
            let params = &ckpt.params;
            let out_dir = &out_dir;
            let results = par_map(files, settings.threads, |path| {
                let name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
                let out_path = out_dir.join(&name);
                let result = decode_and_restore(params, &path).and_then(|t| {
                    retina_restore::encode_image(&t, &out_path)?;
                    Ok(out_path.clone())
                });
                (path, result)
            });
            let mut failed = 0usize;
            for (path, result) in results {
                match result {
                    Ok(out_path) => println!("restored {} -> {}", path.display(), out_path.display()),
                    Err(e) => {
                        failed += 1;
                        eprintln!("error restoring {}: {e}", path.display());
                    }
                }
            }
            if failed > 0 {
                eprintln!("{failed} file(s) failed");
                Ok(ExitCode::FAILURE)
            } else {
                Ok(ExitCode::SUCCESS)
            }
        }

        Command::Eval {
            checkpoint,
            data,
            manifest,
            report,
            ssim_window,
            ssim_sigma,
            ssim_k1,
            ssim_k2,
            dynamic_range,
        } => {
            if let Some(v) = ssim_window {
                settings.ssim.window_size = v;
            }
            if let Some(v) = ssim_sigma {
                settings.ssim.window_sigma = v;
            }
            if let Some(v) = ssim_k1 {
                settings.ssim.k1 = v;
            }
            if let Some(v) = ssim_k2 {
                settings.ssim.k2 = v;
            }
            if let Some(v) = dynamic_range {
                settings.ssim.dynamic_range = v;
            }
            settings.ssim.validate()?;
            println!("{}", settings.echo());
            let ckpt = load_checkpoint(&checkpoint)?;
            let dataset = open_dataset(data.as_deref(), manifest.as_deref())?;
            println!("dataset {} pairs {}", dataset.dataset_id(), dataset.len());
            let pairs = restore_pairs(&ckpt, &dataset, settings.threads)?;
            let metric_report = evaluate_set(&pairs, &settings.ssim)?;
            print!("{}", metric_report.to_text());
            if let Some(path) = report {
                std::fs::write(&path, metric_report.to_text()).map_err(|source| Error::Io {
                    path,
                    source,
                })?;
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::DumpDog { size, sigma1, sigma2 } => {
            println!("{}", settings.echo());
            let kernel = dog_kernel(size, sigma1, sigma2)?;
            for row in kernel.chunks(size) {
                let line: Vec<String> = row.iter().map(|v| format!("{v:7.4}")).collect();
                println!("{}", line.join(" "));
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Variant {
            mode,
            residual,
            alpha,
            beta,
            sigma_g,
            g_kernel,
            f_kernel,
            input,
            output,
        } => {
            if let Some(v) = alpha {
                settings.alpha = v;
            }
            if let Some(v) = beta {
                settings.beta = v;
            }
            if let Some(v) = sigma_g {
                settings.sigma_g = v;
            }
            println!("{}", settings.echo());
            let g = match g_kernel {
                GKernelArg::Gaussian => {
                    let plane: Vec<f32> = gaussian_kernel(3, settings.sigma_g)?
                        .iter()
                        .map(|&v| v as f32)
                        .collect();
                    DepthwiseKernel::replicated(3, &plane)?
                }
                GKernelArg::Delta => DepthwiseKernel::delta(3)?,
            };
            let f = match f_kernel {
                FKernelArg::Dog => {
                    let plane: Vec<f32> = dog_kernel(5, DOG_SIGMA1, DOG_SIGMA2)?
                        .iter()
                        .map(|&v| v as f32)
                        .collect();
                    DepthwiseKernel::replicated(5, &plane)?
                }
                FKernelArg::Delta => DepthwiseKernel::delta(5)?,
            };
            let cfg = ClassicVariantConfig {
                mode: mode.into(),
                residual,
                alpha: settings.alpha,
                beta: settings.beta,
                g_kernel: g,
                f_kernel: f,
            };
            let image = retina_restore::decode_image(&input)?;
            match forward_classic(&cfg, &image) {
                Ok(out) => {
                    println!("divisive_guard ok");
                    retina_restore::encode_image(&out, &output)?;
                    println!("wrote {}", output.display());
                    Ok(ExitCode::SUCCESS)
                }
                Err(Error::NumericalInstability { count, threshold }) => {
                    println!("divisive_guard triggered: {count} pixel(s) with |alpha + h| < {threshold}");
                    eprintln!(
                        "error: {}",
                        Error::NumericalInstability { count, threshold }
                    );
                    Ok(ExitCode::FAILURE)
                }
                Err(e) => Err(e),
            }
        }
    }
}

fn unix_timestamp() -> String {
    use std::time::{SystemTime, UNIX_EPOCH};
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("unix:{secs}")
}

fn open_dataset(data: Option<&Path>, manifest: Option<&Path>) -> Result<PairedDataset, Error> {
    match (data, manifest) {
        (Some(dir), None) => load_paired_dataset(dir),
        (None, Some(file)) => load_manifest(file),
        _ => Err(Error::InvalidConfig(
            "exactly one of --data or --manifest is required".into(),
        )),
    }
}

fn collect_inputs(input: &Path) -> Result<Vec<PathBuf>, Error> {
    if input.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(input)
            .map_err(|source| Error::Io {
                path: input.to_path_buf(),
                source,
            })?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        Ok(files)
    } else {
        Ok(vec![input.to_path_buf()])
    }
}

fn decode_and_restore(
    params: &retina_restore::ModelParams,
    path: &Path,
) -> Result<Tensor, Error> {
    let image = retina_restore::decode_image(path)?;
    infer(params, &image)
}

fn restore_pairs(
    ckpt: &Checkpoint,
    dataset: &PairedDataset,
    threads: usize,
) -> Result<Vec<(String, Tensor, Tensor)>, Error> {
    let indices: Vec<usize> = (0..dataset.len()).collect();
    let results = par_map(indices, threads, |i| {
        let id = dataset.id(i).to_string();
        match dataset.paths(i) {
            Some((low_path, high_path)) => {
                let restored = retina_restore::decode_image(low_path)
                    .and_then(|low| infer(&ckpt.params, &low));
                let truth = retina_restore::decode_image(high_path);
                (id, restored.and_then(|r| truth.map(|t| (r, t))))
            }
            None => {
                // in-memory datasets are only reachable single-threaded
                let pair = dataset.load_pair(i);
                (
                    id,
                    pair.and_then(|(low, high)| infer(&ckpt.params, &low).map(|r| (r, high))),
                )
            }
        }
    });
    let mut out = Vec::with_capacity(results.len());
    for (id, result) in results {
        let (restored, truth) = result?;
        out.push((id, restored, truth));
    }
    Ok(out)
}

/// Maps `f` over `items` on up to `threads` workers, returning results in
/// input order. `threads == 1` runs inline.
fn par_map<T, R, F>(items: Vec<T>, threads: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync,
{
    if threads <= 1 || items.len() <= 1 {
        return items.into_iter().map(f).collect();
    }
    let queue: Mutex<VecDeque<(usize, T)>> = Mutex::new(items.into_iter().enumerate().collect());
    let n = queue.lock().unwrap().len();
    let results: Mutex<Vec<Option<R>>> =
        Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads.min(n) {
            scope.spawn(|| loop {
                let next = queue.lock().unwrap().pop_front();
                match next {
                    Some((i, item)) => {
                        let r = f(item);
                        results.lock().unwrap()[i] = Some(r);
                    }
                    None => break,
                }
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every task completed"))
        .collect()
}
