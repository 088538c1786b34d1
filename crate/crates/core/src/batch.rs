//! Dataset-level augmentation: per-file seeding, byte-level entry point and
//! the directory driver behind `polyaug augment`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::label_io::{
    parse_label_file_with, scan_dataset, serialize_label_file, DatasetPair, LabelError, ParseMode,
};
use crate::pipeline::{augment_pair, PipelineError};
use crate::raster::{ImageBuffer, RasterError};
use crate::transforms::{TransformError, TransformSpec};

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BatchError + '_ {
    move |source| BatchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Seed for one file, derived from the global seed and the file stem so
/// results do not depend on processing order.
pub fn file_seed(seed: u64, stem: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stem.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("32-byte digest"))
}

#[derive(Debug, Clone)]
pub struct AugmentRequest<'a> {
    pub transform: &'a TransformSpec,
    pub threshold: f64,
    pub seed: u64,
    pub stem: &'a str,
    pub mode: ParseMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedBytes {
    pub png: Vec<u8>,
    pub labels: String,
    pub kept: usize,
    pub dismissed: usize,
}

/// Augments one encoded image and its label text. This is the exact path
/// the CLI takes for every file.
pub fn augment_bytes(
    image_bytes: &[u8],
    label_text: &str,
    req: &AugmentRequest<'_>,
) -> Result<AugmentedBytes, BatchError> {
    let labels = parse_label_file_with(label_text, req.mode)?;
    let image = ImageBuffer::decode(image_bytes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(file_seed(req.seed, req.stem));
    let aug = req
        .transform
        .resolve(image.width(), image.height(), &mut rng)?;
    let (out_image, outcome) = augment_pair(&image, &labels, &aug, req.threshold)?;
    Ok(AugmentedBytes {
        png: out_image.encode_png()?,
        labels: serialize_label_file(&outcome.label_file()),
        kept: outcome.kept.len(),
        dismissed: outcome.dismissed.len(),
    })
}

#[derive(Debug, Clone)]
pub struct AugConfig {
    pub images_dir: PathBuf,
    pub labels_dir: PathBuf,
    pub out_dir: PathBuf,
    pub transforms: Vec<TransformSpec>,
    pub threshold: f64,
    pub seed: u64,
    pub jobs: usize,
    pub lenient: bool,
    pub suffix: String,
}

impl AugConfig {
    pub fn new(images_dir: PathBuf, labels_dir: PathBuf, out_dir: PathBuf) -> Self {
        Self {
            images_dir,
            labels_dir,
            out_dir,
            transforms: Vec::new(),
            threshold: 0.0,
            seed: 0,
            jobs: 1,
            lenient: false,
            suffix: "_aug".into(),
        }
    }

    pub fn out_images_dir(&self) -> PathBuf {
        self.out_dir.join("images")
    }

    pub fn out_labels_dir(&self) -> PathBuf {
        self.out_dir.join("labels")
    }

    fn mode(&self) -> ParseMode {
        if self.lenient {
            ParseMode::Lenient
        } else {
            ParseMode::Strict
        }
    }

    pub fn validate(&self) -> Result<TransformSpec, BatchError> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(BatchError::Config(format!(
                "threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        if self.jobs == 0 {
            return Err(BatchError::Config("jobs must be at least 1".into()));
        }
        for dir in [&self.images_dir, &self.labels_dir] {
            if !dir.is_dir() {
                return Err(LabelError::DirectoryNotFound(dir.clone()).into());
            }
        }
        let inputs = [canonical(&self.images_dir), canonical(&self.labels_dir)];
        for out in [
            self.out_dir.clone(),
            self.out_images_dir(),
            self.out_labels_dir(),
        ] {
            if inputs.contains(&canonical(&out)) {
                return Err(BatchError::Config(format!(
                    "output directory {} overlaps an input directory",
                    out.display()
                )));
            }
        }
        Ok(TransformSpec::from_steps(self.transforms.clone())?)
    }
}

// Resolves what exists of `path` so that not-yet-created outputs compare
// against canonical inputs.
fn canonical(path: &Path) -> PathBuf {
    if let Ok(p) = path.canonicalize() {
        return p;
    }
    match (path.parent(), path.file_name()) {
        (Some(parent), Some(name)) if !parent.as_os_str().is_empty() => {
            canonical(parent).join(name)
        }
        _ => std::env::current_dir()
            .map(|cwd| cwd.join(path))
            .unwrap_or_else(|_| path.to_path_buf()),
    }
}

#[derive(Debug)]
pub struct FileReport {
    pub stem: String,
    pub image_path: PathBuf,
    pub result: Result<FileOutcome, BatchError>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileOutcome {
    pub kept: usize,
    pub dismissed: usize,
    pub image_out: PathBuf,
    pub label_out: PathBuf,
}

#[derive(Debug, Default)]
pub struct BatchSummary {
    pub files: Vec<FileReport>,
    pub orphan_labels: Vec<PathBuf>,
}

impl BatchSummary {
    pub fn failed(&self) -> usize {
        self.files.iter().filter(|f| f.result.is_err()).count()
    }

    pub fn total_kept(&self) -> usize {
        self.files
            .iter()
            .filter_map(|f| f.result.as_ref().ok())
            .map(|o| o.kept)
            .sum()
    }

    pub fn total_dismissed(&self) -> usize {
        self.files
            .iter()
            .filter_map(|f| f.result.as_ref().ok())
            .map(|o| o.dismissed)
            .sum()
    }
}

fn process_pair(
    cfg: &AugConfig,
    spec: &TransformSpec,
    pair: &DatasetPair,
    stem: &str,
) -> Result<FileOutcome, BatchError> {
    let image_bytes = fs::read(&pair.image_path).map_err(io_err(&pair.image_path))?;
    let label_text = match &pair.label_path {
        Some(p) => fs::read_to_string(p).map_err(io_err(p))?,
        None => String::new(),
    };
    let req = AugmentRequest {
        transform: spec,
        threshold: cfg.threshold,
        seed: cfg.seed,
        stem,
        mode: cfg.mode(),
    };
    let out = augment_bytes(&image_bytes, &label_text, &req)?;
    let image_out = cfg
        .out_images_dir()
        .join(format!("{stem}{}.png", cfg.suffix));
    let label_out = cfg
        .out_labels_dir()
        .join(format!("{stem}{}.txt", cfg.suffix));
    fs::write(&image_out, &out.png).map_err(io_err(&image_out))?;
    fs::write(&label_out, &out.labels).map_err(io_err(&label_out))?;
    Ok(FileOutcome {
        kept: out.kept,
        dismissed: out.dismissed,
        image_out,
        label_out,
    })
}

/// Augments every image/label pair under the configured directories.
///
/// Setup problems (bad config, missing directories) fail the whole call;
/// per-file failures are recorded in the summary and processing continues.
pub fn augment_dataset(cfg: &AugConfig) -> Result<BatchSummary, BatchError> {
    let spec = cfg.validate()?;
    let scan = scan_dataset(&cfg.images_dir, &cfg.labels_dir)?;
    for dir in [cfg.out_images_dir(), cfg.out_labels_dir()] {
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    }
    let run = |pair: &DatasetPair| {
        let stem = pair.stem();
        let result = process_pair(cfg, &spec, pair, &stem);
        FileReport {
            stem,
            image_path: pair.image_path.clone(),
            result,
        }
    };
    let files = if cfg.jobs <= 1 {
        scan.pairs.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| BatchError::Config(format!("cannot start worker pool: {e}")))?;
        pool.install(|| scan.pairs.par_iter().map(run).collect())
    };
    Ok(BatchSummary {
        files,
        orphan_labels: scan.orphan_labels,
    })
}
