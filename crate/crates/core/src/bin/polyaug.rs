use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use polyaug::alloc::CountingAllocator;
use polyaug::batch::{augment_dataset, AugConfig};
use polyaug::bench::{generate_synthetic, run_bench, SyntheticDatasetSpec};
use polyaug::transforms::TransformSpec;

#[global_allocator]
static ALLOC: CountingAllocator = CountingAllocator;

const EXIT_PARTIAL: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "polyaug",
    version,
    about = "Geometric augmentation for YOLO polygon labels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn parse_threshold(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if !(0.0..=1.0).contains(&v) {
        return Err(format!("threshold {v} outside [0, 1]"));
    }
    Ok(v)
}

#[derive(Subcommand)]
enum Command {
    /// Augment an image/label dataset.
    Augment {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// vflip, hflip, rotate=DEG[..DEG], crop=X0,Y0,W,H; repeat to chain.
        #[arg(long = "transform", required = true)]
        transforms: Vec<TransformSpec>,
        #[arg(long, default_value = "0", value_parser = parse_threshold)]
        threshold: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        jobs: u64,
        /// Clamp out-of-range coordinates instead of rejecting the file.
        #[arg(long)]
        lenient: bool,
        #[arg(long, default_value = "_aug")]
        suffix: String,
    },
    /// Compare the polygon pipeline against the mask path on synthetic data.
    Bench {
        #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
        n_images: u64,
        #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
        instances: u64,
        #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(3..))]
        vertices: u64,
        #[arg(long, default_value_t = 640, value_parser = clap::value_parser!(u32).range(16..))]
        size: u32,
        #[arg(long = "transform")]
        transforms: Vec<TransformSpec>,
        #[arg(long, default_value = "0", value_parser = parse_threshold)]
        threshold: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Augment {
            images,
            labels,
            out,
            transforms,
            threshold,
            seed,
            jobs,
            lenient,
            suffix,
        } => {
            let cfg = AugConfig {
                images_dir: images,
                labels_dir: labels,
                out_dir: out,
                transforms,
                threshold,
                seed,
                jobs: jobs as usize,
                lenient,
                suffix,
            };
            cmd_augment(&cfg)
        }
        Command::Bench {
            n_images,
            instances,
            vertices,
            size,
            transforms,
            threshold,
            seed,
            json,
        } => {
            let spec = SyntheticDatasetSpec {
                n_images: n_images as usize,
                instances_per_image: instances as usize,
                vertices_per_instance: vertices as usize,
                image_size: size,
                seed,
            };
            let transform = if transforms.is_empty() {
                TransformSpec::VFlip
            } else {
                TransformSpec::from_steps(transforms).expect("non-empty")
            };
            cmd_bench(&spec, &transform, threshold, json)
        }
    }
}

fn cmd_augment(cfg: &AugConfig) -> ExitCode {
    let summary = match augment_dataset(cfg) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    for orphan in &summary.orphan_labels {
        eprintln!("warning: label without image: {}", orphan.display());
    }
    for f in &summary.files {
        match &f.result {
            Ok(o) => println!("{}: kept {} dismissed {}", f.stem, o.kept, o.dismissed),
            Err(e) => eprintln!("{}: failed: {e}", f.stem),
        }
    }
    println!(
        "{} files, {} failed, {} kept, {} dismissed",
        summary.files.len(),
        summary.failed(),
        summary.total_kept(),
        summary.total_dismissed()
    );
    if summary.failed() > 0 {
        ExitCode::from(EXIT_PARTIAL)
    } else {
        ExitCode::SUCCESS
    }
}

fn cmd_bench(
    spec: &SyntheticDatasetSpec,
    transform: &TransformSpec,
    threshold: f64,
    json: bool,
) -> ExitCode {
    let report = generate_synthetic(spec).and_then(|d| run_bench(&d, transform, threshold));
    match report {
        Ok(r) if json => {
            println!(
                "{}",
                serde_json::to_string_pretty(&r).expect("report serializes")
            );
            ExitCode::SUCCESS
        }
        Ok(r) => {
            print!("{}", r.to_table());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
