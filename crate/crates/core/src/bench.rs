//! Time and space comparison between the keypoint pipeline and the
//! mask-based reference path on a deterministic synthetic dataset.
//!
//! Both paths run single-threaded over pre-decoded images, so timings cover
//! augmentation work only.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alloc;
use crate::geometry::Point2;
use crate::label_io::{LabelFile, PolygonAnnotation};
use crate::pipeline::{augment_pair, PipelineError};
use crate::raster::{annotation_bytes, mask_bytes, oracle_augment, rasterize_polygon, ImageBuffer};
use crate::transforms::{TransformError, TransformSpec};

/// Timed repetitions per path; the fastest one is reported.
pub const REPEATS: usize = 3;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticDatasetSpec {
    pub n_images: usize,
    pub instances_per_image: usize,
    pub vertices_per_instance: usize,
    /// Square image side in pixels.
    pub image_size: u32,
    pub seed: u64,
}

impl SyntheticDatasetSpec {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.n_images == 0 {
            return Err(BenchError::InvalidSpec("n_images must be positive".into()));
        }
        if self.instances_per_image == 0 {
            return Err(BenchError::InvalidSpec(
                "instances_per_image must be positive".into(),
            ));
        }
        if self.vertices_per_instance < 3 {
            return Err(BenchError::InvalidSpec(
                "vertices_per_instance must be at least 3".into(),
            ));
        }
        if self.image_size < 16 {
            return Err(BenchError::InvalidSpec(
                "image_size must be at least 16".into(),
            ));
        }
        Ok(())
    }
}

impl Default for SyntheticDatasetSpec {
    fn default() -> Self {
        Self {
            n_images: 128,
            instances_per_image: 8,
            vertices_per_instance: 20,
            image_size: 640,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticItem {
    pub name: String,
    pub image: ImageBuffer,
    pub labels: LabelFile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub spec: SyntheticDatasetSpec,
    pub items: Vec<SyntheticItem>,
}

impl SyntheticDataset {
    pub fn n_instances(&self) -> usize {
        self.items.iter().map(|it| it.labels.len()).sum()
    }

    pub fn mean_vertices(&self) -> f64 {
        let n = self.n_instances();
        if n == 0 {
            return 0.0;
        }
        let v: usize = self
            .items
            .iter()
            .flat_map(|it| &it.labels.annotations)
            .map(|a| a.vertices().len())
            .sum();
        v as f64 / n as f64
    }
}

/// Convex polygon with vertices on a random ellipse, angularly jittered but
/// kept in order, entirely inside a `size x size` frame. Normalized output.
fn random_convex(rng: &mut ChaCha8Rng, n: usize, size: f64) -> Vec<Point2> {
    let rx = rng.random_range(0.05..0.2) * size;
    let ry = rng.random_range(0.05..0.2) * size;
    let cx = rng.random_range(rx + 1.0..size - rx - 1.0);
    let cy = rng.random_range(ry + 1.0..size - ry - 1.0);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let step = std::f64::consts::TAU / n as f64;
    (0..n)
        .map(|k| {
            let t = phase + step * (k as f64 + rng.random_range(-0.3..0.3));
            Point2::new((cx + rx * t.cos()) / size, (cy + ry * t.sin()) / size)
        })
        .collect()
}

pub fn generate_synthetic(spec: &SyntheticDatasetSpec) -> Result<SyntheticDataset, BenchError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let size = spec.image_size;
    let side = f64::from(size);
    let mut items = Vec::with_capacity(spec.n_images);
    for idx in 0..spec.n_images {
        let background: [u8; 3] = rng.random();
        let mut image = ImageBuffer::filled(size, size, 3, 0).expect("positive size");
        for px in image.data_mut().chunks_exact_mut(3) {
            px.copy_from_slice(&background);
        }
        let mut annotations = Vec::with_capacity(spec.instances_per_image);
        for _ in 0..spec.instances_per_image {
            let class_id = rng.random_range(0..80);
            let verts = random_convex(&mut rng, spec.vertices_per_instance, side);
            let ann = PolygonAnnotation::new(class_id, verts).expect("generated inside frame");
            let tint: [u8; 3] = rng.random();
            let mask = rasterize_polygon(&ann.to_pixels(size, size), size, size);
            let data = image.data_mut();
            for (i, &on) in mask.as_bytes().iter().enumerate() {
                if on != 0 {
                    for c in 0..3 {
                        let p = &mut data[i * 3 + c];
                        *p = ((u16::from(*p) + u16::from(tint[c])) / 2) as u8;
                    }
                }
            }
            annotations.push(ann);
        }
        items.push(SyntheticItem {
            name: format!("synthetic_{idx:05}"),
            image,
            labels: LabelFile::new(annotations),
        });
    }
    Ok(SyntheticDataset { spec: *spec, items })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathReport {
    /// Best of [`REPEATS`] runs.
    pub wall_time_s: f64,
    pub run_times_s: Vec<f64>,
    pub annotation_bytes: u64,
    /// Peak heap growth during one pass; 0 without the counting allocator.
    pub peak_transient_bytes: u64,
    pub kept_instances: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub n_images: usize,
    pub n_instances: usize,
    pub mean_vertices: f64,
    pub image_size: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub dataset: DatasetDescriptor,
    pub transform: String,
    pub threshold: f64,
    pub polygon: PathReport,
    pub mask: PathReport,
    /// Both paths kept the same instance ids for every image.
    pub same_kept_instances: bool,
}

impl BenchReport {
    /// Polygon annotation bytes as a fraction of mask bytes.
    pub fn space_ratio(&self) -> f64 {
        self.polygon.annotation_bytes as f64 / self.mask.annotation_bytes.max(1) as f64
    }

    pub fn time_ratio(&self) -> f64 {
        self.polygon.wall_time_s / self.mask.wall_time_s
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let d = &self.dataset;
        writeln!(
            s,
            "dataset: {} images, {} instances, {:.1} vertices/instance, {}x{} px",
            d.n_images, d.n_instances, d.mean_vertices, d.image_size, d.image_size
        )
        .unwrap();
        writeln!(
            s,
            "transform: {}  threshold: {}",
            self.transform, self.threshold
        )
        .unwrap();
        writeln!(
            s,
            "{:<8} {:>12} {:>18} {:>18} {:>8}",
            "path", "time (s)", "annotation (B)", "peak alloc (B)", "kept"
        )
        .unwrap();
        for (name, p) in [("polygon", &self.polygon), ("mask", &self.mask)] {
            writeln!(
                s,
                "{:<8} {:>12.4} {:>18} {:>18} {:>8}",
                name, p.wall_time_s, p.annotation_bytes, p.peak_transient_bytes, p.kept_instances
            )
            .unwrap();
        }
        writeln!(
            s,
            "space ratio: {:.4}%  time ratio: {:.3}  same kept: {}",
            100.0 * self.space_ratio(),
            self.time_ratio(),
            self.same_kept_instances
        )
        .unwrap();
        s
    }
}

fn best_of<T>(mut run: impl FnMut() -> T) -> (T, Vec<f64>, u64) {
    let ((first, t0), peak) = alloc::measure_peak(|| {
        let start = Instant::now();
        let out = run();
        (out, start.elapsed().as_secs_f64())
    });
    let mut times = vec![t0];
    for _ in 1..REPEATS {
        let start = Instant::now();
        let out = run();
        times.push(start.elapsed().as_secs_f64());
        drop(out);
    }
    (first, times, peak as u64)
}

fn min_time(times: &[f64]) -> f64 {
    times.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Runs the keypoint pipeline and then the mask path over every item with
/// the same resolved transform.
pub fn run_bench(
    dataset: &SyntheticDataset,
    transform: &TransformSpec,
    threshold: f64,
) -> Result<BenchReport, BenchError> {
    let first = dataset.items.first().ok_or(BenchError::EmptyDataset)?;
    if !(0.0..=1.0).contains(&threshold) {
        return Err(PipelineError::InvalidThreshold(threshold).into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(dataset.spec.seed);
    let aug = transform.resolve(first.image.width(), first.image.height(), &mut rng)?;

    let (poly_out, poly_times, poly_peak) = best_of(|| {
        dataset
            .items
            .iter()
            .map(|it| augment_pair(&it.image, &it.labels, &aug, threshold))
            .collect::<Result<Vec<_>, _>>()
    });
    let poly_out = poly_out?;

    let (mask_out, mask_times, mask_peak) = best_of(|| {
        dataset
            .items
            .iter()
            .map(|it| oracle_augment(&it.image, &it.labels, &aug, threshold))
            .collect::<Vec<_>>()
    });

    let poly_bytes = poly_out
        .iter()
        .map(|(_, o)| annotation_bytes(&o.label_file()))
        .sum();
    let mask_total = mask_out
        .iter()
        .map(|o| mask_bytes(o.kept.iter().map(|k| &k.mask)))
        .sum();
    let same_kept_instances = poly_out.iter().zip(&mask_out).all(|((_, p), m)| {
        p.kept_ids() == m.kept.iter().map(|k| k.instance_id).collect::<Vec<_>>()
    });

    Ok(BenchReport {
        dataset: DatasetDescriptor {
            n_images: dataset.items.len(),
            n_instances: dataset.n_instances(),
            mean_vertices: dataset.mean_vertices(),
            image_size: dataset.spec.image_size,
        },
        transform: transform.to_string(),
        threshold,
        polygon: PathReport {
            wall_time_s: min_time(&poly_times),
            run_times_s: poly_times,
            annotation_bytes: poly_bytes,
            peak_transient_bytes: poly_peak,
            kept_instances: poly_out.iter().map(|(_, o)| o.kept.len()).sum(),
        },
        mask: PathReport {
            wall_time_s: min_time(&mask_times),
            run_times_s: mask_times,
            annotation_bytes: mask_total,
            peak_transient_bytes: mask_peak,
            kept_instances: mask_out.iter().map(|o| o.kept.len()).sum(),
        },
        same_kept_instances,
    })
}
