//! YOLO segmentation label files and image/label directory pairing.
//!
//! A label file holds one instance per line:
//!
//! ```text
//! <class_id> <x1> <y1> <x2> <y2> ... <xn> <yn>
//! ```
//!
//! with coordinates normalized to `[0, 1]` by image width and height.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point2, Polygon};

pub const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];
pub const LABEL_EXTENSION: &str = "txt";

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("malformed label at line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("invalid annotation: {0}")]
    InvalidAnnotation(String),
    #[error("directory not found: {}", .0.display())]
    DirectoryNotFound(PathBuf),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl LabelError {
    /// Line number for [`LabelError::MalformedLine`].
    pub fn line(&self) -> Option<usize> {
        match self {
            LabelError::MalformedLine { line, .. } => Some(*line),
            _ => None,
        }
    }
}

/// How out-of-range coordinates are treated while parsing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Reject coordinates outside `[0, 1]`.
    #[default]
    Strict,
    /// Clamp coordinates into `[0, 1]`.
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonAnnotation {
    class_id: u32,
    vertices: Vec<Point2>,
}

impl PolygonAnnotation {
    pub fn new(class_id: u32, vertices: Vec<Point2>) -> Result<Self, LabelError> {
        if vertices.len() < 3 {
            return Err(LabelError::InvalidAnnotation(format!(
                "need at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if let Some(v) = vertices.iter().find(|v| !in_unit(v.x) || !in_unit(v.y)) {
            return Err(LabelError::InvalidAnnotation(format!(
                "vertex ({}, {}) outside [0, 1]",
                v.x, v.y
            )));
        }
        Ok(Self { class_id, vertices })
    }

    pub fn class_id(&self) -> u32 {
        self.class_id
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    /// The annotation as a polygon in pixel coordinates of a
    /// `width x height` image.
    pub fn to_pixels(&self, width: u32, height: u32) -> Polygon {
        let (w, h) = (f64::from(width), f64::from(height));
        let pts = self
            .vertices
            .iter()
            .map(|v| Point2::new(v.x * w, v.y * h))
            .collect();
        Polygon::new(pts).expect("annotation invariants guarantee a valid polygon")
    }

    pub fn to_polygon(&self) -> Polygon {
        Polygon::new(self.vertices.clone())
            .expect("annotation invariants guarantee a valid polygon")
    }
}

fn in_unit(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LabelFile {
    pub annotations: Vec<PolygonAnnotation>,
}

impl LabelFile {
    pub fn new(annotations: Vec<PolygonAnnotation>) -> Self {
        Self { annotations }
    }

    pub fn len(&self) -> usize {
        self.annotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.annotations.is_empty()
    }
}

pub fn parse_label_file(text: &str) -> Result<LabelFile, LabelError> {
    parse_label_file_with(text, ParseMode::Strict)
}

pub fn parse_label_file_with(text: &str, mode: ParseMode) -> Result<LabelFile, LabelError> {
    let mut annotations = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        annotations.push(parse_line(line, idx + 1, mode)?);
    }
    Ok(LabelFile { annotations })
}

fn parse_line(
    line: &str,
    line_no: usize,
    mode: ParseMode,
) -> Result<PolygonAnnotation, LabelError> {
    let malformed = |reason: String| LabelError::MalformedLine {
        line: line_no,
        reason,
    };
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() < 7 {
        return Err(malformed(format!(
            "expected a class id and at least 3 vertices, got {} tokens",
            tokens.len()
        )));
    }
    if tokens.len().is_multiple_of(2) {
        return Err(malformed("odd number of coordinates".into()));
    }
    let class_id: u32 = tokens[0].parse().map_err(|_| {
        malformed(format!(
            "class id `{}` is not a non-negative integer",
            tokens[0]
        ))
    })?;

    let mut coords = Vec::with_capacity(tokens.len() - 1);
    for tok in &tokens[1..] {
        let v: f64 = tok
            .parse()
            .map_err(|_| malformed(format!("coordinate `{tok}` is not a number")))?;
        if !v.is_finite() {
            return Err(malformed(format!("coordinate `{tok}` is not finite")));
        }
        let v = match mode {
            ParseMode::Strict if !in_unit(v) => {
                return Err(malformed(format!("coordinate {v} outside [0, 1]")));
            }
            ParseMode::Strict => v,
            ParseMode::Lenient => v.clamp(0.0, 1.0),
        };
        coords.push(v);
    }
    let vertices = coords
        .chunks_exact(2)
        .map(|xy| Point2::new(xy[0], xy[1]))
        .collect();
    Ok(PolygonAnnotation { class_id, vertices })
}

pub fn serialize_label_file(lf: &LabelFile) -> String {
    let mut out = String::new();
    for ann in &lf.annotations {
        write!(out, "{}", ann.class_id).unwrap();
        for v in &ann.vertices {
            write!(out, " {:.6} {:.6}", positive_zero(v.x), positive_zero(v.y)).unwrap();
        }
        out.push('\n');
    }
    out
}

// Avoid emitting "-0.000000" for tiny negative round-off.
fn positive_zero(v: f64) -> f64 {
    if v <= 0.0 {
        0.0
    } else {
        v
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPair {
    pub image_path: PathBuf,
    /// `None` means the image has no label file and is treated as unannotated.
    pub label_path: Option<PathBuf>,
}

impl DatasetPair {
    pub fn stem(&self) -> String {
        file_stem(&self.image_path)
    }
}

#[derive(Debug, Clone, Default)]
pub struct DatasetScan {
    pub pairs: Vec<DatasetPair>,
    /// Label files with no matching image.
    pub orphan_labels: Vec<PathBuf>,
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn list_files(dir: &Path, extensions: &[&str]) -> Result<Vec<PathBuf>, LabelError> {
    if !dir.is_dir() {
        return Err(LabelError::DirectoryNotFound(dir.to_path_buf()));
    }
    let io_err = |source| LabelError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        let matches = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| extensions.iter().any(|x| x.eq_ignore_ascii_case(e)));
        if path.is_file() && matches {
            files.push(path);
        }
    }
    Ok(files)
}

/// Pairs every image in `images_dir` with the same-stem `.txt` in
/// `labels_dir`, sorted by image stem.
pub fn scan_dataset(images_dir: &Path, labels_dir: &Path) -> Result<DatasetScan, LabelError> {
    let mut images = list_files(images_dir, &IMAGE_EXTENSIONS)?;
    images.sort_by_cached_key(|p| (file_stem(p), p.file_name().map(|n| n.to_os_string())));

    let mut labels: BTreeMap<String, PathBuf> = list_files(labels_dir, &[LABEL_EXTENSION])?
        .into_iter()
        .map(|p| (file_stem(&p), p))
        .collect();

    let mut pairs = Vec::with_capacity(images.len());
    let mut used = Vec::new();
    for image_path in images {
        let stem = file_stem(&image_path);
        let label_path = labels.get(&stem).cloned();
        if label_path.is_some() {
            used.push(stem);
        }
        pairs.push(DatasetPair {
            image_path,
            label_path,
        });
    }
    for stem in used {
        labels.remove(&stem);
    }
    Ok(DatasetScan {
        pairs,
        orphan_labels: labels.into_values().collect(),
    })
}

/// Reads and parses a label file; `None` yields an empty label set.
pub fn read_label_file(path: Option<&Path>, mode: ParseMode) -> Result<LabelFile, LabelError> {
    match path {
        None => Ok(LabelFile::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|source| LabelError::Io {
                path: p.to_path_buf(),
                source,
            })?;
            parse_label_file_with(&text, mode)
        }
    }
}
