//! Polygon augmentation through identified keypoints.
//!
//! Each polygon vertex becomes a keypoint tagged with its instance, class,
//! pre-transform area and position in the ring. Keypoints are transformed
//! independently (nothing is dropped at the frame border), regrouped by
//! instance, clipped to the output frame, and filtered by the fraction of
//! their transformed area that remains visible.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{clip_to_rect, polygon_area, signed_area, AffineMap, Point2, Polygon, Rect};
use crate::label_io::{LabelFile, PolygonAnnotation};
use crate::raster::{warp_image, ImageBuffer, Interpolation};
use crate::transforms::AffineAugmentation;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("instance {0} has zero area")]
    DegenerateInstance(usize),
    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("image is {got_w}x{got_h} but the augmentation expects {expected_w}x{expected_h}")]
    ImageSizeMismatch {
        expected_w: u32,
        expected_h: u32,
        got_w: u32,
        got_h: u32,
    },
    #[error("image dimensions must be positive")]
    EmptyFrame,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentifiedKeypoint {
    /// Pixel position.
    pub point: Point2,
    pub instance_id: usize,
    pub class_id: u32,
    /// Area of the source polygon in normalized units.
    pub original_area: f64,
    pub vertex_index: usize,
}

impl IdentifiedKeypoint {
    pub fn name(&self) -> String {
        format_keypoint_name(self.instance_id, self.class_id, self.original_area)
    }
}

/// `ID_CLASS_AREA` keypoint label, e.g. `3_17_0.125000`.
pub fn format_keypoint_name(instance_id: usize, class_id: u32, original_area: f64) -> String {
    format!("{instance_id}_{class_id}_{original_area:.6}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointSet {
    pub keypoints: Vec<IdentifiedKeypoint>,
    pub image_width: u32,
    pub image_height: u32,
}

impl KeypointSet {
    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    /// Applies `aug` to every keypoint. Points leaving the frame are kept.
    pub fn transformed(&self, aug: &AffineAugmentation) -> KeypointSet {
        let m = aug.map();
        KeypointSet {
            keypoints: self
                .keypoints
                .iter()
                .map(|k| IdentifiedKeypoint {
                    point: m.apply(k.point),
                    ..*k
                })
                .collect(),
            image_width: aug.out_width(),
            image_height: aug.out_height(),
        }
    }

    pub fn map_points(&mut self, m: &AffineMap) {
        for k in &mut self.keypoints {
            k.point = m.apply(k.point);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeptInstance {
    pub instance_id: usize,
    pub retention_ratio: f64,
    pub original_area: f64,
    /// Clipped polygon, normalized to the output frame.
    pub annotation: PolygonAnnotation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DismissedInstance {
    pub instance_id: usize,
    pub retention_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AugmentationOutcome {
    pub kept: Vec<KeptInstance>,
    pub dismissed: Vec<DismissedInstance>,
}

impl AugmentationOutcome {
    pub fn label_file(&self) -> LabelFile {
        LabelFile::new(self.kept.iter().map(|k| k.annotation.clone()).collect())
    }

    pub fn kept_ids(&self) -> Vec<usize> {
        self.kept.iter().map(|k| k.instance_id).collect()
    }

    pub fn instance_count(&self) -> usize {
        self.kept.len() + self.dismissed.len()
    }
}

/// Flattens labels into pixel-space keypoints for a `width x height` image.
pub fn yolo_to_keypoints(
    lf: &LabelFile,
    width: u32,
    height: u32,
) -> Result<KeypointSet, PipelineError> {
    if width == 0 || height == 0 {
        return Err(PipelineError::EmptyFrame);
    }
    let (w, h) = (f64::from(width), f64::from(height));
    let total = lf.annotations.iter().map(|a| a.vertices().len()).sum();
    let mut keypoints = Vec::with_capacity(total);
    for (instance_id, ann) in lf.annotations.iter().enumerate() {
        let original_area = polygon_area(&ann.to_polygon());
        if original_area.is_nan() || original_area <= 0.0 {
            return Err(PipelineError::DegenerateInstance(instance_id));
        }
        keypoints.extend(ann.vertices().iter().enumerate().map(|(vertex_index, v)| {
            IdentifiedKeypoint {
                point: Point2::new(v.x * w, v.y * h),
                instance_id,
                class_id: ann.class_id(),
                original_area,
                vertex_index,
            }
        }));
    }
    Ok(KeypointSet {
        keypoints,
        image_width: width,
        image_height: height,
    })
}

struct Regrouped {
    class_id: u32,
    original_area: f64,
    vertices: Vec<(usize, Point2)>,
}

/// Rebuilds polygons from post-transform keypoints and filters them against
/// an `out_width x out_height` frame.
///
/// The retention ratio is the clipped area over the full transformed area,
/// both in pixels; an instance is kept iff something of it is visible and
/// the ratio is at least `threshold`.
pub fn keypoints_to_yolo(
    ks: &KeypointSet,
    out_width: u32,
    out_height: u32,
    threshold: f64,
) -> AugmentationOutcome {
    let mut groups: BTreeMap<usize, Regrouped> = BTreeMap::new();
    for k in &ks.keypoints {
        groups
            .entry(k.instance_id)
            .or_insert_with(|| Regrouped {
                class_id: k.class_id,
                original_area: k.original_area,
                vertices: Vec::new(),
            })
            .vertices
            .push((k.vertex_index, k.point));
    }

    let (w, h) = (f64::from(out_width), f64::from(out_height));
    let frame = Rect::frame(w, h).ok();
    let mut outcome = AugmentationOutcome::default();
    for (instance_id, mut group) in groups {
        group.vertices.sort_by_key(|&(i, _)| i);
        let ring: Vec<Point2> = group.vertices.into_iter().map(|(_, p)| p).collect();
        let full_area = signed_area(&ring).abs();
        let clipped = match (Polygon::new(ring), frame) {
            (Ok(poly), Some(frame)) if full_area > 0.0 => clip_to_rect(&poly, &frame),
            _ => None,
        };
        let Some(clipped) = clipped else {
            outcome.dismissed.push(DismissedInstance {
                instance_id,
                retention_ratio: 0.0,
            });
            continue;
        };
        let ratio = (polygon_area(&clipped) / full_area).clamp(0.0, 1.0);
        if ratio < threshold {
            outcome.dismissed.push(DismissedInstance {
                instance_id,
                retention_ratio: ratio,
            });
            continue;
        }
        let normalized = clipped
            .vertices()
            .iter()
            .map(|p| Point2::new((p.x / w).clamp(0.0, 1.0), (p.y / h).clamp(0.0, 1.0)))
            .collect();
        let annotation = PolygonAnnotation::new(group.class_id, normalized)
            .expect("clipped polygon has at least 3 in-frame vertices");
        outcome.kept.push(KeptInstance {
            instance_id,
            retention_ratio: ratio,
            original_area: group.original_area,
            annotation,
        });
    }
    outcome
}

/// Augments one image and its labels with the default bilinear image
/// interpolation and black fill.
pub fn augment_pair(
    image: &ImageBuffer,
    lf: &LabelFile,
    aug: &AffineAugmentation,
    threshold: f64,
) -> Result<(ImageBuffer, AugmentationOutcome), PipelineError> {
    augment_pair_with(image, lf, aug, threshold, Interpolation::Bilinear, 0)
}

pub fn augment_pair_with(
    image: &ImageBuffer,
    lf: &LabelFile,
    aug: &AffineAugmentation,
    threshold: f64,
    interpolation: Interpolation,
    fill: u8,
) -> Result<(ImageBuffer, AugmentationOutcome), PipelineError> {
    let outcome = augment_labels(lf, (image.width(), image.height()), aug, threshold)?;
    let warped = warp_image(image, aug, interpolation, fill);
    Ok((warped, outcome))
}

/// Label-only half of [`augment_pair`] for a source image of `dims`.
pub fn augment_labels(
    lf: &LabelFile,
    dims: (u32, u32),
    aug: &AffineAugmentation,
    threshold: f64,
) -> Result<AugmentationOutcome, PipelineError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(PipelineError::InvalidThreshold(threshold));
    }
    if dims != aug.in_dims() {
        let (expected_w, expected_h) = aug.in_dims();
        return Err(PipelineError::ImageSizeMismatch {
            expected_w,
            expected_h,
            got_w: dims.0,
            got_h: dims.1,
        });
    }
    let ks = yolo_to_keypoints(lf, dims.0, dims.1)?;
    let moved = ks.transformed(aug);
    Ok(keypoints_to_yolo(
        &moved,
        aug.out_width(),
        aug.out_height(),
        threshold,
    ))
}
