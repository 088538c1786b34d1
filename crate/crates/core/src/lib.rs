//! Geometric augmentation of polygon instance-segmentation labels.
//!
//! Polygons are augmented by treating every vertex as an identified keypoint:
//! vertices are transformed together with the image, regrouped into their
//! instances, clipped to the output frame and filtered by how much of each
//! instance remains visible. A mask-based reference path in [`raster`]
//! serves as a correctness oracle and as the baseline for [`bench`].

pub mod alloc;
pub mod batch;
pub mod bench;
pub mod geometry;
pub mod label_io;
pub mod pipeline;
pub mod raster;
pub mod transforms;

pub use geometry::{AffineMap, Point2, Polygon, Rect};
pub use label_io::{LabelFile, PolygonAnnotation};
pub use pipeline::{augment_pair, AugmentationOutcome};
pub use raster::{BinaryMask, ImageBuffer, Interpolation};
pub use transforms::{AffineAugmentation, TransformSpec};
