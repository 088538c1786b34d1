//! Flip, rotate and crop augmentations expressed as pixel-space affine maps,
//! plus the textual transform description used by the CLI.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::AffineMap;

/// Smallest accepted `|det|` for a constructed augmentation.
pub const MIN_ABS_DET: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformError {
    #[error("image dimensions must be positive, got {width}x{height}")]
    EmptyFrame { width: u32, height: u32 },
    #[error("crop ({x0}, {y0}, {w}x{h}) does not fit a {frame_w}x{frame_h} frame")]
    InvalidCrop {
        x0: u32,
        y0: u32,
        w: u32,
        h: u32,
        frame_w: u32,
        frame_h: u32,
    },
    #[error("step {index} expects a {expected_w}x{expected_h} input, got {got_w}x{got_h}")]
    DimensionMismatch {
        index: usize,
        expected_w: u32,
        expected_h: u32,
        got_w: u32,
        got_h: u32,
    },
    #[error("cannot compose an empty list of transforms")]
    EmptyComposition,
    #[error("transform is not invertible (det = {0})")]
    NotInvertible(f64),
    #[error("invalid transform spec `{spec}`: {reason}")]
    Parse { spec: String, reason: String },
}

/// An affine map from a `in_width x in_height` source frame to an
/// `out_width x out_height` destination frame, both in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineAugmentation {
    map: AffineMap,
    in_width: u32,
    in_height: u32,
    out_width: u32,
    out_height: u32,
}

impl AffineAugmentation {
    pub fn new(
        map: AffineMap,
        in_dims: (u32, u32),
        out_dims: (u32, u32),
    ) -> Result<Self, TransformError> {
        check_frame(in_dims.0, in_dims.1)?;
        check_frame(out_dims.0, out_dims.1)?;
        let det = map.det();
        if det.is_nan() || det.abs() < MIN_ABS_DET {
            return Err(TransformError::NotInvertible(det));
        }
        Ok(Self {
            map,
            in_width: in_dims.0,
            in_height: in_dims.1,
            out_width: out_dims.0,
            out_height: out_dims.1,
        })
    }

    pub fn identity(width: u32, height: u32) -> Result<Self, TransformError> {
        Self::new(AffineMap::IDENTITY, (width, height), (width, height))
    }

    pub fn map(&self) -> &AffineMap {
        &self.map
    }

    pub fn in_dims(&self) -> (u32, u32) {
        (self.in_width, self.in_height)
    }

    pub fn out_dims(&self) -> (u32, u32) {
        (self.out_width, self.out_height)
    }

    pub fn out_width(&self) -> u32 {
        self.out_width
    }

    pub fn out_height(&self) -> u32 {
        self.out_height
    }

    /// Inverse of the map (destination pixels to source pixels).
    pub fn inverse_map(&self) -> AffineMap {
        self.map
            .inverse()
            .expect("invertibility checked at construction")
    }
}

fn check_frame(width: u32, height: u32) -> Result<(), TransformError> {
    if width == 0 || height == 0 {
        return Err(TransformError::EmptyFrame { width, height });
    }
    Ok(())
}

pub fn make_vflip(w: u32, h: u32) -> Result<AffineAugmentation, TransformError> {
    let m = AffineMap::new(1.0, 0.0, 0.0, 0.0, -1.0, f64::from(h));
    AffineAugmentation::new(m, (w, h), (w, h))
}

pub fn make_hflip(w: u32, h: u32) -> Result<AffineAugmentation, TransformError> {
    let m = AffineMap::new(-1.0, 0.0, f64::from(w), 0.0, 1.0, 0.0);
    AffineAugmentation::new(m, (w, h), (w, h))
}

/// Rotation by `degrees` about the image center, keeping the canvas size.
///
/// Uses the standard rotation matrix in pixel coordinates; with y pointing
/// down, a positive angle turns +x towards +y.
pub fn make_rotate(w: u32, h: u32, degrees: f64) -> Result<AffineAugmentation, TransformError> {
    let (s, c) = exact_sin_cos(degrees);
    let cx = f64::from(w) / 2.0;
    let cy = f64::from(h) / 2.0;
    let m = AffineMap::new(c, -s, cx - c * cx + s * cy, s, c, cy - s * cx - c * cy);
    AffineAugmentation::new(m, (w, h), (w, h))
}

// Quarter turns come out exact so that 90/180/270 rotations map pixel
// centers onto pixel centers.
fn exact_sin_cos(degrees: f64) -> (f64, f64) {
    let r = degrees.rem_euclid(360.0);
    if r == 0.0 {
        (0.0, 1.0)
    } else if r == 90.0 {
        (1.0, 0.0)
    } else if r == 180.0 {
        (0.0, -1.0)
    } else if r == 270.0 {
        (-1.0, 0.0)
    } else {
        r.to_radians().sin_cos()
    }
}

pub fn make_crop(
    w: u32,
    h: u32,
    x0: u32,
    y0: u32,
    cw: u32,
    ch: u32,
) -> Result<AffineAugmentation, TransformError> {
    check_frame(w, h)?;
    let fits = cw > 0
        && ch > 0
        && x0.checked_add(cw).is_some_and(|x1| x1 <= w)
        && y0.checked_add(ch).is_some_and(|y1| y1 <= h);
    if !fits {
        return Err(TransformError::InvalidCrop {
            x0,
            y0,
            w: cw,
            h: ch,
            frame_w: w,
            frame_h: h,
        });
    }
    let m = AffineMap::translation(-f64::from(x0), -f64::from(y0));
    AffineAugmentation::new(m, (w, h), (cw, ch))
}

/// Chains augmentations in application order.
pub fn compose(steps: &[AffineAugmentation]) -> Result<AffineAugmentation, TransformError> {
    let (first, rest) = steps
        .split_first()
        .ok_or(TransformError::EmptyComposition)?;
    let mut acc = *first;
    for (i, step) in rest.iter().enumerate() {
        if step.in_dims() != acc.out_dims() {
            return Err(TransformError::DimensionMismatch {
                index: i + 1,
                expected_w: step.in_width,
                expected_h: step.in_height,
                got_w: acc.out_width,
                got_h: acc.out_height,
            });
        }
        acc = AffineAugmentation::new(acc.map.then(&step.map), acc.in_dims(), step.out_dims())?;
    }
    Ok(acc)
}

/// A fixed value or an inclusive range sampled uniformly per file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Param {
    Fixed(f64),
    Range(f64, f64),
}

impl Param {
    fn sample_f64<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Param::Fixed(v) => v,
            Param::Range(lo, hi) if lo == hi => lo,
            Param::Range(lo, hi) => rng.random_range(lo..=hi),
        }
    }

    fn sample_u32<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        match *self {
            Param::Fixed(v) => v as u32,
            Param::Range(lo, hi) => rng.random_range(lo as u32..=hi as u32),
        }
    }

    fn parse(s: &str, integral: bool) -> Result<Self, String> {
        let num = |t: &str| -> Result<f64, String> {
            let v: f64 = t
                .trim()
                .parse()
                .map_err(|_| format!("`{t}` is not a number"))?;
            if !v.is_finite() {
                return Err(format!("`{t}` is not finite"));
            }
            if integral && (v < 0.0 || v.fract() != 0.0 || v > f64::from(u32::MAX)) {
                return Err(format!("`{t}` is not a non-negative integer"));
            }
            Ok(v)
        };
        // Split on the range marker that is not part of a leading minus sign.
        match s.find("..") {
            Some(i) => {
                let (lo, hi) = (num(&s[..i])?, num(&s[i + 2..])?);
                if lo > hi {
                    return Err(format!("empty range `{s}`"));
                }
                Ok(Param::Range(lo, hi))
            }
            None => Ok(Param::Fixed(num(s)?)),
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Param::Fixed(v) => write!(f, "{v}"),
            Param::Range(lo, hi) => write!(f, "{lo}..{hi}"),
        }
    }
}

/// Textual transform description, e.g. `vflip`, `rotate=30`,
/// `rotate=-30..30`, `crop=10,20,300,200`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TransformSpec {
    VFlip,
    HFlip,
    Rotate {
        degrees: Param,
    },
    Crop {
        x0: Param,
        y0: Param,
        width: Param,
        height: Param,
    },
    Compose(Vec<TransformSpec>),
}

impl TransformSpec {
    /// Builds the concrete augmentation for a `width x height` source,
    /// drawing any ranged parameters from `rng`.
    pub fn resolve<R: Rng + ?Sized>(
        &self,
        width: u32,
        height: u32,
        rng: &mut R,
    ) -> Result<AffineAugmentation, TransformError> {
        match self {
            TransformSpec::VFlip => make_vflip(width, height),
            TransformSpec::HFlip => make_hflip(width, height),
            TransformSpec::Rotate { degrees } => {
                make_rotate(width, height, degrees.sample_f64(rng))
            }
            TransformSpec::Crop {
                x0,
                y0,
                width: cw,
                height: ch,
            } => {
                let (x0, y0) = (x0.sample_u32(rng), y0.sample_u32(rng));
                let (cw, ch) = (cw.sample_u32(rng), ch.sample_u32(rng));
                make_crop(width, height, x0, y0, cw, ch)
            }
            TransformSpec::Compose(steps) => {
                if steps.is_empty() {
                    return Err(TransformError::EmptyComposition);
                }
                let mut resolved = Vec::with_capacity(steps.len());
                let (mut w, mut h) = (width, height);
                for step in steps {
                    let aug = step.resolve(w, h, rng)?;
                    (w, h) = aug.out_dims();
                    resolved.push(aug);
                }
                compose(&resolved)
            }
        }
    }

    /// Parses a chain of specs separated by `;` or whitespace into a single
    /// spec (a bare spec when the chain has one element).
    pub fn parse_chain(text: &str) -> Result<TransformSpec, TransformError> {
        let steps = text
            .split(|c: char| c == ';' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<TransformSpec>, _>>()?;
        TransformSpec::from_steps(steps)
    }

    pub fn from_steps(mut steps: Vec<TransformSpec>) -> Result<TransformSpec, TransformError> {
        match steps.len() {
            0 => Err(TransformError::EmptyComposition),
            1 => Ok(steps.pop().unwrap()),
            _ => Ok(TransformSpec::Compose(steps)),
        }
    }
}

impl FromStr for TransformSpec {
    type Err = TransformError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason: String| TransformError::Parse {
            spec: s.to_string(),
            reason,
        };
        let s_trim = s.trim();
        let (name, args) = match s_trim.split_once('=') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s_trim, None),
        };
        match (name.to_ascii_lowercase().as_str(), args) {
            ("vflip", None) => Ok(TransformSpec::VFlip),
            ("hflip", None) => Ok(TransformSpec::HFlip),
            ("rotate", Some(a)) => Ok(TransformSpec::Rotate {
                degrees: Param::parse(a, false).map_err(err)?,
            }),
            ("crop", Some(a)) => {
                let parts: Vec<&str> = a.split(',').collect();
                if parts.len() != 4 {
                    return Err(err(format!(
                        "crop takes x0,y0,w,h, got {} values",
                        parts.len()
                    )));
                }
                let p = |i: usize| Param::parse(parts[i], true).map_err(err);
                Ok(TransformSpec::Crop {
                    x0: p(0)?,
                    y0: p(1)?,
                    width: p(2)?,
                    height: p(3)?,
                })
            }
            ("vflip" | "hflip", Some(_)) => Err(err("takes no arguments".into())),
            ("rotate" | "crop", None) => Err(err("missing `=` arguments".into())),
            _ => Err(err("unknown transform".into())),
        }
    }
}

impl fmt::Display for TransformSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransformSpec::VFlip => f.write_str("vflip"),
            TransformSpec::HFlip => f.write_str("hflip"),
            TransformSpec::Rotate { degrees } => write!(f, "rotate={degrees}"),
            TransformSpec::Crop {
                x0,
                y0,
                width,
                height,
            } => write!(f, "crop={x0},{y0},{width},{height}"),
            TransformSpec::Compose(steps) => {
                for (i, s) in steps.iter().enumerate() {
                    if i > 0 {
                        f.write_str(";")?;
                    }
                    write!(f, "{s}")?;
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: Point2, b: Point2, tol: f64) -> bool {
        (a.x - b.x).abs() <= tol && (a.y - b.y).abs() <= tol
    }

    fn assert_identity(m: &AffineMap, tol: f64) {
        let id = AffineMap::IDENTITY;
        for (x, y) in [
            (m.a, id.a),
            (m.b, id.b),
            (m.c, id.c),
            (m.d, id.d),
            (m.tx, id.tx),
            (m.ty, id.ty),
        ] {
            assert!((x - y).abs() <= tol, "{m:?}");
        }
    }

    #[test]
    fn vflip() {
        let a = make_vflip(100, 100).unwrap();
        assert_eq!(
            a.map().apply(Point2::new(10.0, 30.0)),
            Point2::new(10.0, 70.0)
        );
        assert_eq!(
            a.map().apply(Point2::new(50.0, 50.0)),
            Point2::new(50.0, 50.0)
        );
        assert_eq!(a.map().det(), -1.0);
        assert_eq!(a.out_dims(), (100, 100));
    }

    #[test]
    fn hflip() {
        let a = make_hflip(100, 40).unwrap();
        assert_eq!(
            a.map().apply(Point2::new(30.0, 10.0)),
            Point2::new(70.0, 10.0)
        );
        assert_identity(compose(&[a, a]).unwrap().map(), 1e-12);
        assert_eq!(a.map().det().abs(), 1.0);
    }

    #[test]
    fn rotate() {
        let a = make_rotate(100, 100, 90.0).unwrap();
        assert_eq!(
            a.map().apply(Point2::new(75.0, 50.0)),
            Point2::new(50.0, 75.0)
        );
        assert_eq!(
            *make_rotate(100, 100, 0.0).unwrap().map(),
            AffineMap::IDENTITY
        );
        assert_identity(make_rotate(100, 100, 360.0).unwrap().map(), 1e-9);
        let r = make_rotate(64, 48, 30.0).unwrap();
        assert!((r.map().det() - 1.0).abs() < 1e-12);
        let c = Point2::new(32.0, 24.0);
        assert!(close(r.map().apply(c), c, 1e-12));
    }

    #[test]
    fn crop() {
        let a = make_crop(200, 200, 10, 20, 50, 50).unwrap();
        assert_eq!(
            a.map().apply(Point2::new(10.0, 20.0)),
            Point2::new(0.0, 0.0)
        );
        assert_eq!(a.map().det(), 1.0);

        let full = make_crop(200, 100, 0, 0, 200, 100).unwrap();
        assert_eq!(*full.map(), AffineMap::IDENTITY);
        assert_eq!(full.out_dims(), (200, 100));

        let c = make_crop(200, 200, 50, 50, 100, 100).unwrap();
        assert_eq!(
            c.map().apply(Point2::new(150.0, 150.0)),
            Point2::new(100.0, 100.0)
        );
        assert_eq!(c.out_dims(), (100, 100));

        assert!(matches!(
            make_crop(100, 100, 60, 0, 50, 10),
            Err(TransformError::InvalidCrop { .. })
        ));
        assert!(make_crop(100, 100, 0, 0, 0, 10).is_err());
        assert!(make_crop(100, 100, u32::MAX, 0, 2, 10).is_err());
    }

    #[test]
    fn compose_rules() {
        let v = make_vflip(64, 64).unwrap();
        assert_identity(compose(&[v, v]).unwrap().map(), 0.0);
        assert_eq!(compose(&[]), Err(TransformError::EmptyComposition));

        let crop = make_crop(64, 64, 8, 8, 32, 16).unwrap();
        assert!(matches!(
            compose(&[crop, v]),
            Err(TransformError::DimensionMismatch { index: 1, .. })
        ));
    }

    #[test]
    fn compose_matches_sequential_application() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let crop = make_crop(300, 200, 40, 30, 180, 120).unwrap();
        let rot = make_rotate(180, 120, 37.5).unwrap();
        let hf = make_hflip(180, 120).unwrap();
        let vf = make_vflip(180, 120).unwrap();
        let seq = [crop, rot, hf, vf];
        let composed = compose(&seq).unwrap();
        assert_eq!(composed.out_dims(), (180, 120));
        let mut max_err: f64 = 0.0;
        for _ in 0..1000 {
            let p = Point2::new(
                rng.random_range(-50.0..350.0),
                rng.random_range(-50.0..250.0),
            );
            let stepwise = seq.iter().fold(p, |q, a| a.map().apply(q));
            let direct = composed.map().apply(p);
            max_err = max_err.max(
                (stepwise.x - direct.x)
                    .abs()
                    .max((stepwise.y - direct.y).abs()),
            );
        }
        assert!(max_err < 1e-9, "{max_err}");
    }

    #[test]
    fn rejects_singular_maps() {
        let m = AffineMap::new(1.0, 1.0, 0.0, 1.0, 1.0, 0.0);
        assert!(matches!(
            AffineAugmentation::new(m, (10, 10), (10, 10)),
            Err(TransformError::NotInvertible(_))
        ));
        assert!(AffineAugmentation::identity(0, 5).is_err());
    }

    #[test]
    fn parse_specs() {
        assert_eq!(
            "vflip".parse::<TransformSpec>().unwrap(),
            TransformSpec::VFlip
        );
        assert_eq!(
            "hflip".parse::<TransformSpec>().unwrap(),
            TransformSpec::HFlip
        );
        assert_eq!(
            "rotate=30".parse::<TransformSpec>().unwrap(),
            TransformSpec::Rotate {
                degrees: Param::Fixed(30.0)
            }
        );
        assert_eq!(
            "rotate=-30..30".parse::<TransformSpec>().unwrap(),
            TransformSpec::Rotate {
                degrees: Param::Range(-30.0, 30.0)
            }
        );
        assert_eq!(
            "crop=10,20,300,200".parse::<TransformSpec>().unwrap(),
            TransformSpec::Crop {
                x0: Param::Fixed(10.0),
                y0: Param::Fixed(20.0),
                width: Param::Fixed(300.0),
                height: Param::Fixed(200.0),
            }
        );
        for bad in [
            "",
            "vflip=1",
            "rotate",
            "rotate=abc",
            "crop=1,2,3",
            "crop=1.5,0,2,2",
            "crop=-1,0,2,2",
            "shear=3",
            "rotate=5..1",
        ] {
            assert!(bad.parse::<TransformSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn chain_parse_and_display_round_trip() {
        let spec = TransformSpec::parse_chain("crop=0..10,0,50,50; rotate=-30..30 vflip").unwrap();
        let TransformSpec::Compose(steps) = &spec else {
            panic!("expected compose");
        };
        assert_eq!(steps.len(), 3);
        assert_eq!(TransformSpec::parse_chain(&spec.to_string()).unwrap(), spec);
        assert!(TransformSpec::parse_chain("  ").is_err());
    }

    #[test]
    fn resolve_ranges_within_bounds_and_deterministic() {
        let spec: TransformSpec = "rotate=-30..30".parse().unwrap();
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let x = spec.resolve(64, 64, &mut a).unwrap();
            let y = spec.resolve(64, 64, &mut b).unwrap();
            assert_eq!(x, y);
            let angle = x.map().c.atan2(x.map().a).to_degrees();
            assert!((-30.0..=30.0).contains(&angle));
        }
    }

    #[test]
    fn resolve_compose_tracks_dimensions() {
        let spec = TransformSpec::parse_chain("crop=10,10,50,40;rotate=90;hflip").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let aug = spec.resolve(100, 80, &mut rng).unwrap();
        assert_eq!(aug.in_dims(), (100, 80));
        assert_eq!(aug.out_dims(), (50, 40));
        let bad = TransformSpec::parse_chain("crop=0,0,50,40;crop=0,0,60,40").unwrap();
        assert!(matches!(
            bad.resolve(100, 80, &mut rng),
            Err(TransformError::InvalidCrop { .. })
        ));
    }
}
