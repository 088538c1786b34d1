//! Planar geometry kernel: polygon areas, affine maps, rectangle clipping and
//! bounding boxes.
//!
//! Everything here works in `f64` and is unit-agnostic; callers decide whether
//! coordinates are pixels or normalized image fractions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when classifying a vertex as lying on a clip edge.
pub const EDGE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("non-finite coordinate at vertex {0}")]
    NonFinite(usize),
    #[error("degenerate rectangle ({x0}, {y0})..({x1}, {y1})")]
    DegenerateRect { x0: f64, y0: f64, x1: f64, y1: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// A simple ring of at least three finite vertices. The ring is implicitly
/// closed; the first vertex is not repeated at the end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    vertices: Vec<Point2>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point2>) -> Result<Self, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::TooFewVertices(vertices.len()));
        }
        if let Some(i) = vertices.iter().position(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite(i));
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn into_vertices(self) -> Vec<Point2> {
        self.vertices
    }

    pub fn reversed(&self) -> Self {
        let mut vertices = self.vertices.clone();
        vertices.reverse();
        Self { vertices }
    }

    /// Even-odd point containment.
    pub fn contains(&self, p: Point2) -> bool {
        let v = &self.vertices;
        let mut inside = false;
        let mut j = v.len() - 1;
        for i in 0..v.len() {
            let (a, b) = (v[i], v[j]);
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }
}

/// Signed shoelace sum over an implicitly closed ring. Positive for
/// counter-clockwise rings in a y-up frame.
pub fn signed_area(vertices: &[Point2]) -> f64 {
    let n = vertices.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    0.5 * acc
}

pub fn polygon_area(p: &Polygon) -> f64 {
    signed_area(&p.vertices).abs()
}

/// Row-major 2x3 affine matrix `[[a, b, tx], [c, d, ty]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub a: f64,
    pub b: f64,
    pub tx: f64,
    pub c: f64,
    pub d: f64,
    pub ty: f64,
}

impl AffineMap {
    pub const IDENTITY: AffineMap = AffineMap {
        a: 1.0,
        b: 0.0,
        tx: 0.0,
        c: 0.0,
        d: 1.0,
        ty: 0.0,
    };

    pub const fn new(a: f64, b: f64, tx: f64, c: f64, d: f64, ty: f64) -> Self {
        Self { a, b, tx, c, d, ty }
    }

    pub const fn translation(tx: f64, ty: f64) -> Self {
        Self::new(1.0, 0.0, tx, 0.0, 1.0, ty)
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    #[inline]
    pub fn apply(&self, p: Point2) -> Point2 {
        Point2 {
            x: self.a * p.x + self.b * p.y + self.tx,
            y: self.c * p.x + self.d * p.y + self.ty,
        }
    }

    /// The map that applies `self` first and `next` second.
    pub fn then(&self, next: &AffineMap) -> AffineMap {
        AffineMap {
            a: next.a * self.a + next.b * self.c,
            b: next.a * self.b + next.b * self.d,
            tx: next.a * self.tx + next.b * self.ty + next.tx,
            c: next.c * self.a + next.d * self.c,
            d: next.c * self.b + next.d * self.d,
            ty: next.c * self.tx + next.d * self.ty + next.ty,
        }
    }

    /// Returns `None` when the linear part is singular.
    pub fn inverse(&self) -> Option<AffineMap> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let a = self.d / det;
        let b = -self.b / det;
        let c = -self.c / det;
        let d = self.a / det;
        Some(AffineMap {
            a,
            b,
            tx: -(a * self.tx + b * self.ty),
            c,
            d,
            ty: -(c * self.tx + d * self.ty),
        })
    }
}

impl Default for AffineMap {
    fn default() -> Self {
        Self::IDENTITY
    }
}

pub fn apply_affine(m: &AffineMap, p: &Polygon) -> Polygon {
    Polygon {
        vertices: p.vertices.iter().map(|&v| m.apply(v)).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, GeometryError> {
        let ok = [x0, y0, x1, y1].iter().all(|v| v.is_finite()) && x0 < x1 && y0 < y1;
        if !ok {
            return Err(GeometryError::DegenerateRect { x0, y0, x1, y1 });
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    /// The frame `[0, width] x [0, height]`.
    pub fn frame(width: f64, height: f64) -> Result<Self, GeometryError> {
        Self::new(0.0, 0.0, width, height)
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }
    pub fn y0(&self) -> f64 {
        self.y0
    }
    pub fn x1(&self) -> f64 {
        self.x1
    }
    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }
}

#[derive(Clone, Copy)]
enum Edge {
    Left(f64),
    Right(f64),
    Top(f64),
    Bottom(f64),
}

impl Edge {
    fn inside(self, p: Point2) -> bool {
        match self {
            Edge::Left(x) => p.x >= x - EDGE_EPS,
            Edge::Right(x) => p.x <= x + EDGE_EPS,
            Edge::Top(y) => p.y >= y - EDGE_EPS,
            Edge::Bottom(y) => p.y <= y + EDGE_EPS,
        }
    }

    // `a` inside, `b` strictly outside (or the reverse), so the denominator
    // is never zero. The clipped coordinate is pinned to the edge exactly.
    fn intersect(self, a: Point2, b: Point2) -> Point2 {
        match self {
            Edge::Left(x) | Edge::Right(x) => {
                let t = (x - a.x) / (b.x - a.x);
                Point2::new(x, a.y + t * (b.y - a.y))
            }
            Edge::Top(y) | Edge::Bottom(y) => {
                let t = (y - a.y) / (b.y - a.y);
                Point2::new(a.x + t * (b.x - a.x), y)
            }
        }
    }
}

fn clip_against(input: &[Point2], edge: Edge, out: &mut Vec<Point2>) {
    out.clear();
    let Some(&last) = input.last() else {
        return;
    };
    let mut prev = last;
    let mut prev_in = edge.inside(prev);
    for &cur in input {
        let cur_in = edge.inside(cur);
        if cur_in {
            if !prev_in {
                let entry = edge.intersect(cur, prev);
                if entry != cur {
                    out.push(entry);
                }
            }
            out.push(cur);
        } else if prev_in {
            let exit = edge.intersect(prev, cur);
            if out.last() != Some(&exit) {
                out.push(exit);
            }
        }
        prev = cur;
        prev_in = cur_in;
    }
}

/// Sutherland-Hodgman clip of `p` against `r`.
///
/// Returns `None` when nothing of positive area survives. Vertices already
/// inside `r` are passed through untouched, so clipping is idempotent.
pub fn clip_to_rect(p: &Polygon, r: &Rect) -> Option<Polygon> {
    let mut current = p.vertices.clone();
    let mut scratch = Vec::with_capacity(current.len() + 4);
    for edge in [
        Edge::Left(r.x0),
        Edge::Right(r.x1),
        Edge::Top(r.y0),
        Edge::Bottom(r.y1),
    ] {
        clip_against(&current, edge, &mut scratch);
        std::mem::swap(&mut current, &mut scratch);
        if current.len() < 3 {
            return None;
        }
    }
    // Zero-width slivers along an edge come out with rounding-level area.
    if signed_area(&current).abs() <= r.area() * 1e-12 {
        return None;
    }
    Some(Polygon { vertices: current })
}

/// Tight axis-aligned bounds, or `None` if the polygon has zero extent on
/// either axis.
pub fn polygon_bbox(p: &Polygon) -> Option<Rect> {
    let first = p.vertices[0];
    let (mut x0, mut y0, mut x1, mut y1) = (first.x, first.y, first.x, first.y);
    for v in &p.vertices[1..] {
        x0 = x0.min(v.x);
        y0 = y0.min(v.y);
        x1 = x1.max(v.x);
        y1 = y1.max(v.y);
    }
    Rect::new(x0, y0, x1, y1).ok()
}
