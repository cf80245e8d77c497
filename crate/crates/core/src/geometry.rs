//! Planar primitives shared by the rest of the crate: points, polylines,
//! convex hulls and the handful of queries the navigator and planner need.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance (meters) used only to break ties on polygon boundaries.
pub const CONTAINMENT_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate hull: {0}")]
    DegenerateHull(&'static str),
    #[error("a polyline needs at least two distinct points")]
    ShortPolyline,
    #[error("non-finite coordinate ({0}, {1})")]
    NonFinite(f64, f64),
    #[error("centroid of an empty point set")]
    EmptyPointSet,
    #[error("a polyline cannot be split into zero pieces")]
    ZeroPieces,
}

pub type Result<T> = std::result::Result<T, GeometryError>;

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

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (*self - *other).norm()
    }

    pub fn dot(&self, other: &Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 2D cross product.
    pub fn cross(&self, other: &Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn lerp(&self, other: &Point2, t: f64) -> Point2 {
        Point2::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }

    /// Unit vector at angle `theta` from the x axis.
    pub fn from_heading(theta: f64) -> Point2 {
        Point2::new(theta.cos(), theta.sin())
    }

    /// Bearing of `other` seen from `self`.
    pub fn bearing_to(&self, other: &Point2) -> f64 {
        (other.y - self.y).atan2(other.x - self.x)
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

/// Orientation of the triple (a, b, c): positive for a left turn.
pub fn orient(a: &Point2, b: &Point2, c: &Point2) -> f64 {
    (*b - *a).cross(&(*c - *a))
}

/// Euclidean distance from `p` to the closed segment `ab`, together with the
/// closest point on that segment.
pub fn closest_point_on_segment(p: &Point2, a: &Point2, b: &Point2) -> (Point2, f64) {
    let ab = *b - *a;
    let len2 = ab.dot(&ab);
    if len2 == 0.0 {
        return (*a, p.distance(a));
    }
    let t = ((*p - *a).dot(&ab) / len2).clamp(0.0, 1.0);
    let q = a.lerp(b, t);
    (q, p.distance(&q))
}

pub fn point_segment_distance(p: &Point2, a: &Point2, b: &Point2) -> f64 {
    closest_point_on_segment(p, a, b).1
}

/// An ordered chain of at least two points with no zero-length edges.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Polyline {
    points: Vec<Point2>,
}

impl Polyline {
    /// Builds a polyline, dropping consecutive duplicate points.
    pub fn new(points: Vec<Point2>) -> Result<Self> {
        let mut clean: Vec<Point2> = Vec::with_capacity(points.len());
        for p in points {
            if !p.is_finite() {
                return Err(GeometryError::NonFinite(p.x, p.y));
            }
            if clean.last() != Some(&p) {
                clean.push(p);
            }
        }
        if clean.len() < 2 {
            return Err(GeometryError::ShortPolyline);
        }
        Ok(Self { points: clean })
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point2> {
        self.points
    }

    pub fn first(&self) -> Point2 {
        self.points[0]
    }

    pub fn last(&self) -> Point2 {
        self.points[self.points.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        self.points.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn length(&self) -> f64 {
        polyline_length(self)
    }

    /// Cumulative arc length at every vertex; first entry is 0.
    pub fn cumulative_lengths(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.points.len());
        out.push(0.0);
        for (a, b) in self.edges() {
            acc += a.distance(&b);
            out.push(acc);
        }
        out
    }

    /// Point at arc length `s`, clamped to the ends of the line.
    pub fn point_at(&self, s: f64) -> Point2 {
        let cum = self.cumulative_lengths();
        point_at_with(&self.points, &cum, s)
    }

    /// Closest point on the line and the arc length at which it lies.
    pub fn project(&self, p: &Point2) -> Projection {
        let mut best = Projection {
            point: self.points[0],
            distance: f64::INFINITY,
            arc_length: 0.0,
            edge: 0,
        };
        let mut acc = 0.0;
        for (i, (a, b)) in self.edges().enumerate() {
            let (q, d) = closest_point_on_segment(p, &a, &b);
            if d < best.distance {
                best = Projection {
                    point: q,
                    distance: d,
                    arc_length: acc + a.distance(&q),
                    edge: i,
                };
            }
            acc += a.distance(&b);
        }
        best
    }

    /// `n` points spaced evenly by arc length, including both ends.
    pub fn resample(&self, n: usize) -> Vec<Point2> {
        let cum = self.cumulative_lengths();
        let total = *cum.last().unwrap_or(&0.0);
        match n {
            0 => Vec::new(),
            1 => vec![self.first()],
            _ => (0..n)
                .map(|i| {
                    if i == n - 1 {
                        self.last()
                    } else {
                        point_at_with(&self.points, &cum, total * i as f64 / (n - 1) as f64)
                    }
                })
                .collect(),
        }
    }
}

impl<'de> Deserialize<'de> for Polyline {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let points = Vec::<Point2>::deserialize(d)?;
        Polyline::new(points).map_err(serde::de::Error::custom)
    }
}

/// Result of projecting a point onto a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub point: Point2,
    pub distance: f64,
    pub arc_length: f64,
    pub edge: usize,
}

fn point_at_with(points: &[Point2], cum: &[f64], s: f64) -> Point2 {
    if s <= 0.0 {
        return points[0];
    }
    let total = cum[cum.len() - 1];
    if s >= total {
        return points[points.len() - 1];
    }
    // first vertex whose cumulative length is >= s
    let i = cum.partition_point(|&c| c < s).max(1);
    let seg = cum[i] - cum[i - 1];
    let t = if seg > 0.0 { (s - cum[i - 1]) / seg } else { 0.0 };
    points[i - 1].lerp(&points[i], t)
}

/// Convex polygon with counter-clockwise vertices and no collinear triples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexPolygon {
    vertices: Vec<Point2>,
}

impl ConvexPolygon {
    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        let twice: f64 = (0..n)
            .map(|i| self.vertices[i].cross(&self.vertices[(i + 1) % n]))
            .sum();
        0.5 * twice
    }

    /// Mean of the hull vertices.
    pub fn vertex_centroid(&self) -> Point2 {
        centroid(&self.vertices).expect("hull has vertices")
    }

    pub fn contains(&self, p: &Point2) -> bool {
        point_in_polygon(p, self)
    }
}

/// Exact convex hull by Andrew's monotone chain.
///
/// Orientation tests use the raw sign of the cross product; collinear
/// boundary points are dropped. Inputs with fewer than three distinct points
/// or with all points on one line are rejected because callers need a region
/// with positive area.
pub fn convex_hull(points: &[Point2]) -> Result<ConvexPolygon> {
    if let Some(p) = points.iter().find(|p| !p.is_finite()) {
        return Err(GeometryError::NonFinite(p.x, p.y));
    }
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return Err(GeometryError::DegenerateHull("fewer than three distinct points"));
    }

    let mut lower: Vec<Point2> = Vec::with_capacity(pts.len());
    for p in &pts {
        while lower.len() >= 2 && orient(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<Point2> = Vec::with_capacity(pts.len());
    for p in pts.iter().rev() {
        while upper.len() >= 2 && orient(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);

    if lower.len() < 3 {
        return Err(GeometryError::DegenerateHull("all points are collinear"));
    }
    Ok(ConvexPolygon { vertices: lower })
}

/// Closed-region containment: boundary points count as inside.
pub fn point_in_polygon(p: &Point2, poly: &ConvexPolygon) -> bool {
    let v = &poly.vertices;
    let n = v.len();
    (0..n).all(|i| {
        let a = v[i];
        let b = v[(i + 1) % n];
        let edge = b - a;
        // signed distance of p to the edge line, positive on the inner side
        edge.cross(&(*p - a)) / edge.norm() >= -CONTAINMENT_EPS
    })
}

pub fn closest_point_on_polyline(p: &Point2, line: &Polyline) -> (Point2, f64) {
    let proj = line.project(p);
    (proj.point, proj.distance)
}

pub fn polyline_length(line: &Polyline) -> f64 {
    line.edges().map(|(a, b)| a.distance(&b)).sum()
}

/// Arithmetic mean of a non-empty point set.
pub fn centroid(points: &[Point2]) -> Result<Point2> {
    if points.is_empty() {
        return Err(GeometryError::EmptyPointSet);
    }
    let n = points.len() as f64;
    let sum = points.iter().fold(Point2::default(), |acc, p| acc + *p);
    Ok(Point2::new(sum.x / n, sum.y / n))
}

/// Cuts `line` into `n` contiguous pieces of equal arc length. Neighbouring
/// pieces share their cut point exactly.
pub fn split_polyline(line: &Polyline, n: usize) -> Result<Vec<Polyline>> {
    if n == 0 {
        return Err(GeometryError::ZeroPieces);
    }
    if n == 1 {
        return Ok(vec![line.clone()]);
    }
    let pts = line.points();
    let cum = line.cumulative_lengths();
    let total = cum[cum.len() - 1];
    // interior vertices closer than this to a cut are folded into the cut
    let snap = 1e-9 * total.max(1.0);

    let cuts: Vec<Point2> = (0..=n)
        .map(|k| match k {
            0 => line.first(),
            k if k == n => line.last(),
            k => point_at_with(pts, &cum, total * k as f64 / n as f64),
        })
        .collect();

    let mut pieces = Vec::with_capacity(n);
    for k in 0..n {
        let s0 = total * k as f64 / n as f64;
        let s1 = total * (k + 1) as f64 / n as f64;
        let mut piece = vec![cuts[k]];
        for (i, p) in pts.iter().enumerate() {
            if cum[i] > s0 + snap && cum[i] < s1 - snap {
                piece.push(*p);
            }
        }
        piece.push(cuts[k + 1]);
        pieces.push(Polyline::new(piece)?);
    }
    Ok(pieces)
}

/// Hull of the corridor of half-width `half_width` around `segment`: every
/// edge contributes its four offset corners.
pub fn corridor_hull(segment: &Polyline, half_width: f64) -> Result<ConvexPolygon> {
    let mut corners = Vec::with_capacity(4 * segment.len());
    for (a, b) in segment.edges() {
        let d = b - a;
        let len = d.norm();
        let normal = Point2::new(-d.y / len, d.x / len) * half_width;
        corners.extend([a + normal, a - normal, b + normal, b - normal]);
    }
    convex_hull(&corners)
}
