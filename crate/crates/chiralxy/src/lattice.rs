//! Triangular lattice geometry on integer indices.
//!
//! A site `(z1, z2)` sits at `eps * (z1 * e1 + z2 * e2)` with `e1 = (1, 0)` and
//! `e2 = (1/2, sqrt(3)/2)`. Sublattice labels, triangles, slices and chains are
//! all computed in integer arithmetic; floating point enters only through
//! [`Region`] membership tests.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Height of a unit triangle.
pub const SQRT3_2: f64 = 0.866_025_403_784_438_6;

pub type Point = [f64; 2];

pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Counterclockwise rotation by a right angle, `v^perp = (-v2, v1)`.
pub fn perp(v: Point) -> Point {
    [-v[1], v[0]]
}

/// `v x w = v1 w2 - v2 w1`.
pub fn cross(v: Point, w: Point) -> f64 {
    v[0] * w[1] - v[1] * w[0]
}

pub fn unit_from_angle(theta: f64) -> Point {
    [theta.cos(), theta.sin()]
}

pub fn normalize(v: Point) -> Result<Point> {
    let n = v[0].hypot(v[1]);
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::Precondition(format!("cannot normalise vector {v:?}")));
    }
    Ok([v[0] / n, v[1] / n])
}

/// Integer coordinates of a lattice site.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticeIndex {
    pub z1: i64,
    pub z2: i64,
}

impl LatticeIndex {
    pub const fn new(z1: i64, z2: i64) -> Self {
        Self { z1, z2 }
    }

    pub fn add(self, o: LatticeIndex) -> Self {
        Self::new(self.z1 + o.z1, self.z2 + o.z2)
    }

    pub fn sub(self, o: LatticeIndex) -> Self {
        Self::new(self.z1 - o.z1, self.z2 - o.z2)
    }

    pub fn neg(self) -> Self {
        Self::new(-self.z1, -self.z2)
    }

    pub fn scale(self, k: i64) -> Self {
        Self::new(self.z1 * k, self.z2 * k)
    }

    /// Rotation by `pi/3` about the origin.
    pub fn rot60(self) -> Self {
        Self::new(-self.z2, self.z1 + self.z2)
    }

    /// Rotation by `2 pi/3` about the origin.
    pub fn rot120(self) -> Self {
        self.rot60().rot60()
    }

    /// Inverse of [`LatticeIndex::rot60`].
    pub fn rot_neg60(self) -> Self {
        Self::new(self.z1 + self.z2, -self.z1)
    }
}

/// Position `eps * (z1 e1 + z2 e2)`.
pub fn position(idx: LatticeIndex, eps: f64) -> Point {
    let (z1, z2) = (idx.z1 as f64, idx.z2 as f64);
    [eps * (z1 + 0.5 * z2), eps * SQRT3_2 * z2]
}

/// Fractional lattice coordinates of a point.
pub fn fractional_index(p: Point, eps: f64) -> Point {
    let z2 = p[1] / (eps * SQRT3_2);
    let z1 = p[0] / eps - 0.5 * z2;
    [z1, z2]
}

/// Sublattice label in `{1, 2, 3}`.
pub fn sublattice_of(idx: LatticeIndex) -> u8 {
    ((idx.z1 - idx.z2).rem_euclid(3) + 1) as u8
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Orientation {
    Up,
    Down,
}

impl Orientation {
    pub fn flip(self) -> Self {
        match self {
            Orientation::Up => Orientation::Down,
            Orientation::Down => Orientation::Up,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Orientation::Up => "up",
            Orientation::Down => "down",
        }
    }
}

/// A unit triangle with vertices ordered by sublattice label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triangle {
    pub i: LatticeIndex,
    pub j: LatticeIndex,
    pub k: LatticeIndex,
    pub orientation: Orientation,
}

impl Triangle {
    /// Up triangle with vertices `(a,b), (a+1,b), (a,b+1)`.
    pub fn up(a: i64, b: i64) -> Self {
        Self::sorted(
            [LatticeIndex::new(a, b), LatticeIndex::new(a + 1, b), LatticeIndex::new(a, b + 1)],
            Orientation::Up,
        )
    }

    /// Down triangle with vertices `(a+1,b), (a,b+1), (a+1,b+1)`.
    pub fn down(a: i64, b: i64) -> Self {
        Self::sorted(
            [LatticeIndex::new(a + 1, b), LatticeIndex::new(a, b + 1), LatticeIndex::new(a + 1, b + 1)],
            Orientation::Down,
        )
    }

    pub fn new(base: LatticeIndex, orientation: Orientation) -> Self {
        match orientation {
            Orientation::Up => Self::up(base.z1, base.z2),
            Orientation::Down => Self::down(base.z1, base.z2),
        }
    }

    fn sorted(v: [LatticeIndex; 3], orientation: Orientation) -> Self {
        let mut out = [v[0]; 3];
        for x in v {
            out[(sublattice_of(x) - 1) as usize] = x;
        }
        Self { i: out[0], j: out[1], k: out[2], orientation }
    }

    /// Recognises three sites forming a unit triangle.
    pub fn from_vertices(v: [LatticeIndex; 3]) -> Option<Self> {
        let s = v[0].z1 + v[0].z2 + v[1].z1 + v[1].z2 + v[2].z1 + v[2].z2;
        let min1 = v.iter().map(|x| x.z1).min()?;
        let min2 = v.iter().map(|x| x.z2).min()?;
        let cand = if s == 3 * (min1 + min2) + 2 {
            Self::up(min1, min2)
        } else if s == 3 * (min1 + min2) + 4 {
            Self::down(min1, min2)
        } else {
            return None;
        };
        let mut a = v;
        let mut b = cand.vertices();
        a.sort();
        b.sort();
        (a == b).then_some(cand)
    }

    pub fn vertices(&self) -> [LatticeIndex; 3] {
        [self.i, self.j, self.k]
    }

    /// Lower-left corner `(a, b)` used by [`Triangle::up`] / [`Triangle::down`].
    pub fn base(&self) -> LatticeIndex {
        let v = self.vertices();
        let min1 = v.iter().map(|x| x.z1).min().unwrap();
        let min2 = v.iter().map(|x| x.z2).min().unwrap();
        LatticeIndex::new(min1, min2)
    }

    pub fn translate(&self, d: LatticeIndex) -> Self {
        Self::new(self.base().add(d), self.orientation)
    }

    /// Checks that the stored vertices form the unit triangle they claim to be.
    pub fn is_valid(&self) -> bool {
        Self::from_vertices(self.vertices()).is_some_and(|t| t == *self)
    }

    pub fn barycenter(&self, eps: f64) -> Point {
        let p = self.vertices().map(|v| position(v, eps));
        [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0]
    }

    pub fn area(eps: f64) -> f64 {
        SQRT3_2 * 0.5 * eps * eps
    }

    /// Enumeration key: rows bottom to top, then left to right, up before down.
    pub fn sort_key(&self) -> (i64, i64, Orientation) {
        let b = self.base();
        (b.z2, b.z1, self.orientation)
    }

    pub fn shares_vertex(&self, other: &Triangle) -> bool {
        self.vertices().iter().any(|v| other.vertices().contains(v))
    }

    /// Point reflection `x -> -x`.
    pub fn reflect(&self) -> Self {
        Self::from_vertices(self.vertices().map(LatticeIndex::neg)).expect("reflection of a unit triangle")
    }

    /// Rotation by `2 pi / 3` about the origin.
    pub fn rot120(&self) -> Self {
        Self::from_vertices(self.vertices().map(LatticeIndex::rot120)).expect("rotation of a unit triangle")
    }
}

impl PartialOrd for Triangle {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Triangle {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

/// Triangles sharing a side with `t`.
pub fn neighbors(t: &Triangle) -> [Triangle; 3] {
    let b = t.base();
    let (a, c) = (b.z1, b.z2);
    match t.orientation {
        Orientation::Up => [Triangle::down(a, c), Triangle::down(a - 1, c), Triangle::down(a, c - 1)],
        Orientation::Down => [Triangle::up(a, c), Triangle::up(a + 1, c), Triangle::up(a, c + 1)],
    }
}

/// Planar sets used as containment tests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Region {
    /// `{|<x-c, nu^perp>| < l/2, |<x-c, nu>| < h/2}`; closed when `closed`.
    Rect { center: Point, nu: Point, length: f64, height: f64, closed: bool },
    /// `{sign * (<x, nu> - offset) > 0}`.
    HalfPlane { nu: Point, offset: f64, sign: f64 },
    /// Closed convex polygon with counterclockwise vertices.
    Polygon { vertices: Vec<Point> },
    Union(Box<Region>, Box<Region>),
    Intersection(Box<Region>, Box<Region>),
    Difference(Box<Region>, Box<Region>),
}

impl Region {
    /// Open rectangle `R^nu_{l,h}(center)`; either side may be infinite.
    pub fn rect_at(center: Point, nu: Point, length: f64, height: f64) -> Result<Self> {
        if !(length > 0.0 && height > 0.0) {
            return Err(Error::Precondition("rectangle sides must be positive".into()));
        }
        Ok(Region::Rect { center, nu: normalize(nu)?, length, height, closed: false })
    }

    pub fn rect(nu: Point, length: f64, height: f64) -> Result<Self> {
        Self::rect_at([0.0, 0.0], nu, length, height)
    }

    /// Open square `Q^nu_rho(center)`.
    pub fn square_at(center: Point, nu: Point, rho: f64) -> Result<Self> {
        Self::rect_at(center, nu, rho, rho)
    }

    pub fn square(nu: Point, rho: f64) -> Result<Self> {
        Self::square_at([0.0, 0.0], nu, rho)
    }

    pub fn half_plane(nu: Point, offset: f64, sign: f64) -> Result<Self> {
        Ok(Region::HalfPlane { nu: normalize(nu)?, offset, sign: sign.signum() })
    }

    /// Closed triangle spanned by three points.
    pub fn triangle(a: Point, b: Point, c: Point) -> Self {
        let v = if cross([b[0] - a[0], b[1] - a[1]], [c[0] - a[0], c[1] - a[1]]) >= 0.0 {
            vec![a, b, c]
        } else {
            vec![a, c, b]
        };
        Region::Polygon { vertices: v }
    }

    /// Topological closure; only rectangles change.
    pub fn closure(&self) -> Self {
        match self {
            Region::Rect { center, nu, length, height, .. } => {
                Region::Rect { center: *center, nu: *nu, length: *length, height: *height, closed: true }
            }
            other => other.clone(),
        }
    }

    pub fn union(self, other: Region) -> Self {
        Region::Union(Box::new(self), Box::new(other))
    }

    pub fn intersect(self, other: Region) -> Self {
        Region::Intersection(Box::new(self), Box::new(other))
    }

    pub fn minus(self, other: Region) -> Self {
        Region::Difference(Box::new(self), Box::new(other))
    }

    pub fn contains(&self, p: Point) -> bool {
        match self {
            Region::Rect { center, nu, length, height, closed } => {
                let d = [p[0] - center[0], p[1] - center[1]];
                let s = dot(d, perp(*nu)).abs();
                let t = dot(d, *nu).abs();
                let scale = [*length, *height].into_iter().filter(|x| x.is_finite()).fold(1.0_f64, f64::max);
                let tol = 1e-12 * scale;
                if *closed {
                    s <= length / 2.0 + tol && t <= height / 2.0 + tol
                } else {
                    s < length / 2.0 - tol && t < height / 2.0 - tol
                }
            }
            Region::HalfPlane { nu, offset, sign } => sign * (dot(p, *nu) - offset) > 1e-12 * offset.abs().max(1.0),
            Region::Polygon { vertices } => {
                let n = vertices.len();
                (0..n).all(|e| {
                    let a = vertices[e];
                    let b = vertices[(e + 1) % n];
                    cross([b[0] - a[0], b[1] - a[1]], [p[0] - a[0], p[1] - a[1]]) >= -1e-12
                })
            }
            Region::Union(a, b) => a.contains(p) || b.contains(p),
            Region::Intersection(a, b) => a.contains(p) && b.contains(p),
            Region::Difference(a, b) => a.contains(p) && !b.contains(p),
        }
    }

    /// Whether the closed triangle lies inside the region.
    pub fn contains_triangle(&self, t: &Triangle, eps: f64) -> bool {
        match self {
            // A closed triangle meets the closed subtrahend iff it is not
            // contained in its open complement; rectangles and polygons are
            // convex, so testing the triangle against them suffices.
            Region::Difference(a, b) => a.contains_triangle(t, eps) && !b.meets_triangle(t, eps),
            Region::Intersection(a, b) => a.contains_triangle(t, eps) && b.contains_triangle(t, eps),
            _ => t.vertices().iter().all(|v| self.contains(position(*v, eps))),
        }
    }

    /// Whether the closed triangle intersects the region (conservative for
    /// composite regions).
    fn meets_triangle(&self, t: &Triangle, eps: f64) -> bool {
        match self {
            Region::Rect { center, nu, length, height, closed } => {
                let p = t.vertices().map(|v| position(v, eps));
                let q = perp(*nu);
                let proj = |axis: Point| {
                    let vals = p.map(|x| dot([x[0] - center[0], x[1] - center[1]], axis));
                    (vals.iter().cloned().fold(f64::INFINITY, f64::min), vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
                };
                let scale = [*length, *height].into_iter().filter(|x| x.is_finite()).fold(1.0_f64, f64::max);
                let tol = if *closed { 1e-12 * scale } else { -1e-12 * scale };
                let overlaps = |(lo, hi): (f64, f64), half: f64| {
                    if *closed {
                        lo <= half + tol && hi >= -half - tol
                    } else {
                        lo < half + tol && hi > -half - tol
                    }
                };
                if !overlaps(proj(q), length / 2.0) || !overlaps(proj(*nu), height / 2.0) {
                    return false;
                }
                // Separating axes of the triangle.
                for e in 0..3 {
                    let a = p[e];
                    let b = p[(e + 1) % 3];
                    let c = p[(e + 2) % 3];
                    let n = perp([b[0] - a[0], b[1] - a[1]]);
                    let side_c = dot([c[0] - a[0], c[1] - a[1]], n);
                    let corners = rect_corners(*center, *nu, *length, *height);
                    let all_out = corners.iter().all(|x| {
                        let s = dot([x[0] - a[0], x[1] - a[1]], n);
                        s * side_c.signum() < -1e-12 * eps * eps
                    });
                    if all_out {
                        return false;
                    }
                }
                true
            }
            Region::Union(a, b) => a.meets_triangle(t, eps) || b.meets_triangle(t, eps),
            _ => t.vertices().iter().any(|v| self.contains(position(*v, eps))),
        }
    }

    /// Axis-aligned bounding box, `None` when unbounded.
    pub fn bbox(&self) -> Option<(Point, Point)> {
        match self {
            Region::Rect { center, nu, length, height, .. } => {
                if !(length.is_finite() && height.is_finite()) {
                    return None;
                }
                let c = rect_corners(*center, *nu, *length, *height);
                Some(points_bbox(&c))
            }
            Region::HalfPlane { .. } => None,
            Region::Polygon { vertices } => Some(points_bbox(vertices)),
            Region::Union(a, b) => {
                let (a0, a1) = a.bbox()?;
                let (b0, b1) = b.bbox()?;
                Some(([a0[0].min(b0[0]), a0[1].min(b0[1])], [a1[0].max(b1[0]), a1[1].max(b1[1])]))
            }
            Region::Intersection(a, b) => match (a.bbox(), b.bbox()) {
                (Some((a0, a1)), Some((b0, b1))) => {
                    Some(([a0[0].max(b0[0]), a0[1].max(b0[1])], [a1[0].min(b1[0]), a1[1].min(b1[1])]))
                }
                (Some(x), None) | (None, Some(x)) => Some(x),
                (None, None) => None,
            },
            Region::Difference(a, _) => a.bbox(),
        }
    }
}

fn rect_corners(center: Point, nu: Point, length: f64, height: f64) -> [Point; 4] {
    let q = perp(nu);
    let mut out = [[0.0; 2]; 4];
    for (n, (a, b)) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)].into_iter().enumerate() {
        out[n] = [
            center[0] + a * 0.5 * length * q[0] + b * 0.5 * height * nu[0],
            center[1] + a * 0.5 * length * q[1] + b * 0.5 * height * nu[1],
        ];
    }
    out
}

fn points_bbox(p: &[Point]) -> (Point, Point) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for x in p {
        for d in 0..2 {
            lo[d] = lo[d].min(x[d]);
            hi[d] = hi[d].max(x[d]);
        }
    }
    (lo, hi)
}

/// Index ranges covering a bounding box, padded by two index units.
pub fn index_box(lo: Point, hi: Point, eps: f64) -> (RangeInclusive<i64>, RangeInclusive<i64>) {
    let corners = [[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]].map(|p| fractional_index(p, eps));
    let min1 = corners.iter().map(|c| c[0]).fold(f64::INFINITY, f64::min).floor() as i64 - 2;
    let max1 = corners.iter().map(|c| c[0]).fold(f64::NEG_INFINITY, f64::max).ceil() as i64 + 2;
    let min2 = corners.iter().map(|c| c[1]).fold(f64::INFINITY, f64::min).floor() as i64 - 2;
    let max2 = corners.iter().map(|c| c[1]).fold(f64::NEG_INFINITY, f64::max).ceil() as i64 + 2;
    (min1..=max1, min2..=max2)
}

/// All triangles whose closed hull lies in `region`, sorted by [`Triangle::sort_key`].
pub fn triangles_in(region: &Region, eps: f64) -> Result<Vec<Triangle>> {
    if !(eps > 0.0) {
        return Err(Error::Precondition("eps must be positive".into()));
    }
    let (lo, hi) = region.bbox().ok_or(Error::Unbounded)?;
    if lo[0] > hi[0] || lo[1] > hi[1] {
        return Ok(Vec::new());
    }
    let (r1, r2) = index_box(lo, hi, eps);
    let rows: Vec<i64> = r2.collect();
    let per_row = par::map_slice(&rows, |&b| {
        let mut out = Vec::new();
        for a in r1.clone() {
            for t in [Triangle::up(a, b), Triangle::down(a, b)] {
                if region.contains_triangle(&t, eps) {
                    out.push(t);
                }
            }
        }
        out
    });
    Ok(per_row.into_iter().flatten().collect())
}

/// Distinct vertices of a triangle list, sorted.
pub fn vertex_set(tris: &[Triangle]) -> Vec<LatticeIndex> {
    let set: BTreeSet<LatticeIndex> = tris.iter().flat_map(|t| t.vertices()).collect();
    set.into_iter().collect()
}

/// Distance from `p` to the boundary of the square `Q^nu_rho` centred at the origin.
pub fn dist_to_square_boundary(p: Point, nu: Point, rho: f64) -> f64 {
    let s = dot(p, perp(nu)).abs();
    let t = dot(p, nu).abs();
    let a = rho / 2.0;
    if s < a && t < a {
        (a - s).min(a - t)
    } else {
        let ds = (s - a).max(0.0);
        let dt = (t - a).max(0.0);
        ds.hypot(dt)
    }
}

/// Sites with `sign * <nu, x> >= 3 eps` within distance `3 eps` of the
/// boundary of `Q^nu_rho`.
pub fn discrete_boundary(nu: Point, rho: f64, eps: f64, sign: f64) -> Result<Vec<LatticeIndex>> {
    if !(eps > 0.0 && 6.0 * eps < rho) {
        return Err(Error::Precondition(format!("need 0 < 6 eps < rho (eps = {eps}, rho = {rho})")));
    }
    let nu = normalize(nu)?;
    let outer = Region::square(nu, rho + 8.0 * eps)?;
    let (lo, hi) = outer.bbox().expect("bounded");
    let (r1, r2) = index_box(lo, hi, eps);
    let tol = 1e-12 * rho;
    let mut out = Vec::new();
    for b in r2 {
        for a in r1.clone() {
            let idx = LatticeIndex::new(a, b);
            let p = position(idx, eps);
            if sign.signum() * dot(nu, p) >= 3.0 * eps - tol && dist_to_square_boundary(p, nu, rho) <= 3.0 * eps + tol {
                out.push(idx);
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Empty(format!("discrete boundary is empty for eps = {eps}, rho = {rho}")));
    }
    out.sort();
    Ok(out)
}

/// One of the six lattice directions `R_{pi/3}^k e1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeDir(pub u8);

impl LatticeDir {
    /// `sign * e_alpha` for `alpha` in `{1, 2, 3}` (with `e3 = e2 - e1`).
    pub fn from_alpha(alpha: u8, sign: i8) -> Self {
        assert!((1..=3).contains(&alpha), "alpha must be 1, 2 or 3");
        let k = alpha - 1;
        LatticeDir(if sign >= 0 { k } else { k + 3 })
    }

    pub fn alpha(self) -> u8 {
        self.0 % 3 + 1
    }

    pub fn rotate_index(self, mut v: LatticeIndex) -> LatticeIndex {
        for _ in 0..self.0 {
            v = v.rot60();
        }
        v
    }

    pub fn step(self) -> LatticeIndex {
        self.rotate_index(LatticeIndex::new(1, 0))
    }

    pub fn vector(self) -> Point {
        position(self.step(), 1.0)
    }

    /// `<x, d^perp> / (sqrt(3)/2)` as an integer.
    pub fn level(self, mut v: LatticeIndex) -> i64 {
        for _ in 0..self.0 {
            v = v.rot_neg60();
        }
        v.z2
    }
}

/// Slice-band level of a site for `e_alpha`.
pub fn level(idx: LatticeIndex, alpha: u8) -> i64 {
    LatticeDir::from_alpha(alpha, 1).level(idx)
}

/// Slice band `Sigma^{alpha, z}` holding a triangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SliceId {
    pub alpha: u8,
    pub z: i64,
}

pub fn slice_of(t: &Triangle, alpha: u8) -> SliceId {
    let z = t.vertices().iter().map(|v| level(*v, alpha)).min().unwrap();
    SliceId { alpha, z }
}

/// Triangles `T_0, ..., T_count` of the half-slice recursion in direction `dir`.
pub fn half_slice_dir(t0: &Triangle, dir: LatticeDir, count: usize) -> Result<Vec<Triangle>> {
    if !t0.is_valid() {
        return Err(Error::InvalidTriangle(format!("{t0:?} is not a unit triangle")));
    }
    let lows: Vec<i64> = t0.vertices().iter().map(|v| dir.level(*v)).collect();
    let band = *lows.iter().min().unwrap();
    let up_shift = dir.rotate_index(LatticeIndex::new(1, 1));
    let down_shift = dir.rotate_index(LatticeIndex::new(2, -1));
    let mut out = Vec::with_capacity(count + 1);
    let mut cur = *t0;
    out.push(cur);
    for _ in 0..count {
        let next = cur.vertices().map(|v| if dir.level(v) == band { v.add(up_shift) } else { v.add(down_shift) });
        cur = Triangle::from_vertices(next).ok_or_else(|| Error::InvalidTriangle("half-slice step left the lattice".into()))?;
        out.push(cur);
    }
    Ok(out)
}

/// Triangles `T_0, ..., T_count` of the half-slice in direction `e_alpha`.
pub fn half_slice(t0: &Triangle, alpha: u8, count: usize) -> Result<Vec<Triangle>> {
    if !(1..=3).contains(&alpha) {
        return Err(Error::Precondition("alpha must be 1, 2 or 3".into()));
    }
    half_slice_dir(t0, LatticeDir::from_alpha(alpha, 1), count)
}

/// The two triangles filling the gap between consecutive half-slice steps.
pub fn gap_triangles(a: &Triangle, b: &Triangle) -> Vec<Triangle> {
    let pts: Vec<LatticeIndex> = a.vertices().into_iter().chain(b.vertices()).collect();
    let mut out = Vec::new();
    for x in 0..pts.len() {
        for y in x + 1..pts.len() {
            for z in y + 1..pts.len() {
                if let Some(t) = Triangle::from_vertices([pts[x], pts[y], pts[z]]) {
                    if t != *a && t != *b && !out.contains(&t) {
                        out.push(t);
                    }
                }
            }
        }
    }
    out.sort();
    out
}

/// Every triangle of the half-slice hull of `steps`, in order along the slice.
pub fn half_slice_hull(steps: &[Triangle]) -> Vec<Triangle> {
    let mut out = Vec::with_capacity(3 * steps.len());
    for (h, t) in steps.iter().enumerate() {
        out.push(*t);
        if let Some(n) = steps.get(h + 1) {
            out.extend(gap_triangles(t, n));
        }
    }
    out
}

/// A chain of up triangles, one per slice band, meeting a line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub triangles: Vec<Triangle>,
    pub nu: Point,
    pub line_offset: f64,
    pub alpha: u8,
    /// Band of the first triangle; `triangles[n]` lies in band `z_start + n`.
    pub z_start: i64,
}

/// Whether the closed triangle meets the line `<x, nu> = offset`.
pub fn meets_line(t: &Triangle, nu: Point, offset: f64, eps: f64) -> bool {
    let d = t.vertices().map(|v| dot(position(v, eps), nu) - offset);
    let tol = 1e-12 * offset.abs().max(eps).max(1.0);
    let lo = d.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    lo <= tol && hi >= -tol
}

impl Chain {
    /// Checks the four chain properties; returns the first failure.
    pub fn check(&self, eps: f64) -> std::result::Result<(), String> {
        for (n, t) in self.triangles.iter().enumerate() {
            let z = self.z_start + n as i64;
            if t.orientation != Orientation::Up || !t.is_valid() {
                return Err(format!("triangle {n} is not an up triangle"));
            }
            if slice_of(t, self.alpha).z != z {
                return Err(format!("triangle {n} is not in band {z}"));
            }
            if !meets_line(t, self.nu, self.line_offset, eps) {
                return Err(format!("triangle {n} misses the line"));
            }
            if let Some(next) = self.triangles.get(n + 1) {
                if !t.shares_vertex(next) {
                    return Err(format!("triangles {n} and {} are disjoint", n + 1));
                }
            }
        }
        Ok(())
    }

    pub fn dump(&self) -> String {
        dump_triangles(&self.triangles)
    }
}

fn up_triangle_at(p: Point, eps: f64) -> Option<Triangle> {
    let f = fractional_index(p, eps);
    let a = f[0].floor();
    let b = f[1].floor();
    if (f[0] - a) + (f[1] - b) <= 1.0 {
        Some(Triangle::up(a as i64, b as i64))
    } else {
        None
    }
}

/// Builds a chain covering the bands in `z_range` along `{<x, nu> = line_offset}`.
pub fn build_chain(nu: Point, line_offset: f64, alpha: u8, z_range: RangeInclusive<i64>, eps: f64) -> Result<Chain> {
    if !(1..=3).contains(&alpha) {
        return Err(Error::Precondition("alpha must be 1, 2 or 3".into()));
    }
    if !(eps > 0.0) || z_range.is_empty() {
        return Err(Error::Precondition("need eps > 0 and a non-empty band range".into()));
    }
    let nu = normalize(nu)?;
    let ea = LatticeDir::from_alpha(alpha, 1).vector();
    if dot(ea, perp(nu)).abs() > 0.5 + 1e-12 {
        return Err(Error::Precondition(format!(
            "|<e_{alpha}, nu^perp>| = {:.6} exceeds 1/2",
            dot(ea, perp(nu)).abs()
        )));
    }
    let base = [line_offset * nu[0], line_offset * nu[1]];
    let dir = perp(nu);
    let h = eps / 8.0;
    let mut seed = None;
    for n in 0..200_000_i64 {
        let s = if n % 2 == 0 { (n / 2) as f64 * h } else { -((n + 1) / 2) as f64 * h };
        let p = [base[0] + s * dir[0], base[1] + s * dir[1]];
        if let Some(t) = up_triangle_at(p, eps) {
            if meets_line(&t, nu, line_offset, eps) {
                seed = Some(t);
                break;
            }
        }
    }
    let seed = seed.ok_or_else(|| Error::Construction { step: "chain seed", reason: "no up triangle meets the line".into() })?;

    // Steps along the two remaining lattice directions, oriented towards band z + 1.
    let others: Vec<LatticeIndex> = (1..=3u8)
        .filter(|b| *b != alpha)
        .map(|b| {
            let s = LatticeDir::from_alpha(b, 1).step();
            if level(s, alpha) > 0 {
                s
            } else {
                s.neg()
            }
        })
        .collect();
    let advance = |t: &Triangle, forward: bool| -> Result<Triangle> {
        for s in &others {
            let d = if forward { *s } else { s.neg() };
            let c = t.translate(d);
            if meets_line(&c, nu, line_offset, eps) {
                return Ok(c);
            }
        }
        Err(Error::Construction { step: "chain step", reason: format!("no successor of {t:?} meets the line") })
    };

    let z0 = slice_of(&seed, alpha).z;
    let (lo, hi) = (*z_range.start(), *z_range.end());
    let mut below = Vec::new();
    let mut cur = seed;
    let mut z = z0;
    while z > lo {
        cur = advance(&cur, false)?;
        z -= 1;
        below.push((z, cur));
    }
    let mut above = Vec::new();
    cur = seed;
    z = z0;
    while z < hi {
        cur = advance(&cur, true)?;
        z += 1;
        above.push((z, cur));
    }
    let mut all: Vec<(i64, Triangle)> = below.into_iter().rev().collect();
    all.push((z0, seed));
    all.extend(above);
    let triangles: Vec<Triangle> = all.into_iter().filter(|(z, _)| z_range.contains(z)).map(|(_, t)| t).collect();
    Ok(Chain { triangles, nu, line_offset, alpha, z_start: lo })
}

/// Line-oriented dump `z1_i z2_i z1_j z2_j z1_k z2_k orient`.
pub fn dump_triangles(tris: &[Triangle]) -> String {
    let mut s = String::new();
    for t in tris {
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {}",
            t.i.z1,
            t.i.z2,
            t.j.z1,
            t.j.z2,
            t.k.z1,
            t.k.z2,
            t.orientation.as_str()
        );
    }
    s
}
