//! Spin fields, energy and chirality.
//!
//! A field stores one lifted angle per site. Angles are never reduced modulo
//! `2 pi`; only the unit-vector read-out `(cos theta, sin theta)` forgets the lift.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{self, dot, neighbors, position, sublattice_of, LatticeIndex, Point, Region, Triangle};
use crate::par;

/// `2 / (3 sqrt 3)`, the chirality normalisation.
pub const CHI_NORM: f64 = 0.384_900_179_459_750_5;

/// Sign of the ground-state chirality.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroundStateKind {
    Pos,
    Neg,
}

impl GroundStateKind {
    pub fn opposite(self) -> Self {
        match self {
            GroundStateKind::Pos => GroundStateKind::Neg,
            GroundStateKind::Neg => GroundStateKind::Pos,
        }
    }

    /// `Pos` for `s > 0`, `Neg` otherwise.
    pub fn from_sign(s: f64) -> Self {
        if s > 0.0 {
            GroundStateKind::Pos
        } else {
            GroundStateKind::Neg
        }
    }
}

/// Ground-state angle at a site: `(0, 2pi/3, 4pi/3)` on sublattices `(1, 2, 3)`
/// for `Pos`, `(0, 4pi/3, 2pi/3)` for `Neg`.
pub fn ground_angle(kind: GroundStateKind, idx: LatticeIndex) -> f64 {
    let l = sublattice_of(idx);
    let step = match (kind, l) {
        (_, 1) => 0.0,
        (GroundStateKind::Pos, 2) | (GroundStateKind::Neg, 3) => 1.0,
        _ => 2.0,
    };
    step * 2.0 * PI / 3.0
}

/// Lifted angles on a finite set of sites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinField {
    pub eps: f64,
    pub angles: BTreeMap<LatticeIndex, f64>,
}

impl SpinField {
    pub fn new(eps: f64) -> Self {
        Self { eps, angles: BTreeMap::new() }
    }

    pub fn from_fn<I, F>(eps: f64, domain: I, f: F) -> Self
    where
        I: IntoIterator<Item = LatticeIndex>,
        F: Fn(LatticeIndex) -> f64,
    {
        Self { eps, angles: domain.into_iter().map(|x| (x, f(x))).collect() }
    }

    pub fn angle(&self, idx: LatticeIndex) -> Result<f64> {
        self.angles.get(&idx).copied().ok_or(Error::MissingSite(idx.z1, idx.z2))
    }

    pub fn set(&mut self, idx: LatticeIndex, theta: f64) {
        self.angles.insert(idx, theta);
    }

    pub fn contains(&self, idx: LatticeIndex) -> bool {
        self.angles.contains_key(&idx)
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    /// Unit vector at a site.
    pub fn spin(&self, idx: LatticeIndex) -> Result<Point> {
        Ok(lattice::unit_from_angle(self.angle(idx)?))
    }

    pub fn triangle_angles(&self, t: &Triangle) -> Result<[f64; 3]> {
        Ok([self.angle(t.i)?, self.angle(t.j)?, self.angle(t.k)?])
    }

    /// Adds `c` to every angle.
    pub fn rotated_globally(&self, c: f64) -> Self {
        Self { eps: self.eps, angles: self.angles.iter().map(|(k, v)| (*k, v + c)).collect() }
    }

    /// `theta -> -theta`.
    pub fn conjugated(&self) -> Self {
        Self { eps: self.eps, angles: self.angles.iter().map(|(k, v)| (*k, -v)).collect() }
    }

    /// Point reflection of the sites, `u'(-x) = u(x)`.
    pub fn reflected(&self) -> Self {
        Self { eps: self.eps, angles: self.angles.iter().map(|(k, v)| (k.neg(), *v)).collect() }
    }

    /// Rotation of the sites by `2 pi / 3`, `u'(Rx) = u(x)`.
    pub fn rotated120(&self) -> Self {
        Self { eps: self.eps, angles: self.angles.iter().map(|(k, v)| (k.rot120(), *v)).collect() }
    }

    /// Shift of the sites by a lattice vector.
    pub fn translated(&self, d: LatticeIndex) -> Self {
        Self { eps: self.eps, angles: self.angles.iter().map(|(k, v)| (k.add(d), *v)).collect() }
    }

    /// Text form: a `# eps <value>` header and one `z1 z2 theta` line per site.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(32 * self.angles.len() + 32);
        let _ = writeln!(s, "# eps {:e}", self.eps);
        for (k, v) in &self.angles {
            let _ = writeln!(s, "{} {} {:e}", k.z1, k.z2, v);
        }
        s
    }

    /// Parses [`SpinField::to_text`] output; `eps` overrides or supplies the scale.
    pub fn from_text(text: &str, eps: Option<f64>) -> Result<Self> {
        let mut header_eps = None;
        let mut angles = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let mut it = rest.split_whitespace();
                if it.next() == Some("eps") {
                    let v = it.next().ok_or_else(|| Error::Parse(format!("line {}: missing eps value", n + 1)))?;
                    header_eps = Some(v.parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?);
                }
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(Error::Parse(format!("line {}: expected `z1 z2 theta`", n + 1)));
            }
            let bad = |e: &dyn std::fmt::Display| Error::Parse(format!("line {}: {e}", n + 1));
            let z1 = f[0].parse::<i64>().map_err(|e| bad(&e))?;
            let z2 = f[1].parse::<i64>().map_err(|e| bad(&e))?;
            let th = f[2].parse::<f64>().map_err(|e| bad(&e))?;
            if !th.is_finite() {
                return Err(bad(&"angle is not finite"));
            }
            angles.insert(LatticeIndex::new(z1, z2), th);
        }
        let eps = eps.or(header_eps).ok_or_else(|| Error::Parse("no eps header and no eps given".into()))?;
        if !(eps > 0.0) {
            return Err(Error::Parse("eps must be positive".into()));
        }
        Ok(Self { eps, angles })
    }
}

/// Ground state of the given kind on `domain`.
pub fn ground_state<I: IntoIterator<Item = LatticeIndex>>(kind: GroundStateKind, eps: f64, domain: I) -> SpinField {
    SpinField::from_fn(eps, domain, |x| ground_angle(kind, x))
}

/// `u^pos` where `<x, nu> >= 0`, `u^neg` below.
pub fn sharp_interface<I: IntoIterator<Item = LatticeIndex>>(nu: Point, eps: f64, domain: I) -> SpinField {
    SpinField::from_fn(eps, domain, |x| {
        let kind = if dot(position(x, eps), nu) >= 0.0 { GroundStateKind::Pos } else { GroundStateKind::Neg };
        ground_angle(kind, x)
    })
}

/// `eps (3 + 2cos(tj - ti) + 2cos(tk - tj) + 2cos(ti - tk))`.
pub fn energy_from_angles(eps: f64, a: [f64; 3]) -> f64 {
    eps * (3.0 + 2.0 * ((a[1] - a[0]).cos() + (a[2] - a[1]).cos() + (a[0] - a[2]).cos()))
}

/// `eps |u_i + u_j + u_k|^2`.
pub fn energy_from_vectors(eps: f64, a: [f64; 3]) -> f64 {
    let x = a[0].cos() + a[1].cos() + a[2].cos();
    let y = a[0].sin() + a[1].sin() + a[2].sin();
    eps * (x * x + y * y)
}

/// `(2/(3 sqrt 3)) (sin(tj - ti) + sin(tk - tj) + sin(ti - tk))`.
pub fn chirality_from_angles(a: [f64; 3]) -> f64 {
    CHI_NORM * ((a[1] - a[0]).sin() + (a[2] - a[1]).sin() + (a[0] - a[2]).sin())
}

/// `(2/(3 sqrt 3)) (u_i x u_j + u_j x u_k + u_k x u_i)`.
pub fn chirality_from_vectors(a: [f64; 3]) -> f64 {
    let u = a.map(lattice::unit_from_angle);
    CHI_NORM * (lattice::cross(u[0], u[1]) + lattice::cross(u[1], u[2]) + lattice::cross(u[2], u[0]))
}

pub fn energy_triangle(u: &SpinField, t: &Triangle) -> Result<f64> {
    Ok(energy_from_vectors(u.eps, u.triangle_angles(t)?))
}

pub fn chirality_triangle(u: &SpinField, t: &Triangle) -> Result<f64> {
    Ok(chirality_from_vectors(u.triangle_angles(t)?))
}

/// Sum of triangle energies with a fixed reduction order.
pub fn energy_triangles(u: &SpinField, tris: &[Triangle]) -> Result<f64> {
    for t in tris {
        u.triangle_angles(t)?;
    }
    Ok(par::sum_chunked(tris.len(), |r| {
        tris[r].iter().map(|t| energy_from_vectors(u.eps, u.triangle_angles(t).expect("checked"))).sum()
    }))
}

/// `F_eps(u, A)` summed over the triangles contained in `region`.
pub fn energy_region(u: &SpinField, region: &Region) -> Result<f64> {
    energy_triangles(u, &lattice::triangles_in(region, u.eps)?)
}

/// Chirality per triangle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiralityField {
    pub eps: f64,
    pub values: BTreeMap<Triangle, f64>,
}

impl ChiralityField {
    pub fn get(&self, t: &Triangle) -> Option<f64> {
        self.values.get(t).copied()
    }

    /// One line `z1 z2 up|down chi` per triangle, keyed by the triangle base.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (t, v) in &self.values {
            let b = t.base();
            let _ = writeln!(s, "{} {} {} {:.9e}", b.z1, b.z2, t.orientation.as_str(), v);
        }
        s
    }

    /// SVG rendering on a blue-white-red diverging palette.
    pub fn to_svg(&self) -> String {
        let pts: Vec<Point> =
            self.values.keys().flat_map(|t| t.vertices().map(|v| position(v, self.eps))).collect();
        let (mut lo, mut hi) = ([0.0f64; 2], [1.0f64; 2]);
        if !pts.is_empty() {
            lo = [f64::INFINITY; 2];
            hi = [f64::NEG_INFINITY; 2];
            for p in &pts {
                for d in 0..2 {
                    lo[d] = lo[d].min(p[d]);
                    hi[d] = hi[d].max(p[d]);
                }
            }
        }
        let scale = 800.0 / (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
        let w = (hi[0] - lo[0]) * scale;
        let h = (hi[1] - lo[1]) * scale;
        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.1}" height="{h:.1}">"#);
        for (t, v) in &self.values {
            let p = t.vertices().map(|x| {
                let q = position(x, self.eps);
                [(q[0] - lo[0]) * scale, h - (q[1] - lo[1]) * scale]
            });
            let [r, g, b] = diverging(*v);
            let _ = writeln!(
                s,
                r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="rgb({r},{g},{b})"/>"#,
                p[0][0], p[0][1], p[1][0], p[1][1], p[2][0], p[2][1]
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn diverging(v: f64) -> [u8; 3] {
    let v = v.clamp(-1.0, 1.0);
    let fade = |x: f64| (255.0 * (1.0 - x)).round() as u8;
    if v >= 0.0 {
        [255, fade(v), fade(v)]
    } else {
        [fade(-v), fade(-v), 255]
    }
}

pub fn chirality_of_triangles(u: &SpinField, tris: &[Triangle]) -> Result<ChiralityField> {
    let vals = par::map_slice(tris, |t| chirality_triangle(u, t).map(|c| (*t, c)));
    Ok(ChiralityField { eps: u.eps, values: vals.into_iter().collect::<Result<_>>()? })
}

pub fn chirality_field(u: &SpinField, region: &Region) -> Result<ChiralityField> {
    chirality_of_triangles(u, &lattice::triangles_in(region, u.eps)?)
}

/// `+1` where `chi > 0`, `-1` otherwise.
pub fn sign_of(chi: f64) -> i8 {
    if chi > 0.0 {
        1
    } else {
        -1
    }
}

pub fn sign_threshold(chi: &ChiralityField) -> BTreeMap<Triangle, i8> {
    chi.values.iter().map(|(t, v)| (*t, sign_of(*v))).collect()
}

/// Target `chi_nu(x) = 1` if `<x, nu> >= 0`, else `-1`.
pub fn chi_nu(nu: Point) -> impl Fn(Point) -> f64 + Sync {
    move |x| if dot(x, nu) >= 0.0 { 1.0 } else { -1.0 }
}

/// `sum_T area(T) |chi(T) - target(barycenter T)|` over triangles of `chi` inside `region`.
pub fn l1_chirality_distance<F>(chi: &ChiralityField, target: F, region: &Region) -> f64
where
    F: Fn(Point) -> f64,
{
    let area = Triangle::area(chi.eps);
    chi.values
        .iter()
        .filter(|(t, _)| region.contains_triangle(t, chi.eps))
        .map(|(t, v)| area * (v - target(t.barycenter(chi.eps))).abs())
        .sum()
}

/// Counts and energies around the thresholded chirality interface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterfaceDiagnostics {
    /// Triangles with `chi > 0` having a neighbour with `chi <= 0`.
    pub count_pos_boundary: usize,
    /// `3 eps * count_pos_boundary`.
    pub perimeter_bound: f64,
    /// Smallest `F(T) + F(T')` over adjacent opposite-sign pairs.
    pub pair_energy_min: Option<f64>,
    /// `sum_T sum_{T' neighbour of T} F(T) + F(T')`.
    pub pair_energy_sum: f64,
    /// Length of the boundary of `{chi > 0}` inside the region.
    pub interface_length: f64,
    pub total_energy: f64,
}

pub fn interface_diagnostics(u: &SpinField, region: &Region) -> Result<InterfaceDiagnostics> {
    let tris = lattice::triangles_in(region, u.eps)?;
    let mut energy = BTreeMap::new();
    let mut chi = BTreeMap::new();
    for t in &tris {
        let a = u.triangle_angles(t)?;
        energy.insert(*t, energy_from_vectors(u.eps, a));
        chi.insert(*t, chirality_from_vectors(a));
    }
    let mut count = 0;
    let mut pair_min: Option<f64> = None;
    let mut pair_sum = 0.0;
    let mut opposite_edges = 0usize;
    for t in &tris {
        let s = sign_of(chi[t]);
        let mut on_boundary = false;
        for n in neighbors(t) {
            let Some(cn) = chi.get(&n) else { continue };
            let e = energy[t] + energy[&n];
            pair_sum += e;
            if sign_of(*cn) != s {
                if s > 0 {
                    on_boundary = true;
                    opposite_edges += 1;
                }
                pair_min = Some(pair_min.map_or(e, |m: f64| m.min(e)));
            }
        }
        if on_boundary {
            count += 1;
        }
    }
    Ok(InterfaceDiagnostics {
        count_pos_boundary: count,
        perimeter_bound: 3.0 * u.eps * count as f64,
        pair_energy_min: pair_min,
        pair_energy_sum: pair_sum,
        interface_length: u.eps * opposite_edges as f64,
        total_energy: energy.values().sum(),
    })
}

/// Sites of the given triangles, sorted.
pub fn sites_of(tris: &[Triangle]) -> BTreeSet<LatticeIndex> {
    tris.iter().flat_map(|t| t.vertices()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ground_angles_by_label() {
        assert_eq!(ground_angle(GroundStateKind::Pos, LatticeIndex::new(0, 0)), 0.0);
        assert!((ground_angle(GroundStateKind::Pos, LatticeIndex::new(1, 0)) - 2.0 * PI / 3.0).abs() < 1e-15);
        assert!((ground_angle(GroundStateKind::Neg, LatticeIndex::new(1, 0)) - 4.0 * PI / 3.0).abs() < 1e-15);
    }

    #[test]
    fn chi_norm_value() {
        assert!((CHI_NORM - 2.0 / (3.0 * 3f64.sqrt())).abs() < 1e-16);
    }

    #[test]
    fn text_round_trip() {
        let u = ground_state(GroundStateKind::Neg, 0.25, [LatticeIndex::new(0, 0), LatticeIndex::new(-3, 2)]);
        let v = SpinField::from_text(&u.to_text(), None).unwrap();
        assert_eq!(u, v);
    }

    #[test]
    fn threshold_zero_is_negative() {
        assert_eq!(sign_of(0.0), -1);
        assert_eq!(sign_of(1.0), 1);
        assert_eq!(sign_of(-0.3), -1);
    }
}
