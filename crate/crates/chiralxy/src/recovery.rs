//! Constructive procedures: paving a polygonal chirality interface with
//! translated cell minimisers, and forcing ground-state boundary values onto a
//! low-energy field on the unit cell.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::analysis::{self, InterpolationPlan, LiftedTriple, StripChoice};
use crate::error::{Error, Result};
use crate::lattice::{self, dot, perp, LatticeDir, LatticeIndex, Point, Region, Triangle};
use crate::optimize::{fmt9, same_angle};
use crate::par;
use crate::spin::{self, GroundStateKind, SpinField};

// ---------------------------------------------------------------------------
// Paving
// ---------------------------------------------------------------------------

/// Axis-aligned box `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub lo: Point,
    pub hi: Point,
}

/// Polyline `x_0, ..., x_N` separating `{chi = 1}` from `{chi = -1}`.
///
/// Segment `n` runs from `x_n` to `x_{n+1}`. With `signs[n] = 1` the region
/// `{chi = 1}` lies to the right of the direction of travel, with `-1` to the
/// left. The first and last segments are continued as rays when evaluating the
/// target field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolygonalInterface {
    pub vertices: Vec<Point>,
    pub signs: Vec<i8>,
    #[serde(default)]
    pub domain: Option<DomainBox>,
}

/// Derived data of one segment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: Point,
    pub end: Point,
    pub length: f64,
    /// Unit direction of travel.
    pub tangent: Point,
    /// Unit normal pointing into `{chi = 1}`.
    pub nu: Point,
}

impl PolygonalInterface {
    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vertices.len() < 2 {
            return Err(Error::Precondition("an interface needs at least two vertices".into()));
        }
        if self.signs.len() != self.vertices.len() - 1 {
            return Err(Error::Precondition(format!(
                "expected {} segment signs, got {}",
                self.vertices.len() - 1,
                self.signs.len()
            )));
        }
        if self.signs.iter().any(|s| *s != 1 && *s != -1) {
            return Err(Error::Precondition("segment signs must be 1 or -1".into()));
        }
        if self.signs.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::Precondition("segment signs must agree along the polyline".into()));
        }
        for w in self.vertices.windows(2) {
            if (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]) <= 1e-12 {
                return Err(Error::Precondition("consecutive vertices coincide".into()));
            }
        }
        for n in 1..self.vertices.len().saturating_sub(1) {
            let th = self.corner_angle(n);
            if !(th > 1e-9) {
                return Err(Error::Precondition(format!("segments fold back onto each other at vertex {n}")));
            }
        }
        if let Some(d) = self.domain {
            if !(d.hi[0] > d.lo[0] && d.hi[1] > d.lo[1]) {
                return Err(Error::Precondition("domain box is empty".into()));
            }
        }
        Ok(())
    }

    pub fn segments(&self) -> Vec<Segment> {
        self.vertices
            .windows(2)
            .zip(&self.signs)
            .map(|(w, &s)| {
                let d = [w[1][0] - w[0][0], w[1][1] - w[0][1]];
                let length = d[0].hypot(d[1]);
                let tangent = [d[0] / length, d[1] / length];
                let right = [tangent[1], -tangent[0]];
                let nu = if s > 0 { right } else { [-right[0], -right[1]] };
                Segment { start: w[0], end: w[1], length, tangent, nu }
            })
            .collect()
    }

    /// Angle in `(0, pi]` between the two segments meeting at interior vertex `n`.
    pub fn corner_angle(&self, n: usize) -> f64 {
        let v = self.vertices[n];
        let a = [self.vertices[n - 1][0] - v[0], self.vertices[n - 1][1] - v[1]];
        let b = [self.vertices[n + 1][0] - v[0], self.vertices[n + 1][1] - v[1]];
        let c = dot(a, b) / (a[0].hypot(a[1]) * b[0].hypot(b[1]));
        c.clamp(-1.0, 1.0).acos()
    }

    pub fn total_length(&self) -> f64 {
        self.segments().iter().map(|s| s.length).sum()
    }

    /// Explicit domain, or the bounding box of the vertices padded by `pad`.
    pub fn domain_box(&self, pad: f64) -> DomainBox {
        if let Some(d) = self.domain {
            return d;
        }
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &self.vertices {
            for c in 0..2 {
                lo[c] = lo[c].min(v[c]);
                hi[c] = hi[c].max(v[c]);
            }
        }
        DomainBox { lo: [lo[0] - pad, lo[1] - pad], hi: [hi[0] + pad, hi[1] + pad] }
    }

    /// Distance to the polyline continued by rays at both ends.
    pub fn distance(&self, p: Point) -> f64 {
        self.nearest(p).0
    }

    /// `(distance, signed side)` of the nearest point on the extended polyline.
    fn nearest(&self, p: Point) -> (f64, f64) {
        let segs = self.segments();
        let last = segs.len() - 1;
        let mut best = (f64::INFINITY, 1.0);
        for (n, s) in segs.iter().enumerate() {
            let d = [p[0] - s.start[0], p[1] - s.start[1]];
            let mut t = dot(d, s.tangent);
            if n != 0 {
                t = t.max(0.0);
            }
            if n != last {
                t = t.min(s.length);
            }
            let q = [s.start[0] + t * s.tangent[0], s.start[1] + t * s.tangent[1]];
            let dist = (p[0] - q[0]).hypot(p[1] - q[1]);
            let side = if (n != 0 && t <= 0.0) || (n != last && t >= s.length) {
                // Nearest point is a corner: use both adjacent normals.
                let v = if t <= 0.0 { n } else { n + 1 };
                let na = segs[v - 1].nu;
                let nb = segs[v].nu;
                let w = [p[0] - self.vertices[v][0], p[1] - self.vertices[v][1]];
                dot(w, [na[0] + nb[0], na[1] + nb[1]])
            } else {
                dot([p[0] - q[0], p[1] - q[1]], s.nu)
            };
            if dist < best.0 - 1e-15 {
                best = (dist, side);
            }
        }
        best
    }

    /// Target chirality: `1` on the closure of `{chi = 1}`, `-1` elsewhere.
    pub fn chi(&self, p: Point) -> f64 {
        let (d, side) = self.nearest(p);
        if d <= 1e-12 || side >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// Cubes along one segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentPlan {
    pub segment: Segment,
    /// Clearance `c` kept free before the first and after the last cube, in units of `rho`.
    pub clearance_start: f64,
    pub clearance_end: f64,
    /// `M^n`; the segment carries `M^n + 1` cubes.
    pub count: usize,
    pub nominal: Vec<Point>,
    pub centers: Vec<LatticeIndex>,
}

/// Cube layout along a polygonal interface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PavingPlan {
    pub rho: f64,
    pub eps: f64,
    /// `c` at each interior vertex.
    pub corner_clearance: Vec<f64>,
    pub segments: Vec<SegmentPlan>,
}

impl PavingPlan {
    pub fn cube_count(&self) -> usize {
        self.segments.iter().map(|s| s.centers.len()).sum()
    }

    /// `(segment, index, center)` for every cube.
    pub fn cubes(&self) -> Vec<(usize, usize, LatticeIndex)> {
        let mut out = Vec::new();
        for (n, s) in self.segments.iter().enumerate() {
            for (m, c) in s.centers.iter().enumerate() {
                out.push((n, m, *c));
            }
        }
        out
    }
}

/// `1/2 + cot(theta/2)/2`, the clearance at which the two corner cubes touch.
pub fn corner_clearance_bound(theta: f64) -> f64 {
    0.5 + 0.5 / (theta / 2.0).tan()
}

/// Clearance at a corner of angle `theta`: the touching bound plus room for
/// centers moved by up to `2 eps`, rounded up to two decimals.
pub fn corner_clearance(theta: f64, rho: f64, eps: f64) -> f64 {
    let cot = 1.0 / (theta / 2.0).tan();
    let c = corner_clearance_bound(theta) + 2.0 * eps / rho * (1.0 + cot);
    (c * 100.0 - 1e-9).ceil() / 100.0
}

/// Nearest point of `Lambda^1_eps` to `p`, ties broken lexicographically.
pub fn nearest_sublattice_one(p: Point, eps: f64) -> LatticeIndex {
    let f = lattice::fractional_index(p, eps);
    let (a0, b0) = (f[0].round() as i64, f[1].round() as i64);
    let mut best: Option<(f64, LatticeIndex)> = None;
    for b in b0 - 3..=b0 + 3 {
        for a in a0 - 3..=a0 + 3 {
            let idx = LatticeIndex::new(a, b);
            if lattice::sublattice_of(idx) != 1 {
                continue;
            }
            let q = lattice::position(idx, eps);
            let d = (q[0] - p[0]).hypot(q[1] - p[1]);
            let better = match best {
                None => true,
                Some((bd, bi)) => d < bd - 1e-12 * eps || ((d - bd).abs() <= 1e-12 * eps && (idx.z1, idx.z2) < (bi.z1, bi.z2)),
            };
            if better {
                best = Some((d, idx));
            }
        }
    }
    best.expect("search window is non-empty").1
}

fn square_corners(center: Point, nu: Point, rho: f64) -> [Point; 4] {
    let t = perp(nu);
    let h = rho / 2.0;
    [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]
        .map(|[a, b]| [center[0] + h * (a * t[0] + b * nu[0]), center[1] + h * (a * t[1] + b * nu[1])])
}

/// Whether two open squares intersect (separating axis test).
fn squares_overlap(a: (Point, Point), b: (Point, Point), rho: f64) -> bool {
    let ca = square_corners(a.0, a.1, rho);
    let cb = square_corners(b.0, b.1, rho);
    let axes = [a.1, perp(a.1), b.1, perp(b.1)];
    let tol = 1e-12 * rho.max(1.0);
    for ax in axes {
        let pa = ca.map(|p| dot(p, ax));
        let pb = cb.map(|p| dot(p, ax));
        let (amin, amax) = (pa.iter().cloned().fold(f64::INFINITY, f64::min), pa.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        let (bmin, bmax) = (pb.iter().cloned().fold(f64::INFINITY, f64::min), pb.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        if amax <= bmin + tol || bmax <= amin + tol {
            return false;
        }
    }
    true
}

/// Cube layout with `M^n = floor((l_n - c rho) / (rho + 5 eps))`.
pub fn paving_plan(interface: &PolygonalInterface, rho: f64, eps: f64) -> Result<PavingPlan> {
    interface.validate()?;
    if !(rho > 0.0 && eps > 0.0 && 6.0 * eps < rho) {
        return Err(Error::Precondition(format!("need 0 < 6 eps < rho (eps = {eps}, rho = {rho})")));
    }
    let segs = interface.segments();
    let corner: Vec<f64> = (1..interface.vertices.len() - 1).map(|n| corner_clearance(interface.corner_angle(n), rho, eps)).collect();
    let mut plans = Vec::with_capacity(segs.len());
    for (n, s) in segs.iter().enumerate() {
        let cs = if n == 0 { 0.0 } else { corner[n - 1] };
        let ce = if n + 1 == segs.len() { 0.0 } else { corner[n] };
        let usable = s.length - (cs + ce) * rho;
        if usable < 0.0 {
            return Err(Error::Construction {
                step: "paving plan",
                reason: format!("segment {n} of length {} is shorter than its corner clearance", s.length),
            });
        }
        let count = (usable / (rho + 5.0 * eps)).floor() as usize;
        let mut nominal = Vec::with_capacity(count + 1);
        let mut centers = Vec::with_capacity(count + 1);
        for m in 0..=count {
            let a = cs * rho + m as f64 * (rho + 5.0 * eps);
            let p = [s.start[0] + a * s.tangent[0], s.start[1] + a * s.tangent[1]];
            let c = nearest_sublattice_one(p, eps);
            let q = lattice::position(c, eps);
            if (q[0] - p[0]).hypot(q[1] - p[1]) > 2.0 * eps + 1e-12 {
                return Err(Error::Construction {
                    step: "cube centers",
                    reason: format!("no point of the sublattice within 2 eps of {p:?}"),
                });
            }
            nominal.push(p);
            centers.push(c);
        }
        plans.push(SegmentPlan { segment: *s, clearance_start: cs, clearance_end: ce, count, nominal, centers });
    }
    let plan = PavingPlan { rho, eps, corner_clearance: corner, segments: plans };
    let cubes: Vec<(usize, usize, Point, Point)> = plan
        .cubes()
        .into_iter()
        .map(|(n, m, c)| (n, m, lattice::position(c, eps), plan.segments[n].segment.nu))
        .collect();
    for x in 0..cubes.len() {
        for y in x + 1..cubes.len() {
            let (a, b) = (&cubes[x], &cubes[y]);
            if squares_overlap((a.2, a.3), (b.2, b.3), rho) {
                return Err(Error::Construction {
                    step: "cube disjointness",
                    reason: format!("cube {} of segment {} overlaps cube {} of segment {}", a.1, a.0, b.1, b.0),
                });
            }
        }
    }
    Ok(plan)
}

/// Solved cell field for one normal, on `Q^nu_rho` at the origin.
#[derive(Clone, Debug, PartialEq)]
pub struct CellField {
    pub nu: Point,
    pub field: SpinField,
    pub min_energy: f64,
}

/// Paved field together with its layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Paving {
    pub field: SpinField,
    pub plan: PavingPlan,
}

fn cell_for(cells: &[CellField], nu: Point) -> Option<&CellField> {
    cells.iter().find(|c| {
        let n = c.nu[0].hypot(c.nu[1]);
        n > 0.0 && (c.nu[0] / n - nu[0]).abs() < 1e-9 && (c.nu[1] / n - nu[1]).abs() < 1e-9
    })
}

fn domain_triangles(interface: &PolygonalInterface, plan: &PavingPlan) -> Result<(Vec<Triangle>, Vec<Vec<Triangle>>)> {
    let d = interface.domain_box(plan.rho);
    let center = [(d.lo[0] + d.hi[0]) / 2.0, (d.lo[1] + d.hi[1]) / 2.0];
    let omega = Region::rect_at(center, [0.0, 1.0], d.hi[0] - d.lo[0], d.hi[1] - d.lo[1])?;
    let mut all: BTreeSet<Triangle> = lattice::triangles_in(&omega, plan.eps)?.into_iter().collect();
    let mut templates: BTreeMap<usize, Vec<Triangle>> = BTreeMap::new();
    let mut per_cube = Vec::new();
    for (n, _, c) in plan.cubes() {
        if let std::collections::btree_map::Entry::Vacant(e) = templates.entry(n) {
            e.insert(lattice::triangles_in(&Region::square(plan.segments[n].segment.nu, plan.rho)?, plan.eps)?);
        }
        let tris: Vec<Triangle> = templates[&n].iter().map(|t| t.translate(c)).collect();
        all.extend(tris.iter().copied());
        per_cube.push(tris);
    }
    Ok((all.into_iter().collect(), per_cube))
}

/// Global field: translated cell fields in the cubes, ground states elsewhere.
pub fn pave_interface(interface: &PolygonalInterface, rho: f64, eps: f64, cells: &[CellField]) -> Result<Paving> {
    let plan = paving_plan(interface, rho, eps)?;
    for (n, s) in plan.segments.iter().enumerate() {
        let c = cell_for(cells, s.segment.nu)
            .ok_or_else(|| Error::Precondition(format!("no cell field for the normal {:?} of segment {n}", s.segment.nu)))?;
        if (c.field.eps - eps).abs() > 1e-12 * eps {
            return Err(Error::Precondition(format!("cell field for segment {n} has eps {} instead of {eps}", c.field.eps)));
        }
    }
    let (tris, _) = domain_triangles(interface, &plan)?;
    let sites = lattice::vertex_set(&tris);

    let cube_values = par::map_slice(&plan.cubes(), |&(n, _, c)| {
        let cell = cell_for(cells, plan.segments[n].segment.nu).expect("checked above");
        cell.field.translated(c)
    });
    let mut assigned: BTreeMap<LatticeIndex, f64> = BTreeMap::new();
    for (k, f) in cube_values.iter().enumerate() {
        for (&x, &th) in &f.angles {
            match assigned.get(&x) {
                Some(&old) if !same_angle(old, th) => {
                    return Err(Error::Construction {
                        step: "paving assembly",
                        reason: format!("cube {k} assigns {th} at {x:?}, already set to {old}"),
                    });
                }
                Some(_) => {}
                None => {
                    assigned.insert(x, th);
                }
            }
        }
    }
    let mut field = SpinField::new(eps);
    for x in sites {
        let th = match assigned.get(&x) {
            Some(&v) => v,
            None => {
                let kind = GroundStateKind::from_sign(interface.chi(lattice::position(x, eps)));
                spin::ground_angle(kind, x)
            }
        };
        field.set(x, th);
    }
    for (x, th) in assigned {
        field.set(x, th);
    }
    Ok(Paving { field, plan })
}

/// Energy split of a paved field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PavingReport {
    /// `(segment, cube index, energy)`.
    pub cube_energies: Vec<(usize, usize, f64)>,
    pub leftover_energy: f64,
    pub leftover_triangles: usize,
    pub total_energy: f64,
    /// `sum_n (M^n + 1) m_n + leftover`.
    pub cube_bound: f64,
    /// `sum_n (floor(l_n / rho) + 1) m_n`.
    pub limsup_reference: f64,
    /// `(total - limsup_reference) / rho`.
    pub limsup_constant: f64,
    /// `leftover / (rho + eps / rho)`.
    pub leftover_constant: f64,
    /// `leftover_triangles * 3 eps / (rho + eps / rho)`.
    pub leftover_count_constant: f64,
    /// Largest `|cube energy - cell minimum|`.
    pub max_cube_deviation: f64,
    pub l1_error: f64,
    /// `l1_error / (rho * interface length)`.
    pub l1_constant: f64,
    /// Triangles at distance at least `rho / 2` from the interface whose chirality sign differs from the target.
    pub far_field_mismatches: usize,
}

impl PavingReport {
    pub fn decomposition_csv(&self) -> String {
        let mut s = String::from("segment,cube_index,energy\n");
        for (n, m, e) in &self.cube_energies {
            let _ = writeln!(s, "{n},{m},{}", fmt9(*e));
        }
        let _ = writeln!(s, "leftover,,{}", fmt9(self.leftover_energy));
        s
    }

    /// Total equals cubes plus leftover and every cube carries its cell minimum.
    pub fn consistent(&self) -> bool {
        let scale = self.total_energy.abs().max(1.0);
        self.total_energy <= self.cube_bound + 1e-9 * scale && self.max_cube_deviation <= 1e-9 * scale
    }
}

/// Per-cube and leftover energies; `cell_minima[n]` is the minimum used on segment `n`.
pub fn evaluate_paving(
    field: &SpinField,
    interface: &PolygonalInterface,
    rho: f64,
    eps: f64,
    cell_minima: &[f64],
) -> Result<PavingReport> {
    let plan = paving_plan(interface, rho, eps)?;
    if cell_minima.len() != plan.segments.len() {
        return Err(Error::Precondition(format!("expected {} cell minima, got {}", plan.segments.len(), cell_minima.len())));
    }
    let (tris, per_cube) = domain_triangles(interface, &plan)?;
    let cubes = plan.cubes();
    let energies = par::map_slice(&per_cube, |t| spin::energy_triangles(field, t)).into_iter().collect::<Result<Vec<_>>>()?;
    let in_cube: BTreeSet<Triangle> = per_cube.iter().flatten().copied().collect();
    let rest: Vec<Triangle> = tris.iter().filter(|t| !in_cube.contains(t)).copied().collect();
    let leftover_energy = spin::energy_triangles(field, &rest)?;
    let total_energy = spin::energy_triangles(field, &tris)?;

    let mut cube_bound = leftover_energy;
    let mut limsup_reference = 0.0;
    for (n, s) in plan.segments.iter().enumerate() {
        cube_bound += (s.count + 1) as f64 * cell_minima[n];
        limsup_reference += ((s.segment.length / rho).floor() + 1.0) * cell_minima[n];
    }
    let max_cube_deviation = cubes.iter().zip(&energies).map(|(&(n, _, _), e)| (e - cell_minima[n]).abs()).fold(0.0, f64::max);

    let area = Triangle::area(eps);
    let mut l1_error = 0.0;
    let mut far_field_mismatches = 0;
    for t in &tris {
        let b = t.barycenter(eps);
        let chi = spin::chirality_triangle(field, t)?;
        let target = interface.chi(b);
        l1_error += area * (chi - target).abs();
        if interface.distance(b) >= rho / 2.0 + eps && spin::sign_of(chi) as f64 != target {
            far_field_mismatches += 1;
        }
    }
    let denom = rho + eps / rho;
    Ok(PavingReport {
        cube_energies: cubes.iter().zip(&energies).map(|(&(n, m, _), &e)| (n, m, e)).collect(),
        leftover_energy,
        leftover_triangles: rest.len(),
        total_energy,
        cube_bound,
        limsup_reference,
        limsup_constant: (total_energy - limsup_reference) / rho,
        leftover_constant: leftover_energy / denom,
        leftover_count_constant: rest.len() as f64 * 3.0 * eps / denom,
        max_cube_deviation,
        l1_error,
        l1_constant: l1_error / (rho * interface.total_length()),
        far_field_mismatches,
    })
}

// ---------------------------------------------------------------------------
// Boundary enforcement
// ---------------------------------------------------------------------------

/// One of the six pieces of the construction around `Q^nu_r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmReport {
    pub name: String,
    /// Outward direction of the arm.
    pub direction: Point,
    pub target: GroundStateKind,
    /// Direction of the half-slices.
    pub slice_dir: LatticeDir,
    pub chain_alpha: u8,
    /// Bands whose chain triangle lies in the arm strip.
    pub bands: usize,
    pub z0: i64,
    pub drift: f64,
    pub winding: i64,
    pub steps: usize,
    pub interpolated_slices: usize,
}

/// Diagnostics of [`enforce_boundary`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnforceReport {
    pub strip: StripChoice,
    pub arms: Vec<ArmReport>,
    /// Sites copied from the input on `P_delta` near `Q_r`.
    pub kept_sites: usize,
    pub interpolated_sites: usize,
    /// Interpolated values discarded because the site was already kept.
    pub overridden_sites: usize,
    /// Remaining arm sites copied from the input.
    pub copied_sites: usize,
    /// Sites set to the ground state by the sign of `<x, nu>`.
    pub ground_sites: usize,
    pub input_energy: f64,
    pub output_energy: f64,
}

impl EnforceReport {
    pub fn energy_increase(&self) -> f64 {
        self.output_energy - self.input_energy
    }
}

struct Arm {
    name: &'static str,
    d: Point,
    target: GroundStateKind,
    strip: Region,
    territory: Region,
}

fn arms(nu: Point, r: f64, delta: f64, eps: f64) -> Result<Vec<Arm>> {
    let q_r = Region::square(nu, r)?.closure();
    let vbar = Region::rect(nu, 1.0 - 5.0 * delta, 1.0)?;
    let hbar = Region::rect(nu, 1.0, 1.0 - 5.0 * delta)?.minus(Region::rect(nu, 1.0, 3.0 * delta)?.closure());
    let band = Region::rect(nu, 1.0, delta)?.closure();
    let off = r / 2.0 + 3.0 * eps;
    let strip_at = |d: Point| Region::rect_at([off * d[0], off * d[1]], d, r, 6.0 * eps);
    let mut out = Vec::new();
    for (name, s) in [("top", 1.0), ("bottom", -1.0)] {
        let d = [s * nu[0], s * nu[1]];
        out.push(Arm {
            name,
            d,
            target: GroundStateKind::from_sign(s),
            strip: strip_at(d)?,
            territory: vbar.clone().intersect(Region::half_plane(d, 0.0, 1.0)?).minus(q_r.clone()),
        });
    }
    let t = perp(nu);
    for (name, a, s) in [
        ("left_pos", 1.0, 1.0),
        ("left_neg", 1.0, -1.0),
        ("right_pos", -1.0, 1.0),
        ("right_neg", -1.0, -1.0),
    ] {
        let d = [a * t[0], a * t[1]];
        let side = Region::half_plane(d, 0.0, 1.0)?.intersect(Region::half_plane(nu, 0.0, s)?);
        out.push(Arm {
            name,
            d,
            target: GroundStateKind::from_sign(s),
            strip: strip_at(d)?.minus(band.clone()).intersect(side.clone()),
            territory: hbar.clone().intersect(side).minus(q_r.clone()),
        });
    }
    Ok(out)
}

/// Lattice direction closest to `d`; ties go to the smaller `alpha`.
pub fn slice_direction(d: Point) -> LatticeDir {
    let mut best = LatticeDir(0);
    let mut best_key = (f64::NEG_INFINITY, u8::MAX);
    for k in 0..6u8 {
        let dir = LatticeDir(k);
        let c = dot(dir.vector(), d);
        let key = (c, dir.alpha());
        if c > best_key.0 + 1e-9 || ((c - best_key.0).abs() <= 1e-9 && key.1 < best_key.1) {
            best = dir;
            best_key = key;
        }
    }
    best
}

/// Recursive lifts along consecutive chain triangles, starting in `[0, 2 pi)`.
fn chain_lifts(u: &SpinField, tris: &[Triangle]) -> Result<Vec<[f64; 3]>> {
    let mut out: Vec<[f64; 3]> = Vec::with_capacity(tris.len());
    for t in tris {
        let raw = u.triangle_angles(t)?;
        let next = match out.last() {
            None => {
                let i = raw[0].rem_euclid(TAU);
                let j = i + analysis::wrap_pi(raw[1] - i);
                let k = j + analysis::wrap_pi(raw[2] - j);
                [i, j, k]
            }
            Some(prev) => [0, 1, 2].map(|v| prev[v] + analysis::wrap_pi(raw[v] - prev[v])),
        };
        out.push(next);
    }
    Ok(out)
}

fn in_window(t: &Triangle, d: Point, eps: f64, delta: f64) -> bool {
    let lo = (1.0 - 7.0 * delta / 4.0) / 2.0;
    let hi = (1.0 - 5.0 * delta / 4.0) / 2.0;
    t.vertices().iter().all(|v| {
        let s = dot(lattice::position(*v, eps), d);
        s > lo && s < hi
    })
}

struct ArmPlan {
    report: ArmReport,
    plans: Vec<InterpolationPlan>,
    extra: usize,
}

fn plan_arm(u: &SpinField, arm: &Arm, q_tris: &[Triangle], q_levels: (i64, i64), r: f64, delta: f64, eps: f64) -> Result<ArmPlan> {
    let dir = slice_direction(arm.d);
    let alpha = dir.alpha();
    let want = match arm.target {
        GroundStateKind::Pos => 1,
        GroundStateKind::Neg => -1,
    };
    for t in q_tris.iter().filter(|t| arm.strip.contains_triangle(t, eps)) {
        let chi = spin::chirality_triangle(u, t)?;
        if spin::sign_of(chi) != want {
            return Err(Error::Construction {
                step: "arm strip chirality",
                reason: format!("{} arm: chirality {chi} at {t:?} has the wrong sign", arm.name),
            });
        }
    }
    let chain = lattice::build_chain(arm.d, r / 2.0 + 3.0 * eps, alpha, q_levels.0..=q_levels.1, eps)?;
    let selected: Vec<(i64, Triangle)> = chain
        .triangles
        .iter()
        .enumerate()
        .map(|(n, t)| (chain.z_start + n as i64, *t))
        .filter(|(_, t)| arm.strip.contains_triangle(t, eps))
        .collect();
    if selected.is_empty() {
        return Err(Error::Construction { step: "chain", reason: format!("{} arm: no chain triangle lies in the strip", arm.name) });
    }
    if selected.windows(2).any(|w| w[1].0 != w[0].0 + 1) {
        return Err(Error::Construction { step: "chain", reason: format!("{} arm: chain triangles in the strip are not consecutive", arm.name) });
    }
    let tris: Vec<Triangle> = selected.iter().map(|(_, t)| *t).collect();
    let lifts = chain_lifts(u, &tris)?;
    let drift = lifts.iter().map(|l| (0..3).map(|v| (l[v] - lifts[0][v]).abs()).fold(0.0, f64::max)).fold(0.0, f64::max);
    let winding = (drift / TAU - 1e-9).ceil().max(0.0) as i64 + 8;

    // First even step landing in the window.
    let z0 = selected[0].0;
    let reach = ((1.0 / eps) as usize + 8) * 2;
    let probe = lattice::half_slice_dir(&tris[0], dir, reach)?;
    let n = probe
        .iter()
        .enumerate()
        .skip(2)
        .step_by(2)
        .find(|(_, t)| in_window(t, arm.d, eps, delta))
        .map(|(h, _)| h)
        .ok_or_else(|| Error::Construction {
            step: "interpolation length",
            reason: format!("{} arm: no even half-slice step lands in the window for delta = {delta}, eps = {eps}", arm.name),
        })?;
    // Steps until the slice has left the unit cell.
    let exit = probe
        .iter()
        .position(|t| t.vertices().iter().all(|v| dot(lattice::position(*v, eps), arm.d) > 0.5 + 2.0 * eps))
        .unwrap_or(reach)
        + 2;
    let extra = exit.saturating_sub(n).max(1);

    let mut plans = Vec::new();
    for ((z, t), l) in selected.iter().zip(&lifts) {
        if (z - z0).rem_euclid(2) != 0 {
            continue;
        }
        let lift = LiftedTriple::new(l[0], l[1], l[2]).map_err(|e| Error::Construction {
            step: "interpolation hypotheses",
            reason: format!("{} arm, band {z}: {e}", arm.name),
        })?;
        let plan = InterpolationPlan { t0: *t, dir, n, m: winding, lift, target: arm.target };
        plan.validate().map_err(|e| Error::Construction {
            step: "interpolation hypotheses",
            reason: format!("{} arm, band {z}: {e}", arm.name),
        })?;
        plans.push(plan);
    }
    let report = ArmReport {
        name: arm.name.to_string(),
        direction: arm.d,
        target: arm.target,
        slice_dir: dir,
        chain_alpha: alpha,
        bands: selected.len(),
        z0,
        drift,
        winding,
        steps: n,
        interpolated_slices: plans.len(),
    };
    Ok(ArmPlan { report, plans, extra })
}

/// Modifies `u` on `Q^nu` so that it equals `u^pos` on the upper and `u^neg`
/// on the lower discrete boundary, keeping it on `P_delta` near `Q_r`.
pub fn enforce_boundary(u: &SpinField, nu: Point, delta: f64, eps: f64) -> Result<(SpinField, EnforceReport)> {
    if !(delta > 0.0 && delta < 0.125) {
        return Err(Error::Precondition(format!("delta must lie in (0, 1/8), got {delta}")));
    }
    if !(eps > 0.0 && 6.0 * eps < 1.0) {
        return Err(Error::Precondition(format!("need 0 < 6 eps < 1, got eps = {eps}")));
    }
    let nu = lattice::normalize(nu)?;
    let q = Region::square(nu, 1.0)?;
    let q_tris = lattice::triangles_in(&q, eps)?;
    let sites = lattice::vertex_set(&q_tris);
    if let Some(x) = sites.iter().find(|x| !u.contains(**x)) {
        return Err(Error::MissingSite(x.z1, x.z2));
    }
    let strip = analysis::select_strip(u, nu, delta, eps)?;
    let r = strip.r;

    // Step 5, first case: keep u on P_delta inside Q_{r + 6 eps}.
    let p_delta = Region::rect(nu, 1.0 - 5.0 * delta, 1.0)?
        .union(Region::rect(nu, 1.0, 1.0 - 5.0 * delta)?.minus(Region::rect(nu, 1.0, 3.0 * delta)?.closure()));
    let keep = p_delta.intersect(Region::square(nu, r + 6.0 * eps)?);
    let mut out: BTreeMap<LatticeIndex, f64> = BTreeMap::new();
    for t in q_tris.iter().filter(|t| keep.contains_triangle(t, eps)) {
        for v in t.vertices() {
            out.insert(v, u.angle(v)?);
        }
    }
    let kept_sites = out.len();

    // Steps 2 to 4 per arm.
    let arms = arms(nu, r, delta, eps)?;
    let levels: Vec<i64> = sites.iter().flat_map(|x| (1..=3u8).map(move |a| lattice::level(*x, a))).collect();
    let q_levels = (levels.iter().copied().min().unwrap_or(0) - 2, levels.iter().copied().max().unwrap_or(0) + 2);
    let mut reports = Vec::new();
    let mut interp: BTreeMap<LatticeIndex, f64> = BTreeMap::new();
    for arm in &arms {
        let plan = plan_arm(u, arm, &q_tris, q_levels, r, delta, eps)?;
        let slices = par::map_slice(&plan.plans, |p| analysis::interpolate_steps(p, eps, plan.extra))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        // Interpolated values on every even half-slice of the arm; odd bands
        // are covered by their neighbours.
        let mut arm_values: BTreeMap<LatticeIndex, f64> = BTreeMap::new();
        for s in &slices {
            for (&v, &th) in &s.field.angles {
                if let Some(&old) = arm_values.get(&v) {
                    if !same_angle(old, th) {
                        return Err(Error::Construction {
                            step: "assembly",
                            reason: format!("{} arm: half-slices disagree at {v:?}", arm.name),
                        });
                    }
                }
                arm_values.insert(v, th);
            }
        }
        for t in q_tris.iter().filter(|t| arm.territory.contains_triangle(t, eps)) {
            let vs = t.vertices();
            if !vs.iter().all(|v| arm_values.contains_key(v)) {
                continue;
            }
            for v in vs {
                let th = arm_values[&v];
                match interp.get(&v) {
                    Some(&old) if !same_angle(old, th) => {
                        return Err(Error::Construction {
                            step: "assembly",
                            reason: format!("{} arm assigns {th} at {v:?}, already set to {old}", arm.name),
                        });
                    }
                    Some(_) => {}
                    None => {
                        interp.insert(v, th);
                    }
                }
            }
        }
        reports.push(plan.report);
    }
    let mut overridden_sites = 0;
    let mut interpolated_sites = 0;
    for (v, th) in interp {
        match out.get(&v) {
            Some(&old) => {
                if !same_angle(old, th) {
                    overridden_sites += 1;
                }
            }
            None => {
                out.insert(v, th);
                interpolated_sites += 1;
            }
        }
    }

    // Remaining arm triangles keep u; everything else is a ground state.
    let mut copied_sites = 0;
    for t in q_tris.iter().filter(|t| arms.iter().any(|a| a.territory.contains_triangle(t, eps))) {
        for v in t.vertices() {
            if let std::collections::btree_map::Entry::Vacant(e) = out.entry(v) {
                e.insert(u.angle(v)?);
                copied_sites += 1;
            }
        }
    }
    let mut ground_sites = 0;
    let mut field = SpinField::new(eps);
    for x in &sites {
        let th = match out.get(x) {
            Some(&v) => v,
            None => {
                ground_sites += 1;
                let s = dot(lattice::position(*x, eps), nu);
                spin::ground_angle(GroundStateKind::from_sign(if s >= 0.0 { 1.0 } else { -1.0 }), *x)
            }
        };
        field.set(*x, th);
    }

    let present: BTreeSet<LatticeIndex> = sites.iter().copied().collect();
    for (sign, kind) in [(1.0, GroundStateKind::Pos), (-1.0, GroundStateKind::Neg)] {
        let bad: Vec<LatticeIndex> = lattice::discrete_boundary(nu, 1.0, eps, sign)?
            .into_iter()
            .filter(|x| present.contains(x))
            .filter(|x| !same_angle(field.angles[x], spin::ground_angle(kind, *x)))
            .collect();
        if let Some(x) = bad.first() {
            return Err(Error::Construction {
                step: "boundary conditions",
                reason: format!("{} boundary sites differ from the ground state, first at {x:?}", bad.len()),
            });
        }
    }
    let report = EnforceReport {
        input_energy: spin::energy_triangles(u, &q_tris)?,
        output_energy: spin::energy_triangles(&field, &q_tris)?,
        strip,
        arms: reports,
        kept_sites,
        interpolated_sites,
        overridden_sites,
        copied_sites,
        ground_sites,
    };
    Ok((field, report))
}

/// Whether `u` equals the ground states on the discrete boundary of `Q^nu`.
pub fn satisfies_cell_boundary(u: &SpinField, nu: Point, eps: f64) -> Result<bool> {
    let nu = lattice::normalize(nu)?;
    for (sign, kind) in [(1.0, GroundStateKind::Pos), (-1.0, GroundStateKind::Neg)] {
        for x in lattice::discrete_boundary(nu, 1.0, eps, sign)? {
            if let Ok(th) = u.angle(x) {
                if !same_angle(th, spin::ground_angle(kind, x)) {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn clearance_values() {
        assert!((corner_clearance_bound(PI / 2.0) - 1.0).abs() < 1e-12);
        assert_eq!(corner_clearance(PI, 1.0, 0.0), 0.5);
        assert_eq!(corner_clearance(PI / 2.0, 1.0, 0.0), 1.0);
        assert_eq!(corner_clearance(PI / 3.0, 1.0, 0.0), 1.37);
        assert_eq!(corner_clearance(PI / 2.0, 0.25, 1.0 / 32.0), 1.5);
    }

    #[test]
    fn sublattice_center_is_close() {
        let eps = 0.1;
        for p in [[0.0, 0.0], [0.31, -0.77], [1.05, 0.4]] {
            let c = nearest_sublattice_one(p, eps);
            assert_eq!(lattice::sublattice_of(c), 1);
            let q = lattice::position(c, eps);
            assert!((q[0] - p[0]).hypot(q[1] - p[1]) <= eps + 1e-12);
        }
    }

    #[test]
    fn slice_direction_prefers_smaller_alpha_on_ties() {
        // Halfway between e1 and R60 e1.
        let d = lattice::unit_from_angle(PI / 6.0);
        assert_eq!(slice_direction(d), LatticeDir(0));
        assert_eq!(slice_direction([0.0, 1.0]).alpha(), 2);
    }

    #[test]
    fn interface_sides() {
        let p = PolygonalInterface { vertices: vec![[-1.0, 0.0], [1.0, 0.0]], signs: vec![-1], domain: None };
        let s = p.segments()[0];
        assert!((s.nu[1] - 1.0).abs() < 1e-15);
        assert_eq!(p.chi([0.0, 0.3]), 1.0);
        assert_eq!(p.chi([3.0, -0.3]), -1.0);
        assert_eq!(p.chi([0.2, 0.0]), 1.0);
    }

    #[test]
    fn mixed_signs_rejected() {
        let p = PolygonalInterface { vertices: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]], signs: vec![1, -1], domain: None };
        assert!(p.validate().is_err());
    }
}
