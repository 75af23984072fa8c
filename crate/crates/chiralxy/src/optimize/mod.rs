//! The surface-tension cell problem.
//!
//! On `Q^nu_rho` the sites near the top boundary are pinned to `u^pos`, those
//! near the bottom to `u^neg`, and the energy is minimised over the remaining
//! angles. `phi(nu)` is the limit of `m_eps(nu) / rho` as `eps -> 0`.

pub mod lbfgs;

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{self, dot, position, LatticeIndex, Point, Region, Triangle};
use crate::par;
use crate::spin::{self, ground_angle, GroundStateKind, SpinField};

/// Energies within this distance of the best are reported as near-degenerate.
pub const DEGENERACY_TOLERANCE: f64 = 1e-6;

/// A boundary-pinned minimisation instance.
#[derive(Clone, Debug)]
pub struct CellProblem {
    pub nu: Point,
    pub rho: f64,
    pub eps: f64,
    /// Every site of every triangle, sorted.
    pub sites: Vec<LatticeIndex>,
    /// Indices into `sites` of the free sites, sorted.
    pub free: Vec<u32>,
    /// Pinned sites with their angles.
    pub pinned: Vec<(u32, f64)>,
    pub pinned_pos: BTreeSet<LatticeIndex>,
    pub pinned_neg: BTreeSet<LatticeIndex>,
    pub triangles: Vec<Triangle>,
    tri_sites: Vec<[u32; 3]>,
    /// Angles of pinned sites; free entries are overwritten during evaluation.
    base: Vec<f64>,
    /// For each free site, `(neighbour site, number of shared triangles)`.
    adj_start: Vec<usize>,
    adj: Vec<(u32, f64)>,
}

impl CellProblem {
    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn free_sites(&self) -> Vec<LatticeIndex> {
        self.free.iter().map(|&s| self.sites[s as usize]).collect()
    }

    pub fn region(&self) -> Region {
        Region::square(self.nu, self.rho).expect("valid square")
    }

    /// Sharp-interface ansatz restricted to the free sites.
    pub fn ansatz(&self) -> Vec<f64> {
        self.free
            .iter()
            .map(|&s| {
                let x = self.sites[s as usize];
                let kind = if dot(position(x, self.eps), self.nu) >= 0.0 { GroundStateKind::Pos } else { GroundStateKind::Neg };
                ground_angle(kind, x)
            })
            .collect()
    }

    fn full_angles(&self, free: &[f64]) -> Vec<f64> {
        let mut a = self.base.clone();
        for (&s, v) in self.free.iter().zip(free) {
            a[s as usize] = *v;
        }
        a
    }

    /// Energy of the free-angle vector.
    pub fn energy(&self, free: &[f64]) -> f64 {
        let a = self.full_angles(free);
        self.energy_full(&a)
    }

    fn energy_full(&self, a: &[f64]) -> f64 {
        let eps = self.eps;
        par::sum_chunked(self.tri_sites.len(), |r| {
            self.tri_sites[r]
                .iter()
                .map(|t| spin::energy_from_angles(eps, [a[t[0] as usize], a[t[1] as usize], a[t[2] as usize]]))
                .sum()
        })
    }

    /// Energy and gradient with respect to the free angles.
    pub fn energy_and_gradient(&self, free: &[f64], grad: &mut [f64]) -> f64 {
        assert_eq!(free.len(), self.free.len());
        assert_eq!(grad.len(), self.free.len());
        let a = self.full_angles(free);
        let eps = self.eps;
        par::fill(grad, |f| {
            let x = a[self.free[f] as usize];
            let mut s = 0.0;
            for &(y, mult) in &self.adj[self.adj_start[f]..self.adj_start[f + 1]] {
                s += mult * (x - a[y as usize]).sin();
            }
            -2.0 * eps * s
        });
        self.energy_full(&a)
    }

    /// Global field from a free-angle vector.
    pub fn field(&self, free: &[f64]) -> SpinField {
        let a = self.full_angles(free);
        SpinField { eps: self.eps, angles: self.sites.iter().copied().zip(a).collect() }
    }

    /// Free-angle vector read off a field defined on the problem sites.
    pub fn free_from_field(&self, u: &SpinField) -> Result<Vec<f64>> {
        self.free.iter().map(|&s| u.angle(self.sites[s as usize])).collect()
    }

    /// Whether `u` carries the boundary values site-exactly (angles mod `2 pi`).
    pub fn satisfies_boundary(&self, u: &SpinField) -> bool {
        self.pinned.iter().all(|&(s, v)| u.angle(self.sites[s as usize]).is_ok_and(|w| same_angle(v, w)))
    }
}

/// `a == b` modulo `2 pi`, to `1e-9`.
pub fn same_angle(a: f64, b: f64) -> bool {
    let d = (a - b).rem_euclid(2.0 * PI);
    d < 1e-9 || 2.0 * PI - d < 1e-9
}

/// Builds the cell problem on `Q^nu_rho`.
pub fn assemble_cell(nu: Point, rho: f64, eps: f64) -> Result<CellProblem> {
    let nu = lattice::normalize(nu)?;
    if !(eps > 0.0 && 6.0 * eps < rho) {
        return Err(Error::Precondition(format!("need 0 < 6 eps < rho (eps = {eps}, rho = {rho})")));
    }
    let region = Region::square(nu, rho)?;
    let triangles = lattice::triangles_in(&region, eps)?;
    let sites = lattice::vertex_set(&triangles);
    let present: BTreeSet<LatticeIndex> = sites.iter().copied().collect();
    let pos: BTreeSet<LatticeIndex> =
        lattice::discrete_boundary(nu, rho, eps, 1.0)?.into_iter().filter(|x| present.contains(x)).collect();
    let neg: BTreeSet<LatticeIndex> =
        lattice::discrete_boundary(nu, rho, eps, -1.0)?.into_iter().filter(|x| present.contains(x)).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Empty("a discrete boundary set has no site on a contained triangle; use a smaller eps".into()));
    }
    let index: BTreeMap<LatticeIndex, u32> = sites.iter().enumerate().map(|(n, x)| (*x, n as u32)).collect();
    let mut base = vec![0.0; sites.len()];
    let mut free = Vec::new();
    let mut pinned = Vec::new();
    let mut slot = vec![u32::MAX; sites.len()];
    for (n, x) in sites.iter().enumerate() {
        if pos.contains(x) {
            base[n] = ground_angle(GroundStateKind::Pos, *x);
            pinned.push((n as u32, base[n]));
        } else if neg.contains(x) {
            base[n] = ground_angle(GroundStateKind::Neg, *x);
            pinned.push((n as u32, base[n]));
        } else {
            slot[n] = free.len() as u32;
            free.push(n as u32);
        }
    }
    let tri_sites: Vec<[u32; 3]> = triangles.iter().map(|t| t.vertices().map(|v| index[&v])).collect();
    let mut lists: Vec<BTreeMap<u32, f64>> = vec![BTreeMap::new(); free.len()];
    for t in &tri_sites {
        for a in 0..3 {
            let f = slot[t[a] as usize];
            if f == u32::MAX {
                continue;
            }
            for b in 0..3 {
                if a != b {
                    *lists[f as usize].entry(t[b]).or_insert(0.0) += 1.0;
                }
            }
        }
    }
    let mut adj_start = Vec::with_capacity(free.len() + 1);
    let mut adj = Vec::new();
    adj_start.push(0);
    for l in lists {
        adj.extend(l);
        adj_start.push(adj.len());
    }
    Ok(CellProblem {
        nu,
        rho,
        eps,
        sites,
        free,
        pinned,
        pinned_pos: pos,
        pinned_neg: neg,
        triangles,
        tri_sites,
        base,
        adj_start,
        adj,
    })
}

/// Solver settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// `None` selects `1e-10 * eps * (number of free sites)`.
    pub grad_tolerance: Option<f64>,
    pub restarts: usize,
    pub perturbation_sigma: f64,
    /// Basin-hopping moves after each restart: perturb the current best
    /// minimiser by `hop_sigma` and keep the result if it is lower.
    pub hops: usize,
    pub hop_sigma: f64,
    pub rng_seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { max_iterations: 200_000, grad_tolerance: None, restarts: 8, perturbation_sigma: 0.3, hops: 20, hop_sigma: 1.0, rng_seed: 0 }
    }
}

impl SolverConfig {
    pub fn tolerance_for(&self, p: &CellProblem) -> f64 {
        self.grad_tolerance.unwrap_or(1e-10 * p.eps * p.n_free().max(1) as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::Precondition("restarts must be at least 1".into()));
        }
        if let Some(t) = self.grad_tolerance {
            if !(t > 0.0) {
                return Err(Error::Precondition("grad_tolerance must be positive".into()));
            }
        }
        if !(self.perturbation_sigma >= 0.0) {
            return Err(Error::Precondition("perturbation_sigma must be nonnegative".into()));
        }
        if !(self.hop_sigma >= 0.0) || !self.hop_sigma.is_finite() {
            return Err(Error::Precondition("hop_sigma must be nonnegative".into()));
        }
        Ok(())
    }
}

/// A cell problem together with its solver settings, as read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub nu_angle_rad: f64,
    #[serde(default = "one")]
    pub rho: f64,
    pub eps: f64,
    #[serde(default)]
    pub solver: SolverConfig,
}

fn one() -> f64 {
    1.0
}

impl ProblemConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        if !(c.eps > 0.0 && c.rho > 0.0 && 6.0 * c.eps < c.rho && c.nu_angle_rad.is_finite()) {
            return Err(Error::Precondition(format!("need finite nu and 0 < 6 eps < rho (eps = {}, rho = {})", c.eps, c.rho)));
        }
        c.solver.validate()?;
        Ok(c)
    }

    pub fn nu(&self) -> Point {
        lattice::unit_from_angle(self.nu_angle_rad)
    }
}

/// Outcome of one local minimisation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartOutcome {
    pub energy: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Best local minimum found by [`minimize`].
#[derive(Clone, Debug)]
pub struct SolveResult {
    pub min_energy: f64,
    pub field: SpinField,
    pub grad_norm: f64,
    pub iterations: usize,
    pub restart_index: usize,
    pub converged: bool,
    pub restarts: Vec<RestartOutcome>,
    /// Other restarts ending within [`DEGENERACY_TOLERANCE`] of the best in a different state.
    pub degenerate_restarts: Vec<usize>,
}

/// Starting point of restart `r` out of `total`.
pub fn initial_angles(problem: &CellProblem, config: &SolverConfig, r: usize) -> Vec<f64> {
    let mut x = problem.ansatz();
    if r == 0 {
        return x;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    rng.set_stream(r as u64);
    if config.restarts >= 2 && r == config.restarts - 1 {
        for v in &mut x {
            *v = rng.random_range(0.0..2.0 * PI);
        }
    } else if config.perturbation_sigma > 0.0 {
        let normal = Normal::new(0.0, config.perturbation_sigma).expect("finite sigma");
        for v in &mut x {
            *v += normal.sample(&mut rng);
        }
    }
    x
}

const HOP_SEED: u64 = 0x9e37_79b9_7f4a_7c15;

fn same_state(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| same_angle_tol(*x, *y, 1e-4))
}

fn same_angle_tol(a: f64, b: f64, tol: f64) -> bool {
    let d = (a - b).rem_euclid(2.0 * PI);
    d < tol || 2.0 * PI - d < tol
}

/// Multistart quasi-Newton minimisation.
pub fn minimize(problem: &CellProblem, config: &SolverConfig) -> Result<SolveResult> {
    config.validate()?;
    if problem.n_free() == 0 {
        let e = problem.energy(&[]);
        return Ok(SolveResult {
            min_energy: e,
            field: problem.field(&[]),
            grad_norm: 0.0,
            iterations: 0,
            restart_index: 0,
            converged: true,
            restarts: vec![RestartOutcome { energy: e, grad_norm: 0.0, iterations: 0, converged: true }],
            degenerate_restarts: Vec::new(),
        });
    }
    let params = lbfgs::Params {
        max_iterations: config.max_iterations,
        grad_tolerance: config.tolerance_for(problem),
        ..lbfgs::Params::default()
    };
    let runs = par::map_range(config.restarts, |r| {
        let x0 = initial_angles(problem, config, r);
        let mut best = lbfgs::minimize(|x, g| problem.energy_and_gradient(x, g), x0, &params);
        if config.hops > 0 && config.hop_sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed ^ HOP_SEED);
            rng.set_stream(r as u64);
            let normal = Normal::new(0.0, config.hop_sigma).expect("finite sigma");
            for _ in 0..config.hops {
                let x: Vec<f64> = best.x.iter().map(|v| v + normal.sample(&mut rng)).collect();
                let o = lbfgs::minimize(|x, g| problem.energy_and_gradient(x, g), x, &params);
                if o.f < best.f - 1e-9 {
                    best = o;
                }
            }
        }
        best
    });
    let mut best = 0;
    for (r, o) in runs.iter().enumerate() {
        if o.f < runs[best].f {
            best = r;
        }
    }
    let b = &runs[best];
    let degenerate_restarts = runs
        .iter()
        .enumerate()
        .filter(|(r, o)| *r != best && (o.f - b.f).abs() <= DEGENERACY_TOLERANCE && !same_state(&o.x, &b.x))
        .map(|(r, _)| r)
        .collect();
    Ok(SolveResult {
        min_energy: b.f,
        field: problem.field(&b.x),
        grad_norm: b.grad_norm,
        iterations: b.iterations,
        restart_index: best,
        converged: b.converged,
        restarts: runs
            .iter()
            .map(|o| RestartOutcome { energy: o.f, grad_norm: o.grad_norm, iterations: o.iterations, converged: o.converged })
            .collect(),
        degenerate_restarts,
    })
}

/// One rung of the `eps` ladder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiEntry {
    pub eps: f64,
    pub min_energy: f64,
    /// `min_energy / rho`.
    pub phi: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub restart_index: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiEstimate {
    pub nu: Point,
    pub rho: f64,
    /// Sorted by decreasing `eps`.
    pub entries: Vec<PhiEntry>,
    /// The entry at the smallest `eps`.
    pub extrapolated: f64,
}

/// The ladder `eps_k = 2^-k / 8`, `k = 0..n`.
pub fn eps_ladder(n: usize) -> Vec<f64> {
    (0..n).map(|k| 0.125 / (1u64 << k) as f64).collect()
}

fn solve_entry(nu: Point, rho: f64, eps: f64, config: &SolverConfig) -> Result<PhiEntry> {
    let p = assemble_cell(nu, rho, eps)?;
    let r = minimize(&p, config)?;
    Ok(PhiEntry {
        eps,
        min_energy: r.min_energy,
        phi: r.min_energy / rho,
        grad_norm: r.grad_norm,
        iterations: r.iterations,
        restart_index: r.restart_index,
        converged: r.converged,
    })
}

pub fn phi_estimate(nu: Point, rho: f64, eps_list: &[f64], config: &SolverConfig) -> Result<PhiEstimate> {
    if eps_list.is_empty() {
        return Err(Error::Precondition("eps list is empty".into()));
    }
    let nu = lattice::normalize(nu)?;
    let mut eps: Vec<f64> = eps_list.to_vec();
    eps.sort_by(|a, b| b.total_cmp(a));
    let entries = eps.iter().map(|&e| solve_entry(nu, rho, e, config)).collect::<Result<Vec<_>>>()?;
    let extrapolated = entries.last().expect("nonempty").phi;
    Ok(PhiEstimate { nu, rho, entries, extrapolated })
}

/// One row of the anisotropy table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub theta_rad: f64,
    pub eps: f64,
    pub min_energy: f64,
    pub phi_estimate: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub restart_index: usize,
    pub converged: bool,
}

pub const SWEEP_HEADER: [&str; 8] =
    ["theta_rad", "eps", "min_energy", "phi_estimate", "grad_norm", "iterations", "restart_index", "converged"];

/// `phi` estimates for `nu = (cos t, sin t)` at `t = 2 pi k / n_angles`.
pub fn anisotropy_sweep(n_angles: usize, rho: f64, eps_list: &[f64], config: &SolverConfig) -> Result<Vec<SweepRow>> {
    if n_angles < 4 {
        return Err(Error::Precondition("need at least 4 angles".into()));
    }
    let mut eps: Vec<f64> = eps_list.to_vec();
    eps.sort_by(|a, b| b.total_cmp(a));
    let jobs: Vec<(f64, f64)> = eps
        .iter()
        .flat_map(|&e| (0..n_angles).map(move |k| (2.0 * PI * k as f64 / n_angles as f64, e)))
        .collect();
    let rows = par::map_slice(&jobs, |&(t, e)| {
        solve_entry(lattice::unit_from_angle(t), rho, e, config).map(|en| SweepRow {
            theta_rad: t,
            eps: e,
            min_energy: en.min_energy,
            phi_estimate: en.phi,
            grad_norm: en.grad_norm,
            iterations: en.iterations,
            restart_index: en.restart_index,
            converged: en.converged,
        })
    });
    rows.into_iter().collect()
}

/// Formats a float with 9 significant digits.
pub fn fmt9(v: f64) -> String {
    if v == 0.0 {
        return "0.0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let s = format!("{:.8e}", v);
    let parsed: f64 = s.parse().expect("round trip");
    let mag = parsed.abs().log10().floor() as i32;
    if (-4..9).contains(&mag) {
        let decimals = (8 - mag).max(0) as usize;
        let mut out = format!("{:.*}", decimals, parsed);
        if out.contains('.') {
            while out.ends_with('0') {
                out.pop();
            }
            if out.ends_with('.') {
                out.push('0');
            }
        }
        out
    } else {
        s
    }
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(SWEEP_HEADER)?;
    for r in rows {
        wr.write_record([
            fmt9(r.theta_rad),
            fmt9(r.eps),
            fmt9(r.min_energy),
            fmt9(r.phi_estimate),
            fmt9(r.grad_norm),
            r.iterations.to_string(),
            r.restart_index.to_string(),
            r.converged.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Mean chirality in `bins` equal slabs of `<barycenter, nu>` across the cell;
/// empty bins are omitted.
pub fn wall_profile(problem: &CellProblem, result: &SolveResult, bins: usize) -> Result<Vec<(f64, f64)>> {
    if bins == 0 {
        return Err(Error::Precondition("bins must be positive".into()));
    }
    let half = problem.rho / 2.0;
    let width = problem.rho / bins as f64;
    let mut sum = vec![0.0; bins];
    let mut count = vec![0usize; bins];
    for t in &problem.triangles {
        let d = dot(t.barycenter(problem.eps), problem.nu);
        let b = (((d + half) / width).floor().max(0.0) as usize).min(bins - 1);
        sum[b] += spin::chirality_triangle(&result.field, t)?;
        count[b] += 1;
    }
    Ok((0..bins)
        .filter(|b| count[*b] > 0)
        .map(|b| (-half + (b as f64 + 0.5) * width, sum[b] / count[b] as f64))
        .collect())
}

/// `F(u, R^nu_{rho, delta rho}) / F(u, Q^nu_rho)`, or 1 for zero total energy.
pub fn energy_localization(problem: &CellProblem, field: &SpinField, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::Precondition("delta must be positive".into()));
    }
    let total = spin::energy_triangles(field, &problem.triangles)?;
    if total == 0.0 {
        return Ok(1.0);
    }
    let strip = Region::rect(problem.nu, problem.rho, delta.min(1.0) * problem.rho)?;
    let inner: Vec<Triangle> =
        problem.triangles.iter().filter(|t| strip.contains_triangle(t, problem.eps)).copied().collect();
    Ok(spin::energy_triangles(field, &inner)? / total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_digit_formatting() {
        assert_eq!(fmt9(5.0 / 3.0), "1.66666667");
        assert_eq!(fmt9(0.0), "0.0");
        assert_eq!(fmt9(0.125), "0.125");
        assert_eq!(fmt9(1e-9), "1.00000000e-9");
    }

    #[test]
    fn ladder() {
        assert_eq!(eps_ladder(3), vec![0.125, 0.0625, 0.03125]);
    }
}
