//! Trigonometric estimates and proof-level constructions.
//!
//! With `theta_i = 0` a triangle with angles `(0, t1, t2)` has energy
//! `3 + 2 g(t1, t2)` and chirality `(2/(3 sqrt 3)) f(t1, t2)`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{self, Chain, LatticeDir, Point, Region, Triangle};
use crate::par;
use crate::spin::{self, GroundStateKind, SpinField, CHI_NORM};

const TAU: f64 = 2.0 * PI;

/// `3 sqrt(3) / 2`.
pub const F_MAX: f64 = 2.598_076_211_353_316;

pub fn f(t1: f64, t2: f64) -> f64 {
    t1.sin() + (t2 - t1).sin() - t2.sin()
}

pub fn g(t1: f64, t2: f64) -> f64 {
    t1.cos() + (t2 - t1).cos() + t2.cos()
}

/// `f` written as `4 sin(t1/2) sin((t2 - t1)/2) sin(t2/2)`.
pub fn f_product(t1: f64, t2: f64) -> f64 {
    4.0 * (t1 / 2.0).sin() * ((t2 - t1) / 2.0).sin() * (t2 / 2.0).sin()
}

fn f_grad_hess(a: f64, b: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    let (sa, ca) = a.sin_cos();
    let (sb, cb) = b.sin_cos();
    let (sd, cd) = (b - a).sin_cos();
    ([ca - cd, cd - cb], [[-sa - sd, sd], [sd, -sd + sb]])
}

fn g_grad_hess(a: f64, b: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    let (sa, ca) = a.sin_cos();
    let (sb, cb) = b.sin_cos();
    let (sd, cd) = (b - a).sin_cos();
    ([-sa + sd, -sd - sb], [[-ca - cd, cd], [cd, -cd - cb]])
}

/// Newton iterations on a stationary point of a smooth function of two variables.
fn newton2<F>(mut p: [f64; 2], gh: F) -> [f64; 2]
where
    F: Fn(f64, f64) -> ([f64; 2], [[f64; 2]; 2]),
{
    for _ in 0..50 {
        let (gr, h) = gh(p[0], p[1]);
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        if det.abs() < 1e-300 {
            break;
        }
        let dx = (h[1][1] * gr[0] - h[0][1] * gr[1]) / det;
        let dy = (-h[1][0] * gr[0] + h[0][0] * gr[1]) / det;
        p = [p[0] - dx, p[1] - dy];
        if dx.hypot(dy) < 1e-15 {
            break;
        }
    }
    p
}

/// Grid point of `[0, 2pi)^2` minimising `h`, ties to the first in row-major order.
fn grid_argmin<H>(n: usize, h: H) -> [f64; 2]
where
    H: Fn(f64, f64) -> f64 + Sync + Send,
{
    let step = TAU / n as f64;
    let rows = par::map_range(n, |a| {
        let t1 = a as f64 * step;
        let mut best = (f64::INFINITY, 0usize);
        for b in 0..n {
            let v = h(t1, b as f64 * step);
            if v < best.0 {
                best = (v, b);
            }
        }
        best
    });
    let mut best = (f64::INFINITY, 0usize, 0usize);
    for (a, (v, b)) in rows.into_iter().enumerate() {
        if v < best.0 {
            best = (v, a, b);
        }
    }
    [best.1 as f64 * step, best.2 as f64 * step]
}

/// Certified extrema of `f` and `g`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FgReport {
    pub max_f: f64,
    pub argmax_f: [f64; 2],
    pub min_f: f64,
    pub argmin_f: [f64; 2],
    pub min_g: f64,
    pub argmin_g: [f64; 2],
    /// `g` at the extrema of `f`.
    pub g_at_f_extrema: [f64; 2],
    /// `|f|` at the minimiser of `g`.
    pub abs_f_at_g_min: f64,
    pub sign_structure_ok: bool,
    pub failures: Vec<String>,
}

impl FgReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Grid scan plus Newton polish of the extrema of `f` and `g` on `[0, 2pi)^2`.
pub fn verify_fg_extrema(grid_n: usize) -> Result<FgReport> {
    if grid_n < 100 {
        return Err(Error::Precondition("grid_n must be at least 100".into()));
    }
    let wrap = |p: [f64; 2]| p.map(|x| x.rem_euclid(TAU));
    let argmax_f = wrap(newton2(grid_argmin(grid_n, |a, b| -f(a, b)), f_grad_hess));
    let argmin_f = wrap(newton2(grid_argmin(grid_n, f), f_grad_hess));
    let argmin_g = wrap(newton2(grid_argmin(grid_n, g), g_grad_hess));
    let max_f = f(argmax_f[0], argmax_f[1]);
    let min_f = f(argmin_f[0], argmin_f[1]);
    let min_g = g(argmin_g[0], argmin_g[1]);
    let g_at_f_extrema = [g(argmax_f[0], argmax_f[1]), g(argmin_f[0], argmin_f[1])];
    let abs_f_at_g_min = f(argmin_g[0], argmin_g[1]).abs();

    let mut failures = Vec::new();
    let tol = 1e-9;
    let mut check = |ok: bool, what: String| {
        if !ok {
            failures.push(what);
        }
    };
    check((max_f - F_MAX).abs() <= tol, format!("max f = {max_f} at {argmax_f:?}"));
    check((min_f + F_MAX).abs() <= tol, format!("min f = {min_f} at {argmin_f:?}"));
    check((min_g + 1.5).abs() <= tol, format!("min g = {min_g} at {argmin_g:?}"));
    check(
        g_at_f_extrema.iter().all(|v| (v + 1.5).abs() <= tol),
        format!("g at extrema of f = {g_at_f_extrema:?}"),
    );
    check((abs_f_at_g_min - F_MAX).abs() <= tol, format!("|f| at minimiser of g = {abs_f_at_g_min}"));
    let upper = [(argmax_f, 2.0 * PI / 3.0, 4.0 * PI / 3.0), (argmin_f, 4.0 * PI / 3.0, 2.0 * PI / 3.0)];
    for (p, a, b) in upper {
        check((p[0] - a).abs() <= 1e-6 && (p[1] - b).abs() <= 1e-6, format!("extremum of f located at {p:?}"));
    }

    let sign_failure = sign_structure_failure(64, 200);
    let sign_structure_ok = sign_failure.is_none();
    if let Some(s) = sign_failure {
        failures.push(s);
    }
    Ok(FgReport {
        max_f,
        argmax_f,
        min_f,
        argmin_f,
        min_g,
        argmin_g,
        g_at_f_extrema,
        abs_f_at_g_min,
        sign_structure_ok,
        failures,
    })
}

/// `f(., t2) > 0` on `(0, t2)` and `< 0` on `(t2, 2pi)` for sampled `t2`; returns the first offending point.
fn sign_structure_failure(n_t2: usize, n_t1: usize) -> Option<String> {
    for a in 1..n_t2 {
        let t2 = TAU * a as f64 / n_t2 as f64;
        for b in 1..n_t1 {
            let t1 = TAU * b as f64 / n_t1 as f64;
            if (t1 - t2).abs() < 1e-9 {
                continue;
            }
            let v = f(t1, t2);
            let expected = if t1 < t2 { 1.0 } else { -1.0 };
            if v * expected <= 0.0 || f_product(t1, t2) * expected <= 0.0 {
                return Some(format!("sign of f({t1}, {t2}) = {v}"));
            }
        }
    }
    None
}

/// Minimiser of a unimodal function on `[a, b]` by golden-section search.
pub fn golden_min<F: Fn(f64) -> f64>(h: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (h(c), h(d));
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = h(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = h(d);
        }
    }
    let x = 0.5 * (a + b);
    let mut best = (x, h(x));
    for e in [a, b] {
        let v = h(e);
        if v < best.1 {
            best = (e, v);
        }
    }
    best
}

/// Grid over `[a, b]` followed by golden-section search in the best cell.
pub fn grid_golden_min<F: Fn(f64) -> f64>(h: F, a: f64, b: f64, n: usize) -> (f64, f64) {
    if b <= a {
        return (a, h(a));
    }
    let step = (b - a) / n as f64;
    let mut best = (a, h(a));
    for s in 1..=n {
        let x = a + s as f64 * step;
        let v = h(x);
        if v < best.1 {
            best = (x, v);
        }
    }
    let lo = (best.0 - step).max(a);
    let hi = (best.0 + step).min(b);
    let refined = golden_min(&h, lo, hi, 1e-13);
    if refined.1 <= best.1 {
        refined
    } else {
        best
    }
}

/// Minimum over ordered triples of the opposite-chirality pair energy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairBound {
    pub value: f64,
    pub argmin: (f64, f64, f64),
}

/// `min over t1 in [0, t2], t3 in [t2, 2pi)` of `6 + 2(g(t1, t2) + g(t3, t2))`, with its argmin.
pub fn opposite_pair_at(t2: f64) -> PairBound {
    let (t1, g1) = grid_golden_min(|t| g(t, t2), 0.0, t2, 400);
    let (t3, g3) = grid_golden_min(|t| g(t, t2), t2, TAU, 400);
    PairBound { value: 6.0 + 2.0 * (g1 + g3), argmin: (t1, t2, t3) }
}

/// Constrained minimum of `6 + 2(g(t1, t2) + g(t3, t2))` over `0 <= t1 <= t2 <= t3 < 2pi`.
///
/// Two values of `t2` attain the minimum; the larger one is reported.
pub fn min_opposite_pair() -> PairBound {
    let n = 2000;
    let step = TAU / n as f64;
    let vals = par::map_range(n, |s| opposite_pair_at(s as f64 * step).value);
    let best_value = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    // Refine every local minimum of the grid within reach of the best one.
    let mut candidates = Vec::new();
    for s in 0..n {
        let left = vals[(s + n - 1) % n];
        let right = vals[(s + 1) % n];
        if vals[s] <= left && vals[s] <= right && vals[s] <= best_value + 1e-2 {
            let lo = ((s as f64 - 1.0) * step).max(0.0);
            let hi = ((s as f64 + 1.0) * step).min(TAU);
            let (t2, _) = golden_min(|t| opposite_pair_at(t).value, lo, hi, 1e-12);
            candidates.push(opposite_pair_at(t2));
        }
    }
    let min = candidates.iter().map(|c| c.value).fold(f64::INFINITY, f64::min);
    candidates
        .into_iter()
        .filter(|c| c.value <= min + 1e-12)
        .max_by(|a, b| a.argmin.1.total_cmp(&b.argmin.1))
        .expect("grid has a minimum")
}

/// `C_delta = inf { 3 + 2 g(tj, tk) : |chi(0, tj, tk)| < 1 - delta }`.
pub fn estimate_c_delta(delta: f64, grid_n: usize) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Precondition(format!("delta must lie in (0, 1), got {delta}")));
    }
    if grid_n < 10 {
        return Err(Error::Precondition("grid_n must be at least 10".into()));
    }
    let feasible = |a: f64, b: f64| (CHI_NORM * f(a, b)).abs() < 1.0 - delta - 1e-12;
    let energy = |a: f64, b: f64| 3.0 + 2.0 * g(a, b);
    let masked = |a: f64, b: f64| if feasible(a, b) { energy(a, b) } else { f64::INFINITY };
    let mut center = grid_argmin(grid_n, masked);
    if !masked(center[0], center[1]).is_finite() {
        return Err(Error::Empty(format!("no feasible point for delta = {delta}")));
    }
    let mut best = masked(center[0], center[1]);
    let mut half = TAU / grid_n as f64;
    let m = 40;
    for _ in 0..40 {
        let step = 2.0 * half / m as f64;
        let mut next = center;
        for a in 0..=m {
            for b in 0..=m {
                let p = [center[0] - half + a as f64 * step, center[1] - half + b as f64 * step];
                let v = masked(p[0], p[1]);
                if v < best {
                    best = v;
                    next = p;
                }
            }
        }
        center = next;
        half *= 0.25;
        if half < 1e-13 {
            break;
        }
    }
    Ok(best)
}

/// Lifted angles `theta_i, theta_j, theta_k` on a triangle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftedTriple {
    pub theta_i: f64,
    pub theta_j: f64,
    pub theta_k: f64,
}

impl LiftedTriple {
    pub fn new(theta_i: f64, theta_j: f64, theta_k: f64) -> Result<Self> {
        let t = Self { theta_i, theta_j, theta_k };
        let in_window = |x: f64, c: f64| x >= c - PI && x < c + PI;
        if !in_window(theta_j, theta_i) {
            return Err(Error::Precondition("theta_j must lie in [theta_i - pi, theta_i + pi)".into()));
        }
        if !in_window(theta_k, theta_j) {
            return Err(Error::Precondition("theta_k must lie in [theta_j - pi, theta_j + pi)".into()));
        }
        Ok(t)
    }

    /// Lifts read off a field by centred windows, starting from `theta_i` as stored.
    pub fn from_field(u: &SpinField, t: &Triangle) -> Result<Self> {
        let [a, b, c] = u.triangle_angles(t)?;
        let j = a + wrap_pi(b - a);
        let k = j + wrap_pi(c - j);
        Self::new(a, j, k)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.theta_i, self.theta_j, self.theta_k]
    }
}

/// Reduction into `[-pi, pi)`.
pub fn wrap_pi(x: f64) -> f64 {
    let r = (x + PI).rem_euclid(TAU) - PI;
    if r >= PI {
        r - TAU
    } else {
        r
    }
}

/// Data of one interpolation along a half-slice.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpolationPlan {
    pub t0: Triangle,
    pub dir: LatticeDir,
    pub n: usize,
    pub m: i64,
    pub lift: LiftedTriple,
    /// Ground state reached at step `n`.
    pub target: GroundStateKind,
}

impl InterpolationPlan {
    /// Plan along `e_alpha` reaching `u^pos`.
    pub fn new(t0: Triangle, alpha: u8, n: usize, m: i64, lift: LiftedTriple) -> Result<Self> {
        if !(1..=3).contains(&alpha) {
            return Err(Error::Precondition("alpha must be 1, 2 or 3".into()));
        }
        let p = Self { t0, dir: LatticeDir::from_alpha(alpha, 1), n, m, lift, target: GroundStateKind::Pos };
        p.validate()?;
        Ok(p)
    }

    fn sign(&self) -> f64 {
        match self.target {
            GroundStateKind::Pos => 1.0,
            GroundStateKind::Neg => -1.0,
        }
    }

    /// Target lifts `2 pi m + (0, s 2pi/3, s 4pi/3)`.
    pub fn target_angles(&self) -> [f64; 3] {
        let base = TAU * self.m as f64;
        let s = self.sign();
        [base, base + s * TAU / 3.0, base + s * 2.0 * TAU / 3.0]
    }

    pub fn validate(&self) -> Result<()> {
        if !self.t0.is_valid() {
            return Err(Error::InvalidTriangle(format!("{:?}", self.t0)));
        }
        if self.n == 0 {
            return Err(Error::Precondition("N must be at least 1".into()));
        }
        if self.m < 1 {
            return Err(Error::Precondition("m must be at least 1".into()));
        }
        let l = self.lift;
        LiftedTriple::new(l.theta_i, l.theta_j, l.theta_k)?;
        let s = self.sign();
        if (l.theta_j - l.theta_i - s * TAU / 3.0).abs() > 0.25 + 1e-12 {
            return Err(Error::Precondition(format!(
                "|theta_j - theta_i - 2pi/3| = {} exceeds 1/4",
                (l.theta_j - l.theta_i - s * TAU / 3.0).abs()
            )));
        }
        if (l.theta_k - l.theta_j - s * TAU / 3.0).abs() > 0.25 + 1e-12 {
            return Err(Error::Precondition(format!(
                "|theta_k - theta_j - 2pi/3| = {} exceeds 1/4",
                (l.theta_k - l.theta_j - s * TAU / 3.0).abs()
            )));
        }
        if TAU * (self.m as f64) < l.theta_i.abs() + TAU - 1e-12 {
            return Err(Error::Precondition(format!("2 pi m = {} is below |theta_i| + 2 pi", TAU * self.m as f64)));
        }
        Ok(())
    }

    /// Angles on `T_h`.
    pub fn angles_at(&self, h: usize) -> [f64; 3] {
        let target = self.target_angles();
        if h >= self.n {
            return target;
        }
        let s = h as f64 / self.n as f64;
        let start = self.lift.as_array();
        [0, 1, 2].map(|v| (1.0 - s) * start[v] + s * target[v])
    }
}

/// Field of an interpolation on `T_0, ..., T_{n+extra}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Interpolation {
    pub field: SpinField,
    pub steps: Vec<Triangle>,
    /// Steps together with the gap triangles between them.
    pub hull: Vec<Triangle>,
}

impl Interpolation {
    pub fn energy(&self) -> f64 {
        spin::energy_triangles(&self.field, &self.hull).expect("field covers the hull")
    }
}

/// Interpolated field on `T_0, ..., T_{N + extra}`.
pub fn interpolate_steps(plan: &InterpolationPlan, eps: f64, extra: usize) -> Result<Interpolation> {
    plan.validate()?;
    let steps = lattice::half_slice_dir(&plan.t0, plan.dir, plan.n + extra)?;
    let mut field = SpinField::new(eps);
    for (h, t) in steps.iter().enumerate() {
        let a = plan.angles_at(h);
        for (v, th) in t.vertices().into_iter().zip(a) {
            field.set(v, th);
        }
    }
    let hull = lattice::half_slice_hull(&steps);
    Ok(Interpolation { field, steps, hull })
}

/// Interpolated field on `T_0, ..., T_{N+1}`.
pub fn interpolate_1d(plan: &InterpolationPlan, eps: f64) -> Result<Interpolation> {
    interpolate_steps(plan, eps, 1)
}

/// Fitted constant of the interpolation energy bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpolationFit {
    pub constant: f64,
    /// `F(u^{N,m}) / (N F(u, T_0) + eps m^2 / N)` per sample.
    pub ratios: Vec<f64>,
}

/// Smallest `C` with `F(u^{N,m}) <= C (N F(u, T_0) + eps m^2 / N)` on all samples.
pub fn fit_interpolation_constant(samples: &[InterpolationPlan], eps: f64) -> Result<InterpolationFit> {
    let ratios = par::map_slice(samples, |p| -> Result<f64> {
        let it = interpolate_1d(p, eps)?;
        let f0 = spin::energy_from_vectors(eps, p.lift.as_array());
        let scale = p.n as f64 * f0 + eps * (p.m * p.m) as f64 / p.n as f64;
        Ok(it.energy() / scale)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let constant = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(InterpolationFit { constant, ratios })
}

/// Random lift satisfying the interpolation hypotheses for winding `m`.
pub fn random_admissible_lift<R: Rng>(rng: &mut R, m: i64) -> LiftedTriple {
    let l = PI.min(TAU * (m - 1) as f64);
    let ti = if l > 0.0 { rng.random_range(-l..=l) } else { 0.0 };
    let tj = ti + TAU / 3.0 + rng.random_range(-0.25..=0.25);
    let tk = tj + TAU / 3.0 + rng.random_range(-0.25..=0.25);
    LiftedTriple { theta_i: ti, theta_j: tj, theta_k: tk }
}

/// The sample suite `N in ns`, `m in ms`, ground start plus `random_per_cell` random lifts each.
pub fn interpolation_suite(ns: &[usize], ms: &[i64], random_per_cell: usize, seed: u64) -> Result<Vec<InterpolationPlan>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t0 = Triangle::up(0, 0);
    let ground = LiftedTriple { theta_i: 0.0, theta_j: TAU / 3.0, theta_k: 2.0 * TAU / 3.0 };
    let mut out = Vec::new();
    for &n in ns {
        for &m in ms {
            out.push(InterpolationPlan::new(t0, 1, n, m, ground)?);
            for _ in 0..random_per_cell {
                out.push(InterpolationPlan::new(t0, 1, n, m, random_admissible_lift(&mut rng, m))?);
            }
        }
    }
    Ok(out)
}

/// Strip chosen by averaging.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StripChoice {
    pub delta: f64,
    pub r: f64,
    /// Position `m` of the chosen strip in the family.
    pub index: usize,
    pub strip: Region,
    pub g_value: f64,
    /// `G` for every strip in the family.
    pub candidates: Vec<f64>,
    /// Right-hand side of the averaging bound.
    pub average_bound: f64,
}

/// Triangles of a strip `Q_{r + 12 eps} \ (closure Q_r u closure R_{1, delta})`.
pub fn strip_region(nu: Point, r: f64, delta: f64, eps: f64) -> Result<Region> {
    let outer = Region::square(nu, r + 12.0 * eps)?;
    let inner = Region::square(nu, r)?.closure();
    let band = Region::rect(nu, 1.0, delta)?.closure();
    Ok(outer.minus(inner.union(band)))
}

fn g_functional(u: &SpinField, tris: &[Triangle], nu: Point) -> Result<f64> {
    let target = spin::chi_nu(nu);
    let area = Triangle::area(u.eps);
    let mut total = spin::energy_triangles(u, tris)?;
    for t in tris {
        total += area * (spin::chirality_triangle(u, t)? - target(t.barycenter(u.eps))).abs();
    }
    Ok(total)
}

/// Strip `S_{eps, r_m}` with `r_m = 1 - 3 delta + 12 m eps` minimising `F + ||chi - chi_nu||_{L1}`.
pub fn select_strip(u: &SpinField, nu: Point, delta: f64, eps: f64) -> Result<StripChoice> {
    if !(delta > 0.0 && delta < 1.0 / 3.0) {
        return Err(Error::Precondition(format!("delta must lie in (0, 1/3), got {delta}")));
    }
    let nu = lattice::normalize(nu)?;
    let count = (delta / (12.0 * eps)).floor() as usize;
    if count == 0 {
        return Err(Error::Construction {
            step: "strip selection",
            reason: format!("floor(delta / (12 eps)) = 0 for delta = {delta}, eps = {eps}: no admissible strip"),
        });
    }
    let radii: Vec<f64> = (0..count).map(|m| 1.0 - 3.0 * delta + 12.0 * m as f64 * eps).collect();
    let values = par::map_slice(&radii, |&r| -> Result<f64> {
        let tris = lattice::triangles_in(&strip_region(nu, r, delta, eps)?, eps)?;
        g_functional(u, &tris, nu)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut index = 0;
    for (m, v) in values.iter().enumerate() {
        if *v < values[index] {
            index = m;
        }
    }
    let q = Region::square(nu, 1.0)?;
    let off_band = Region::square(nu, 1.0)?.minus(Region::rect(nu, 1.0, delta)?.closure());
    let f_off = spin::energy_region(u, &off_band)?;
    let chi_q = spin::chirality_field(u, &q)?;
    let l1 = spin::l1_chirality_distance(&chi_q, spin::chi_nu(nu), &q);
    Ok(StripChoice {
        delta,
        r: radii[index],
        index,
        strip: strip_region(nu, radii[index], delta, eps)?,
        g_value: values[index],
        candidates: values,
        average_bound: (f_off + l1) / count as f64,
    })
}

/// Largest excursion of the recursive lifts along a chain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindingDrift {
    pub max_drift_i: f64,
    pub max_drift_j: f64,
    pub max_drift_k: f64,
}

impl WindingDrift {
    pub fn max(&self) -> f64 {
        self.max_drift_i.max(self.max_drift_j).max(self.max_drift_k)
    }
}

/// Lifts `theta_{z+1} = theta_z + wrap(raw_{z+1} - theta_z)` per sublattice along the chain.
pub fn winding_drift(u: &SpinField, chain: &Chain) -> Result<WindingDrift> {
    let mut drift = [0.0f64; 3];
    let Some(first) = chain.triangles.first() else {
        return Ok(WindingDrift { max_drift_i: 0.0, max_drift_j: 0.0, max_drift_k: 0.0 });
    };
    let start = u.triangle_angles(first)?;
    let mut prev = start;
    for t in &chain.triangles[1..] {
        let raw = u.triangle_angles(t)?;
        for v in 0..3 {
            prev[v] += wrap_pi(raw[v] - prev[v]);
            drift[v] = drift[v].max((prev[v] - start[v]).abs());
        }
    }
    Ok(WindingDrift { max_drift_i: drift[0], max_drift_j: drift[1], max_drift_k: drift[2] })
}

/// Key/value verification report of the closed-form estimates.
pub fn verification_report(grid_n: usize) -> Result<(String, bool)> {
    use crate::optimize::fmt9;
    let mut s = String::new();
    let mut ok = true;
    let fg = verify_fg_extrema(grid_n)?;
    ok &= fg.passed();
    let _ = writeln!(s, "fg_max_f={}", fmt9(fg.max_f));
    let _ = writeln!(s, "fg_argmax_f={},{}", fmt9(fg.argmax_f[0]), fmt9(fg.argmax_f[1]));
    let _ = writeln!(s, "fg_min_f={}", fmt9(fg.min_f));
    let _ = writeln!(s, "fg_min_g={}", fmt9(fg.min_g));
    let _ = writeln!(s, "fg_sign_structure={}", fg.sign_structure_ok);
    let _ = writeln!(s, "fg_status={}", if fg.passed() { "pass" } else { "fail" });
    for f in &fg.failures {
        let _ = writeln!(s, "fg_failure={f}");
    }
    let pair = min_opposite_pair();
    let pair_ok = (pair.value - 5.0 / 3.0).abs() <= 1e-6;
    ok &= pair_ok;
    let _ = writeln!(s, "min_opposite_pair={}", fmt9(pair.value));
    let _ = writeln!(
        s,
        "min_opposite_pair_argmin={},{},{}",
        fmt9(pair.argmin.0),
        fmt9(pair.argmin.1),
        fmt9(pair.argmin.2)
    );
    let _ = writeln!(s, "min_opposite_pair_status={}", if pair_ok { "pass" } else { "fail" });
    let mut prev = 0.0;
    let mut mono = true;
    for d in 1..=9 {
        let delta = d as f64 / 10.0;
        let c = estimate_c_delta(delta, 400)?;
        mono &= c > 0.0 && c >= prev - 1e-12;
        prev = c;
        let _ = writeln!(s, "c_delta_{:.1}={}", delta, fmt9(c));
    }
    ok &= mono;
    let _ = writeln!(s, "c_delta_status={}", if mono { "pass" } else { "fail" });
    let ground = LiftedTriple { theta_i: 0.0, theta_j: TAU / 3.0, theta_k: 2.0 * TAU / 3.0 };
    let e = interpolate_1d(&InterpolationPlan::new(Triangle::up(0, 0), 1, 2, 1, ground)?, 1.0)?.energy();
    let e_ok = (e - 16.0).abs() <= 1e-12 * 16.0;
    ok &= e_ok;
    let _ = writeln!(s, "interpolation_energy_n2_m1={}", fmt9(e));
    let _ = writeln!(s, "interpolation_status={}", if e_ok { "pass" } else { "fail" });
    let _ = writeln!(s, "overall={}", if ok { "pass" } else { "fail" });
    Ok((s, ok))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wells() {
        assert!((f(TAU / 3.0, 2.0 * TAU / 3.0) - F_MAX).abs() < 1e-14);
        assert!((g(TAU / 3.0, 2.0 * TAU / 3.0) + 1.5).abs() < 1e-14);
    }

    #[test]
    fn wrap_window() {
        assert_eq!(wrap_pi(PI), -PI);
        assert!((wrap_pi(3.0 * PI + 0.1) - (-PI + 0.1)).abs() < 1e-12);
        assert!((wrap_pi(-0.5) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn golden_finds_parabola_vertex() {
        let (x, v) = golden_min(|x| (x - 0.3).powi(2), -1.0, 2.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-6 && v < 1e-12);
    }
}
