//! Acceptance suite: one line per criterion, nonzero exit if any criterion fails.

use std::f64::consts::{PI, TAU};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use chiralxy::analysis::{self, InterpolationPlan, LiftedTriple};
use chiralxy::lattice::{self, LatticeDir, LatticeIndex, Region, Triangle};
use chiralxy::optimize::{self, assemble_cell, minimize, SolverConfig};
use chiralxy::recovery::{self, CellField, PolygonalInterface};
use chiralxy::spin::{self, GroundStateKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(t: Instant, limit: Duration) -> (bool, String) {
    let e = t.elapsed();
    (e <= limit, format!("{:.2}s (limit {}s)", e.as_secs_f64(), limit.as_secs()))
}

fn c1_fg() -> Outcome {
    let t = Instant::now();
    let r = analysis::verify_fg_extrema(1000).unwrap();
    let max_f = 1.5 * 3f64.sqrt();
    let ok_max = (r.max_f - max_f).abs() <= 1e-9;
    let ok_arg = (r.argmax_f[0] - TAU / 3.0).abs() <= 1e-6 && (r.argmax_f[1] - 2.0 * TAU / 3.0).abs() <= 1e-6;
    let ok_g = (r.min_g + 1.5).abs() <= 1e-9;
    let (ok_t, time) = within(t, Duration::from_secs(5));
    outcome(
        ok_max && ok_arg && ok_g && ok_t,
        format!(
            "max f = {:.12} at ({:.9}, {:.9}), min g = {:.12}, {time}",
            r.max_f, r.argmax_f[0], r.argmax_f[1], r.min_g
        ),
    )
}

fn c2_pair() -> Outcome {
    let t = Instant::now();
    let b = analysis::min_opposite_pair();
    let arg = 2.0 * (-1.0f64 / 6.0).acos();
    let ok = (b.value - 5.0 / 3.0).abs() <= 1e-6 && (b.argmin.1 - arg).abs() <= 1e-4;
    let (ok_t, time) = within(t, Duration::from_secs(10));
    outcome(ok && ok_t, format!("min = {:.9}, argmin theta2 = {:.7} (expected {:.7}), {time}", b.value, b.argmin.1, arg))
}

fn c3_ground() -> Outcome {
    let eps = 0.02;
    let sites: Vec<LatticeIndex> = (0..50).flat_map(|a| (0..50).map(move |b| LatticeIndex::new(a, b))).collect();
    let mut tris = Vec::new();
    for a in 0..49 {
        for b in 0..49 {
            tris.push(Triangle::up(a, b));
            tris.push(Triangle::down(a, b));
        }
    }
    let mut worst_e: f64 = 0.0;
    let mut worst_chi: f64 = 0.0;
    for (kind, s) in [(GroundStateKind::Pos, 1.0), (GroundStateKind::Neg, -1.0)] {
        let u = spin::ground_state(kind, eps, sites.iter().copied());
        worst_e = worst_e.max(spin::energy_triangles(&u, &tris).unwrap().abs());
        for t in &tris {
            worst_chi = worst_chi.max((spin::chirality_triangle(&u, t).unwrap() - s).abs());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_form: f64 = 0.0;
    for _ in 0..1000 {
        let a = [0; 3].map(|_| rng.random_range(-20.0..20.0));
        worst_form = worst_form.max((spin::energy_from_angles(eps, a) - spin::energy_from_vectors(eps, a)).abs());
    }
    outcome(
        worst_e <= 1e-12 && worst_chi <= 1e-12 && worst_form <= 1e-12,
        format!("max F = {worst_e:.2e}, max |chi -+ 1| = {worst_chi:.2e}, max form gap = {worst_form:.2e}"),
    )
}

fn c4_gradient() -> Outcome {
    let t = Instant::now();
    // Smallest admissible cell.
    let p = assemble_cell([0.0, 1.0], 0.87, 0.125).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let x: Vec<f64> = (0..p.n_free()).map(|_| rng.random_range(0.0..TAU)).collect();
        let mut g = vec![0.0; x.len()];
        p.energy_and_gradient(&x, &mut g);
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let h = 1e-5;
        let mut err: f64 = 0.0;
        for i in 0..x.len() {
            let mut a = x.clone();
            let mut b = x.clone();
            a[i] += h;
            b[i] -= h;
            err = err.max(((p.energy(&a) - p.energy(&b)) / (2.0 * h) - g[i]).abs());
        }
        worst = worst.max(err / gmax.max(1e-12));
    }
    let (ok_t, time) = within(t, Duration::from_secs(1));
    outcome(
        worst <= 1e-6 && ok_t,
        format!("{} triangles, {} free sites, max relative error = {worst:.2e}, {time}", p.triangles.len(), p.n_free()),
    )
}

fn solve(nu: [f64; 2], rho: f64, eps: f64, cfg: &SolverConfig) -> optimize::SolveResult {
    minimize(&assemble_cell(nu, rho, eps).unwrap(), cfg).unwrap()
}

fn c5_symmetry() -> Outcome {
    let t = Instant::now();
    let cfg = SolverConfig::default();
    let nu = [0.0, 1.0];
    let m = solve(nu, 1.0, 0.125, &cfg).min_energy;
    let mm = solve([0.0, -1.0], 1.0, 0.125, &cfg).min_energy;
    let r = [-(TAU / 3.0).sin(), (TAU / 3.0).cos()];
    let mr = solve(r, 1.0, 0.125, &cfg).min_energy;
    let d1 = (m - mm).abs() / m;
    let d2 = (m - mr).abs() / m;
    let (ok_t, time) = within(t, Duration::from_secs(120));
    outcome(
        d1 <= 1e-6 && d2 <= 1e-6 && ok_t,
        format!("m(nu) = {m:.9}, m(-nu) = {mm:.9}, m(R nu) = {mr:.9}, rel gaps {d1:.1e} / {d2:.1e}, {time}"),
    )
}

fn ladder(cfg: &SolverConfig) -> Vec<f64> {
    [0.125, 0.0625, 0.03125].iter().map(|&e| solve([0.0, 1.0], 1.0, e, cfg).min_energy).collect()
}

fn c6_ladder() -> Outcome {
    let t = Instant::now();
    let m = ladder(&SolverConfig::default());
    let gap = (m[1] - m[2]).abs() / m[2];
    let (ok_t, time) = within(t, Duration::from_secs(900));
    outcome(
        m.iter().all(|v| *v > 0.0) && gap <= 0.1 && ok_t,
        format!("m = {:.6} / {:.6} / {:.6}, |m16 - m32| / m32 = {gap:.4}, {time}", m[0], m[1], m[2]),
    )
}

fn c7_localization() -> Outcome {
    let p = assemble_cell([0.0, 1.0], 1.0, 1.0 / 32.0).unwrap();
    let r = minimize(&p, &SolverConfig::default()).unwrap();
    let frac = optimize::energy_localization(&p, &r.field, 0.25).unwrap();
    outcome(
        frac >= 0.9,
        format!("m = {:.6}, fraction of energy in R_(1,1/4) = {frac:.4} (threshold 0.9)", r.min_energy),
    )
}

fn c7_multistart_info() -> String {
    let p = assemble_cell([0.0, 1.0], 1.0, 1.0 / 32.0).unwrap();
    let r = minimize(&p, &SolverConfig { hops: 0, ..SolverConfig::default() }).unwrap();
    let frac = optimize::energy_localization(&p, &r.field, 0.25).unwrap();
    format!("multistart without hopping: m = {:.6}, fraction = {frac:.4}", r.min_energy)
}

fn c8_chains() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let eps = 1.0 / 64.0;
    let mut failures = 0;
    for _ in 0..1000 {
        let nu = lattice::unit_from_angle(rng.random_range(0.0..TAU));
        let offset = rng.random_range(-0.5..0.5);
        let admissible: Vec<u8> =
            (1..=3u8).filter(|a| lattice::dot(LatticeDir::from_alpha(*a, 1).vector(), lattice::perp(nu)).abs() <= 0.5).collect();
        let alpha = admissible[rng.random_range(0..admissible.len())];
        let z0 = rng.random_range(-200..200);
        match lattice::build_chain(nu, offset, alpha, z0..=z0 + 99, eps) {
            Ok(c) if c.triangles.len() == 100 && c.check(eps).is_ok() => {}
            _ => failures += 1,
        }
    }
    let (ok_t, time) = within(t, Duration::from_secs(10));
    outcome(failures == 0 && ok_t, format!("1000 instances, {failures} failures, {time}"))
}

fn c9_interpolation() -> Outcome {
    let t = Instant::now();
    let ground = LiftedTriple { theta_i: 0.0, theta_j: TAU / 3.0, theta_k: 2.0 * TAU / 3.0 };
    let plan = InterpolationPlan::new(Triangle::up(0, 0), 1, 2, 1, ground).unwrap();
    let e = analysis::interpolate_1d(&plan, 1.0).unwrap().energy();
    // Steps are rigid rotations of the ground state; each of the four gap
    // triangles across a half-turn carries |2 S|^2 = 4.
    let oracle = 2.0 * 2.0 * 4.0;
    let ns = [4usize, 8, 16, 32, 64, 128];
    let ms: Vec<i64> = (1..=8).collect();
    let fit = analysis::fit_interpolation_constant(&analysis::interpolation_suite(&ns, &ms, 4, 1).unwrap(), 1.0).unwrap();
    let held = analysis::fit_interpolation_constant(&analysis::interpolation_suite(&ns, &ms, 4, 2).unwrap(), 1.0).unwrap();
    let ok = (e - oracle).abs() <= 1e-12 && fit.constant >= 32.0 && held.ratios.iter().all(|r| *r <= 1.2 * fit.constant);
    let (ok_t, time) = within(t, Duration::from_secs(30));
    outcome(
        ok && ok_t,
        format!(
            "ground-start energy = {e} (oracle {oracle}), fitted C = {:.4}, held-out max ratio = {:.4}, {time}",
            fit.constant, held.constant
        ),
    )
}

fn c10_paving() -> Outcome {
    let t = Instant::now();
    let (rho, eps) = (0.25, 1.0 / 32.0);
    let x0 = [-1.0, -0.4];
    let t1 = lattice::unit_from_angle(0.2);
    let x1 = [x0[0] + 1.5 * t1[0], x0[1] + 1.5 * t1[1]];
    let t2 = lattice::unit_from_angle(0.2 + PI - 2.2);
    let x2 = [x1[0] + 1.2 * t2[0], x1[1] + 1.2 * t2[1]];
    let iface = PolygonalInterface { vertices: vec![x0, x1, x2], signs: vec![1, 1], domain: None };
    let cells: Vec<CellField> = iface
        .segments()
        .iter()
        .map(|s| {
            let r = solve(s.nu, rho, eps, &SolverConfig::default());
            CellField { nu: s.nu, field: r.field, min_energy: r.min_energy }
        })
        .collect();
    let paved = recovery::pave_interface(&iface, rho, eps, &cells).unwrap();
    let minima: Vec<f64> = cells.iter().map(|c| c.min_energy).collect();
    let rep = recovery::evaluate_paving(&paved.field, &iface, rho, eps, &minima).unwrap();
    let finite = rep.l1_constant.is_finite() && rep.limsup_constant.is_finite() && rep.leftover_constant.is_finite();
    let (ok_t, time) = within(t, Duration::from_secs(1200));
    outcome(
        finite && rep.consistent() && rep.far_field_mismatches == 0 && ok_t,
        format!(
            "{} cubes, total = {:.6}, limsup reference = {:.6}, C_limsup = {:.4}, C_L1 = {:.4}, C_leftover = {:.4}, far-field mismatches = {}, {time}",
            paved.plan.cube_count(),
            rep.total_energy,
            rep.limsup_reference,
            rep.limsup_constant,
            rep.l1_constant,
            rep.leftover_constant,
            rep.far_field_mismatches
        ),
    )
}

fn cell_sites(nu: [f64; 2], eps: f64) -> Vec<LatticeIndex> {
    lattice::vertex_set(&lattice::triangles_in(&Region::square(nu, 1.0).unwrap(), eps).unwrap())
}

/// `(label, result)` of enforce_boundary on sharp, rotated and solved inputs.
fn enforcement_runs(eps: f64, delta: f64) -> Vec<(String, Result<f64, String>)> {
    let nu = [0.0, 1.0];
    let sharp = spin::sharp_interface(nu, eps, cell_sites(nu, eps));
    let rotated = sharp.rotated_globally(PI / 2.0);
    let solved = solve(nu, 1.0, eps, &SolverConfig { restarts: 2, hops: 0, ..SolverConfig::default() }).field;
    let mut out = Vec::new();
    for (name, u) in [("sharp", sharp), ("rotated", rotated), ("solved", solved)] {
        let res = recovery::enforce_boundary(&u, nu, delta, eps).map_err(|e| e.to_string()).and_then(|(f, rep)| {
            if recovery::satisfies_cell_boundary(&f, nu, eps).map_err(|e| e.to_string())? {
                Ok(rep.energy_increase() / (delta + eps))
            } else {
                Err("boundary conditions violated".to_string())
            }
        });
        out.push((name.to_string(), res));
    }
    out
}

fn summarize(runs: &[(String, Result<f64, String>)]) -> (bool, String) {
    let ok = runs.iter().all(|(_, r)| r.as_ref().is_ok_and(|c| c.is_finite()));
    let parts: Vec<String> = runs
        .iter()
        .map(|(n, r)| match r {
            Ok(c) => format!("{n}: C = {c:.3}"),
            Err(e) => format!("{n}: {e}"),
        })
        .collect();
    (ok, parts.join("; "))
}

fn c11_enforce() -> Outcome {
    let (ok, detail) = summarize(&enforcement_runs(1.0 / 32.0, 0.1));
    outcome(ok, format!("delta = 0.1, eps = 1/32: {detail}"))
}

fn c11_supplement() -> String {
    let (ok, detail) = summarize(&enforcement_runs(1.0 / 128.0, 0.1));
    format!("{} delta = 0.1, eps = 1/128: {detail}", if ok { "PASS" } else { "FAIL" })
}

fn c12_determinism() -> Outcome {
    let p = assemble_cell([0.0, 1.0], 1.0, 1.0 / 16.0).unwrap();
    let cfg = SolverConfig { rng_seed: 7, ..SolverConfig::default() };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| minimize(&p, &cfg).unwrap())
    };
    let a = run(1);
    let b = run(1);
    let c = run(4);
    let bit = a.min_energy.to_bits() == b.min_energy.to_bits() && a.field == b.field;
    let across = (a.min_energy - c.min_energy).abs();
    outcome(bit && across <= 1e-9, format!("1 thread bit-identical = {bit}, |m(1) - m(4)| = {across:.2e}"))
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("f/g certification", c1_fg),
        ("opposite-chirality pair bound", c2_pair),
        ("ground states", c3_ground),
        ("gradient check", c4_gradient),
        ("cell-problem symmetries", c5_symmetry),
        ("phi ladder stability", c6_ladder),
        ("energy localization", c7_localization),
        ("chain construction", c8_chains),
        ("1-d interpolation", c9_interpolation),
        ("paving", c10_paving),
        ("boundary enforcement", c11_enforce),
        ("determinism", c12_determinism),
    ];
    let mut failed = 0;
    for (n, (name, f)) in criteria.into_iter().enumerate() {
        let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        if !o.pass {
            failed += 1;
        }
        println!("criterion {:>2} {} {name}: {}", n + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if n + 1 == 7 {
            println!("  info: {}", c7_multistart_info());
        }
        if n + 1 == 11 {
            println!("  supplementary: {}", c11_supplement());
        }
    }
    println!("acceptance: {} of 12 criteria passed", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
