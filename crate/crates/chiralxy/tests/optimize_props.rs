use std::f64::consts::TAU;

use chiralxy::lattice::unit_from_angle;
use chiralxy::optimize::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_cell() -> CellProblem {
    // rho / eps = 7 gives a cell with a handful of free sites.
    assemble_cell([0.0, 1.0], 0.875, 0.125).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gradient_matches_finite_differences(seed in 0u64..100_000) {
        let p = small_cell();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..p.n_free()).map(|_| rng.random_range(0.0..TAU)).collect();
        let mut g = vec![0.0; x.len()];
        p.energy_and_gradient(&x, &mut g);
        let h = 1e-5;
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut err = 0.0f64;
        for i in 0..x.len() {
            let mut a = x.clone();
            let mut b = x.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (p.energy(&a) - p.energy(&b)) / (2.0 * h);
            err = err.max((fd - g[i]).abs());
        }
        prop_assert!(err / gmax.max(1e-8) < 1e-6, "relative error {}", err / gmax);
    }

    #[test]
    fn energy_is_nonnegative(seed in 0u64..100_000) {
        let p = small_cell();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..p.n_free()).map(|_| rng.random_range(0.0..TAU)).collect();
        prop_assert!(p.energy(&x) >= -1e-12);
    }
}

#[test]
fn boundary_pins_the_gauge() {
    let p = assemble_cell([0.0, 1.0], 1.0, 0.125).unwrap();
    let r = minimize(&p, &SolverConfig { restarts: 2, ..SolverConfig::default() }).unwrap();
    let x = p.free_from_field(&r.field).unwrap();
    for c in [0.05, 0.3, 1.0] {
        let y: Vec<f64> = x.iter().map(|v| v + c).collect();
        assert!(p.energy(&y) > r.min_energy + 1e-9, "rotation by {c}");
    }
}

#[test]
fn minimum_is_positive_with_an_interface() {
    for angle in [0.3, 1.2, 2.5] {
        let p = assemble_cell(unit_from_angle(angle), 1.0, 0.125).unwrap();
        let r = minimize(&p, &SolverConfig { restarts: 2, ..SolverConfig::default() }).unwrap();
        assert!(r.min_energy > 0.0);
        assert!(p.satisfies_boundary(&r.field));
    }
}

#[test]
fn reflection_and_rotation_map_minimisers() {
    let nu = unit_from_angle(0.9);
    let p = assemble_cell(nu, 1.0, 0.125).unwrap();
    let r = minimize(&p, &SolverConfig { restarts: 2, ..SolverConfig::default() }).unwrap();
    // x -> -x with conjugation sends the nu problem to the -nu problem, R_{2pi/3} to the rotated one.
    let minus = assemble_cell([-nu[0], -nu[1]], 1.0, 0.125).unwrap();
    let reflected = r.field.reflected().conjugated();
    assert!(minus.satisfies_boundary(&reflected));
    let e = chiralxy::spin::energy_triangles(&reflected, &minus.triangles).unwrap();
    assert!((e - r.min_energy).abs() < 1e-12 * r.min_energy.max(1.0));

    let c = (TAU / 3.0).cos();
    let s = (TAU / 3.0).sin();
    let rot = assemble_cell([c * nu[0] - s * nu[1], s * nu[0] + c * nu[1]], 1.0, 0.125).unwrap();
    let rotated = r.field.rotated120();
    assert!(rot.satisfies_boundary(&rotated));
    let e = chiralxy::spin::energy_triangles(&rotated, &rot.triangles).unwrap();
    assert!((e - r.min_energy).abs() < 1e-12 * r.min_energy.max(1.0));
}

#[test]
fn fixed_seed_is_reproducible() {
    let p = assemble_cell([0.0, 1.0], 1.0, 0.125).unwrap();
    let cfg = SolverConfig { restarts: 3, rng_seed: 7, ..SolverConfig::default() };
    let a = minimize(&p, &cfg).unwrap();
    let b = minimize(&p, &cfg).unwrap();
    assert_eq!(a.min_energy.to_bits(), b.min_energy.to_bits());
    assert_eq!(a.field, b.field);
}

#[test]
fn localization_and_profile() {
    let p = assemble_cell([0.0, 1.0], 1.0, 0.0625).unwrap();
    let r = minimize(&p, &SolverConfig { restarts: 2, ..SolverConfig::default() }).unwrap();
    let fracs: Vec<f64> = [0.125, 0.25, 0.5, 1.0].iter().map(|d| energy_localization(&p, &r.field, *d).unwrap()).collect();
    assert!(fracs.iter().all(|f| (0.0..=1.0 + 1e-12).contains(f)));
    assert!(fracs.windows(2).all(|w| w[0] <= w[1] + 1e-12));
    assert!(fracs[2] > 0.5);
    let prof = wall_profile(&p, &r, 8).unwrap();
    assert!(prof.first().unwrap().1 < 0.0 && prof.last().unwrap().1 > 0.0);
}

#[test]
fn config_json_defaults() {
    let c = ProblemConfig::from_json(r#"{"nu_angle_rad": 1.0, "eps": 0.125}"#).unwrap();
    assert_eq!(c.solver, SolverConfig::default());
    assert_eq!(c.rho, 1.0);
    assert!(ProblemConfig::from_json(r#"{"nu_angle_rad": 1.0, "eps": -1}"#).is_err());
}
