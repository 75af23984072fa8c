use std::f64::consts::{FRAC_PI_2, PI};

use chiralxy::lattice::{self, unit_from_angle, Region};
use chiralxy::optimize::{assemble_cell, minimize, same_angle, SolverConfig};
use chiralxy::recovery::*;
use chiralxy::spin::{self, GroundStateKind, SpinField};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn two_segments(x0: [f64; 2], heading: f64, theta: f64, l1: f64, l2: f64, sign: i8) -> PolygonalInterface {
    let t1 = unit_from_angle(heading);
    let x1 = [x0[0] + l1 * t1[0], x0[1] + l1 * t1[1]];
    // Turn so that the interior angle at x1 is theta.
    let t2 = unit_from_angle(heading + PI - theta);
    let x2 = [x1[0] + l2 * t2[0], x1[1] + l2 * t2[1]];
    PolygonalInterface { vertices: vec![x0, x1, x2], signs: vec![sign, sign], domain: None }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn cubes_are_disjoint_with_rounded_clearance(
        heading in 0.0f64..std::f64::consts::TAU,
        theta in 0.3f64..3.0,
        l1 in 0.6f64..2.0,
        l2 in 0.6f64..2.0,
        rho_k in 0usize..3,
        eps_k in 0usize..2,
        sign in prop::bool::ANY,
    ) {
        let rho = [0.25, 0.125, 0.5][rho_k];
        let eps = [1.0 / 32.0, 1.0 / 128.0][eps_k];
        prop_assume!(6.0 * eps < rho);
        let p = two_segments([0.1, -0.2], heading, theta, l1, l2, if sign { 1 } else { -1 });
        let need = corner_clearance(p.corner_angle(1), rho, eps) * rho + rho;
        prop_assume!(l1 > need && l2 > need);
        let plan = paving_plan(&p, rho, eps).unwrap();
        let c = plan.corner_clearance[0];
        prop_assert!(c >= corner_clearance_bound(p.corner_angle(1)));
        for s in &plan.segments {
            let usable = s.segment.length - (s.clearance_start + s.clearance_end) * rho;
            prop_assert_eq!(s.count, (usable / (rho + 5.0 * eps)).floor() as usize);
            for (n, c) in s.nominal.iter().zip(&s.centers) {
                prop_assert_eq!(lattice::sublattice_of(*c), 1);
                let q = lattice::position(*c, eps);
                prop_assert!((q[0] - n[0]).hypot(q[1] - n[1]) <= 2.0 * eps);
            }
        }
    }
}

fn cell(nu: [f64; 2], rho: f64, eps: f64) -> CellField {
    let p = assemble_cell(nu, rho, eps).unwrap();
    let r = minimize(&p, &SolverConfig { restarts: 2, ..SolverConfig::default() }).unwrap();
    CellField { nu: p.nu, field: r.field, min_energy: r.min_energy }
}

#[test]
fn paving_is_compatible_across_cube_faces() {
    let (rho, eps) = (0.25, 1.0 / 32.0);
    let p = two_segments([-0.6, 0.0], 0.2, 2.0, 1.2, 0.9, 1);
    let cells: Vec<CellField> = p.segments().iter().map(|s| cell(s.nu, rho, eps)).collect();
    let paved = pave_interface(&p, rho, eps, &cells).unwrap();
    let minima: Vec<f64> = cells.iter().map(|c| c.min_energy).collect();
    let rep = evaluate_paving(&paved.field, &p, rho, eps, &minima).unwrap();
    assert!(rep.consistent(), "{rep:?}");
    assert_eq!(rep.far_field_mismatches, 0);

    // Away from the interface every triangle meeting the cube boundaries is a ground state.
    let d = p.domain_box(rho);
    let omega = Region::rect_at([(d.lo[0] + d.hi[0]) / 2.0, (d.lo[1] + d.hi[1]) / 2.0], [0.0, 1.0], d.hi[0] - d.lo[0], d.hi[1] - d.lo[1]).unwrap();
    for t in lattice::triangles_in(&omega, eps).unwrap() {
        if p.distance(t.barycenter(eps)) > 6.0 * eps {
            assert!(spin::energy_triangle(&paved.field, &t).unwrap() < 1e-12, "{t:?}");
        }
    }
}

#[test]
fn single_segment_far_field() {
    let (rho, eps) = (0.25, 1.0 / 32.0);
    let p = PolygonalInterface { vertices: vec![[-0.5, 0.0], [0.5, 0.0]], signs: vec![-1], domain: None };
    let nu = p.segments()[0].nu;
    let cells = vec![cell(nu, rho, eps)];
    let paved = pave_interface(&p, rho, eps, &cells).unwrap();
    let rep = evaluate_paving(&paved.field, &p, rho, eps, &[cells[0].min_energy]).unwrap();
    assert_eq!(rep.far_field_mismatches, 0);
    assert!(rep.max_cube_deviation < 1e-9);
    assert!(rep.decomposition_csv().starts_with("segment,cube_index,energy\n"));
}

#[test]
fn missing_cell_field_is_rejected() {
    let p = two_segments([0.0, 0.0], 0.0, 2.0, 1.0, 1.0, 1);
    let plan = paving_plan(&p, 0.25, 1.0 / 32.0).unwrap();
    assert!(plan.corner_clearance[0] > 0.5);
    assert!(pave_interface(&p, 0.25, 1.0 / 32.0, &[]).is_err());
}

fn unit_cell_sites(nu: [f64; 2], eps: f64) -> Vec<lattice::LatticeIndex> {
    lattice::vertex_set(&lattice::triangles_in(&Region::square(nu, 1.0).unwrap(), eps).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn enforcement_sets_boundary_and_keeps_the_core(k in 0u32..6, rot in 0.0f64..std::f64::consts::TAU, noise in 0.0f64..0.05, seed in 0u64..100) {
        let eps = 1.0 / 128.0;
        let delta = 0.1;
        let nu = unit_from_angle(FRAC_PI_2 + k as f64 * PI / 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = spin::sharp_interface(nu, eps, unit_cell_sites(nu, eps)).rotated_globally(rot);
        let u = SpinField { eps, angles: base.angles.iter().map(|(x, v)| (*x, v + noise * rng.random_range(-1.0..1.0))).collect() };
        let (out, rep) = enforce_boundary(&u, nu, delta, eps).unwrap();
        for (sign, kind) in [(1.0, GroundStateKind::Pos), (-1.0, GroundStateKind::Neg)] {
            for x in lattice::discrete_boundary(nu, 1.0, eps, sign).unwrap() {
                if let Ok(th) = out.angle(x) {
                    prop_assert!(same_angle(th, spin::ground_angle(kind, x)));
                }
            }
        }
        let p_delta = Region::rect(nu, 1.0 - 5.0 * delta, 1.0).unwrap()
            .union(Region::rect(nu, 1.0, 1.0 - 5.0 * delta).unwrap().minus(Region::rect(nu, 1.0, 3.0 * delta).unwrap().closure()));
        let keep = p_delta.intersect(Region::square(nu, rep.strip.r + 6.0 * eps).unwrap());
        for t in lattice::triangles_in(&keep, eps).unwrap() {
            for v in t.vertices() {
                prop_assert_eq!(out.angle(v).unwrap(), u.angle(v).unwrap());
            }
        }
        prop_assert!(rep.output_energy.is_finite());
    }
}

#[test]
fn enforcement_rejects_wrong_chirality() {
    let eps = 1.0 / 128.0;
    let nu = [0.0, 1.0];
    let sites = unit_cell_sites(nu, eps);
    let u = spin::ground_state(GroundStateKind::Neg, eps, sites);
    let err = enforce_boundary(&u, nu, 0.1, eps).unwrap_err();
    assert!(err.to_string().contains("chirality"), "{err}");
}

#[test]
fn enforcement_needs_a_strip() {
    let eps = 1.0 / 32.0;
    let nu = [0.0, 1.0];
    let u = spin::sharp_interface(nu, eps, unit_cell_sites(nu, eps));
    let err = enforce_boundary(&u, nu, 0.1, eps).unwrap_err();
    assert!(err.to_string().contains("strip selection"), "{err}");
}
