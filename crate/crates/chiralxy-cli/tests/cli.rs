use std::fs;
use std::process::Command;

use chiralxy::lattice::{self, Region};
use chiralxy::spin::{self, GroundStateKind};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chiralxy"))
}

fn value<'a>(stdout: &'a str, key: &str) -> &'a str {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("no {key} in output:\n{stdout}"))
}

#[test]
fn verify_reports_pair_bound() {
    let out = bin().arg("verify").output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let v: f64 = value(&stdout, "min_opposite_pair").parse().unwrap();
    assert!((v - 5.0 / 3.0).abs() <= 1e-6);
    assert_eq!(value(&stdout, "overall"), "pass");
}

#[test]
fn solve_cell_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut texts = Vec::new();
    for name in ["a.txt", "b.txt"] {
        let out = bin()
            .args(["--threads", "1", "--seed", "7", "solve-cell", "--nu", "1.5707963", "--eps", "0.125", "--output", name])
            .arg("--out-dir")
            .arg(dir.path())
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        texts.push((fs::read(dir.path().join(name)).unwrap(), value(&String::from_utf8(out.stdout).unwrap(), "min_energy").to_string()));
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn ground_state_energy_prints_zero() {
    let dir = tempfile::tempdir().unwrap();
    let eps = 0.05;
    let region = Region::square_at([0.0, 0.0], [0.0, 1.0], 1.0).unwrap();
    let tris = lattice::triangles_in(&region, eps).unwrap();
    let u = spin::ground_state(GroundStateKind::Pos, eps, spin::sites_of(&tris));
    let path = dir.path().join("ground.txt");
    fs::write(&path, u.to_text()).unwrap();
    let out = bin().arg("energy").arg("--field").arg(&path).output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "0.0");
    let out = bin().arg("energy").arg("--field").arg(&path).args(["--region", "square:0,0:0.5"]).output().unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "0.0");
}

#[test]
fn invalid_input_exits_with_two() {
    let out = bin().args(["solve-cell", "--nu", "1.0", "--eps", "-1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["energy", "--field", "/nonexistent/field.txt"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["dump-lattice", "--region", "circle:0,0:1", "--eps", "0.1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn dump_lattice_writes_triangles() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().arg("--out-dir").arg(dir.path()).args(["dump-lattice", "--region", "rect:0,0:1,0.5", "--eps", "0.1"]).output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let n: usize = value(&stdout, "triangles").parse().unwrap();
    let text = fs::read_to_string(dir.path().join("lattice.txt")).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), n);
}
