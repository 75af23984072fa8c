//! `chiralxy` command-line tool.
//!
//! Exit status: 0 on success, 2 on invalid input or I/O failure, 3 when a
//! numerical computation did not converge (artifacts are still written and
//! flagged).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chiralxy::analysis;
use chiralxy::lattice::{self, Region};
use chiralxy::optimize::{self, fmt9, ProblemConfig, SolverConfig};
use chiralxy::recovery::{self, CellField, PolygonalInterface};
use chiralxy::spin::{self, SpinField};
use clap::{Parser, Subcommand};

/// Environment variable naming the default output directory.
const OUT_DIR_ENV: &str = "CHIRALXY_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "chiralxy", version, about = "Chirality surface tension of the antiferromagnetic XY model on the triangular lattice")]
struct Cli {
    /// Worker threads (default: machine parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for randomised restarts.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory (default: $CHIRALXY_OUT_DIR or the working directory).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Certify the closed-form estimates and print a key=value report.
    Verify {
        #[arg(long, default_value_t = 1000)]
        grid: usize,
    },
    /// Solve the cell problem and write the minimising field.
    SolveCell {
        /// Normal angle in radians.
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        rho: Option<f64>,
        /// JSON problem file; command-line values take precedence.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long, default_value = "cell_field.txt")]
        output: PathBuf,
    },
    /// Anisotropy sweep over equally spaced normals.
    Sweep {
        #[arg(long)]
        angles: usize,
        /// Comma-separated list of eps values.
        #[arg(long, value_delimiter = ',', required = true)]
        eps_list: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long, default_value = "sweep.csv")]
        output: PathBuf,
    },
    /// Mean chirality across the wall of a solved cell.
    Profile {
        #[arg(long)]
        nu: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[arg(long, default_value_t = 32)]
        bins: usize,
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long, default_value = "profile.csv")]
        output: PathBuf,
    },
    /// Pave a polygonal interface with solved cells.
    Pave {
        #[arg(long)]
        interface: PathBuf,
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long, default_value = "paved_field.txt")]
        output: PathBuf,
        #[arg(long, default_value = "decomposition.csv")]
        decomposition: PathBuf,
    },
    /// Impose ground-state boundary values on a field on the unit cell.
    Enforce {
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        nu: f64,
        #[arg(long)]
        delta: f64,
        /// Lattice spacing; read from the field header when omitted.
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, default_value = "enforced_field.txt")]
        output: PathBuf,
    },
    /// Chirality of a saved field.
    Chirality {
        #[arg(long)]
        field: PathBuf,
        /// Region `shape:cx,cy:size[:nu]`; defaults to the triangles of the field.
        #[arg(long)]
        region: Option<String>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, default_value = "chirality.txt")]
        output: PathBuf,
        /// Also write an SVG rendering.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Energy of a saved field.
    Energy {
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        region: Option<String>,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Triangles of a region.
    DumpLattice {
        #[arg(long)]
        region: String,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value = "lattice.txt")]
        output: PathBuf,
    },
}

enum Status {
    Done,
    NotConverged,
}

/// Parses `square:cx,cy:side[:nu]` or `rect:cx,cy:length,height[:nu]` with `nu` in radians.
fn parse_region(spec: &str) -> Result<Region> {
    let parts: Vec<&str> = spec.split(':').collect();
    if !(3..=4).contains(&parts.len()) {
        bail!("region must look like shape:cx,cy:size[:nu], got {spec:?}");
    }
    let nums = |s: &str| -> Result<Vec<f64>> {
        s.split(',').map(|x| x.trim().parse::<f64>().with_context(|| format!("bad number {x:?} in region {spec:?}"))).collect()
    };
    let c = nums(parts[1])?;
    if c.len() != 2 {
        bail!("region center needs two coordinates, got {:?}", parts[1]);
    }
    let nu = match parts.get(3) {
        Some(s) => lattice::unit_from_angle(s.trim().parse::<f64>().with_context(|| format!("bad normal angle {s:?}"))?),
        None => [0.0, 1.0],
    };
    let size = nums(parts[2])?;
    let region = match (parts[0], size.as_slice()) {
        ("square", [s]) => Region::square_at([c[0], c[1]], nu, *s)?,
        ("rect", [l, h]) => Region::rect_at([c[0], c[1]], nu, *l, *h)?,
        (shape, _) => bail!("unknown shape {shape:?} or wrong size list (square:side, rect:length,height)"),
    };
    Ok(region)
}

fn out_path(out_dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        out_dir.join(p)
    }
}

fn write(out_dir: &Path, p: &Path, content: &str) -> Result<PathBuf> {
    let path = out_path(out_dir, p);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn read_field(path: &Path, eps: Option<f64>) -> Result<SpinField> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(SpinField::from_text(&text, eps)?)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        bail!("{name} must be positive and finite, got {v}");
    }
    Ok(())
}

fn solver(seed: u64, restarts: Option<usize>) -> SolverConfig {
    let mut s = SolverConfig { rng_seed: seed, ..SolverConfig::default() };
    if let Some(r) = restarts {
        s.restarts = r;
    }
    s
}

/// Triangles of the field's sites, or of `region` when given.
fn triangles_for(u: &SpinField, region: Option<&str>) -> Result<Vec<lattice::Triangle>> {
    match region {
        Some(spec) => Ok(lattice::triangles_in(&parse_region(spec)?, u.eps)?),
        None => {
            let mut out = Vec::new();
            for x in u.angles.keys() {
                for t in [lattice::Triangle::up(x.z1, x.z2), lattice::Triangle::down(x.z1, x.z2)] {
                    if t.vertices().iter().all(|v| u.contains(*v)) {
                        out.push(t);
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Energies below this fraction of the largest possible value `9 eps` per triangle print as zero.
fn fmt_energy(e: f64, eps: f64, triangles: usize) -> String {
    if e.abs() <= 1e-12 * 9.0 * eps * triangles.max(1) as f64 {
        fmt9(0.0)
    } else {
        fmt9(e)
    }
}

fn run(cli: Cli) -> Result<Status> {
    let out_dir = cli.out_dir.clone().or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("."));
    match cli.command {
        Command::Verify { grid } => {
            let (report, ok) = analysis::verification_report(grid)?;
            print!("{report}");
            Ok(if ok { Status::Done } else { Status::NotConverged })
        }
        Command::SolveCell { nu, eps, rho, config, restarts, output } => {
            let mut pc = match &config {
                Some(p) => ProblemConfig::from_json(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
                None => {
                    let (Some(nu), Some(eps)) = (nu, eps) else {
                        bail!("solve-cell needs --nu and --eps, or --config");
                    };
                    ProblemConfig { nu_angle_rad: nu, rho: 1.0, eps, solver: SolverConfig::default() }
                }
            };
            if let Some(v) = nu {
                pc.nu_angle_rad = v;
            }
            if let Some(v) = eps {
                pc.eps = v;
            }
            if let Some(v) = rho {
                pc.rho = v;
            }
            if let Some(r) = restarts {
                pc.solver.restarts = r;
            }
            if config.is_none() || cli.seed != 0 {
                pc.solver.rng_seed = cli.seed;
            }
            positive("eps", pc.eps)?;
            positive("rho", pc.rho)?;
            let problem = optimize::assemble_cell(pc.nu(), pc.rho, pc.eps)?;
            let r = optimize::minimize(&problem, &pc.solver)?;
            let mut text = String::new();
            if !r.converged {
                text.push_str("# unconverged\n");
            }
            text.push_str(&r.field.to_text());
            let path = write(&out_dir, &output, &text)?;
            println!("min_energy={}", fmt9(r.min_energy));
            println!("phi_estimate={}", fmt9(r.min_energy / pc.rho));
            println!("grad_norm={}", fmt9(r.grad_norm));
            println!("iterations={}", r.iterations);
            println!("restart_index={}", r.restart_index);
            println!("degenerate_restarts={}", r.degenerate_restarts.len());
            println!("converged={}", r.converged);
            println!("field={}", path.display());
            Ok(if r.converged { Status::Done } else { Status::NotConverged })
        }
        Command::Sweep { angles, eps_list, rho, restarts, output } => {
            for e in &eps_list {
                positive("eps", *e)?;
            }
            positive("rho", rho)?;
            let rows = optimize::anisotropy_sweep(angles, rho, &eps_list, &solver(cli.seed, restarts))?;
            let mut buf = Vec::new();
            optimize::write_sweep_csv(&rows, &mut buf)?;
            let path = write(&out_dir, &output, std::str::from_utf8(&buf)?)?;
            let converged = rows.iter().all(|r| r.converged);
            println!("rows={}", rows.len());
            println!("converged={converged}");
            println!("csv={}", path.display());
            Ok(if converged { Status::Done } else { Status::NotConverged })
        }
        Command::Profile { nu, eps, rho, bins, restarts, output } => {
            positive("eps", eps)?;
            let problem = optimize::assemble_cell(lattice::unit_from_angle(nu), rho, eps)?;
            let r = optimize::minimize(&problem, &solver(cli.seed, restarts))?;
            let prof = optimize::wall_profile(&problem, &r, bins)?;
            let mut text = String::from("offset,mean_chirality\n");
            for (x, c) in prof {
                text.push_str(&format!("{},{}\n", fmt9(x), fmt9(c)));
            }
            let path = write(&out_dir, &output, &text)?;
            println!("min_energy={}", fmt9(r.min_energy));
            println!("converged={}", r.converged);
            println!("csv={}", path.display());
            Ok(if r.converged { Status::Done } else { Status::NotConverged })
        }
        Command::Pave { interface, rho, eps, restarts, output, decomposition } => {
            positive("rho", rho)?;
            positive("eps", eps)?;
            let text = fs::read_to_string(&interface).with_context(|| format!("reading {}", interface.display()))?;
            let iface = PolygonalInterface::from_json(&text)?;
            let cfg = solver(cli.seed, restarts);
            let mut cells = Vec::new();
            let mut converged = true;
            for s in iface.segments() {
                let problem = optimize::assemble_cell(s.nu, rho, eps)?;
                let r = optimize::minimize(&problem, &cfg)?;
                converged &= r.converged;
                cells.push(CellField { nu: s.nu, field: r.field, min_energy: r.min_energy });
            }
            let paved = recovery::pave_interface(&iface, rho, eps, &cells)?;
            let minima: Vec<f64> = cells.iter().map(|c| c.min_energy).collect();
            let rep = recovery::evaluate_paving(&paved.field, &iface, rho, eps, &minima)?;
            let mut ftext = String::new();
            if !converged {
                ftext.push_str("# unconverged\n");
            }
            ftext.push_str(&paved.field.to_text());
            let fpath = write(&out_dir, &output, &ftext)?;
            let dpath = write(&out_dir, &decomposition, &rep.decomposition_csv())?;
            println!("cubes={}", paved.plan.cube_count());
            for (n, c) in paved.plan.corner_clearance.iter().enumerate() {
                println!("corner_clearance_{}={}", n + 1, fmt9(*c));
            }
            println!("total_energy={}", fmt9(rep.total_energy));
            println!("leftover_energy={}", fmt9(rep.leftover_energy));
            println!("leftover_triangles={}", rep.leftover_triangles);
            println!("limsup_reference={}", fmt9(rep.limsup_reference));
            println!("limsup_constant={}", fmt9(rep.limsup_constant));
            println!("leftover_constant={}", fmt9(rep.leftover_constant));
            println!("l1_error={}", fmt9(rep.l1_error));
            println!("l1_constant={}", fmt9(rep.l1_constant));
            println!("far_field_mismatches={}", rep.far_field_mismatches);
            println!("consistent={}", rep.consistent());
            println!("converged={converged}");
            println!("field={}", fpath.display());
            println!("decomposition={}", dpath.display());
            Ok(if converged { Status::Done } else { Status::NotConverged })
        }
        Command::Enforce { field, nu, delta, eps, output } => {
            let u = read_field(&field, eps)?;
            let (f, rep) = recovery::enforce_boundary(&u, lattice::unit_from_angle(nu), delta, u.eps)?;
            let path = write(&out_dir, &output, &f.to_text())?;
            println!("strip_r={}", fmt9(rep.strip.r));
            for a in &rep.arms {
                println!("arm_{}=bands:{},winding:{},steps:{}", a.name, a.bands, a.winding, a.steps);
            }
            println!("kept_sites={}", rep.kept_sites);
            println!("interpolated_sites={}", rep.interpolated_sites);
            println!("overridden_sites={}", rep.overridden_sites);
            println!("copied_sites={}", rep.copied_sites);
            println!("ground_sites={}", rep.ground_sites);
            println!("input_energy={}", fmt9(rep.input_energy));
            println!("output_energy={}", fmt9(rep.output_energy));
            println!("field={}", path.display());
            Ok(Status::Done)
        }
        Command::Chirality { field, region, eps, output, svg } => {
            let u = read_field(&field, eps)?;
            let tris = triangles_for(&u, region.as_deref())?;
            let chi = spin::chirality_of_triangles(&u, &tris)?;
            let path = write(&out_dir, &output, &chi.to_text())?;
            if let Some(s) = svg {
                let p = write(&out_dir, &s, &chi.to_svg())?;
                println!("svg={}", p.display());
            }
            let n = chi.values.len().max(1) as f64;
            let positive = chi.values.values().filter(|c| **c > 0.0).count();
            println!("triangles={}", chi.values.len());
            println!("mean_chirality={}", fmt9(chi.values.values().sum::<f64>() / n));
            println!("positive_fraction={}", fmt9(positive as f64 / n));
            println!("chirality={}", path.display());
            Ok(Status::Done)
        }
        Command::Energy { field, region, eps } => {
            let u = read_field(&field, eps)?;
            let tris = triangles_for(&u, region.as_deref())?;
            if tris.is_empty() {
                bail!("no triangles to evaluate");
            }
            let e = spin::energy_triangles(&u, &tris)?;
            println!("{}", fmt_energy(e, u.eps, tris.len()));
            Ok(Status::Done)
        }
        Command::DumpLattice { region, eps, output } => {
            positive("eps", eps)?;
            let r = parse_region(&region)?;
            let tris = lattice::triangles_in(&r, eps)?;
            let mut text = format!("# eps {eps}\n# z1_i z2_i z1_j z2_j z1_k z2_k orientation\n");
            text.push_str(&lattice::dump_triangles(&tris));
            let path = write(&out_dir, &output, &text)?;
            println!("triangles={}", tris.len());
            println!("sites={}", lattice::vertex_set(&tris).len());
            println!("lattice={}", path.display());
            Ok(Status::Done)
        }
    }
}

fn init_threads(threads: Option<usize>) -> Result<()> {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("building the thread pool")?;
    }
    #[cfg(not(feature = "parallel"))]
    if threads.is_some_and(|n| n == 0) {
        bail!("--threads must be at least 1");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads(cli.threads) {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::NotConverged) => {
            eprintln!("warning: computation did not converge; artifacts are flagged");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
