//! `navem` command line: train, convergence, compare and mesh subcommands.

mod config;

pub use config::{hex_digest, parse_config, Settings};

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use thiserror::Error;

use crate::geometry::{build_mesh_family, write_mesh, GeometryError, MeshFamily, PolygonalMesh};
use crate::navem_solver::{
    error_report_csv, run_problem, solution_csv, Affine, AnisotropicAdr, ErrorRow, Laplacian,
    NavemError, PolySineSolution, Problem, SineProduct, DEFAULT_QUAD_DEGREE,
};
use crate::neural_net::{AdamConfig, BfgsConfig};
use crate::trainer::{curve_csv, train, NavemModel, TrainConfig, TrainError};
use crate::vem_core::{dump_local, fit_rate, local_matrices, solve_poisson_vem, vem_errors, VemError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Navem(#[from] NavemError),
    #[error(transparent)]
    Vem(#[from] VemError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl CliError {
    /// 0 success, 1 other failures, 2 configuration, 3 training divergence, 4 solver failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Train(TrainError::Config(_) | TrainError::Model(_) | TrainError::Containment { .. }) => 2,
            CliError::Train(TrainError::Divergence { .. } | TrainError::NonFinite(_)) => 3,
            CliError::Navem(NavemError::ModelMismatch { .. } | NavemError::Containment { .. }) => 2,
            CliError::Navem(NavemError::Solver(_)) | CliError::Vem(_) => 4,
            CliError::Geometry(GeometryError::Parameter(_) | GeometryError::Parse { .. }) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "navem", version, about = "Neural approximated virtual elements")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a basis network for polygons with a fixed vertex count.
    Train(TrainArgs),
    /// Convergence study of the network-based method on a mesh family.
    Convergence(ConvergenceArgs),
    /// Network-based method against the classical lowest-order method on a Poisson problem.
    Compare(CompareArgs),
    /// Write a mesh file, optionally dumping local matrices of one element.
    Mesh(MeshArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Key-value settings file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub nv: Option<usize>,
    #[arg(long)]
    pub ell: Option<usize>,
    /// Hidden layer widths, comma separated.
    #[arg(long)]
    pub hidden: Option<String>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub points_per_edge: Option<usize>,
    #[arg(long)]
    pub epochs_adam: Option<usize>,
    #[arg(long)]
    pub bfgs_iterations: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Dataset seed; initialisation and validation seeds default to seed+1 and seed+2.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub init_seed: Option<u64>,
    #[arg(long)]
    pub validation_seed: Option<u64>,
    #[arg(long)]
    pub validation_count: Option<usize>,
    /// Diameter of the reference square carrying the harmonic basis.
    #[arg(long)]
    pub h_ref: Option<f64>,
    #[arg(long)]
    pub lattice_n: Option<usize>,
    /// Training shape distribution: `distorted-regular` or `star`.
    #[arg(long)]
    pub sampler: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConvergenceArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// `cartesian` or `sine`.
    #[arg(long)]
    pub family: Option<String>,
    /// Elements per side, comma separated and strictly increasing.
    #[arg(long)]
    pub refinements: Option<String>,
    /// `adr-anisotropic`, `poisson-manufactured` or `poisson-affine`.
    #[arg(long)]
    pub problem: Option<String>,
    #[arg(long)]
    pub quad_degree: Option<usize>,
    /// Re-assemble at quadrature degree + 2 and report the drift.
    #[arg(long)]
    pub self_check: Option<bool>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub refinements: Option<String>,
    /// `poisson-manufactured` or `poisson-affine`.
    #[arg(long)]
    pub problem: Option<String>,
    #[arg(long)]
    pub quad_degree: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MeshArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub family: Option<String>,
    /// Elements per side.
    #[arg(long)]
    pub n: Option<usize>,
    /// Output mesh file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the local matrices of this element.
    #[arg(long)]
    pub dump_local: Option<usize>,
}

const TRAIN_KEYS: &[&str] = &[
    "nv",
    "ell",
    "hidden",
    "samples",
    "points-per-edge",
    "epochs-adam",
    "bfgs-iterations",
    "learning-rate",
    "seed",
    "init-seed",
    "validation-seed",
    "validation-count",
    "h-ref",
    "lattice-n",
    "sampler",
    "out",
];
const CONVERGENCE_KEYS: &[&str] = &["model", "family", "refinements", "problem", "quad-degree", "self-check", "out"];
const COMPARE_KEYS: &[&str] = &["model", "family", "refinements", "problem", "quad-degree", "out"];
const MESH_KEYS: &[&str] = &["family", "n", "out", "dump-local"];

fn load_settings(path: &Option<PathBuf>) -> Result<Settings, CliError> {
    match path {
        None => Ok(Settings::default()),
        Some(p) => parse_config(&read(p)?),
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io {
            path: dir.to_path_buf(),
            message: e.to_string(),
        })?;
    }
    fs::write(path, contents).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Records tool version, settings, their hash and digests of inputs and outputs.
/// File locations are left out so that runs into different directories compare equal.
fn write_manifest(
    dir: &Path,
    name: &str,
    subcommand: &str,
    settings: &Settings,
    inputs: &[(String, String)],
    outputs: &[(String, String)],
) -> Result<(), CliError> {
    let settings = settings.without(&["out", "model"]);
    let mut s = String::from("navem-manifest v1\n");
    s.push_str(&format!("tool navem {}\n", env!("CARGO_PKG_VERSION")));
    s.push_str(&format!("subcommand {subcommand}\n"));
    s.push_str(&format!("config-sha256 {}\n", settings.hash()));
    s.push_str("[settings]\n");
    s.push_str(&settings.canonical());
    s.push_str("[inputs]\n");
    for (n, d) in inputs {
        s.push_str(&format!("{n} {d}\n"));
    }
    s.push_str("[outputs]\n");
    for (n, d) in outputs {
        s.push_str(&format!("{n} {d}\n"));
    }
    write(&dir.join(name), &s)
}

fn emit(dir: &Path, name: &str, contents: &str, outputs: &mut Vec<(String, String)>) -> Result<(), CliError> {
    write(&dir.join(name), contents)?;
    outputs.push((name.to_string(), hex_digest(contents.as_bytes())));
    Ok(())
}

fn out_dir(settings: &Settings) -> Result<PathBuf, CliError> {
    Ok(PathBuf::from(settings.require("out")?))
}

fn family(settings: &Settings) -> Result<MeshFamily, CliError> {
    settings
        .get::<MeshFamily>("family", MeshFamily::Cartesian)
        .map_err(|e| CliError::Config(e.to_string()))
}

fn refinements(settings: &Settings) -> Result<Vec<usize>, CliError> {
    let r = settings.list::<usize>("refinements", &[4, 8, 16, 32])?;
    if r.is_empty() || r.windows(2).any(|w| w[0] >= w[1]) || r[0] < 2 {
        return Err(CliError::Config(format!(
            "refinements must be strictly increasing and >= 2, got {r:?}"
        )));
    }
    Ok(r)
}

fn load_model(settings: &Settings) -> Result<(NavemModel, String), CliError> {
    let path = PathBuf::from(settings.require("model")?);
    let text = read(&path)?;
    let digest = hex_digest(text.as_bytes());
    Ok((NavemModel::from_json(&text)?, digest))
}

/// Exact solution and coefficients selected by name.
pub enum ProblemKind {
    AdrAnisotropic,
    PoissonManufactured,
    PoissonAffine,
}

impl ProblemKind {
    pub fn parse(name: &str) -> Result<Self, CliError> {
        match name {
            "adr-anisotropic" => Ok(Self::AdrAnisotropic),
            "poisson-manufactured" => Ok(Self::PoissonManufactured),
            "poisson-affine" => Ok(Self::PoissonAffine),
            other => Err(CliError::Config(format!("unknown problem '{other}'"))),
        }
    }

    pub fn is_poisson(&self) -> bool {
        !matches!(self, Self::AdrAnisotropic)
    }

    pub fn with<R>(&self, f: impl FnOnce(Problem<'_>) -> R) -> R {
        match self {
            Self::AdrAnisotropic => f(Problem::new(&AnisotropicAdr, &PolySineSolution)),
            Self::PoissonManufactured => f(Problem::new(&Laplacian, &SineProduct { kx: 2.0, ky: 3.0 })),
            Self::PoissonAffine => f(Problem::new(&Laplacian, &Affine([0.5, 1.0, -2.0]))),
        }
    }
}

fn fmt_rate(r: Option<f64>) -> String {
    r.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

/// Least-squares slopes over the last three rows.
pub fn tail_rates(rows: &[ErrorRow]) -> (Option<f64>, Option<f64>) {
    let tail = &rows[rows.len().saturating_sub(3)..];
    let h: Vec<f64> = tail.iter().map(|r| r.h).collect();
    let e2: Vec<f64> = tail.iter().map(|r| r.err2).collect();
    let e1: Vec<f64> = tail.iter().map(|r| r.err1).collect();
    (fit_rate(&h, &e2), fit_rate(&h, &e1))
}

/// Log-log error plot of `<stem>.csv` into `<stem>.png`.
fn gnuplot_script(stem: &str) -> String {
    format!(
        "set datafile separator ','\nset logscale xy\nset key autotitle columnhead\nset xlabel 'h'\nset terminal pngcairo\nset output '{stem}.png'\nplot '{stem}.csv' using 1:2 with linespoints, '' using 1:3 with linespoints\n"
    )
}

pub fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let mut s = load_settings(&args.config)?;
    s.set_opt("nv", args.nv);
    s.set_opt("ell", args.ell);
    s.set_opt("hidden", args.hidden.clone());
    s.set_opt("samples", args.samples);
    s.set_opt("points-per-edge", args.points_per_edge);
    s.set_opt("epochs-adam", args.epochs_adam);
    s.set_opt("bfgs-iterations", args.bfgs_iterations);
    s.set_opt("learning-rate", args.learning_rate);
    s.set_opt("seed", args.seed);
    s.set_opt("init-seed", args.init_seed);
    s.set_opt("validation-seed", args.validation_seed);
    s.set_opt("validation-count", args.validation_count);
    s.set_opt("h-ref", args.h_ref);
    s.set_opt("lattice-n", args.lattice_n);
    s.set_opt("sampler", args.sampler.clone());
    s.set_opt("out", args.out.as_ref().map(|p| p.display().to_string()));
    s.check_keys(TRAIN_KEYS)?;
    let d = TrainConfig::default();
    let seed = s.get("seed", d.dataset_seed)?;
    let config = TrainConfig {
        nv: s.get("nv", d.nv)?,
        ell: s.get("ell", d.ell)?,
        hidden: s.list("hidden", &d.hidden)?,
        sample_count: s.get("samples", d.sample_count)?,
        points_per_edge: s.get("points-per-edge", d.points_per_edge)?,
        dataset_seed: seed,
        init_seed: s.get("init-seed", seed.wrapping_add(1))?,
        validation_seed: s.get("validation-seed", seed.wrapping_add(2))?,
        validation_count: s.get("validation-count", d.validation_count)?,
        adam_epochs: s.get("epochs-adam", d.adam_epochs)?,
        adam: AdamConfig {
            learning_rate: s.get("learning-rate", d.adam.learning_rate)?,
            ..d.adam
        },
        bfgs: BfgsConfig {
            max_iterations: s.get("bfgs-iterations", d.bfgs.max_iterations)?,
            ..d.bfgs
        },
        h_ref: s.get("h-ref", d.h_ref)?,
        lattice_n: s.get("lattice-n", d.lattice_n)?,
        rho: d.rho,
        sampler: s.get("sampler", d.sampler)?,
    };
    let dir = out_dir(&s)?;
    let outcome = train(&config)?;
    let mut outputs = Vec::new();
    emit(&dir, "model.json", &outcome.model.to_json(), &mut outputs)?;
    emit(&dir, "training_curve.csv", &curve_csv(&outcome.curve), &mut outputs)?;
    let m = &outcome.model.metadata;
    let summary = format!(
        "final_loss {:e}\nfinal_loss_per_point {:e}\nbfgs_iterations {}\nbfgs_stop {:?}\nvalidation_max_value_error {:e}\nvalidation_mean_value_error {:e}\nvalidation_max_derivative_error {:e}\n",
        m.final_loss,
        m.final_loss_per_point,
        m.bfgs_iterations,
        m.bfgs_stop,
        m.validation_max_value_error,
        m.validation_mean_value_error,
        m.validation_max_derivative_error
    );
    emit(&dir, "training_summary.txt", &summary, &mut outputs)?;
    write_manifest(&dir, "manifest_train.txt", "train", &s, &[], &outputs)?;
    info!("model written to {}", dir.join("model.json").display());
    Ok(())
}

fn mesh_sequence(family: MeshFamily, refinements: &[usize]) -> Result<Vec<PolygonalMesh>, CliError> {
    refinements
        .iter()
        .map(|&n| build_mesh_family(family, n).map_err(CliError::from))
        .collect()
}

pub fn cmd_convergence(args: &ConvergenceArgs) -> Result<(), CliError> {
    let mut s = load_settings(&args.config)?;
    s.set_opt("model", args.model.as_ref().map(|p| p.display().to_string()));
    s.set_opt("family", args.family.clone());
    s.set_opt("refinements", args.refinements.clone());
    s.set_opt("problem", args.problem.clone());
    s.set_opt("quad-degree", args.quad_degree);
    s.set_opt("self-check", args.self_check);
    s.set_opt("out", args.out.as_ref().map(|p| p.display().to_string()));
    s.check_keys(CONVERGENCE_KEYS)?;
    let fam = family(&s)?;
    let refs = refinements(&s)?;
    let problem_name = s.get("problem", "adr-anisotropic".to_string())?;
    let kind = ProblemKind::parse(&problem_name)?;
    let degree = s.get("quad-degree", DEFAULT_QUAD_DEGREE)?;
    let self_check = s.get("self-check", false)?;
    let dir = out_dir(&s)?;
    let (model, model_digest) = load_model(&s)?;

    let stem = format!("convergence_{}_{}", fam.name(), problem_name);
    let mut rows = Vec::new();
    let mut table = String::from("n h dofs err2 err1 conformity_defect partition_defect quadrature_drift\n");
    let mut outputs = Vec::new();
    for (n, mesh) in refs.iter().zip(mesh_sequence(fam, &refs)?) {
        let run = kind.with(|p| run_problem(&mesh, &model, &p, degree, self_check))?;
        info!("{} n={n}: err2 {:e}, err1 {:e}", fam.name(), run.err2, run.err1);
        rows.push(ErrorRow {
            h: mesh.h(),
            err2: run.err2,
            err1: run.err1,
        });
        table.push_str(&format!(
            "{n} {:e} {} {:e} {:e} {:e} {:e} {}\n",
            mesh.h(),
            mesh.num_vertices(),
            run.err2,
            run.err1,
            run.conformity_defect,
            run.partition_defect,
            run.quadrature_drift.map_or("n/a".to_string(), |d| format!("{d:e}"))
        ));
        emit(
            &dir,
            &format!("solution_{}_{}_n{n}.csv", fam.name(), problem_name),
            &solution_csv(&mesh, &run.dofs),
            &mut outputs,
        )?;
    }
    emit(&dir, &format!("{stem}.csv"), &error_report_csv(&rows), &mut outputs)?;
    emit(&dir, &format!("{stem}.gp"), &gnuplot_script(&stem), &mut outputs)?;
    let (r2, r1) = tail_rates(&rows);
    let summary = format!(
        "family {}\nproblem {problem_name}\nrate_err2 {}\nrate_err1 {}\n{table}",
        fam.name(),
        fmt_rate(r2),
        fmt_rate(r1)
    );
    emit(&dir, &format!("{stem}.txt"), &summary, &mut outputs)?;
    write_manifest(
        &dir,
        &format!("manifest_{stem}.txt"),
        "convergence",
        &s,
        &[("model".into(), model_digest)],
        &outputs,
    )?;
    print!("{summary}");
    Ok(())
}

pub fn cmd_compare(args: &CompareArgs) -> Result<(), CliError> {
    let mut s = load_settings(&args.config)?;
    s.set_opt("model", args.model.as_ref().map(|p| p.display().to_string()));
    s.set_opt("family", args.family.clone());
    s.set_opt("refinements", args.refinements.clone());
    s.set_opt("problem", args.problem.clone());
    s.set_opt("quad-degree", args.quad_degree);
    s.set_opt("out", args.out.as_ref().map(|p| p.display().to_string()));
    s.check_keys(COMPARE_KEYS)?;
    let fam = family(&s)?;
    let refs = refinements(&s)?;
    let problem_name = s.get("problem", "poisson-manufactured".to_string())?;
    let kind = ProblemKind::parse(&problem_name)?;
    if !kind.is_poisson() {
        return Err(CliError::Config("compare supports Poisson problems only".into()));
    }
    let degree = s.get("quad-degree", DEFAULT_QUAD_DEGREE)?;
    let dir = out_dir(&s)?;
    let (model, model_digest) = load_model(&s)?;

    let mut csv = String::from("h,navem_err2,navem_err1,vem_err2,vem_err1,ratio2,ratio1,conformity_defect\n");
    let (mut navem_rows, mut vem_rows) = (Vec::new(), Vec::new());
    for mesh in mesh_sequence(fam, &refs)? {
        let run = kind.with(|p| run_problem(&mesh, &model, &p, degree, false))?;
        let (ve2, ve1) = kind.with(|p| -> Result<(f64, f64), CliError> {
            let (dofs, locals) = solve_poisson_vem(&mesh, |x| p.source(x), |x| p.dirichlet(x))?;
            Ok(vem_errors(&mesh, &locals, &dofs, |x| p.solution.value(x), |x| p.solution.gradient(x))?)
        })?;
        csv.push_str(&format!(
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}\n",
            mesh.h(),
            run.err2,
            run.err1,
            ve2,
            ve1,
            run.err2 / ve2,
            run.err1 / ve1,
            run.conformity_defect
        ));
        navem_rows.push(ErrorRow {
            h: mesh.h(),
            err2: run.err2,
            err1: run.err1,
        });
        vem_rows.push(ErrorRow {
            h: mesh.h(),
            err2: ve2,
            err1: ve1,
        });
    }
    let stem = format!("compare_{}_{}", fam.name(), problem_name);
    let mut outputs = Vec::new();
    emit(&dir, &format!("{stem}.csv"), &csv, &mut outputs)?;
    let (n2, n1) = tail_rates(&navem_rows);
    let (v2, v1) = tail_rates(&vem_rows);
    let summary = format!(
        "family {}\nproblem {problem_name}\nnavem rate_err2 {} rate_err1 {}\nvem rate_err2 {} rate_err1 {}\n",
        fam.name(),
        fmt_rate(n2),
        fmt_rate(n1),
        fmt_rate(v2),
        fmt_rate(v1)
    );
    emit(&dir, &format!("{stem}.txt"), &summary, &mut outputs)?;
    write_manifest(
        &dir,
        &format!("manifest_{stem}.txt"),
        "compare",
        &s,
        &[("model".into(), model_digest)],
        &outputs,
    )?;
    print!("{summary}");
    Ok(())
}

pub fn cmd_mesh(args: &MeshArgs) -> Result<(), CliError> {
    let mut s = load_settings(&args.config)?;
    s.set_opt("family", args.family.clone());
    s.set_opt("n", args.n);
    s.set_opt("out", args.out.as_ref().map(|p| p.display().to_string()));
    s.set_opt("dump-local", args.dump_local);
    s.check_keys(MESH_KEYS)?;
    let mesh = build_mesh_family(family(&s)?, s.get("n", 4usize)?)?;
    if let Some(out) = s.raw("out") {
        write(Path::new(out), &write_mesh(&mesh))?;
    }
    if let Some(k) = s.raw("dump-local") {
        let k: usize = k
            .parse()
            .map_err(|_| CliError::Config(format!("invalid element id '{k}'")))?;
        let poly = mesh
            .polygons()
            .get(k)
            .ok_or_else(|| CliError::Config(format!("element {k} out of range")))?;
        print!("{}", dump_local(&local_matrices(k, poly)?));
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Convergence(a) => cmd_convergence(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Mesh(a) => cmd_mesh(a),
    }
}
