//! Command-line front end: `truss-sweep`, `beam-solve` and `check-derivatives`.
//!
//! Every command is deterministic for fixed flags. Exit codes:
//! 0 success, 1 usage or input error, 2 I/O error, 3 no converged pair,
//! 4 beam solver failure, 5 derivative check above threshold.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::assembly::{
    apply_paper_loads, build_quarter_arc, feasibility, solve_structure, symmetry_diagnostics,
    Feasibility, Solution, Structure, SymmetryReport, ARC_ELEMENTS,
};
use crate::checks::{run_derivative_checks, DerivativeReport};
use crate::constitutive::{generate_synthetic_data, DataSet, LawPreset, ManifoldLaw};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, read_json, write_json, write_text, SolutionFile, StructureFile};
use crate::newton::NewtonSettings;
use crate::truss::{dcnlp_enumerate, dcnlp_global_minimum, StartMode, SweepResult, TrussModel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NO_CONVERGED_PAIR: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;
pub const EXIT_DERIVATIVES: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "ddcm", version, about = "Data-driven solvers for trusses and three-director beams")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enumerate a truss data set with fixed-pair Newton solves.
    TrussSweep(TrussSweepArgs),
    /// Solve the quarter-arc (or a JSON structure) in one load step.
    BeamSolve(BeamSolveArgs),
    /// Compare every analytic derivative with finite differences.
    CheckDerivatives(CheckArgs),
}

#[derive(Debug, Clone, Args)]
pub struct TrussSweepArgs {
    /// Noise-free stresses (the default when no noise is given).
    #[arg(long, conflicts_with_all = ["noise", "data"])]
    pub exact: bool,
    /// Multiplicative stress noise fraction, e.g. 0.1.
    #[arg(long, conflicts_with = "data")]
    pub noise: Option<f64>,
    /// Read `strain,stress` pairs from a CSV file instead of generating them.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 101)]
    pub points: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Start mode; repeat for several. All three when omitted.
    #[arg(long = "mode", value_parser = StartMode::from_str)]
    pub modes: Vec<StartMode>,
    /// Axial load at the free end.
    #[arg(long, default_value_t = 20.0)]
    pub force: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long = "max-iter", default_value_t = 50)]
    pub max_iter: usize,
    #[arg(long, default_value = "out/truss")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BeamSolveArgs {
    /// Law preset name or a JSON law file; overrides the structure file's law.
    #[arg(long)]
    pub law: Option<String>,
    /// JSON structure; the loaded quarter arc when omitted.
    #[arg(long)]
    pub structure: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    #[arg(long = "max-iter", default_value_t = 50)]
    pub max_iter: usize,
    /// Relative tolerance of the symmetry report.
    #[arg(long = "sym-tol", default_value_t = 1e-6)]
    pub sym_tol: f64,
    #[arg(long, default_value = "out/beam")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CheckArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Random states per operator.
    #[arg(long, default_value_t = 10)]
    pub points: usize,
    #[arg(long, default_value_t = crate::checks::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Also write `derivatives.json` here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn check_tol(tol: f64, max_iter: usize) -> Result<NewtonSettings> {
    let settings = NewtonSettings {
        rel_tol: tol,
        max_iterations: max_iter,
        record_trace: false,
    };
    settings.validate()?;
    Ok(settings)
}

#[derive(Clone, Debug, Serialize)]
pub struct PairSummary {
    /// 1-based.
    pub pair: usize,
    pub strain: f64,
    pub stress: f64,
    pub cost: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModeSummary {
    pub mode: String,
    pub pairs: usize,
    pub converged: usize,
    pub median_iterations: Option<f64>,
    pub max_iterations: Option<usize>,
    /// Lowest cost within this sweep.
    pub branch_min: Option<PairSummary>,
    /// `negative`, `positive` or `mixed` sign of the computed stress.
    pub stress_sign: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrussSummary {
    pub source: String,
    pub points: usize,
    pub noise: f64,
    pub seed: u64,
    pub tol: f64,
    pub modes: Vec<ModeSummary>,
    /// Minimum over both warm branches and every requested sweep.
    pub global_min: Option<PairSummary>,
    pub global_min_mode: Option<String>,
}

fn pair_summary(sweep: &SweepResult, index: usize) -> PairSummary {
    let p = &sweep.pairs[index];
    PairSummary {
        pair: index + 1,
        strain: p.data.0,
        stress: p.data.1,
        cost: p.cost,
    }
}

fn mode_summary(sweep: &SweepResult) -> ModeSummary {
    let converged: Vec<_> = sweep.pairs.iter().filter(|p| p.converged).collect();
    let signs: Vec<f64> = converged
        .iter()
        .filter_map(|p| p.state.as_ref().map(|s| s.s.signum()))
        .collect();
    let stress_sign = if !signs.is_empty() && signs.iter().all(|&s| s < 0.0) {
        "negative"
    } else if !signs.is_empty() && signs.iter().all(|&s| s > 0.0) {
        "positive"
    } else {
        "mixed"
    };
    ModeSummary {
        mode: sweep.mode.to_string(),
        pairs: sweep.pairs.len(),
        converged: converged.len(),
        median_iterations: sweep.median_iterations(),
        max_iterations: converged.iter().map(|p| p.iterations).max(),
        branch_min: sweep.global_min.map(|i| pair_summary(sweep, i)),
        stress_sign: stress_sign.into(),
    }
}

pub struct TrussSweepOutcome {
    pub data: DataSet,
    pub sweeps: Vec<SweepResult>,
    pub summary: TrussSummary,
}

impl TrussSweepOutcome {
    pub fn any_converged(&self) -> bool {
        self.sweeps.iter().any(|s| s.converged_count() > 0)
    }
}

/// Runs the sweeps and writes `data.csv`, the pair CSVs and `summary.json`.
pub fn cmd_truss_sweep(args: &TrussSweepArgs) -> Result<TrussSweepOutcome> {
    let settings = check_tol(args.tol, args.max_iter)?;
    let noise = args.noise.unwrap_or(0.0);
    let (data, source) = match &args.data {
        Some(path) => (
            DataSet::read_csv(BufReader::new(File::open(path)?))?,
            path.display().to_string(),
        ),
        None => {
            let law = ManifoldLaw::linear_explicit(vec![1.0])?;
            let data = generate_synthetic_data(&law, args.points, (-10.0, 10.0), noise, args.seed)?;
            (data, if noise > 0.0 { "noise" } else { "exact" }.to_string())
        }
    };
    let model = TrussModel::unit_bar(args.force);
    let mut modes = args.modes.clone();
    if modes.is_empty() {
        modes = vec![StartMode::Cold, StartMode::WarmAscending, StartMode::WarmDescending];
    }
    let mut seen = Vec::new();
    modes.retain(|m| {
        let fresh = !seen.contains(m);
        seen.push(*m);
        fresh
    });

    let sweeps = modes
        .iter()
        .map(|&m| dcnlp_enumerate(&model, &data, m, &settings))
        .collect::<Result<Vec<_>>>()?;
    // the DCNLP minimum needs both warm branches, requested or not
    let mut extra = Vec::new();
    for m in [StartMode::WarmAscending, StartMode::WarmDescending] {
        if !modes.contains(&m) {
            extra.push(dcnlp_enumerate(&model, &data, m, &settings)?);
        }
    }
    let all: Vec<&SweepResult> = sweeps.iter().chain(&extra).collect();
    let global = dcnlp_global_minimum(&all);

    let summary = TrussSummary {
        source,
        points: data.len(),
        noise,
        seed: args.seed,
        tol: args.tol,
        modes: sweeps.iter().map(mode_summary).collect(),
        global_min: global.map(|(k, i)| pair_summary(all[k], i)),
        global_min_mode: global.map(|(k, _)| all[k].mode.to_string()),
    };

    let mut buf = Vec::new();
    data.write_csv(&mut buf)?;
    write_text(&args.out.join("data.csv"), std::str::from_utf8(&buf).expect("ascii csv"))?;
    for sweep in &sweeps {
        let name = if sweeps.len() == 1 {
            "pairs.csv".to_string()
        } else {
            format!("pairs-{}.csv", sweep.mode)
        };
        let path = args.out.join(name);
        let mut out = BufWriter::new(File::create(&path)?);
        sweep.write_csv(&mut out)?;
        out.flush()?;
    }
    write_json(&args.out.join("summary.json"), &summary)?;
    Ok(TrussSweepOutcome { data, sweeps, summary })
}

/// `name` is a preset name or a path to a JSON law.
pub fn resolve_law(name: &str) -> Result<ManifoldLaw> {
    match LawPreset::from_str(name) {
        Ok(preset) => Ok(preset.law()),
        Err(_) if Path::new(name).is_file() => {
            let law: ManifoldLaw = read_json(Path::new(name))?;
            law.validate()?;
            Ok(law)
        }
        Err(_) => Err(Error::InvalidInput(format!(
            "'{name}' is neither a law preset ({}) nor a file",
            LawPreset::ALL.map(|p| p.name()).join(", ")
        ))),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BeamSummary {
    pub law: String,
    pub converged: bool,
    pub iterations: usize,
    pub unknowns: usize,
    pub residual_norm: f64,
    pub symmetry: SymmetryReport,
    pub feasibility: Feasibility,
}

pub struct BeamSolveOutcome {
    pub structure: Structure,
    pub solution: Solution,
    pub summary: BeamSummary,
}

/// Builds the structure named by `args` without solving it.
pub fn beam_structure(args: &BeamSolveArgs) -> Result<Structure> {
    let mut structure = match &args.structure {
        Some(path) => read_json::<StructureFile>(path)?.into_structure()?,
        None => apply_paper_loads(build_quarter_arc(ARC_ELEMENTS)?)?,
    };
    if let Some(name) = &args.law {
        structure.law = resolve_law(name)?;
        structure.validate()?;
    }
    Ok(structure)
}

/// Solves and writes `solution.json`, `stress.csv`, `trace.csv` and `summary.json`.
/// Files are written even when Newton stops without converging.
pub fn cmd_beam_solve(args: &BeamSolveArgs) -> Result<BeamSolveOutcome> {
    let settings = check_tol(args.tol, args.max_iter)?;
    let structure = beam_structure(args)?;
    let solution = solve_structure(&structure, &settings)?;
    let file = SolutionFile::from_solution(&structure, &solution)?;
    let stress: Vec<_> = solution.elements.iter().map(|e| e.stress).collect();
    let summary = BeamSummary {
        law: args.law.clone().unwrap_or_else(|| match args.structure {
            Some(_) => "structure file".into(),
            None => LawPreset::Verification.name().into(),
        }),
        converged: solution.converged,
        iterations: solution.iterations,
        unknowns: structure.layout().dim(),
        residual_norm: file.residual_norm,
        symmetry: symmetry_diagnostics(&stress, args.sym_tol),
        feasibility: feasibility(&structure, &solution)?,
    };

    write_json(&args.out.join("solution.json"), &file)?;
    let mut csv = String::from("element,n1,n2,n3,m1,m2,m3,gamma1,gamma2,gamma3,omega1,omega2,omega3\n");
    for (k, el) in solution.elements.iter().enumerate() {
        let cols: Vec<String> = el.stress.iter().chain(el.strain.iter()).map(|&v| fmt_f64(v)).collect();
        writeln!(csv, "{},{}", k + 1, cols.join(",")).expect("string write");
    }
    write_text(&args.out.join("stress.csv"), &csv)?;
    let mut trace = String::from("iteration,residual_norm,step_norm\n");
    for (k, (r, s)) in solution.residual_norms.iter().zip(&solution.step_norms).enumerate() {
        writeln!(trace, "{},{},{}", k + 1, fmt_f64(*r), fmt_f64(*s)).expect("string write");
    }
    write_text(&args.out.join("trace.csv"), &trace)?;
    write_json(&args.out.join("summary.json"), &summary)?;
    Ok(BeamSolveOutcome {
        structure,
        solution,
        summary,
    })
}

pub fn cmd_check_derivatives(args: &CheckArgs) -> Result<DerivativeReport> {
    if !(args.threshold > 0.0) {
        return Err(Error::InvalidInput("threshold must be positive".into()));
    }
    let report = run_derivative_checks(args.seed, args.points, args.threshold);
    if let Some(dir) = &args.out {
        write_json(&dir.join("derivatives.json"), &report)?;
    }
    Ok(report)
}

fn error_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) | Error::Json(_) => EXIT_IO,
        Error::LinearSolveSingular { .. } | Error::Diverged { .. } => EXIT_NOT_CONVERGED,
        _ => EXIT_USAGE,
    }
}

/// Executes a parsed command, printing a short report; returns the exit code.
pub fn execute(config: &RunConfig) -> i32 {
    let result = match &config.command {
        Command::TrussSweep(args) => cmd_truss_sweep(args).map(|o| {
            for m in &o.summary.modes {
                println!(
                    "{:<10} converged {}/{}  median iterations {}  stress {}",
                    m.mode,
                    m.converged,
                    m.pairs,
                    m.median_iterations.map_or("-".into(), |v| v.to_string()),
                    m.stress_sign
                );
            }
            match &o.summary.global_min {
                Some(g) => println!("global minimum: pair {} ({}, {}), cost {:.6e}", g.pair, g.strain, g.stress, g.cost),
                None => println!("global minimum: none"),
            }
            if o.any_converged() {
                EXIT_OK
            } else {
                EXIT_NO_CONVERGED_PAIR
            }
        }),
        Command::BeamSolve(args) => cmd_beam_solve(args).map(|o| {
            let s = &o.summary;
            println!(
                "{}: {} after {} iterations, residual {:.3e}, symmetric {}",
                s.law,
                if s.converged { "converged" } else { "NOT converged" },
                s.iterations,
                s.residual_norm,
                s.symmetry.holds()
            );
            if s.converged {
                EXIT_OK
            } else {
                EXIT_NOT_CONVERGED
            }
        }),
        Command::CheckDerivatives(args) => cmd_check_derivatives(args).map(|r| {
            println!("{r}");
            if r.passed() {
                EXIT_OK
            } else {
                EXIT_DERIVATIVES
            }
        }),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        error_code(&e)
    })
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match RunConfig::try_parse_from(args) {
        Ok(config) => execute(&config),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}
