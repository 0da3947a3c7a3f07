//! Command-line front end: measure generation, kernel checks, norm
//! estimation, level-set profiles, and the full theorem report, all reading
//! and writing the library's JSON formats plus CSV projections.
//!
//! Exit codes: 0 success, 2 validation error, 3 domain error, 4 internal
//! error. `RBMO_LAB_THREADS` caps worker threads (0 or unset = automatic).

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use rbmo_core::{
    average, boundedness_report, build_measure, builtin_kernel, direct_norms,
    dyadic_side_grid, enumerate_cubes, feasibility_norm, jn_profile, l2_opnorm,
    kernel_condition_report, AtomicMeasure, Cube, CubeFamily, CzoError, DoublingParams,
    FeasibilityTag, GeometryError, JnProfile, MeasureError, MeasureSpec, NormEstimate,
    NormTag, RbmoError, SampledFunction, TheoremReport, TruncationGrid, VerifyError,
};

const CSV_SCHEMA: &str = "# rbmo-lab csv v1";

// ---------------------------------------------------------------------------
// error classification
// ---------------------------------------------------------------------------

#[derive(Debug)]
enum CliError {
    Validation(String),
    Domain(String),
    Internal(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Domain(m) => write!(f, "domain error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Domain(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

impl From<MeasureError> for CliError {
    fn from(e: MeasureError) -> Self {
        match e {
            MeasureError::InvalidSpec(_) => CliError::Validation(e.to_string()),
            MeasureError::EmptyFamily => CliError::Domain(e.to_string()),
        }
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        match e {
            GeometryError::InvalidParam(_) => CliError::Validation(e.to_string()),
            _ => CliError::Domain(e.to_string()),
        }
    }
}

impl From<RbmoError> for CliError {
    fn from(e: RbmoError) -> Self {
        match e {
            RbmoError::ZeroMass | RbmoError::NoDoublingCubes => CliError::Domain(e.to_string()),
            RbmoError::InfeasibleAtUpperBound => CliError::Internal(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<CzoError> for CliError {
    fn from(e: CzoError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::ZeroNorm | VerifyError::ConstantCorpusFunction(_) => {
                CliError::Domain(e.to_string())
            }
            VerifyError::Rbmo(inner) => inner.into(),
            VerifyError::Geometry(inner) => inner.into(),
        }
    }
}

// ---------------------------------------------------------------------------
// argument surface
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "rbmo-lab",
    version,
    about = "Singular integral operators and oscillation norms on atomic measures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a measure from a spec string and write its JSON file.
    GenMeasure {
        /// uniform:START,END,COUNT | cantor:DEPTH | twoscale:GRID,CLUSTER
        #[arg(long)]
        spec: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sampled kernel-condition constants plus operator norms per scale.
    CheckKernel {
        #[arg(long)]
        kernel: String,
        #[arg(long)]
        measure: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Geometric truncation-scale grid size.
        #[arg(long, default_value_t = 6)]
        eps_points: usize,
        #[arg(long, default_value_t = 2_000)]
        opnorm_iters: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// One norm estimate over an enumerated cube family.
    Norm {
        #[arg(long)]
        measure: PathBuf,
        #[arg(long)]
        function: PathBuf,
        /// a | b | c | d | e
        #[arg(long)]
        tag: String,
        #[arg(long, default_value_t = 2.0)]
        rho: f64,
        /// Number of halving side scales starting at four diameters.
        #[arg(long, default_value_t = 6)]
        levels: usize,
        #[arg(long, default_value_t = 16)]
        stride: usize,
        /// Doubling threshold override (default 2 * 4^(m+1)).
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Level-set masses and the fitted exponential decay rate.
    JnProfile {
        #[arg(long)]
        measure: PathBuf,
        #[arg(long)]
        function: PathBuf,
        #[arg(long)]
        center_atom: usize,
        #[arg(long)]
        side: f64,
        #[arg(long, default_value_t = 2.0)]
        rho: f64,
        /// Comma-separated level grid; default: ten points spread over the
        /// observed deviation range.
        #[arg(long)]
        lambdas: Option<String>,
        /// Reference constant; default: the average over the cube.
        #[arg(long)]
        fq: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full boundedness report over a function corpus, JSON plus CSV rows.
    VerifyTheorem {
        #[arg(long)]
        kernel: String,
        #[arg(long)]
        measure: PathBuf,
        /// Directory of function JSON files ({"values": [...]}).
        #[arg(long)]
        corpus_dir: PathBuf,
        #[arg(long, default_value_t = 6)]
        levels: usize,
        #[arg(long, default_value_t = 16)]
        stride: usize,
        #[arg(long, default_value_t = 8)]
        eps_points: usize,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Re-project an existing theorem report to CSV.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        csv: PathBuf,
    },
}

// ---------------------------------------------------------------------------
// helpers
// ---------------------------------------------------------------------------

fn configure_threads() {
    if let Ok(v) = std::env::var("RBMO_LAB_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn parse_spec(spec: &str) -> Result<MeasureSpec, CliError> {
    let (kind, rest) = spec
        .split_once(':')
        .ok_or_else(|| CliError::Validation(format!("spec {spec:?} has no ':'")))?;
    let nums: Vec<&str> = rest.split(',').collect();
    let bad = |what: &str| CliError::Validation(format!("bad {what} in spec {spec:?}"));
    match kind {
        "uniform" => {
            if nums.len() != 3 {
                return Err(bad("uniform arguments (want START,END,COUNT)"));
            }
            Ok(MeasureSpec::UniformGrid {
                start: nums[0].parse().map_err(|_| bad("start"))?,
                end: nums[1].parse().map_err(|_| bad("end"))?,
                count: nums[2].parse().map_err(|_| bad("count"))?,
            })
        }
        "cantor" => {
            if nums.len() != 1 {
                return Err(bad("cantor arguments (want DEPTH)"));
            }
            Ok(MeasureSpec::CantorFourCorner {
                depth: nums[0].parse().map_err(|_| bad("depth"))?,
            })
        }
        "twoscale" => {
            if nums.len() != 2 {
                return Err(bad("twoscale arguments (want GRID,CLUSTER)"));
            }
            Ok(MeasureSpec::TwoScale {
                grid_count: nums[0].parse().map_err(|_| bad("grid count"))?,
                cluster_count: nums[1].parse().map_err(|_| bad("cluster count"))?,
            })
        }
        other => Err(CliError::Validation(format!("unknown spec kind {other:?}"))),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("cannot parse {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Internal(format!("serialization failed: {e}")))?;
    text.push('\n');
    fs::write(path, text)
        .map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))
}

fn ensure_distinct(out: &Path, inputs: &[&Path]) -> Result<(), CliError> {
    for input in inputs {
        if out == *input {
            return Err(CliError::Validation(format!(
                "output path {} duplicates an input path",
                out.display()
            )));
        }
    }
    Ok(())
}

fn load_measure(path: &Path) -> Result<AtomicMeasure, CliError> {
    read_json(path)
}

fn load_function(path: &Path, measure: &AtomicMeasure) -> Result<SampledFunction, CliError> {
    let f: SampledFunction = read_json(path)?;
    f.check_len(measure)?;
    Ok(f)
}

fn family_for(
    measure: &AtomicMeasure,
    levels: usize,
    stride: usize,
    beta: Option<f64>,
) -> Result<(CubeFamily, DoublingParams), CliError> {
    let mut params = DoublingParams::for_measure(measure);
    if let Some(b) = beta {
        params.beta = b;
    }
    params.validate(measure.dim_param())?;
    let sides = dyadic_side_grid(measure, levels);
    let family = enumerate_cubes(measure, &sides, stride, &params)?;
    Ok((family, params))
}

#[derive(Serialize)]
struct KernelReportOut {
    #[serde(flatten)]
    conditions: rbmo_core::KernelConditionReport,
    l2_opnorm: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct JnProfileOut {
    center_atom: usize,
    side: f64,
    rho: f64,
    f_q: f64,
    #[serde(flatten)]
    profile: JnProfile,
}

fn csv_from_report(report: &TheoremReport) -> String {
    let mut rows = String::new();
    rows.push_str(CSV_SCHEMA);
    rows.push('\n');
    rows.push_str(
        "function,eps,norm_f,norm_Tf,ratio,lemma23,lemma23k,g_osc_max,g_pair_max,h1,h2,sup_t1\n",
    );
    for fr in &report.per_function {
        for row in &fr.per_eps {
            let t1 = report
                .t1_per_eps
                .iter()
                .find(|p| p.eps == row.eps)
                .expect("shared eps grid");
            rows.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                fr.name,
                row.eps,
                fr.norm_f,
                row.norm_tf,
                row.ratio,
                row.lemma23,
                row.lemma23k,
                row.g_osc_max,
                row.g_pair_max,
                t1.h1,
                t1.h2,
                t1.sup_t1
            ));
        }
    }
    rows
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)
        .map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// command bodies
// ---------------------------------------------------------------------------

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenMeasure { spec, out } => {
            let measure = build_measure(&parse_spec(&spec)?)?;
            write_json(&out, &measure)
        }
        Command::CheckKernel {
            kernel,
            measure,
            samples,
            seed,
            eps_points,
            opnorm_iters,
            out,
        } => {
            ensure_distinct(&out, &[&measure])?;
            if samples == 0 {
                return Err(CliError::Validation("samples must be >= 1".into()));
            }
            let m = load_measure(&measure)?;
            let k = builtin_kernel(&kernel, &m)?;
            let conditions = kernel_condition_report(&k, &m, samples, seed);
            let grid = TruncationGrid::geometric(&m, eps_points.max(2))?;
            let mut l2 = BTreeMap::new();
            for &eps in grid.epsilons() {
                l2.insert(eps.to_string(), l2_opnorm(&k, &m, eps, opnorm_iters.max(1)));
            }
            write_json(&out, &KernelReportOut {
                conditions,
                l2_opnorm: l2,
            })
        }
        Command::Norm {
            measure,
            function,
            tag,
            rho,
            levels,
            stride,
            beta,
            out,
        } => {
            ensure_distinct(&out, &[&measure, &function])?;
            let m = load_measure(&measure)?;
            let f = load_function(&function, &m)?;
            let (family, _) = family_for(&m, levels, stride, beta)?;
            let estimate: NormEstimate = match tag.to_ascii_lowercase().as_str() {
                "e" => feasibility_norm(&m, &f, &family, FeasibilityTag::E)?,
                "a" => feasibility_norm(&m, &f, &family, FeasibilityTag::A { rho })?,
                "b" | "c" | "d" => {
                    let wanted = tag.to_ascii_lowercase();
                    direct_norms(&m, &f, &family, rho)?
                        .into_iter()
                        .find(|n| match (&n.tag, wanted.as_str()) {
                            (NormTag::B { .. }, "b") => true,
                            (NormTag::C { .. }, "c") => true,
                            (NormTag::D, "d") => true,
                            _ => false,
                        })
                        .expect("requested tag present")
                }
                other => {
                    return Err(CliError::Validation(format!(
                        "unknown norm tag {other:?} (want a, b, c, d, or e)"
                    )))
                }
            };
            write_json(&out, &estimate)
        }
        Command::JnProfile {
            measure,
            function,
            center_atom,
            side,
            rho,
            lambdas,
            fq,
            out,
        } => {
            ensure_distinct(&out, &[&measure, &function])?;
            let m = load_measure(&measure)?;
            let f = load_function(&function, &m)?;
            let cube = Cube::centered_at_atom(&m, center_atom, side)?;
            let f_q = match fq {
                Some(v) => v,
                None => average(&m, &f, &cube)?,
            };
            let grid: Vec<f64> = match lambdas {
                Some(text) => text
                    .split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<f64>()
                            .map_err(|_| CliError::Validation(format!("bad lambda {s:?}")))
                    })
                    .collect::<Result<_, _>>()?,
                None => {
                    let max_dev = (0..m.len())
                        .filter(|&i| cube.contains_coords(m.coords(i)))
                        .map(|i| (f.values()[i] - f_q).abs())
                        .fold(0.0_f64, f64::max);
                    if max_dev <= 0.0 {
                        return Err(CliError::Domain(
                            "no deviation from the reference constant on the cube".into(),
                        ));
                    }
                    (1..=10).map(|k| max_dev * 0.09 * k as f64).collect()
                }
            };
            let profile = jn_profile(&m, &f, &cube, f_q, &grid, rho)?;
            write_json(&out, &JnProfileOut {
                center_atom,
                side,
                rho,
                f_q,
                profile,
            })
        }
        Command::VerifyTheorem {
            kernel,
            measure,
            corpus_dir,
            levels,
            stride,
            eps_points,
            beta,
            out,
            csv,
        } => {
            ensure_distinct(&out, &[&measure, &corpus_dir])?;
            if let Some(csv_path) = &csv {
                ensure_distinct(csv_path, &[&measure, &corpus_dir, &out])?;
            }
            let m = load_measure(&measure)?;
            let k = builtin_kernel(&kernel, &m)?;
            let mut entries: Vec<PathBuf> = fs::read_dir(&corpus_dir)
                .map_err(|e| {
                    CliError::Validation(format!(
                        "cannot read corpus dir {}: {e}",
                        corpus_dir.display()
                    ))
                })?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            entries.sort();
            if entries.is_empty() {
                return Err(CliError::Validation(format!(
                    "no function files in {}",
                    corpus_dir.display()
                )));
            }
            let mut corpus = Vec::with_capacity(entries.len());
            for path in &entries {
                let f = load_function(path, &m)?;
                let name = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| path.display().to_string());
                corpus.push((name, f));
            }
            let (family, _) = family_for(&m, levels, stride, beta)?;
            let grid = TruncationGrid::geometric(&m, eps_points.max(2))?;
            let report = boundedness_report(&k, &m, &corpus, &family, &grid)?;
            write_json(&out, &report)?;
            if let Some(csv_path) = csv {
                write_text(&csv_path, &csv_from_report(&report))?;
            }
            Ok(())
        }
        Command::Report { input, csv } => {
            ensure_distinct(&csv, &[&input])?;
            let report: TheoremReport = read_json(&input)?;
            write_text(&csv, &csv_from_report(&report))
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    configure_threads();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
