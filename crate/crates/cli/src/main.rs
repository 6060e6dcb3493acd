//! `polybill`: command-line front end.
//!
//! Every command is deterministic given its inputs and `--seed`. Without
//! `--out` the primary artifact goes to stdout and a summary to stderr; with
//! `--out DIR` all artifacts are written to `DIR` and the summary to stdout.
//! Exit codes: 0 success, 2 input error, 3 internal invariant violation.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use polybill::billiard::chamber::{chamber_analysis, locate_h0, Chamber, ChamberReport};
use polybill::billiard::{iterate, PhaseState, ReflectionLaw, Termination, SKELETON_GUARD};
use polybill::cocycle::{lyapunov_spectrum, LyapunovSpectrum};
use polybill::geomkit::Vector;
use polybill::hyperbolicity::{
    cone_certificate, cone_orbit, escaping_time_of_orbit, lambda0_point, random_cone_start, verdict, Classification,
    EscapeCertificate, EscapeReport, SamplingConfig, Verdict,
};
use polybill::io::{fmt_f64, linspace, Table};
use polybill::polytope::{simplex_family, ConeSpec, GeneralPosition, Polytope, Spanning};
use polybill::sampling::{sample_state, stream};
use polybill::Error;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Orbits per cell used for the top Lyapunov exponent in `sweep`.
const SWEEP_LYAPUNOV_SAMPLES: usize = 4;
/// Bisection steps for the trapping λ and for h0 in `chamber`.
const CHAMBER_BISECTIONS: usize = 20;
const H0_TOL: f64 = 1e-6;
/// Bracket for the h0 bisection.
const H0_BRACKET: (f64, f64) = (0.1, 0.9);

#[derive(Parser, Debug)]
#[command(name = "polybill", version, about = "Billiards in convex polytopes with contracting reflection laws")]
struct Cli {
    /// Worker threads for sampling commands (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory; created if missing.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Genericity report: general position and spanning ε; with --law also a
    /// sampled hyperbolicity verdict.
    Check(CheckArgs),
    /// Iterate one orbit and write it as CSV and JSON.
    Simulate(SimulateArgs),
    /// Lyapunov spectra of sampled orbits.
    Lyapunov(LyapunovArgs),
    /// Heatmap over (h, λ) for the simplex family.
    Sweep(SweepArgs),
    /// Slap-map chamber analysis for the simplex family in dimension 3.
    Chamber(ChamberArgs),
    /// Escape certificate of a cone, optionally fuzzed with random orbits.
    Cone(ConeArgs),
}

#[derive(Args, Debug)]
struct Sampling {
    /// Seed; mandatory whenever orbits are sampled.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of sampled orbits.
    #[arg(long)]
    samples: Option<usize>,
    /// Steps per orbit.
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[arg(long)]
    polytope: PathBuf,
    /// `linear:LAMBDA` or `custom:asin-sin:LAMBDA`.
    #[arg(long)]
    law: Option<String>,
    #[command(flatten)]
    sampling: Sampling,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    polytope: PathBuf,
    #[arg(long)]
    law: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    /// Explicit start `FACE:P1,..,Pd:V1,..,Vd` instead of a seeded sample.
    #[arg(long)]
    start: Option<String>,
    /// Also report the escaping time with this horizon.
    #[arg(long)]
    horizon: Option<usize>,
}

#[derive(Args, Debug)]
struct LyapunovArgs {
    #[arg(long)]
    polytope: PathBuf,
    #[arg(long)]
    law: String,
    #[command(flatten)]
    sampling: Sampling,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, default_value_t = 3)]
    dim: usize,
    /// h-grid `START:STOP:COUNT`.
    #[arg(long)]
    grid: String,
    /// λ-grid `START:STOP:COUNT` for the linear law.
    #[arg(long)]
    lambda_grid: String,
    #[command(flatten)]
    sampling: Sampling,
}

#[derive(Args, Debug)]
struct ChamberArgs {
    /// h-grid `START:STOP:COUNT`, values in (0, 1/2).
    #[arg(long)]
    grid: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Samples per predicate evaluation in the trapping-λ bisection.
    #[arg(long, default_value_t = 2000)]
    samples: usize,
}

#[derive(Args, Debug)]
struct ConeArgs {
    /// JSON `{"normals": [[…], …], "apex": […]}`; the apex defaults to 0.
    #[arg(long)]
    normals: PathBuf,
    #[arg(long)]
    law: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Random orbits for the fuzz validation (0 skips it).
    #[arg(long, default_value_t = 0)]
    samples: usize,
}

/// A failed run and its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(_)
            | Error::DimensionMismatch { .. }
            | Error::Unbounded
            | Error::EmptyInterior
            | Error::RedundantFace { .. }
            | Error::DegenerateVertex { .. }
            | Error::DegenerateCone => Self::input(e.to_string()),
            _ => Self::internal(e.to_string()),
        }
    }
}

type Outcome<T> = Result<T, Failure>;

/// Artifacts of one command: named files plus a summary.
struct Report {
    files: Vec<(String, String)>,
    summary: String,
    /// Set when the artifacts document an invariant violation.
    failure: Option<Failure>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Outcome<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Failure::input("--workers must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::internal(e.to_string()))?;
    }
    let report = match &cli.command {
        Command::Check(a) => check(a)?,
        Command::Simulate(a) => simulate(a)?,
        Command::Lyapunov(a) => lyapunov(a)?,
        Command::Sweep(a) => sweep(a)?,
        Command::Chamber(a) => chamber(a)?,
        Command::Cone(a) => cone(a)?,
    };
    emit(cli.out.as_deref(), &report)?;
    report.failure.map_or(Ok(()), Err)
}

fn emit(out: Option<&Path>, report: &Report) -> Outcome<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Failure::input(format!("{}: {e}", dir.display())))?;
            for (name, body) in &report.files {
                let path = dir.join(name);
                fs::write(&path, body).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
            }
            print!("{}", report.summary);
        }
        None => {
            if let Some((_, body)) = report.files.first() {
                print!("{body}");
            }
            eprint!("{}", report.summary);
        }
    }
    Ok(())
}

fn read(path: &Path) -> Outcome<String> {
    fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn load_polytope(path: &Path) -> Outcome<Polytope> {
    Polytope::from_json_str(&read(path)?).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn parse_law(s: &str) -> Outcome<ReflectionLaw> {
    s.parse::<ReflectionLaw>().map_err(|e| Failure::input(e.to_string()))
}

fn require_seed(seed: Option<u64>) -> Outcome<u64> {
    seed.ok_or_else(|| Failure::input("--seed is required for sampling commands"))
}

/// `START:STOP:COUNT`.
fn parse_grid(s: &str) -> Outcome<Vec<f64>> {
    let bad = || Failure::input(format!("bad grid {s:?}; expected START:STOP:COUNT"));
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, n] = parts.as_slice() else {
        return Err(bad());
    };
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    if !a.is_finite() || !b.is_finite() {
        return Err(bad());
    }
    Ok(linspace(a, b, n))
}

fn parse_vector(s: &str) -> Outcome<Vector> {
    let xs: Result<Vec<f64>, _> = s.split(',').map(|x| x.trim().parse::<f64>()).collect();
    xs.map(Vector::from_vec)
        .map_err(|_| Failure::input(format!("bad vector {s:?}")))
}

/// `FACE:P1,..,Pd:V1,..,Vd`; the velocity is normalized.
fn parse_start(p: &Polytope, s: &str) -> Outcome<PhaseState> {
    let parts: Vec<&str> = s.split(':').collect();
    let [face, point, velocity] = parts.as_slice() else {
        return Err(Failure::input(format!("bad start {s:?}; expected FACE:P1,..:V1,..")));
    };
    let face: usize = face
        .trim()
        .parse()
        .map_err(|_| Failure::input(format!("bad face index {face:?}")))?;
    if face >= p.n_faces() {
        return Err(Failure::input(format!("face {face} out of range")));
    }
    let v = parse_vector(velocity)?;
    if v.norm() == 0.0 {
        return Err(Failure::input("zero start velocity"));
    }
    Ok(PhaseState::new(p, face, parse_vector(point)?, v.normalize())?)
}

fn json<T: Serialize>(value: &T) -> Outcome<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Failure::internal(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn termination_label(t: &Termination) -> String {
    match t {
        Termination::Completed => "completed".into(),
        Termination::HitSkeleton { step } => format!("hit_skeleton@{step}"),
        Termination::Grazing { step } => format!("grazing@{step}"),
    }
}

// ---------------------------------------------------------------- check

#[derive(Serialize)]
struct CheckReport {
    dim: usize,
    faces: usize,
    vertices: usize,
    general_position: GeneralPosition,
    spanning: Spanning,
    verdict: Option<Verdict>,
}

fn check(a: &CheckArgs) -> Outcome<Report> {
    let p = load_polytope(&a.polytope)?;
    let gp = p.is_general_position();
    let spanning = p.spanning_epsilon();
    let verdict = match &a.law {
        Some(l) => {
            let law = parse_law(l)?;
            let cfg = SamplingConfig {
                seed: require_seed(a.sampling.seed)?,
                orbits: a.sampling.samples.unwrap_or(200),
                steps: a.sampling.steps.unwrap_or(500),
            };
            Some(verdict(&p, &a.polytope.display().to_string(), &law, &cfg))
        }
        None => None,
    };

    let mut summary = String::new();
    let faces = |fs: &[usize]| fs.iter().map(|f| f.to_string()).collect::<Vec<_>>().join(",");
    if spanning.epsilon > polybill::hyperbolicity::SPANNING_ZERO {
        let _ = writeln!(summary, "spanning (eps={:.6e})", spanning.epsilon);
    } else {
        let _ = writeln!(
            summary,
            "NOT spanning (eps={:.1e}), witness faces {{{}}}",
            spanning.epsilon,
            faces(&spanning.faces)
        );
    }
    let _ = match &gp {
        GeneralPosition::Yes => writeln!(summary, "general position: yes"),
        GeneralPosition::DependentNormals { faces: f } => {
            writeln!(summary, "general position: no, dependent normals {{{}}}", faces(f))
        }
        GeneralPosition::DegenerateVertex { vertex, faces: f } => {
            writeln!(summary, "general position: no, vertex {vertex} with faces {{{}}}", faces(f))
        }
    };
    if let Some(v) = &verdict {
        let class = match &v.classification {
            Classification::UniformlyHyperbolicEvidence => "uniformly hyperbolic evidence".to_string(),
            Classification::Inconclusive { reason } => format!("inconclusive ({reason})"),
            Classification::ObstructionFound { .. } => "obstruction found".to_string(),
        };
        let _ = writeln!(
            summary,
            "{}: T_max={:?} sigma_empirical={} -> {class}",
            v.law,
            v.escape.max,
            v.sigma_empirical.map_or("n/a".into(), |s| format!("{s:.6}"))
        );
    }

    let body = CheckReport {
        dim: p.dim(),
        faces: p.n_faces(),
        vertices: p.vertices().len(),
        general_position: gp,
        spanning,
        verdict,
    };
    Ok(Report {
        files: vec![("check.json".into(), json(&body)?), ("polytope.json".into(), json(&p.to_json())?)],
        summary,
        failure: None,
    })
}

// ------------------------------------------------------------- simulate

#[derive(Serialize)]
struct SimulateReport<'a> {
    law: String,
    seed: Option<u64>,
    steps: usize,
    termination: Termination,
    escape: Option<EscapeReport>,
    orbit: &'a polybill::billiard::OrbitRecord,
}

fn simulate(a: &SimulateArgs) -> Outcome<Report> {
    let p = load_polytope(&a.polytope)?;
    let law = parse_law(&a.law)?;
    let x0 = match &a.start {
        Some(s) => parse_start(&p, s)?,
        None => sample_state(&p, require_seed(a.seed)?, 0),
    };
    let rec = iterate(&p, &law, &x0, a.steps, SKELETON_GUARD);
    let escape = a.horizon.map(|h| escaping_time_of_orbit(&p, &rec, h));
    let summary = format!(
        "{} steps of {} ({}){}\n",
        rec.steps(),
        law.label(),
        termination_label(&rec.termination),
        escape.as_ref().map_or(String::new(), |e| format!(", escaping time {:?}", e.time))
    );
    let body = SimulateReport {
        law: law.label(),
        seed: if a.start.is_some() { None } else { a.seed },
        steps: rec.steps(),
        termination: rec.termination,
        escape,
        orbit: &rec,
    };
    Ok(Report {
        files: vec![("orbit.csv".into(), rec.to_csv()), ("orbit.json".into(), json(&body)?)],
        summary,
        failure: None,
    })
}

// ------------------------------------------------------------- lyapunov

#[derive(Serialize)]
struct LyapunovReport {
    law: String,
    seed: u64,
    samples: Vec<LyapunovSpectrum>,
    /// Mean over completed samples.
    mean: Vec<f64>,
    completed: usize,
    terminated_early: usize,
}

fn lyapunov(a: &LyapunovArgs) -> Outcome<Report> {
    let p = load_polytope(&a.polytope)?;
    let law = parse_law(&a.law)?;
    let seed = require_seed(a.sampling.seed)?;
    let n = a.sampling.samples.unwrap_or(16);
    let steps = a.sampling.steps.unwrap_or(1000);
    let spectra: Vec<LyapunovSpectrum> = (0..n)
        .into_par_iter()
        .map(|i| lyapunov_spectrum(&p, &law, &sample_state(&p, seed, i as u64), steps))
        .collect();

    let m = 2 * (p.dim() - 1);
    let complete: Vec<&LyapunovSpectrum> = spectra.iter().filter(|s| !s.partial).collect();
    let mean: Vec<f64> = (0..m)
        .map(|k| complete.iter().map(|s| s.exponents[k]).sum::<f64>() / complete.len() as f64)
        .collect();

    let mut header = vec!["sample".to_string(), "steps".into(), "termination".into()];
    header.extend((1..=m).map(|k| format!("lambda_{k}")));
    header.extend((1..=m).map(|k| format!("stderr_{k}")));
    let mut t = Table::new(header);
    for (i, s) in spectra.iter().enumerate() {
        let mut row = vec![i.to_string(), s.steps.to_string(), termination_label(&s.termination)];
        row.extend(s.exponents.iter().map(|&x| fmt_f64(x)));
        row.extend(s.stderr.iter().map(|&x| fmt_f64(x)));
        t.push(row);
    }
    let mut row = vec!["mean".to_string(), complete.len().to_string(), "completed".into()];
    row.extend(mean.iter().map(|&x| fmt_f64(x)));
    row.extend((0..m).map(|_| String::new()));
    t.push(row);

    let early = spectra.len() - complete.len();
    let summary = format!(
        "{} samples, {early} terminated early; mean top exponent {}\n",
        spectra.len(),
        mean.first().map_or("n/a".into(), |x| format!("{x:.6}"))
    );
    let body = LyapunovReport {
        law: law.label(),
        seed,
        completed: complete.len(),
        terminated_early: early,
        mean,
        samples: spectra,
    };
    Ok(Report {
        files: vec![("lyapunov.csv".into(), t.to_csv()), ("lyapunov.json".into(), json(&body)?)],
        summary,
        failure: None,
    })
}

// ---------------------------------------------------------------- sweep

#[derive(Serialize)]
struct Cell {
    d: usize,
    h: f64,
    lambda: f64,
    lambda0: f64,
    certified: bool,
    max_escaping_time: Option<usize>,
    unresolved: usize,
    exceeded: usize,
    sigma_empirical: Option<f64>,
    top_lyapunov: Option<f64>,
    classification: String,
}

fn sweep_cell(d: usize, h: f64, lambda: f64, cfg: &SamplingConfig) -> Outcome<Cell> {
    let p = simplex_family(d, h)?;
    let law = ReflectionLaw::linear(lambda)?;
    let lambda0 = lambda0_point(d, h)?.lambda0;
    let v = verdict(&p, "simplex", &law, cfg);
    let certified = v
        .certificates
        .iter()
        .all(|c| c.certificate.as_ref().is_some_and(|c| c.valid));
    let tops: Vec<f64> = (0..SWEEP_LYAPUNOV_SAMPLES)
        .map(|i| lyapunov_spectrum(&p, &law, &sample_state(&p, cfg.seed, i as u64), cfg.steps))
        .filter(|s| !s.partial)
        .map(|s| s.exponents[0])
        .collect();
    let top_lyapunov = (!tops.is_empty()).then(|| tops.iter().sum::<f64>() / tops.len() as f64);
    let classification = match &v.classification {
        Classification::UniformlyHyperbolicEvidence => "hyperbolic",
        Classification::Inconclusive { .. } => "inconclusive",
        Classification::ObstructionFound { .. } => "obstruction",
    };
    Ok(Cell {
        d,
        h,
        lambda,
        lambda0,
        certified,
        max_escaping_time: v.escape.max,
        unresolved: v.escape.unresolved,
        exceeded: v.escape.exceeded,
        sigma_empirical: v.sigma_empirical,
        top_lyapunov,
        classification: classification.into(),
    })
}

fn sweep(a: &SweepArgs) -> Outcome<Report> {
    if a.dim < 2 {
        return Err(Failure::input("--dim must be at least 2"));
    }
    let hs = parse_grid(&a.grid)?;
    let ls = parse_grid(&a.lambda_grid)?;
    if let Some(h) = hs.iter().find(|&&h| h <= 0.0) {
        return Err(Failure::input(format!("h must be positive, got {h}")));
    }
    if let Some(l) = ls.iter().find(|&&l| !(0.0..1.0).contains(&l)) {
        return Err(Failure::input(format!("lambda must lie in [0, 1), got {l}")));
    }
    let cfg = SamplingConfig {
        seed: require_seed(a.sampling.seed)?,
        orbits: a.sampling.samples.unwrap_or(64),
        steps: a.sampling.steps.unwrap_or(200),
    };
    let pairs: Vec<(f64, f64)> = hs.iter().flat_map(|&h| ls.iter().map(move |&l| (h, l))).collect();
    let cells: Vec<Cell> = pairs
        .par_iter()
        .map(|&(h, l)| sweep_cell(a.dim, h, l, &cfg))
        .collect::<Outcome<_>>()?;

    let mut t = Table::new([
        "d",
        "h",
        "lambda",
        "lambda0",
        "certified",
        "max_escaping_time",
        "unresolved",
        "exceeded",
        "sigma_empirical",
        "top_lyapunov",
        "classification",
    ]);
    for c in &cells {
        t.push(vec![
            c.d.to_string(),
            fmt_f64(c.h),
            fmt_f64(c.lambda),
            fmt_f64(c.lambda0),
            c.certified.to_string(),
            c.max_escaping_time.map(|x| x.to_string()).unwrap_or_default(),
            c.unresolved.to_string(),
            c.exceeded.to_string(),
            opt(c.sigma_empirical),
            opt(c.top_lyapunov),
            c.classification.clone(),
        ]);
    }
    let certified = cells.iter().filter(|c| c.certified).count();
    let summary = format!("{} cells, {certified} certified\n", cells.len());
    Ok(Report {
        files: vec![("sweep.csv".into(), t.to_csv()), ("sweep.json".into(), json(&cells)?)],
        summary,
        failure: None,
    })
}

// -------------------------------------------------------------- chamber

#[derive(Serialize)]
struct ChamberEntry {
    #[serde(flatten)]
    report: ChamberReport,
    /// Largest λ whose sampled `Λ_λ` returns to itself under two steps.
    trapping_lambda: Option<f64>,
}

#[derive(Serialize)]
struct ChamberOutput {
    seed: u64,
    samples: usize,
    /// Threshold above which some center leaves the base.
    h0: f64,
    entries: Vec<ChamberEntry>,
}

fn chamber(a: &ChamberArgs) -> Outcome<Report> {
    let hs = parse_grid(&a.grid)?;
    if let Some(h) = hs.iter().find(|&&h| !(h > 0.0 && h < 0.5)) {
        return Err(Failure::input(format!("chamber heights must lie in (0, 1/2), got {h}")));
    }
    let seed = require_seed(a.seed)?;
    let entries: Vec<ChamberEntry> = hs
        .par_iter()
        .map(|&h| -> Outcome<ChamberEntry> {
            let report = chamber_analysis(h)?;
            let trapping_lambda = match (Chamber::new(h)?, report.inflation) {
                (Some(c), Some(r)) if report.invariant => {
                    Some(c.trapping_lambda(r, a.samples, seed, CHAMBER_BISECTIONS))
                }
                _ => None,
            };
            Ok(ChamberEntry { report, trapping_lambda })
        })
        .collect::<Outcome<_>>()?;
    let h0 = locate_h0(H0_BRACKET.0, H0_BRACKET.1, H0_TOL)?;

    let mut t = Table::new([
        "h",
        "defined",
        "invariant",
        "grid_points",
        "escapes",
        "inflation",
        "pentagon_excess",
        "max_escaping_time",
        "unresolved",
        "coverage",
        "trapping_lambda",
    ]);
    let mut summary = String::new();
    for e in &entries {
        let r = &e.report;
        t.push(vec![
            fmt_f64(r.h),
            r.defined.to_string(),
            r.invariant.to_string(),
            r.grid_points.to_string(),
            r.escapes.to_string(),
            opt(r.inflation),
            opt(r.pentagon_excess),
            r.max_escaping_time.map(|x| x.to_string()).unwrap_or_default(),
            r.unresolved.to_string(),
            opt(r.coverage),
            opt(e.trapping_lambda),
        ]);
        let _ = if r.defined {
            writeln!(
                summary,
                "h={}: chamber found, invariance {} ({} escapes on {} points)",
                r.h,
                if r.invariant { "holds" } else { "fails" },
                r.escapes,
                r.grid_points
            )
        } else {
            writeln!(summary, "h={}: chamber undefined", r.h)
        };
    }
    let _ = writeln!(summary, "h0 = {h0:.6}");
    let body = ChamberOutput {
        seed,
        samples: a.samples,
        h0,
        entries,
    };
    Ok(Report {
        files: vec![("chamber.csv".into(), t.to_csv()), ("chamber.json".into(), json(&body)?)],
        summary,
        failure: None,
    })
}

// ----------------------------------------------------------------- cone

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConeFile {
    normals: Vec<Vec<f64>>,
    #[serde(default)]
    apex: Option<Vec<f64>>,
}

#[derive(Serialize, Default)]
struct Fuzz {
    orbits: usize,
    escaped: usize,
    max_reflections: usize,
    max_zigzag: f64,
    max_identity_error: f64,
    violations: usize,
}

#[derive(Serialize)]
struct ConeReport {
    certificate: EscapeCertificate,
    fuzz: Option<Fuzz>,
}

fn cone(a: &ConeArgs) -> Outcome<Report> {
    let doc: ConeFile = serde_json::from_str(&read(&a.normals)?)
        .map_err(|e| Failure::input(format!("{}: bad cone JSON: {e}", a.normals.display())))?;
    let d = doc.normals.first().map_or(0, Vec::len);
    let normals: Vec<Vector> = doc.normals.into_iter().map(Vector::from_vec).collect();
    let apex = doc.apex.map_or_else(|| Vector::zeros(d), Vector::from_vec);
    let spec = ConeSpec::new(normals, apex)?;
    let law = parse_law(&a.law)?;
    let cert = cone_certificate(&spec, &law)?;

    let fuzz = if a.samples > 0 {
        let seed = require_seed(a.seed)?;
        let runs = (0..a.samples)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(seed, i as u64);
                let (x, v) = random_cone_start(&spec, &mut rng)?;
                cone_orbit(&spec, &law, &x, &v)
            })
            .collect::<Result<Vec<_>, Error>>()?;
        let mut f = Fuzz {
            orbits: runs.len(),
            ..Fuzz::default()
        };
        for o in &runs {
            f.escaped += usize::from(o.escaped);
            f.max_reflections = f.max_reflections.max(o.reflections);
            f.max_zigzag = f.max_zigzag.max(o.zigzag);
            f.max_identity_error = f.max_identity_error.max(o.identity_error);
            let over = cert.reflection_bound.is_some_and(|b| o.reflections as u64 > b);
            if cert.valid && (over || o.zigzag >= cert.zigzag_bound || !o.escaped) {
                f.violations += 1;
            }
        }
        Some(f)
    } else {
        None
    };

    let mut summary = format!(
        "phi={:.6} mu={:.6} zigzag bound={:.6} reflection bound={} -> certificate {}\n",
        cert.phi,
        cert.mu,
        cert.zigzag_bound,
        cert.reflection_bound.map_or("none".into(), |b| b.to_string()),
        if cert.valid { "valid" } else { "not valid" }
    );
    if let Some(f) = &fuzz {
        let _ = writeln!(
            summary,
            "{} orbits: {} escaped, max reflections {}, max zigzag {:.6}, {} violations",
            f.orbits, f.escaped, f.max_reflections, f.max_zigzag, f.violations
        );
    }
    let violations = fuzz.as_ref().map_or(0, |f| f.violations);
    let failure = (violations > 0).then(|| Failure::internal(format!("{violations} orbits violate a valid escape certificate")));
    Ok(Report {
        files: vec![(
            "cone.json".into(),
            json(&ConeReport {
                certificate: cert,
                fuzz,
            })?,
        )],
        summary,
        failure,
    })
}
