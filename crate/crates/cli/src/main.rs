//! `lapsolve`: solve, certify, and benchmark PSDDD linear systems with
//! graph-preconditioned Chebyshev iteration.
//!
//! Set `LAPSOLVE_LOG` to `off`, `info`, or `audit` to control per-level
//! logging on stderr.

mod mm;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lapsolve_core::solver::{recursive_solve, RecursionPlan, ONE_SHOT_GAMMA};
use lapsolve_core::support::{kappa_f_oracle, DEFAULT_ORACLE_CAP};
use lapsolve_core::{precondition, reduce, Classification, Error, SparseSymmetricMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::io::Write;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "lapsolve", version, about = "Graph-preconditioned PSDDD solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Human,
    JsonLines,
}

#[derive(Args)]
struct CommonOpts {
    /// Relative accuracy target, in (0, 0.5].
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    /// Exponent for t = m^gamma (defaults: 3/13 one-shot, (3-sqrt 5)/2 recursive).
    #[arg(long)]
    gamma: Option<f64>,
    /// Recursion depth (1 = one-shot).
    #[arg(long, default_value_t = 1)]
    depth: usize,
    /// Override t at the top level.
    #[arg(long)]
    t: Option<usize>,
    /// Dimension cap for dense oracles.
    #[arg(long, default_value_t = DEFAULT_ORACLE_CAP)]
    oracle_cap: usize,
    /// Seed for generated right-hand sides and bench instances.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Human)]
    format: Format,
    /// Write the report here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve Ax = b for a Matrix Market system.
    Solve {
        /// Matrix in Matrix Market coordinate format.
        #[arg(long)]
        input: PathBuf,
        /// Right-hand side (one value per line). Defaults to `<input stem>.rhs`
        /// when present, else a seeded random range-compatible vector.
        #[arg(long)]
        rhs: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Build the preconditioner and report its certificate (with the dense
    /// oracle value when the system is small enough).
    Certify {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Run the built-in instance families and report one row per instance.
    Bench {
        /// Families: grid, random, tree-plus, gremban (comma separated).
        #[arg(long, default_value = "grid,random,tree-plus,gremban")]
        families: String,
        /// Instance sizes (vertex counts, comma separated).
        #[arg(long, default_value = "100,400,900")]
        sizes: String,
        #[command(flatten)]
        common: CommonOpts,
    },
}

fn init_logging() {
    struct StderrLog;
    impl log::Log for StderrLog {
        fn enabled(&self, _: &log::Metadata) -> bool {
            true
        }
        fn log(&self, record: &log::Record) {
            eprintln!("[{}] {}", record.level(), record.args());
        }
        fn flush(&self) {}
    }
    static LOGGER: StderrLog = StderrLog;
    let filter = match std::env::var("LAPSOLVE_LOG").as_deref() {
        Ok("info") => log::LevelFilter::Info,
        Ok("audit") => log::LevelFilter::Trace,
        _ => log::LevelFilter::Off,
    };
    let _ = log::set_logger(&LOGGER);
    log::set_max_level(filter);
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    error: &'a str,
    detail: String,
}

fn emit(format: Format, out: &Option<PathBuf>, json: String, human: String) {
    let text = match format {
        Format::Human => human,
        Format::JsonLines => json.clone(),
    };
    println!("{text}");
    if let Some(path) = out {
        if let Err(e) = std::fs::write(path, json + "\n") {
            eprintln!("failed to write {}: {e}", path.display());
        }
    }
}

fn fail(format: Format, code: &str, detail: String, exit: i32) -> ! {
    let rec = ErrorRecord { error: code, detail: detail.clone() };
    match format {
        Format::JsonLines => println!("{}", serde_json::to_string(&rec).unwrap()),
        Format::Human => eprintln!("error: {code}: {detail}"),
    }
    std::process::exit(exit)
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::NotPsddd(_) => 2,
        _ => 1,
    }
}

fn error_code_name(err: &Error) -> &'static str {
    match err {
        Error::NotPsddd(_) => "not-psddd",
        Error::RhsNotInRange { .. } => "rhs-not-in-range",
        Error::IterationCapExceeded { .. } => "iteration-cap-exceeded",
        Error::DivergenceGuard { .. } => "divergence",
        Error::Parse { .. } => "parse-error",
        Error::Io(_) => "io-error",
        _ => "error",
    }
}

/// Load the matrix and a right-hand side (file or seeded random compatible).
fn load_system(
    input: &PathBuf,
    rhs: &Option<PathBuf>,
    seed: u64,
) -> lapsolve_core::Result<(SparseSymmetricMatrix, Vec<f64>, Vec<String>)> {
    let mm = mm::read_matrix_market(input)?;
    let n = mm.matrix.dimension();
    let mut warnings = mm.warnings;
    let rhs_file = rhs.clone().unwrap_or_else(|| mm::rhs_path_for(input));
    let b = if rhs_file.exists() {
        mm::read_rhs(&rhs_file, n)?
    } else {
        if rhs.is_some() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("rhs file {} not found", rhs_file.display()),
            )));
        }
        warnings.push(format!("no rhs file; using seeded random compatible rhs (seed {seed})"));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        random_compatible_rhs(&mm.matrix, &mut rng)
    };
    Ok((mm.matrix, b, warnings))
}

/// Random rhs projected to be range-compatible on singular components.
fn random_compatible_rhs(a: &SparseSymmetricMatrix, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = a.dimension();
    let mut b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    // per-component means removed when the component carries no excess
    if let Ok(g) = lapsolve_core::graph_of(&drop_positive_offdiag(a)) {
        let (comp_of, k) = g.components();
        let diag = a.diagonal();
        let off = a.offdiag_abs_row_sums();
        let scale = diag.iter().fold(0.0f64, |m, &d| m.max(d)).max(1e-300);
        for c in 0..k {
            let verts: Vec<usize> = (0..n).filter(|&v| comp_of[v] == c).collect();
            let excess: f64 = verts.iter().map(|&i| (diag[i] - off[i]).max(0.0)).sum();
            if excess <= 1e-9 * scale {
                let mean: f64 = verts.iter().map(|&i| b[i]).sum::<f64>() / verts.len() as f64;
                for &i in &verts {
                    b[i] -= mean;
                }
            }
        }
    }
    b
}

fn drop_positive_offdiag(a: &SparseSymmetricMatrix) -> SparseSymmetricMatrix {
    let triplets: Vec<(usize, usize, f64)> = a
        .upper_triplets()
        .iter()
        .filter(|&&(i, j, v)| i == j || v < 0.0)
        .copied()
        .collect();
    SparseSymmetricMatrix::from_upper_triplets(a.dimension(), &triplets).expect("subset of valid matrix")
}

fn plan_from(common: &CommonOpts) -> RecursionPlan {
    let mut plan = if common.depth <= 1 {
        RecursionPlan::one_shot(common.gamma.unwrap_or(ONE_SHOT_GAMMA))
    } else {
        let mut p = RecursionPlan::recursive(common.depth);
        if let Some(g) = common.gamma {
            p.gamma = g;
        }
        p
    };
    plan.oracle_cap = common.oracle_cap;
    plan.t_override = common.t;
    plan
}

fn human_solve_report(rep: &lapsolve_core::SolveReport) -> String {
    let mut s = String::new();
    use std::fmt::Write as _;
    let _ = writeln!(s, "system: n = {}, m = {}, components = {}, gremban = {}", rep.n, rep.m, rep.components, rep.gremban);
    let _ = writeln!(
        s,
        "preconditioner: |R| = {}, |S| = {}, rho = {}, x = {:.4}, y = {:.4}",
        rep.r_size, rep.s_size, rep.rho, rep.x_param, rep.y_param
    );
    let _ = writeln!(s, "certificate bound on kappa_f(A,B): {:.6e}", rep.certificate_bound);
    let _ = writeln!(
        s,
        "kappa_f(A) estimate: {:.6e} ({})",
        rep.kappa_a_estimate, rep.kappa_a_source
    );
    for l in &rep.levels {
        let _ = writeln!(
            s,
            "  level {}: n = {}, m = {}, t = {}, bound = {:.4e}, |S| = {}, iters = {}, target = {:.3e}",
            l.level, l.n, l.m, l.t, l.certificate_bound, l.s_size, l.iterations, l.eps_target
        );
    }
    let _ = writeln!(
        s,
        "iterations: {}, relative residual: {:.6e} (eps = {:.1e})",
        rep.iterations, rep.final_relative_residual, rep.eps
    );
    if let Some(ms) = rep.wall_ms {
        let _ = writeln!(s, "wall time: {ms:.1} ms");
    }
    for w in &rep.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s.trim_end().to_string()
}

#[derive(Serialize)]
struct CertifyRow {
    component: usize,
    n: usize,
    m: usize,
    t: usize,
    r_size: usize,
    s_size: usize,
    rho: usize,
    x: f64,
    y: f64,
    bound: f64,
    theory_chain_bound: f64,
    s_budget: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sound: Option<bool>,
    per_level_max: Vec<(usize, f64)>,
}

fn run_certify(input: &PathBuf, common: &CommonOpts) -> Result<Vec<CertifyRow>, Error> {
    let (a, b, _warnings) = load_system(input, &None, common.seed)?;
    let (systems, _plan) = reduce(&a, &b)?;
    let mut rows = Vec::new();
    for (ci, sys) in systems.iter().enumerate() {
        let n = sys.graph.n_vertices();
        let m = sys.graph.n_edges();
        if n <= 1 {
            continue;
        }
        let t = common
            .t
            .unwrap_or_else(|| ((m as f64).powf(common.gamma.unwrap_or(ONE_SHOT_GAMMA)).ceil() as usize).clamp(1, n));
        let pc = precondition(&sys.graph, t)?;
        let (oracle_kappa, sound) = if n <= common.oracle_cap {
            let k = kappa_f_oracle(&sys.graph.laplacian(), &pc.b_graph.laplacian(), common.oracle_cap)?;
            (Some(k), Some(k <= pc.certificate.bound * (1.0 + 1e-6)))
        } else {
            (None, None)
        };
        rows.push(CertifyRow {
            component: ci,
            n,
            m,
            t,
            r_size: pc.tree.len(),
            s_size: pc.augmentation.len(),
            rho: pc.certificate.rho,
            x: pc.certificate.x,
            y: pc.certificate.y,
            bound: pc.certificate.bound,
            theory_chain_bound: pc.certificate.theory_chain_bound,
            s_budget: lapsolve_core::precondition::s_budget(pc.certificate.rho, t),
            oracle_kappa,
            sound,
            per_level_max: pc.certificate.per_level_max.clone(),
        });
    }
    Ok(rows)
}

#[derive(Serialize)]
struct BenchRow {
    family: String,
    n: usize,
    m: usize,
    t: usize,
    s_size: usize,
    certificate_bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_kappa: Option<f64>,
    iterations: usize,
    residual: f64,
    target_met: bool,
}

fn run_bench(families: &str, sizes: &str, common: &CommonOpts) -> Result<Vec<BenchRow>, Error> {
    let sizes: Vec<usize> = sizes
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse().map_err(|_| Error::Parse { line: 0, msg: format!("bad size {s:?}") }))
        .collect::<Result<_, _>>()?;
    let plan = plan_from(common);
    let mut rows = Vec::new();
    for family in families.split(',').map(|f| f.trim()).filter(|f| !f.is_empty()) {
        for (idx, &size) in sizes.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(common.seed ^ (idx as u64) << 8);
            let (a, label) = match family {
                "grid" => {
                    let side = (size as f64).sqrt().round().max(2.0) as usize;
                    let g = lapsolve_core::generate::grid(side, side, &mut rng, 1.0);
                    (g.laplacian(), format!("grid-{side}x{side}"))
                }
                "random" => {
                    let g = lapsolve_core::generate::connected_graph(size, 2 * size, &mut rng, 2.0);
                    (g.laplacian(), format!("random-{size}"))
                }
                "tree-plus" => {
                    let k = (size / 20).max(2);
                    let g = lapsolve_core::generate::tree_plus(size, k, &mut rng, 1.0);
                    (g.laplacian(), format!("tree-plus-{size}+{k}"))
                }
                "gremban" => {
                    let n = size.min(300);
                    (lapsolve_core::generate::gremban_psddd(n, &mut rng), format!("gremban-{n}"))
                }
                other => {
                    return Err(Error::Parse { line: 0, msg: format!("unknown family {other:?}") })
                }
            };
            let b = random_compatible_rhs(&a, &mut rng);
            let (_, rep) = recursive_solve(&a, &b, common.eps, &plan)?;
            let oracle_kappa = if rep.n <= common.oracle_cap && !rep.gremban {
                // kappa of the top component preconditioner is already in the report;
                // report kappa_f(A) here
                lapsolve_core::support::kappa_f_single(&a, common.oracle_cap).ok()
            } else {
                None
            };
            let target = rep
                .levels
                .first()
                .map(|l| l.eps_target)
                .unwrap_or(common.eps)
                .max(common.eps.min(1.0));
            rows.push(BenchRow {
                family: label,
                n: rep.n,
                m: rep.m,
                t: rep.levels.first().map(|l| l.t).unwrap_or(1),
                s_size: rep.s_size,
                certificate_bound: rep.certificate_bound,
                oracle_kappa,
                iterations: rep.iterations,
                residual: rep.final_relative_residual,
                target_met: rep.final_relative_residual <= target * (1.0 + 1e-12),
            });
        }
    }
    Ok(rows)
}

fn main() {
    init_logging();
    let cli = Cli::parse();
    match cli.command {
        Command::Solve { input, rhs, common } => {
            if !(common.eps > 0.0 && common.eps <= 0.5) {
                fail(common.format, "bad-config", format!("eps = {} outside (0, 0.5]", common.eps), 1);
            }
            let (a, b, warnings) = match load_system(&input, &rhs, common.seed) {
                Ok(v) => v,
                Err(e) => fail(common.format, error_code_name(&e), e.to_string(), exit_code_for(&e)),
            };
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            if a.classification() == Classification::NotPsddd {
                fail(common.format, "not-psddd", "matrix is not PSDDD".into(), 2);
            }
            let plan = plan_from(&common);
            match recursive_solve(&a, &b, common.eps, &plan) {
                Ok((_, mut rep)) => {
                    rep.warnings.splice(0..0, warnings);
                    let json = rep.deterministic_json();
                    emit(common.format, &common.out, json, human_solve_report(&rep));
                    // a successful return means every component met its
                    // (possibly floored) residual target
                    std::process::exit(0);
                }
                Err(e) => fail(common.format, error_code_name(&e), e.to_string(), exit_code_for(&e)),
            }
        }
        Command::Certify { input, common } => match run_certify(&input, &common) {
            Ok(rows) => {
                for row in rows {
                    let json = serde_json::to_string(&row).unwrap();
                    let human = format!(
                        "component {}: n = {}, m = {}, t = {}, |R| = {}, |S| = {} (budget {}), bound = {:.6e}{}",
                        row.component,
                        row.n,
                        row.m,
                        row.t,
                        row.r_size,
                        row.s_size,
                        row.s_budget,
                        row.bound,
                        match (row.oracle_kappa, row.sound) {
                            (Some(k), Some(s)) => format!(", oracle kappa = {k:.6e}, sound = {s}"),
                            _ => String::new(),
                        }
                    );
                    emit(common.format, &common.out, json, human);
                }
            }
            Err(e) => fail(common.format, error_code_name(&e), e.to_string(), exit_code_for(&e)),
        },
        Command::Bench { families, sizes, common } => match run_bench(&families, &sizes, &common) {
            Ok(rows) => {
                let mut all = String::new();
                for row in &rows {
                    let json = serde_json::to_string(row).unwrap();
                    all.push_str(&json);
                    all.push('\n');
                    let human = format!(
                        "{}: n = {}, m = {}, t = {}, |S| = {}, bound = {:.4e}{}, iters = {}, residual = {:.3e}",
                        row.family,
                        row.n,
                        row.m,
                        row.t,
                        row.s_size,
                        row.certificate_bound,
                        row.oracle_kappa.map(|k| format!(", kappa_f(A) = {k:.4e}")).unwrap_or_default(),
                        row.iterations,
                        row.residual
                    );
                    match common.format {
                        Format::Human => println!("{human}"),
                        Format::JsonLines => println!("{json}"),
                    }
                }
                if let Some(path) = &common.out {
                    if let Err(e) = std::fs::write(path, all) {
                        eprintln!("failed to write {}: {e}", path.display());
                    }
                }
            }
            Err(e) => fail(common.format, error_code_name(&e), e.to_string(), exit_code_for(&e)),
        },
    }
    let _ = std::io::stdout().flush();
}
