//! Batch front-end: generate toy problems, solve for dual bounds, run the
//! verification suites, and drive the refinement loop. Exit codes are a
//! stable contract: 0 success (StrongDual / all checks pass), 3 completed
//! with a suspected gap or failing check, 2 input or configuration error.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use duality_bounds::constraints::{default_family, validate_on_designs, ConstraintSet};
use duality_bounds::dual::{minimize_dual, LagrangianProblem, SolverConfig};
use duality_bounds::io::{
    load_json, save_json, status_name, BoundReport, ConstraintSetFile, ProblemFile, VerifyReport,
};
use duality_bounds::linalg::{QuadraticForm, C64};
use duality_bounds::refine::{certify, run_restart_loop, CertificateKind, RefineConfig};
use duality_bounds::scattering::{build_toy_problem, Design, ScatteringProblem};
use duality_bounds::verify::{
    fd_check_suite, lemma3_check, lemma4_violation_bound, minimax_cross_check, oracle_bound,
};

const EXIT_OK: i32 = 0;
const EXIT_INPUT: i32 = 2;
const EXIT_GAP: i32 = 3;

#[derive(Parser)]
#[command(name = "duality-bounds", version, about = "Lagrangian dual bounds for toy scattering QCQPs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a seeded toy problem file.
    Generate(GenArgs),
    /// Solve the dual bound for one or more problems.
    Solve(SolveArgs),
    /// Run verification suites against a problem.
    Verify(VerifyArgs),
    /// Run the strong-duality refinement loop.
    Refine(RefineArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    blocks: usize,
    #[arg(long)]
    loss: f64,
    #[arg(long, default_value_t = 0.3)]
    coupling: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the default constraint family to this path.
    #[arg(long)]
    constraints_out: Option<PathBuf>,
    /// Background designs included in the emitted constraint family.
    #[arg(long = "background")]
    backgrounds: Vec<String>,
}

#[derive(Args, Clone)]
struct FamilyArgs {
    /// Scale of the linear objective 2 Re(t^dag s) built from the incident
    /// field.
    #[arg(long, default_value_t = 0.5)]
    obj_scale: f64,
    /// Background designs for the shifted constraint schema, as bit strings
    /// like "1010" (repeatable).
    #[arg(long = "background")]
    backgrounds: Vec<String>,
    /// Load the constraint set from a file instead of building the default
    /// family.
    #[arg(long)]
    constraints: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct SolverArgs {
    #[arg(long, default_value_t = 1e-6)]
    eps_factor: f64,
    #[arg(long, default_value_t = 1e-8)]
    grad_tol: f64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            eps_factor: self.eps_factor,
            grad_tol: self.grad_tol,
            max_iters: self.max_iters,
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Problem file (repeatable; multiple problems fan out across workers).
    #[arg(long = "problem", required_unless_present = "manifest")]
    problems: Vec<PathBuf>,
    /// Run manifest JSON; alternative to the individual flags.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output report path (single problem) or directory (multiple).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also compute the exhaustive design-enumeration bound.
    #[arg(long)]
    with_oracle: bool,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    family: FamilyArgs,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    problem: PathBuf,
    /// Suites: all, validity, fd, weak, lemma3, lemma4, minimax.
    #[arg(long, default_value = "all")]
    suite: String,
    /// Sample points for the fd and lemma3 suites.
    #[arg(long, default_value_t = 20)]
    points: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    family: FamilyArgs,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct RefineArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, default_value_t = 10)]
    max_restarts: usize,
    #[arg(long, default_value_t = 1e-7)]
    cert_tol: f64,
    #[arg(long, default_value_t = 1.0)]
    a_obj: f64,
    #[arg(long)]
    hybrid_alpha: bool,
    #[arg(long)]
    single_shot: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    family: FamilyArgs,
    #[command(flatten)]
    solver: SolverArgs,
}

/// On-disk manifest equivalent to the solve flags.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunManifest {
    problems: Vec<PathBuf>,
    #[serde(default)]
    backgrounds: Vec<String>,
    #[serde(default = "default_obj_scale")]
    obj_scale: f64,
    solver: SolverConfig,
    #[serde(default)]
    with_oracle: bool,
    out: PathBuf,
    seed: u64,
}

fn default_obj_scale() -> f64 {
    0.5
}

fn fail_input(msg: impl std::fmt::Display) -> ! {
    eprintln!("error: {msg}");
    std::process::exit(EXIT_INPUT);
}

fn parse_background(bits: &str, j: usize) -> Result<Design, String> {
    if bits.len() != j || !bits.chars().all(|c| c == '0' || c == '1') {
        return Err(format!(
            "background '{bits}' must be a {j}-character bit string"
        ));
    }
    Ok(Design::new(bits.chars().map(|c| c == '1').collect()))
}

fn build_family(
    p: &ScatteringProblem,
    family: &FamilyArgs,
) -> Result<ConstraintSet, String> {
    if let Some(path) = &family.constraints {
        let file: ConstraintSetFile =
            load_json(path).map_err(|e| format!("reading {}: {e}", path.display()))?;
        return file.into_set().map_err(|e| e.to_string());
    }
    let mut backgrounds = Vec::new();
    for b in &family.backgrounds {
        backgrounds.push(parse_background(b, p.num_blocks()).map_err(|e| e)?);
    }
    default_family(p, &backgrounds).map_err(|e| e.to_string())
}

fn build_problem(path: &Path) -> Result<ScatteringProblem, String> {
    let file: ProblemFile =
        load_json(path).map_err(|e| format!("reading {}: {e}", path.display()))?;
    file.into_problem().map_err(|e| e.to_string())
}

fn build_lagrangian(
    p: &ScatteringProblem,
    family: &FamilyArgs,
    eps_factor: f64,
) -> Result<LagrangianProblem, String> {
    let cs = build_family(p, family)?;
    let s = p.incident() * C64::new(family.obj_scale, 0.0);
    let obj = QuadraticForm::new(s, duality_bounds::linalg::zeros(p.dim()), 0.0)
        .map_err(|e| e.to_string())?;
    LagrangianProblem::with_default_eps(obj, cs, eps_factor).map_err(|e| e.to_string())
}

fn effective_jobs(requested: usize) -> usize {
    let cap = std::env::var("DUALITY_BOUNDS_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(usize::MAX);
    requested.clamp(1, cap.max(1))
}

fn cmd_generate(args: &GenArgs) -> i32 {
    match build_toy_problem(args.dim, args.blocks, args.loss, args.coupling, args.seed) {
        Ok(p) => {
            let file = ProblemFile::from_problem(&p);
            if let Err(e) = save_json(&args.out, &file) {
                fail_input(format!("writing {}: {e}", args.out.display()));
            }
            if let Some(cpath) = &args.constraints_out {
                let mut backgrounds = Vec::new();
                for b in &args.backgrounds {
                    match parse_background(b, p.num_blocks()) {
                        Ok(d) => backgrounds.push(d),
                        Err(e) => fail_input(e),
                    }
                }
                match default_family(&p, &backgrounds) {
                    Ok(cs) => {
                        let cfile = ConstraintSetFile::from_set(&cs, p.eps_passivity());
                        if let Err(e) = save_json(cpath, &cfile) {
                            fail_input(format!("writing {}: {e}", cpath.display()));
                        }
                    }
                    Err(e) => fail_input(e),
                }
            }
            EXIT_OK
        }
        Err(e) => fail_input(e),
    }
}

fn solve_one(
    path: &Path,
    out: &Path,
    family: &FamilyArgs,
    cfg: &SolverConfig,
    with_oracle: bool,
) -> Result<bool, String> {
    let started = Instant::now();
    let p = build_problem(path)?;
    let lp = build_lagrangian(&p, family, cfg.eps_factor)?;
    let (oracle_value, oracle_design) = if with_oracle {
        let (v, d) = oracle_bound(&p, lp.objective()).map_err(|e| e.to_string())?;
        (Some(v), Some(d.bits().to_vec()))
    } else {
        (None, None)
    };
    let state = minimize_dual(&lp, cfg).map_err(|e| e.to_string())?;
    let cert = certify(&state, &lp, 1e-7).map_err(|e| e.to_string())?;

    let grad_norm = state.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let report = BoundReport {
        dual_value: state.value,
        status: status_name(state.status).to_string(),
        grad_norm,
        lift_alpha: state.lift_alpha,
        lambda_min: state.lambda_min,
        phi: state.phi.0.clone(),
        certificate: duality_bounds::io::certificate_to_value(&cert)
            .map_err(|e| e.to_string())?,
        oracle_value,
        oracle_design,
        scale: lp.scale(),
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
        }
    }
    save_json(out, &report).map_err(|e| e.to_string())?;
    Ok(cert.kind == CertificateKind::StrongDual)
}

fn cmd_solve(args: &SolveArgs) -> i32 {
    let (problems, family, cfg, with_oracle, out) = if let Some(mp) = &args.manifest {
        let m: RunManifest = match load_json(mp) {
            Ok(m) => m,
            Err(e) => fail_input(format!("reading {}: {e}", mp.display())),
        };
        let family = FamilyArgs {
            obj_scale: m.obj_scale,
            backgrounds: m.backgrounds.clone(),
            constraints: None,
        };
        let mut cfg = m.solver.clone();
        cfg.seed = m.seed;
        (m.problems.clone(), family, cfg, m.with_oracle, m.out.clone())
    } else {
        (
            args.problems.clone(),
            args.family.clone(),
            args.solver.config(),
            args.with_oracle,
            args.out.clone(),
        )
    };
    if problems.is_empty() {
        fail_input("no problem files given");
    }

    let single = problems.len() == 1;
    let targets: Vec<(PathBuf, PathBuf)> = problems
        .iter()
        .map(|p| {
            let out_path = if single && out.extension().is_some() {
                out.clone()
            } else {
                let stem = p.file_stem().unwrap_or_default().to_string_lossy();
                out.join(stem.as_ref()).join("report.json")
            };
            (p.clone(), out_path)
        })
        .collect();

    let jobs = effective_jobs(args.jobs);
    let results: Vec<Result<bool, String>> = if jobs <= 1 || targets.len() <= 1 {
        targets
            .iter()
            .map(|(p, o)| solve_one(p, o, &family, &cfg, with_oracle))
            .collect()
    } else {
        std::thread::scope(|scope| {
            let chunks: Vec<_> = targets.chunks(targets.len().div_ceil(jobs)).collect();
            let handles: Vec<_> = chunks
                .into_iter()
                .map(|chunk| {
                    let family = &family;
                    let cfg = &cfg;
                    scope.spawn(move || {
                        chunk
                            .iter()
                            .map(|(p, o)| solve_one(p, o, family, cfg, with_oracle))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("worker panicked"))
                .collect()
        })
    };

    let mut any_gap = false;
    for (r, (p, _)) in results.iter().zip(&targets) {
        match r {
            Ok(strong) => any_gap |= !strong,
            Err(e) => fail_input(format!("{}: {e}", p.display())),
        }
    }
    if any_gap {
        EXIT_GAP
    } else {
        EXIT_OK
    }
}

fn cmd_verify(args: &VerifyArgs) -> i32 {
    let p = match build_problem(&args.problem) {
        Ok(p) => p,
        Err(e) => fail_input(e),
    };
    let suite = args.suite.as_str();
    let known = ["all", "validity", "fd", "weak", "lemma3", "lemma4", "minimax"];
    if !known.contains(&suite) {
        fail_input(format!("unknown suite '{suite}'"));
    }
    let cs = match build_family(&p, &args.family) {
        Ok(cs) => cs,
        Err(e) => fail_input(e),
    };
    let cfg = args.solver.config();

    let mut report = VerifyReport {
        constraint_validity: None,
        fd: None,
        weak_duality_pass: None,
        lemma3: None,
        lemma4: None,
        minimax: None,
        pass: true,
    };

    let want = |name: &str| suite == "all" || suite == name;

    if want("validity") {
        match validate_on_designs(&cs, &p, 1e-8) {
            Ok(v) => {
                report.pass &= v.pass;
                let failed = !v.pass;
                report.constraint_validity = Some(v);
                if failed {
                    // a broken constraint set invalidates the later suites
                    finish_verify(&report, args.out.as_deref());
                    return EXIT_GAP;
                }
            }
            Err(e) => fail_input(e),
        }
    }

    let lp = match build_lagrangian(&p, &args.family, cfg.eps_factor) {
        Ok(lp) => lp,
        Err(e) => fail_input(e),
    };

    if want("fd") {
        match fd_check_suite(&lp, args.points, cfg.seed) {
            Ok(r) => {
                report.pass &= r.pass;
                report.fd = Some(r);
            }
            Err(e) => fail_input(e),
        }
    }

    let needs_state = want("weak") || want("lemma3") || want("lemma4");
    if needs_state {
        let state = match minimize_dual(&lp, &cfg) {
            Ok(s) => s,
            Err(e) => fail_input(e),
        };
        if want("weak") {
            match oracle_bound(&p, lp.objective()) {
                Ok((oracle, _)) => {
                    let ok = state.value >= oracle - 1e-8 * lp.scale();
                    report.weak_duality_pass = Some(ok);
                    report.pass &= ok;
                }
                Err(e) => fail_input(e),
            }
        }
        if want("lemma3") {
            match lemma3_check(&lp, &state.t_star, args.points.max(100), cfg.seed) {
                Ok(r) => {
                    report.pass &= r.pass;
                    report.lemma3 = Some(r);
                }
                Err(e) => fail_input(e),
            }
        }
        if want("lemma4") {
            let f_d = lp.constraints().compact().form.clone();
            match f_d.eval(&state.t_star) {
                Ok(v) if v >= 0.0 => {
                    match lemma4_violation_bound(&lp, &state.t_star, &f_d, v.max(1e-12)) {
                        Ok(r) => {
                            report.pass &= r.pass;
                            report.lemma4 = Some(r);
                        }
                        Err(e) => fail_input(e),
                    }
                }
                Ok(_) => {} // maximizer outside C: precondition unavailable
                Err(e) => fail_input(e),
            }
        }
    }

    if want("minimax") {
        match minimax_cross_check(&lp, &p, 20, cfg.seed) {
            Ok(r) => {
                report.pass &= r.pass;
                report.minimax = Some(r);
            }
            Err(e) => fail_input(e),
        }
    }

    let pass = report.pass;
    finish_verify(&report, args.out.as_deref());
    if pass {
        EXIT_OK
    } else {
        EXIT_GAP
    }
}

fn finish_verify(report: &VerifyReport, out: Option<&Path>) {
    match out {
        Some(path) => {
            if let Err(e) = save_json(path, report) {
                fail_input(format!("writing {}: {e}", path.display()));
            }
        }
        None => println!(
            "{}",
            serde_json::to_string_pretty(report).expect("report serializes")
        ),
    }
}

fn cmd_refine(args: &RefineArgs) -> i32 {
    let p = match build_problem(&args.problem) {
        Ok(p) => p,
        Err(e) => fail_input(e),
    };
    let cfg = RefineConfig {
        max_restarts: args.max_restarts,
        cert_tol: args.cert_tol,
        a_obj: args.a_obj,
        solver: args.solver.config(),
        hybrid_alpha: args.hybrid_alpha,
        single_shot: args.single_shot,
    };
    let lp = match build_lagrangian(&p, &args.family, cfg.solver.eps_factor) {
        Ok(lp) => lp,
        Err(e) => fail_input(e),
    };
    let trace = match run_restart_loop(&lp, &cfg) {
        Ok(t) => t,
        Err(e) => fail_input(e),
    };
    let strong = trace.final_certificate.kind == CertificateKind::StrongDual;
    match &args.out {
        Some(path) => {
            if let Err(e) = save_json(path, &trace) {
                fail_input(format!("writing {}: {e}", path.display()));
            }
        }
        None => println!(
            "{}",
            serde_json::to_string_pretty(&trace).expect("trace serializes")
        ),
    }
    if strong {
        EXIT_OK
    } else {
        EXIT_GAP
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match &cli.cmd {
        Cmd::Generate(a) => cmd_generate(a),
        Cmd::Solve(a) => cmd_solve(a),
        Cmd::Verify(a) => cmd_verify(a),
        Cmd::Refine(a) => cmd_refine(a),
    };
    std::process::exit(code);
}
