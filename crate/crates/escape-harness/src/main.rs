//! `escape` — experiment driver and guarantee checker for the saddle-escape
//! optimizer.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 failed guarantee check,
//! 3 invalid configuration or arguments.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use escape_harness::lemma_checks::run_lemma_checks;
use escape_harness::methods::base_config;
use escape_harness::{
    run_experiment, run_method, ExperimentKind, ExperimentSpec, HarnessError, Method,
    ProblemFamily, RawConfig,
};

#[derive(Parser)]
#[command(
    name = "escape",
    version,
    about = "Saddle-escape optimizer experiments and guarantee checks"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a named experiment and write its CSV outputs.
    Run {
        /// Experiment: dimension_scaling, convergence, success_rate,
        /// noise_robustness, or lemma_checks.
        #[arg(long)]
        exp: String,
        /// Flat `key = value` config file overlaying the defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (overrides the config's `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Offset added to every seed.
        #[arg(long, default_value_t = 0)]
        seed_base: u64,
        /// Worker threads (default: one per core).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Numerically verify the analytical guarantees; exits 2 on any failure.
    Check {
        /// Reduced sample counts for a fast smoke pass.
        #[arg(long)]
        quick: bool,
    },
    /// Run one trajectory and write its trace CSV.
    Single {
        /// Problem family: quartic, coupled, rosenbrock, or quadratic.
        #[arg(long)]
        family: String,
        #[arg(long, default_value_t = 100)]
        dim: usize,
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        /// Method: gd, psd, psd_probe, or pgd.
        #[arg(long, default_value = "psd")]
        method: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for the trace files.
        #[arg(long, default_value = "results/single")]
        out: PathBuf,
        /// Interaction strength for the coupled family.
        #[arg(long, default_value_t = 0.1)]
        coupling: f64,
    },
}

const EXIT_CHECK_FAILED: u8 = 2;
const EXIT_BAD_CONFIG: u8 = 3;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(EXIT_BAD_CONFIG);
        }
    };
    match cli.cmd {
        Cmd::Run {
            exp,
            config,
            out,
            seed_base,
            jobs,
        } => cmd_run(&exp, config.as_deref(), out, seed_base, jobs),
        Cmd::Check { quick } => cmd_check(quick),
        Cmd::Single {
            family,
            dim,
            eps,
            delta,
            method,
            seed,
            out,
            coupling,
        } => cmd_single(&family, dim, eps, delta, &method, seed, &out, coupling),
    }
}

fn cmd_run(
    exp: &str,
    config: Option<&std::path::Path>,
    out: Option<PathBuf>,
    seed_base: u64,
    jobs: Option<usize>,
) -> ExitCode {
    let Some(kind) = ExperimentKind::parse(exp) else {
        eprintln!(
            "error: unknown experiment `{exp}` (expected dimension_scaling, convergence, \
             success_rate, noise_robustness, or lemma_checks)"
        );
        return ExitCode::from(EXIT_BAD_CONFIG);
    };
    if kind == ExperimentKind::LemmaChecks {
        return cmd_check(false);
    }
    let mut spec = ExperimentSpec::default_for(kind);
    if let Some(path) = config {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("error: cannot read config {}: {e}", path.display());
                return ExitCode::from(EXIT_BAD_CONFIG);
            }
        };
        let raw = match RawConfig::parse(&text) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                return ExitCode::from(EXIT_BAD_CONFIG);
            }
        };
        if let Err(e) = spec.apply_config(&raw) {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(EXIT_BAD_CONFIG);
        }
    }
    if let Some(dir) = out {
        spec.output_dir = dir;
    }
    spec.jobs = jobs;
    let spec = match spec.with_seed_base(seed_base) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_BAD_CONFIG);
        }
    };
    let exp_dir = spec.output_dir.join(spec.kind.name());
    match run_experiment(&spec) {
        Ok(table) => {
            println!(
                "wrote {} result rows under {}",
                table.rows.len(),
                exp_dir.display()
            );
            if let Ok(summary) = fs::read_to_string(exp_dir.join("summary.txt")) {
                print!("{summary}");
            }
            ExitCode::SUCCESS
        }
        Err(e @ (HarnessError::Config(_) | HarnessError::Invalid(_) | HarnessError::Param(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_BAD_CONFIG)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_check(quick: bool) -> ExitCode {
    let suite = run_lemma_checks(quick);
    print!("{}", suite.render());
    if suite.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CHECK_FAILED)
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_single(
    family: &str,
    dim: usize,
    eps: f64,
    delta: f64,
    method: &str,
    seed: u64,
    out: &std::path::Path,
    coupling: f64,
) -> ExitCode {
    let Some(family) = ProblemFamily::parse(family) else {
        eprintln!(
            "error: unknown family `{family}` (expected quartic, coupled, rosenbrock, or quadratic)"
        );
        return ExitCode::from(EXIT_BAD_CONFIG);
    };
    let Some(method) = Method::parse(method) else {
        eprintln!("error: unknown method `{method}` (expected gd, psd, psd_probe, or pgd)");
        return ExitCode::from(EXIT_BAD_CONFIG);
    };
    let problem = match family.build(dim, coupling) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_BAD_CONFIG);
        }
    };
    let cfg = match base_config(&problem, eps, delta) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_BAD_CONFIG);
        }
    };
    let x0 = family.start(dim, seed);
    let outcome = match run_method(&problem, &cfg, method, &x0, seed) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    if let Err(e) = fs::create_dir_all(out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return ExitCode::FAILURE;
    }
    if let Some(trace) = &outcome.trace {
        let trace_path = out.join(format!("trace_{seed}.csv"));
        let episodes_path = out.join(format!("episodes_{seed}.csv"));
        if let Err(e) = write_csv(&trace_path, |w| trace.write_trace_csv(w))
            .and_then(|()| write_csv(&episodes_path, |w| trace.write_episodes_csv(w)))
        {
            eprintln!("error: cannot write trace: {e}");
            return ExitCode::FAILURE;
        }
        println!("trace: {}", trace_path.display());
    }
    println!(
        "family={} dim={dim} method={} seed={seed} iterations={} status={} \
         terminal_f={:.6e} terminal_grad_norm={:.6e}",
        family.name(),
        method.name(),
        outcome.iterations,
        outcome.status,
        outcome.terminal_f,
        outcome.terminal_grad_norm,
    );
    ExitCode::SUCCESS
}

fn write_csv(
    path: &std::path::Path,
    write: impl FnOnce(&mut std::io::BufWriter<fs::File>) -> std::io::Result<()>,
) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    write(&mut w)
}
