use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use pivotfw::harness::{gen_logistic, gen_signal_recovery, run_experiment, write_instance_csv};
use pivotfw::identification::parse_face;
use pivotfw::{Error, ExperimentConfig, Method, StepRule};

#[derive(Parser)]
#[command(name = "pivotfw", version, about = "Frank-Wolfe experiments with optional pivoting cleanup")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one solver and write its trajectory as CSV.
    Run(RunArgs),
    /// Generate a synthetic instance file.
    #[command(subcommand)]
    Gen(GenCommand),
}

#[derive(Args)]
struct RunArgs {
    /// fw, afw, bpfw, p-fw, p-afw or p-bpfw.
    #[arg(long)]
    alg: Method,
    /// e.g. simplex:n=50, l1:n=140,tau=2.5, ksparse:n=100,k=10,tau=1.0
    #[arg(long)]
    region: String,
    /// e.g. lstsq:file=a.csv, logistic:file=a.csv, quadratic-simplex:n=50,seed=7,facedim=4
    #[arg(long)]
    objective: String,
    /// line-search, short-step, open-loop[:ell], fixed:eta or adaptive.
    #[arg(long, default_value = "line-search")]
    step: StepRule,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-9)]
    gap_tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Verify the cleanup postconditions at every iteration.
    #[arg(long)]
    debug_checks: bool,
    /// Attach the identification monitor, e.g. face=0,3,7.
    #[arg(long)]
    identify: Option<String>,
    /// Write zero wall times so that repeated runs give identical files.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Subcommand)]
enum GenCommand {
    /// Sparse signal recovery: Gaussian design over an l1 ball.
    Signal {
        #[arg(long, default_value_t = 60)]
        m: usize,
        #[arg(long, default_value_t = 140)]
        n: usize,
        #[arg(long, default_value_t = 0.3)]
        sparsity: f64,
        #[arg(long, default_value_t = 20.0)]
        tau_f: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Logistic regression with a planted sparse separator.
    Logistic {
        #[arg(long, default_value_t = 200)]
        m: usize,
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let identify = args.identify.as_deref().map(parse_face).transpose()?;
    let config = ExperimentConfig {
        method: args.alg,
        region: args.region,
        objective: args.objective,
        step: args.step,
        max_iter: args.max_iter,
        gap_tol: args.gap_tol,
        seed: args.seed,
        out: args.out,
        debug_checks: args.debug_checks,
        identify,
        record_timing: !args.no_timing,
    };
    let outcome = run_experiment(&config)?;
    if let Some(last) = outcome.records.last() {
        eprintln!(
            "{}: {} iterations, primal {:e}, gap {:e}, |S| {}",
            config.method, last.iter, last.primal, last.fw_gap, last.active_set_size
        );
    }
    if let Some(id) = outcome.identification {
        match (id.r, id.max_size_after) {
            (Some(r), Some(size)) => eprintln!("identified face from iteration {r}; max |S| afterwards {size}"),
            _ => eprintln!("face not identified within the budget"),
        }
    }
    Ok(())
}

fn gen(cmd: GenCommand) -> anyhow::Result<()> {
    match cmd {
        GenCommand::Signal {
            m,
            n,
            sparsity,
            tau_f,
            seed,
            out,
        } => {
            let inst = gen_signal_recovery(m, n, sparsity, tau_f, seed)?;
            write_instance_csv(&out, inst.objective.design(), inst.objective.target())
                .with_context(|| format!("writing {}", out.display()))?;
            println!("{}", inst.region);
        }
        GenCommand::Logistic { m, n, seed, out } => {
            let inst = gen_logistic(m, n, seed)?;
            write_instance_csv(&out, inst.objective.features(), inst.objective.labels())
                .with_context(|| format!("writing {}", out.display()))?;
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_numerical() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Gen(cmd) => gen(cmd),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
