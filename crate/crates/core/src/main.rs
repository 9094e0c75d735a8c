use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use selfreg::experiments::{exit_code, load_config, run, Mode, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "selfreg", version, about = "Self-regularized kernel learning experiments")]
struct Cli {
    #[command(subcommand)]
    mode: ModeArg,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Configuration file (flat `key = value`, see docs/CONFIG.md).
    #[arg(long)]
    config: PathBuf,
    /// Overrides every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ModeArg {
    /// Run gradient descent and write trajectory.csv and path.csv.
    Train(RunArgs),
    /// Hold-out early stopping; writes cv_report.csv.
    Cv(RunArgs),
    /// Run the check suite; writes verify.csv.
    Verify(RunArgs),
    /// Evaluate learning-rate exponents; writes rates.csv.
    Rates(RunArgs),
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("SELFREG_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| format!("SELFREG_THREADS must be a positive integer, got `{v}`"))?;
    if n == 0 {
        return Err("SELFREG_THREADS must be a positive integer, got `0`".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 };
            return ExitCode::from(code);
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_CONFIG as u8);
    }
    let (mode, args) = match cli.mode {
        ModeArg::Train(a) => (Mode::Train, a),
        ModeArg::Cv(a) => (Mode::Cv, a),
        ModeArg::Verify(a) => (Mode::Verify, a),
        ModeArg::Rates(a) => (Mode::Rates, a),
    };
    let result = load_config(&args.config).and_then(|mut cfg| {
        if let Some(s) = args.seed {
            cfg = cfg.with_seed(s);
        }
        if let Some(dir) = args.out {
            cfg.output_dir = dir;
        }
        run(&cfg, Some(mode))
    });
    match &result {
        Ok(out) => {
            for line in &out.summary {
                println!("{line}");
            }
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            if !out.failed_checks.is_empty() {
                eprintln!("failed checks: {}", out.failed_checks.join(", "));
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&result) as u8)
}
