//! Experiment CLI: run one Monte Carlo cell (or a one-axis sweep) and emit
//! per-sample CSV plus a summary table.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use stoch_bddc::error::Error;
use stoch_bddc::harness::{self, ExperimentConfig};

#[derive(Parser, Debug)]
#[command(
    name = "stoch-bddc",
    about = "Monte Carlo sampling of a lognormal-coefficient elliptic PDE with stochastic BDDC preconditioners"
)]
struct Cli {
    /// Flat key=value config file; flags below override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Subdomains per side (N_s).
    #[arg(long)]
    ns: Option<usize>,
    /// Cells per subdomain side (H/h).
    #[arg(long)]
    n: Option<usize>,
    /// Variance of the log-coefficient field.
    #[arg(long)]
    sigma2: Option<f64>,
    /// Correlation length of the covariance kernel.
    #[arg(long)]
    ell: Option<f64>,
    /// Global KL truncation.
    #[arg(long)]
    mkl: Option<usize>,
    /// Subdomain-local KL truncation.
    #[arg(long)]
    nkl: Option<usize>,
    /// Chaos degree d.
    #[arg(long)]
    degree: Option<usize>,
    /// Gauss-Hermite points per dimension (collocation).
    #[arg(long)]
    quad: Option<usize>,
    /// Preconditioner: exact | mpc | sg | sc.
    #[arg(long)]
    method: Option<String>,
    /// Interface operator: exact | surrogate.
    #[arg(long)]
    operator: Option<String>,
    /// Number of Monte Carlo samples.
    #[arg(long)]
    samples: Option<usize>,
    /// Master seed; per-sample seeds derive from it deterministically.
    #[arg(long)]
    seed: Option<u64>,
    /// Relative-residual stopping tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration cap.
    #[arg(long)]
    maxit: Option<usize>,
    /// CSV output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Sweep one parameter instead of a single run, e.g. --sweep-axis sigma2.
    #[arg(long)]
    sweep_axis: Option<String>,
    /// Comma-separated sweep values, e.g. 0.2,0.5,1.0.
    #[arg(long)]
    sweep_values: Option<String>,
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)?;
        cfg.apply_file(&text)?;
    }
    macro_rules! over {
        ($field:ident) => {
            if let Some(v) = &cli.$field {
                cfg.apply_kv(stringify!($field), &v.to_string())?;
            }
        };
    }
    over!(ns);
    over!(n);
    over!(sigma2);
    over!(ell);
    over!(mkl);
    over!(nkl);
    over!(degree);
    over!(quad);
    over!(method);
    over!(operator);
    over!(samples);
    over!(seed);
    over!(tol);
    over!(maxit);
    over!(workers);
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_report(
    cfg: &ExperimentConfig,
    report: &harness::RunReport,
    suffix: Option<String>,
) -> Result<(), Error> {
    let csv = harness::emit_csv(report);
    match &cfg.out {
        Some(path) => {
            let target = match suffix {
                Some(s) => {
                    let stem = path
                        .file_stem()
                        .map(|v| v.to_string_lossy().into_owned())
                        .unwrap_or_else(|| "report".into());
                    let name = match path.extension() {
                        Some(ext) => format!("{stem}-{s}.{}", ext.to_string_lossy()),
                        None => format!("{stem}-{s}"),
                    };
                    path.with_file_name(name)
                }
                None => path.clone(),
            };
            if let Some(dir) = target.parent() {
                if !dir.as_os_str().is_empty() {
                    std::fs::create_dir_all(dir)?;
                }
            }
            std::fs::write(&target, csv)?;
            eprintln!("wrote {}", target.display());
        }
        None => print!("{csv}"),
    }
    eprint!("{}", harness::emit_table(report));
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Error> {
    let cfg = build_config(cli)?;
    if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global()
            .ok();
    }
    match (&cli.sweep_axis, &cli.sweep_values) {
        (Some(axis), Some(values)) => {
            let vals: Result<Vec<f64>, _> =
                values.split(',').map(|v| v.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|_| Error::Config(format!("bad sweep values '{values}'")))?;
            let reports = harness::sweep(&cfg, axis, &vals)?;
            for (v, report) in vals.iter().zip(&reports) {
                write_report(&cfg, report, Some(format!("{axis}-{v}")))?;
            }
            eprint!("{}", harness::emit_sweep_table(axis, &vals, &reports));
        }
        (None, None) => {
            let report = harness::run_experiment(&cfg)?;
            write_report(&cfg, &report, None)?;
        }
        _ => {
            return Err(Error::Config(
                "provide both --sweep-axis and --sweep-values".into(),
            ))
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ (Error::Config(_) | Error::Io(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
