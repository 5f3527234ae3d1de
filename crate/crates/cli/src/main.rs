//! `pal`: generate data, run and sweep experiments, serve a human-labelled
//! run, and export results.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pal_core::datasets::{concentric_circles, gaussian_mixture, write_dataset};
use pal_harness::config::RunConfig;
use pal_harness::export::{self, Format};
use pal_harness::run::{ensure_success, run_pal};
use pal_harness::sweep::{run_sweep, SweepKind};
use pal_harness::{HarnessError, Result};
use pal_service::ServeOptions;

#[derive(Parser)]
#[command(name = "pal", version, about = "Positive active learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum GeneratorArg {
    Circles,
    Gaussian,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepArg {
    Mixing,
    Noise,
    Missing,
    Contrastive,
}

impl From<SweepArg> for SweepKind {
    fn from(s: SweepArg) -> Self {
        match s {
            SweepArg::Mixing => SweepKind::Mixing,
            SweepArg::Noise => SweepKind::Noise,
            SweepArg::Missing => SweepKind::Missing,
            SweepArg::Contrastive => SweepKind::Contrastive,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic training set as a text table.
    GenData {
        #[arg(long, value_enum)]
        generator: GeneratorArg,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        classes: usize,
        #[arg(long, default_value_t = 0.02)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment with simulated labelers.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Directory for manifest.json and aggregate.csv; the manifest goes to
        /// stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one of the parameter sweeps.
    Sweep {
        #[arg(value_enum)]
        kind: SweepArg,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve a run whose queries are answered over HTTP.
    Serve {
        #[arg(long)]
        config: PathBuf,
        /// Falls back to PAL_PORT, then 8787.
        #[arg(long)]
        port: Option<u16>,
        /// Directory for the finished run's manifest.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a saved manifest as CSV or JSON.
    Export {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        format: FormatArg,
    },
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

fn gen_data(generator: GeneratorArg, n: usize, classes: usize, noise: f64, seed: u64, out: &Path) -> Result<()> {
    let ds = match generator {
        GeneratorArg::Circles => concentric_circles(n, classes, noise, seed)?,
        GeneratorArg::Gaussian => gaussian_mixture(n, classes, noise, seed)?,
    };
    write_file(out, &write_dataset(&ds))?;
    eprintln!("wrote {} samples to {}", ds.n(), out.display());
    Ok(())
}

fn run(config: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let m = run_pal(&cfg)?;
    match out {
        Some(dir) => {
            for p in export::write_run(&m, dir)? {
                eprintln!("wrote {}", p.display());
            }
        }
        None => println!("{}", m.to_json()),
    }
    if let Some(last) = m.final_row() {
        eprintln!(
            "{} trials ({} failed); final checkpoint {}: mean test mse {}, zero-one {}",
            m.trials.len(),
            m.failed_trials,
            last.queries,
            fmt_opt(last.mean_mse),
            fmt_opt(last.mean_zero_one),
        );
    }
    for w in &m.warnings {
        log::warn!("{w}");
    }
    ensure_success(&m)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}

fn sweep(kind: SweepArg, config: &Path, out: &Path) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let report = run_sweep(kind.into(), &cfg)?;
    let files = export::write_sweep(&report, out)?;
    eprintln!("wrote {} files to {}", files.len(), out.display());
    for r in &report.rows {
        eprintln!(
            "{:<28} zero-one {}  components {}",
            r.label,
            fmt_opt(r.mean_zero_one),
            fmt_opt(r.mean_components)
        );
    }
    if let Some(rho) = report.spearman {
        eprintln!("spearman(components, zero-one) = {rho:.4}");
    }
    for r in &report.runs {
        ensure_success(&r.manifest)?;
    }
    Ok(())
}

fn serve(config: &Path, port: Option<u16>, out: Option<PathBuf>) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let mut opts = ServeOptions::from_env(port)?;
    opts.out = out;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| HarnessError::config(format!("cannot start async runtime: {e}")))?;
    eprintln!("serving on http://{}/api/v1; Ctrl-C to stop", opts.addr);
    let m = rt.block_on(pal_service::serve(&cfg, opts))?;
    ensure_success(&m)
}

fn export_manifest(path: &Path, format: FormatArg) -> Result<()> {
    let m = export::read_manifest(path)?;
    let format = match format {
        FormatArg::Csv => Format::Csv,
        FormatArg::Json => Format::Json,
    };
    let text = export::export(&m, format)?;
    print!("{text}");
    if !text.ends_with('\n') {
        println!();
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData {
            generator,
            n,
            classes,
            noise,
            seed,
            out,
        } => gen_data(generator, n, classes, noise, seed, &out),
        Command::Run { config, out, seed } => run(&config, out.as_deref(), seed),
        Command::Sweep { kind, config, out } => sweep(kind, &config, &out),
        Command::Serve { config, port, out } => serve(&config, port, out),
        Command::Export { manifest, format } => export_manifest(&manifest, format),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
