use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use chaosid::analysis::{check_partial_nsp, gaussian_matrix};
use chaosid::harness::presets::{battery_preset, preset};
use chaosid::harness::{run_battery, run_experiment, write_outputs, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "recover",
    version,
    about = "Recover sparse polynomial dynamics from corrupted trajectories"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a preset or a TOML config file.
    Run {
        #[arg(long, conflicts_with = "config", required_unless_present = "config")]
        preset: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for the report and data files.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a battery of seeded trials with dense noise.
    Battery {
        #[arg(long, default_value = "table-1")]
        preset: String,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Dense noise standard deviation as a multiple of dt.
        #[arg(long)]
        noise_sigma_mult: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the per-trial results as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a preset as a TOML config file.
    Config {
        #[arg(long)]
        preset: String,
    },
    /// Partial null-space check of a random Gaussian matrix.
    CheckNsp {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        #[arg(long)]
        sparsity: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var("RECOVER_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("RECOVER_THREADS must be a positive integer, got `{raw}`"))?;
    if n == 0 {
        bail!("RECOVER_THREADS must be at least 1");
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(
    preset_name: Option<String>,
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<bool> {
    let mut cfg = match (preset_name, config) {
        (Some(name), _) => preset(&name)?,
        (None, Some(path)) => ExperimentConfig::load(&path)?,
        (None, None) => bail!("either --preset or --config is required"),
    };
    if let Some(s) = seed {
        cfg.seed = s;
        cfg.corruption.seed = None;
    }
    if let Some(dir) = out {
        cfg.output_dir = Some(dir);
    }
    cfg.validate()?;
    let outcome = run_experiment(&cfg)?;
    let r = &outcome.report;
    println!("experiment      {}", r.name);
    println!("seed            {}", r.seed);
    println!(
        "corruption      {:.2}% of {} samples",
        100.0 * r.data.corruption_fraction_achieved,
        r.data.samples
    );
    println!(
        "iterations      {} (converged: {})",
        r.solve.iterations, r.solve.converged
    );
    println!("coeff error     {:.3e}", r.score.coeff_error);
    println!(
        "outliers        {} detected, {} missed, {} spurious",
        r.solve.detected_rows.len(),
        r.score.missed_rows.len(),
        r.score.spurious_rows.len()
    );
    println!("wall time       {:.2} s", outcome.seconds);
    for t in &r.coefficients.terms {
        println!(
            "  x{}' {:>10} {:>14.6e}  (true {:e})",
            t.equation, t.label, t.recovered, t.truth
        );
    }
    for c in &r.acceptance.checks {
        println!(
            "check {:<20} {} ({:e} vs {:e})",
            c.name,
            if c.passed { "pass" } else { "FAIL" },
            c.value,
            c.limit
        );
    }
    if let Some(dir) = &cfg.output_dir {
        write_outputs(&outcome, dir)?;
        println!("wrote           {}", dir.display());
    }
    Ok(r.acceptance.passed)
}

fn battery(name: &str, trials: usize, mult: f64, seed: u64, out: Option<PathBuf>) -> Result<bool> {
    let (cfg, acceptance) = battery_preset(name, mult, trials)?;
    let res = run_battery(&cfg, trials, seed)?;
    println!("battery         {name}, noise sigma = {mult}*dt, {trials} trials, seeds {seed}..");
    println!("exact detection {} / {}", res.n_exact_detection, res.n_trials);
    println!("failed trials   {}", res.n_failed);
    if let (Some(lo), Some(hi)) = (res.min_error, res.max_error) {
        println!("coeff error     min {lo:.3e}, max {hi:.3e}");
    }
    if let Some(e) = res.max_error_exact {
        println!("max error (exact detection) {e:.3e}");
    }
    if let Some(path) = out {
        std::fs::write(&path, serde_json::to_string_pretty(&res)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let passed = acceptance.passed(res.n_exact_detection, res.max_error);
    if let Some(k) = acceptance.min_exact {
        println!(
            "check min_exact            {} (need {k})",
            if res.n_exact_detection >= k {
                "pass"
            } else {
                "FAIL"
            }
        );
    }
    if let Some(lim) = acceptance.max_error {
        let ok = res.max_error.is_some_and(|e| e <= lim);
        println!(
            "check max_error            {} (limit {lim:e})",
            if ok { "pass" } else { "FAIL" }
        );
    }
    Ok(passed)
}

fn check_nsp(rows: usize, cols: usize, s: usize, seed: u64) -> Result<bool> {
    let a = gaussian_matrix(rows, cols, seed);
    let holds = check_partial_nsp(&a, s)?;
    println!("partial NSP ({rows}x{cols}, s={s}, seed {seed}): {holds}");
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match cli.command {
        Command::Run {
            preset,
            config,
            seed,
            out,
        } => run(preset, config, seed, out),
        Command::Battery {
            preset,
            trials,
            noise_sigma_mult,
            seed,
            out,
        } => battery(&preset, trials, noise_sigma_mult, seed, out),
        Command::Config { preset: name } => preset(&name)
            .and_then(|c| c.to_toml_string())
            .map(|s| print!("{s}"))
            .map(|()| true)
            .map_err(Into::into),
        Command::CheckNsp {
            rows,
            cols,
            sparsity,
            seed,
        } => check_nsp(rows, cols, sparsity, seed),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
