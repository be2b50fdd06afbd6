//! `gsrp` command line frontend.
//!
//! Exit codes: 0 on success, 1 on self-test assertion failures, 2 on
//! configuration or I/O errors, 3 on numerical failures (singular matrices,
//! degenerate steering, empty maps).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gsrp::config::{load_config, RunConfig, SceneSource};
use gsrp::pipeline::{
    localize_run, write_heatmap_csv, write_report_csv, write_summary_csv, SummaryRow,
};
use gsrp::scenario::{run_golden, ScenarioReport, SCENARIO_NAMES};
use gsrp::sim::simulate;
use gsrp::wav::write_wav;
use gsrp::{Error, Real};

#[derive(Parser)]
#[command(name = "gsrp", version, about = "Steered response power source localization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the configured scene to a multichannel WAV file.
    Simulate {
        /// Run configuration file.
        config: PathBuf,
        /// Output WAV path.
        #[arg(short, long)]
        output: PathBuf,
        /// Override the configured random seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Localize the configured scene and write the per-frame report.
    Localize {
        /// Run configuration file.
        config: PathBuf,
        /// Output report CSV path.
        #[arg(short, long)]
        output: PathBuf,
        /// Also write an SRP heatmap CSV (last processed frame).
        #[arg(long)]
        heatmap: Option<PathBuf>,
        /// Write the source-block average map instead of the last frame.
        #[arg(long, requires = "heatmap")]
        avg_heatmap: bool,
        /// Override the configured random seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Localize every `*.cfg` in a directory and write a summary CSV.
    Eval {
        /// Directory of run configuration files.
        config_dir: PathBuf,
        /// Output summary CSV path.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run the built-in golden scenarios (all of them by default).
    Selftest {
        /// Scenario names to run.
        names: Vec<String>,
    },
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("GSRP_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("gsrp: GSRP_THREADS must be a positive integer, ignoring");
            }
        }
    }

    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate {
            config,
            output,
            seed,
        } => cmd_simulate(&config, &output, seed),
        Command::Localize {
            config,
            output,
            heatmap,
            avg_heatmap,
            seed,
        } => cmd_localize(&config, &output, heatmap.as_deref(), avg_heatmap, seed),
        Command::Eval { config_dir, output } => cmd_eval(&config_dir, &output),
        Command::Selftest { names } => return cmd_selftest(&names),
    };

    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("gsrp: {err}");
            if err.is_numerical() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn load(config_path: &Path, seed: Option<u64>) -> Result<RunConfig, Error> {
    let mut config = load_config(config_path)?;
    if let Some(seed) = seed {
        config.seed = seed;
        if let SceneSource::Simulated(spec) = &mut config.scene {
            spec.seed = seed;
        }
    }
    Ok(config)
}

fn cmd_simulate(config_path: &Path, output: &Path, seed: Option<u64>) -> Result<(), Error> {
    let config = load(config_path, seed)?;
    let spec = match &config.scene {
        SceneSource::Simulated(spec) => spec,
        SceneSource::Wav { .. } => {
            return Err(Error::Config(
                "simulate needs a simulated scene, but the configuration reads an input WAV"
                    .into(),
            ))
        }
    };
    let scene = simulate(spec)?;
    write_wav(output, &scene.samples, scene.sample_rate as u32)?;
    println!(
        "wrote {} channels x {} samples ({:.2} s at {} Hz) to {}",
        scene.samples.len(),
        scene.samples[0].len(),
        scene.samples[0].len() as Real / scene.sample_rate,
        scene.sample_rate,
        output.display()
    );
    Ok(())
}

fn cmd_localize(
    config_path: &Path,
    output: &Path,
    heatmap: Option<&Path>,
    avg_heatmap: bool,
    seed: Option<u64>,
) -> Result<(), Error> {
    let config = load(config_path, seed)?;
    let outcome = localize_run(&config)?;
    write_report_csv(&outcome.report, output)?;
    println!(
        "localized {} frames ({} active): mle {:.4}, quartiles {:.4}/{:.4}/{:.4}",
        outcome.report.frames.len(),
        outcome.report.active_frames,
        outcome.report.mle,
        outcome.report.quartiles[0],
        outcome.report.quartiles[1],
        outcome.report.quartiles[2],
    );
    println!("wrote report to {}", output.display());
    if let Some(path) = heatmap {
        let map = if avg_heatmap {
            outcome.average_map.as_ref()
        } else {
            outcome.last_map.as_ref()
        };
        let map = map.ok_or_else(|| Error::Config("run produced no frames to map".into()))?;
        write_heatmap_csv(map, true, path)?;
        println!("wrote heatmap to {}", path.display());
    }
    Ok(())
}

fn cmd_eval(config_dir: &Path, output: &Path) -> Result<(), Error> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(config_dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|entry| entry.path())
        .filter(|p| p.extension().is_some_and(|ext| ext == "cfg"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!(
            "no .cfg files in {}",
            config_dir.display()
        )));
    }
    let mut rows = Vec::with_capacity(paths.len());
    for path in &paths {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let config = load_config(path)?;
        let outcome = localize_run(&config)?;
        println!(
            "{name}: {} frames ({} active), mle {:.4}",
            outcome.report.frames.len(),
            outcome.report.active_frames,
            outcome.report.mle,
        );
        rows.push(SummaryRow::new(name, &outcome.report));
    }
    write_summary_csv(&rows, output)?;
    println!("wrote {} rows to {}", rows.len(), output.display());
    Ok(())
}

fn cmd_selftest(names: &[String]) -> ExitCode {
    let selected: Vec<&str> = if names.is_empty() {
        SCENARIO_NAMES.to_vec()
    } else {
        names.iter().map(String::as_str).collect()
    };
    let mut all_passed = true;
    for name in selected {
        match run_golden(name) {
            Ok(report) => {
                print_report(&report);
                all_passed &= report.passed();
            }
            Err(err) => {
                eprintln!("gsrp: {err}");
                return if err.is_numerical() {
                    ExitCode::from(3)
                } else {
                    ExitCode::from(2)
                };
            }
        }
    }
    if all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn print_report(report: &ScenarioReport) {
    let verdict = if report.passed() { "PASS" } else { "FAIL" };
    println!(
        "{}: {verdict} ({:.2} s)",
        report.name, report.elapsed_s
    );
    for a in &report.assertions {
        let mark = if a.passed { "ok" } else { "VIOLATED" };
        println!("  [{mark}] {} ({})", a.label, a.detail);
    }
}
