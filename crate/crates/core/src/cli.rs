//! Command-line front end. Exit codes: 0 success, 1 validation or
//! verification failure, 2 usage error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::friction::{parse_heatmap_json, render_heatmap_image};
use crate::runner::{replay_manifest, simulate_run, write_outputs, RunConfig, RunError};
use crate::scene::check_scene;

#[derive(Parser)]
#[command(
    name = "cogfriction",
    version,
    about = "Cognitive friction agent simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation and write its outputs and manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the output directory in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a scene file and print every violation.
    ValidateScene { path: PathBuf },
    /// Render a heatmap.json document as a greyscale PGM.
    RenderHeatmap {
        heatmap: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run a recorded simulation and verify every digest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
    },
}

const OK: i32 = 0;
const FAILED: i32 = 1;
const USAGE: i32 = 2;

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { USAGE } else { OK };
        }
    };
    match cli.command {
        Command::Run { config, seed, out } => cmd_run(&config, seed, out),
        Command::ValidateScene { path } => cmd_validate(&path),
        Command::RenderHeatmap { heatmap, out } => cmd_render(&heatmap, &out),
        Command::Replay { manifest } => cmd_replay(&manifest),
    }
}

fn missing(path: &Path) -> Option<i32> {
    if path.is_file() {
        return None;
    }
    eprintln!("error: {} does not exist or is not a file", path.display());
    Some(USAGE)
}

fn fail(e: impl std::fmt::Display) -> i32 {
    eprintln!("error: {e}");
    FAILED
}

fn cmd_run(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> i32 {
    if let Some(code) = missing(config) {
        return code;
    }
    let mut cfg = match RunConfig::load(config) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.out = o;
    }
    let result = match simulate_run(&cfg) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    if let Err(e) = write_outputs(&result, &cfg.out) {
        return fail(e);
    }
    let sim = &result.sim;
    for a in &sim.agents {
        println!(
            "agent {}: {} after {} steps, {} activations",
            a.id,
            a.status.label(),
            a.steps.len(),
            a.activations().count()
        );
    }
    let skipped = sim
        .events
        .iter()
        .filter(|e| e.appraisal().is_none())
        .count();
    println!("events: {} ({} skipped)", sim.events.len(), skipped);
    for p in &sim.phantoms {
        println!("phantom: {}", p.description());
    }
    println!("outputs written to {}", cfg.out.display());
    OK
}

fn cmd_validate(path: &Path) -> i32 {
    if let Some(code) = missing(path) {
        return code;
    }
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) => return fail(e),
    };
    match check_scene(&bytes) {
        Err(e) => fail(e),
        Ok(Err(violations)) => {
            for v in &violations {
                println!("{}: {}", v.path, v.message);
            }
            eprintln!("{}: {} violation(s)", path.display(), violations.len());
            FAILED
        }
        Ok(Ok(scene)) => {
            println!(
                "{}: valid {}x{} scene, sha256 {}",
                scene.name, scene.width, scene.height, scene.scene_hash
            );
            OK
        }
    }
}

fn cmd_render(heatmap: &Path, out: &Path) -> i32 {
    if let Some(code) = missing(heatmap) {
        return code;
    }
    let parsed = std::fs::read(heatmap)
        .map_err(|e| e.to_string())
        .and_then(|b| parse_heatmap_json(&b).map_err(|e| e.to_string()));
    let (field, _) = match parsed {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    match std::fs::write(out, render_heatmap_image(&field)) {
        Ok(()) => OK,
        Err(e) => fail(RunError::Io {
            path: out.to_path_buf(),
            source: e,
        }),
    }
}

fn cmd_replay(manifest: &Path) -> i32 {
    if let Some(code) = missing(manifest) {
        return code;
    }
    match replay_manifest(manifest) {
        Err(e) => fail(e),
        Ok(report) if report.ok() => {
            println!("replay ok: {} checks passed", report.checked.len());
            OK
        }
        Ok(report) => {
            for m in &report.mismatches {
                eprintln!("mismatch: {m}");
            }
            FAILED
        }
    }
}
