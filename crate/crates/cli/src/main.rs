use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

mod commands;
mod config;
mod manifest;

use config::KeyValues;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing input: {0}")]
    Missing(String),
    #[error(transparent)]
    Core(#[from] clothrecon::Error),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::Missing(format!("{}: {e}", path.display()))
        } else {
            CliError::Core(clothrecon::Error::Io(e))
        }
    }

    /// 1 for bad configuration or data, 2 for inputs that are not there.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Missing(_) => 2,
            CliError::Core(clothrecon::Error::Io(e))
                if e.kind() == std::io::ErrorKind::NotFound =>
            {
                2
            }
            _ => 1,
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Core(e.into()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(clothrecon::Error::from)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

#[derive(Parser)]
#[command(
    name = "clothrecon",
    version,
    about = "Fit, reconstruct and score layered garment fields on a body model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// key = value configuration file; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct Meshing {
    /// Marching cubes cells along the longest box side
    #[arg(long)]
    resolution: Option<usize>,
    /// Extraction level in meters
    #[arg(long)]
    iso: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene with known garments
    Synth {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        meshing: Meshing,
    },
    /// Fit garment parameters to a scene's observation
    Fit {
        manifest: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Loss ablation: no-reg, no-dp or silhouette-for-dp
        #[arg(long)]
        ablate: Option<String>,
    },
    /// Extract and pose garment meshes for a fitted state
    Reconstruct {
        manifest: PathBuf,
        /// State JSON written by `fit`
        state: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        meshing: Meshing,
    },
    /// Score a reconstruction directory against the scene's ground truth
    Eval {
        manifest: PathBuf,
        recon: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common, known: &[&str]) -> Result<KeyValues, CliError> {
    let mut kv = match &common.config {
        Some(p) => KeyValues::load(p)?,
        None => KeyValues::default(),
    };
    kv.check_known(known)?;
    if let Some(s) = common.seed {
        kv.set("seed", s);
    }
    Ok(kv)
}

fn apply_meshing(kv: &mut KeyValues, m: &Meshing) {
    if let Some(r) = m.resolution {
        kv.set("resolution", r);
    }
    if let Some(i) = m.iso {
        kv.set("iso", i);
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth { common, meshing } => {
            let mut kv = load_config(&common, config::SCENE_KEYS)?;
            apply_meshing(&mut kv, &meshing);
            let path = commands::synth(&config::scene_config(&kv)?, &common.out)?;
            println!("wrote {}", path.display());
        }
        Command::Fit {
            manifest,
            common,
            ablate,
        } => {
            let mut kv = load_config(&common, config::FIT_KEYS)?;
            if let Some(a) = ablate {
                config::parse_ablation(&a)?;
                kv.set("ablation", a);
            }
            let trace = commands::fit(&manifest, &config::fit_config(&kv)?, &common.out)?;
            let first = trace.records.first().map(|r| r.loss.total);
            println!(
                "iterations {} converged {} loss {:?} -> {}",
                trace.iterations, trace.converged, first, trace.final_loss.total
            );
            if trace.no_supervision {
                eprintln!("warning: no query point was selected; nothing was fitted");
            }
        }
        Command::Reconstruct {
            manifest,
            state,
            common,
            meshing,
        } => {
            let mut kv = load_config(&common, config::RECON_KEYS)?;
            apply_meshing(&mut kv, &meshing);
            let scene: manifest::SceneManifest = read_json(&manifest)?;
            let resolution = kv.get_or("resolution", scene.resolution)?;
            let iso = kv.get_or("iso", scene.iso)?;
            let cloth =
                commands::reconstruct_state(&manifest, &state, resolution, iso, &common.out)?;
            let n = cloth.iter().filter(|c| !c.mesh.faces.is_empty()).count();
            println!("wrote {n} garment meshes to {}", common.out.display());
        }
        Command::Eval {
            manifest,
            recon,
            common,
        } => {
            load_config(&common, &["seed"])?;
            let r = commands::eval(&manifest, &recon, &common.out)?;
            println!("cd {:.3} mm, bcc {:.4}", r.cd_mm, r.bcc.average);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
