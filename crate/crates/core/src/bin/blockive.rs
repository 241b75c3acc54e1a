//! Command-line front end: `simulate`, `extract`, `evaluate`, `attmap`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use blockive::config::{RunConfig, ScenarioSection};
use blockive::pipeline;
use blockive::Result;

#[derive(Parser)]
#[command(
    version,
    about = "Blind extraction of a moving source with constant separating vectors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scene to WAV files and a ground-truth manifest.
    Simulate(Common),
    /// Extract the source of interest from a mixture.
    Extract(Common),
    /// Score a saved extraction, or run a batch over seeds.
    Evaluate(Common),
    /// Attenuation of the extraction filter over room positions.
    Attmap(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Scene preset, replacing any `[scenario]` in the config.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(p) = &self.preset {
            cfg.scenario = Some(ScenarioSection {
                preset: Some(p.clone()),
                file: None,
                inline: None,
                duration: None,
            });
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    let (Command::Simulate(c) | Command::Extract(c) | Command::Evaluate(c) | Command::Attmap(c)) = &cli.command;
    if let Some(n) = c.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| blockive::Error::Config(format!("thread pool: {e}")))?;
    }
    let cfg = c.load()?;
    let out = pipeline::out_dir(&cfg, c.out_dir.as_deref());
    match &cli.command {
        Command::Simulate(_) => {
            for p in pipeline::cmd_simulate(&cfg, &out)? {
                println!("{}", p.display());
            }
        }
        Command::Extract(_) => {
            let o = pipeline::cmd_extract(&cfg, &out)?;
            eprintln!(
                "{} iterations in {:.2} s, converged: {}",
                o.result.iterations(),
                o.result.elapsed.as_secs_f64(),
                o.result.converged
            );
            for p in o.files {
                println!("{}", p.display());
            }
        }
        Command::Evaluate(_) => {
            let (_, summaries) = pipeline::cmd_evaluate(&cfg, &out)?;
            for s in summaries {
                println!(
                    "{:?}: {} runs, iSINR {:.2} +/- {:.2} dB, fail {:.1}%",
                    s.method, s.runs, s.isinr.0, s.isinr.1, s.fail_pct
                );
            }
        }
        Command::Attmap(_) => {
            let m = pipeline::cmd_attmap(&cfg, &out)?;
            println!("{} points -> {}", m.points.len(), out.join("attmap.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(pipeline::exit_code(&e) as u8)
        }
    }
}
