use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use parkwatch::events::write_events;
use parkwatch::pipeline::{bench_csv, preload};
use parkwatch::synthgen::{builtin_script, BUILTIN_SCENARIOS, GROUND_TRUTH_FILE};
use parkwatch::{Error, GrayFrame, Result, RunConfig, Scene};

/// Stopped and parked vehicle detection on fixed-camera frame sequences.
#[derive(Parser)]
#[command(name = "parkwatch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a detection pipeline over a frame sequence.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Frame directory; shorthand for `--set input.mode=directory --set input.path=DIR`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Measure frames per second of both pipelines on preloaded frames.
    Bench {
        #[command(flatten)]
        config: ConfigArgs,
        /// Bundled scenario name or script path to render in memory instead of
        /// reading the configured input.
        #[arg(long)]
        scene: Option<String>,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
        /// Use at most this many frames.
        #[arg(long)]
        frames: Option<usize>,
        /// Write the CSV here instead of standard output.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Render a scene script to a frame directory with ground truth.
    Synth {
        /// Script path, or the name of a bundled scenario.
        script: String,
        output: PathBuf,
        /// Replace the frames of an existing, non-empty output directory.
        #[arg(long)]
        overwrite: bool,
    },
    /// List the bundled scenarios.
    Scenarios,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// JSON configuration file; defaults apply when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set ncc.threshold=0.85`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self, extra: &[String]) -> Result<RunConfig> {
        let overrides: Vec<String> = extra.iter().chain(&self.overrides).cloned().collect();
        match &self.config {
            Some(path) => RunConfig::load(path, &overrides),
            None => RunConfig::from_json("{}", &overrides),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run { config, input } => {
            let mut extra = Vec::new();
            if let Some(dir) = input {
                extra.push("input.mode=directory".to_string());
                extra.push(format!("input.path={}", dir.display()));
            }
            run(&config.load(&extra)?)
        }
        Command::Bench {
            config,
            scene,
            repetitions,
            frames,
            csv,
        } => {
            let config = config.load(&[])?;
            let mut loaded = match scene {
                Some(s) => load_scene(&s)?.frames().collect(),
                None => preload(&config)?,
            };
            if let Some(n) = frames {
                loaded.truncate(n);
            }
            bench(&config, &loaded, repetitions, csv.as_deref())
        }
        Command::Synth {
            script,
            output,
            overwrite,
        } => synth(&script, &output, overwrite),
        Command::Scenarios => {
            for (name, _) in BUILTIN_SCENARIOS {
                println!("{name}");
            }
            Ok(())
        }
    }
}

fn run(config: &RunConfig) -> Result<()> {
    let out = parkwatch::run(config)?;
    let table = out.summary.table();
    if config.output.events.is_none() {
        // keep standard output a clean event stream
        let stdout = io::stdout();
        write_events(stdout.lock(), &out.events).map_err(|e| Error::io("<stdout>", e))?;
        eprint!("{table}");
    } else {
        print!("{table}");
    }
    Ok(())
}

fn bench(
    config: &RunConfig,
    frames: &[GrayFrame],
    repetitions: usize,
    csv: Option<&Path>,
) -> Result<()> {
    let rows = parkwatch::bench(config, frames, repetitions)?;
    let text = bench_csv(&rows);
    match csv {
        Some(path) => fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn load_scene(script: &str) -> Result<Scene> {
    let path = Path::new(script);
    if path.is_file() {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        return Scene::from_json(&text);
    }
    match builtin_script(script) {
        Some(text) => Scene::from_json(text),
        None => Err(Error::config(
            "script",
            format!("{script} is neither a file nor a bundled scenario"),
        )),
    }
}

fn synth(script: &str, output: &Path, overwrite: bool) -> Result<()> {
    let scene = load_scene(script)?;
    let io_err = |e| Error::io(output, e);
    if output.exists() {
        let mut entries = fs::read_dir(output).map_err(io_err)?.peekable();
        if entries.peek().is_some() {
            if !overwrite {
                return Err(Error::config(
                    "output",
                    format!(
                        "{} is not empty; pass --overwrite to replace it",
                        output.display()
                    ),
                ));
            }
            for entry in entries {
                let path = entry.map_err(io_err)?.path();
                let name = path
                    .file_name()
                    .and_then(|n| n.to_str())
                    .unwrap_or_default();
                if (name.starts_with("frame_") && name.ends_with(".pgm"))
                    || name == GROUND_TRUTH_FILE
                {
                    fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
                }
            }
        }
    }
    scene.render(output)?;
    eprintln!(
        "wrote {} frames and {} to {}",
        scene.frame_count(),
        GROUND_TRUTH_FILE,
        output.display()
    );
    Ok(())
}
