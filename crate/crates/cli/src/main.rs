//! `hoifit` command-line entry point.
//!
//! Exit codes: 0 success, 2 usage, 3 invalid configuration, 4 missing or
//! invalid scene, 5 unreadable or malformed input file, 6 fitting failure,
//! 7 invalid geometry or body model.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use rayon::prelude::*;

use hoifit::fields::NoiseSpec;
use hoifit::fitting::FitConfig;
use hoifit::pipeline::{self, AlignMode, FitOptions, InitSource, MetricsReport};
use hoifit::scene::{ContactType, SynthConfig};
use hoifit::Error;

#[derive(Parser, Debug)]
#[command(
    name = "hoifit",
    version,
    about = "Fit a body and an object template to distance, part and pose fields"
)]
struct Cli {
    /// Fit configuration file (flat `key value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Random seed for synthesis, probes and noise.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for batch commands (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    output: PathBuf,
    /// Body rig file (default: built-in toy humanoid).
    #[arg(long, global = true)]
    rig: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic contact scenes.
    Synth(SynthArgs),
    /// Fit scenes; per-scene outputs go to `<output>/<scene name>`.
    Fit(FitArgs),
    /// Score fits against scene ground truth.
    Eval(EvalArgs),
    /// Scale meshes to a fixed mean depth.
    Scale(ScaleArgs),
    /// Compare a noisy field oracle with the exact one.
    Diagnose(DiagnoseArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Contact types, cycled over the generated scenes.
    #[arg(long, value_delimiter = ',', default_value = "hand-on-box")]
    contact: Vec<String>,
    /// Number of scenes; scene `i` uses seed `seed + i`.
    #[arg(long, default_value_t = 1)]
    count: u64,
    /// Std. dev. of ground-truth joint rotations, degrees.
    #[arg(long, default_value_t = 0.12f64.to_degrees())]
    pose_spread: f64,
    /// Max per-joint rotation of the stored initial body, degrees.
    #[arg(long, default_value_t = 10.0)]
    init_perturbation: f64,
    #[arg(long, default_value_t = 2.6)]
    depth: f64,
    #[arg(long, default_value_t = 0.003)]
    gap: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    contact_offset: f64,
}

#[derive(Args, Debug, Clone)]
struct NoiseArgs {
    /// Distance noise std. dev., meters.
    #[arg(long, default_value_t = 0.0)]
    sigma_d: f64,
    /// Gradient direction noise, radians.
    #[arg(long, default_value_t = 0.0)]
    sigma_g: f64,
    /// Part label flip probability.
    #[arg(long, default_value_t = 0.0)]
    flip_prob: f64,
    /// Rotation field noise, radians.
    #[arg(long, default_value_t = 0.0)]
    sigma_r: f64,
    /// Center field noise, meters.
    #[arg(long, default_value_t = 0.0)]
    sigma_c: f64,
}

impl NoiseArgs {
    fn spec(&self, seed: u64) -> Result<NoiseSpec, Error> {
        let spec = NoiseSpec {
            sigma_d: self.sigma_d,
            sigma_g: self.sigma_g,
            flip_prob: self.flip_prob,
            sigma_r: self.sigma_r,
            sigma_c: self.sigma_c,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Scene directories.
    #[arg(required = true)]
    scenes: Vec<PathBuf>,
    /// Initial body: `scene` (init_body.txt), `gt`, or `perturbed`.
    #[arg(long, default_value = "scene")]
    init: String,
    /// Max per-joint rotation for `--init perturbed`, degrees.
    #[arg(long, default_value_t = 10.0)]
    perturb_degrees: f64,
    /// Drop the contact term.
    #[arg(long)]
    no_contact: bool,
    /// Use a precomputed field grid instead of the mesh oracle.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[command(flatten)]
    noise: NoiseArgs,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Scene directories holding the ground truth.
    #[arg(required = true)]
    scenes: Vec<PathBuf>,
    /// Directory with one fit output per scene name (default: --output).
    #[arg(long)]
    fits: Option<PathBuf>,
    /// Procrustes alignment: `combined` or `body-only`.
    #[arg(long, default_value = "combined")]
    mode: String,
}

#[derive(Args, Debug)]
struct ScaleArgs {
    #[arg(required = true)]
    meshes: Vec<PathBuf>,
    #[arg(long, default_value_t = hoifit::scaling::DEFAULT_Z0)]
    z0: f64,
    #[arg(long, default_value = "_scaled")]
    suffix: String,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    scene: PathBuf,
    #[arg(long, default_value_t = 20000)]
    samples: usize,
    /// Distance noise levels to sweep, meters; overrides --sigma-d.
    #[arg(long, value_delimiter = ',')]
    sweep_sigma_d: Vec<f64>,
    #[command(flatten)]
    noise: NoiseArgs,
}

fn config_keys() -> Vec<(String, String)> {
    FitConfig::default()
        .to_key_values()
        .iter()
        .filter(|(k, _)| *k != "seed")
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// Adds one `--key-name VALUE` flag per fit configuration field.
fn command() -> clap::Command {
    Cli::command().mut_subcommand("fit", |fit| {
        let mut fit = fit.next_help_heading("Configuration overrides");
        for (key, default) in config_keys() {
            fit = fit.arg(
                Arg::new(key.clone())
                    .long(key.replace('_', "-"))
                    .value_name("VALUE")
                    .allow_hyphen_values(true)
                    .action(ArgAction::Set)
                    .help(format!("default {default}")),
            );
        }
        fit
    })
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_) => 3,
        Error::SceneMissing { .. } | Error::InvalidScene { .. } | Error::CorrespondenceMismatch { .. } => 4,
        Error::Parse { .. } | Error::Io { .. } | Error::MalformedGrid(_) => 5,
        Error::EmptyShell { .. } | Error::SingularMatrix | Error::DegenerateConfiguration(_) | Error::EmptySet => 6,
        _ => 7,
    }
}

fn main() -> ExitCode {
    let matches = command().get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    match run(&cli, &matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: &Cli, matches: &ArgMatches) -> Result<(), Error> {
    let model = pipeline::load_model(cli.rig.as_deref())?;
    let mut config = match &cli.config {
        Some(p) => FitConfig::load(p)?,
        None => FitConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let seed = config.seed;
    match &cli.command {
        Command::Synth(a) => synth(cli, &model, a, seed),
        Command::Fit(a) => {
            let sub = matches.subcommand_matches("fit").expect("fit matches");
            for (key, _) in config_keys() {
                if let Some(v) = sub.get_one::<String>(&key) {
                    config.set(&key, v)?;
                }
            }
            if a.no_contact {
                config.use_contacts = false;
            }
            fit(cli, &model, a, config)
        }
        Command::Eval(a) => eval(cli, a),
        Command::Scale(a) => {
            for mesh in &a.meshes {
                let (out, r) = pipeline::cmd_scale(mesh, a.z0, &a.suffix)?;
                println!(
                    "{} scale {} mean_depth {} z0 {}",
                    out.display(),
                    r.scale,
                    r.mean_depth,
                    r.z0
                );
            }
            Ok(())
        }
        Command::Diagnose(a) => {
            let levels: Vec<Option<f64>> = if a.sweep_sigma_d.is_empty() {
                vec![None]
            } else {
                a.sweep_sigma_d.iter().map(|s| Some(*s)).collect()
            };
            println!("# sigma_d samples human_udf_error object_udf_error part_accuracy rotation_error center_error");
            for level in levels {
                let mut noise = a.noise.spec(seed)?;
                if let Some(s) = level {
                    noise.sigma_d = s;
                    noise.validate()?;
                }
                let d = pipeline::cmd_diagnose(&model, &a.scene, noise, a.samples, config.delta, config.z0, seed)?;
                println!(
                    "{} {} {:.6e} {:.6e} {:.6} {:.6e} {:.6e}",
                    noise.sigma_d,
                    d.samples,
                    d.human_udf_error,
                    d.object_udf_error,
                    d.part_accuracy,
                    d.rotation_error,
                    d.center_error
                );
            }
            Ok(())
        }
    }
}

fn synth(cli: &Cli, model: &hoifit::body::BodyModel, a: &SynthArgs, seed: u64) -> Result<(), Error> {
    let contacts = a
        .contact
        .iter()
        .map(|c| c.parse::<ContactType>())
        .collect::<Result<Vec<_>, _>>()?;
    let jobs: Vec<(u64, ContactType)> = (0..a.count)
        .map(|i| (seed + i, contacts[i as usize % contacts.len()]))
        .collect();
    let results: Vec<Result<PathBuf, Error>> = jobs
        .par_iter()
        .map(|&(s, contact)| {
            let cfg = SynthConfig {
                contact,
                seed: s,
                pose_spread: a.pose_spread.to_radians(),
                init_perturbation: a.init_perturbation.to_radians(),
                depth: a.depth,
                gap: a.gap,
                contact_offset: a.contact_offset,
                ..SynthConfig::default()
            };
            cfg.validate()?;
            let dir = if a.count == 1 {
                cli.output.clone()
            } else {
                cli.output.join(format!("{}_{s:04}", contact.name()))
            };
            pipeline::cmd_synth(model, &cfg, &dir)?;
            Ok(dir)
        })
        .collect();
    for r in results {
        println!("{}", r?.display());
    }
    Ok(())
}

fn scene_name(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scene".into())
}

fn fit(cli: &Cli, model: &hoifit::body::BodyModel, a: &FitArgs, config: FitConfig) -> Result<(), Error> {
    let init = match a.init.as_str() {
        "scene" => InitSource::Scene,
        "gt" => InitSource::GroundTruth,
        "perturbed" => InitSource::PerturbedGroundTruth(a.perturb_degrees.to_radians()),
        other => return Err(Error::InvalidConfig(format!("unknown init source `{other}`"))),
    };
    let opts = FitOptions {
        noise: a.noise.spec(config.seed)?,
        config,
        init,
        object_init: None,
        field_grid: a.grid.clone(),
    };
    let batch = a.scenes.len() > 1;
    let mut results: Vec<(String, Result<pipeline::FitOutput, Error>)> = a
        .scenes
        .par_iter()
        .map(|scene| {
            let name = scene_name(scene);
            let out = if batch {
                cli.output.join(&name)
            } else {
                cli.output.clone()
            };
            (name, pipeline::cmd_fit(model, scene, Some(&out), &opts))
        })
        .collect();
    results.sort_by(|a, b| a.0.cmp(&b.0));
    let mut first_error = None;
    for (name, r) in results {
        match r {
            Ok(out) => {
                let total = out.result.report.final_terms().map_or(f64::NAN, |t| t.total());
                println!(
                    "{name} energy {total:.6e} contacts {} time {:.2}s",
                    out.result.contacts.count(),
                    out.seconds
                );
            }
            Err(e) => {
                eprintln!("{name}: {e}");
                first_error.get_or_insert(e);
            }
        }
    }
    first_error.map_or(Ok(()), Err)
}

fn eval(cli: &Cli, a: &EvalArgs) -> Result<(), Error> {
    let mode: AlignMode = a.mode.parse()?;
    let fits = a.fits.clone().unwrap_or_else(|| cli.output.clone());
    let single = a.scenes.len() == 1 && fits.join(pipeline::FIT_BODY).is_file();
    let rows = a
        .scenes
        .par_iter()
        .map(|scene| {
            let dir = if single {
                fits.clone()
            } else {
                fits.join(scene_name(scene))
            };
            pipeline::cmd_eval(&dir, scene, mode)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let report = MetricsReport::new(rows);
    let text = report.to_text();
    print!("{text}");
    std::fs::create_dir_all(&cli.output).map_err(|e| Error::Io {
        path: cli.output.clone(),
        source: e,
    })?;
    let path = cli.output.join("metrics.txt");
    std::fs::write(&path, text).map_err(|e| Error::Io { path, source: e })
}
