//! `sfdeblur` command-line interface.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 solver
//! divergence.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sfdeblur::io::{config_to_toml, load_config, read_state, DatasetBundle, Estimates, ManifestWriter, Role};
use sfdeblur::pipeline::{deblur_with_state, estimate_scene_flow, joint_estimate, IterationRecord, MetricsReport, PipelineConfig};
use sfdeblur::synth::{render_scene, BlurModel, SceneSpec};
use sfdeblur::{Error, Result};

#[derive(Parser)]
#[command(name = "sfdeblur", version, about = "Joint stereo video deblurring and scene flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic scene into a dataset bundle with ground truth.
    Synth(SynthArgs),
    /// Scene flow only: flows, disparities and state.json.
    Estimate(RunArgs),
    /// Latent images for a given state.json.
    Deblur(DeblurArgs),
    /// Joint scene flow and deblurring, plus metrics when ground truth exists.
    Run(RunArgs),
    /// Metrics of an estimate directory against a ground-truth bundle.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Static,
    TwoObject,
    Compact,
    ReflectionSymmetric,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Frames {
    Two,
    Three,
}

#[derive(Clone, Copy, ValueEnum)]
enum BlurArg {
    Kernel,
    Average,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene description (TOML).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    scene: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Scene seed (textures, noise and preset parameters).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "three")]
    frames: Frames,
    /// Overrides the scene's blur model.
    #[arg(long, value_enum)]
    blur_model: Option<BlurArg>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConfigArgs {
    /// Pipeline configuration (TOML); defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted override, e.g. `energy.theta1=2` or `mode=two_frame`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Seed for all randomness; overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig> {
        load_config(self.config.as_deref(), &self.sets, self.seed)
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    /// Where to write wall-clock timings (kept out of `--out` so that
    /// output directories are reproducible).
    #[arg(long)]
    runtime: Option<PathBuf>,
}

#[derive(Args)]
struct DeblurArgs {
    #[arg(long)]
    bundle: PathBuf,
    /// `state.json` from `estimate` or `run`.
    #[arg(long)]
    state: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Estimate directory.
    #[arg(long)]
    est: PathBuf,
    /// Ground-truth bundle.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    text.push('\n');
    Ok(text.into_bytes())
}

fn has_ground_truth(bundle: &DatasetBundle) -> bool {
    !bundle.sharp.is_empty() || bundle.flow.iter().any(Option::is_some) || bundle.disparity.iter().any(Option::is_some)
}

fn add_metrics(w: &mut ManifestWriter, report: &MetricsReport) -> Result<()> {
    w.add("metrics.txt", Role::Metrics, Some("text"), report.to_key_values().as_bytes())?;
    w.add("metrics.json", Role::Metrics, Some("json"), &json(report)?)
}

fn synth(args: &SynthArgs) -> Result<()> {
    let mut spec = match (&args.scene, args.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let mut spec: SceneSpec = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            if let Some(s) = args.seed {
                spec.seed = s;
            }
            spec
        }
        (None, Some(preset)) => {
            let seed = args.seed.unwrap_or(0);
            match preset {
                Preset::Static => SceneSpec::static_scene(seed),
                Preset::TwoObject => SceneSpec::two_object(seed),
                Preset::Compact => SceneSpec::compact(seed),
                Preset::ReflectionSymmetric => SceneSpec::reflection_symmetric(seed),
            }
        }
        (None, None) => return Err(Error::Config("synth needs --scene or --preset".into())),
    };
    if let Some(m) = args.blur_model {
        spec.blur_model = match m {
            BlurArg::Kernel => BlurModel::Kernel,
            BlurArg::Average => BlurModel::Average,
        };
    }
    spec.validate().map_err(|e| Error::Config(format!("scene: {e}")))?;
    let scene = render_scene(&spec)?;
    let bundle = DatasetBundle::from_rendered(&scene, scene.blurred()?, args.frames == Frames::Two);
    bundle.save(&args.out)
}

fn estimate(args: &RunArgs) -> Result<()> {
    let config = args.config.load()?;
    let bundle = DatasetBundle::load(&args.bundle)?;
    let start = std::time::Instant::now();
    let (seg, state) = estimate_scene_flow(&bundle.blurs, &bundle.rig, &config)?;
    let est = Estimates::from_state(&seg, &state, &bundle.rig)?;
    let mut w = ManifestWriter::new(&args.out)?;
    w.add("config.toml", Role::Config, None, config_to_toml(&config)?.as_bytes())?;
    est.write(&mut w)?;
    if has_ground_truth(&bundle) {
        add_metrics(&mut w, &bundle.evaluate(&est)?)?;
    }
    w.finish()?;
    write_runtime(args.runtime.as_deref(), &serde_json::json!({ "total": start.elapsed().as_secs_f64() }))
}

fn deblur(args: &DeblurArgs) -> Result<()> {
    let config = args.config.load()?;
    let bundle = DatasetBundle::load(&args.bundle)?;
    let (seg, state) = read_state(&args.state)?.resolve(&bundle.rig)?;
    let out = deblur_with_state(&bundle.blurs, &bundle.rig, &config, &seg, &state)?;
    let est = Estimates { latents: out.latents, ..Default::default() };
    let mut w = ManifestWriter::new(&args.out)?;
    w.add("config.toml", Role::Config, None, config_to_toml(&config)?.as_bytes())?;
    est.write(&mut w)?;
    if !bundle.sharp.is_empty() {
        add_metrics(&mut w, &bundle.evaluate(&est)?)?;
    }
    w.finish()
}

/// One line of `trace.jsonl`.
#[derive(Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum TraceLine<'a> {
    Iteration(&'a IterationRecord),
    Warning { message: &'a str },
}

fn trace_lines(iterations: &[IterationRecord], warnings: &[String]) -> Result<Vec<u8>> {
    let lines = iterations.iter().map(TraceLine::Iteration).chain(warnings.iter().map(|m| TraceLine::Warning { message: m }));
    let mut out = Vec::new();
    for line in lines {
        out.extend(serde_json::to_vec(&line).map_err(|e| Error::Data(e.to_string()))?);
        out.push(b'\n');
    }
    Ok(out)
}

fn run(args: &RunArgs) -> Result<()> {
    let config = args.config.load()?;
    let bundle = DatasetBundle::load(&args.bundle)?;
    let out = joint_estimate(&bundle.blurs, &bundle.rig, &config)?;
    let est = Estimates::from_output(&out, &bundle.rig)?;
    let mut w = ManifestWriter::new(&args.out)?;
    w.add("config.toml", Role::Config, None, config_to_toml(&config)?.as_bytes())?;
    est.write(&mut w)?;
    w.add("trace.jsonl", Role::Trace, None, &trace_lines(&out.trace, &out.warnings)?)?;
    if has_ground_truth(&bundle) {
        add_metrics(&mut w, &bundle.evaluate(&est)?)?;
    }
    w.finish()?;
    write_runtime(args.runtime.as_deref(), &out.runtime)
}

fn eval(args: &EvalArgs) -> Result<()> {
    let est = Estimates::load(&args.est)?;
    let gt = DatasetBundle::load(&args.gt)?;
    let report = gt.evaluate(&est)?;
    let mut w = ManifestWriter::new(&args.out)?;
    add_metrics(&mut w, &report)?;
    w.finish()
}

fn write_runtime<T: Serialize>(path: Option<&Path>, runtime: &T) -> Result<()> {
    match path {
        Some(p) => Ok(std::fs::write(p, json(runtime)?)?),
        None => Ok(()),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Divergence { .. } => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Estimate(a) => estimate(a),
        Command::Deblur(a) => deblur(a),
        Command::Run(a) => run(a),
        Command::Eval(a) => eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sfdeblur: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
