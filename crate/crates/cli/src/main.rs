use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mvsfit::pipeline::{run_pipeline, run_stage, Project, ProjectConfig, Stage};
use mvsfit::synth::{head_project, SynthConfig};
use mvsfit::Error;

#[derive(Parser)]
#[command(name = "mvsfit", version, about = "Multi-view stereo point clouds and template mesh fitting")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Random seed for synthesis and PatchMatch.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the bundled head-proxy benchmark into a new project.
    Synth(SynthArgs),
    SelectViews(StageArgs),
    Mvs(StageArgs),
    Fuse(StageArgs),
    Triangulate(StageArgs),
    Align(StageArgs),
    Edges(StageArgs),
    Fit(StageArgs),
    Eval(StageArgs),
    /// Run every stage in order.
    Pipeline(StageArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Project directory to create.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 40)]
    views: usize,
    #[arg(long, default_value_t = 180.0)]
    arc: f64,
    #[arg(long, default_value_t = 320)]
    width: usize,
    #[arg(long, default_value_t = 240)]
    height: usize,
    /// Depth noise sigma as a fraction of the mesh diagonal.
    #[arg(long, default_value_t = 0.002)]
    depth_noise: f64,
    /// Landmark noise sigma in pixels.
    #[arg(long, default_value_t = 0.5)]
    landmark_noise: f64,
}

#[derive(Args)]
struct StageArgs {
    /// Project manifest.
    #[arg(long, short)]
    manifest: PathBuf,
    /// Write artifacts here instead of the manifest's output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Comma-separated stiffness schedule.
    #[arg(long, value_delimiter = ',')]
    stiffness_schedule: Option<Vec<f64>>,
    /// Comma-separated landmark weight schedule.
    #[arg(long, value_delimiter = ',')]
    landmark_weight_schedule: Option<Vec<f64>>,
    #[arg(long)]
    num_sources: Option<usize>,
    #[arg(long)]
    patchmatch_iterations: Option<usize>,
    #[arg(long)]
    min_consistent_views: Option<usize>,
    /// Fit without edge constraints.
    #[arg(long)]
    no_edges: bool,
    /// Triangulate and fit without the ear landmarks.
    #[arg(long)]
    no_ears: bool,
}

impl StageArgs {
    fn apply(&self, project: &mut Project, seed: Option<u64>) -> mvsfit::Result<()> {
        let c = &mut project.config;
        if let Some(dir) = &self.output_dir {
            project.manifest.output_dir = std::path::absolute(dir).map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?;
        }
        if let Some(s) = &self.stiffness_schedule {
            c.fit.stiffness_schedule = s.clone();
            if self.landmark_weight_schedule.is_none() {
                c.fit.landmark_weight_schedule = resample(&c.fit.landmark_weight_schedule, s.len());
            }
        }
        if let Some(l) = &self.landmark_weight_schedule {
            c.fit.landmark_weight_schedule = l.clone();
        }
        if let Some(n) = self.num_sources {
            c.viewsel.num_sources = n;
        }
        if let Some(n) = self.patchmatch_iterations {
            c.patchmatch.iterations = n;
        }
        if let Some(n) = self.min_consistent_views {
            c.fusion.min_consistent_views = n;
        }
        if let Some(s) = seed {
            c.patchmatch.rng_seed = s;
        }
        if self.no_edges {
            c.edges.enabled = false;
        }
        if self.no_ears {
            c.landmarks.use_ears = false;
        }
        c.validate()
    }
}

/// First `n` entries of `v`, padded with its last entry.
fn resample(v: &[f64], n: usize) -> Vec<f64> {
    (0..n).map(|i| v[i.min(v.len() - 1)]).collect()
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        "io" => 2,
        "parse" => 3,
        "config" => 4,
        "solver" => 5,
        _ => 6,
    }
}

fn run(cli: Cli) -> mvsfit::Result<()> {
    let (stage, args) = match &cli.command {
        Command::Synth(s) => {
            let cfg = SynthConfig {
                n_views: s.views,
                arc_degrees: s.arc,
                width: s.width,
                height: s.height,
                depth_sigma_frac: s.depth_noise,
                landmark_sigma_px: s.landmark_noise,
                seed: cli.seed.unwrap_or(0),
                ..Default::default()
            };
            let mut config = ProjectConfig::default();
            config.patchmatch.rng_seed = cli.seed.unwrap_or(0);
            let path = head_project(&s.out, &cfg, &config)?;
            println!("{}", path.display());
            return Ok(());
        }
        Command::SelectViews(a) => (Some(Stage::SelectViews), a),
        Command::Mvs(a) => (Some(Stage::Mvs), a),
        Command::Fuse(a) => (Some(Stage::Fuse), a),
        Command::Triangulate(a) => (Some(Stage::Triangulate), a),
        Command::Align(a) => (Some(Stage::Align), a),
        Command::Edges(a) => (Some(Stage::Edges), a),
        Command::Fit(a) => (Some(Stage::Fit), a),
        Command::Eval(a) => (Some(Stage::Eval), a),
        Command::Pipeline(a) => (None, a),
    };
    let mut project = Project::load(&args.manifest)?;
    args.apply(&mut project, cli.seed)?;
    let reports = match stage {
        Some(s) => vec![run_stage(&project, s)?],
        None => run_pipeline(&project)?,
    };
    for r in &reports {
        println!("{}", serde_json::to_string(r).expect("reports serialize"));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error[config]: cannot set thread count: {e}");
            return ExitCode::from(4);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(exit_code(&e))
        }
    }
}
