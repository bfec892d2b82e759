use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use wedgefill::config::{self, ExperimentConfig};
use wedgefill::runner::{self, ArtifactDir};
use wedgefill::solvers::{cone_bound_check, run_toy_2axis, slope, toy_energy, SlopeOptions};
use wedgefill::{Error, Result};

/// Limited-angle tomography: baselines and joint image/sinogram reconstruction.
#[derive(Parser, Debug)]
#[command(name = "wedgefill", version)]
struct Cli {
    /// Config file, or the name of a bundled config (rings, shepp-logan, particle).
    #[arg(long, global = true)]
    config: Option<String>,
    /// Override the noise seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory [default: out/<config name>].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the grid size.
    #[arg(long, global = true)]
    size: Option<usize>,
    /// Override the joint solver's outer iteration count.
    #[arg(long, global = true)]
    iters: Option<usize>,
    /// Print the resolved config and exit.
    #[arg(long, global = true)]
    dry_run: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the configured phantom.
    Phantom,
    /// Simulate the acquisition: clean sinogram, mask and noisy data.
    Project,
    /// Run the single-image baselines.
    Reconstruct {
        #[arg(long, value_enum)]
        method: Option<Method>,
    },
    /// Run the joint solver from the TV reconstruction.
    Joint,
    /// Run all four methods and write every artifact.
    Compare,
    /// Run the joint solver and probe criticality at its final iterate.
    SlopeCheck {
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 1e-2)]
        radius: f64,
    },
    /// The two-axis example max(x, y) + x² + y².
    Toy {
        #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
        x0: f64,
        #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
        y0: f64,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    Fbp,
    Sirt,
    Tv,
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(spec) => config::resolve(spec)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.dataset.seed = seed;
    }
    if let Some(size) = cli.size {
        cfg.dataset.size = size;
    }
    if let Some(iters) = cli.iters {
        cfg.joint.iters = iters;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: &ExperimentConfig) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| Path::new("out").join(&cfg.name))
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(Command::Toy { x0, y0, tau }) = cli.command {
        return toy(x0, y0, tau, cli.iters.unwrap_or(200));
    }
    let cfg = resolve(cli)?;
    if cli.dry_run {
        print!("{}", cfg.to_text());
        return Ok(());
    }
    let Some(command) = &cli.command else {
        return Err(Error::Config("no subcommand given (see --help)".into()));
    };
    let dir = out_dir(cli, &cfg);
    let art = ArtifactDir::new(&dir, cfg.output.pgm)?;
    match command {
        Command::Phantom => {
            let p = wedgefill::experiment::make_phantom(cfg.dataset.phantom, cfg.dataset.size)?;
            art.field("phantom", &p)?;
        }
        Command::Project => {
            let data = cfg.dataset.synthesize()?;
            runner::write_dataset(&art, &data)?;
            println!("views acquired: {} of {}", data.mask.kept_views().len(), cfg.dataset.views);
        }
        Command::Reconstruct { method } => {
            let data = cfg.dataset.synthesize()?;
            runner::write_dataset(&art, &data)?;
            let rows = match method {
                None => runner::baselines(&cfg, &data, &art)?,
                Some(m) => vec![runner::single_baseline(&cfg, &data, &art, &format!("{m:?}").to_lowercase())?],
            };
            for r in rows {
                println!("{:<6} psnr {:8.3}  ssim {:.4}", r.name, r.psnr, r.ssim);
            }
        }
        Command::Joint => {
            let data = cfg.dataset.synthesize()?;
            runner::write_dataset(&art, &data)?;
            let u0 = runner::tv_initial(&cfg, &data)?;
            art.field("u0", &u0)?;
            art.field("v0", &data.op.forward(&u0))?;
            let state = runner::joint_from(&cfg, &data, &u0, &art, true)?;
            art.field("joint_u", &state.u)?;
            art.field("joint_v", &state.v)?;
            println!(
                "energy {:e} -> {:e} in {} iterations",
                state.initial_energy(),
                state.final_energy(),
                state.iteration
            );
        }
        Command::Compare => {
            let cmp = runner::run_experiment(&cfg, &dir, true)?;
            print!("{}", cmp.table());
        }
        Command::SlopeCheck { samples, radius } => {
            let data = cfg.dataset.synthesize()?;
            let u0 = runner::tv_initial(&cfg, &data)?;
            let state = runner::joint_from(&cfg, &data, &u0, &ArtifactDir::default(), false)?;
            let report = runner::criticality_report(&cfg, &data, &state, *samples, *radius)?;
            art.text("criticality.txt", &report)?;
            print!("{report}");
        }
        Command::Toy { .. } => unreachable!(),
    }
    eprintln!("wrote {}", dir.display());
    Ok(())
}

fn toy(x0: f64, y0: f64, tau: f64, iters: usize) -> Result<()> {
    if !(tau > 0.0) {
        return Err(Error::Config(format!("tau must be positive, got {tau}")));
    }
    let s = run_toy_2axis(x0, y0, tau, tau, iters);
    println!("start ({x0}, {y0})  limit ({}, {})  after {iters} iterations", s.x, s.y);
    let e = |p: &[f64]| toy_energy(p[0], p[1]);
    let opts = SlopeOptions::default();
    let joint = slope(e, &[s.x, s.y], &opts).value;
    let along_x = slope(|p| toy_energy(p[0], s.y), &[s.x], &opts).value;
    let along_y = slope(|p| toy_energy(s.x, p[0]), &[s.y], &opts).value;
    println!("slope: joint {joint:.4}  along x {along_x:.4}  along y {along_y:.4}");
    let cone = cone_bound_check(|p| toy_energy(p[0], s.y), &[s.x], tau, 100, 1e-2, 7, |_| {});
    println!("cone bound: {} violations of {} (worst margin {:e})", cone.violations, cone.samples, cone.worst_margin);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wedgefill: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::Shape { .. } | Error::Format(_) => 2,
                Error::Solver(_) => 3,
                Error::Io(_) => 1,
            })
        }
    }
}
