use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use memrod::config::{ConfigError, ExperimentConfig};
use memrod::drivers::{self, DriverError};
use memrod::presets::{self, Application};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fluid vesicles with an embedded elastic rod.
#[derive(Parser)]
#[command(name = "memrod", version)]
struct Cli {
    /// Seed for the initial-state noise (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize one configuration and write its artifacts.
    Solve {
        config: PathBuf,
        /// Extra `key=value` overrides, applied after the file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Energy of the ring-on-vesicle configuration across mesh levels.
    Converge {
        #[arg(long, value_delimiter = ',', default_values_t = [3u32, 4, 5])]
        levels: Vec<u32>,
        /// Base config replacing the built-in one.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Line tension of an equatorial band against perturbation theory.
    BenchLineTension {
        /// Values of L/2π.
        #[arg(long = "L", value_delimiter = ',', default_values_t = [0.2, 0.3, 0.5])]
        ratios: Vec<f64>,
        /// Template replacing the built-in parameters.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Parameter sweep of an application preset
    /// (straight_rod, ring_buckling, bend_twist).
    App {
        name: String,
        #[arg(long, value_delimiter = ',')]
        sweep: Option<Vec<f64>>,
    },
    /// Compare the analytic gradient with central differences.
    CheckGrad {
        config: PathBuf,
        /// Number of random states.
        #[arg(long, default_value_t = 3)]
        states: usize,
        /// Coordinates probed per state.
        #[arg(long, default_value_t = 60)]
        probes: usize,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
    /// Write the seeded initial state of a config without minimizing.
    Export { config: PathBuf },
}

fn load(path: &Path, cli: &Cli) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::from_file(path)?;
    apply_globals(&mut cfg, cli);
    Ok(cfg)
}

fn apply_globals(cfg: &mut ExperimentConfig, cli: &Cli) {
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn write_table(dir: &Path, name: &str, text: &str) -> Result<(), DriverError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), text)?;
    print!("{text}");
    Ok(())
}

fn execute(cli: &Cli) -> Result<(), DriverError> {
    match &cli.command {
        Command::Solve { config, overrides } => {
            let mut cfg = load(config, cli)?;
            for kv in overrides {
                let (k, v) = kv.split_once('=').ok_or(ConfigError::Syntax { line: 0 })?;
                cfg.set(k.trim(), v.trim())?;
            }
            let sol = drivers::run(&cfg)?;
            let b = sol.breakdown();
            println!("converged after {} iterations, energy {:.10e}, helfrich {:.10e}", sol.report.iterations, b.total, b.helfrich);
            Ok(())
        }
        Command::Converge { levels, config } => {
            let mut base = match config {
                Some(p) => ExperimentConfig::from_file(p)?,
                None => presets::convergence(levels.first().copied().unwrap_or(3)),
            };
            apply_globals(&mut base, cli);
            let rows = drivers::convergence_study(levels, &base);
            write_table(&out_dir(cli), "convergence.csv", &drivers::convergence_csv(&rows))?;
            if rows.iter().all(|r| r.converged) {
                Ok(())
            } else {
                Err(DriverError::NotConverged(memrod::core::lbfgs::Termination::MaxIterations))
            }
        }
        Command::BenchLineTension { ratios, config } => {
            let template = match config {
                Some(p) => {
                    let mut t = ExperimentConfig::from_file(p)?;
                    apply_globals(&mut t, cli);
                    Some(t)
                }
                None => None,
            };
            let rows = drivers::line_tension_benchmark(ratios, template.as_ref());
            write_table(&out_dir(cli), "line_tension.csv", &drivers::benchmark_csv(&rows))?;
            Ok(())
        }
        Command::App { name, sweep } => {
            let app = Application::parse(name).ok_or_else(|| ConfigError::Value {
                key: "app".into(),
                value: name.clone(),
                reason: "expected straight_rod, ring_buckling or bend_twist",
            })?;
            let sweep = sweep.clone().unwrap_or_else(|| app.default_sweep());
            let dir = out_dir(cli);
            let seed = cli.seed.unwrap_or_else(|| ExperimentConfig::default().seed);
            let rows = drivers::application_driver(app, &sweep, seed, Some(&dir));
            write_table(&dir, &format!("{}.csv", app.name()), &drivers::application_csv(&rows))?;
            Ok(())
        }
        Command::CheckGrad { config, states, probes, step, tol } => {
            let cfg = load(config, cli)?;
            let (sys, solver, _) = drivers::build(&cfg)?;
            let n = sys.layout().len();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut worst: f64 = 0.0;
            for k in 0..*states {
                let state = sys.initial_state(cfg.seed.wrapping_add(k as u64), cfg.init_noise.max(0.02), memrod::core::solver::RodSeed::FittedCircle);
                let idx: Vec<usize> = (0..*probes).map(|_| rng.gen_range(0..n)).collect();
                let e = sys.gradient_check(&state, &solver, &idx, *step)?;
                println!("state {k}: max relative error {e:.3e}");
                worst = worst.max(e);
            }
            println!("worst {worst:.3e} (tolerance {tol:.1e})");
            if worst <= *tol {
                Ok(())
            } else {
                Err(DriverError::Solver(memrod::core::Error::Domain("gradient check failed")))
            }
        }
        Command::Export { config } => {
            let cfg = load(config, cli)?;
            let (sys, _, state) = drivers::build(&cfg)?;
            drivers::write_geometry(&sys, &state, &cfg.formats, &cfg.out_dir)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
