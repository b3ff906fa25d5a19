use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use pursuit_core::sim::{ablation_table, dump_trace, run_on};
use pursuit_core::{Mode, ScenarioConfig, Simulation};
use pursuit_service::{Bridge, BridgeOptions};

#[derive(Parser)]
#[command(name = "pursuit", version, about = "Visibility-maintaining pursuit simulator")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Run one scenario; writes trace.csv and metrics.toml.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run the scenario in all three modes and tabulate the metrics.
    Ablate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Print statistics of the scenario's map.
    MapInfo {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Serve the scenario live over WebSocket.
    Serve {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario document (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Dotted-key override, e.g. `controller.lambda=100`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Iteration-budgeted planning with fixed injection ticks.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    deterministic: Option<bool>,
}

#[derive(Args)]
struct OutArgs {
    /// Output directory.
    #[arg(long, env = "PURSUIT_OUT", default_value = "out")]
    out: PathBuf,
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

fn usage<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Usage(e.into())
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

impl ScenarioArgs {
    fn load(&self) -> Result<ScenarioConfig, Failure> {
        if !self.scenario.is_file() {
            return Err(usage(anyhow::anyhow!(
                "scenario file `{}` does not exist",
                self.scenario.display()
            )));
        }
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("seed={seed}"));
        }
        if let Some(d) = self.deterministic {
            overrides.push(format!("deterministic={d}"));
        }
        ScenarioConfig::load(&self.scenario, &overrides)
            .with_context(|| format!("loading `{}`", self.scenario.display()))
            .map_err(Failure::Usage)
    }
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text)
        .with_context(|| format!("writing `{}`", path.display()))
        .map_err(Failure::Runtime)
}

fn run_one(cfg: &ScenarioConfig, grid: Arc<pursuit_core::OccupancyGrid>, dir: &Path) -> Result<pursuit_core::MetricsReport, Failure> {
    let (trace, metrics) = run_on(cfg, grid).map_err(runtime)?;
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating `{}`", dir.display()))
        .map_err(Failure::Runtime)?;
    dump_trace(&trace, &dir.join("trace.csv")).map_err(runtime)?;
    write(&dir.join("metrics.toml"), &metrics.to_toml())?;
    Ok(metrics)
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.verb {
        Verb::Run { scenario, out } => {
            let cfg = scenario.load()?;
            let grid = Arc::new(cfg.build_map().map_err(usage)?);
            let metrics = run_one(&cfg, grid, &out.out)?;
            print!("{}", metrics.to_toml());
        }
        Verb::Ablate { scenario, out } => {
            let cfg = scenario.load()?;
            let grid = Arc::new(cfg.build_map().map_err(usage)?);
            let mut results = Vec::new();
            for mode in Mode::ALL {
                let mut c = cfg.clone();
                c.mode = mode;
                log::info!("running {mode}");
                let m = run_one(&c, grid.clone(), &out.out.join(mode.to_string()))?;
                results.push((mode, m));
            }
            let (text, csv) = ablation_table(&results);
            write(&out.out.join("ablation.txt"), &text)?;
            write(&out.out.join("ablation.csv"), &csv)?;
            print!("{text}");
        }
        Verb::MapInfo { scenario } => {
            let cfg = scenario.load()?;
            let grid = cfg.build_map().map_err(usage)?;
            let (lo, hi) = grid.bounds();
            let total = grid.width() * grid.height();
            let occ = grid.occupied_count();
            println!("map          {}", cfg.map);
            println!("resolution   {} m", grid.resolution());
            println!("cells        {} x {}", grid.width(), grid.height());
            println!("bounds       ({}, {}) to ({}, {})", lo.x, lo.y, hi.x, hi.y);
            println!(
                "occupied     {occ} cells ({:.2} %)",
                100.0 * occ as f64 / total.max(1) as f64
            );
            println!("boundary     {} segments", grid.boundary_segment_count());
            let start = cfg.start_state();
            match grid.obstacle_distance(start.position()) {
                Ok(d) => println!("start        ({}, {}) clearance {:.3} m", start.x, start.y, d.distance),
                Err(e) => println!("start        ({}, {}) {e}", start.x, start.y),
            }
        }
        Verb::Serve { scenario, port, host } => {
            let cfg = scenario.load()?;
            let sim = Simulation::new(cfg).map_err(usage)?;
            let bridge = Bridge::bind((host.as_str(), port)).map_err(runtime)?;
            println!("listening on ws://{}", bridge.local_addr().map_err(runtime)?);
            bridge.run(sim, BridgeOptions::default()).map_err(runtime)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
