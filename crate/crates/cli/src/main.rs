use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};

use sharedrive::config::GlobalConfig;
use sharedrive::metrics::{emit_report, ReportFormat};
use sharedrive::scenario;
use sharedrive::sim::episode::Mode;
use sharedrive_cli::commands::{self, ArbiterKind, BenchArgs, BenchScenariosArgs, RunArgs};
use sharedrive_cli::gateway::{Gateway, GatewayConfig};
use sharedrive_cli::CliError;

#[derive(Parser)]
#[command(
    name = "sharedrive",
    version,
    about = "Shared-autonomy driving simulator and plan arbiter"
)]
struct Cli {
    /// Global config file (TOML, versioned).
    #[arg(long, global = true, env = "SHAREDRIVE_CONFIG")]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// More log output (-v info, -vv debug). RUST_LOG takes precedence.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode headlessly and write its event log.
    Run {
        /// Shipped scenario name or path to a scenario file.
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value = "supervisory")]
        mode: Mode,
        #[arg(long, default_value = "stub-vlm")]
        arbiter: ArbiterKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Mock-human classification benchmark over the annotated corpus.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "0.75,0.5,0.25")]
        reliability: Vec<f64>,
        #[arg(long, default_value_t = 400)]
        trials: u64,
        #[arg(long, value_delimiter = ',', default_value = "naive,decision-tree,stub-vlm")]
        arbiter: Vec<ArbiterKind>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fail unless the naive (and oracle, if run) columns match their closed forms.
        #[arg(long)]
        check: bool,
        /// Directory of scenario files instead of the shipped corpus.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Format printed to stdout; all formats are written to the output directory.
        #[arg(long, default_value = "md")]
        format: ReportFormat,
    },
    /// Pure versus shared autonomy driving metrics over the corpus.
    BenchScenarios {
        #[arg(long, default_value = "stub-vlm")]
        arbiter: ArbiterKind,
        #[arg(long, default_value = "supervisory")]
        mode: Mode,
        /// First seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Seeds per scenario.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Serve a live episode over websocket.
    Serve {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value = "127.0.0.1:8765")]
        addr: String,
        #[arg(long, default_value = "proactive")]
        mode: Mode,
        #[arg(long, default_value = "stub-vlm")]
        arbiter: ArbiterKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Simulation speed relative to wall clock.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// Stop the episode after this many ticks.
        #[arg(long)]
        max_ticks: Option<u64>,
    },
    /// Check every annotated plan against the correctness oracle.
    ValidateCorpus {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Re-run a recorded event log and compare it byte for byte.
    Replay {
        log: PathBuf,
        /// Scenario file to use instead of the shipped one named in the log.
        #[arg(long)]
        scenario: Option<String>,
    },
    /// Print the default config file.
    ConfigDefaults,
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let cfg = commands::load_config(cli.config.as_deref())?;
    let out = cli.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    match cli.command {
        Command::Run {
            scenario,
            mode,
            arbiter,
            seed,
        } => {
            let run = commands::cmd_run(
                &cfg,
                &RunArgs {
                    scenario,
                    mode,
                    arbiter,
                    seed,
                },
                &out,
            )?;
            println!("{}", run.summary());
        }
        Command::Bench {
            reliability,
            trials,
            arbiter,
            seed,
            check,
            corpus,
            format,
        } => {
            let args = BenchArgs {
                reliability,
                trials,
                arbiters: arbiter,
                seed,
                check,
                corpus,
            };
            let result = commands::cmd_bench(&cfg, &args, &out)?;
            print!("{}", emit_report(&result.report, format));
            if check {
                if result.check_failures.is_empty() {
                    println!("check passed");
                } else {
                    return Err(CliError::Check(format!(
                        "check failed:\n  {}",
                        result.check_failures.join("\n  ")
                    )));
                }
            }
        }
        Command::BenchScenarios {
            arbiter,
            mode,
            seed,
            seeds,
            corpus,
        } => {
            let args = BenchScenariosArgs {
                arbiter,
                mode,
                seed,
                seeds,
                corpus,
            };
            print!("{}", commands::cmd_bench_scenarios(&cfg, &args, &out)?.markdown());
        }
        Command::Serve {
            scenario: name,
            addr,
            mode,
            arbiter,
            seed,
            speed,
            max_ticks,
        } => {
            if speed.is_nan() || speed <= 0.0 {
                return Err(CliError::Usage("--speed must be positive".into()));
            }
            let scenario = scenario::resolve(&name).map_err(|e| CliError::Load(e.to_string()))?;
            let arbiter = arbiter.build(&cfg)?;
            let mut gcfg = GatewayConfig::new(scenario, cfg.sim(), arbiter, mode, seed);
            gcfg.tick_interval = Duration::from_secs_f64(cfg.simulator.tick_s / speed);
            gcfg.max_ticks = max_ticks;
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
            let result = runtime.block_on(async {
                let gateway = Gateway::bind(&addr, gcfg)
                    .await
                    .map_err(|e| CliError::Runtime(e.to_string()))?;
                let local = gateway.local_addr().map_err(|e| CliError::Runtime(e.to_string()))?;
                println!("serving on ws://{local} (waiting for a controller)");
                gateway.run().await.map_err(|e| CliError::Runtime(e.to_string()))
            })?;
            let path = out.join(format!("{}-{}-live-seed{}.jsonl", result.scenario, mode.name(), seed));
            std::fs::create_dir_all(&out).map_err(|e| CliError::Runtime(e.to_string()))?;
            std::fs::write(&path, result.event_log_text()).map_err(|e| CliError::Runtime(e.to_string()))?;
            println!(
                "episode ended: {:?} after {} ticks, completion {:.1}%; log: {}",
                result.end_reason,
                result.ticks,
                100.0 * result.route_completion,
                path.display()
            );
        }
        Command::ValidateCorpus { corpus } => {
            let reports = commands::cmd_validate_corpus(&cfg, corpus.as_deref())?;
            let mut contradictions = 0;
            for r in &reports {
                println!(
                    "{}: {} plans checked, {} contradictions",
                    r.scenario,
                    r.checked,
                    r.contradictions.len()
                );
                for c in &r.contradictions {
                    println!(
                        "  {:?}: annotated {} but the oracle says {}",
                        c.plan, c.annotated, c.oracle
                    );
                }
                contradictions += r.contradictions.len();
            }
            if contradictions > 0 {
                return Err(CliError::Check(format!("{contradictions} annotation contradictions")));
            }
        }
        Command::Replay { log, scenario } => {
            let outcome = commands::cmd_replay(&cfg, &log, scenario.as_deref())?;
            match outcome.mismatch {
                None => println!("replay matches: {} lines identical", outcome.lines),
                Some((line, recorded, replayed)) => {
                    return Err(CliError::Check(format!(
                        "replay diverges at line {line}\n  recorded: {recorded}\n  replayed: {replayed}"
                    )))
                }
            }
        }
        Command::ConfigDefaults => print!("{}", GlobalConfig::defaults_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
