use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wfqos::sim::{self, Mode, ScenarioConfig, SimError};

#[derive(Parser, Debug)]
#[command(name = "wfqos", version, about = "Workflow QoS coordination simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario and write metrics, event log and utilization series.
    Run {
        #[command(flatten)]
        common: Common,
        /// Override the mode named in the config.
        #[arg(long)]
        mode: Option<Mode>,
    },
    /// Run a scenario at several agent counts in both modes.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `start:end:step` (inclusive) or a comma-separated list.
        #[arg(long, default_value = "50:185:15")]
        agents: String,
    },
    /// Replay the testbed scenario in both modes and compare.
    ReplayTestbed {
        #[command(flatten)]
        common: Common,
    },
    /// Parse and check a config without running it.
    ValidateConfig {
        /// Path to a scenario file, or the name of a bundled one.
        #[arg(long)]
        config: String,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Path to a scenario file, or the name of a bundled one
    /// (testbed, heavy120, sweep).
    #[arg(long)]
    config: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to $WFQOS_OUT_DIR, then `results`.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Config(String),
    Invariant(String),
    Io(String),
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => Failure::Config(c.to_string()),
            e @ SimError::InvariantViolation { .. } => Failure::Invariant(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn load(spec: &str) -> Result<ScenarioConfig, Failure> {
    let path = Path::new(spec);
    let src = if path.exists() {
        fs::read_to_string(path).map_err(|e| Failure::Config(format!("{spec}: {e}")))?
    } else if let Some(src) = sim::bundled(spec) {
        src.to_string()
    } else {
        return Err(Failure::Config(format!("{spec}: no such file or bundled config")));
    };
    ScenarioConfig::from_toml(&src).map_err(|e| Failure::Config(format!("{spec}: {e}")))
}

fn load_common(c: &Common, default: Option<&str>) -> Result<(ScenarioConfig, PathBuf), Failure> {
    let name = c
        .config
        .as_deref()
        .or(default)
        .ok_or_else(|| Failure::Usage("--config is required".into()))?;
    let mut cfg = load(name)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let out = c
        .out
        .clone()
        .or_else(|| std::env::var_os("WFQOS_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"));
    fs::create_dir_all(&out)?;
    Ok((cfg, out))
}

fn parse_agents(s: &str) -> Result<Vec<usize>, Failure> {
    let bad = || Failure::Usage(format!("--agents {s:?}: expected start:end:step or a list"));
    let nums = |part: &str| part.trim().parse::<usize>().map_err(|_| bad());
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [a, b, step] => {
            let (a, b, step) = (nums(a)?, nums(b)?, nums(step)?);
            if step == 0 || a > b {
                return Err(bad());
            }
            Ok((a..=b).step_by(step).collect())
        }
        [_] => s.split(',').map(nums).collect(),
        _ => Err(bad()),
    }
}

fn json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run { common, mode } => {
            let (mut cfg, out) = load_common(&common, None)?;
            if let Some(m) = mode {
                cfg.mode = m;
            }
            let r = sim::run(&cfg)?;
            fs::write(out.join("metrics.json"), json(&r.metrics))?;
            sim::write_jsonl(&r.log, BufWriter::new(fs::File::create(out.join("events.jsonl"))?))?;
            fs::write(out.join("utilization.csv"), sim::utilization_csv(&r.utilization))?;
            let m = &r.metrics;
            println!(
                "{} {}: {} workflows, {} optimal, {} degraded, {} failed, completion {:.3}, utilization {:.3}",
                m.scenario,
                m.mode.as_str(),
                m.total_workflows,
                m.completed_optimal,
                m.completed_degraded,
                m.failed,
                m.completion_rate,
                m.utilization
            );
        }
        Command::Sweep { common, agents } => {
            let counts = parse_agents(&agents)?;
            let (cfg, out) = load_common(&common, Some("sweep"))?;
            let rows = sim::pressure_sweep(&cfg, &counts)?;
            fs::write(out.join("sweep.csv"), sim::sweep_csv(&rows))?;
            for pair in rows.chunks(2) {
                if let [c, b] = pair {
                    println!(
                        "{:>4} agents: coordinated {:.3}, baseline {:.3}",
                        c.agents, c.completion_rate, b.completion_rate
                    );
                }
            }
        }
        Command::ReplayTestbed { common } => {
            let (cfg, out) = load_common(&common, Some("testbed"))?;
            if cfg.agent_count + cfg.external.len() > sim::FlowTrace::MAX_STREAMS {
                return Err(Failure::Config(format!(
                    "replay needs at most {} streams for the throughput trace",
                    sim::FlowTrace::MAX_STREAMS
                )));
            }
            let r = sim::replay_testbed(&cfg)?;
            fs::write(out.join("testbed_comparison.json"), json(&r.comparison))?;
            fs::write(out.join("testbed_throughput.csv"), r.throughput_csv())?;
            let c = &r.comparison;
            println!(
                "interruptions: coordinated {}, baseline {}; active throughput: coordinated {:.2} Mbps, baseline {:.2} Mbps",
                c.interruptions.coordinated,
                c.interruptions.baseline,
                c.mean_active_throughput_mbps.coordinated,
                c.mean_active_throughput_mbps.baseline
            );
        }
        Command::ValidateConfig { config } => {
            let cfg = load(&config)?;
            println!("{config}: ok ({})", cfg.name);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invariant(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Usage(m) | Failure::Config(m) | Failure::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
