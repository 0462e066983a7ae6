use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use tsn_elevate::harness::config::{five_g_default, grid_default};
use tsn_elevate::harness::export::{
    bucket_rows, render, schedule_text, slot_rows, Format, LatencyRow, Row, StatsRow,
};
use tsn_elevate::harness::five_g::run_5g_study;
use tsn_elevate::harness::study::{run_schedulability_study, sim_config, summarize};
use tsn_elevate::harness::{generate_scenario, run_pipeline, schedule_primary_guarded, Pipeline, Scenario, ScenarioConfig};
use tsn_elevate::augment_port::burst_time;
use tsn_elevate::sim::{analyze, run};
use tsn_elevate::time::format_duration;
use tsn_elevate::token_bucket::compute_buckets;
use tsn_elevate::Error;

const EXIT_INFEASIBLE: u8 = 2;
const EXIT_VERIFY: u8 = 3;
const EXIT_CONFIG: u8 = 4;

#[derive(Parser)]
#[command(name = "tsn-elevate", version, about = "Priority elevation for (m,k)-firm streams in time-driven TSN schedules")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Scenario configuration (TOML). Defaults to the built-in grid, or the
    /// 5G scenario for `study-5g`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Simulated hypercycles; overrides the configuration.
    #[arg(long, global = true)]
    horizon: Option<u64>,

    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Csv)]
    format: OutFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    JsonLines,
}

impl From<OutFormat> for Format {
    fn from(f: OutFormat) -> Self {
        match f {
            OutFormat::Csv => Format::Csv,
            OutFormat::JsonLines => Format::JsonLines,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Writes the generated scenario and the effective configuration.
    Generate,
    /// Primary schedule (one transmission start per frame and hop).
    Schedule,
    /// Token buckets of the elevated traffic per port.
    Buckets,
    /// Augmented GCL and PSFP configuration in the schedule text format.
    Augment {
        /// Also write the transmission graph in DOT format.
        #[arg(long)]
        graph: bool,
    },
    /// Worst-case latency of every stream against its bound.
    Verify,
    /// Simulates the augmented schedule.
    Simulate {
        /// Also write every simulation event.
        #[arg(long)]
        trace: bool,
    },
    /// Feasibility against the number of sporadic sources.
    StudySchedulability,
    /// Bounded and unbounded 5G degradations.
    Study5g,
    /// Per-stream latency validation table.
    Report,
}

struct Ctx {
    config: ScenarioConfig,
    seed: u64,
    out_dir: PathBuf,
    format: Format,
}

impl Ctx {
    fn write(&self, name: &str, text: &str) -> Result<PathBuf, Error> {
        fs::create_dir_all(&self.out_dir)?;
        let path = self.out_dir.join(name);
        fs::write(&path, text)?;
        Ok(path)
    }

    fn rows<R: Row>(&self, stem: &str, rows: &[R]) -> Result<PathBuf, Error> {
        let text = render(rows, self.format)?;
        self.write(&format!("{stem}.{}", self.format.extension()), &text)
    }

    fn scenario(&self) -> Result<Scenario, Error> {
        generate_scenario(&self.config, self.seed)
    }
}

fn load_config(cli: &Cli) -> Result<ScenarioConfig, Error> {
    let mut config = match &cli.config {
        Some(path) => ScenarioConfig::load(path)?,
        None if matches!(cli.command, Command::Study5g) => five_g_default(),
        None => grid_default(),
    };
    if let Some(h) = cli.horizon {
        if h == 0 {
            return Err(Error::Config("--horizon must be positive".into()));
        }
        config.simulation.hypercycles = h;
    }
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    Ok(config)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Infeasible { .. } | Error::Saturated { .. } | Error::FifoViolation { .. } | Error::Cycle => EXIT_INFEASIBLE,
        _ => EXIT_CONFIG,
    }
}

fn note(path: &Path) {
    println!("wrote {}", path.display());
}

fn verification_failures(p: &Pipeline) -> Vec<String> {
    p.report
        .failures()
        .map(|f| {
            format!(
                "{}: worst-case latency {} exceeds {}",
                f.stream,
                format_duration(f.worst_latency),
                format_duration(f.latency_bound)
            )
        })
        .chain(p.wrap_violations.iter().cloned())
        .collect()
}

fn execute(cli: &Cli, ctx: &Ctx) -> Result<u8, Error> {
    match &cli.command {
        Command::Generate => {
            let sc = ctx.scenario()?;
            note(&ctx.write("scenario.json", &sc.to_json())?);
            note(&ctx.write("config.toml", &ctx.config.to_toml())?);
            println!(
                "{} vertices, {} links, {} streams, {} sporadic sources",
                sc.network.vertices.len(),
                sc.network.links.len(),
                sc.streams.len(),
                sc.sporadics.len()
            );
            Ok(0)
        }
        Command::Schedule => {
            let sc = ctx.scenario()?;
            let buckets = compute_buckets(&sc.network, &sc.streams, &sc.sporadics)?;
            let bursts = buckets
                .iter()
                .map(|(&l, tb)| (l, burst_time(tb, sc.network.links[l].rate)))
                .collect();
            let primary = schedule_primary_guarded(&sc.network, &sc.streams, &bursts)?;
            note(&ctx.rows("primary", &slot_rows(&primary, &sc.network, &sc.streams))?);
            println!("hypercycle {}, {} slots", format_duration(primary.hypercycle), primary.slots.len());
            Ok(0)
        }
        Command::Buckets => {
            let sc = ctx.scenario()?;
            let buckets = compute_buckets(&sc.network, &sc.streams, &sc.sporadics)?;
            let rows = bucket_rows(buckets.values().filter(|tb| !tb.is_zero()), &sc.network);
            note(&ctx.rows("buckets", &rows)?);
            println!("{} ports carry elevated traffic", rows.len());
            Ok(0)
        }
        Command::Augment { graph } => {
            let sc = ctx.scenario()?;
            let p = run_pipeline(&sc)?;
            let text = schedule_text(&p.augmentation.schedule, &sc.network, &sc.streams);
            note(&ctx.write("schedule.txt", &text)?);
            if *graph {
                note(&ctx.write("graph.dot", &p.graph.to_dot(&sc.streams))?);
            }
            let failures = verification_failures(&p);
            for f in &failures {
                eprintln!("{f}");
            }
            Ok(if failures.is_empty() { 0 } else { EXIT_VERIFY })
        }
        Command::Verify => {
            let sc = ctx.scenario()?;
            let p = run_pipeline(&sc)?;
            let rows: Vec<LatencyRow> = p.report.streams.iter().map(LatencyRow::from).collect();
            note(&ctx.rows("latency", &rows)?);
            let failures = verification_failures(&p);
            for f in &failures {
                eprintln!("{f}");
            }
            println!("{} of {} streams pass", rows.iter().filter(|r| r.pass).count(), rows.len());
            Ok(if failures.is_empty() { 0 } else { EXIT_VERIFY })
        }
        Command::Simulate { trace } => {
            let sc = ctx.scenario()?;
            let p = run_pipeline(&sc)?;
            let mut cfg = sim_config(&ctx.config, &sc, &p, ctx.seed, ctx.config.simulation.hypercycles);
            cfg.record_events = *trace;
            let tr = run(&sc.network, &p.augmentation.schedule, &sc.streams, &cfg)?;
            let stats = analyze(&tr, &sc.streams);
            let rows: Vec<StatsRow> = stats.iter().map(StatsRow::from).collect();
            note(&ctx.rows("stats", &rows)?);
            if *trace {
                note(&ctx.rows("events", &tr.events)?);
            }
            let missed: usize = stats.iter().map(|s| s.missed).sum();
            println!("{} hypercycles, {} frames, {} missed", cfg.hypercycles, tr.frames.len(), missed);
            Ok(0)
        }
        Command::StudySchedulability => {
            let rows = run_schedulability_study(&ctx.config, ctx.seed)?;
            note(&ctx.rows("schedulability", &rows)?);
            for (count, n, scheduled, feasible) in summarize(&rows) {
                println!("{count:>4} sporadic: {scheduled:>4}/{n} scheduled, {feasible:>4}/{n} feasible");
            }
            Ok(0)
        }
        Command::Study5g => {
            let st = run_5g_study(&ctx.config, ctx.seed, ctx.config.simulation.hypercycles)?;
            let rows: Vec<_> = st.bounded.rows.iter().chain(&st.unbounded.rows).cloned().collect();
            note(&ctx.rows("five_g", &rows)?);
            for (tag, run) in [("bounded", &st.bounded), ("unbounded", &st.unbounded)] {
                let stats: Vec<StatsRow> = run.stats.iter().map(StatsRow::from).collect();
                note(&ctx.rows(&format!("five_g_stats_{tag}"), &stats)?);
                let failing = stats.iter().filter(|s| s.verdict.starts_with("fail")).count();
                let masq: usize = stats.iter().map(|s| s.masquerades).sum();
                println!("{tag}: {failing} streams violate (m,k), {masq} masquerades");
            }
            println!("unbounded delays on {}", st.scenario.streams[st.affected].name);
            Ok(0)
        }
        Command::Report => {
            let sc = ctx.scenario()?;
            let p = run_pipeline(&sc)?;
            let mut text = format!(
                "{:<12} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}  result\n",
                "stream", "primary", "augmented", "bound", "slack", "prolong", "jitter"
            );
            for s in &p.report.streams {
                text.push_str(&format!(
                    "{:<12} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}  {}\n",
                    s.stream,
                    format_duration(s.primary_latency),
                    format_duration(s.worst_latency),
                    format_duration(s.latency_bound),
                    format_duration(s.slack),
                    format_duration(s.prolongation),
                    format_duration(s.jitter_bound),
                    if s.pass { "pass" } else { "FAIL" }
                ));
            }
            for w in &p.wrap_violations {
                text.push_str(&format!("wrap: {w}\n"));
            }
            print!("{text}");
            note(&ctx.write("report.txt", &text)?);
            Ok(if verification_failures(&p).is_empty() { 0 } else { EXIT_VERIFY })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let ctx = Ctx {
        seed: config.seed,
        config,
        out_dir: cli.out_dir.clone(),
        format: cli.format.into(),
    };
    match execute(&cli, &ctx) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
