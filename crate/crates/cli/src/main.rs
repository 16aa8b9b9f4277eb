use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};
use seedscope_core::analytics::{analyze, AnalysisOptions, BusinessClass, GeoDb};
use seedscope_core::ingest::{PortalProfile, RetryPolicy};
use seedscope_core::monitor::{run_live, LiveDeps, LiveOptions, MonitorConfig};
use seedscope_core::peer_wire::TcpProber;
use seedscope_core::session::DiscoveryModel;
use seedscope_core::store::{
    export, import, query_publisher, EventKind, EventLog, ExportFormat, StoreError, SyncPolicy,
};
use seedscope_core::time::{parse_duration, Seconds, SystemClock};
use seedscope_core::tracker::{RateLimiter, Vantage};
use seedscope_core::transport::HttpTransport;
use seedscope_sim::{generate_world, isp, run_simulation, WorldConfig};

#[derive(Parser)]
#[command(
    name = "seedscope",
    version,
    about = "Monitor who publishes content on BitTorrent portals"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Follow a portal feed and monitor every new swarm.
    Monitor {
        /// Portal profile (TOML).
        #[arg(long)]
        portal: PathBuf,
        /// Event log to append to.
        #[arg(long)]
        out: PathBuf,
        /// Seen-item state kept across restarts.
        #[arg(long)]
        state: Option<PathBuf>,
        /// Number of crawler identities.
        #[arg(long, default_value_t = 3)]
        vantages: usize,
        /// Minimum spacing of one vantage's queries about one swarm.
        #[arg(long, default_value = "10m", value_parser = duration)]
        min_interval: Seconds,
        /// Stop after this many feed polls.
        #[arg(long)]
        polls: Option<u64>,
        /// Keep retrying identification this long when no seed answered.
        #[arg(long, default_value = "0", value_parser = duration)]
        id_retry_window: Seconds,
    },
    /// Generate a simulated world and monitor it in virtual time.
    Simulate {
        /// World config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Event log to create.
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth export (JSON lines).
        #[arg(long)]
        truth: PathBuf,
        /// Also write the simulated address plan as a geo table.
        #[arg(long)]
        geoip_out: Option<PathBuf>,
        /// Also write the true business classes as an annotation file.
        #[arg(long)]
        annotations_out: Option<PathBuf>,
    },
    /// Build the reports from an event log.
    Analyze {
        #[arg(long)]
        log: PathBuf,
        /// Output directory.
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// Show everything known about one username.
    Query {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        username: String,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// Export the log as JSON lines or per-kind CSV files.
    Export {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value = "jsonl")]
        format: String,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Only these kinds (repeatable).
        #[arg(long)]
        kind: Vec<String>,
    },
}

#[derive(clap::Args)]
struct AnalysisArgs {
    /// Geo table: cidr,isp_name,isp_type,country,city.
    #[arg(long)]
    geoip: Option<PathBuf>,
    /// Discovery-model overrides, e.g. N=165,W=50,P=0.99,dt=18m.
    #[arg(long)]
    model: Option<String>,
    /// Business classes: username,class.
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    top_k: usize,
    /// Usernames per IP from which all of them count as fake.
    #[arg(long, default_value_t = 5)]
    fake_threshold: usize,
    /// Crawler addresses to leave out of downloader counts (repeatable).
    #[arg(long)]
    vantage_ip: Vec<IpAddr>,
}

fn duration(s: &str) -> Result<Seconds, String> {
    parse_duration(s).ok_or_else(|| format!("bad duration `{s}`"))
}

/// Exit code 1 for bad input, 2 for failures while running.
enum Failure {
    Input(String),
    Runtime(String),
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Io(ref io) if io.kind() != std::io::ErrorKind::NotFound => Failure::Runtime(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

fn input(e: impl std::fmt::Display) -> Failure {
    Failure::Input(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Monitor {
            portal,
            out,
            state,
            vantages,
            min_interval,
            polls,
            id_retry_window,
        } => {
            let profile = PortalProfile::load(&portal).map_err(input)?;
            if vantages == 0 {
                return Err(input("need at least one vantage"));
            }
            let log = EventLog::open(&out, SyncPolicy::EveryAppend).map_err(runtime)?;
            let monitor = MonitorConfig {
                vantages: (0..vantages)
                    .map(|i| Vantage::new(format!("v{i}"), 6881 + i as u16))
                    .collect(),
                id_retry_window,
                ..MonitorConfig::default()
            };
            let opts = LiveOptions {
                profile,
                monitor: monitor.clone(),
                retry: RetryPolicy::default(),
                state_path: state,
                max_polls: polls,
            };
            let deps = LiveDeps {
                transport: Arc::new(HttpTransport::default()),
                clock: Arc::new(SystemClock),
                prober: Arc::new(TcpProber {
                    peer_id: monitor.vantages[0].peer_id,
                    timeout: Duration::from_secs(10),
                    clock: SystemClock,
                }),
                limiter: Arc::new(RateLimiter::new(min_interval)),
                sink: Arc::new(log),
            };
            let stop = Arc::new(AtomicBool::new(false));
            let flag = stop.clone();
            ctrlc::set_handler(move || flag.store(true, Ordering::Relaxed)).map_err(runtime)?;
            let summary = run_live(&opts, &deps, stop).map_err(runtime)?;
            eprintln!(
                "{} polls, {} new items, {} swarms finished",
                summary.polls, summary.items, summary.swarms_finished
            );
            Ok(())
        }
        Command::Simulate {
            config,
            out,
            truth,
            geoip_out,
            annotations_out,
        } => {
            let cfg = WorldConfig::load(&config).map_err(input)?;
            let (world, gt) = generate_world(&cfg).map_err(input)?;
            let log = EventLog::create(&out, SyncPolicy::Batched).map_err(runtime)?;
            let outcome = run_simulation(Arc::new(world), &log, None).map_err(runtime)?;
            log.flush().map_err(runtime)?;
            let mut w = BufWriter::new(fs::File::create(&truth).map_err(runtime)?);
            gt.write_jsonl(Some(&outcome.counts), &mut w).map_err(runtime)?;
            w.flush().map_err(runtime)?;
            if let Some(p) = geoip_out {
                fs::write(p, isp::geoip_csv()).map_err(runtime)?;
            }
            if let Some(p) = annotations_out {
                let mut text = String::from("username,class\n");
                for (u, c) in gt.class_annotations() {
                    text.push_str(&format!("{u},{}\n", c.as_str()));
                }
                fs::write(p, text).map_err(runtime)?;
            }
            eprintln!(
                "{} swarms monitored, {} events",
                outcome.swarms,
                outcome.counts.events.values().sum::<u64>()
            );
            Ok(())
        }
        Command::Analyze { log, report, analysis } => {
            let events = import(&log)?;
            let (opts, geo, classes) = analysis.load()?;
            let a = analyze(&events, &opts, &geo, &classes);
            a.write_report(&report).map_err(runtime)?;
            Ok(())
        }
        Command::Query {
            log,
            username,
            analysis,
        } => {
            let events = import(&log)?;
            let (opts, geo, classes) = analysis.load()?;
            let profile = query_publisher(&events, &username, &opts, &geo, &classes)?;
            let text = serde_json::to_string_pretty(&profile).map_err(runtime)?;
            print_out(&text)
        }
        Command::Export { log, format, out, kind } => {
            let format: ExportFormat = format.parse()?;
            let kinds = if kind.is_empty() {
                None
            } else {
                let mut set = BTreeSet::new();
                for k in &kind {
                    set.insert(EventKind::parse(k).ok_or_else(|| input(format!("unknown event kind `{k}`")))?);
                }
                Some(set)
            };
            let events = import(&log)?;
            let written = export(&events, format, kinds.as_ref(), &out)?;
            let listing: Vec<String> = written.iter().map(|p| p.display().to_string()).collect();
            print_out(&listing.join("\n"))
        }
    }
}

// A closed pipe (`| head`) is not a failure.
fn print_out(text: &str) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(runtime(e)),
        _ => Ok(()),
    }
}

impl AnalysisArgs {
    fn load(&self) -> Result<(AnalysisOptions, GeoDb, BTreeMap<String, BusinessClass>), Failure> {
        let model = match &self.model {
            Some(m) => m.parse::<DiscoveryModel>().map_err(input)?,
            None => DiscoveryModel::default(),
        };
        let opts = AnalysisOptions {
            fake_threshold: self.fake_threshold,
            top_k: self.top_k,
            model,
            vantage_ips: self.vantage_ip.iter().copied().collect(),
            ..AnalysisOptions::default()
        };
        let geo = match &self.geoip {
            Some(p) => GeoDb::load(p).map_err(input)?,
            None => GeoDb::default(),
        };
        let classes = match &self.annotations {
            Some(p) => read_annotations(p)?,
            None => BTreeMap::new(),
        };
        Ok((opts, geo, classes))
    }
}

fn read_annotations(path: &Path) -> Result<BTreeMap<String, BusinessClass>, Failure> {
    let text = fs::read_to_string(path).map_err(input)?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line == "username,class") {
            continue;
        }
        let (user, class) = line
            .rsplit_once(',')
            .ok_or_else(|| input(format!("{}:{}: expected username,class", path.display(), i + 1)))?;
        let class = BusinessClass::parse(class.trim()).ok_or_else(|| {
            input(format!(
                "{}:{}: unknown class `{}`",
                path.display(),
                i + 1,
                class.trim()
            ))
        })?;
        out.insert(user.trim().to_owned(), class);
    }
    Ok(out)
}
