use std::error::Error;
use std::fs::{self, File};
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rankq_client::{snapshot_bytes, RankqClient};
use rankq_core::sim::{parse_config_text, SimConfig, SimSummary, SlackCheck};
use rankq_server::AppState;

type CliResult<T = ()> = Result<T, Box<dyn Error>>;

/// Queue-rank estimation with windowed sketches.
#[derive(Debug, Parser)]
#[command(name = "rankq", version)]
struct Cli {
    /// Server to talk to. Without it, simulate/report/sketch-dump run against
    /// an embedded server on a loopback port.
    #[arg(long, global = true)]
    server: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the queue simulator and write per-query records as CSV.
    Simulate(Box<SimulateArgs>),
    /// Summarize a record CSV.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        /// Coverage threshold; defaults to 0.3 x the largest exact count.
        #[arg(long)]
        eps_n: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Describe a snapshot file.
    SketchDump {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Feed one raincheck to the server's estimator.
    Observe {
        #[arg(long)]
        client_id: String,
        #[arg(long)]
        ts: u64,
        #[arg(long)]
        now: u64,
    },
    /// Advance the server's clock.
    Rotate {
        #[arg(long)]
        now: u64,
    },
    /// Ask the server for an estimated rank.
    Rank {
        #[arg(long)]
        rho_ts: u64,
        #[arg(long)]
        t_cur: u64,
    },
    Status,
    /// Save the server's estimator state.
    Snapshot {
        #[arg(long)]
        out: PathBuf,
    },
    /// Replace the server's estimator state.
    Restore {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// `key = value` file using the flag names below; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV destination. The JSON summary and final snapshot go next to it
    /// with `.json` and `.snap` extensions.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    rs: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    delta_prob: Option<String>,
    /// Row count, or `auto` to derive it from epsilon and delta-prob.
    #[arg(long)]
    sketches: Option<String>,
    #[arg(long)]
    width: Option<String>,
    #[arg(long)]
    arrival_rate: Option<String>,
    #[arg(long)]
    service_rate: Option<String>,
    #[arg(long)]
    service_start: Option<String>,
    #[arg(long)]
    renewal: Option<String>,
    #[arg(long)]
    ticks: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    n_hint: Option<String>,
    #[arg(long)]
    query_fraction: Option<String>,
    #[arg(long)]
    allow_stale_renewal: bool,
    /// `mean-index` or `mean-estimate`.
    #[arg(long)]
    averaging: Option<String>,
}

impl SimulateArgs {
    fn overrides(&self) -> Vec<(&'static str, &str)> {
        let flags = [
            ("delta", &self.delta),
            ("rs", &self.rs),
            ("epsilon", &self.epsilon),
            ("delta-prob", &self.delta_prob),
            ("sketches", &self.sketches),
            ("width", &self.width),
            ("arrival-rate", &self.arrival_rate),
            ("service-rate", &self.service_rate),
            ("service-start", &self.service_start),
            ("renewal", &self.renewal),
            ("ticks", &self.ticks),
            ("seed", &self.seed),
            ("n-hint", &self.n_hint),
            ("query-fraction", &self.query_fraction),
            ("averaging", &self.averaging),
        ];
        let mut set: Vec<_> = flags
            .into_iter()
            .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
            .collect();
        if self.allow_stale_renewal {
            set.push(("allow-stale-renewal", "true"));
        }
        set
    }

    fn resolve(&self) -> CliResult<(SimConfig, PathBuf)> {
        let (mut config, file_out) = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| format!("reading {}: {e}", path.display()))?;
                let file = parse_config_text(&text)?;
                (file.config, file.out)
            }
            None => (SimConfig::default(), None),
        };
        for (key, value) in self.overrides() {
            config.set(key, value)?;
        }
        let out = self
            .out
            .clone()
            .or(file_out)
            .ok_or("no output path: pass --out or set `out` in the config file")?;
        Ok((config, out))
    }
}

enum Target {
    Remote(RankqClient),
    Embedded(RankqClient, tokio::task::JoinHandle<std::io::Result<()>>),
}

impl Target {
    async fn connect(server: Option<&str>) -> CliResult<Self> {
        match server {
            Some(url) => Ok(Target::Remote(RankqClient::new(url)?)),
            None => {
                let addr: SocketAddr = "127.0.0.1:0".parse()?;
                let state = AppState::new(Default::default())?;
                let (local, handle) = rankq_server::spawn(addr, state).await?;
                Ok(Target::Embedded(
                    RankqClient::new(&format!("http://{local}"))?,
                    handle,
                ))
            }
        }
    }

    fn client(&self) -> &RankqClient {
        match self {
            Target::Remote(c) | Target::Embedded(c, _) => c,
        }
    }
}

impl Drop for Target {
    fn drop(&mut self) {
        if let Target::Embedded(_, handle) = self {
            handle.abort();
        }
    }
}

fn remote(server: Option<&str>) -> CliResult<RankqClient> {
    let url = server.ok_or("this command needs --server")?;
    Ok(RankqClient::new(url)?)
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult {
    fs::write(path, bytes).map_err(|e| format!("writing {}: {e}", path.display()).into())
}

fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| format!("reading {}: {e}", path.display()).into())
}

fn slack_line(name: &str, c: &SlackCheck) -> String {
    match (c.min_slack, c.max_slack) {
        (Some(lo), Some(hi)) => format!(
            "{name}: {} queries, slack [{lo}, {hi}], {} outside bound",
            c.queries, c.violations
        ),
        _ => format!("{name}: no queries"),
    }
}

fn render_summary(s: &SimSummary) -> String {
    let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{:.2}%", 100.0 * v));
    let mut out = format!(
        "ticks {} | sketches {} | events {} | arrivals {} | served {} | waiting {}\n",
        s.ticks, s.sketches, s.events, s.arrivals, s.served, s.waiting_at_end
    );
    out += &format!(
        "queries {} | eps*N {:.1} | max bound {:.1}\n",
        s.queries, s.epsilon_n, s.max_error_bound
    );
    out += &format!(
        "coverage {} | at peak window ({} clients) {}\n",
        pct(s.coverage),
        s.peak_window_clients,
        pct(s.coverage_at_peak)
    );
    out += &slack_line("completed window", &s.completed_window);
    out.push('\n');
    out += &slack_line("before current window", &s.before_current_window);
    out.push('\n');
    if let Some(r) = &s.report {
        out += &r.render();
    }
    out
}

async fn simulate(server: Option<&str>, args: &SimulateArgs) -> CliResult {
    let (config, out) = args.resolve()?;
    config.validate()?;
    // Fail on an unwritable destination before spending time on the run.
    let mut csv = File::create(&out).map_err(|e| format!("creating {}: {e}", out.display()))?;

    let target = Target::connect(server).await?;
    let resp = target.client().simulate(&config).await?;
    csv.write_all(resp.records_csv.as_bytes())
        .map_err(|e| format!("writing {}: {e}", out.display()))?;
    write_file(
        &out.with_extension("json"),
        serde_json::to_string_pretty(&resp.summary)?.as_bytes(),
    )?;
    write_file(&out.with_extension("snap"), &snapshot_bytes(&resp)?)?;

    print!("{}", render_summary(&resp.summary));
    println!("wrote {}", out.display());
    Ok(())
}

async fn run(cli: Cli) -> CliResult {
    let server = cli.server.as_deref();
    match &cli.command {
        Command::Simulate(args) => simulate(server, args).await?,
        Command::Report { input, eps_n, json } => {
            let csv = read_file(input)?;
            let target = Target::connect(server).await?;
            let resp = target.client().report(csv, *eps_n).await?;
            if *json {
                println!("{}", serde_json::to_string_pretty(&resp.summary)?);
            } else {
                print!("{}", resp.text);
            }
        }
        Command::SketchDump { input, json } => {
            let bytes = read_file(input)?;
            let target = Target::connect(server).await?;
            let resp = target.client().sketch_dump(bytes).await?;
            if *json {
                println!("{}", serde_json::to_string_pretty(&resp.dump)?);
            } else {
                print!("{}", resp.text);
            }
        }
        Command::Observe { client_id, ts, now } => {
            let s = remote(server)?.observe(client_id, *ts, *now).await?;
            println!("window {} now {}", s.window_index, s.now);
        }
        Command::Rotate { now } => {
            let s = remote(server)?.rotate(*now).await?;
            println!("window {} now {}", s.window_index, s.now);
        }
        Command::Rank { rho_ts, t_cur } => {
            let est = remote(server)?.rank(*rho_ts, *t_cur).await?;
            println!(
                "rank ~ {:.1} (+/- {:.1}) from window {}",
                est.estimated_rank, est.error_bound, est.window_index
            );
        }
        Command::Status => {
            let s = remote(server)?.status().await?;
            println!("window {} now {}", s.window_index, s.now);
        }
        Command::Snapshot { out } => {
            let bytes = remote(server)?.snapshot().await?;
            write_file(out, &bytes)?;
            println!("wrote {} bytes to {}", bytes.len(), out.display());
        }
        Command::Restore { input } => {
            let s = remote(server)?.restore(read_file(input)?).await?;
            println!("window {} now {}", s.window_index, s.now);
        }
    }
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    match run(Cli::parse()).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rankq: {e}");
            ExitCode::FAILURE
        }
    }
}
