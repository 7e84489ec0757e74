use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use yardmaster::server::{ServeOptions, Service};
use yardmaster::{read_fixtures, read_site_config};
use yardmaster_core::comms::vectors::conformance_vectors_jsonl;
use yardmaster_core::orchestrator::scenario::{run_scenario, ScenarioConfig};
use yardmaster_core::orchestrator::{CyclePolicy, Session};
use yardmaster_core::sim::SiteConfig;
use yardmaster_core::store::ParamStore;

#[derive(Parser)]
#[command(name = "yardmaster", version, about = "Construction-site simulator and task orchestrator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the control API and event stream over a live session.
    Serve {
        /// Site configuration JSON; defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Fixture file or directory of .jsonl fixtures.
        #[arg(long)]
        fixtures: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Simulated seconds per wall second; 0 runs as fast as possible.
        #[arg(long, default_value_t = 1.0)]
        rate: f64,
        /// Lower CONTINUE_FLG after this many loads; by default the operator decides.
        #[arg(long)]
        cycles: Option<u32>,
        /// Keep the parameter store in this directory.
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Run the load-haul-dump scenario headless and write a report.
    RunScenario {
        #[arg(long, default_value_t = 3)]
        cycles: u32,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Fixture file or directory; the built-in scenario when absent.
        #[arg(long)]
        fixtures: Option<PathBuf>,
        /// Write every event as a JSON line.
        #[arg(long)]
        events: Option<PathBuf>,
        /// Simulated-time budget in seconds.
        #[arg(long)]
        max_sim_time: Option<f64>,
    },
    /// Parameter store maintenance.
    Store {
        /// Store directory.
        #[arg(long, default_value = "yardmaster-store", global = true)]
        dir: PathBuf,
        #[command(subcommand)]
        action: StoreAction,
    },
    /// Machine message codec tools.
    Comms {
        #[command(subcommand)]
        action: CommsAction,
    },
}

#[derive(Subcommand)]
enum StoreAction {
    /// Replace the store contents with a fixture.
    Load { fixture: PathBuf },
    /// Print tasks and parameters as JSON lines.
    Dump,
}

#[derive(Subcommand)]
enum CommsAction {
    /// Print the canonical conformance vectors as JSON lines.
    Vectors,
}

fn site_config(path: Option<&PathBuf>) -> anyhow::Result<SiteConfig> {
    path.map_or_else(|| Ok(SiteConfig::default()), |p| read_site_config(p))
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    match Cli::parse().command {
        Command::Serve { config, fixtures, bind, rate, cycles, store } => {
            anyhow::ensure!(rate >= 0.0 && rate.is_finite(), "--rate must be a finite number >= 0");
            let site = site_config(config.as_ref())?;
            let mut params = match store {
                Some(dir) => ParamStore::open(dir)?,
                None => ParamStore::in_memory(),
            };
            let counts = params.load_fixture_str(&read_fixtures(&fixtures)?)?;
            tracing::info!("loaded {} tasks, {} parameters", counts.tasks, counts.parameters);
            let policy = cycles.map_or(CyclePolicy::Manual, CyclePolicy::Cycles);
            let session = Session::new(site, params, policy)?;
            serve(session, bind, ServeOptions { rate, ..ServeOptions::default() })
        }
        Command::RunScenario { cycles, seed, report, config, fixtures, events, max_sim_time } => {
            let mut cfg = ScenarioConfig::new(cycles, seed);
            if let Some(path) = config {
                cfg.site = SiteConfig { seed, ..read_site_config(&path)? };
            }
            cfg.fixture = fixtures.map(|p| read_fixtures(&p)).transpose()?;
            if let Some(budget) = max_sim_time {
                cfg.max_sim_time = budget;
            }
            let mut log = events
                .map(|p| File::create(&p).map(BufWriter::new).with_context(|| format!("creating {}", p.display())))
                .transpose()?;
            let mut write_err = None;
            let result = run_scenario(&cfg, &mut |e| {
                if let (Some(w), None) = (log.as_mut(), &write_err) {
                    if let Err(err) = writeln!(w, "{}", e.to_json()) {
                        write_err = Some(err);
                    }
                }
            });
            if let Some(mut w) = log {
                w.flush()?;
            }
            if let Some(err) = write_err {
                return Err(err).context("writing the event log");
            }
            let r = result?;
            println!(
                "{} cycles in {:.1} s simulated: excavated {:.4} m3, dumped at point 5 {:.4} m3, residual {:.3e} m3",
                r.cycles.len(),
                r.sim_time,
                r.excavated,
                r.dumped_at_point5,
                r.residual
            );
            if let Some(path) = report {
                let text = serde_json::to_string_pretty(&r)?;
                std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(())
        }
        Command::Store { dir, action } => {
            let mut store = ParamStore::open(&dir)?;
            match action {
                StoreAction::Load { fixture } => {
                    let counts = store.load_fixture_str(&read_fixtures(&fixture)?)?;
                    println!(
                        "loaded {} tasks, {} parameters, {} flags into {}",
                        counts.tasks,
                        counts.parameters,
                        counts.flags,
                        dir.display()
                    );
                }
                StoreAction::Dump => print!("{}", store.dump()),
            }
            Ok(())
        }
        Command::Comms { action: CommsAction::Vectors } => {
            print!("{}", conformance_vectors_jsonl());
            Ok(())
        }
    }
}

#[tokio::main]
async fn serve(session: Session, bind: SocketAddr, opts: ServeOptions) -> anyhow::Result<()> {
    let service = Service::spawn(session, opts);
    let listener = tokio::net::TcpListener::bind(bind).await.with_context(|| format!("binding {bind}"))?;
    tracing::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, service.router())
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
