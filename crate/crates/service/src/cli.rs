use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, Context};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use newsgauge_core::analytics::{activity_csv, density_csv, KdeMetric};
use newsgauge_core::platform::{Availability, IngestSummary, Platform, PlatformError};
use newsgauge_core::segmentation::RatingClass;
use serde::Serialize;

use crate::api::{canonical_json, router};
use crate::config::ServiceConfig;

#[derive(Debug, Parser)]
#[command(name = "newsgauge", version, about = "News article credibility indicators")]
pub struct Cli {
    /// Configuration file.
    #[arg(long, global = true, default_value = "newsgauge.toml")]
    pub config: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest a newline-delimited postings file, then fetch queued articles.
    Ingest {
        file: PathBuf,
        /// Store postings only; leave articles queued.
        #[arg(long)]
        no_fetch: bool,
    },
    /// Fetch one article and print its indicator report.
    Evaluate { url: String },
    /// Move postings and articles older than the cutoff into the archive.
    Migrate {
        #[arg(long)]
        cutoff_days: Option<i64>,
    },
    /// Serve the HTTP API.
    Serve,
    /// Write analytics as CSV.
    #[command(subcommand)]
    Export(Export),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ClassArg {
    Low,
    Medium,
    High,
}

impl From<ClassArg> for RatingClass {
    fn from(c: ClassArg) -> Self {
        match c {
            ClassArg::Low => RatingClass::Low,
            ClassArg::Medium => RatingClass::Medium,
            ClassArg::High => RatingClass::High,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Reactions,
    SciRefRatio,
}

impl From<MetricArg> for KdeMetric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Reactions => KdeMetric::Reactions,
            MetricArg::SciRefRatio => KdeMetric::SciRefRatio,
        }
    }
}

#[derive(Debug, Args)]
pub struct Output {
    /// Write here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Export {
    /// Daily mean topic share per class: `date,class,mean_pct`.
    Activity {
        #[arg(long, default_value = "covid-19")]
        topic: String,
        #[arg(long)]
        from: Option<NaiveDate>,
        #[arg(long)]
        to: Option<NaiveDate>,
        #[arg(long, value_enum)]
        class: Option<ClassArg>,
        /// Centered 7-day rolling mean.
        #[arg(long)]
        smooth: bool,
        #[command(flatten)]
        output: Output,
    },
    /// One class's density curve: `x,density`.
    Kde {
        #[arg(long, default_value = "covid-19")]
        topic: String,
        #[arg(long, value_enum)]
        metric: MetricArg,
        #[arg(long, value_enum)]
        class: ClassArg,
        /// Estimate over log10(1 + reach); reactions only.
        #[arg(long)]
        log: bool,
        #[command(flatten)]
        output: Output,
    },
}

/// Platform errors keep their structured form on the way out.
#[derive(Debug)]
pub struct CliFailure(pub PlatformError);

impl std::fmt::Display for CliFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&String::from_utf8_lossy(&canonical_json(&self.0.to_api_error())))
    }
}

impl std::error::Error for CliFailure {}

fn platform_err(e: PlatformError) -> anyhow::Error {
    anyhow::Error::new(CliFailure(e))
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(&canonical_json(value))?;
    out.write_all(b"\n")?;
    Ok(())
}

fn write_output(output: &Output, body: &str) -> anyhow::Result<()> {
    match &output.out {
        Some(p) => std::fs::write(p, body).with_context(|| format!("writing {}", p.display())),
        None => Ok(std::io::stdout().lock().write_all(body.as_bytes())?),
    }
}

#[derive(Serialize)]
struct IngestResult {
    summary: IngestSummary,
    fetched: usize,
    fetch_failed: usize,
    recomputed: usize,
}

pub fn ingest_file(platform: &Platform, file: &std::path::Path, fetch: bool) -> anyhow::Result<()> {
    let body = std::fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    let outcomes = platform.ingest_ndjson(&body).map_err(platform_err)?;
    for o in outcomes.iter().filter(|o| o.error.is_some()) {
        tracing::warn!(line = o.line, error = o.error.as_deref().unwrap_or(""), "line rejected");
    }
    let pump = if fetch {
        platform.pump().map_err(platform_err)?
    } else {
        Default::default()
    };
    print_json(&IngestResult {
        summary: IngestSummary::of(&outcomes),
        fetched: pump.fetched,
        fetch_failed: pump.failed,
        recomputed: pump.recomputed,
    })
}

pub fn export(platform: &Platform, export: &Export) -> anyhow::Result<()> {
    match export {
        Export::Activity {
            topic,
            from,
            to,
            class,
            smooth,
            output,
        } => {
            let series = platform
                .topic_activity(topic, *from, *to, class.map(Into::into), *smooth)
                .map_err(platform_err)?;
            write_output(output, &activity_csv(&series))
        }
        Export::Kde {
            topic,
            metric,
            class,
            log,
            output,
        } => {
            let class: RatingClass = (*class).into();
            let resp = platform
                .topic_kde(topic, (*metric).into(), *log, Some(class))
                .map_err(platform_err)?;
            match resp.curves.first().map(|c| &c.curve) {
                Some(Availability::Available { value }) => write_output(output, &density_csv(value)),
                Some(Availability::Unavailable { reason }) => {
                    Err(anyhow!("no density for class {}: {reason}", class.as_str()))
                }
                None => Err(anyhow!("no curve for class {}", class.as_str())),
            }
        }
    }
}

fn serve(platform: Platform, cfg: &ServiceConfig) -> anyhow::Result<()> {
    let platform = Arc::new(platform);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&cfg.listen)
            .await
            .with_context(|| format!("binding {}", cfg.listen))?;
        tracing::info!(addr = %listener.local_addr()?, "listening");

        let worker = platform.clone();
        let interval = Duration::from_secs(cfg.pump_interval_secs);
        tokio::spawn(async move {
            loop {
                tokio::time::sleep(interval).await;
                let p = worker.clone();
                match tokio::task::spawn_blocking(move || p.pump()).await {
                    Ok(Ok(r)) if r.fetched + r.failed + r.recomputed > 0 => {
                        tracing::info!(fetched = r.fetched, failed = r.failed, recomputed = r.recomputed, "pump")
                    }
                    Ok(Ok(_)) => {}
                    Ok(Err(e)) => tracing::error!(%e, "pump failed"),
                    Err(e) => tracing::error!(%e, "pump panicked"),
                }
            }
        });
        if cfg.daily_migration {
            let migrator = platform.clone();
            let cutoff = cfg.platform.migration_cutoff_days;
            tokio::spawn(async move {
                loop {
                    tokio::time::sleep(Duration::from_secs(24 * 3600)).await;
                    let p = migrator.clone();
                    match tokio::task::spawn_blocking(move || p.migrate(cutoff)).await {
                        Ok(Ok(r)) => tracing::info!(moved = r.total(), "daily migration"),
                        Ok(Err(e)) => tracing::error!(%e, "daily migration failed"),
                        Err(e) => tracing::error!(%e, "daily migration panicked"),
                    }
                }
            });
        }

        axum::serve(listener, router(platform))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = ServiceConfig::load(&cli.config)?;
    let platform = cfg.build_platform()?;
    match &cli.command {
        Command::Ingest { file, no_fetch } => ingest_file(&platform, file, !no_fetch),
        Command::Evaluate { url } => print_json(&platform.evaluate_url(url).map_err(platform_err)?),
        Command::Migrate { cutoff_days } => {
            let cutoff = cutoff_days.unwrap_or(cfg.platform.migration_cutoff_days);
            print_json(&platform.migrate(cutoff).map_err(platform_err)?)
        }
        Command::Serve => serve(platform, &cfg),
        Command::Export(e) => export(&platform, e),
    }
}
