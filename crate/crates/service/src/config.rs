//! Service configuration file (TOML).
//!
//! Relative paths are resolved against the directory holding the file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use newsgauge_core::assets::{AssetPaths, Assets, ClassScheme};
use newsgauge_core::ingestion::{Fetcher, HttpFetcher};
use newsgauge_core::platform::{Platform, PlatformConfig};
use newsgauge_core::reviews::ExpertRegistry;
use newsgauge_core::store::{Archive, RedbStore};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpertCredential {
    pub id: String,
    pub token: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    pub store_path: PathBuf,
    pub archive_path: PathBuf,
    #[serde(default = "default_listen")]
    pub listen: String,
    /// Seconds between background fetch/recompute passes while serving.
    #[serde(default = "default_pump_interval")]
    pub pump_interval_secs: u64,
    /// Run the archive migration once per day while serving.
    #[serde(default = "default_true")]
    pub daily_migration: bool,
    #[serde(default)]
    pub assets: AssetPaths,
    #[serde(default)]
    pub classes: ClassScheme,
    #[serde(default)]
    pub platform: PlatformConfig,
    #[serde(default)]
    pub experts: Vec<ExpertCredential>,
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn default_pump_interval() -> u64 {
    5
}

fn default_true() -> bool {
    true
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl ServiceConfig {
    pub fn parse(text: &str, base: &Path) -> anyhow::Result<Self> {
        let mut cfg: ServiceConfig = toml::from_str(text).context("invalid config")?;
        resolve(base, &mut cfg.store_path);
        resolve(base, &mut cfg.archive_path);
        let a = &mut cfg.assets;
        for p in [
            &mut a.public_suffix,
            &mut a.sci_domains,
            &mut a.hyperbole,
            &mut a.subjective,
            &mut a.stance_cues,
            &mut a.taxonomy,
            &mut a.outlet_ranking,
        ]
        .into_iter()
        .flatten()
        {
            resolve(base, p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    fn validate(&self) -> anyhow::Result<()> {
        let p = &self.platform;
        if p.half_life_days.is_nan() || p.half_life_days <= 0.0 {
            bail!("platform.half_life_days must be positive");
        }
        if p.migration_cutoff_days < 1 {
            bail!("platform.migration_cutoff_days must be at least 1");
        }
        if self.pump_interval_secs == 0 {
            bail!("pump_interval_secs must be positive");
        }
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.experts {
            if e.token.is_empty() {
                bail!("expert {} has an empty token", e.id);
            }
            if !seen.insert(&e.token) {
                bail!("expert tokens must be unique");
            }
        }
        Ok(())
    }

    pub fn experts(&self) -> ExpertRegistry {
        ExpertRegistry::new(self.experts.iter().map(|e| (e.id.clone(), e.token.clone())))
    }

    /// Opens the stores and assets. Call outside any async runtime: the HTTP
    /// fetcher owns a blocking client.
    pub fn build_platform(&self) -> anyhow::Result<Platform> {
        let fetcher: Arc<dyn Fetcher> = Arc::new(HttpFetcher::new()?);
        self.build_platform_with(fetcher)
    }

    pub fn build_platform_with(&self, fetcher: Arc<dyn Fetcher>) -> anyhow::Result<Platform> {
        if let Some(dir) = self.store_path.parent() {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let store = RedbStore::open(&self.store_path)
            .with_context(|| format!("opening store {}", self.store_path.display()))?;
        let archive = Archive::open(&self.archive_path)
            .with_context(|| format!("opening archive {}", self.archive_path.display()))?;
        let assets = Assets::load(&self.assets, self.platform.tau, self.classes)?;
        Ok(Platform::new(Arc::new(store), archive, assets, self.platform.clone(), fetcher)
            .with_experts(self.experts()))
    }
}
