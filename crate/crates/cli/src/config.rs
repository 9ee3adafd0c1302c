use std::path::Path;

use pkgraph_core::infer::RankingConfig;
use pkgraph_ingest::{FetchPolicy, Platform};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DEFAULT_PORT: u16 = 8080;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSettings {
    /// Repositories requested per search term.
    pub per_term: usize,
    /// Python files downloaded per repository.
    pub max_files: usize,
    pub platforms: Vec<Platform>,
}

impl Default for IngestSettings {
    fn default() -> Self {
        IngestSettings {
            per_term: 30,
            max_files: 200,
            platforms: Platform::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerSettings {
    pub port: Option<u16>,
}

/// Contents of the optional TOML configuration file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub ranking: RankingConfig,
    pub fetch: FetchPolicy,
    pub ingest: IngestSettings,
    pub server: ServerSettings,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, CliError> {
        let cfg: Config = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Config, CliError> {
        match path {
            None => Ok(Config::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                Config::parse(&text).map_err(|e| match e {
                    CliError::Config(m) => CliError::Config(format!("{}: {m}", p.display())),
                    other => other,
                })
            }
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.ranking.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.fetch.validate().map_err(CliError::Config)?;
        if self.ingest.per_term == 0 || self.ingest.max_files == 0 {
            return Err(CliError::Config("ingest.per_term and ingest.max_files must be positive".into()));
        }
        Ok(())
    }

    /// `PKGRAPH_PORT` beats the file, which beats the default.
    pub fn port(&self, env: Option<&str>) -> Result<u16, CliError> {
        match env.map(str::trim).filter(|s| !s.is_empty()) {
            Some(raw) => raw
                .parse()
                .map_err(|_| CliError::Config(format!("PKGRAPH_PORT is not a port number: {raw:?}"))),
            None => Ok(self.server.port.unwrap_or(DEFAULT_PORT)),
        }
    }
}
