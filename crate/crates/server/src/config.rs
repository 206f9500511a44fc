//! Service configuration: an optional TOML file, then `INFOMORPH_*`
//! environment overrides.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use infomorph_core::provider::{HttpProvider, HttpProviderConfig, MockProvider, ProviderSet};
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

pub const ENV_CONFIG: &str = "INFOMORPH_CONFIG";
pub const ENV_HOST: &str = "INFOMORPH_HOST";
pub const ENV_PORT: &str = "INFOMORPH_PORT";
pub const ENV_DATA_DIR: &str = "INFOMORPH_DATA_DIR";
pub const ENV_PROVIDER_ENDPOINT: &str = "INFOMORPH_PROVIDER_ENDPOINT";
pub const ENV_PROVIDER_TOKEN: &str = "INFOMORPH_PROVIDER_TOKEN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub host: String,
    pub port: u16,
    pub data_dir: PathBuf,
    pub max_parallel: usize,
    pub provider: ProviderConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    /// `mock` or `http`.
    pub kind: String,
    pub name: String,
    pub endpoint: Option<String>,
    pub token: Option<String>,
    pub model: String,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            data_dir: PathBuf::from("infomorph-data"),
            max_parallel: 4,
            provider: ProviderConfig::default(),
        }
    }
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: "mock".into(),
            name: "default".into(),
            endpoint: None,
            token: None,
            model: "default".into(),
            timeout_secs: 60,
            max_in_flight: 4,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ServiceError::validation(path, e.inner().message().to_string())
        })
    }

    pub fn load_file(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::Io(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Applies overrides from `vars` (normally the process environment).
    pub fn apply_env(&mut self, vars: &HashMap<String, String>) -> Result<(), ServiceError> {
        if let Some(v) = vars.get(ENV_HOST) {
            self.host = v.clone();
        }
        if let Some(v) = vars.get(ENV_PORT) {
            self.port = v.parse().map_err(|_| ServiceError::validation(ENV_PORT, format!("not a port: {v:?}")))?;
        }
        if let Some(v) = vars.get(ENV_DATA_DIR) {
            self.data_dir = PathBuf::from(v);
        }
        if let Some(v) = vars.get(ENV_PROVIDER_ENDPOINT) {
            self.provider.endpoint = Some(v.clone());
            self.provider.kind = "http".into();
        }
        if let Some(v) = vars.get(ENV_PROVIDER_TOKEN) {
            self.provider.token = Some(v.clone());
        }
        Ok(())
    }

    /// File named by `explicit` or `INFOMORPH_CONFIG` (if any), then the
    /// environment.
    pub fn resolve(explicit: Option<&Path>, vars: &HashMap<String, String>) -> Result<Self, ServiceError> {
        let file = explicit.map(Path::to_path_buf).or_else(|| vars.get(ENV_CONFIG).map(PathBuf::from));
        let mut config = match file {
            Some(p) => Self::load_file(&p)?,
            None => Self::default(),
        };
        config.apply_env(vars)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.max_parallel == 0 {
            return Err(ServiceError::validation("max_parallel", "must be at least 1"));
        }
        match self.provider.kind.as_str() {
            "mock" => Ok(()),
            "http" => {
                if self.provider.endpoint.as_deref().is_none_or(str::is_empty) {
                    return Err(ServiceError::validation("provider.endpoint", "required for the http provider"));
                }
                if self.provider.max_in_flight == 0 {
                    return Err(ServiceError::validation("provider.max_in_flight", "must be at least 1"));
                }
                Ok(())
            }
            other => Err(ServiceError::validation("provider.kind", format!("unknown provider kind {other:?}"))),
        }
    }

    /// The mock is always registered; an http provider becomes the default
    /// when configured.
    pub fn providers(&self) -> ProviderSet {
        let mut set = ProviderSet::new();
        set.insert(Arc::new(MockProvider::new()));
        if self.provider.kind == "http" {
            let mut c = HttpProviderConfig::new(&self.provider.name, self.provider.endpoint.clone().unwrap_or_default());
            c.token = self.provider.token.clone();
            c.default_model = self.provider.model.clone();
            c.timeout = Duration::from_secs(self.provider.timeout_secs);
            c.max_in_flight = self.provider.max_in_flight;
            let p = HttpProvider::new(c);
            let id = format!("http:{}", self.provider.name);
            set.insert(Arc::new(p));
            set.set_default(id);
        }
        set
    }

    pub fn model(&self) -> &str {
        &self.provider.model
    }
}
