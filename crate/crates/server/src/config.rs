use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::ServiceError;

/// Service configuration, normally read from a TOML file:
///
/// ```toml
/// port = 8080
/// key_path = "signing.key"
/// rules_path = "rules.yaml"      # optional, defaults to the petstore rules
/// journal_path = "data/acl.ndjson"
/// ```
///
/// Relative paths are resolved against the directory holding the file.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    #[serde(default = "default_port")]
    pub port: u16,
    pub key_path: PathBuf,
    #[serde(default)]
    pub rules_path: Option<PathBuf>,
    pub journal_path: PathBuf,
    /// Where object bodies are kept; defaults to `<journal_path>.objects`.
    #[serde(default)]
    pub objects_path: Option<PathBuf>,
}

fn default_bind() -> String {
    "127.0.0.1".to_string()
}

fn default_port() -> u16 {
    8080
}

impl ServiceConfig {
    pub fn new(key_path: impl Into<PathBuf>, journal_path: impl Into<PathBuf>) -> ServiceConfig {
        ServiceConfig {
            bind: default_bind(),
            port: default_port(),
            key_path: key_path.into(),
            rules_path: None,
            journal_path: journal_path.into(),
            objects_path: None,
        }
    }

    pub fn from_toml(text: &str, base: &Path) -> Result<ServiceConfig, ServiceError> {
        let mut cfg: ServiceConfig = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.key_path);
        rebase(&mut cfg.journal_path);
        if let Some(p) = cfg.rules_path.as_mut() {
            rebase(p);
        }
        if let Some(p) = cfg.objects_path.as_mut() {
            rebase(p);
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ServiceConfig, ServiceError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ServiceError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        ServiceConfig::from_toml(&text, base)
    }

    pub fn objects_path(&self) -> PathBuf {
        self.objects_path.clone().unwrap_or_else(|| {
            let mut name = self.journal_path.clone().into_os_string();
            name.push(".objects");
            PathBuf::from(name)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths_follow_the_config_file() {
        let cfg = ServiceConfig::from_toml(
            "port = 9000\nkey_path = \"k.key\"\njournal_path = \"/var/acl.ndjson\"\n",
            Path::new("/etc/svc"),
        )
        .unwrap();
        assert_eq!(cfg.port, 9000);
        assert_eq!(cfg.bind, "127.0.0.1");
        assert_eq!(cfg.key_path, Path::new("/etc/svc/k.key"));
        assert_eq!(cfg.journal_path, Path::new("/var/acl.ndjson"));
        assert_eq!(cfg.rules_path, None);
        assert_eq!(cfg.objects_path(), Path::new("/var/acl.ndjson.objects"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ServiceConfig::from_toml("key_path='a'\njournal_path='b'\nprot=1\n", Path::new("."));
        assert!(matches!(err, Err(ServiceError::Config(_))));
    }
}
