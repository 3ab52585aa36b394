//! Service configuration: a TOML file, then `DELIB_*` environment overrides.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use delib_core::engagement::{EngagementConfig, OmegaDirection};
use delib_core::session::{Condition, SeedPolicy, ServiceConfig, SessionManager};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusEntry {
    pub id: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub bind: String,
    pub log_dir: Option<PathBuf>,
    pub default_condition: Condition,
    /// Base seed for sequential seeding; random seeds when absent.
    pub seed_base: Option<u64>,
    pub state_every: u64,
    /// Bearer token required on every request when set.
    pub token: Option<String>,
    pub omega_d_direction: OmegaDirection,
    pub templates: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    /// Static web client assets served at `/`.
    pub static_dir: Option<PathBuf>,
    /// Allow cross-origin requests, for a client hosted elsewhere.
    pub cors: bool,
    pub corpus: Vec<CorpusEntry>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            bind: "127.0.0.1:8080".into(),
            log_dir: None,
            default_condition: Condition::Intervention,
            seed_base: None,
            state_every: 20,
            token: None,
            omega_d_direction: OmegaDirection::Example,
            templates: None,
            rules: None,
            static_dir: None,
            cors: false,
            corpus: Vec::new(),
        }
    }
}

/// Corpus id used when only a path is given: the file stem.
pub fn corpus_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".into())
}

impl Config {
    pub fn from_toml(source: &str) -> Result<Self> {
        Ok(toml::from_str(source)?)
    }

    /// Reads `path` if given, then applies the environment.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Self::from_toml(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => Config::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    /// Overrides from `DELIB_BIND`, `DELIB_LOG_DIR`, `DELIB_CONDITION`,
    /// `DELIB_SEED_BASE`, `DELIB_TOKEN` and `DELIB_CORPUS` (a
    /// comma-separated list of `id=path` or bare paths).
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(v) = get("DELIB_BIND") {
            self.bind = v;
        }
        if let Some(v) = get("DELIB_LOG_DIR") {
            self.log_dir = Some(v.into());
        }
        if let Some(v) = get("DELIB_CONDITION") {
            self.default_condition = match v.as_str() {
                "intervention" => Condition::Intervention,
                "control" => Condition::Control,
                other => bail!("DELIB_CONDITION must be `intervention` or `control`, got `{other}`"),
            };
        }
        if let Some(v) = get("DELIB_SEED_BASE") {
            self.seed_base = Some(v.parse().context("DELIB_SEED_BASE")?);
        }
        if let Some(v) = get("DELIB_TOKEN") {
            self.token = Some(v).filter(|t| !t.is_empty());
        }
        if let Some(v) = get("DELIB_CORPUS") {
            self.corpus = v
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|item| match item.split_once('=') {
                    Some((id, path)) => CorpusEntry {
                        id: id.trim().into(),
                        path: path.trim().into(),
                    },
                    None => CorpusEntry {
                        id: corpus_id(Path::new(item.trim())),
                        path: item.trim().into(),
                    },
                })
                .collect();
        }
        Ok(())
    }

    pub fn service_config(&self) -> ServiceConfig {
        ServiceConfig {
            log_dir: self.log_dir.clone(),
            default_condition: self.default_condition,
            seed_policy: match self.seed_base {
                Some(base) => SeedPolicy::Sequential { base },
                None => SeedPolicy::Random,
            },
            state_every: self.state_every,
            engagement: EngagementConfig {
                omega_d_direction: self.omega_d_direction,
            },
        }
    }

    /// Loads every corpus and optional rules/templates into a manager.
    pub fn build_manager(&self) -> Result<SessionManager> {
        if self.corpus.is_empty() {
            bail!("no corpus configured");
        }
        let mut m = SessionManager::new(self.service_config());
        for c in &self.corpus {
            let g = delib_core::load_corpus_file(&c.path).with_context(|| format!("loading {}", c.path.display()))?;
            m = m.with_corpus(c.id.clone(), Arc::new(g));
        }
        if let Some(p) = &self.templates {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            m = m.with_templates(delib_core::TemplatePool::from_toml(&text)?);
        }
        if let Some(p) = &self.rules {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            m = m.with_classifier(Arc::new(delib_core::RuleClassifier::from_toml(&text)?));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_env() {
        let mut c = Config::from_toml(
            r#"
            bind = "0.0.0.0:9000"
            seed_base = 5
            [[corpus]]
            id = "cars"
            path = "cars.jsonl"
            "#,
        )
        .unwrap();
        assert_eq!(c.bind, "0.0.0.0:9000");
        assert_eq!(c.state_every, 20);
        let env = |k: &str| match k {
            "DELIB_BIND" => Some("127.0.0.1:1".to_string()),
            "DELIB_CONDITION" => Some("control".to_string()),
            "DELIB_CORPUS" => Some("a=x.jsonl, data/y.jsonl".to_string()),
            _ => None,
        };
        c.apply_env(env).unwrap();
        assert_eq!(c.bind, "127.0.0.1:1");
        assert_eq!(c.default_condition, Condition::Control);
        assert_eq!(c.corpus[1].id, "y");
        assert_eq!(c.service_config().seed_policy, SeedPolicy::Sequential { base: 5 });
        assert!(c.apply_env(|k| (k == "DELIB_CONDITION").then(|| "both".to_string())).is_err());
        assert!(Config::from_toml("unknown = 1").is_err());
    }
}
