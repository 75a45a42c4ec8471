use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::eval::LossParams;
use crate::ga::GaConfig;

use super::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Batch,
    Interactive,
}

/// One run, as read from a TOML file. Relative paths are taken from the
/// directory holding the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus_path: PathBuf,
    /// Held-out corpus served by the simulated provider.
    #[serde(default)]
    pub hidden_corpus_path: Option<PathBuf>,
    /// CSV with `id,label` rows applied over the corpus labels.
    #[serde(default)]
    pub labels_path: Option<PathBuf>,
    /// One query per line; blank lines and `#` comments are skipped.
    #[serde(default)]
    pub seed_queries_path: Option<PathBuf>,
    /// Labels fetched documents by this query instead of asking a human.
    #[serde(default)]
    pub oracle_query: Option<String>,
    pub checkpoint_dir: PathBuf,
    #[serde(default = "default_listen")]
    pub http_listen_address: String,
    #[serde(default)]
    pub mode: Mode,
    /// Batch runs stop here; interactive runs stop here if set.
    #[serde(default)]
    pub max_generations: Option<u64>,
    #[serde(default = "default_tokens_per_fetch")]
    pub tokens_per_fetch: u64,
    /// Total provider tokens for the run.
    #[serde(default)]
    pub budget: u64,
    /// Interactive runs pause themselves every this many generations.
    #[serde(default)]
    pub pause_every: Option<u64>,
    #[serde(default)]
    pub ga: GaConfig,
    #[serde(default)]
    pub loss: LossParams,
}

fn default_listen() -> String {
    "127.0.0.1:7878".into()
}

fn default_tokens_per_fetch() -> u64 {
    1
}

pub const DEFAULT_BATCH_GENERATIONS: u64 = 500;

impl RunConfig {
    /// Minimal config with defaults everywhere else.
    pub fn new(corpus_path: impl Into<PathBuf>, checkpoint_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            corpus_path: corpus_path.into(),
            hidden_corpus_path: None,
            labels_path: None,
            seed_queries_path: None,
            oracle_query: None,
            checkpoint_dir: checkpoint_dir.into(),
            http_listen_address: default_listen(),
            mode: Mode::Batch,
            max_generations: None,
            tokens_per_fetch: 1,
            budget: 0,
            pause_every: None,
            ga: GaConfig::default(),
            loss: LossParams::default(),
        }
    }

    /// Reads `path` and applies `key=value` overrides (dotted keys reach
    /// into tables, e.g. `ga.operator_rates.swap=0.3`).
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text, overrides)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_relative(dir);
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, RunError> {
        let mut value: toml::Table = text.parse().map_err(|e: toml::de::Error| RunError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: RunConfig =
            toml::Value::Table(value).try_into().map_err(|e: toml::de::Error| RunError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config is always representable")
    }

    fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus_path);
        fix(&mut self.checkpoint_dir);
        for p in [&mut self.hidden_corpus_path, &mut self.labels_path, &mut self.seed_queries_path].into_iter().flatten() {
            fix(p);
        }
    }

    pub fn generation_limit(&self) -> Option<u64> {
        match self.mode {
            Mode::Batch => Some(self.max_generations.unwrap_or(DEFAULT_BATCH_GENERATIONS)),
            Mode::Interactive => self.max_generations,
        }
    }

    /// Checks values and that input files exist.
    pub fn validate(&self) -> Result<(), RunError> {
        self.ga.validate().map_err(|e| RunError::Config(e.to_string()))?;
        let inputs = [Some(&self.corpus_path), self.hidden_corpus_path.as_ref(), self.labels_path.as_ref(), self.seed_queries_path.as_ref()];
        for p in inputs.into_iter().flatten() {
            if !p.is_file() {
                return Err(RunError::Config(format!("{} does not exist", p.display())));
            }
        }
        if self.tokens_per_fetch == 0 {
            return Err(RunError::Config("tokens_per_fetch must be positive".into()));
        }
        if self.pause_every == Some(0) {
            return Err(RunError::Config("pause_every must be positive".into()));
        }
        let l = &self.loss;
        if [l.eps_fp, l.eps_fn, l.delta_fp, l.delta_fn, l.lambda_len].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(RunError::Config("loss parameters must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Sets `a.b.c = value` in `table`. The value is parsed as TOML, falling
/// back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), RunError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| RunError::Config(format!("override `{assignment}` is not key=value")))?;
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(RunError::Config(format!("bad override key `{key}`")));
    }
    let (last, path) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for part in path {
        let entry = cur.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| RunError::Config(format!("override `{key}`: `{part}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
corpus_path = "corpus.jsonl"
checkpoint_dir = "out"
mode = "interactive"
budget = 10

[ga]
population_size = 50
rng_seed = 7

[ga.operator_rates]
swap = 0.4
"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = RunConfig::from_toml(SAMPLE, &[]).unwrap();
        assert_eq!(cfg.mode, Mode::Interactive);
        assert_eq!(cfg.ga.population_size, 50);
        assert_eq!(cfg.ga.operator_rates.swap, 0.4);
        assert_eq!(cfg.ga.operator_rates.negate, 0.3);
        assert_eq!(cfg.ga.tournament_size, 3);
        assert_eq!(cfg.loss, LossParams::default());
        assert_eq!(cfg.tokens_per_fetch, 1);
        assert_eq!(cfg.http_listen_address, "127.0.0.1:7878");
        assert_eq!(cfg.generation_limit(), None);
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let o = ["ga.rng_seed=99", "loss.lambda_len = 0.5", "ga.operator_rates.crossover=0", "mode=batch", "oracle_query=a OR b"]
            .map(String::from);
        let cfg = RunConfig::from_toml(SAMPLE, &o).unwrap();
        assert_eq!(cfg.ga.rng_seed, 99);
        assert_eq!(cfg.loss.lambda_len, 0.5);
        assert_eq!(cfg.ga.operator_rates.crossover, 0.0);
        assert_eq!(cfg.mode, Mode::Batch);
        assert_eq!(cfg.oracle_query.as_deref(), Some("a OR b"));
        assert_eq!(cfg.generation_limit(), Some(DEFAULT_BATCH_GENERATIONS));
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(RunConfig::from_toml(SAMPLE, &["ga.populaton_size=3".into()]).is_err());
        assert!(RunConfig::from_toml(SAMPLE, &["nonsense".into()]).is_err());
        assert!(RunConfig::from_toml(SAMPLE, &["budget.x=1".into()]).is_err());
        assert!(RunConfig::from_toml("checkpoint_dir = 'x'", &[]).is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig::from_toml(SAMPLE, &[]).unwrap();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml(), &[]).unwrap(), cfg);
    }

    #[test]
    fn validate_checks_paths() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("corpus.jsonl"), "").unwrap();
        std::fs::write(dir.path().join("run.toml"), SAMPLE).unwrap();
        let cfg = RunConfig::load(&dir.path().join("run.toml"), &[]).unwrap();
        assert_eq!(cfg.corpus_path, dir.path().join("corpus.jsonl"));
        cfg.validate().unwrap();
        let missing = RunConfig { labels_path: Some(dir.path().join("nope.csv")), ..cfg };
        assert!(matches!(missing.validate(), Err(RunError::Config(m)) if m.contains("nope.csv")));
    }
}
