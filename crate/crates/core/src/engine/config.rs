use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};

use crate::error::{Error, Result};
use crate::ingest::parse_timestamp;
use crate::model::EmbeddingLayout;
use crate::pipeline::PipelineConfig;
use crate::stylerec::RecConfig;
use crate::vecindex::IndexConfig;

pub const ENV_PREFIX: &str = "ITOO_";

/// Everything the engine reads from the key-value config file.
#[derive(Clone, Debug, PartialEq)]
pub struct EngineConfig {
    pub data_dir: PathBuf,
    /// Fixed "now" for reproducible runs; the system clock when `None`.
    pub clock: Option<DateTime<Utc>>,
    pub layout: EmbeddingLayout,
    pub index: IndexConfig,
    pub rec: RecConfig,
    pub pipeline: PipelineConfig,
    pub plugin_seed: u64,
    /// Worker threads of the rebuild DAG.
    pub rebuild_workers: usize,
    /// Snapshot generations kept on disk.
    pub keep_snapshots: usize,
    pub serve_addr: String,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data"),
            clock: None,
            layout: EmbeddingLayout::default(),
            index: IndexConfig::default(),
            rec: RecConfig::default(),
            pipeline: PipelineConfig::default(),
            plugin_seed: 7,
            rebuild_workers: 2,
            keep_snapshots: 3,
            serve_addr: "127.0.0.1:8080".into(),
        }
    }
}

/// Keys accepted in the config file; `ITOO_<KEY>` with dots as underscores
/// overrides each of them.
pub const CONFIG_KEYS: &[&str] = &[
    "data_dir",
    "clock",
    "classifier_dim",
    "tagger_dim",
    "search_dim",
    "index.m",
    "index.ef_construction",
    "index.ef_search",
    "index.shards",
    "index.seed",
    "rec.lambda_o",
    "rec.lambda_u",
    "rec.lambda_cf",
    "rec.shrinkage",
    "rec.alpha",
    "rec.beta",
    "rec.history",
    "rec.mix.cfcbf",
    "rec.mix.weekly_best",
    "rec.mix.segment_best",
    "rec.eps_decay",
    "rec.view_weight",
    "rec.like_weight",
    "rec.neighbor_count",
    "rec.user_based_share",
    "rec.weekly_window_days",
    "rec.leaders.latent",
    "rec.leaders.graph",
    "rec.leaders.segment",
    "rec.leaders.popular",
    "rec.walks",
    "rec.walk_seed",
    "pipeline.workers",
    "pipeline.iou_threshold",
    "plugins.seed",
    "rebuild.workers",
    "snapshots.keep",
    "serve.addr",
];

pub fn env_var_name(key: &str) -> String {
    format!("{ENV_PREFIX}{}", key.replace('.', "_").to_uppercase())
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| Error::Config { key: key.into(), message: format!("'{value}': {e}") })
}

impl EngineConfig {
    /// Sets one key. Relative `data_dir` values resolve against `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let v = value.trim();
        let r = &mut self.rec;
        match key {
            "data_dir" => self.data_dir = base.join(v),
            "clock" => {
                self.clock = match v {
                    "" | "system" => None,
                    t => Some(parse_timestamp(t).map_err(|e| Error::Config { key: key.into(), message: e.to_string() })?),
                }
            }
            "classifier_dim" => self.layout.classifier_dim = num(key, v)?,
            "tagger_dim" => self.layout.tagger_dim = num(key, v)?,
            "search_dim" => {
                self.layout.search_dim = num(key, v)?;
                self.index.dim = self.layout.search_dim;
            }
            "index.m" => self.index.params.m = num(key, v)?,
            "index.ef_construction" => self.index.params.ef_construction = num(key, v)?,
            "index.ef_search" => self.index.params.ef_search = num(key, v)?,
            "index.shards" => self.index.shards = num(key, v)?,
            "index.seed" => self.index.params.seed = num(key, v)?,
            "rec.lambda_o" => r.lambda_o = num(key, v)?,
            "rec.lambda_u" => r.lambda_u = num(key, v)?,
            "rec.lambda_cf" => r.lambda_cf = num(key, v)?,
            "rec.shrinkage" => r.shrinkage = num(key, v)?,
            "rec.alpha" => r.alpha = num(key, v)?,
            "rec.beta" => r.beta = num(key, v)?,
            "rec.history" => r.history = num(key, v)?,
            "rec.mix.cfcbf" => r.mix.cfcbf = num(key, v)?,
            "rec.mix.weekly_best" => r.mix.weekly_best = num(key, v)?,
            "rec.mix.segment_best" => r.mix.segment_best = num(key, v)?,
            "rec.eps_decay" => r.eps_decay = num(key, v)?,
            "rec.view_weight" => r.view_weight = num(key, v)?,
            "rec.like_weight" => r.like_weight = num(key, v)?,
            "rec.neighbor_count" => r.neighbor_count = num(key, v)?,
            "rec.user_based_share" => r.user_based_share = num(key, v)?,
            "rec.weekly_window_days" => r.weekly_window_days = num(key, v)?,
            "rec.leaders.latent" => r.leader_mix.latent = num(key, v)?,
            "rec.leaders.graph" => r.leader_mix.graph = num(key, v)?,
            "rec.leaders.segment" => r.leader_mix.segment = num(key, v)?,
            "rec.leaders.popular" => r.leader_mix.popular = num(key, v)?,
            "rec.walks" => r.walks = num(key, v)?,
            "rec.walk_seed" => r.walk_seed = num(key, v)?,
            "pipeline.workers" => self.pipeline.workers = num(key, v)?,
            "pipeline.iou_threshold" => self.pipeline.postprocess.iou_threshold = num(key, v)?,
            "plugins.seed" => self.plugin_seed = num(key, v)?,
            "rebuild.workers" => self.rebuild_workers = num(key, v)?,
            "snapshots.keep" => self.keep_snapshots = num(key, v)?,
            "serve.addr" => self.serve_addr = v.to_string(),
            other => return Err(Error::Config { key: other.into(), message: "unknown key".into() }),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        let base = origin.parent().unwrap_or(Path::new("."));
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, i as u64 + 1, format!("expected 'key = value', found '{line}'")))?;
            self.set(k.trim(), v, base).map_err(|e| Error::parse(origin, i as u64 + 1, e.to_string()))?;
        }
        Ok(())
    }

    /// Applies `ITOO_*` overrides; an `ITOO_` variable matching no key is an error.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<()> {
        let cwd = PathBuf::from(".");
        for (name, value) in vars {
            if !name.starts_with(ENV_PREFIX) {
                continue;
            }
            let key = CONFIG_KEYS
                .iter()
                .find(|k| env_var_name(k) == name)
                .ok_or_else(|| Error::Config { key: name.clone(), message: "no config key matches this variable".into() })?;
            self.set(key, &value, &cwd)?;
        }
        Ok(())
    }

    /// Defaults, then the file (if any), then the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config { key: p.display().to_string(), message: e.to_string() })?;
            cfg.apply_text(&text, p)?;
        }
        cfg.apply_env(std::env::vars())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.rec.validate()?;
        let positive = |key: &str, v: usize| {
            if v == 0 {
                Err(Error::Config { key: key.into(), message: "must be positive".into() })
            } else {
                Ok(())
            }
        };
        positive("search_dim", self.layout.search_dim)?;
        positive("index.m", self.index.params.m)?;
        positive("index.ef_construction", self.index.params.ef_construction)?;
        positive("index.ef_search", self.index.params.ef_search)?;
        positive("index.shards", self.index.shards)?;
        positive("pipeline.workers", self.pipeline.workers)?;
        positive("rebuild.workers", self.rebuild_workers)?;
        positive("snapshots.keep", self.keep_snapshots)?;
        if self.index.dim != self.layout.search_dim {
            return Err(Error::Config {
                key: "search_dim".into(),
                message: format!("index dimension {} differs from search dimension {}", self.index.dim, self.layout.search_dim),
            });
        }
        let thr = self.pipeline.postprocess.iou_threshold;
        if !(0.0..1.0).contains(&thr) {
            return Err(Error::Config { key: "pipeline.iou_threshold".into(), message: format!("{thr} is outside [0, 1)") });
        }
        Ok(())
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.unwrap_or_else(Utc::now)
    }

    /// The file form of this config, readable by [`EngineConfig::apply_text`].
    pub fn to_text(&self) -> String {
        let r = &self.rec;
        let p = &self.index.params;
        let clock = self.clock.map(|c| crate::ingest::format_timestamp(&c)).unwrap_or_else(|| "system".into());
        let pairs: Vec<(&str, String)> = vec![
            ("data_dir", self.data_dir.display().to_string()),
            ("clock", clock),
            ("classifier_dim", self.layout.classifier_dim.to_string()),
            ("tagger_dim", self.layout.tagger_dim.to_string()),
            ("search_dim", self.layout.search_dim.to_string()),
            ("index.m", p.m.to_string()),
            ("index.ef_construction", p.ef_construction.to_string()),
            ("index.ef_search", p.ef_search.to_string()),
            ("index.shards", self.index.shards.to_string()),
            ("index.seed", p.seed.to_string()),
            ("rec.lambda_o", r.lambda_o.to_string()),
            ("rec.lambda_u", r.lambda_u.to_string()),
            ("rec.lambda_cf", r.lambda_cf.to_string()),
            ("rec.shrinkage", r.shrinkage.to_string()),
            ("rec.alpha", r.alpha.to_string()),
            ("rec.beta", r.beta.to_string()),
            ("rec.history", r.history.to_string()),
            ("rec.mix.cfcbf", r.mix.cfcbf.to_string()),
            ("rec.mix.weekly_best", r.mix.weekly_best.to_string()),
            ("rec.mix.segment_best", r.mix.segment_best.to_string()),
            ("rec.eps_decay", r.eps_decay.to_string()),
            ("rec.view_weight", r.view_weight.to_string()),
            ("rec.like_weight", r.like_weight.to_string()),
            ("rec.neighbor_count", r.neighbor_count.to_string()),
            ("rec.user_based_share", r.user_based_share.to_string()),
            ("rec.weekly_window_days", r.weekly_window_days.to_string()),
            ("rec.leaders.latent", r.leader_mix.latent.to_string()),
            ("rec.leaders.graph", r.leader_mix.graph.to_string()),
            ("rec.leaders.segment", r.leader_mix.segment.to_string()),
            ("rec.leaders.popular", r.leader_mix.popular.to_string()),
            ("rec.walks", r.walks.to_string()),
            ("rec.walk_seed", r.walk_seed.to_string()),
            ("pipeline.workers", self.pipeline.workers.to_string()),
            ("pipeline.iou_threshold", self.pipeline.postprocess.iou_threshold.to_string()),
            ("plugins.seed", self.plugin_seed.to_string()),
            ("rebuild.workers", self.rebuild_workers.to_string()),
            ("snapshots.keep", self.keep_snapshots.to_string()),
            ("serve.addr", self.serve_addr.clone()),
        ];
        pairs.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
