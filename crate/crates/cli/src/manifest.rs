//! The run manifest: a TOML document naming inputs, strata, detectors and
//! outputs. Relative paths resolve against the manifest's directory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use xlalert_core::{DetectorConfig, InputFormat, Language, Model, TopicKey, TuneGrid};

/// A named language filter. Each stratum yields its own alarms and report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stratum {
    pub name: String,
    pub languages: BTreeSet<Language>,
}

impl Stratum {
    pub fn all_languages() -> Self {
        Self {
            name: "all".into(),
            languages: Language::all(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneSection {
    pub model: Model,
    #[serde(default)]
    pub thresholds: Option<Vec<f64>>,
    #[serde(default)]
    pub lambdas: Option<Vec<f64>>,
    /// Stratum whose streams serve as held-out data; defaults to the first.
    #[serde(default)]
    pub stratum: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    #[serde(default)]
    pub events: Option<PathBuf>,
    #[serde(default)]
    pub events_format: Option<InputFormat>,
    #[serde(default)]
    pub silver: Option<PathBuf>,
    #[serde(default)]
    pub alarms: Option<PathBuf>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub start: Option<NaiveDate>,
    #[serde(default)]
    pub end: Option<NaiveDate>,
    /// `disease/country` keys; empty means every topic found in the events.
    #[serde(default)]
    pub topics: Vec<String>,
    #[serde(default = "default_true")]
    pub purge_singletons: bool,
    #[serde(default = "default_strata")]
    pub strata: Vec<Stratum>,
    #[serde(default = "default_detectors")]
    pub detectors: Vec<DetectorConfig>,
    #[serde(default)]
    pub tune: Option<TuneSection>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_true() -> bool {
    true
}

fn default_strata() -> Vec<Stratum> {
    vec![Stratum::all_languages()]
}

/// Every model at its default threshold.
pub fn default_detectors() -> Vec<DetectorConfig> {
    Model::ALL.into_iter().map(DetectorConfig::new).collect()
}

impl Default for RunManifest {
    fn default() -> Self {
        Self {
            events: None,
            events_format: None,
            silver: None,
            alarms: None,
            out_dir: default_out_dir(),
            start: None,
            end: None,
            topics: Vec::new(),
            purge_singletons: true,
            strata: default_strata(),
            detectors: default_detectors(),
            tune: None,
        }
    }
}

impl RunManifest {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        let mut m: RunManifest =
            toml::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        m.resolve_paths(base);
        Ok(m)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.events.as_mut().map(fix);
        self.silver.as_mut().map(fix);
        self.alarms.as_mut().map(fix);
        fix(&mut self.out_dir);
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if let (Some(s), Some(e)) = (self.start, self.end) {
            if e < s {
                bail!("date range is empty: end {e} precedes start {s}");
            }
        }
        if self.detectors.is_empty() {
            bail!("manifest lists no detector configs");
        }
        if self.strata.is_empty() {
            bail!("manifest lists no strata");
        }
        let mut names = BTreeSet::new();
        for s in &self.strata {
            if s.languages.is_empty() {
                bail!("stratum {:?} has no languages", s.name);
            }
            if !names.insert(&s.name) {
                bail!("duplicate stratum name {:?}", s.name);
            }
        }
        for d in &self.detectors {
            d.validate()?;
        }
        self.topic_keys()?;
        Ok(())
    }

    pub fn topic_keys(&self) -> anyhow::Result<Vec<TopicKey>> {
        self.topics
            .iter()
            .map(|t| match t.split_once('/') {
                Some((d, c)) if !d.trim().is_empty() && !c.trim().is_empty() => {
                    Ok(TopicKey::new(d, c))
                }
                _ => bail!("topic {t:?} is not of the form disease/country"),
            })
            .collect()
    }

    pub fn events_format(&self) -> InputFormat {
        self.events_format.unwrap_or_else(|| {
            match self
                .events
                .as_ref()
                .and_then(|p| p.extension())
                .and_then(|e| e.to_str())
            {
                Some(ext) if ext.eq_ignore_ascii_case("csv") => InputFormat::Csv,
                _ => InputFormat::Ndjson,
            }
        })
    }

    pub fn tune_grid(&self) -> anyhow::Result<TuneGrid> {
        let Some(t) = &self.tune else {
            bail!("manifest has no [tune] section and no --model was given");
        };
        let default = TuneGrid::default_for(t.model);
        let grid = TuneGrid::new(
            t.model,
            t.thresholds.clone().unwrap_or(default.thresholds),
            t.lambdas.clone().or(default.lambdas),
        )?;
        Ok(grid)
    }
}
