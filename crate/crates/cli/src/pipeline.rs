//! Ingestion, detection, evaluation, tuning and synthesis as callable steps.
//! The binary is a thin argument layer over these.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use xlalert_core::evaluation::{parse_silver_csv, render_table};
use xlalert_core::event_model::topics_of;
use xlalert_core::{
    aggregate_languages, bucket_counts, emit_alerts, evaluate_alarms, generate, grid_search,
    parse_event_frames, purge_singletons, render_feed, AlarmSeries, AlertRecord, CountSeries,
    DayRange, DetectorConfig, EvalResult, EventFrame, FeedFormat, SilverReport, Stream, SynthSpec,
    TopicKey, TuneOutcome,
};

use crate::manifest::{RunManifest, Stratum};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self.kind {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn usage(e: impl Into<anyhow::Error>) -> CliError {
    CliError {
        kind: ErrorKind::Usage,
        error: e.into(),
    }
}

pub fn data(e: impl Into<anyhow::Error>) -> CliError {
    CliError {
        kind: ErrorKind::Data,
        error: e.into(),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(data)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))
            .map_err(data)?;
    }
    fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(data)
}

/// Reads event frames; any malformed line fails the load with its location.
pub fn load_frames(manifest: &RunManifest) -> Result<Vec<EventFrame>> {
    let path = manifest
        .events
        .as_ref()
        .ok_or_else(|| usage(anyhow!("no events file given")))?;
    let parsed = parse_event_frames(&read(path)?, manifest.events_format());
    if let Some(first) = parsed.errors.first() {
        let mut msg = format!("{}:{}: {}", path.display(), first.line, first.message);
        if parsed.errors.len() > 1 {
            msg.push_str(&format!(" (and {} more bad lines)", parsed.errors.len() - 1));
        }
        return Err(data(anyhow!(msg)));
    }
    Ok(parsed.frames)
}

pub fn load_silver(path: &Path) -> Result<Vec<SilverReport>> {
    parse_silver_csv(&read(path)?)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(data)
}

/// One topic's inputs within a stratum.
#[derive(Debug, Clone)]
pub struct TopicInput {
    pub per_language: Vec<CountSeries>,
    /// Aggregated (and, if configured, purged) series fed to the detectors.
    pub series: CountSeries,
}

#[derive(Debug, Clone)]
pub struct PreparedStratum {
    pub name: String,
    pub topics: Vec<TopicInput>,
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub range: Option<DayRange>,
    pub strata: Vec<PreparedStratum>,
}

fn surveillance_range(manifest: &RunManifest, frames: &[EventFrame]) -> Result<Option<DayRange>> {
    let lo = frames.iter().map(|f| f.observed_day).min();
    let hi = frames.iter().map(|f| f.observed_day).max();
    let (Some(start), Some(end)) = (manifest.start.or(lo), manifest.end.or(hi)) else {
        return Ok(None);
    };
    DayRange::new(start, end)
        .map(Some)
        .ok_or_else(|| usage(anyhow!("date range is empty: {start} .. {end}")))
}

/// Buckets frames per stratum, topic and language, then aggregates.
pub fn prepare(manifest: &RunManifest, frames: &[EventFrame]) -> Result<Prepared> {
    let range = surveillance_range(manifest, frames)?;
    let topics: Vec<TopicKey> = if manifest.topics.is_empty() {
        topics_of(frames).into_iter().collect()
    } else {
        manifest.topic_keys().map_err(usage)?
    };
    let strata = manifest
        .strata
        .iter()
        .map(|stratum| PreparedStratum {
            name: stratum.name.clone(),
            topics: match range {
                Some(range) => topics
                    .iter()
                    .map(|t| topic_input(frames, t, stratum, range, manifest.purge_singletons))
                    .collect(),
                None => Vec::new(),
            },
        })
        .collect();
    Ok(Prepared { range, strata })
}

fn topic_input(
    frames: &[EventFrame],
    topic: &TopicKey,
    stratum: &Stratum,
    range: DayRange,
    purge: bool,
) -> TopicInput {
    let per_language: Vec<CountSeries> = stratum
        .languages
        .iter()
        .map(|l| bucket_counts(frames, topic, &[*l].into(), range))
        .collect();
    let agg = aggregate_languages(&per_language).expect("same topic and range");
    let series = if purge { purge_singletons(&agg) } else { agg };
    TopicInput {
        per_language,
        series,
    }
}

type ScoredStream = (AlarmSeries, Vec<SilverReport>);

/// One line of the alarms NDJSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlarmLine {
    pub stratum: String,
    pub alarms: AlarmSeries,
}

#[derive(Debug, Clone, Default)]
pub struct DetectOutput {
    pub alarms: Vec<AlarmLine>,
    /// Alert records per stratum, in stratum order.
    pub alerts: Vec<(String, Vec<AlertRecord>)>,
}

/// Runs every detector over every topic of every stratum. Jobs run in
/// parallel; results keep (stratum, topic, detector) order.
pub fn detect(prepared: &Prepared, detectors: &[DetectorConfig]) -> Result<DetectOutput> {
    let jobs: Vec<(usize, &TopicInput, &DetectorConfig)> = prepared
        .strata
        .iter()
        .enumerate()
        .flat_map(|(si, s)| {
            s.topics
                .iter()
                .flat_map(move |t| detectors.iter().map(move |d| (si, t, d)))
        })
        .collect();
    let results: Vec<(usize, AlarmSeries, Vec<AlertRecord>)> = jobs
        .par_iter()
        .map(|&(si, input, cfg)| {
            let alarms = xlalert_core::run_detector(&input.series, cfg)
                .with_context(|| format!("running {} on {}", cfg.model, input.series.topic))
                .map_err(data)?;
            let alerts = emit_alerts(&alarms, &input.series, &input.per_language);
            Ok((si, alarms, alerts))
        })
        .collect::<Result<_>>()?;

    let mut out = DetectOutput {
        alerts: prepared
            .strata
            .iter()
            .map(|s| (s.name.clone(), Vec::new()))
            .collect(),
        ..Default::default()
    };
    for (si, alarms, alerts) in results {
        out.alerts[si].1.extend(alerts);
        out.alarms.push(AlarmLine {
            stratum: prepared.strata[si].name.clone(),
            alarms,
        });
    }
    Ok(out)
}

pub fn alarms_ndjson(lines: &[AlarmLine]) -> String {
    lines
        .iter()
        .map(|l| serde_json::to_string(l).expect("alarm line serialises") + "\n")
        .collect()
}

pub fn parse_alarms_ndjson(text: &str, origin: &Path) -> Result<Vec<AlarmLine>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .with_context(|| format!("{}:{}", origin.display(), i + 1))
                .map_err(data)
        })
        .collect()
}

fn feed_path(dir: &Path, stratum: &str, ext: &str) -> PathBuf {
    dir.join(format!("alerts_{stratum}.{ext}"))
}

pub fn write_detect(out_dir: &Path, out: &DetectOutput) -> Result<Vec<PathBuf>> {
    let mut written = vec![out_dir.join("alarms.ndjson")];
    write(&written[0], &alarms_ndjson(&out.alarms))?;
    for (stratum, records) in &out.alerts {
        let nd = feed_path(out_dir, stratum, "ndjson");
        let atom = feed_path(out_dir, stratum, "atom");
        write(&nd, &render_feed(records, FeedFormat::Ndjson))?;
        write(&atom, &render_feed(records, FeedFormat::Atom))?;
        written.extend([nd, atom]);
    }
    Ok(written)
}

pub fn cmd_detect(manifest: &RunManifest) -> Result<Vec<PathBuf>> {
    manifest.validate().map_err(usage)?;
    let frames = load_frames(manifest)?;
    let prepared = prepare(manifest, &frames)?;
    let out = detect(&prepared, &manifest.detectors)?;
    write_detect(&manifest.out_dir, &out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub stratum: String,
    pub label: String,
    pub result: EvalResult,
}

#[derive(Debug, Clone, Default)]
pub struct Evaluation {
    pub rows: Vec<MetricsRow>,
    pub warnings: Vec<String>,
}

/// Pairs each alarm series with the silver reports for its topic and pools
/// them per (stratum, detector config). Silver topics with no alarm stream
/// and reports outside the surveillance range are dropped with a warning.
pub fn evaluate(lines: &[AlarmLine], reports: &[SilverReport]) -> Result<Evaluation> {
    let mut warnings = Vec::new();
    let stream_topics: BTreeSet<&TopicKey> = lines.iter().map(|l| &l.alarms.topic).collect();
    let mut by_topic: BTreeMap<&TopicKey, Vec<SilverReport>> = BTreeMap::new();
    for r in reports {
        if stream_topics.contains(&r.topic) {
            by_topic.entry(&r.topic).or_default().push(r.clone());
        }
    }
    let orphans: BTreeSet<&TopicKey> = reports
        .iter()
        .map(|r| &r.topic)
        .filter(|t| !stream_topics.contains(t))
        .collect();
    for t in orphans {
        warnings.push(format!("silver topic {t} has no event stream; skipped"));
    }

    // group by (stratum, config) in first-appearance order
    let mut groups: Vec<(String, DetectorConfig, Vec<ScoredStream>)> =
        Vec::new();
    for line in lines {
        let Some(range) = line.alarms.range() else {
            continue;
        };
        let mut mine = by_topic.get(&line.alarms.topic).cloned().unwrap_or_default();
        mine.retain(|r| {
            let ok = range.contains(r.report_day);
            if !ok {
                let w = format!(
                    "silver report {} on {} lies outside {}..{}; skipped",
                    r.topic, r.report_day, range.start, range.end
                );
                if !warnings.contains(&w) {
                    warnings.push(w);
                }
            }
            ok
        });
        let pos = groups
            .iter()
            .position(|(s, c, _)| *s == line.stratum && *c == line.alarms.config);
        let pair = (line.alarms.clone(), mine);
        match pos {
            Some(i) => groups[i].2.push(pair),
            None => groups.push((line.stratum.clone(), line.alarms.config.clone(), vec![pair])),
        }
    }

    let labels = row_labels(&groups.iter().map(|(s, c, _)| (s, c)).collect::<Vec<_>>());
    let rows = groups
        .into_iter()
        .zip(labels)
        .map(|((stratum, _, runs), label)| {
            let result = evaluate_alarms(&runs).map_err(data)?;
            Ok(MetricsRow {
                stratum,
                label,
                result,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Evaluation { rows, warnings })
}

/// Model name, with the threshold appended when a stratum holds several
/// configs of the same model, and an index if that still collides.
fn row_labels(groups: &[(&String, &DetectorConfig)]) -> Vec<String> {
    let same_model = |s: &String, c: &DetectorConfig| {
        groups
            .iter()
            .filter(|(s2, c2)| *s2 == s && c2.model == c.model)
            .count()
    };
    let mut labels: Vec<String> = groups
        .iter()
        .map(|(s, c)| {
            if same_model(s, c) > 1 {
                format!("{} t={}", c.model, c.threshold)
            } else {
                c.model.to_string()
            }
        })
        .collect();
    for i in 0..labels.len() {
        let dupes = (0..i)
            .filter(|&j| groups[j].0 == groups[i].0 && labels[j] == labels[i])
            .count();
        if dupes > 0 {
            labels[i] = format!("{} #{}", labels[i], dupes + 1);
        }
    }
    labels
}

pub fn metrics_json(rows: &[MetricsRow]) -> String {
    serde_json::to_string_pretty(rows).expect("rows serialise") + "\n"
}

/// One table per stratum.
pub fn metrics_text(rows: &[MetricsRow]) -> String {
    let mut strata: Vec<&str> = Vec::new();
    for r in rows {
        if !strata.contains(&r.stratum.as_str()) {
            strata.push(&r.stratum);
        }
    }
    let mut out = String::new();
    for (i, s) in strata.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!("[{s}]\n"));
        let table: Vec<(String, EvalResult)> = rows
            .iter()
            .filter(|r| r.stratum == *s)
            .map(|r| (r.label.clone(), r.result.clone()))
            .collect();
        out.push_str(&render_table(&table));
    }
    out
}

pub struct EvaluateOutput {
    pub evaluation: Evaluation,
    pub written: Vec<PathBuf>,
}

/// Evaluates alarms read from `manifest.alarms` when set, otherwise runs
/// detection on the events first.
pub fn cmd_evaluate(manifest: &RunManifest) -> Result<EvaluateOutput> {
    manifest.validate().map_err(usage)?;
    let silver = manifest
        .silver
        .as_ref()
        .ok_or_else(|| usage(anyhow!("no silver file given")))?;
    let reports = load_silver(silver)?;
    let lines = match &manifest.alarms {
        Some(path) => parse_alarms_ndjson(&read(path)?, path)?,
        None => {
            let frames = load_frames(manifest)?;
            detect(&prepare(manifest, &frames)?, &manifest.detectors)?.alarms
        }
    };
    let evaluation = evaluate(&lines, &reports)?;
    let json = manifest.out_dir.join("metrics.json");
    let text = manifest.out_dir.join("metrics.txt");
    write(&json, &metrics_json(&evaluation.rows))?;
    write(&text, &metrics_text(&evaluation.rows))?;
    Ok(EvaluateOutput {
        evaluation,
        written: vec![json, text],
    })
}

/// Held-out streams for tuning: the detector inputs of one stratum paired with
/// their in-range silver reports.
pub fn held_out_streams(
    prepared: &Prepared,
    stratum: Option<&str>,
    reports: &[SilverReport],
) -> Result<Vec<Stream>> {
    let s = match stratum {
        Some(name) => prepared
            .strata
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| usage(anyhow!("no stratum named {name:?}")))?,
        None => prepared
            .strata
            .first()
            .ok_or_else(|| usage(anyhow!("no strata")))?,
    };
    Ok(s.topics
        .iter()
        .map(|t| {
            let range = t.series.range();
            Stream {
                series: t.series.clone(),
                reports: reports
                    .iter()
                    .filter(|r| {
                        r.topic == t.series.topic
                            && range.is_some_and(|g| g.contains(r.report_day))
                    })
                    .cloned()
                    .collect(),
            }
        })
        .collect())
}

pub struct TuneOutput {
    pub outcome: TuneOutcome,
    pub written: Vec<PathBuf>,
}

pub fn cmd_tune(manifest: &RunManifest) -> Result<TuneOutput> {
    manifest.validate().map_err(usage)?;
    let grid = manifest.tune_grid().map_err(usage)?;
    let silver = manifest
        .silver
        .as_ref()
        .ok_or_else(|| usage(anyhow!("no silver file given")))?;
    let reports = load_silver(silver)?;
    let frames = load_frames(manifest)?;
    let prepared = prepare(manifest, &frames)?;
    let stratum = manifest.tune.as_ref().and_then(|t| t.stratum.as_deref());
    let streams = held_out_streams(&prepared, stratum, &reports)?;
    let base = manifest
        .detectors
        .iter()
        .find(|d| d.model == grid.model)
        .cloned()
        .unwrap_or_else(|| DetectorConfig::new(grid.model));
    let outcome = grid_search(&streams, &grid, &base).map_err(data)?;
    let cfg_path = manifest.out_dir.join("tuned.toml");
    let report_path = manifest.out_dir.join("tuning.json");
    let cfg_text = toml::to_string(&outcome.config)
        .context("serialising tuned config")
        .map_err(data)?;
    write(&cfg_path, &cfg_text)?;
    write(
        &report_path,
        &(serde_json::to_string_pretty(&outcome).expect("outcome serialises") + "\n"),
    )?;
    Ok(TuneOutput {
        outcome,
        written: vec![cfg_path, report_path],
    })
}

pub fn cmd_synth(spec: &SynthSpec, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let out = generate(spec).map_err(usage)?;
    let events = out_dir.join("events.ndjson");
    let silver = out_dir.join("silver.csv");
    let truth = out_dir.join("outbreaks.json");
    write(&events, &out.events_ndjson())?;
    write(&silver, &out.silver_csv())?;
    write(
        &truth,
        &(serde_json::to_string_pretty(&out.outbreaks).expect("outbreaks serialise") + "\n"),
    )?;
    Ok(vec![events, silver, truth])
}

#[cfg(test)]
mod tests {
    use super::*;
    use xlalert_core::{DetectorConfig, Language, Model};

    fn cfg(model: Model, t: f64) -> DetectorConfig {
        DetectorConfig::new(model).with_threshold(t)
    }

    #[test]
    fn labels_disambiguate() {
        let all = "all".to_string();
        let en = "en".to_string();
        let c1 = cfg(Model::C2, 0.2);
        let c2 = cfg(Model::C2, 0.5);
        let e1 = cfg(Model::Ewma, 2.0);
        let e2 = cfg(Model::Ewma, 2.0).with_lambda(0.5);
        let groups = vec![(&all, &c1), (&all, &c2), (&all, &e1), (&all, &e2), (&en, &c1)];
        assert_eq!(
            row_labels(&groups),
            vec!["C2 t=0.2", "C2 t=0.5", "EWMA t=2", "EWMA t=2 #2", "C2"]
        );
    }

    #[test]
    fn prepare_with_no_events_has_no_topics() {
        let m = RunManifest::default();
        let p = prepare(&m, &[]).unwrap();
        assert!(p.range.is_none());
        assert!(p.strata.iter().all(|s| s.topics.is_empty()));
        let out = detect(&p, &m.detectors).unwrap();
        assert!(out.alarms.is_empty());
    }

    #[test]
    fn purge_runs_after_aggregation() {
        let day = chrono::NaiveDate::from_ymd_opt(2010, 1, 1).unwrap();
        let frames: Vec<EventFrame> = [Language::En, Language::Es]
            .into_iter()
            .map(|l| EventFrame {
                topic: TopicKey::new("cholera", "ao"),
                province: None,
                language: l,
                observed_day: day,
            })
            .collect();
        let m = RunManifest {
            end: Some(day + chrono::Days::new(11)),
            ..Default::default()
        };
        let p = prepare(&m, &frames).unwrap();
        let t = &p.strata[0].topics[0];
        // one event per language survives as a 2 in the aggregate
        assert_eq!(t.series.counts[0], 2);
        assert_eq!(t.per_language.len(), 13);
    }
}
