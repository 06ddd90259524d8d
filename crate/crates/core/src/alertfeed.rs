//! Alert records for downstream feeds.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::detectors::{baseline_stats, AlarmSeries, Model};
use crate::event_model::{CountSeries, Language};

/// One alarming day, with the numbers an analyst needs to judge it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertRecord {
    pub day: NaiveDate,
    pub disease: String,
    pub country: String,
    #[serde(default)]
    pub province: Option<String>,
    pub model: Model,
    pub statistic: f64,
    pub threshold: f64,
    pub baseline_mu: f64,
    pub baseline_sigma: f64,
    pub day_count: u32,
    pub contributing_languages: BTreeSet<Language>,
    #[serde(default)]
    pub source_refs: Option<Vec<String>>,
    #[serde(default)]
    pub focus_species: Option<String>,
}

/// Builds one record per alarm day of `alarms`.
///
/// `series` is the detector input. `per_language` holds the single-language
/// series that were summed into it; a language contributes to an alert when
/// its own count on that day is nonzero. When `per_language` is empty the
/// aggregate's language set is used for every day with a nonzero count.
pub fn emit_alerts(
    alarms: &AlarmSeries,
    series: &CountSeries,
    per_language: &[CountSeries],
) -> Vec<AlertRecord> {
    let cfg = &alarms.config;
    alarms
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.alarm)
        .filter_map(|(t, r)| {
            let statistic = r.statistic?;
            let base = baseline_stats(series, t, cfg).ok()?;
            let contributing_languages = if per_language.is_empty() {
                if r.count > 0 {
                    series.languages.clone()
                } else {
                    BTreeSet::new()
                }
            } else {
                per_language
                    .iter()
                    .filter(|s| s.count_on(r.day).unwrap_or(0) > 0)
                    .flat_map(|s| s.languages.iter().copied())
                    .collect()
            };
            Some(AlertRecord {
                day: r.day,
                disease: alarms.topic.disease.clone(),
                country: alarms.topic.country.clone(),
                province: None,
                model: cfg.model,
                statistic,
                threshold: cfg.threshold,
                baseline_mu: base.mu,
                baseline_sigma: base.sigma,
                day_count: r.count,
                contributing_languages,
                source_refs: None,
                focus_species: None,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedFormat {
    Ndjson,
    Atom,
}

fn sorted(records: &[AlertRecord]) -> Vec<&AlertRecord> {
    let mut v: Vec<&AlertRecord> = records.iter().collect();
    v.sort_by(|a, b| {
        (a.day, &a.disease, &a.country, a.model).cmp(&(b.day, &b.disease, &b.country, b.model))
    });
    v
}

/// Renders records ordered by (day, disease, country, model). Output depends
/// only on the record list.
pub fn render_feed(records: &[AlertRecord], format: FeedFormat) -> String {
    let records = sorted(records);
    match format {
        FeedFormat::Ndjson => records
            .iter()
            .map(|r| serde_json::to_string(r).expect("alert record serialises") + "\n")
            .collect(),
        FeedFormat::Atom => render_atom(&records),
    }
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

fn render_atom(records: &[&AlertRecord]) -> String {
    let updated = records
        .iter()
        .map(|r| r.day)
        .max()
        .map_or_else(|| "1970-01-01".to_string(), |d| d.to_string());
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"utf-8\"?>\n");
    out.push_str("<feed xmlns=\"http://www.w3.org/2005/Atom\">\n");
    out.push_str("  <title>Outbreak alerts</title>\n");
    out.push_str("  <id>urn:xlalert:alerts</id>\n");
    let _ = writeln!(out, "  <updated>{updated}T00:00:00Z</updated>");
    for r in records {
        let disease = xml_escape(&r.disease);
        let country = xml_escape(&r.country);
        let langs: Vec<&str> = r.contributing_languages.iter().map(|l| l.code()).collect();
        out.push_str("  <entry>\n");
        let _ = writeln!(
            out,
            "    <id>urn:xlalert:alert:{}:{}:{}:{}</id>",
            r.day, disease, country, r.model
        );
        let _ = writeln!(
            out,
            "    <title>{} alert: {} in {}</title>",
            r.model, disease, country
        );
        let _ = writeln!(out, "    <updated>{}T00:00:00Z</updated>", r.day);
        let _ = writeln!(
            out,
            "    <summary>statistic {:.4} (threshold {}); count {}; baseline mean {:.4}, sd {:.4}; languages {}</summary>",
            r.statistic,
            r.threshold,
            r.day_count,
            r.baseline_mu,
            r.baseline_sigma,
            langs.join(",")
        );
        out.push_str("  </entry>\n");
    }
    out.push_str("</feed>\n");
    out
}

pub fn parse_feed_ndjson(input: &str) -> Result<Vec<AlertRecord>, serde_json::Error> {
    input
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
