//! Event frames and the per-topic daily count series built from them.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Days, NaiveDate, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The source languages of the news stream (ISO-639-1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Ar,
    Zh,
    Nl,
    En,
    Fr,
    De,
    It,
    Ko,
    Pt,
    Ru,
    Es,
    Vi,
    Th,
}

impl Language {
    pub const ALL: [Language; 13] = [
        Language::Ar,
        Language::Zh,
        Language::Nl,
        Language::En,
        Language::Fr,
        Language::De,
        Language::It,
        Language::Ko,
        Language::Pt,
        Language::Ru,
        Language::Es,
        Language::Vi,
        Language::Th,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Language::Ar => "ar",
            Language::Zh => "zh",
            Language::Nl => "nl",
            Language::En => "en",
            Language::Fr => "fr",
            Language::De => "de",
            Language::It => "it",
            Language::Ko => "ko",
            Language::Pt => "pt",
            Language::Ru => "ru",
            Language::Es => "es",
            Language::Vi => "vi",
            Language::Th => "th",
        }
    }

    pub fn all() -> BTreeSet<Language> {
        Self::ALL.into_iter().collect()
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Language {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let folded = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|l| l.code() == folded)
            .ok_or_else(|| format!("unknown language code {s:?}"))
    }
}

/// A disease-country topic. Both keys are case-folded on construction.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TopicKey {
    pub disease: String,
    pub country: String,
}

impl TopicKey {
    pub fn new(disease: &str, country: &str) -> Self {
        Self {
            disease: fold_key(disease),
            country: fold_key(country),
        }
    }
}

impl fmt::Display for TopicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.disease, self.country)
    }
}

fn fold_key(s: &str) -> String {
    s.trim().to_lowercase()
}

/// An inclusive range of calendar days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DayRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DayRange {
    /// Returns `None` when `end` precedes `start`.
    pub fn new(start: NaiveDate, end: NaiveDate) -> Option<Self> {
        (start <= end).then_some(Self { start, end })
    }

    pub fn from_len(start: NaiveDate, days: usize) -> Option<Self> {
        if days == 0 {
            return None;
        }
        let end = start.checked_add_days(Days::new(days as u64 - 1))?;
        Some(Self { start, end })
    }

    pub fn len(&self) -> usize {
        (self.end - self.start).num_days() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, day: NaiveDate) -> bool {
        self.start <= day && day <= self.end
    }

    /// 0-based offset of `day` from the start of the range.
    pub fn index_of(&self, day: NaiveDate) -> Option<usize> {
        self.contains(day)
            .then(|| (day - self.start).num_days() as usize)
    }

    pub fn day(&self, index: usize) -> NaiveDate {
        self.start + Days::new(index as u64)
    }

    pub fn days(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        (0..self.len()).map(|i| self.day(i))
    }
}

/// One text-mined event, reduced to its topic, language and UTC day.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventFrame {
    pub topic: TopicKey,
    pub province: Option<String>,
    pub language: Language,
    pub observed_day: NaiveDate,
}

/// The on-the-wire NDJSON shape of an event frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireFrame {
    pub disease: String,
    pub country: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub province: Option<String>,
    pub language: String,
    pub timestamp: String,
}

impl TryFrom<WireFrame> for EventFrame {
    type Error = String;

    fn try_from(w: WireFrame) -> Result<Self, Self::Error> {
        if w.disease.trim().is_empty() {
            return Err("empty disease".into());
        }
        if w.country.trim().is_empty() {
            return Err("empty country".into());
        }
        let language = w.language.parse()?;
        let observed_day = parse_day(&w.timestamp)?;
        let province = w
            .province
            .map(|p| p.trim().to_string())
            .filter(|p| !p.is_empty());
        Ok(EventFrame {
            topic: TopicKey::new(&w.disease, &w.country),
            province,
            language,
            observed_day,
        })
    }
}

/// Truncates an ISO-8601 timestamp to its UTC calendar day. Timestamps
/// without an offset are taken as UTC; a bare date is accepted as-is.
pub fn parse_day(ts: &str) -> Result<NaiveDate, String> {
    let ts = ts.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(ts) {
        return Ok(dt.with_timezone(&Utc).date_naive());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(ts, fmt) {
            return Ok(dt.date());
        }
    }
    NaiveDate::parse_from_str(ts, "%Y-%m-%d").map_err(|_| format!("invalid timestamp {ts:?}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Ndjson,
    Csv,
}

/// A recoverable per-line ingestion failure.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct LineError {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedFrames {
    pub frames: Vec<EventFrame>,
    pub errors: Vec<LineError>,
}

/// Parses event frames from NDJSON or CSV text. Bad lines are collected into
/// `errors` and parsing continues with the next line.
///
/// CSV columns are fixed as `disease,country,province,language,timestamp`; a
/// first row whose first cell is the literal `disease` is treated as a header.
pub fn parse_event_frames(input: &str, format: InputFormat) -> ParsedFrames {
    match format {
        InputFormat::Ndjson => parse_ndjson(input),
        InputFormat::Csv => parse_csv(input),
    }
}

fn parse_ndjson(input: &str) -> ParsedFrames {
    let mut out = ParsedFrames::default();
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<WireFrame>(line)
            .map_err(|e| e.to_string())
            .and_then(EventFrame::try_from);
        match parsed {
            Ok(frame) => out.frames.push(frame),
            Err(message) => out.errors.push(LineError {
                line: line_no,
                message,
            }),
        }
    }
    out
}

fn parse_csv(input: &str) -> ParsedFrames {
    let mut out = ParsedFrames::default();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input.as_bytes());
    let mut first = true;
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                out.errors.push(LineError {
                    line,
                    message: e.to_string(),
                });
                first = false;
                continue;
            }
        };
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if std::mem::take(&mut first) && record.get(0) == Some("disease") {
            continue;
        }
        if record.len() != 5 {
            out.errors.push(LineError {
                line,
                message: format!("expected 5 columns, found {}", record.len()),
            });
            continue;
        }
        let wire = WireFrame {
            disease: record[0].to_string(),
            country: record[1].to_string(),
            province: Some(record[2].to_string()),
            language: record[3].to_string(),
            timestamp: record[4].to_string(),
        };
        match EventFrame::try_from(wire) {
            Ok(frame) => out.frames.push(frame),
            Err(message) => out.errors.push(LineError { line, message }),
        }
    }
    out
}

/// Distinct topics present in a frame list, in sorted order.
pub fn topics_of(frames: &[EventFrame]) -> BTreeSet<TopicKey> {
    frames.iter().map(|f| f.topic.clone()).collect()
}

/// Calendar-day event counts for one topic. Missing days are explicit zeros.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountSeries {
    pub topic: TopicKey,
    pub start_day: NaiveDate,
    pub counts: Vec<u32>,
    pub languages: BTreeSet<Language>,
}

impl CountSeries {
    pub fn new(
        topic: TopicKey,
        start_day: NaiveDate,
        counts: Vec<u32>,
        languages: BTreeSet<Language>,
    ) -> Self {
        Self {
            topic,
            start_day,
            counts,
            languages,
        }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// The covered day range; `None` for an empty series.
    pub fn range(&self) -> Option<DayRange> {
        DayRange::from_len(self.start_day, self.counts.len())
    }

    pub fn day(&self, index: usize) -> NaiveDate {
        self.start_day + Days::new(index as u64)
    }

    pub fn count_on(&self, day: NaiveDate) -> Option<u32> {
        let offset = (day - self.start_day).num_days();
        usize::try_from(offset)
            .ok()
            .and_then(|i| self.counts.get(i).copied())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SeriesError {
    #[error("no series to aggregate")]
    Empty,
    #[error("topic mismatch: {0} vs {1}")]
    TopicMismatch(TopicKey, TopicKey),
    #[error("range mismatch for {topic}: series do not share start day and length")]
    RangeMismatch { topic: TopicKey },
}

/// Counts the frames matching `topic` with a language in `languages`, one
/// bucket per day of `range`. Frames outside the range are ignored.
pub fn bucket_counts(
    frames: &[EventFrame],
    topic: &TopicKey,
    languages: &BTreeSet<Language>,
    range: DayRange,
) -> CountSeries {
    let mut counts = vec![0u32; range.len()];
    for frame in frames {
        if &frame.topic != topic || !languages.contains(&frame.language) {
            continue;
        }
        if let Some(i) = range.index_of(frame.observed_day) {
            counts[i] += 1;
        }
    }
    CountSeries::new(topic.clone(), range.start, counts, languages.clone())
}

/// Element-wise sum of same-topic, same-range series. The language set of the
/// result is the union of the inputs'.
pub fn aggregate_languages(series: &[CountSeries]) -> Result<CountSeries, SeriesError> {
    let (first, rest) = series.split_first().ok_or(SeriesError::Empty)?;
    let mut out = first.clone();
    for s in rest {
        if s.topic != first.topic {
            return Err(SeriesError::TopicMismatch(
                first.topic.clone(),
                s.topic.clone(),
            ));
        }
        if s.start_day != first.start_day || s.len() != first.len() {
            return Err(SeriesError::RangeMismatch {
                topic: first.topic.clone(),
            });
        }
        for (acc, c) in out.counts.iter_mut().zip(&s.counts) {
            *acc += c;
        }
        out.languages.extend(s.languages.iter().copied());
    }
    Ok(out)
}

/// Zeroes every day whose count is exactly 1.
pub fn purge_singletons(series: &CountSeries) -> CountSeries {
    let mut out = series.clone();
    for c in out.counts.iter_mut().filter(|c| **c == 1) {
        *c = 0;
    }
    out
}
