//! Temporal aberration detection over multilingual news-event count streams.
//!
//! The crate is organised bottom-up:
//!
//! - [`event_model`]: event frames, day-bucketed count series, cross-language
//!   aggregation and the singleton purge.
//! - [`detectors`]: the C2, C3, W2, F-statistic and EWMA snapshot detectors
//!   sharing a 7-day baseline and a 2-day guard period.
//! - [`evaluation`]: qualifying-window scoring against a silver-standard
//!   report timeline, with the usual confusion-derived metrics.
//! - [`tuning`]: threshold selection on held-out streams.
//! - [`alertfeed`]: alert records and NDJSON / Atom feed rendering.
//! - [`synth`]: seeded synthetic event streams for desk-scale experiments.

pub mod alertfeed;
pub mod detectors;
pub mod evaluation;
pub mod event_model;
pub mod synth;
pub mod tuning;

pub use alertfeed::{emit_alerts, parse_feed_ndjson, render_feed, AlertRecord, FeedFormat};
pub use detectors::{
    baseline_stats, c2_stat, c3_stat, ewma_stat, f_stat, run_detector, w2_stat, AlarmSeries,
    BaselineStats, DayRecord, DetectError, DetectorConfig, FstatCombine, Model,
};
pub use evaluation::{
    alarm_rate, confusion, evaluate_alarms, evaluate_run, metrics, qualifying_windows, timeliness,
    wilson_ci, ConfusionCounts, EvalError, EvalResult, Interval, Metrics, QualifyingWindow,
    SilverReport, Stream,
};
pub use event_model::{
    aggregate_languages, bucket_counts, parse_event_frames, purge_singletons, CountSeries,
    DayRange, EventFrame, InputFormat, Language, LineError, ParsedFrames, SeriesError, TopicKey,
};
pub use synth::{generate, SynthError, SynthOutput, SynthSpec};
pub use tuning::{grid_search, GridPoint, TuneError, TuneGrid, TuneOutcome};
