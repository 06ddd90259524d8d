//! Library-level pipeline: synthetic events through counting, detection,
//! scoring, tuning and alert emission.

use xlalert_core::synth::topic_name;
use xlalert_core::{
    aggregate_languages, bucket_counts, emit_alerts, evaluate_run, generate, grid_search,
    parse_event_frames, parse_feed_ndjson, purge_singletons, render_feed, run_detector,
    CountSeries, DayRange, DetectorConfig, FeedFormat, InputFormat, Language, Model, Stream,
    SynthSpec, TuneGrid,
};

fn spec() -> SynthSpec {
    SynthSpec {
        topics: 4,
        languages: vec![Language::En, Language::Fr],
        background_rate: 0.6,
        outbreak_days: vec![30, 80, 130],
        magnitude: 6,
        coverage: 0.7,
        ..SynthSpec::default()
    }
}

/// Per-language series and their purged aggregate for every topic.
fn streams(spec: &SynthSpec) -> Vec<(Vec<CountSeries>, Stream)> {
    let out = generate(spec).unwrap();
    let parsed = parse_event_frames(&out.events_ndjson(), InputFormat::Ndjson);
    assert!(parsed.errors.is_empty());
    let range = DayRange::from_len(spec.start_day, spec.days).unwrap();
    (0..spec.topics)
        .map(|i| {
            let topic = topic_name(i);
            let per_lang: Vec<CountSeries> = spec
                .languages
                .iter()
                .map(|l| bucket_counts(&parsed.frames, &topic, &[*l].into(), range))
                .collect();
            let series = purge_singletons(&aggregate_languages(&per_lang).unwrap());
            let reports = out.reports.iter().filter(|r| r.topic == topic).cloned().collect();
            (per_lang, Stream { series, reports })
        })
        .collect()
}

#[test]
fn every_model_scores_the_suite() {
    let data = streams(&spec());
    let streams: Vec<Stream> = data.iter().map(|(_, s)| s.clone()).collect();
    for model in Model::ALL {
        let r = evaluate_run(&streams, &DetectorConfig::new(model)).unwrap();
        let c = r.confusion;
        assert_eq!(c.tp + c.fn_, 12, "{model}");
        assert_eq!(c.surveillance_days, 4 * 151);
        assert!(r.se.is_some() && r.sp.is_some(), "{model}");
    }
}

#[test]
fn tuning_beats_or_matches_every_grid_point() {
    let data = streams(&spec());
    let streams: Vec<Stream> = data.iter().map(|(_, s)| s.clone()).collect();
    let grid = TuneGrid::default_for(Model::C2);
    let out = grid_search(&streams, &grid, &DetectorConfig::new(Model::C2)).unwrap();
    let best = out.points.iter().filter_map(|p| p.f1).fold(0.0, f64::max);
    let chosen = evaluate_run(&streams, &out.config).unwrap().f1.unwrap();
    assert_eq!(chosen, best);
    assert!(grid.thresholds.contains(&out.config.threshold));
}

#[test]
fn alerts_name_contributing_languages() {
    let data = streams(&spec());
    let mut records = Vec::new();
    for (per_lang, stream) in &data {
        let alarms = run_detector(&stream.series, &DetectorConfig::new(Model::C2)).unwrap();
        let alerts = emit_alerts(&alarms, &stream.series, per_lang);
        assert_eq!(alerts.len(), alarms.alarm_count());
        for a in &alerts {
            assert!(!a.contributing_languages.is_empty());
            assert!(a.statistic > a.threshold);
        }
        records.extend(alerts);
    }
    assert!(!records.is_empty());
    let text = render_feed(&records, FeedFormat::Ndjson);
    let back = parse_feed_ndjson(&text).unwrap();
    assert_eq!(back.len(), records.len());
    assert!(render_feed(&records, FeedFormat::Atom).starts_with("<?xml"));
}
