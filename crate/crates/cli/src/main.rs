use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::anyhow;
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use xlalert_cli::pipeline::{self, usage, Result};
use xlalert_cli::{RunManifest, Stratum};
use xlalert_core::{DetectorConfig, InputFormat, Language, Model, SynthSpec};

/// Outbreak alerting over multilingual news-event counts.
#[derive(Parser)]
#[command(name = "xlalert", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run detectors and write alarms plus alert feeds.
    Detect {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        detectors: DetectorArgs,
    },
    /// Score alarms against the silver-standard reports.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        detectors: DetectorArgs,
        /// Alarms NDJSON from a previous `detect`; events are not read.
        #[arg(long)]
        alarms: Option<PathBuf>,
    },
    /// Pick a threshold on held-out streams.
    Tune {
        #[command(flatten)]
        common: CommonArgs,
        /// Model to tune (overrides the manifest's [tune] section).
        #[arg(long)]
        model: Option<Model>,
        /// Comma-separated threshold candidates.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        thresholds: Option<Vec<f64>>,
        /// Comma-separated lambda candidates (EWMA only).
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        /// Stratum used as held-out data.
        #[arg(long = "tune-stratum")]
        tune_stratum: Option<String>,
    },
    /// Generate a synthetic event stream and silver reports.
    Synth(SynthArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long, value_parser = parse_format)]
    events_format: Option<InputFormat>,
    #[arg(long)]
    silver: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    start: Option<NaiveDate>,
    #[arg(long)]
    end: Option<NaiveDate>,
    /// Topic as disease/country; repeatable.
    #[arg(long = "topic")]
    topics: Vec<String>,
    /// Stratum as name=lang,lang (or name=all); repeatable.
    #[arg(long = "stratum", value_parser = parse_stratum)]
    strata: Vec<Stratum>,
    /// Skip the singleton purge.
    #[arg(long)]
    no_purge: bool,
}

#[derive(Args)]
struct DetectorArgs {
    /// Run only these models at their default settings; repeatable.
    #[arg(long = "model")]
    models: Vec<Model>,
    /// Detector config file (TOML holding one config); repeatable.
    #[arg(long = "config")]
    configs: Vec<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// TOML synth spec; flags override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    start: Option<NaiveDate>,
    #[arg(long)]
    days: Option<usize>,
    #[arg(long)]
    topics: Option<usize>,
    #[arg(long, value_delimiter = ',', value_parser = parse_language)]
    languages: Option<Vec<Language>>,
    #[arg(long)]
    background_rate: Option<f64>,
    /// Burst start offset in days; repeatable.
    #[arg(long = "outbreak-day")]
    outbreak_days: Vec<usize>,
    #[arg(long)]
    burst_len: Option<usize>,
    #[arg(long)]
    magnitude: Option<u32>,
    #[arg(long)]
    coverage: Option<f64>,
    #[arg(long)]
    report_lag: Option<usize>,
    #[arg(long)]
    weekend_outage: bool,
}

fn parse_format(s: &str) -> std::result::Result<InputFormat, String> {
    match s.to_ascii_lowercase().as_str() {
        "ndjson" | "jsonl" => Ok(InputFormat::Ndjson),
        "csv" => Ok(InputFormat::Csv),
        _ => Err(format!("unknown format {s:?}")),
    }
}

fn parse_language(s: &str) -> std::result::Result<Language, String> {
    s.parse()
}

fn parse_stratum(s: &str) -> std::result::Result<Stratum, String> {
    let (name, langs) = s
        .split_once('=')
        .ok_or_else(|| format!("stratum {s:?} is not name=lang,lang"))?;
    let languages = if langs.trim() == "all" {
        Language::all()
    } else {
        langs
            .split(',')
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()?
    };
    Ok(Stratum {
        name: name.trim().to_string(),
        languages,
    })
}

fn build_manifest(common: CommonArgs, detectors: Option<DetectorArgs>) -> Result<RunManifest> {
    let mut m = match &common.manifest {
        Some(path) => RunManifest::load(path).map_err(usage)?,
        None => RunManifest::default(),
    };
    if let Some(p) = common.events {
        m.events = Some(p);
    }
    if let Some(f) = common.events_format {
        m.events_format = Some(f);
    }
    if let Some(p) = common.silver {
        m.silver = Some(p);
    }
    if let Some(p) = common.out {
        m.out_dir = p;
    }
    if common.start.is_some() {
        m.start = common.start;
    }
    if common.end.is_some() {
        m.end = common.end;
    }
    if !common.topics.is_empty() {
        m.topics = common.topics;
    }
    if !common.strata.is_empty() {
        m.strata = common.strata;
    }
    if common.no_purge {
        m.purge_singletons = false;
    }
    if let Some(d) = detectors {
        let mut configs: Vec<DetectorConfig> =
            d.models.into_iter().map(DetectorConfig::new).collect();
        for path in d.configs {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| usage(anyhow!("reading {}: {e}", path.display())))?;
            let cfg: DetectorConfig = toml::from_str(&text)
                .map_err(|e| usage(anyhow!("parsing {}: {e}", path.display())))?;
            configs.push(cfg);
        }
        if !configs.is_empty() {
            m.detectors = configs;
        }
    }
    Ok(m)
}

fn print_written(paths: &[PathBuf]) {
    for p in paths {
        eprintln!("wrote {}", p.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Detect { common, detectors } => {
            let m = build_manifest(common, Some(detectors))?;
            print_written(&pipeline::cmd_detect(&m)?);
        }
        Command::Evaluate {
            common,
            detectors,
            alarms,
        } => {
            let mut m = build_manifest(common, Some(detectors))?;
            if alarms.is_some() {
                m.alarms = alarms;
            }
            let out = pipeline::cmd_evaluate(&m)?;
            for w in &out.evaluation.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", pipeline::metrics_text(&out.evaluation.rows));
            print_written(&out.written);
        }
        Command::Tune {
            common,
            model,
            thresholds,
            lambdas,
            tune_stratum,
        } => {
            let mut m = build_manifest(common, None)?;
            if let Some(model) = model {
                m.tune = Some(xlalert_cli::manifest::TuneSection {
                    model,
                    thresholds: None,
                    lambdas: None,
                    stratum: None,
                });
            }
            if let Some(t) = m.tune.as_mut() {
                if thresholds.is_some() {
                    t.thresholds = thresholds;
                }
                if lambdas.is_some() {
                    t.lambdas = lambdas;
                }
                if tune_stratum.is_some() {
                    t.stratum = tune_stratum;
                }
            }
            let out = pipeline::cmd_tune(&m)?;
            println!(
                "{} threshold {} lambda {}",
                out.outcome.config.model, out.outcome.config.threshold, out.outcome.config.lambda
            );
            print_written(&out.written);
        }
        Command::Synth(args) => {
            let mut spec = match &args.spec {
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .map_err(|e| usage(anyhow!("reading {}: {e}", path.display())))?;
                    toml::from_str::<SynthSpec>(&text)
                        .map_err(|e| usage(anyhow!("parsing {}: {e}", path.display())))?
                }
                None => SynthSpec::default(),
            };
            if let Some(v) = args.seed {
                spec.seed = v;
            }
            if let Some(v) = args.start {
                spec.start_day = v;
            }
            if let Some(v) = args.days {
                spec.days = v;
            }
            if let Some(v) = args.topics {
                spec.topics = v;
            }
            if let Some(v) = args.languages {
                spec.languages = v;
            }
            if let Some(v) = args.background_rate {
                spec.background_rate = v;
            }
            if !args.outbreak_days.is_empty() {
                spec.outbreak_days = args.outbreak_days;
            }
            if let Some(v) = args.burst_len {
                spec.burst_len = v;
            }
            if let Some(v) = args.magnitude {
                spec.magnitude = v;
            }
            if let Some(v) = args.coverage {
                spec.coverage = v;
            }
            if let Some(v) = args.report_lag {
                spec.report_lag = v;
            }
            if args.weekend_outage {
                spec.weekend_outage = true;
            }
            print_written(&pipeline::cmd_synth(&spec, &args.out)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
