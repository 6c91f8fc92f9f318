//! Command-line front end: corpus generation, streaming decode, metrics,
//! and latency/accuracy trade-off sweeps.
//!
//! Exit codes: 0 on success, 2 for usage errors (clap), 1 for runtime
//! failures.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use clap::{Args, Parser, Subcommand, ValueEnum};

use streamdec::clock::{Clock, SimClock, SystemClock};
use streamdec::config::{DetectorMode, SessionConfig, TimeMode};
use streamdec::error::{Error, Result};
use streamdec::features::{parse_features, FeatureStream};
use streamdec::ioutil::write_atomic;
use streamdec::metrics::{
    build_conversion_chart, corpus_metrics, default_delta_grid, format_chart,
    format_metrics_report, parse_chart, parse_ctm, tradeoff_sweep,
};
use streamdec::pipeline::{format_log, parse_log, run_session, LoggedSession};
use streamdec::scoring::{build_scorer, corrupt_scorer, parse_scorer_spec, Scorer};
use streamdec::synthesis::{generate_corpus, make_vocab, read_corpus, write_corpus, Corpus};
use streamdec::vocab::{parse_vocab, Vocabulary};

#[derive(Parser)]
#[command(name = "streamdec", version, about = "Streaming incremental decoder and latency lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus (features, references, alignments, scorer spec).
    Gen(GenArgs),
    /// Decode utterances incrementally and write a commit log.
    Decode(DecodeArgs),
    /// Compute latency and accuracy metrics from a commit log.
    Metrics(MetricsArgs),
    /// Sweep the delta threshold and tabulate latency vs accuracy.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DetectorArg {
    Shared,
    Endpoint,
    Combined,
}

impl From<DetectorArg> for DetectorMode {
    fn from(d: DetectorArg) -> Self {
        match d {
            DetectorArg::Shared => DetectorMode::SharedOnly,
            DetectorArg::Endpoint => DetectorMode::EndpointOnly,
            DetectorArg::Combined => DetectorMode::Combined,
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    seed: u64,
    /// Number of utterances (at least 1).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    utts: u32,
    #[arg(long, default_value = "corpus")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 24)]
    vocab_size: usize,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long, default_value_t = 2)]
    words_min: usize,
    #[arg(long, default_value_t = 8)]
    words_max: usize,
    /// Scorer corruption level in [0, 1]; 0 keeps the clean scorer.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 1)]
    noise_seed: u64,
}

#[derive(Args)]
struct SessionFlags {
    #[arg(long, value_enum, default_value = "shared")]
    detector: DetectorArg,
    #[arg(long, default_value_t = 8)]
    beam: usize,
    #[arg(long, default_value_t = 300.0)]
    chunk_ms: f64,
    /// Delta threshold in ms for endpoint-based detection; accepts `inf`.
    #[arg(long, default_value_t = 500.0)]
    delta_threshold_ms: f64,
    #[arg(long, default_value_t = 0.95)]
    attention_mass: f64,
    #[arg(long, default_value_t = 256)]
    max_tokens: usize,
    /// Rank hypotheses by per-token score instead of the raw sum.
    #[arg(long)]
    length_norm: bool,
    /// Deterministic time: chunk cadence plus a fixed cost per scorer call.
    #[arg(long, conflicts_with = "wall_time")]
    simulated_time: bool,
    /// Measure compute on the real monotonic clock.
    #[arg(long)]
    wall_time: bool,
    /// Simulated compute cost charged per scorer call (simulated time only).
    #[arg(long, default_value_t = 1.0)]
    sim_cost_ms: f64,
}

impl SessionFlags {
    fn to_config(&self) -> SessionConfig {
        SessionConfig {
            chunk_ms: self.chunk_ms,
            beam_size: self.beam,
            detector_mode: self.detector.into(),
            delta_threshold_ms: self.delta_threshold_ms,
            attention_mass_threshold: self.attention_mass,
            max_output_tokens: self.max_tokens,
            length_norm: self.length_norm,
            time_mode: if self.wall_time {
                TimeMode::Wall
            } else {
                TimeMode::Simulated
            },
            sim_score_cost_ms: self.sim_cost_ms,
        }
    }
}

#[derive(Args)]
struct DecodeArgs {
    /// Corpus manifest listing utterances, vocabulary and scorer spec.
    #[arg(long, conflicts_with_all = ["features", "vocab", "scorer_spec"])]
    manifest: Option<PathBuf>,
    /// Single feature file (requires --vocab and --scorer-spec).
    #[arg(long, requires = "vocab", requires = "scorer_spec")]
    features: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    scorer_spec: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads across utterances; output order stays by utterance id.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    jobs: u32,
    #[command(flatten)]
    session: SessionFlags,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    alignments: PathBuf,
    #[arg(long)]
    refs: PathBuf,
    /// Load a previously saved conversion chart instead of building one.
    #[arg(long)]
    chart: Option<PathBuf>,
    /// Save the conversion chart used for the lookup.
    #[arg(long)]
    chart_out: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Comma-separated delta thresholds in ms; accepts `inf`.
    #[arg(long, required = true, value_delimiter = ',', value_parser = parse_threshold)]
    thresholds: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    session: SessionFlags,
}

fn parse_threshold(s: &str) -> std::result::Result<f64, String> {
    let t = s.trim();
    if t.eq_ignore_ascii_case("inf") || t == "+inf" {
        return Ok(f64::INFINITY);
    }
    t.parse::<f64>()
        .map_err(|_| format!("bad threshold `{s}`"))
        .and_then(|v| {
            if v >= 0.0 {
                Ok(v)
            } else {
                Err(format!("threshold must be non-negative, got `{s}`"))
            }
        })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Decode(args) => cmd_decode(args),
        Command::Metrics(args) => cmd_metrics(args),
        Command::Sweep(args) => cmd_sweep(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("streamdec: {e}");
            ExitCode::from(1)
        }
    }
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    if args.words_min == 0 || args.words_max < args.words_min {
        return Err(Error::InvalidConfig(format!(
            "invalid words range {}..={}",
            args.words_min, args.words_max
        )));
    }
    if !(0.0..=1.0).contains(&args.noise) {
        return Err(Error::InvalidConfig(format!(
            "noise must lie in [0, 1], got {}",
            args.noise
        )));
    }
    let vocab = Arc::new(make_vocab(args.vocab_size)?);
    let mut corpus = generate_corpus(
        args.seed,
        args.utts as usize,
        &vocab,
        (args.words_min, args.words_max),
        args.dim,
    )?;
    corpus.scorer_spec = corrupt_scorer(&corpus.scorer_spec, args.noise, args.noise_seed);
    let manifest = write_corpus(&corpus, &args.out_dir)?;
    println!("{}", manifest.display());
    Ok(())
}

/// Decode utterances with a shared read-only scorer, optionally in
/// parallel; results come back in input order.
fn decode_sessions(
    utterances: &[(String, FeatureStream)],
    config: &SessionConfig,
    scorer: &Arc<dyn Scorer>,
    vocab: &Vocabulary,
    jobs: usize,
) -> Result<Vec<LoggedSession>> {
    let n = utterances.len();
    let slots: Vec<Mutex<Option<Result<LoggedSession>>>> =
        (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = jobs.max(1).min(n.max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let (utt, stream) = &utterances[i];
                let clock: Box<dyn Clock> = match config.time_mode {
                    TimeMode::Simulated => Box::new(SimClock::new()),
                    TimeMode::Wall => Box::new(SystemClock::new()),
                };
                let result = run_session(stream, config, scorer.as_ref(), vocab, clock.as_ref())
                    .map(|result| LoggedSession {
                        utt: utt.clone(),
                        result,
                    });
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("worker left a hole"))
        .collect()
}

struct DecodeInputs {
    utterances: Vec<(String, FeatureStream)>,
    vocab: Arc<Vocabulary>,
    scorer: Arc<dyn Scorer>,
}

fn load_decode_inputs(args: &DecodeArgs) -> Result<DecodeInputs> {
    if let Some(manifest) = &args.manifest {
        let corpus: Corpus = read_corpus(manifest)?;
        let scorer = build_scorer(&corpus.scorer_spec, &corpus.vocab, corpus.dim)?;
        let utterances = corpus
            .utterances
            .into_iter()
            .map(|u| (u.id, u.stream))
            .collect();
        return Ok(DecodeInputs {
            utterances,
            vocab: corpus.vocab,
            scorer,
        });
    }
    let features = args
        .features
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("pass --manifest or --features".into()))?;
    let vocab_path = args.vocab.as_ref().expect("clap enforces --vocab");
    let spec_path = args.scorer_spec.as_ref().expect("clap enforces --scorer-spec");

    let stream = parse_features(
        &features.to_string_lossy(),
        &std::fs::read_to_string(features)?,
    )?;
    let vocab = Arc::new(parse_vocab(
        &vocab_path.to_string_lossy(),
        &std::fs::read_to_string(vocab_path)?,
    )?);
    let spec = parse_scorer_spec(
        &spec_path.to_string_lossy(),
        &std::fs::read_to_string(spec_path)?,
    )?;
    let scorer = build_scorer(&spec, &vocab, stream.dim())?;
    let utt = features
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "utt".to_string());
    Ok(DecodeInputs {
        utterances: vec![(utt, stream)],
        vocab,
        scorer,
    })
}

fn cmd_decode(args: DecodeArgs) -> Result<()> {
    let inputs = load_decode_inputs(&args)?;
    let config = args.session.to_config();
    config.validate()?;
    let sessions = decode_sessions(
        &inputs.utterances,
        &config,
        &inputs.scorer,
        &inputs.vocab,
        args.jobs as usize,
    )?;

    let mut transcript = String::new();
    let mut summary = String::from("# streamdec decode summary\n");
    summary.push_str(&format!(
        "utterances={} detector={:?} chunk_ms={} beam={}\n",
        sessions.len(),
        config.detector_mode,
        config.chunk_ms,
        config.beam_size
    ));
    let mut total_audio = 0.0;
    let mut total_compute = 0.0;
    for s in &sessions {
        transcript.push_str(&format!("{}\t{}\n", s.utt, s.result.final_words.join(" ")));
        let compute = s.result.total_compute_ms();
        let audio = s.result.audio_duration_ms;
        total_audio += audio;
        total_compute += compute;
        let utt_rtf = if audio > 0.0 { compute / audio } else { 0.0 };
        summary.push_str(&format!(
            "utt={} audio_ms={:.3} compute_ms={:.3} rtf={:.6} commits={} tokens={}\n",
            s.utt,
            audio,
            compute,
            utt_rtf,
            s.result.commits.len(),
            s.result.final_tokens.len()
        ));
    }
    let rtf = if total_audio > 0.0 {
        total_compute / total_audio
    } else {
        0.0
    };
    summary.push_str(&format!(
        "total_audio_ms={total_audio:.3} total_compute_ms={total_compute:.3} rtf={rtf:.6}\n"
    ));

    write_atomic(&args.out_dir.join("commits.log"), &format_log(&sessions))?;
    write_atomic(&args.out_dir.join("transcript.txt"), &transcript)?;
    write_atomic(&args.out_dir.join("summary.txt"), &summary)?;
    println!("{}", args.out_dir.join("commits.log").display());
    Ok(())
}

fn read_refs(path: &Path) -> Result<HashMap<String, Vec<String>>> {
    let name = path.to_string_lossy().to_string();
    let text = std::fs::read_to_string(path)?;
    let mut refs = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (utt, words) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(&name, idx + 1, "expected `utt<TAB>words`"))?;
        refs.insert(
            utt.to_string(),
            words.split_whitespace().map(|w| w.to_string()).collect(),
        );
    }
    Ok(refs)
}

fn cmd_metrics(args: MetricsArgs) -> Result<()> {
    let log_name = args.log.to_string_lossy().to_string();
    let sessions = parse_log(&log_name, &std::fs::read_to_string(&args.log)?)?;
    if sessions.is_empty() {
        return Err(Error::EmptyInput("commit log"));
    }
    let alignments = parse_ctm(
        &args.alignments.to_string_lossy(),
        &std::fs::read_to_string(&args.alignments)?,
    )?;
    let references = read_refs(&args.refs)?;

    let chart = match &args.chart {
        Some(path) => parse_chart(&path.to_string_lossy(), &std::fs::read_to_string(path)?)?,
        None => {
            let durations_s: HashMap<String, f64> = sessions
                .iter()
                .map(|s| (s.utt.clone(), s.result.audio_duration_ms / 1000.0))
                .collect();
            let mean_duration_s =
                durations_s.values().sum::<f64>() / durations_s.len().max(1) as f64;
            let grid = default_delta_grid(mean_duration_s);
            build_conversion_chart(&alignments, &durations_s, &grid)?
        }
    };
    if let Some(path) = &args.chart_out {
        write_atomic(path, &format_chart(&chart))?;
    }

    let metrics = corpus_metrics(&sessions, &alignments, &references, Some(&chart))?;
    let report = format_metrics_report(&metrics);
    print!("{report}");
    if let Some(out) = &args.out {
        write_atomic(out, &report)?;
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let corpus = read_corpus(&args.manifest)?;
    let base = args.session.to_config();
    base.validate()?;
    let points = tradeoff_sweep(&corpus, &base, &args.thresholds)?;

    let mut table = String::from("# delta_threshold_ms\tconfidence_latency_s\twer\td_avg_ms\trtf\n");
    for p in &points {
        let threshold = if p.delta_threshold_ms.is_infinite() {
            "inf".to_string()
        } else {
            format!("{:.3}", p.delta_threshold_ms)
        };
        table.push_str(&format!(
            "{threshold}\t{:.3}\t{:.6}\t{:.3}\t{:.6}\n",
            p.confidence_latency_s, p.wer, p.d_avg_ms, p.rtf
        ));
    }
    print!("{table}");
    if let Some(out) = &args.out {
        write_atomic(out, &table)?;
    }
    Ok(())
}
