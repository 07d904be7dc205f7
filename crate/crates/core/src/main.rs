use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use vgs_core::browser::{EngineKind, Viewport};
use vgs_core::config::RunConfig;
use vgs_core::evaluation::{apply_wrapper, evaluate_sample, load_dataset, report, ExtractionResult, Sample};
use vgs_core::gateway::{ModelConfig, Transcript};
use vgs_core::runner::{self, ModelSource};
use vgs_core::wrapper::{Method, Trace, Wrapper};

/// Generate, apply and score web extraction wrappers.
#[derive(Parser)]
#[command(name = "vgs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one wrapper per sample.
    Generate(GenerateArgs),
    /// Apply generated wrappers to every page of each sample.
    Extract(ExtractArgs),
    /// Score extraction results against the gold values.
    Evaluate(EvaluateArgs),
    /// Repeat `generate` for segment distances 0 through 4.
    SweepDistance(GenerateArgs),
    /// Extract values page by page with one model call each, no wrapper.
    Direct(CommonArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Dataset in JSON Lines format.
    #[arg(long)]
    dataset: PathBuf,
    /// Only run these sample ids (repeatable).
    #[arg(long = "sample")]
    samples: Vec<String>,
    /// Output directory for this run.
    #[arg(long)]
    out: PathBuf,
    /// Scripted model transcript; freezes the clock.
    #[arg(long)]
    mock: Option<PathBuf>,
    /// Model backend settings (JSON).
    #[arg(long)]
    model_config: Option<PathBuf>,
    /// Run settings (JSON); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Viewport as WIDTHxHEIGHT.
    #[arg(long)]
    viewport: Option<Viewport>,
    /// Rendering engine: static or chrome.
    #[arg(long)]
    engine: Option<EngineKind>,
    /// Samples processed in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args, Clone)]
struct GenerateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// vgs, cot, reflexion or autoscraper.
    #[arg(long, default_value = "vgs")]
    method: Method,
    #[arg(long)]
    segment_distance: Option<usize>,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long = "sample")]
    samples: Vec<String>,
    /// A generate run directory, or a directory of wrapper files.
    #[arg(long)]
    wrappers: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    viewport: Option<Viewport>,
    #[arg(long)]
    engine: Option<EngineKind>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long = "sample")]
    samples: Vec<String>,
    /// An extract or direct run directory, or a directory of result files.
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Transcript holding alignment judge responses.
    #[arg(long)]
    mock: Option<PathBuf>,
    /// Model used as the alignment judge.
    #[arg(long)]
    model_config: Option<PathBuf>,
    /// Align attribute names by exact match only.
    #[arg(long)]
    no_judge: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Generate(a) => {
            let setup = Setup::new(&a.common)?;
            generate(&setup, &a, &a.common.out)
        }
        Command::SweepDistance(a) => sweep(&a),
        Command::Extract(a) => extract(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Direct(a) => direct(&a),
    }
}

struct Setup {
    config: RunConfig,
    source: ModelSource,
    samples: Vec<Sample>,
    transcript_digest: Option<String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p).map_err(anyhow::Error::msg),
        None => {
            let mut cfg = RunConfig::default();
            cfg.model.apply_env();
            Ok(cfg)
        }
    }
}

fn select_samples(dataset: &Path, ids: &[String]) -> Result<Vec<Sample>> {
    let all = load_dataset(dataset).with_context(|| format!("loading {}", dataset.display()))?;
    for id in ids {
        if !all.iter().any(|s| &s.id == id) {
            bail!("sample {id} is not in {}", dataset.display());
        }
    }
    Ok(all.into_iter().filter(|s| ids.is_empty() || ids.contains(&s.id)).collect())
}

impl Setup {
    fn new(a: &CommonArgs) -> Result<Setup> {
        let mut config = load_config(a.config.as_deref())?;
        if let Some(p) = &a.model_config {
            config.model = ModelConfig::load(p)?;
        }
        if let Some(v) = a.viewport {
            config.viewport = v;
        }
        if let Some(e) = a.engine {
            config.engine = e;
        }
        let transcript_path = a.mock.clone().or_else(|| {
            (config.model.backend == "mock").then(|| config.model.transcript.clone().map(PathBuf::from)).flatten()
        });
        let (source, transcript_digest) = match transcript_path {
            Some(p) => {
                let bytes = fs::read(&p).with_context(|| format!("reading {}", p.display()))?;
                (ModelSource::Mock(Transcript::load(&p)?), Some(sha256_hex(&bytes)))
            }
            None => (ModelSource::Live, None),
        };
        let samples = select_samples(&a.dataset, &a.samples)?;
        Ok(Setup { config, source, samples, transcript_digest })
    }

    fn clock_now(&self) -> String {
        self.source.clock().now()
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?)
}

fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' }).collect()
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct TraceLine<'a> {
    sample_id: &'a str,
    method: Method,
    #[serde(flatten)]
    trace: &'a Trace,
}

fn generate(setup: &Setup, a: &GenerateArgs, out: &Path) -> Result<u8> {
    if a.method == Method::Direct {
        bail!("use the direct subcommand for the direct extractor");
    }
    let mut config = setup.config.clone();
    if let Some(d) = a.segment_distance {
        config.segment_distance = d;
    }
    let started = setup.clock_now();
    let wrappers: Vec<Wrapper> = pool(a.common.jobs)?
        .install(|| setup.samples.par_iter().map(|s| runner::generate(a.method, s, &config, &setup.source)).collect());
    let dir = out.join("wrappers");
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut traces = String::new();
    let mut listing = Vec::new();
    for (sample, w) in setup.samples.iter().zip(&wrappers) {
        let file = format!("wrappers/{}.json", file_stem(&sample.id));
        fs::write(out.join(&file), w.to_json())?;
        for t in &w.traces {
            traces += &serde_json::to_string(&TraceLine { sample_id: &sample.id, method: a.method, trace: t })?;
            traces.push('\n');
        }
        let status = if w.has_failures() { "partial" } else { "ok" };
        listing.push(json!({"id": sample.id, "file": file, "status": status, "entries": w.entries.len()}));
    }
    fs::write(out.join("traces.jsonl"), traces)?;
    let partial = wrappers.iter().filter(|w| w.has_failures()).count();
    let settings = json!({"method": a.method, "config": config});
    write_json(
        &out.join("manifest.json"),
        &json!({
            "command": "generate",
            "method": a.method,
            "dataset": a.common.dataset,
            "config_hash": sha256_hex(serde_json::to_string(&settings)?.as_bytes()),
            "config": config,
            "mock": setup.source.is_mock(),
            "transcript_sha256": setup.transcript_digest,
            "started_at": started,
            "finished_at": setup.clock_now(),
            "partial_failures": partial,
            "samples": listing,
        }),
    )?;
    eprintln!("{}: {} wrappers, {partial} with failures", out.display(), wrappers.len());
    Ok(u8::from(partial > 0))
}

fn sweep(a: &GenerateArgs) -> Result<u8> {
    if a.segment_distance.is_some() {
        bail!("sweep-distance sets the segment distance itself");
    }
    let setup = Setup::new(&a.common)?;
    let mut code = 0;
    let mut runs = Vec::new();
    for d in 0..=4usize {
        let args = GenerateArgs { segment_distance: Some(d), ..a.clone() };
        let dir = a.common.out.join(format!("d{d}"));
        code = code.max(generate(&setup, &args, &dir)?);
        runs.push(json!({"segment_distance": d, "dir": format!("d{d}")}));
    }
    write_json(&a.common.out.join("manifest.json"), &json!({"command": "sweep-distance", "method": a.method, "runs": runs}))?;
    Ok(code)
}

fn nested(dir: &Path, sub: &str) -> PathBuf {
    let inner = dir.join(sub);
    if inner.is_dir() {
        inner
    } else {
        dir.to_path_buf()
    }
}

fn write_results(out: &Path, samples: &[Sample], results: &[ExtractionResult]) -> Result<()> {
    let dir = out.join("results");
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    for (s, r) in samples.iter().zip(results) {
        write_json(&dir.join(format!("{}.json", file_stem(&s.id))), r)?;
    }
    Ok(())
}

fn extract(a: &ExtractArgs) -> Result<u8> {
    let mut config = load_config(a.config.as_deref())?;
    if let Some(v) = a.viewport {
        config.viewport = v;
    }
    if let Some(e) = a.engine {
        config.engine = e;
    }
    let samples = select_samples(&a.dataset, &a.samples)?;
    let dir = nested(&a.wrappers, "wrappers");
    let mut wrappers = Vec::new();
    for s in &samples {
        let path = dir.join(format!("{}.json", file_stem(&s.id)));
        let w: Wrapper = match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
            Err(_) => {
                eprintln!("warning: no wrapper for {} at {}", s.id, path.display());
                Wrapper::new(&s.id, "", Method::Vgs, &Default::default())
            }
        };
        wrappers.push(w);
    }
    let results: Vec<ExtractionResult> = pool(a.jobs)?.install(|| {
        samples.par_iter().zip(&wrappers).map(|(s, w)| apply_wrapper(w, s, config.viewport, config.engine)).collect()
    });
    write_results(&a.out, &samples, &results)?;
    let failed_pages: usize = results.iter().flat_map(|r| &r.pages).filter(|p| p.error.is_some()).count();
    let missing = wrappers.iter().filter(|w| w.source_url.is_empty()).count();
    write_json(
        &a.out.join("manifest.json"),
        &json!({"command": "extract", "dataset": a.dataset, "samples": samples.len(), "failed_pages": failed_pages, "missing_wrappers": missing}),
    )?;
    Ok(u8::from(failed_pages + missing > 0))
}

fn evaluate(a: &EvaluateArgs) -> Result<u8> {
    let samples = select_samples(&a.dataset, &a.samples)?;
    let dir = nested(&a.results, "results");
    let mut config = load_config(None)?;
    if let Some(p) = &a.model_config {
        config.model = ModelConfig::load(p)?;
    }
    let source = match &a.mock {
        Some(p) => Some(ModelSource::Mock(Transcript::load(p)?)),
        None if a.no_judge => None,
        None => a.model_config.as_ref().map(|_| ModelSource::Live),
    };
    let mut missing = 0;
    let mut scored = Vec::new();
    for s in &samples {
        let path = dir.join(format!("{}.json", file_stem(&s.id)));
        let result: ExtractionResult = match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
            Err(_) => {
                eprintln!("warning: no result for {} at {}", s.id, path.display());
                missing += 1;
                ExtractionResult { sample_id: s.id.clone(), pages: Vec::new() }
            }
        };
        let judge = match &source {
            Some(src) => Some(src.gateway(&s.id, &config)?),
            None => None,
        };
        scored.push(evaluate_sample(&result, s, judge.as_ref()));
    }
    let rep = report(scored)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    fs::write(a.out.join("report.json"), rep.to_json())?;
    let table = rep.to_table();
    fs::write(a.out.join("report.txt"), &table)?;
    print!("{table}");
    std::io::stdout().flush()?;
    Ok(u8::from(missing > 0))
}

fn direct(a: &CommonArgs) -> Result<u8> {
    let setup = Setup::new(a)?;
    let runs: Vec<_> =
        pool(a.jobs)?.install(|| setup.samples.par_iter().map(|s| runner::direct(s, &setup.config, &setup.source)).collect());
    let results: Vec<ExtractionResult> = runs.iter().map(|(r, _)| r.clone()).collect();
    write_results(&a.out, &setup.samples, &results)?;
    let mut log = String::new();
    let mut errors = 0;
    for rec in runs.iter().flat_map(|(_, l)| l) {
        errors += usize::from(rec.error.is_some());
        log += &serde_json::to_string(rec)?;
        log.push('\n');
    }
    fs::write(a.out.join("latency.jsonl"), log)?;
    let latencies: Vec<u64> = runs.iter().flat_map(|(_, l)| l).map(|r| r.latency_ms).collect();
    let mean = if latencies.is_empty() { 0.0 } else { latencies.iter().sum::<u64>() as f64 / latencies.len() as f64 };
    write_json(
        &a.out.join("manifest.json"),
        &json!({
            "command": "direct",
            "dataset": a.dataset,
            "config_hash": sha256_hex(serde_json::to_string(&setup.config)?.as_bytes()),
            "mock": setup.source.is_mock(),
            "transcript_sha256": setup.transcript_digest,
            "pages": latencies.len(),
            "failed_pages": errors,
            "mean_latency_ms": Value::from(mean),
        }),
    )?;
    Ok(u8::from(errors > 0))
}
