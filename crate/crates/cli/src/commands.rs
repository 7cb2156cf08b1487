//! The experiment commands and the report regenerator.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use sas_core::agent::{
    load_fixture, save_fixture, Agent, AgentFactory, AgentMethod, AgentTranscript, FixtureEntry,
    FixtureSink, HttpAgent, MockAgent, RecordingAgent, ReplayAgent,
};
use sas_core::benchfns::BenchmarkFunction;
use sas_core::env::{seed_cache, EnvConfig};
use sas_core::optimizers::matrix::{run_benchmark_matrix, summarize_runs, TrialRun};
use sas_core::optimizers::{Method, StatsTable};
use sas_core::retrieval::{
    evaluate_retrieval, results_csv, summarize_trials, Criterion, RandomIdAgent, RetrievalTrial,
};
use sas_core::sas::{self_improve, ImprovementReport, ScriptedAgent, IMPROVEMENT_CSV_HEADER};
use sas_core::seed;
use sas_core::trace::store::cache_to_string;
use sas_core::trace::{cache_load, LandingRecord, TraceCache};

use crate::artifact::{read_jsonl, sha256_hex, ArtifactWriter, Manifest, CONFIG, REPORT_DIR};
use crate::config::{AgentConfig, AgentKind, CacheGen, Command, RunConfig};
use crate::svg;

/// Row label of the agent in benchmark tables.
pub const AGENT_ROW: &str = "Agent";
pub const FIXTURE_FILE: &str = "fixture.jsonl";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: PathBuf,
    /// Worker threads; `None` uses every core.
    pub jobs: Option<usize>,
    /// Saves every agent reply to `fixture.jsonl` in the artifact.
    pub record: bool,
}

/// What a command produced and which declared success conditions it missed.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub command: Command,
    pub dir: PathBuf,
    pub failures: Vec<String>,
}

impl Outcome {
    pub fn success(&self) -> bool {
        self.failures.is_empty()
    }
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        b = b.num_threads(n.max(1));
    }
    b.build().map_err(|e| anyhow!("thread pool: {e}"))
}

/// Everything an agent needs that must be prepared once per run.
#[derive(Clone)]
struct AgentSetup {
    cfg: AgentConfig,
    fixture: Option<Arc<Vec<FixtureEntry>>>,
    api_key: Option<String>,
    sink: Option<FixtureSink>,
}

impl AgentSetup {
    fn new(cfg: &AgentConfig, record: bool) -> Result<Self> {
        let fixture = match (&cfg.kind, &cfg.fixture) {
            (AgentKind::Replay, Some(p)) => {
                Some(Arc::new(load_fixture(p).map_err(|e| anyhow!("{e}"))?))
            }
            _ => None,
        };
        let api_key = match (&cfg.kind, &cfg.endpoint) {
            (AgentKind::Http, Some(ep)) => {
                Some(std::env::var(&ep.api_key_env_var).with_context(|| {
                    format!(
                        "environment variable {} (agent API key) is not set",
                        ep.api_key_env_var
                    )
                })?)
            }
            _ => None,
        };
        Ok(Self {
            cfg: cfg.clone(),
            fixture,
            api_key,
            sink: record.then(|| Arc::new(Mutex::new(Vec::new()))),
        })
    }

    /// Agents every command supports; `special` supplies the command-specific kinds.
    fn build(&self, special: impl FnOnce() -> Option<Box<dyn Agent>>) -> Box<dyn Agent> {
        let agent: Box<dyn Agent> = match self.cfg.kind {
            AgentKind::Replay => Box::new(ReplayAgent::shared(
                self.fixture.clone().expect("fixture loaded"),
                self.cfg.policy,
            )),
            AgentKind::Http => Box::new(
                HttpAgent::with_key(
                    self.cfg.endpoint.clone().expect("validated"),
                    self.api_key.clone().expect("key read"),
                )
                .expect("endpoint validated"),
            ),
            _ => special().expect("agent kind validated for this command"),
        };
        match &self.sink {
            Some(sink) => Box::new(RecordingAgent::new(agent, sink.clone())),
            None => agent,
        }
    }

    fn save_recording(&self, w: &mut ArtifactWriter) -> Result<()> {
        if let Some(sink) = &self.sink {
            let entries = sink.lock().expect("fixture sink poisoned").clone();
            let path = w.dir().join(FIXTURE_FILE);
            save_fixture(&path, &entries).map_err(|e| anyhow!("{e}"))?;
            let bytes = fs::read(&path)?;
            w.write(FIXTURE_FILE, bytes)?;
        }
        Ok(())
    }
}

/// Runs the command the config describes and writes its artifact directory.
pub fn run(config: &RunConfig, opts: &RunOptions) -> Result<Outcome> {
    config.validate()?;
    let command = config.command()?;
    let pool = pool(opts.jobs)?;
    let mut w = ArtifactWriter::create(&opts.out)?;
    let setup = AgentSetup::new(&config.agent, opts.record)?;
    let failures = pool.install(|| match command {
        Command::Bench => bench(config, &setup, &mut w),
        Command::Retrieve => retrieve(config, &setup, &mut w),
        Command::SelfImprove => improve(config, &setup, &mut w),
    })?;
    setup.save_recording(&mut w)?;
    w.finish(config, command)?;
    Ok(Outcome {
        command,
        dir: opts.out.clone(),
        failures,
    })
}

fn method_names(config: &RunConfig) -> Vec<String> {
    let b = config.bench.as_ref().expect("bench section");
    let mut names: Vec<String> = b.optimizers.iter().map(|o| o.label().to_string()).collect();
    if b.include_agent {
        names.push(AGENT_ROW.to_string());
    }
    names
}

fn bench_files(table: &StatsTable) -> Vec<(&'static str, String)> {
    vec![
        ("results.csv", table.to_csv()),
        ("table.txt", table.to_text()),
    ]
}

fn bench_failures(table: &StatsTable) -> Vec<String> {
    table
        .cells
        .iter()
        .filter(|c| c.optimizer != sas_core::optimizers::matrix::INIT_ROW && c.all_failed())
        .map(|c| {
            format!(
                "{} on {}: all {} trials failed",
                c.optimizer, c.function, c.trials
            )
        })
        .collect()
}

fn bench(config: &RunConfig, setup: &AgentSetup, w: &mut ArtifactWriter) -> Result<Vec<String>> {
    let b = config.bench.as_ref().expect("bench section");
    let functions = config.bench_functions()?;
    let mut methods: Vec<Box<dyn Method>> = b
        .optimizers
        .iter()
        .map(|o| Box::new(*o) as Box<dyn Method>)
        .collect();
    if b.include_agent {
        let shared = setup.clone();
        let factory: AgentFactory = Arc::new(move |f: &BenchmarkFunction, s: u64| {
            shared.build(|| match shared.cfg.kind {
                AgentKind::Mock => {
                    Some(Box::new(MockAgent::for_domain(s, f.domain())) as Box<dyn Agent>)
                }
                _ => None,
            })
        });
        let mut m = AgentMethod::new(AGENT_ROW, factory).with_seeds(b.seeds);
        m.loop_cfg = config.agent.loop_cfg;
        methods.push(Box::new(m));
    }
    let refs: Vec<&dyn Method> = methods.iter().map(|m| m.as_ref()).collect();
    let outcome = run_benchmark_matrix(&functions, &refs, b.trials, b.steps, config.seed)?;
    w.write_json("functions.json", &functions)?;
    for (name, text) in bench_files(&outcome.table) {
        w.write(name, text)?;
    }
    w.write_jsonl("histories.jsonl", &outcome.runs)?;
    Ok(bench_failures(&outcome.table))
}

fn env_for(profile: &str) -> Result<EnvConfig> {
    EnvConfig::profile(profile).ok_or_else(|| anyhow!("unknown env profile '{profile}'"))
}

fn make_cache(
    env: &EnvConfig,
    path: &Option<PathBuf>,
    gen: &Option<CacheGen>,
    rng_seed: u64,
) -> Result<TraceCache> {
    match (path, gen) {
        (Some(p), _) => Ok(cache_load(p)?),
        (None, Some(g)) => Ok(seed_cache(
            env,
            &g.region.region(&env.bounds),
            g.n,
            &mut seed::rng(rng_seed),
        )?),
        (None, None) => bail!("no cache source configured"),
    }
}

fn retrieval_files(results: &[sas_core::retrieval::TopKResult]) -> Vec<(&'static str, String)> {
    vec![
        ("results.csv", results_csv(results)),
        ("chart.svg", svg::topk_bar_chart(results)),
    ]
}

fn retrieve(config: &RunConfig, setup: &AgentSetup, w: &mut ArtifactWriter) -> Result<Vec<String>> {
    let r = config.retrieve.as_ref().expect("retrieve section");
    let env = env_for(&r.env_profile)?;
    let gen = match (&r.cache_path, &r.cache_gen) {
        (None, None) => Some(CacheGen {
            n: 100,
            region: crate::config::RegionName::Full,
        }),
        (_, g) => g.clone(),
    };
    let cache = make_cache(
        &env,
        &r.cache_path,
        &gen,
        seed::derive(config.seed, &[seed::label("cache")]),
    )?;
    let mut agent = setup.build(|| match config.agent.kind {
        AgentKind::Scripted if config.agent.ground_truth => {
            Some(Box::new(ScriptedAgent::new().with_ground_truth(cache.clone())) as Box<dyn Agent>)
        }
        AgentKind::Scripted => Some(Box::new(ScriptedAgent::new())),
        AgentKind::Random => Some(Box::new(RandomIdAgent::new(seed::derive(
            config.seed,
            &[seed::label("agent")],
        )))),
        _ => None,
    });
    let outcome = evaluate_retrieval(agent.as_mut(), &r.objectives, &cache, r.trials, &r.prompt)?;
    w.write("cache.jsonl", cache_to_string(&cache))?;
    for (name, text) in retrieval_files(&outcome.results) {
        w.write(name, text)?;
    }
    w.write_jsonl("prompts.jsonl", &outcome.prompts)?;
    w.write_jsonl("trials.jsonl", &outcome.trials)?;
    Ok(outcome
        .results
        .iter()
        .filter(|t| t.parse_failure_rate() > 0.5)
        .map(|t| {
            format!(
                "{}: {} of {} answers could not be parsed",
                t.objective, t.parse_failures, t.trials
            )
        })
        .collect())
}

/// One self-improvement repeat as stored in `runs.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatRecord {
    pub repeat: usize,
    pub initial_landings: Vec<LandingRecord>,
    pub report: ImprovementReport,
}

#[derive(Debug, Serialize)]
struct TranscriptRecord<'a> {
    repeat: usize,
    iteration: usize,
    transcript: &'a AgentTranscript,
}

fn improvement_files(title: &str, runs: &[RepeatRecord]) -> Vec<(&'static str, String)> {
    let mut per_iter = format!("repeat,{IMPROVEMENT_CSV_HEADER}\n");
    let mut summary = String::from(
        "repeat,initial_mean,initial_std,final_best,median_final10_x,median_final10_y,aborted\n",
    );
    for r in runs {
        for line in r.report.to_csv().lines().skip(1) {
            per_iter.push_str(&format!("{},{line}\n", r.repeat));
        }
        let (mx, my) = r
            .report
            .median_final_landing(10)
            .unwrap_or((f64::NAN, f64::NAN));
        summary.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
            r.repeat,
            r.report.initial_mean,
            r.report.initial_std,
            r.report.final_best().unwrap_or(f64::NAN),
            mx,
            my,
            r.report.is_aborted()
        ));
    }
    let reports: Vec<ImprovementReport> = runs.iter().map(|r| r.report.clone()).collect();
    let initial: Vec<Vec<LandingRecord>> =
        runs.iter().map(|r| r.initial_landings.clone()).collect();
    vec![
        ("improvement.csv", per_iter),
        ("summary.csv", summary),
        (
            "scatter.svg",
            svg::landing_scatter(title, &reports, &initial),
        ),
    ]
}

fn improve(config: &RunConfig, setup: &AgentSetup, w: &mut ArtifactWriter) -> Result<Vec<String>> {
    let s = config.self_improve.as_ref().expect("self_improve section");
    let task = config.improve_task()?;
    let env = env_for(&s.env_profile)?;
    let results: Vec<Result<(RepeatRecord, Vec<AgentTranscript>)>> = (0..s.repeats)
        .into_par_iter()
        .map(|repeat| {
            let mut cache = make_cache(
                &env,
                &s.cache_path,
                &task.cache_gen,
                seed::derive(config.seed, &[seed::label("cache"), repeat as u64]),
            )?;
            let initial_landings = cache.traces().iter().map(|t| t.landing.clone()).collect();
            let mut agent = setup.build(|| match config.agent.kind {
                AgentKind::Scripted => Some(Box::new(
                    ScriptedAgent::new()
                        .with_criterion(task.objective_text.clone(), Criterion::Goal(task.goal)),
                ) as Box<dyn Agent>),
                _ => None,
            });
            let mut rng = seed::derived_rng(config.seed, &[seed::label("loop"), repeat as u64]);
            let run = self_improve(
                agent.as_mut(),
                &env,
                &task.goal,
                &task.objective_text,
                &mut cache,
                s.iterations,
                &s.prompt,
                &mut rng,
            )?;
            Ok((
                RepeatRecord {
                    repeat,
                    initial_landings,
                    report: run.report,
                },
                run.transcripts,
            ))
        })
        .collect();
    let mut runs = Vec::new();
    let mut transcripts = Vec::new();
    for r in results {
        let (record, ts) = r?;
        transcripts.extend(
            ts.into_iter()
                .enumerate()
                .map(|(i, t)| (record.repeat, i + 1, t)),
        );
        runs.push(record);
    }
    w.write_jsonl("runs.jsonl", &runs)?;
    w.write_jsonl(
        "transcripts.jsonl",
        transcripts
            .iter()
            .map(|(repeat, iteration, transcript)| TranscriptRecord {
                repeat: *repeat,
                iteration: *iteration,
                transcript,
            }),
    )?;
    for (name, text) in improvement_files(&task.objective_text, &runs) {
        w.write(name, text)?;
    }
    Ok(runs
        .iter()
        .filter_map(|r| {
            r.report
                .aborted
                .as_ref()
                .map(|why| format!("repeat {} aborted: {why}", r.repeat))
        })
        .collect())
}

/// Result of regenerating an artifact's tables and plots.
#[derive(Debug, Clone)]
pub struct ReportOutcome {
    pub dir: PathBuf,
    pub files: Vec<String>,
    pub warnings: Vec<String>,
}

/// Rebuilds tables and plots from the stored histories into `<artifact>/report/`.
pub fn report(artifact: &Path) -> Result<ReportOutcome> {
    if !artifact.is_dir() {
        bail!("artifact directory {} does not exist", artifact.display());
    }
    let manifest = Manifest::load(artifact)?;
    let config_path = artifact.join(CONFIG);
    let config_text = fs::read_to_string(&config_path)
        .with_context(|| format!("missing {}", config_path.display()))?;
    let config = RunConfig::from_toml(&config_text)?;
    let mut warnings = Vec::new();
    if sha256_hex(config_text.as_bytes()) != manifest.config_sha256 {
        warnings.push("config.toml does not match the hash recorded in the manifest".to_string());
    }
    for name in manifest.mismatches(artifact) {
        warnings.push(format!(
            "{name} does not match the hash recorded in the manifest"
        ));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let files: Vec<(&'static str, String)> = match manifest.command {
        Command::Bench => {
            let fpath = artifact.join("functions.json");
            let ftext = fs::read_to_string(&fpath)
                .with_context(|| format!("missing {}", fpath.display()))?;
            let functions: Vec<BenchmarkFunction> = serde_json::from_str(&ftext)?;
            let runs: Vec<TrialRun> = read_jsonl(&artifact.join("histories.jsonl"))?;
            let trials = config.bench.as_ref().map(|b| b.trials).unwrap_or(0);
            bench_files(&summarize_runs(
                &functions,
                &method_names(&config),
                &runs,
                trials,
            ))
        }
        Command::Retrieve => {
            let trials: Vec<RetrievalTrial> = read_jsonl(&artifact.join("trials.jsonl"))?;
            let objectives = config
                .retrieve
                .as_ref()
                .map(|r| r.objectives.clone())
                .unwrap_or_default();
            retrieval_files(&summarize_trials(&objectives, &trials))
        }
        Command::SelfImprove => {
            let runs: Vec<RepeatRecord> = read_jsonl(&artifact.join("runs.jsonl"))?;
            let title = runs
                .first()
                .map(|r| r.report.objective_text.clone())
                .unwrap_or_default();
            improvement_files(&title, &runs)
        }
    };
    let dir = artifact.join(REPORT_DIR);
    fs::create_dir_all(&dir)?;
    for (name, text) in &files {
        fs::write(dir.join(name), text)?;
    }
    Ok(ReportOutcome {
        dir,
        files: files.iter().map(|(n, _)| n.to_string()).collect(),
        warnings,
    })
}
