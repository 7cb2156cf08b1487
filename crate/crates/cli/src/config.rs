//! Run configuration files (TOML, schema version 1).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use sas_core::agent::{AgentEndpointConfig, LoopConfig, MismatchPolicy};
use sas_core::benchfns::{BenchmarkFunction, FunctionKind};
use sas_core::env::{EnvConfig, GoalSpec, ParamRegion, DEFAULT_PROFILE};
use sas_core::optimizers::OptimizerKind;
use sas_core::retrieval::ObjectiveId;
use sas_core::sas::{SasOptions, Scenario};
use sas_core::trace::ParamBounds;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("config does not parse: {0}")]
    Syntax(String),
    #[error("{0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Bench,
    Retrieve,
    SelfImprove,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Bench => "bench",
            Command::Retrieve => "retrieve",
            Command::SelfImprove => "self-improve",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    Http,
    #[default]
    Mock,
    Replay,
    Scripted,
    /// Retrieval baseline that names ten example ids at random.
    Random,
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentKind::Http => "http",
            AgentKind::Mock => "mock",
            AgentKind::Replay => "replay",
            AgentKind::Scripted => "scripted",
            AgentKind::Random => "random",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    #[serde(default)]
    pub kind: AgentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<AgentEndpointConfig>,
    /// JSON-lines fixture for `replay`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<PathBuf>,
    #[serde(default)]
    pub policy: MismatchPolicy,
    /// `scripted` retrieval: rank on the full-precision cache instead of the prompt text.
    #[serde(default)]
    pub ground_truth: bool,
    #[serde(default, rename = "loop")]
    pub loop_cfg: LoopConfig,
}

/// `kind-dims`, e.g. `rastrigin-8`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FunctionSpec {
    pub kind: FunctionKind,
    pub dims: usize,
}

impl fmt::Display for FunctionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.kind.name().to_ascii_lowercase(), self.dims)
    }
}

impl FromStr for FunctionSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, dims) = s
            .rsplit_once('-')
            .ok_or_else(|| format!("function '{s}' must look like 'ackley-2'"))?;
        let kind = match name.to_ascii_lowercase().as_str() {
            "ackley" => FunctionKind::Ackley,
            "rastrigin" => FunctionKind::Rastrigin,
            "sphere" => FunctionKind::Sphere,
            other => return Err(format!("unknown function '{other}'")),
        };
        let dims: usize = dims
            .parse()
            .map_err(|_| format!("bad dimension in '{s}'"))?;
        if dims == 0 {
            return Err(format!("'{s}': dimension must be at least 1"));
        }
        Ok(Self { kind, dims })
    }
}

impl Serialize for FunctionSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FunctionSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    #[serde(default = "default_functions")]
    pub functions: Vec<FunctionSpec>,
    #[serde(default = "default_optimizers")]
    pub optimizers: Vec<OptimizerKind>,
    /// Adds the agent row.
    #[serde(default = "yes")]
    pub include_agent: bool,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Points shown to the agent before its first proposal; they count against `steps`.
    #[serde(default = "default_agent_seeds")]
    pub seeds: usize,
    /// Random per-function shift of the optimum; off gives the centred functions.
    #[serde(default = "yes")]
    pub shift: bool,
}

fn yes() -> bool {
    true
}

fn default_functions() -> Vec<FunctionSpec> {
    ["ackley-2", "ackley-8", "rastrigin-2", "rastrigin-8"]
        .iter()
        .map(|s| s.parse().expect("valid default"))
        .collect()
}

fn default_optimizers() -> Vec<OptimizerKind> {
    OptimizerKind::ALL.to_vec()
}

fn default_trials() -> usize {
    50
}

fn default_steps() -> usize {
    100
}

fn default_agent_seeds() -> usize {
    3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionName {
    Full,
    LeftBiased,
    LowerHalf,
}

impl RegionName {
    pub fn region(self, bounds: &ParamBounds) -> ParamRegion {
        match self {
            RegionName::Full => ParamRegion::full(bounds),
            RegionName::LeftBiased => ParamRegion::left_biased(),
            RegionName::LowerHalf => ParamRegion::lower_half(),
        }
    }
}

/// How to build a fresh trace cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheGen {
    pub n: usize,
    pub region: RegionName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrieveSection {
    #[serde(default = "all_objectives")]
    pub objectives: Vec<ObjectiveId>,
    #[serde(default = "default_retrieve_trials")]
    pub trials: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_gen: Option<CacheGen>,
    #[serde(default = "default_env_profile")]
    pub env_profile: String,
    #[serde(default)]
    pub prompt: SasOptions,
}

fn all_objectives() -> Vec<ObjectiveId> {
    ObjectiveId::ALL.to_vec()
}

fn default_retrieve_trials() -> usize {
    100
}

fn default_env_profile() -> String {
    DEFAULT_PROFILE.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelfImproveSection {
    /// Fills in goal, objective text and seed cache when those are omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<GoalSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_gen: Option<CacheGen>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Independent runs, each with its own seed cache.
    #[serde(default = "one")]
    pub repeats: usize,
    #[serde(default = "default_env_profile")]
    pub env_profile: String,
    #[serde(default)]
    pub prompt: SasOptions,
}

fn default_iterations() -> usize {
    30
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bench: Option<BenchSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieve: Option<RetrieveSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub self_improve: Option<SelfImproveSection>,
}

/// Resolved self-improvement task.
#[derive(Debug, Clone, PartialEq)]
pub struct ImproveTask {
    pub goal: GoalSpec,
    pub objective_text: String,
    pub cache_gen: Option<CacheGen>,
}

fn resolve_path(base: &Path, p: &mut PathBuf) -> Result<(), ConfigError> {
    if p.is_relative() {
        *p = base.join(&*p);
    }
    if !p.exists() {
        return Err(invalid(format!(
            "referenced file {} does not exist",
            p.display()
        )));
    }
    Ok(())
}

fn check_cache_source(path: &Option<PathBuf>, gen: &Option<CacheGen>) -> Result<(), ConfigError> {
    if path.is_some() && gen.is_some() {
        return Err(invalid("give either cache_path or cache_gen, not both"));
    }
    if let Some(g) = gen {
        if g.n == 0 {
            return Err(invalid("cache_gen.n must be at least 1"));
        }
    }
    Ok(())
}

fn check_env(profile: &str) -> Result<(), ConfigError> {
    EnvConfig::profile(profile)
        .map(|_| ())
        .ok_or_else(|| invalid(format!("unknown env_profile '{profile}'")))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))
    }

    /// Reads, resolves relative paths against the file's directory, and validates.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) -> Result<(), ConfigError> {
        if let Some(p) = &mut self.agent.fixture {
            resolve_path(base, p)?;
        }
        if let Some(p) = self.retrieve.as_mut().and_then(|r| r.cache_path.as_mut()) {
            resolve_path(base, p)?;
        }
        if let Some(p) = self
            .self_improve
            .as_mut()
            .and_then(|r| r.cache_path.as_mut())
        {
            resolve_path(base, p)?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn command(&self) -> Result<Command, ConfigError> {
        match (&self.bench, &self.retrieve, &self.self_improve) {
            (Some(_), None, None) => Ok(Command::Bench),
            (None, Some(_), None) => Ok(Command::Retrieve),
            (None, None, Some(_)) => Ok(Command::SelfImprove),
            (None, None, None) => Err(invalid(
                "config needs one of [bench], [retrieve] or [self_improve]",
            )),
            _ => Err(invalid("config must contain exactly one command section")),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.version != CONFIG_VERSION {
            return Err(invalid(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        let command = self.command()?;
        self.validate_agent(command)?;
        match command {
            Command::Bench => {
                let b = self.bench.as_ref().expect("checked");
                if b.functions.is_empty() {
                    return Err(invalid("bench.functions is empty"));
                }
                if b.trials == 0 || b.steps == 0 {
                    return Err(invalid("bench.trials and bench.steps must be at least 1"));
                }
                if b.include_agent && b.steps < 2 {
                    return Err(invalid("the agent row needs bench.steps >= 2"));
                }
                if b.seeds == 0 {
                    return Err(invalid("bench.seeds must be at least 1"));
                }
            }
            Command::Retrieve => {
                let r = self.retrieve.as_ref().expect("checked");
                if r.objectives.is_empty() {
                    return Err(invalid("retrieve.objectives is empty"));
                }
                if r.trials == 0 {
                    return Err(invalid("retrieve.trials must be at least 1"));
                }
                check_cache_source(&r.cache_path, &r.cache_gen)?;
                check_env(&r.env_profile)?;
            }
            Command::SelfImprove => {
                let s = self.self_improve.as_ref().expect("checked");
                if s.iterations == 0 {
                    return Err(invalid("self_improve.iterations must be at least 1"));
                }
                if s.repeats == 0 {
                    return Err(invalid("self_improve.repeats must be at least 1"));
                }
                check_cache_source(&s.cache_path, &s.cache_gen)?;
                check_env(&s.env_profile)?;
                let task = self.improve_task()?;
                task.goal.validate().map_err(|e| invalid(e.to_string()))?;
                if task.objective_text.trim().is_empty() {
                    return Err(invalid("self_improve.objective_text is empty"));
                }
            }
        }
        Ok(())
    }

    fn validate_agent(&self, command: Command) -> Result<(), ConfigError> {
        let a = &self.agent;
        let allowed: &[AgentKind] = match command {
            Command::Bench => &[AgentKind::Mock, AgentKind::Replay, AgentKind::Http],
            Command::Retrieve => &[
                AgentKind::Scripted,
                AgentKind::Random,
                AgentKind::Replay,
                AgentKind::Http,
            ],
            Command::SelfImprove => &[AgentKind::Scripted, AgentKind::Replay, AgentKind::Http],
        };
        if command == Command::Bench && !self.bench.as_ref().is_some_and(|b| b.include_agent) {
            return Ok(());
        }
        if !allowed.contains(&a.kind) {
            let names: Vec<String> = allowed.iter().map(|k| k.to_string()).collect();
            return Err(invalid(format!(
                "agent kind '{}' cannot run {command} (use one of {})",
                a.kind,
                names.join(", ")
            )));
        }
        match a.kind {
            AgentKind::Http => {
                let ep = a.endpoint.as_ref().ok_or_else(|| {
                    invalid("agent kind 'http' needs an [agent.endpoint] section")
                })?;
                ep.validate()
                    .map_err(|e| invalid(format!("agent.endpoint: {e}")))?;
            }
            AgentKind::Replay if a.fixture.is_none() => {
                return Err(invalid("agent kind 'replay' needs agent.fixture"));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn improve_task(&self) -> Result<ImproveTask, ConfigError> {
        let s = self
            .self_improve
            .as_ref()
            .ok_or_else(|| invalid("no [self_improve] section"))?;
        let goal = s
            .goal
            .or(s.scenario.map(Scenario::goal))
            .ok_or_else(|| invalid("self_improve needs a scenario or a goal"))?;
        let objective_text = s
            .objective_text
            .clone()
            .or(s.scenario.map(|x| x.objective_text().to_string()))
            .ok_or_else(|| invalid("self_improve needs a scenario or objective_text"))?;
        let cache_gen = match (&s.cache_gen, &s.cache_path, s.scenario) {
            (Some(g), _, _) => Some(g.clone()),
            (None, Some(_), _) => None,
            (None, None, Some(Scenario::S1)) => Some(CacheGen {
                n: 24,
                region: RegionName::LeftBiased,
            }),
            (None, None, Some(_)) => Some(CacheGen {
                n: 24,
                region: RegionName::LowerHalf,
            }),
            (None, None, None) => {
                return Err(invalid("self_improve needs cache_path or cache_gen"))
            }
        };
        Ok(ImproveTask {
            goal,
            objective_text,
            cache_gen,
        })
    }

    /// Functions of the bench section, shifted from the run seed when enabled.
    pub fn bench_functions(&self) -> Result<Vec<BenchmarkFunction>, ConfigError> {
        let b = self
            .bench
            .as_ref()
            .ok_or_else(|| invalid("no [bench] section"))?;
        b.functions
            .iter()
            .map(|spec| {
                let made = if b.shift {
                    let mut rng = sas_core::seed::derived_rng(
                        self.seed,
                        &[
                            sas_core::seed::label("shift"),
                            sas_core::seed::label(&spec.to_string()),
                        ],
                    );
                    BenchmarkFunction::with_random_shift(spec.kind, spec.dims, &mut rng)
                } else {
                    BenchmarkFunction::centered(spec.kind, spec.dims)
                };
                made.map_err(|e| invalid(format!("{spec}: {e}")))
            })
            .collect()
    }
}

/// Command-line choices layered over a config file or an embedded profile.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub agent: Option<AgentKind>,
    pub fixture: Option<PathBuf>,
}

/// Loads `--config` or `--profile`, applies overrides and checks the config runs `command`.
pub fn resolve_run_config(
    command: Command,
    config: Option<&Path>,
    profile: Option<&str>,
    overrides: &Overrides,
) -> Result<RunConfig, ConfigError> {
    let mut cfg = match (config, profile) {
        (Some(_), Some(_)) => return Err(invalid("give either --config or --profile, not both")),
        (Some(path), None) => {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
            let mut cfg = RunConfig::from_toml(&text)?;
            cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")))?;
            cfg
        }
        (None, Some(name)) => {
            let text = crate::profiles::profile(name).ok_or_else(|| {
                invalid(format!(
                    "unknown profile '{name}' (available: {})",
                    crate::profiles::names().join(", ")
                ))
            })?;
            RunConfig::from_toml(text)?
        }
        (None, None) => return Err(invalid("give --config PATH or --profile NAME")),
    };
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if let Some(kind) = overrides.agent {
        cfg.agent.kind = kind;
    }
    if let Some(f) = &overrides.fixture {
        let mut f = f.clone();
        resolve_path(Path::new("."), &mut f)?;
        cfg.agent.fixture = Some(f);
    }
    cfg.validate()?;
    let found = cfg.command()?;
    if found != command {
        return Err(invalid(format!(
            "this config describes '{found}', not '{command}'"
        )));
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_bench_config_gets_defaults() {
        let cfg = RunConfig::from_toml("version = 1\n[bench]\n").unwrap();
        cfg.validate().unwrap();
        let b = cfg.bench.as_ref().unwrap();
        assert_eq!((b.trials, b.steps, b.functions.len()), (50, 100, 4));
        assert_eq!(cfg.command().unwrap(), Command::Bench);
    }

    #[test]
    fn exactly_one_section() {
        let cfg = RunConfig::from_toml("version = 1\n[bench]\n[retrieve]\n").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = RunConfig::from_toml("version = 1\n").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_iterations_rejected() {
        let cfg = RunConfig::from_toml(
            "version = 1\n[agent]\nkind = \"scripted\"\n[self_improve]\nscenario = \"S1\"\niterations = 0\n",
        )
        .unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("iterations"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("version = 1\n[bench]\ntrails = 3\n").is_err());
    }

    #[test]
    fn agent_kind_must_fit_command() {
        let cfg =
            RunConfig::from_toml("version = 1\n[agent]\nkind = \"mock\"\n[retrieve]\n").unwrap();
        assert!(cfg
            .validate()
            .unwrap_err()
            .to_string()
            .contains("cannot run retrieve"));
        let cfg =
            RunConfig::from_toml("version = 1\n[agent]\nkind = \"replay\"\n[bench]\n").unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("fixture"));
    }

    #[test]
    fn missing_fixture_is_reported_at_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(
            &p,
            "version = 1\n[agent]\nkind = \"replay\"\nfixture = \"nope.jsonl\"\n[bench]\n",
        )
        .unwrap();
        let err = RunConfig::load(&p).unwrap_err().to_string();
        assert!(err.contains("nope.jsonl"), "{err}");
    }

    #[test]
    fn scenario_fills_in_the_task() {
        let cfg = RunConfig::from_toml(
            "version = 1\n[agent]\nkind = \"scripted\"\n[self_improve]\nscenario = \"S3\"\n",
        )
        .unwrap();
        cfg.validate().unwrap();
        let t = cfg.improve_task().unwrap();
        assert_eq!(t.goal, Scenario::S3.goal());
        assert_eq!(t.cache_gen.unwrap().region, RegionName::LowerHalf);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig::from_toml(
            "version = 1\nseed = 9\n[agent]\nkind = \"scripted\"\n[self_improve]\nscenario = \"S2\"\nrepeats = 3\n",
        )
        .unwrap();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn profile_must_match_command() {
        let o = Overrides::default();
        let err = resolve_run_config(Command::Bench, None, Some("s1"), &o).unwrap_err();
        assert!(err.to_string().contains("self-improve"), "{err}");
        let cfg = resolve_run_config(
            Command::Bench,
            None,
            Some("bench-smoke"),
            &Overrides { seed: Some(3), ..o },
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
    }

    #[test]
    fn function_specs_parse() {
        let s: FunctionSpec = "Rastrigin-8".parse().unwrap();
        assert_eq!((s.kind, s.dims), (FunctionKind::Rastrigin, 8));
        assert_eq!(s.to_string(), "rastrigin-8");
        assert!("ackley".parse::<FunctionSpec>().is_err());
        assert!("ackley-0".parse::<FunctionSpec>().is_err());
    }
}
