use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::seed;

use super::{
    parse_proposal, parse_seed_line, Agent, AgentError, AgentTranscript, Role, FALLBACK_MARKER,
};

const EXPLORE_START: f64 = 0.5;
const EXPLORE_END: f64 = 0.05;
const SIGMA_DECAY: f64 = 0.95;

/// Deterministic stand-in for a language model.
///
/// Everything is recovered from the transcript: dimensionality and seeds from the
/// first step message, observations from later ones. With probability decaying
/// linearly from 0.5 to 0.05 over the budget it samples uniformly in the domain,
/// otherwise it perturbs the best point with a Gaussian whose scale shrinks by
/// 0.95 per accepted improvement.
#[derive(Debug, Clone)]
pub struct MockAgent {
    seed: u64,
    domain: (f64, f64),
    sigma0: f64,
}

#[derive(Debug, Default)]
struct Observed {
    dims: usize,
    max_steps: usize,
    iteration: usize,
    seeds: Vec<(Vec<f64>, f64)>,
    proposals: Vec<(Vec<f64>, f64)>,
}

fn line_value<'a>(text: &'a str, label: &str) -> Option<&'a str> {
    text.lines()
        .find_map(|l| l.trim().strip_prefix(label))
        .map(str::trim)
}

fn observe(transcript: &AgentTranscript) -> Observed {
    let mut obs = Observed::default();
    let mut pending: Option<Vec<f64>> = None;
    let mut first = true;
    for m in transcript.messages() {
        match m.role {
            Role::System => {}
            Role::Harness => {
                if first {
                    first = false;
                    obs.seeds = m.text.lines().filter_map(parse_seed_line).collect();
                    obs.dims = obs.seeds.first().map_or(1, |s| s.0.len());
                    obs.max_steps = line_value(&m.text, "MAX_STEPS:")
                        .and_then(|v| v.parse().ok())
                        .unwrap_or(1);
                }
                for line in m.text.lines() {
                    if line.starts_with(FALLBACK_MARKER) {
                        pending = parse_proposal(line, obs.dims).ok().map(|p| p.x);
                    } else if let Some(v) = line.strip_prefix("f(x):") {
                        if let (Some(x), Ok(f)) = (pending.take(), v.trim().parse::<f64>()) {
                            obs.proposals.push((x, f));
                        }
                    }
                }
                if let Some(i) = line_value(&m.text, "iteration:").and_then(|v| v.parse().ok()) {
                    obs.iteration = i;
                }
            }
            Role::Agent => pending = parse_proposal(&m.text, obs.dims).ok().map(|p| p.x),
        }
    }
    obs
}

impl MockAgent {
    /// `sigma0` is the initial exploitation step; `domain` bounds exploration.
    pub fn new(seed: u64, domain: (f64, f64), sigma0: f64) -> Self {
        assert!(domain.0 < domain.1, "empty domain");
        assert!(sigma0 > 0.0, "sigma0 must be positive");
        Self {
            seed,
            domain,
            sigma0,
        }
    }

    /// Exploitation step of one tenth of the domain span.
    pub fn for_domain(seed: u64, domain: (f64, f64)) -> Self {
        Self::new(seed, domain, 0.1 * (domain.1 - domain.0))
    }

    fn reply(&self, transcript: &AgentTranscript) -> String {
        let obs = observe(transcript);
        let digest = transcript.prompt_sha256();
        let salt = u64::from_str_radix(&digest[..16], 16).expect("hex digest");
        let mut rng = seed::derived_rng(self.seed, &[salt]);

        let mut best: Option<&(Vec<f64>, f64)> =
            obs.seeds.iter().min_by(|a, b| a.1.total_cmp(&b.1));
        let mut sigma = self.sigma0;
        for p in &obs.proposals {
            if best.is_none_or(|b| p.1 < b.1) {
                best = Some(p);
                sigma *= SIGMA_DECAY;
            }
        }

        let progress = if obs.max_steps > 1 {
            (obs.iteration as f64 / (obs.max_steps - 1) as f64).min(1.0)
        } else {
            1.0
        };
        let p_explore = EXPLORE_START + (EXPLORE_END - EXPLORE_START) * progress;
        let (lo, hi) = self.domain;
        let explore = best.is_none() || rng.random::<f64>() < p_explore;
        let (x, why) = if explore {
            let x: Vec<f64> = (0..obs.dims).map(|_| rng.random_range(lo..=hi)).collect();
            (
                x,
                "Exploring: sampled a fresh point uniformly across the domain.".to_string(),
            )
        } else {
            let (b, fb) = best.expect("best exists when exploiting");
            let x = b
                .iter()
                .map(|v| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (v + sigma * z).clamp(lo, hi)
                })
                .collect();
            (
                x,
                format!("Exploiting: perturbed the best point so far (f(x) = {fb:.4}) with step size {sigma:.4}."),
            )
        };
        let coords = x
            .iter()
            .map(|v| format!("{v:.6}"))
            .collect::<Vec<_>>()
            .join(", ");
        format!("x: {coords}\nExplanation: {why}")
    }
}

impl Agent for MockAgent {
    fn send(&mut self, transcript: &AgentTranscript) -> Result<String, AgentError> {
        Ok(self.reply(transcript))
    }
}
