//! Closed-form ballistic surrogate for the table-tennis robot.
//!
//! Launch velocity is `base_velocity + coupling * (theta - 1) + noise`. The ball then
//! follows a drag-free parabola from `launch_pos` until it crosses the table plane.
//! Samples are taken every `dt` on a grid phase-locked to the apex, so the sampled
//! maximum height equals the closed-form peak.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{
    ExecutionTrace, LandingRecord, ParamBounds, ParamVector, TraceCache, TraceError, TraceRow,
    TABLE_DEPTH, TABLE_HALF_WIDTH, TABLE_HEIGHT,
};

pub const DEFAULT_PROFILE: &str = "sim-default";
pub const NOISY_PROFILE: &str = "sim-noisy";

/// Fixed paddle stroke replayed in every trace.
const PADDLE_STROKE: [[f64; 3]; 5] = [
    [0.2478, -1.1859, 0.4236],
    [0.2993, -1.2453, 0.4059],
    [0.3417, -1.2889, 0.3722],
    [0.3483, -1.3131, 0.3347],
    [0.3317, -1.3254, 0.3018],
];

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("parameters {0} outside bounds [{1}, {2}]")]
    OutOfBounds(ParamVector, f64, f64),
    #[error("invalid environment configuration: {0}")]
    Config(String),
    #[error("invalid goal: {0}")]
    Goal(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub table_half_width: f64,
    pub table_depth: f64,
    pub launch_pos: [f64; 3],
    pub base_velocity: [f64; 3],
    /// Rows `v_x, v_y, v_z`; columns `a..h`; m/s per unit attenuation deviation.
    pub coupling: [[f64; 8]; 3],
    pub noise_sigma: f64,
    pub gravity: f64,
    pub dt: f64,
    #[serde(default)]
    pub bounds: ParamBounds,
    #[serde(default)]
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self::sim_default()
    }
}

impl EnvConfig {
    /// The noise-free reference profile.
    pub fn sim_default() -> Self {
        //                 a    b    c    d    e    f    g    h
        let coupling = [
            [0.0, 0.0, 0.1, 0.0, 0.0, 0.0, 1.2, 0.4],
            [0.3, 0.0, 0.0, 1.0, 0.6, 0.0, 0.0, 0.0],
            [0.0, 0.8, 0.0, 0.0, 0.0, 0.5, 0.0, 0.2],
        ];
        Self {
            table_half_width: TABLE_HALF_WIDTH,
            table_depth: TABLE_DEPTH,
            launch_pos: [0.0, -1.3, 0.25],
            base_velocity: [0.0, 4.0, 2.2],
            coupling,
            noise_sigma: 0.0,
            gravity: 9.81,
            dt: 0.02,
            bounds: ParamBounds::default(),
            seed: 0,
        }
    }

    /// `sim-default` with 0.05 m/s launch noise.
    pub fn sim_noisy() -> Self {
        Self {
            noise_sigma: 0.05,
            ..Self::sim_default()
        }
    }

    pub fn profile(name: &str) -> Option<Self> {
        match name {
            DEFAULT_PROFILE => Some(Self::sim_default()),
            NOISY_PROFILE => Some(Self::sim_noisy()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.dt.is_nan() || self.dt <= 0.0 {
            return Err(EnvError::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.noise_sigma.is_nan() || self.noise_sigma < 0.0 {
            return Err(EnvError::Config(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        if self.gravity.is_nan() || self.gravity <= 0.0 {
            return Err(EnvError::Config(format!(
                "gravity must be > 0, got {}",
                self.gravity
            )));
        }
        if self.launch_pos[2].is_nan() || self.launch_pos[2] <= TABLE_HEIGHT {
            return Err(EnvError::Config(
                "launch height must be above the table plane".into(),
            ));
        }
        if !(self.table_half_width > 0.0 && self.table_depth > 0.0) {
            return Err(EnvError::Config("table dimensions must be positive".into()));
        }
        if self.bounds.lo.partial_cmp(&self.bounds.hi) != Some(std::cmp::Ordering::Less) {
            return Err(EnvError::Config(
                "parameter bounds must satisfy lo < hi".into(),
            ));
        }
        Ok(())
    }

    /// Deterministic launch velocity for `params` (no noise).
    pub fn launch_velocity(&self, params: &ParamVector) -> [f64; 3] {
        let dev = params.deviation();
        let mut v = self.base_velocity;
        for (axis, row) in self.coupling.iter().enumerate() {
            v[axis] += row.iter().zip(&dev).map(|(c, d)| c * d).sum::<f64>();
        }
        v
    }

    pub fn on_table(&self, x: f64, y: f64) -> bool {
        x.abs() <= self.table_half_width && (0.0..=self.table_depth).contains(&y)
    }
}

/// Closed-form flight for a given launch velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flight {
    pub launch: [f64; 3],
    pub velocity: [f64; 3],
    pub gravity: f64,
}

impl Flight {
    pub fn position(&self, t: f64) -> [f64; 3] {
        [
            self.launch[0] + self.velocity[0] * t,
            self.launch[1] + self.velocity[1] * t,
            self.launch[2] + self.velocity[2] * t - 0.5 * self.gravity * t * t,
        ]
    }

    /// Time of the highest point, clipped to the launch.
    pub fn apex_time(&self) -> f64 {
        (self.velocity[2] / self.gravity).max(0.0)
    }

    pub fn peak_height(&self) -> f64 {
        let vz = self.velocity[2];
        if vz > 0.0 {
            self.launch[2] + vz * vz / (2.0 * self.gravity)
        } else {
            self.launch[2]
        }
    }

    /// First crossing of the table plane after launch.
    pub fn landing_time(&self) -> f64 {
        let vz = self.velocity[2];
        let h = self.launch[2] - TABLE_HEIGHT;
        (vz + (vz * vz + 2.0 * self.gravity * h).sqrt()) / self.gravity
    }
}

/// Simulates one hit with parameters `params`.
///
/// The returned trace has id 0; [`TraceCache::append`] assigns the real id.
pub fn rollout<R: Rng + ?Sized>(
    cfg: &EnvConfig,
    params: &ParamVector,
    rng: &mut R,
) -> Result<ExecutionTrace, EnvError> {
    cfg.validate()?;
    if !params.is_finite() || !params.within(&cfg.bounds) {
        return Err(EnvError::OutOfBounds(*params, cfg.bounds.lo, cfg.bounds.hi));
    }
    let mut velocity = cfg.launch_velocity(params);
    if cfg.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, cfg.noise_sigma).expect("sigma validated");
        for v in &mut velocity {
            *v += normal.sample(rng);
        }
    }
    let flight = Flight {
        launch: cfg.launch_pos,
        velocity,
        gravity: cfg.gravity,
    };
    let t_land = flight.landing_time();
    let t_apex = flight.apex_time();

    // grid t = t_apex + k * dt covering [0, t_land]
    let k_first = -(t_apex / cfg.dt).floor() as i64;
    let k_last = ((t_land - t_apex) / cfg.dt).floor() as i64;
    let rows: Vec<TraceRow> = (k_first..=k_last)
        .enumerate()
        .map(|(i, k)| {
            let t = if k == 0 {
                t_apex
            } else {
                t_apex + k as f64 * cfg.dt
            };
            let t = t.clamp(0.0, t_land);
            TraceRow {
                time: i as u32 + 1,
                paddle: PADDLE_STROKE[i.min(PADDLE_STROKE.len() - 1)],
                ball: flight.position(t),
            }
        })
        .collect();

    let end = flight.position(t_land);
    Ok(ExecutionTrace {
        id: 0,
        params: *params,
        rows,
        landing: LandingRecord {
            x: end[0],
            y: end[1],
            z: TABLE_HEIGHT,
            on_table: cfg.on_table(end[0], end[1]),
            peak_height: flight.peak_height(),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GoalKind {
    Point,
    MaxX,
    MinX,
    MaxY,
    MaxPeak,
    MinPeak,
}

/// What the self-improvement loop is steering towards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub kind: GoalKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<[f64; 2]>,
}

impl GoalSpec {
    pub fn point(x: f64, y: f64) -> Self {
        Self {
            kind: GoalKind::Point,
            target: Some([x, y]),
        }
    }

    pub fn of(kind: GoalKind) -> Self {
        Self { kind, target: None }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        match (self.kind, self.target) {
            (GoalKind::Point, Some(t)) if t.iter().all(|v| v.is_finite()) => Ok(()),
            (GoalKind::Point, _) => Err(EnvError::Goal("point goal needs a finite target".into())),
            (_, None) => Ok(()),
            (kind, Some(_)) => Err(EnvError::Goal(format!("{kind:?} goal takes no target"))),
        }
    }
}

/// Lower is better. Point goals give metres; the directional kinds give signed scores.
pub fn distance_to_goal(landing: &LandingRecord, goal: &GoalSpec) -> f64 {
    match goal.kind {
        GoalKind::Point => {
            let [tx, ty] = goal.target.unwrap_or([0.0, 0.0]);
            (landing.x - tx).hypot(landing.y - ty)
        }
        GoalKind::MaxX => -landing.x,
        GoalKind::MinX => landing.x,
        GoalKind::MaxY => -landing.y,
        GoalKind::MaxPeak if landing.on_table => -landing.peak_height,
        GoalKind::MinPeak if landing.on_table => landing.peak_height,
        GoalKind::MaxPeak | GoalKind::MinPeak => f64::INFINITY,
    }
}

/// Axis-aligned box in parameter space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRegion {
    pub lo: ParamVector,
    pub hi: ParamVector,
}

impl ParamRegion {
    pub fn full(bounds: &ParamBounds) -> Self {
        Self {
            lo: ParamVector([bounds.lo; 8]),
            hi: ParamVector([bounds.hi; 8]),
        }
    }

    pub fn point(p: ParamVector) -> Self {
        Self { lo: p, hi: p }
    }

    /// Everything in `[0.8, 1.2]` except a given coordinate.
    fn narrow_with(overrides: &[(usize, f64, f64)]) -> Self {
        let mut lo = ParamVector([0.8; 8]);
        let mut hi = ParamVector([1.2; 8]);
        for &(i, l, h) in overrides {
            lo[i] = l;
            hi[i] = h;
        }
        Self { lo, hi }
    }

    /// Seeds that all land on the left half (`g` in `[0.5, 0.8]`).
    pub fn left_biased() -> Self {
        Self::narrow_with(&[(6, 0.5, 0.8)])
    }

    /// Seeds that all land on the half of the court nearest the net.
    pub fn lower_half() -> Self {
        Self::narrow_with(&[
            (0, 0.8, 1.0),
            (1, 0.8, 1.0),
            (3, 0.5, 0.6),
            (4, 0.8, 1.0),
            (5, 0.8, 1.0),
        ])
    }

    pub fn within(&self, bounds: &ParamBounds) -> bool {
        self.lo.within(bounds) && self.hi.within(bounds) && (0..8).all(|i| self.lo[i] <= self.hi[i])
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        let mut p = self.lo;
        for i in 0..8 {
            if self.hi[i] > self.lo[i] {
                p[i] = rng.random_range(self.lo[i]..=self.hi[i]);
            }
        }
        p
    }
}

/// Fresh cache of `n` rollouts sampled uniformly from `region`.
pub fn seed_cache<R: Rng + ?Sized>(
    cfg: &EnvConfig,
    region: &ParamRegion,
    n: usize,
    rng: &mut R,
) -> Result<TraceCache, EnvError> {
    if n == 0 {
        return Err(EnvError::Config("seed cache needs n >= 1".into()));
    }
    if !region.within(&cfg.bounds) {
        return Err(EnvError::Config(
            "seed region must lie within the parameter bounds".into(),
        ));
    }
    let mut cache = TraceCache::with_bounds(cfg.bounds);
    for _ in 0..n {
        let params = region.sample(rng);
        let trace = rollout(cfg, &params, rng)?;
        cache.append(trace)?;
    }
    Ok(cache)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn run(p: ParamVector) -> ExecutionTrace {
        rollout(&EnvConfig::sim_default(), &p, &mut seed::rng(0)).unwrap()
    }

    #[test]
    fn neutral_parameters_match_closed_form() {
        let t = run(ParamVector::ONES);
        let t_star = (2.2 + (2.2f64 * 2.2 + 4.0 * 4.905 * 0.25).sqrt()) / 9.81;
        assert!((t.landing.y - (-1.3 + 4.0 * t_star)).abs() < 1e-12);
        assert!(t.landing.x.abs() < 1e-15);
        assert!(t.landing.on_table);
        assert!((t.landing.peak_height - (0.25 + 2.2 * 2.2 / (2.0 * 9.81))).abs() < 1e-12);
    }

    #[test]
    fn g_steers_right() {
        let mut p = ParamVector::ONES;
        p[6] = 1.5;
        assert!(run(p).landing.x > run(ParamVector::ONES).landing.x);
    }

    #[test]
    fn deterministic_without_noise() {
        let p = ParamVector([0.9, 1.1, 1.0, 0.7, 1.2, 1.0, 0.6, 1.3]);
        assert_eq!(run(p), run(p));
    }

    #[test]
    fn noise_changes_outcome_but_is_seeded() {
        let cfg = EnvConfig::sim_noisy();
        let a = rollout(&cfg, &ParamVector::ONES, &mut seed::rng(4)).unwrap();
        let b = rollout(&cfg, &ParamVector::ONES, &mut seed::rng(4)).unwrap();
        let c = rollout(&cfg, &ParamVector::ONES, &mut seed::rng(5)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.landing, c.landing);
    }

    #[test]
    fn rows_end_at_landing_and_hit_the_apex() {
        let t = run(ParamVector::ONES);
        assert!(t.rows.len() >= 20 && t.rows.len() <= 35, "{}", t.rows.len());
        assert!((t.sampled_peak() - t.landing.peak_height).abs() < 1e-9);
        assert!(t.rows.iter().all(|r| r.ball[2] >= -1e-12));
        assert_eq!(t.rows[0].paddle, PADDLE_STROKE[0]);
        assert_eq!(t.rows.last().unwrap().paddle, PADDLE_STROKE[4]);
    }

    #[test]
    fn out_of_bounds_rejected() {
        let mut p = ParamVector::ONES;
        p[0] = 1.6;
        assert!(matches!(
            rollout(&EnvConfig::sim_default(), &p, &mut seed::rng(0)),
            Err(EnvError::OutOfBounds(..))
        ));
    }

    #[test]
    fn goal_distances() {
        let on = LandingRecord {
            x: 0.511,
            y: 0.790,
            z: 0.0,
            on_table: true,
            peak_height: 0.5,
        };
        assert_eq!(distance_to_goal(&on, &GoalSpec::point(0.511, 0.790)), 0.0);
        assert_eq!(distance_to_goal(&on, &GoalSpec::of(GoalKind::MaxX)), -0.511);
        assert_eq!(distance_to_goal(&on, &GoalSpec::of(GoalKind::MinX)), 0.511);
        assert_eq!(distance_to_goal(&on, &GoalSpec::of(GoalKind::MaxY)), -0.790);
        assert_eq!(distance_to_goal(&on, &GoalSpec::of(GoalKind::MinPeak)), 0.5);
        let off = LandingRecord {
            on_table: false,
            ..on
        };
        assert_eq!(
            distance_to_goal(&off, &GoalSpec::of(GoalKind::MaxPeak)),
            f64::INFINITY
        );
        assert_eq!(
            distance_to_goal(&off, &GoalSpec::of(GoalKind::MinPeak)),
            f64::INFINITY
        );
    }

    #[test]
    fn goal_validation() {
        assert!(GoalSpec::point(0.0, 1.0).validate().is_ok());
        assert!(GoalSpec::of(GoalKind::Point).validate().is_err());
        let bad = GoalSpec {
            kind: GoalKind::MaxX,
            target: Some([0.0, 0.0]),
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn seed_cache_sizes_and_regions() {
        let cfg = EnvConfig::sim_default();
        let c = seed_cache(&cfg, &ParamRegion::left_biased(), 24, &mut seed::rng(1)).unwrap();
        assert_eq!(c.len(), 24);
        assert!(c.traces().iter().all(|t| t.landing.x < 0.0));

        let p = ParamVector([0.9, 1.1, 1.0, 0.7, 1.2, 1.0, 0.6, 1.3]);
        let same = seed_cache(&cfg, &ParamRegion::point(p), 5, &mut seed::rng(1)).unwrap();
        assert!(same
            .traces()
            .iter()
            .all(|t| t.landing == same.traces()[0].landing));

        let lower = seed_cache(&cfg, &ParamRegion::lower_half(), 200, &mut seed::rng(2)).unwrap();
        assert!(lower
            .traces()
            .iter()
            .all(|t| t.landing.on_table && t.landing.y < TABLE_DEPTH / 2.0));
        let region = ParamRegion::lower_half();
        for corner in [region.lo, region.hi] {
            let t = rollout(&cfg, &corner, &mut seed::rng(0)).unwrap();
            assert!(
                t.landing.on_table && t.landing.y < TABLE_DEPTH / 2.0,
                "{:?}",
                t.landing
            );
        }
    }

    #[test]
    fn seed_cache_rejects_bad_region() {
        let cfg = EnvConfig::sim_default();
        let region = ParamRegion::point(ParamVector([2.0; 8]));
        assert!(seed_cache(&cfg, &region, 3, &mut seed::rng(0)).is_err());
        assert!(seed_cache(&cfg, &ParamRegion::left_biased(), 0, &mut seed::rng(0)).is_err());
    }
}
