//! Closed-loop episodes: perceive, plan, fly, score.
//!
//! World layout: the gate plane sits at `x = gate_plane_x` and the drone
//! hovers at `x = drone_x > gate_plane_x` looking toward `-x`, so the depth
//! is `drone_x - gate_plane_x`. An episode hovers through two sensing
//! intervals plus the perception latency of the selected mode, then flies a
//! minimum-jerk path ending on the gate plane at the predicted intercept.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{motor_power, trajectory_energy, EnergyModel, RotorSpeedProfile, MOTORS};
use crate::error::{invalid, Error, Result};
use crate::fit::{build_dataset, training_depths};
use crate::pgnn::{predict, train_pgnn, MlpParams, TrainConfig};
use crate::planner::{min_jerk_trajectory, predict_intercept, sample_state, PlannerInput};
use crate::scene::{
    step_gate, EventFrame, EventSimulator, GateState, RingImage, SensorConfig, WorldConfig,
};
use crate::snn::{BoundingBox, EventTracker, LifConfig};

/// Event-path latency (s).
pub const EVENT_LATENCY: f64 = 0.2;
/// Depth-path latency (s): the event path plus two seconds of image processing.
pub const DEPTH_LATENCY: f64 = 2.2;
/// Flight energy integration step (s).
pub const ENERGY_DT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerceptionMode {
    EventSnn,
    DepthBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlannerMode {
    Pgnn,
    VanillaAnn,
}

impl PerceptionMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::EventSnn => "event-snn",
            Self::DepthBaseline => "depth-baseline",
        }
    }

    pub fn default_latency(self) -> f64 {
        match self {
            Self::EventSnn => EVENT_LATENCY,
            Self::DepthBaseline => DEPTH_LATENCY,
        }
    }
}

impl PlannerMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Pgnn => "pgnn",
            Self::VanillaAnn => "vanilla-ann",
        }
    }
}

/// One episode setup. Every field has a default; see the README for the
/// config-file schema.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    pub drone_x: f64,
    pub drone_y: f64,
    /// Flight altitude, shared by the gate center (m).
    pub altitude: f64,
    pub gate_y: f64,
    /// Signed lateral gate velocity (m/s).
    pub gate_velocity: f64,
    /// Corridor half-width L (m).
    pub gate_bound: f64,
    pub gate_radius: f64,
    pub gate_plane_x: f64,
    pub drone_radius: f64,
    /// Gaussian noise of the depth reading (m).
    pub depth_noise_sigma: f64,
    /// Depth-path lateral noise is this times the squared range (1/m).
    pub depth_lateral_noise: f64,
    /// Depth-path tracker update rate (Hz).
    pub depth_rate_hz: f64,
    pub perception: PerceptionMode,
    pub planner: PlannerMode,
    /// Overrides the mode default when set (s).
    pub latency: Option<f64>,
    /// Time between the two gate observations (s).
    pub sensing_interval: f64,
    /// Consecutive empty bins tolerated before the track is lost.
    pub max_missed_bins: usize,
    pub runs_per_point: usize,
    pub seed: u64,
    pub sensor: SensorConfig,
    pub lif: LifConfig,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            drone_x: 2.0,
            drone_y: 0.0,
            altitude: 1.0,
            gate_y: 2.0,
            gate_velocity: -1.0,
            gate_bound: 2.0,
            gate_radius: 1.0,
            gate_plane_x: -2.0,
            drone_radius: 0.25,
            depth_noise_sigma: 0.0,
            depth_lateral_noise: 0.002,
            depth_rate_hz: 30.0,
            perception: PerceptionMode::EventSnn,
            planner: PlannerMode::Pgnn,
            latency: None,
            sensing_interval: 0.1,
            max_missed_bins: 3,
            runs_per_point: 10,
            seed: 0,
            sensor: SensorConfig::default(),
            lif: LifConfig::default(),
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs_per_point < 1 {
            return Err(invalid("runs_per_point must be at least 1"));
        }
        if let Some(l) = self.latency {
            if !(l >= 0.0) {
                return Err(invalid(format!("latency must be non-negative, got {l}")));
            }
        }
        if !(self.drone_x > self.gate_plane_x) {
            return Err(Error::NonPositiveDepth(self.drone_x - self.gate_plane_x));
        }
        if !(self.drone_radius >= 0.0 && self.drone_radius < self.gate_radius) {
            return Err(invalid("drone radius must be smaller than the gate radius"));
        }
        if !(self.depth_noise_sigma >= 0.0 && self.depth_lateral_noise >= 0.0) {
            return Err(invalid("noise levels must be non-negative"));
        }
        if !(self.depth_rate_hz > 0.0) {
            return Err(invalid("depth rate must be positive"));
        }
        self.world()?;
        self.lif.validate()
    }

    pub fn latency(&self) -> f64 {
        self.latency.unwrap_or(self.perception.default_latency())
    }

    pub fn depth(&self) -> f64 {
        self.drone_x - self.gate_plane_x
    }

    pub fn clearance(&self) -> f64 {
        self.gate_radius - self.drone_radius
    }

    pub fn gate(&self) -> Result<GateState> {
        let mut g = GateState::new(
            self.gate_y,
            self.gate_velocity,
            self.gate_bound,
            self.gate_radius,
            self.gate_plane_x,
        )?;
        g.center_z = self.altitude;
        Ok(g)
    }

    pub fn world(&self) -> Result<WorldConfig> {
        let w = WorldConfig {
            gate: self.gate()?,
            drone: [self.drone_x, self.drone_y, self.altitude],
            sensing_interval: self.sensing_interval,
            sensor: self.sensor,
            seed: self.seed,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Calibrated energy model and both velocity networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Models {
    pub energy: EnergyModel,
    pub pgnn: MlpParams,
    pub vanilla: MlpParams,
}

impl Models {
    /// Default calibration, 21-depth dataset, 2000 epochs each with
    /// `lambda = 1e-4` and `lambda = 0`.
    pub fn train_default(seed: u64) -> Result<Self> {
        let energy = EnergyModel::calibrated_default()?;
        let dataset = build_dataset(&energy, &training_depths())?;
        let base = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        let pgnn = train_pgnn(&dataset, &base)?.params;
        let vanilla = train_pgnn(
            &dataset,
            &TrainConfig {
                lambda: 0.0,
                ..base
            },
        )?
        .params;
        Ok(Self {
            energy,
            pgnn,
            vanilla,
        })
    }

    pub fn network(&self, mode: PlannerMode) -> &MlpParams {
        match mode {
            PlannerMode::Pgnn => &self.pgnn,
            PlannerMode::VanillaAnn => &self.vanilla,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    /// Two sensing intervals (s).
    pub perception: f64,
    pub latency: f64,
    pub flight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub success: bool,
    /// Hover plus flight energy (J).
    pub energy: f64,
    pub hover_energy: f64,
    pub flight_energy: f64,
    /// Lateral miss at the gate plane (m); infinite when the track was lost.
    pub miss_distance: f64,
    pub t_traj: f64,
    pub v_pred: f64,
    pub y_star: f64,
    pub measured_depth: f64,
    pub timing: Timing,
    pub tracking_lost: bool,
    /// Some flight sample asked for more than the maximum rotor speed.
    pub saturated: bool,
}

/// Random draws of one episode, taken in a fixed order so every mode sees
/// the same world.
#[derive(Debug, Clone, Copy)]
struct Draws {
    depth_noise: [f64; 2],
    lateral_noise: [f64; 2],
    sensor_seed: u64,
}

impl Draws {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut n = || -> f64 { StandardNormal.sample(&mut rng) };
        let depth_noise = [n(), n()];
        let lateral_noise = [n(), n()];
        Self {
            depth_noise,
            lateral_noise,
            sensor_seed: rng.random(),
        }
    }
}

/// Gate center column recovered from a box, using the known projected radius
/// when the box is cut by an image border.
pub fn fused_center_x(b: &BoundingBox, radius_px: f64, width: usize) -> f64 {
    let margin = 2;
    let left = b.x_min <= margin;
    let right = b.x_max >= width as i64 - 1 - margin;
    // a partly hidden ring comes out narrow
    let narrow = ((b.x_max - b.x_min) as f64) < 1.6 * radius_px;
    let nearer_left = b.x_min < width as i64 - 1 - b.x_max;
    match (left, right) {
        (false, true) => b.x_min as f64 + radius_px,
        (true, false) => b.x_max as f64 - radius_px,
        (false, false) if narrow && nearer_left => b.x_max as f64 - radius_px,
        (false, false) if narrow => b.x_min as f64 + radius_px,
        _ => b.center_x as f64,
    }
}

/// Tracker gate positions at `t = dt` and `t = 2 dt`.
fn track_event(cfg: &EpisodeConfig, depth_reading: [f64; 2], sensor_seed: u64) -> Result<[f64; 2]> {
    let mut world = cfg.world()?;
    world.seed = sensor_seed;
    let mut sim = EventSimulator::new(&world)?;
    let camera = *sim.camera();
    let mut tracker = EventTracker::new(cfg.lif, camera.width, camera.height)?;
    let bins = (cfg.sensing_interval / cfg.sensor.frame_period)
        .round()
        .max(1.0) as usize;
    let mut latest: Option<BoundingBox> = None;
    let mut missed = 0usize;
    let mut out = [0.0; 2];
    for k in 1..=2 * bins {
        let packet = sim.next_packet()?;
        let frame = EventFrame::from_events(camera.width, camera.height, &packet.events);
        match tracker.process(frame)? {
            Some(b) => {
                latest = Some(b);
                missed = 0;
            }
            None => {
                missed += 1;
                if missed > cfg.max_missed_bins {
                    return Err(Error::TrackingLost(missed));
                }
            }
        }
        if k % bins == 0 {
            let b = latest.ok_or(Error::TrackingLost(missed))?;
            let i = k / bins - 1;
            let d = depth_reading[i];
            let radius_px = camera.focal_px * cfg.gate_radius / d;
            let u = fused_center_x(&b, radius_px, camera.width);
            out[i] = camera.unproject(u, b.center_y as f64, d)?[1];
        }
    }
    Ok(out)
}

/// Ground-truth gate positions at the depth camera's update instants, with
/// range-dependent lateral noise.
fn track_depth(cfg: &EpisodeConfig, gate: &GateState, draws: &Draws) -> [f64; 2] {
    let mut out = [0.0; 2];
    for (i, o) in out.iter_mut().enumerate() {
        let t = (i + 1) as f64 * cfg.sensing_interval;
        let sample_t = ((t * cfg.depth_rate_hz) + 1e-9).floor() / cfg.depth_rate_hz;
        let g = step_gate(gate, sample_t);
        let dy = g.y - cfg.drone_y;
        let range2 = cfg.depth() * cfg.depth() + dy * dy;
        *o = g.y + cfg.depth_lateral_noise * range2 * draws.lateral_noise[i];
    }
    out
}

/// Runs one perceive-plan-fly episode.
pub fn run_episode(cfg: &EpisodeConfig, models: &Models) -> Result<EpisodeResult> {
    cfg.validate()?;
    let draws = Draws::new(cfg.seed);
    let gate = cfg.gate()?;
    let depth = cfg.depth();
    let latency = cfg.latency();
    let perception = 2.0 * cfg.sensing_interval;
    let hover_power = MOTORS as f64
        * motor_power(
            &models.energy.coefficients,
            models.energy.flight.hover_omega,
            0.0,
        );
    let hover_energy = hover_power * (perception + latency);
    let depth_reading = draws
        .depth_noise
        .map(|n| (depth + cfg.depth_noise_sigma * n).max(1e-3));

    let mut result = EpisodeResult {
        success: false,
        energy: hover_energy,
        hover_energy,
        flight_energy: 0.0,
        miss_distance: f64::INFINITY,
        t_traj: 0.0,
        v_pred: 0.0,
        y_star: 0.0,
        measured_depth: depth_reading[1],
        timing: Timing {
            perception,
            latency,
            flight: 0.0,
        },
        tracking_lost: false,
        saturated: false,
    };

    let observed = match cfg.perception {
        PerceptionMode::EventSnn => match track_event(cfg, depth_reading, draws.sensor_seed) {
            Ok(y) => y,
            Err(Error::TrackingLost(_)) => {
                result.tracking_lost = true;
                return Ok(result);
            }
            Err(e) => return Err(e),
        },
        PerceptionMode::DepthBaseline => track_depth(cfg, &gate, &draws),
    };
    let [y1, y2] = observed.map(|y| y.clamp(-cfg.gate_bound, cfg.gate_bound));

    let out = predict(models.network(cfg.planner), depth_reading[1])?;
    let intercept = predict_intercept(&PlannerInput {
        t_traj: latency + out.t_traj,
        bound: cfg.gate_bound,
        y1,
        y2,
        dt: cfg.sensing_interval,
    })?;

    let start = [cfg.drone_x, cfg.drone_y, cfg.altitude];
    let end = [
        cfg.drone_x - depth_reading[1],
        intercept.y_star,
        cfg.altitude,
    ];
    let traj = min_jerk_trajectory(start, end, out.t_traj)?;

    // first instant the drone reaches the true gate plane, else the end
    let reach = |t: f64| sample_state(&traj, t).map(|s| s.position[0] - cfg.gate_plane_x);
    let t_cross = if reach(out.t_traj)? > 0.0 {
        out.t_traj
    } else {
        crate::numeric::bisect(|t| reach(t).unwrap_or(0.0), 0.0, out.t_traj, 1e-12)
            .unwrap_or(out.t_traj)
    };
    let drone_y = sample_state(&traj, t_cross)?.position[1];
    let gate_y = step_gate(&gate, perception + latency + t_cross).y;

    let flight = &models.energy.flight;
    let n = (out.t_traj / ENERGY_DT).ceil() as usize;
    let mut saturated = false;
    let mut omega = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = (k as f64 * ENERGY_DT).min(out.t_traj);
        let w = flight.unbounded_rotor_speed(sample_state(&traj, t)?.speed());
        saturated |= w > flight.omega_max;
        omega.push(w.min(flight.omega_max));
    }
    let flight_energy = trajectory_energy(
        &models.energy.coefficients,
        &RotorSpeedProfile::symmetric(&omega, ENERGY_DT)?,
    )?;

    let miss = (drone_y - gate_y).abs();
    result.success = miss < cfg.clearance();
    result.miss_distance = miss;
    result.flight_energy = flight_energy;
    result.energy = hover_energy + flight_energy;
    result.t_traj = out.t_traj;
    result.v_pred = out.v_pred;
    result.y_star = intercept.y_star;
    result.timing.flight = out.t_traj;
    result.saturated = saturated;
    Ok(result)
}

/// Seed of run `run` derived from a base seed.
pub fn run_seed(base: u64, run: usize) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(run as u64)
}

/// Uniform lateral gate speed range per run (m/s), with a random sign.
pub const DEFAULT_GATE_SPEED: [f64; 2] = [0.75, 1.25];

fn gate_velocity(seed: u64, speed: [f64; 2]) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5E_ED0F_6A7E);
    let v = rng.random_range(speed[0]..=speed[1]);
    if rng.random_bool(0.5) {
        v
    } else {
        -v
    }
}

/// A benchmark starting point: runs cycle through `drone_y` and `gate_y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCell {
    pub drone_x: f64,
    pub drone_y: Vec<f64>,
    pub gate_y: Vec<f64>,
}

impl GridCell {
    fn validate(&self) -> Result<()> {
        if self.drone_y.is_empty() || self.gate_y.is_empty() {
            return Err(invalid("grid cell needs at least one drone_y and gate_y"));
        }
        Ok(())
    }

    /// Largest absolute drone lateral start, used as the cell label.
    pub fn drone_offset(&self) -> f64 {
        self.drone_y.iter().fold(0.0, |m, y| m.max(y.abs()))
    }

    /// Episode of run `run` derived from `base`.
    pub fn episode(&self, base: &EpisodeConfig, run: usize, speed: [f64; 2]) -> EpisodeConfig {
        let seed = run_seed(base.seed, run);
        EpisodeConfig {
            drone_x: self.drone_x,
            drone_y: self.drone_y[run % self.drone_y.len()],
            gate_y: self.gate_y[run % self.gate_y.len()],
            gate_velocity: gate_velocity(seed, speed),
            seed,
            ..*base
        }
    }
}

/// Benchmark grid file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub episode: EpisodeConfig,
    #[serde(default = "default_speed")]
    pub gate_speed: [f64; 2],
    #[serde(rename = "cell")]
    pub cells: Vec<GridCell>,
}

fn default_speed() -> [f64; 2] {
    DEFAULT_GATE_SPEED
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(invalid("grid has no cells"));
        }
        let [lo, hi] = self.gate_speed;
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            return Err(invalid(format!("bad gate speed range [{lo}, {hi}]")));
        }
        self.episode.validate()?;
        for c in &self.cells {
            c.validate()?;
            for (i, _) in c.drone_y.iter().chain(&c.gate_y).enumerate() {
                c.episode(&self.episode, i, self.gate_speed).validate()?;
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let g: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        g.validate()?;
        Ok(g)
    }

    /// Fifteen starting points over depths 2 to 6 m. Lateral signs
    /// alternate run to run; `0/+-1` style entries alternate between the
    /// listed values.
    pub fn standard() -> Self {
        let cell = |x: f64, dy: &[f64], gy: &[f64]| GridCell {
            drone_x: x,
            drone_y: dy.to_vec(),
            gate_y: gy.to_vec(),
        };
        let mut cells = Vec::new();
        for x in [0.0, 1.0, 2.0] {
            cells.push(cell(x, &[0.0], &[2.0, -2.0]));
            cells.push(cell(x, &[1.0, -1.0], &[-1.0, 1.0]));
            cells.push(cell(x, &[2.0, -2.0], &[1.0, -1.0]));
        }
        cells.push(cell(3.0, &[0.0], &[0.0]));
        cells.push(cell(3.0, &[1.0, -1.0, 1.0, -1.0], &[0.0, 0.0, 1.0, -1.0]));
        cells.push(cell(3.0, &[2.0, -2.0], &[0.0]));
        cells.push(cell(4.0, &[0.0], &[2.0, -2.0]));
        cells.push(cell(4.0, &[1.0, -1.0, 1.0, -1.0], &[1.0, -1.0, -2.0, 2.0]));
        cells.push(cell(4.0, &[2.0, -2.0], &[-2.0, 2.0]));
        Self {
            episode: EpisodeConfig::default(),
            gate_speed: DEFAULT_GATE_SPEED,
            cells,
        }
    }
}

fn run_many(configs: &[EpisodeConfig], models: &Models) -> Result<Vec<EpisodeResult>> {
    configs.par_iter().map(|c| run_episode(c, models)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub depth: f64,
    pub drone_x: f64,
    pub drone_y: f64,
    pub perception: PerceptionMode,
    pub planner: PlannerMode,
    pub runs: usize,
    pub success_rate: f64,
    pub mean_energy: f64,
}

/// Success rate and mean energy per cell for both perception modes.
pub fn success_rate_grid(grid: &GridSpec, models: &Models) -> Result<Vec<GridRow>> {
    grid.validate()?;
    let runs = grid.episode.runs_per_point;
    let mut rows = Vec::new();
    for cell in &grid.cells {
        for mode in [PerceptionMode::EventSnn, PerceptionMode::DepthBaseline] {
            let base = EpisodeConfig {
                perception: mode,
                ..grid.episode
            };
            let configs: Vec<_> = (0..runs)
                .map(|r| cell.episode(&base, r, grid.gate_speed))
                .collect();
            let results = run_many(&configs, models)?;
            rows.push(GridRow {
                depth: configs[0].depth(),
                drone_x: cell.drone_x,
                drone_y: cell.drone_offset(),
                perception: mode,
                planner: base.planner,
                runs,
                success_rate: results.iter().filter(|r| r.success).count() as f64 / runs as f64,
                mean_energy: results.iter().map(|r| r.energy).sum::<f64>() / runs as f64,
            });
        }
    }
    Ok(rows)
}

/// Twenty-five starting points: five depths times five lateral offsets, the
/// gate starting mid-corridor.
pub fn energy_suite(base: &EpisodeConfig) -> Vec<GridCell> {
    let mut cells = Vec::new();
    for x in [0.0, 1.0, 2.0, 3.0, 4.0] {
        for y in [-2.0, -1.0, 0.0, 1.0, 2.0] {
            cells.push(GridCell {
                drone_x: x + base.gate_plane_x + 2.0,
                drone_y: vec![y],
                gate_y: vec![0.0],
            });
        }
    }
    cells
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub perception: PerceptionMode,
    pub planner: PlannerMode,
    pub flights: usize,
    pub runs: usize,
    pub mean_energy: f64,
    pub mean_hover_energy: f64,
    pub mean_flight_energy: f64,
    pub success_rate: f64,
}

/// Mean over the suite of per-flight means over `runs_per_point` runs.
pub fn run_suite(base: &EpisodeConfig, speed: [f64; 2], models: &Models) -> Result<SuiteSummary> {
    base.validate()?;
    let cells = energy_suite(base);
    let runs = base.runs_per_point;
    let configs: Vec<_> = cells
        .iter()
        .flat_map(|c| (0..runs).map(move |r| c.episode(base, r, speed)))
        .collect();
    let results = run_many(&configs, models)?;
    let n = results.len() as f64;
    let mean = |f: fn(&EpisodeResult) -> f64| results.iter().map(f).sum::<f64>() / n;
    Ok(SuiteSummary {
        perception: base.perception,
        planner: base.planner,
        flights: cells.len(),
        runs,
        mean_energy: mean(|r| r.energy),
        mean_hover_energy: mean(|r| r.hover_energy),
        mean_flight_energy: mean(|r| r.flight_energy),
        success_rate: results.iter().filter(|r| r.success).count() as f64 / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub perception: PerceptionMode,
    pub planner: PlannerMode,
    pub mean_energy: f64,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ablation {
    pub cells: [AblationCell; 4],
    /// Depth-plus-vanilla mean energy over event-plus-PgNN mean energy.
    pub corner_ratio: f64,
}

/// All four perception and planner pairings on the energy suite, sharing
/// world seeds.
pub fn ablation_matrix(base: &EpisodeConfig, speed: [f64; 2], models: &Models) -> Result<Ablation> {
    let pairs = [
        (PerceptionMode::EventSnn, PlannerMode::Pgnn),
        (PerceptionMode::EventSnn, PlannerMode::VanillaAnn),
        (PerceptionMode::DepthBaseline, PlannerMode::Pgnn),
        (PerceptionMode::DepthBaseline, PlannerMode::VanillaAnn),
    ];
    let mut cells = Vec::with_capacity(4);
    for (perception, planner) in pairs {
        let cfg = EpisodeConfig {
            perception,
            planner,
            latency: None,
            ..*base
        };
        let s = run_suite(&cfg, speed, models)?;
        cells.push(AblationCell {
            perception,
            planner,
            mean_energy: s.mean_energy,
            success_rate: s.success_rate,
        });
    }
    let cells: [AblationCell; 4] = cells.try_into().expect("four cells");
    Ok(Ablation {
        corner_ratio: cells[3].mean_energy / cells[0].mean_energy,
        cells,
    })
}

/// Mean IOU of the tracked box against the true ring box over `frames`
/// bins. Bins without a box score zero.
pub fn tracking_iou(world: &WorldConfig, lif: &LifConfig, frames: usize) -> Result<f64> {
    let mut sim = EventSimulator::new(world)?;
    let camera = *sim.camera();
    let mut tracker = EventTracker::new(*lif, camera.width, camera.height)?;
    let mut total = 0.0;
    let mut scored = 0usize;
    for k in 0..frames {
        let before = *sim.gate();
        let packet = sim.next_packet()?;
        let frame = EventFrame::from_events(camera.width, camera.height, &packet.events);
        let tracked = tracker.process(frame)?;
        // the first bin has no previous events to recover
        if k == 0 {
            continue;
        }
        let truth = RingImage::of(&camera, &before, world.sensor.ring_thickness_px)?
            .covered_box(&camera)
            .map(|(a, b, c, d)| BoundingBox::from_extents(a, b, c, d))
            .transpose()?;
        if let Some(truth) = truth {
            total += tracked.map_or(0.0, |b| b.iou(&truth));
            scored += 1;
        }
    }
    if scored == 0 {
        return Err(invalid("ring never visible"));
    }
    Ok(total / scored as f64)
}

pub fn write_grid_csv<W: Write>(w: W, rows: &[GridRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "depth",
        "drone_x",
        "drone_y",
        "perception",
        "planner",
        "runs",
        "success_rate",
        "mean_energy",
    ])?;
    for r in rows {
        out.write_record([
            r.depth.to_string(),
            r.drone_x.to_string(),
            r.drone_y.to_string(),
            r.perception.name().to_owned(),
            r.planner.name().to_owned(),
            r.runs.to_string(),
            r.success_rate.to_string(),
            format!("{:.6}", r.mean_energy),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_ablation_csv<W: Write>(w: W, ablation: &Ablation) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["perception", "planner", "mean_energy", "success_rate"])?;
    for c in &ablation.cells {
        out.write_record([
            c.perception.name().to_owned(),
            c.planner.name().to_owned(),
            format!("{:.6}", c.mean_energy),
            c.success_rate.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_episode_csv<W: Write>(w: W, results: &[EpisodeResult]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "run",
        "success",
        "energy",
        "hover_energy",
        "flight_energy",
        "miss_distance",
        "t_traj",
        "v_pred",
        "y_star",
        "measured_depth",
        "tracking_lost",
        "saturated",
    ])?;
    for (i, r) in results.iter().enumerate() {
        out.write_record([
            i.to_string(),
            r.success.to_string(),
            format!("{:.6}", r.energy),
            format!("{:.6}", r.hover_energy),
            format!("{:.6}", r.flight_energy),
            format!("{:.6}", r.miss_distance),
            format!("{:.6}", r.t_traj),
            format!("{:.6}", r.v_pred),
            format!("{:.6}", r.y_star),
            format!("{:.6}", r.measured_depth),
            r.tracking_lost.to_string(),
            r.saturated.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Runs `runs_per_point` seeded repetitions of `cfg`.
pub fn run_repeated(cfg: &EpisodeConfig, models: &Models) -> Result<Vec<EpisodeResult>> {
    cfg.validate()?;
    let configs: Vec<_> = (0..cfg.runs_per_point)
        .map(|r| EpisodeConfig {
            seed: run_seed(cfg.seed, r),
            ..*cfg
        })
        .collect();
    run_many(&configs, models)
}

/// Reads a grid file from any reader.
pub fn read_grid<R: Read>(mut r: R) -> Result<GridSpec> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    GridSpec::from_toml(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clearance_threshold() {
        let cfg = EpisodeConfig::default();
        assert_eq!(cfg.clearance(), 0.75);
        assert!(0.74 < cfg.clearance());
        assert!(!(0.76 < cfg.clearance()));
    }

    #[test]
    fn default_latencies() {
        let mut cfg = EpisodeConfig::default();
        assert_eq!(cfg.latency(), 0.2);
        cfg.perception = PerceptionMode::DepthBaseline;
        assert_eq!(cfg.latency(), 2.2);
        cfg.latency = Some(0.0);
        assert_eq!(cfg.latency(), 0.0);
    }

    #[test]
    fn config_validation() {
        let bad = EpisodeConfig {
            runs_per_point: 0,
            ..EpisodeConfig::default()
        };
        assert!(bad.validate().is_err());
        let behind = EpisodeConfig {
            drone_x: -3.0,
            ..EpisodeConfig::default()
        };
        assert!(behind.validate().is_err());
        assert!(EpisodeConfig::from_toml("drone_x = 1.0\nunknown = 3\n").is_err());
        let cfg = EpisodeConfig::from_toml(
            "drone_x = 1.0\nperception = \"depth-baseline\"\n[lif]\nbeta = 0.2\n",
        )
        .unwrap();
        assert_eq!(cfg.perception, PerceptionMode::DepthBaseline);
        assert_eq!(cfg.lif.beta, 0.2);
        assert_eq!(cfg.depth(), 3.0);
    }

    #[test]
    fn standard_grid_round_trips() {
        let g = GridSpec::standard();
        g.validate().unwrap();
        assert_eq!(g.cells.len(), 15);
        let text = toml::to_string(&g).unwrap();
        assert_eq!(GridSpec::from_toml(&text).unwrap(), g);
    }

    #[test]
    fn clipped_box_uses_radius() {
        let b = BoundingBox::from_extents(500, 639, 100, 300).unwrap();
        assert_eq!(fused_center_x(&b, 200.0, 640), 700.0);
        let b = BoundingBox::from_extents(0, 90, 100, 300).unwrap();
        assert_eq!(fused_center_x(&b, 200.0, 640), -110.0);
        let b = BoundingBox::from_extents(10, 90, 100, 300).unwrap();
        assert_eq!(fused_center_x(&b, 200.0, 640), -110.0);
        let b = BoundingBox::from_extents(500, 560, 100, 300).unwrap();
        assert_eq!(fused_center_x(&b, 200.0, 640), 700.0);
        let b = BoundingBox::from_extents(10, 90, 100, 300).unwrap();
        assert_eq!(fused_center_x(&b, 40.0, 640), 50.0);
    }

    #[test]
    fn draws_do_not_depend_on_mode() {
        let a = Draws::new(5);
        let b = Draws::new(5);
        assert_eq!(a.depth_noise, b.depth_noise);
        assert_eq!(a.sensor_seed, b.sensor_seed);
    }
}
