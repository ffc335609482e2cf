//! Synthetic world: a gate bouncing along the lateral axis, a pinhole camera
//! mounted on the hovering drone, and a coverage-change event generator.
//!
//! World axes: `x` is the depth axis (the gate plane sits at constant `x`),
//! `y` is lateral, `z` is altitude. The camera looks along `±x`; image
//! columns grow with world `+y`, image rows grow with world `-z`.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Gate moving along `y`, reflecting off the walls at `±bound`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateState {
    /// Lateral position of the gate center (m).
    pub y: f64,
    /// Signed lateral velocity (m/s). Only its sign changes over an episode.
    pub velocity: f64,
    /// Half-width of the corridor the gate travels in (m).
    pub bound: f64,
    /// Outer radius of the ring (m).
    pub radius: f64,
    /// Position of the gate plane on the depth axis (m).
    pub plane_x: f64,
    /// Altitude of the ring center (m).
    pub center_z: f64,
}

impl GateState {
    pub fn new(y: f64, velocity: f64, bound: f64, radius: f64, plane_x: f64) -> Result<Self> {
        let g = Self {
            y,
            velocity,
            bound,
            radius,
            plane_x,
            center_z: 1.0,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bound > 0.0) || !self.bound.is_finite() {
            return Err(invalid(format!(
                "gate bound must be positive, got {}",
                self.bound
            )));
        }
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(invalid(format!(
                "gate radius must be positive, got {}",
                self.radius
            )));
        }
        if !self.y.is_finite() || self.y.abs() > self.bound + 1e-12 {
            return Err(invalid(format!(
                "gate position {} outside [-{b}, {b}]",
                self.y,
                b = self.bound
            )));
        }
        if !self.velocity.is_finite() || !self.plane_x.is_finite() || !self.center_z.is_finite() {
            return Err(invalid("gate state has non-finite fields"));
        }
        Ok(())
    }

    pub fn center(&self) -> [f64; 3] {
        [self.plane_x, self.y, self.center_z]
    }

    /// Time for one full back-and-forth cycle, `4L/|v|`.
    pub fn period(&self) -> f64 {
        4.0 * self.bound / self.velocity.abs()
    }
}

/// Advances the gate by `dt` seconds with billiard reflection on `[-L, L]`.
///
/// The motion is unfolded onto a circle of circumference `4L`; the folded
/// coordinate gives the position and which half of the circle we land on
/// gives the direction.
pub fn step_gate(state: &GateState, dt: f64) -> GateState {
    let l = state.bound;
    let unfolded = (state.y + l) + state.velocity * dt;
    let m = unfolded.rem_euclid(4.0 * l);
    let (y, velocity) = if m <= 2.0 * l {
        (m - l, state.velocity)
    } else {
        (3.0 * l - m, -state.velocity)
    };
    GateState {
        y: y.clamp(-l, l),
        velocity,
        ..*state
    }
}

/// Pinhole camera on the drone, optical axis along the world depth axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub focal_px: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Camera center in world coordinates (m).
    pub position: [f64; 3],
    /// `+1.0` when looking towards `+x`, `-1.0` towards `-x`.
    pub forward: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            focal_px: 500.0,
            cx: 320.0,
            cy: 240.0,
            width: 640,
            height: 480,
            position: [0.0, 0.0, 1.0],
            forward: 1.0,
        }
    }
}

impl CameraModel {
    /// Default intrinsics mounted at `position`, looking towards the gate plane.
    pub fn looking_at_plane(position: [f64; 3], plane_x: f64) -> Self {
        let forward = if plane_x >= position[0] { 1.0 } else { -1.0 };
        Self {
            position,
            forward,
            ..Self::default()
        }
    }

    /// Distance of a world point along the optical axis.
    pub fn depth_of(&self, p: [f64; 3]) -> f64 {
        (p[0] - self.position[0]) * self.forward
    }

    pub fn project(&self, p: [f64; 3]) -> Result<(f64, f64)> {
        let depth = self.depth_of(p);
        if !(depth > 0.0) {
            return Err(Error::NonPositiveDepth(depth));
        }
        let u = self.cx + self.focal_px * (p[1] - self.position[1]) / depth;
        let v = self.cy - self.focal_px * (p[2] - self.position[2]) / depth;
        Ok((u, v))
    }

    /// Inverse projection of pixel `(u, v)` at a known optical-axis depth.
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Result<[f64; 3]> {
        if !(depth > 0.0) {
            return Err(Error::NonPositiveDepth(depth));
        }
        Ok([
            self.position[0] + self.forward * depth,
            self.position[1] + (u - self.cx) * depth / self.focal_px,
            self.position[2] - (v - self.cy) * depth / self.focal_px,
        ])
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }
}

/// Event polarity: `On` for a log-intensity increase, `Off` for a decrease.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    On,
    Off,
}

impl Polarity {
    pub fn sign(self) -> i8 {
        match self {
            Polarity::On => 1,
            Polarity::Off => -1,
        }
    }

    pub fn from_sign(s: i64) -> Option<Self> {
        match s {
            1 => Some(Polarity::On),
            -1 => Some(Polarity::Off),
            _ => None,
        }
    }
}

/// One DVS event `(x, y, p, t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub x: u16,
    pub y: u16,
    pub polarity: Polarity,
    /// Seconds since stream start.
    pub t: f64,
}

/// Event-sensor model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorConfig {
    /// Rendered ring thickness in pixels.
    pub ring_thickness_px: f64,
    /// Log-intensity step between the ring and the background.
    pub contrast: f64,
    /// Per-event log-intensity threshold.
    pub threshold: f64,
    /// Frame period; event timestamps are quantized to it (s).
    pub frame_period: f64,
    /// Spurious events per pixel per second (0 disables noise).
    pub noise_rate: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            ring_thickness_px: 2.0,
            contrast: 0.6,
            threshold: 0.2,
            frame_period: 0.01,
            noise_rate: 0.0,
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ring_thickness_px > 0.0) {
            return Err(invalid("ring thickness must be positive"));
        }
        if !(self.threshold > 0.0) || !(self.contrast >= self.threshold) {
            return Err(invalid("contrast must be at least one threshold step"));
        }
        if !(self.frame_period > 0.0) {
            return Err(invalid("frame period must be positive"));
        }
        if !(self.noise_rate >= 0.0) {
            return Err(invalid("noise rate must be non-negative"));
        }
        Ok(())
    }

    /// Events fired by a pixel whose coverage flips: `floor(contrast / threshold)`.
    pub fn events_per_change(&self) -> usize {
        ((self.contrast / self.threshold) + 1e-9).floor().max(1.0) as usize
    }
}

/// Projected annulus of a gate in pixel space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingImage {
    pub u: f64,
    pub v: f64,
    pub outer: f64,
    pub inner: f64,
}

impl RingImage {
    pub fn of(camera: &CameraModel, gate: &GateState, thickness_px: f64) -> Result<Self> {
        let c = gate.center();
        let depth = camera.depth_of(c);
        let (u, v) = camera.project(c)?;
        let outer = camera.focal_px * gate.radius / depth;
        Ok(Self {
            u,
            v,
            outer,
            inner: (outer - thickness_px).max(0.0),
        })
    }

    pub fn covers(&self, x: i64, y: i64) -> bool {
        let dx = x as f64 - self.u;
        let dy = y as f64 - self.v;
        let d2 = dx * dx + dy * dy;
        d2 <= self.outer * self.outer && d2 > self.inner * self.inner
    }

    /// Inclusive pixel bounds of the outer circle, unclipped.
    pub fn pixel_bounds(&self) -> (i64, i64, i64, i64) {
        (
            (self.u - self.outer).floor() as i64,
            (self.u + self.outer).ceil() as i64,
            (self.v - self.outer).floor() as i64,
            (self.v + self.outer).ceil() as i64,
        )
    }

    /// Tight inclusive box of covered pixels clipped to the sensor, if any.
    pub fn covered_box(&self, camera: &CameraModel) -> Option<(i64, i64, i64, i64)> {
        let (x0, x1, y0, y1) = self.pixel_bounds();
        let (x0, x1) = (x0.max(0), x1.min(camera.width as i64 - 1));
        let (y0, y1) = (y0.max(0), y1.min(camera.height as i64 - 1));
        let mut b: Option<(i64, i64, i64, i64)> = None;
        for y in y0..=y1 {
            for x in x0..=x1 {
                if self.covers(x, y) {
                    b = Some(match b {
                        None => (x, x, y, y),
                        Some((a, c, d, e)) => (a.min(x), c.max(x), d.min(y), e.max(y)),
                    });
                }
            }
        }
        b
    }
}

/// Emits events for every pixel whose ring coverage differs between the two
/// gate states. Each flipped pixel fires `events_per_change` events with
/// polarity `On` where the ring arrives and `Off` where it leaves. Output is in
/// row-major pixel order, all stamped `t`.
pub fn generate_events(
    camera: &CameraModel,
    before: &GateState,
    after: &GateState,
    t: f64,
    sensor: &SensorConfig,
) -> Result<Vec<Event>> {
    let a = RingImage::of(camera, before, sensor.ring_thickness_px)?;
    let b = RingImage::of(camera, after, sensor.ring_thickness_px)?;
    let mut out = Vec::new();
    if a == b {
        return Ok(out);
    }
    let (ax0, ax1, ay0, ay1) = a.pixel_bounds();
    let (bx0, bx1, by0, by1) = b.pixel_bounds();
    let x0 = ax0.min(bx0).max(0);
    let x1 = ax1.max(bx1).min(camera.width as i64 - 1);
    let y0 = ay0.min(by0).max(0);
    let y1 = ay1.max(by1).min(camera.height as i64 - 1);
    let n = sensor.events_per_change();
    for y in y0..=y1 {
        for x in x0..=x1 {
            let was = a.covers(x, y);
            let now = b.covers(x, y);
            if was != now {
                let polarity = if now { Polarity::On } else { Polarity::Off };
                let ev = Event {
                    x: x as u16,
                    y: y as u16,
                    polarity,
                    t,
                };
                out.extend(std::iter::repeat_n(ev, n));
            }
        }
    }
    Ok(out)
}

/// Uniform background activity for one frame, sorted row-major.
pub fn spurious_events(
    rng: &mut ChaCha8Rng,
    camera: &CameraModel,
    sensor: &SensorConfig,
    t: f64,
) -> Vec<Event> {
    let lambda = sensor.noise_rate * (camera.width * camera.height) as f64 * sensor.frame_period;
    if lambda <= 0.0 {
        return Vec::new();
    }
    let count = Poisson::new(lambda)
        .map(|p| p.sample(rng) as usize)
        .unwrap_or(0);
    let mut ev: Vec<Event> = (0..count)
        .map(|_| Event {
            x: rng.random_range(0..camera.width) as u16,
            y: rng.random_range(0..camera.height) as u16,
            polarity: if rng.random_bool(0.5) {
                Polarity::On
            } else {
                Polarity::Off
            },
            t,
        })
        .collect();
    ev.sort_by_key(|e| (e.y, e.x));
    ev
}

/// Per-pixel event counts for one time bin; polarity is discarded.
#[derive(Debug, Clone, PartialEq)]
pub struct EventFrame {
    pub width: usize,
    pub height: usize,
    pub counts: Vec<f64>,
}

impl EventFrame {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            counts: vec![0.0; width * height],
        }
    }

    pub fn from_events(width: usize, height: usize, events: &[Event]) -> Self {
        let mut f = Self::zeros(width, height);
        for e in events {
            let (x, y) = (e.x as usize, e.y as usize);
            if x < width && y < height {
                f.counts[y * width + x] += 1.0;
            }
        }
        f
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.counts[y * self.width + x]
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }
}

/// Everything needed to replay a perception window deterministically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub gate: GateState,
    /// Drone (camera) position: depth-axis x, lateral y, altitude z (m).
    pub drone: [f64; 3],
    /// Sensing interval between the two tracked gate positions (s).
    pub sensing_interval: f64,
    pub sensor: SensorConfig,
    pub seed: u64,
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        self.gate.validate()?;
        self.sensor.validate()?;
        if !(self.sensing_interval > 0.0) {
            return Err(Error::ZeroInterval(self.sensing_interval));
        }
        Ok(())
    }

    pub fn camera(&self) -> CameraModel {
        CameraModel::looking_at_plane(self.drone, self.gate.plane_x)
    }
}

/// Events of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EventPacket {
    pub t: f64,
    pub events: Vec<Event>,
}

/// Frame-by-frame event stream of the gate seen from a hovering drone.
pub struct EventSimulator {
    camera: CameraModel,
    sensor: SensorConfig,
    gate: GateState,
    frame: usize,
    rng: ChaCha8Rng,
}

impl EventSimulator {
    pub fn new(world: &WorldConfig) -> Result<Self> {
        use rand::SeedableRng;
        world.validate()?;
        Ok(Self {
            camera: world.camera(),
            sensor: world.sensor,
            gate: world.gate,
            frame: 0,
            rng: ChaCha8Rng::seed_from_u64(world.seed),
        })
    }

    pub fn camera(&self) -> &CameraModel {
        &self.camera
    }

    /// Gate state at the end of the last emitted frame.
    pub fn gate(&self) -> &GateState {
        &self.gate
    }

    pub fn time(&self) -> f64 {
        self.frame as f64 * self.sensor.frame_period
    }

    pub fn next_packet(&mut self) -> Result<EventPacket> {
        self.frame += 1;
        let t = self.time();
        let after = step_gate(&self.gate, self.sensor.frame_period);
        let mut events = generate_events(&self.camera, &self.gate, &after, t, &self.sensor)?;
        if self.sensor.noise_rate > 0.0 {
            events.extend(spurious_events(
                &mut self.rng,
                &self.camera,
                &self.sensor,
                t,
            ));
            events.sort_by_key(|e| (e.y, e.x));
        }
        self.gate = after;
        Ok(EventPacket { t, events })
    }
}

/// Writes `t,x,y,p` rows with `t` at microsecond precision.
pub fn write_events_csv<W: Write>(mut w: W, events: &[Event]) -> Result<()> {
    writeln!(w, "t,x,y,p")?;
    for e in events {
        writeln!(w, "{:.6},{},{},{}", e.t, e.x, e.y, e.polarity.sign())?;
    }
    Ok(())
}

/// Parses an event CSV produced by [`write_events_csv`].
pub fn read_events_csv(text: &str) -> Result<Vec<Event>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t", "x", "y", "p"] {
        return Err(Error::Parse(format!("unexpected event header {headers:?}")));
    }
    let mut out = Vec::new();
    let mut last_t = f64::NEG_INFINITY;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| {
            rec.get(k)
                .ok_or_else(|| Error::Parse(format!("row {}: missing column {k}", i + 1)))
        };
        let t: f64 = field(0)?
            .parse()
            .map_err(|e| Error::Parse(format!("row {}: t: {e}", i + 1)))?;
        let x: u16 = field(1)?
            .parse()
            .map_err(|e| Error::Parse(format!("row {}: x: {e}", i + 1)))?;
        let y: u16 = field(2)?
            .parse()
            .map_err(|e| Error::Parse(format!("row {}: y: {e}", i + 1)))?;
        let p: i64 = field(3)?
            .parse()
            .map_err(|e| Error::Parse(format!("row {}: p: {e}", i + 1)))?;
        let polarity = Polarity::from_sign(p)
            .ok_or_else(|| Error::Parse(format!("row {}: polarity {p} not in {{1,-1}}", i + 1)))?;
        if !t.is_finite() || t < last_t {
            return Err(Error::Parse(format!(
                "row {}: timestamps must be non-decreasing",
                i + 1
            )));
        }
        last_t = t;
        out.push(Event { x, y, polarity, t });
    }
    Ok(out)
}
