//! Single-layer leaky integrate-and-fire filter over event frames.
//!
//! Each neuron sits on one sensor pixel and integrates a 3x3 weighted sum of
//! the per-pixel event counts. Neurons that reach threshold mark fast-moving
//! regions; events around those neurons in the preceding bin are recovered and
//! their extents give the gate's bounding box.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scene::{CameraModel, EventFrame};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LifConfig {
    /// Leak factor applied to the membrane each bin.
    pub beta: f64,
    /// Firing threshold.
    pub threshold: f64,
    /// Row-major 3x3 kernel; `kernel[4]` weights the neuron's own pixel.
    pub kernel: [f64; 9],
}

impl Default for LifConfig {
    fn default() -> Self {
        Self {
            beta: 0.1,
            threshold: 1.75,
            kernel: [0.15; 9],
        }
    }
}

impl LifConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(invalid(format!(
                "leak factor must be in (0,1), got {}",
                self.beta
            )));
        }
        if !(self.threshold > 0.0) {
            return Err(invalid("threshold must be positive"));
        }
        if self.kernel.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(invalid("kernel weights must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Membrane potential of one neuron per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct MembraneGrid {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f64>,
}

impl MembraneGrid {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            u: vec![0.0; width * height],
        }
    }
}

/// Indices (row-major) of neurons that fired in one bin.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpikeFrame {
    pub width: usize,
    pub height: usize,
    pub spikes: Vec<usize>,
}

impl SpikeFrame {
    pub fn is_empty(&self) -> bool {
        self.spikes.is_empty()
    }

    pub fn len(&self) -> usize {
        self.spikes.len()
    }
}

fn weighted_input(config: &LifConfig, x: &EventFrame, px: usize, py: usize) -> f64 {
    let (w, h) = (x.width as i64, x.height as i64);
    let mut s = 0.0;
    for dy in -1i64..=1 {
        let yy = py as i64 + dy;
        if yy < 0 || yy >= h {
            continue;
        }
        for dx in -1i64..=1 {
            let xx = px as i64 + dx;
            if xx < 0 || xx >= w {
                continue;
            }
            let c = x.counts[(yy * w + xx) as usize];
            if c != 0.0 {
                s += config.kernel[((dy + 1) * 3 + dx + 1) as usize] * c;
            }
        }
    }
    s
}

/// In-place update `U <- beta*U + W*X`, fire where `U >= U_th` and reset to zero.
pub fn lif_step_in_place(
    grid: &mut MembraneGrid,
    config: &LifConfig,
    x: &EventFrame,
) -> Result<SpikeFrame> {
    if x.width != grid.width || x.height != grid.height {
        return Err(Error::DimensionMismatch {
            want_w: grid.width,
            want_h: grid.height,
            got_w: x.width,
            got_h: x.height,
        });
    }
    // neurons outside the dilated event support get zero input
    let (w, h) = (grid.width, grid.height);
    let mut driven = vec![false; w * h];
    for (i, _) in x.counts.iter().enumerate().filter(|(_, c)| **c != 0.0) {
        let (px, py) = (i % w, i / w);
        for yy in py.saturating_sub(1)..=(py + 1).min(h - 1) {
            for xx in px.saturating_sub(1)..=(px + 1).min(w - 1) {
                driven[yy * w + xx] = true;
            }
        }
    }
    let mut spikes = Vec::new();
    for (i, u) in grid.u.iter_mut().enumerate() {
        if !driven[i] {
            if *u != 0.0 {
                *u *= config.beta;
            }
            continue;
        }
        let mut next = config.beta * *u + weighted_input(config, x, i % w, i / w);
        if next >= config.threshold {
            spikes.push(i);
            next = 0.0;
        }
        *u = next;
    }
    Ok(SpikeFrame {
        width: grid.width,
        height: grid.height,
        spikes,
    })
}

/// Value-returning form of [`lif_step_in_place`].
pub fn lif_step(
    grid: &MembraneGrid,
    config: &LifConfig,
    x: &EventFrame,
) -> Result<(MembraneGrid, SpikeFrame)> {
    let mut next = grid.clone();
    let spikes = lif_step_in_place(&mut next, config, x)?;
    Ok((next, spikes))
}

/// Inclusive pixel box with its integer center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: i64,
    pub x_max: i64,
    pub y_min: i64,
    pub y_max: i64,
    pub center_x: i64,
    pub center_y: i64,
}

/// `center = min + floor((max - min) / 2)` per axis.
pub fn bbox_center(x_min: i64, x_max: i64, y_min: i64, y_max: i64) -> Result<(i64, i64)> {
    if x_min > x_max || y_min > y_max {
        return Err(Error::InvalidExtents {
            x_min,
            x_max,
            y_min,
            y_max,
        });
    }
    Ok((
        x_min + (x_max - x_min).div_euclid(2),
        y_min + (y_max - y_min).div_euclid(2),
    ))
}

impl BoundingBox {
    pub fn from_extents(x_min: i64, x_max: i64, y_min: i64, y_max: i64) -> Result<Self> {
        let (center_x, center_y) = bbox_center(x_min, x_max, y_min, y_max)?;
        Ok(Self {
            x_min,
            x_max,
            y_min,
            y_max,
            center_x,
            center_y,
        })
    }

    pub fn area(&self) -> i64 {
        (self.x_max - self.x_min + 1) * (self.y_max - self.y_min + 1)
    }

    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let ix = (self.x_max.min(other.x_max) - self.x_min.max(other.x_min) + 1).max(0);
        let iy = (self.y_max.min(other.y_max) - self.y_min.max(other.y_min) + 1).max(0);
        let inter = ix * iy;
        let union = self.area() + other.area() - inter;
        inter as f64 / union as f64
    }
}

/// Box around the events of `events` lying in the 3x3 neighborhoods of the
/// spiking neurons. `None` when nothing fired or nothing was recovered.
pub fn track_bbox(spikes: &SpikeFrame, events: &EventFrame) -> Option<BoundingBox> {
    if spikes.is_empty() || spikes.width != events.width || spikes.height != events.height {
        return None;
    }
    let (w, h) = (events.width as i64, events.height as i64);
    let mut ext: Option<(i64, i64, i64, i64)> = None;
    for &i in &spikes.spikes {
        let (sx, sy) = ((i as i64) % w, (i as i64) / w);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (x, y) = (sx + dx, sy + dy);
                if x < 0 || y < 0 || x >= w || y >= h {
                    continue;
                }
                if events.counts[(y * w + x) as usize] > 0.0 {
                    ext = Some(match ext {
                        None => (x, x, y, y),
                        Some((a, b, c, d)) => (a.min(x), b.max(x), c.min(y), d.max(y)),
                    });
                }
            }
        }
    }
    ext.map(|(a, b, c, d)| BoundingBox::from_extents(a, b, c, d).expect("ordered extents"))
}

pub fn pixel_center_to_world(
    center: (f64, f64),
    depth: f64,
    camera: &CameraModel,
) -> Result<[f64; 3]> {
    camera.unproject(center.0, center.1, depth)
}

/// Finite-difference gate velocity `(y2 - y1) / dt`.
pub fn estimate_gate_velocity(y1: f64, y2: f64, dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::ZeroInterval(dt));
    }
    Ok((y2 - y1) / dt)
}

/// Gate position estimate fused from the tracker and the depth reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateTrack {
    pub world: [f64; 3],
    pub pixel: (i64, i64),
    pub depth: f64,
    pub t: f64,
}

/// Depth camera: ground truth plus optional Gaussian noise.
pub struct DepthSensor {
    sigma: f64,
    rng: ChaCha8Rng,
}

impl DepthSensor {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0) {
            return Err(invalid("depth noise sigma must be non-negative"));
        }
        Ok(Self {
            sigma,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn read(&mut self, true_depth: f64) -> f64 {
        if self.sigma == 0.0 {
            return true_depth;
        }
        let n = Normal::new(0.0, self.sigma).expect("finite sigma");
        true_depth + n.sample(&mut self.rng)
    }
}

/// Streaming tracker: LIF filtering plus one-bin-delayed event recovery.
pub struct EventTracker {
    config: LifConfig,
    membrane: MembraneGrid,
    previous: EventFrame,
    /// Total spikes emitted so far.
    pub spike_count: usize,
}

impl EventTracker {
    pub fn new(config: LifConfig, width: usize, height: usize) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            membrane: MembraneGrid::zeros(width, height),
            previous: EventFrame::zeros(width, height),
            spike_count: 0,
        })
    }

    pub fn membrane(&self) -> &MembraneGrid {
        &self.membrane
    }

    /// Feeds one bin; the box is built from the previous bin's events.
    pub fn process(&mut self, frame: EventFrame) -> Result<Option<BoundingBox>> {
        let spikes = lif_step_in_place(&mut self.membrane, &self.config, &frame)?;
        self.spike_count += spikes.len();
        let bbox = track_bbox(&spikes, &self.previous);
        self.previous = frame;
        Ok(bbox)
    }
}

/// Writes `t,center_x,center_y,depth,world_y` rows.
pub fn write_track_csv<W: Write>(mut w: W, tracks: &[GateTrack]) -> Result<()> {
    writeln!(w, "t,center_x,center_y,depth,world_y")?;
    for tr in tracks {
        writeln!(
            w,
            "{:.6},{},{},{},{}",
            tr.t, tr.pixel.0, tr.pixel.1, tr.depth, tr.world[1]
        )?;
    }
    Ok(())
}
