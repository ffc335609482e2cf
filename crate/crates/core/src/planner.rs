//! Intercept prediction for the bouncing gate and minimum-jerk flights.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scene::{step_gate, GateState};

const BOUND_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerInput {
    /// Look-ahead horizon (s).
    pub t_traj: f64,
    /// Corridor half-width (m).
    pub bound: f64,
    pub y1: f64,
    pub y2: f64,
    /// Time between the two observations (s).
    pub dt: f64,
}

impl PlannerInput {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_traj > 0.0) {
            return Err(Error::NonPositiveDuration(self.t_traj));
        }
        if !(self.bound > 0.0) {
            return Err(invalid(format!(
                "bound must be positive, got {}",
                self.bound
            )));
        }
        if !(self.dt > 0.0) {
            return Err(Error::ZeroInterval(self.dt));
        }
        for y in [self.y1, self.y2] {
            if !(y.abs() <= self.bound + BOUND_TOL) {
                return Err(invalid(format!(
                    "gate position {y} outside +/-{}",
                    self.bound
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterceptResult {
    pub y_star: f64,
    pub direction_changed: bool,
    /// Gate travel over the horizon (m).
    pub d1: f64,
    /// Distance from `y2` to the wall ahead (m).
    pub d2: f64,
    /// Estimated gate velocity (m/s).
    pub v_r: f64,
    /// The gate did not move between observations; `y_star = y2`.
    pub stationary: bool,
    /// More than one wall contact; `y_star` comes from the reflection model.
    pub multi_bounce: bool,
}

/// Predicts where the gate will be after `t_traj`.
pub fn predict_intercept(input: &PlannerInput) -> Result<InterceptResult> {
    input.validate()?;
    let PlannerInput {
        t_traj,
        bound: l,
        y1,
        y2,
        dt,
    } = *input;
    let v_r = (y2 - y1) / dt;
    let d1 = v_r.abs() * t_traj;
    let mut out = InterceptResult {
        y_star: y2,
        direction_changed: false,
        d1,
        d2: 0.0,
        v_r,
        stationary: false,
        multi_bounce: false,
    };
    if y1 == y2 {
        out.stationary = true;
        return Ok(out);
    }
    let right = v_r > 0.0;
    out.d2 = if right { l - y2 } else { l + y2 }.max(0.0);
    if d1 > out.d2 {
        out.direction_changed = true;
        let back = d1 - out.d2;
        if back > 2.0 * l {
            out.multi_bounce = true;
            let gate = GateState {
                y: y2.clamp(-l, l),
                velocity: v_r,
                bound: l,
                radius: 1.0,
                plane_x: 0.0,
                center_z: 0.0,
            };
            out.y_star = step_gate(&gate, t_traj).y;
        } else if right {
            out.y_star = l - back;
        } else {
            out.y_star = -l + back;
        }
    } else if right {
        out.y_star = y2 + d1;
    } else {
        out.y_star = y2 - d1;
    }
    Ok(out)
}

/// `s(tau) = 10 tau^3 - 15 tau^4 + 6 tau^5` and its first three derivatives.
pub fn min_jerk_profile(tau: f64) -> [f64; 4] {
    let t2 = tau * tau;
    let t3 = t2 * tau;
    [
        t3 * (10.0 - 15.0 * tau + 6.0 * t2),
        t2 * (30.0 - 60.0 * tau + 30.0 * t2),
        tau * (60.0 - 180.0 * tau + 120.0 * t2),
        60.0 - 360.0 * tau + 360.0 * t2,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinJerkTrajectory {
    pub start: [f64; 3],
    pub end: [f64; 3],
    pub duration: f64,
}

/// Position, velocity and acceleration per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryState {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub acceleration: [f64; 3],
}

impl TrajectoryState {
    pub fn speed(&self) -> f64 {
        self.velocity.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub fn min_jerk_trajectory(
    start: [f64; 3],
    end: [f64; 3],
    duration: f64,
) -> Result<MinJerkTrajectory> {
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(Error::NonPositiveDuration(duration));
    }
    Ok(MinJerkTrajectory {
        start,
        end,
        duration,
    })
}

impl MinJerkTrajectory {
    pub fn displacement(&self) -> [f64; 3] {
        std::array::from_fn(|i| self.end[i] - self.start[i])
    }

    /// Peak speed along each axis, reached at the midpoint.
    pub fn peak_speed(&self) -> [f64; 3] {
        self.displacement().map(|d| 1.875 * d.abs() / self.duration)
    }

    /// Jerk per axis.
    pub fn jerk(&self, t: f64) -> Result<[f64; 3]> {
        let tau = self.tau(t)?;
        let j = min_jerk_profile(tau)[3] / self.duration.powi(3);
        Ok(self.displacement().map(|d| d * j))
    }

    fn tau(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t <= self.duration) {
            return Err(Error::OutOfDomain {
                t,
                duration: self.duration,
            });
        }
        Ok(t / self.duration)
    }
}

pub fn sample_state(traj: &MinJerkTrajectory, t: f64) -> Result<TrajectoryState> {
    let tau = traj.tau(t)?;
    let [s, ds, dds, _] = min_jerk_profile(tau);
    let big_t = traj.duration;
    let d = traj.displacement();
    Ok(TrajectoryState {
        position: std::array::from_fn(|i| traj.start[i] + d[i] * s),
        velocity: d.map(|di| di * ds / big_t),
        acceleration: d.map(|di| di * dds / (big_t * big_t)),
    })
}

/// States at `0, dt, 2dt, ...` up to and including the end time.
pub fn sample_uniform(traj: &MinJerkTrajectory, dt: f64) -> Result<Vec<(f64, TrajectoryState)>> {
    if !(dt > 0.0) {
        return Err(invalid(format!("sample period must be positive, got {dt}")));
    }
    let n = (traj.duration / dt - 1e-9).ceil() as usize;
    (0..=n)
        .map(|k| {
            let t = (k as f64 * dt).min(traj.duration);
            Ok((t, sample_state(traj, t)?))
        })
        .collect()
}

/// Writes `t,x,y,vx,vy,ax,ay` rows at 1 ms.
pub fn write_trajectory_csv<W: Write>(mut w: W, traj: &MinJerkTrajectory) -> Result<()> {
    writeln!(w, "t,x,y,vx,vy,ax,ay")?;
    for (t, s) in sample_uniform(traj, 1e-3)? {
        writeln!(
            w,
            "{:.3},{},{},{},{},{},{}",
            t,
            s.position[0],
            s.position[1],
            s.velocity[0],
            s.velocity[1],
            s.acceleration[0],
            s.acceleration[1]
        )?;
    }
    Ok(())
}
