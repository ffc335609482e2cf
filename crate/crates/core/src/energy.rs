//! Brushless DC rotor actuation-energy model.
//!
//! Per motor, steady-state current and voltage are
//!
//! ```text
//! i = (T_f + k_tau w^2 + D_f w + J dw/dt) / K_T
//! e = R i + K_E w
//! ```
//!
//! and the electrical power `e * i` expands into a polynomial in `w` plus
//! terms in the rotor acceleration. [`EnergyCoefficients`] holds that
//! expansion; [`MotorParams::electrical_power`] evaluates the product
//! directly and serves as the cross-check.
//!
//! Angular quantities are rad/s throughout. The velocity-to-rotor-speed map
//! in [`FlightModel`] is a steady-flight thrust balance calibrated so that
//! hover draws about 124 W in total.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::{bisect, golden_min};

pub const RPM_TO_RAD_S: f64 = std::f64::consts::PI / 30.0;

/// Total hover power the flight model is calibrated to (W).
pub const HOVER_POWER_W: f64 = 124.0;
/// Drone mass used for the thrust balance (kg).
pub const DRONE_MASS_KG: f64 = 0.5;
pub const GRAVITY: f64 = 9.81;
/// Cruise speed at which the calibrated energy-per-distance is minimal (m/s).
pub const CALIBRATED_OPTIMAL_VELOCITY: f64 = 8.0;
/// Lowest and highest swept linear velocity (m/s).
pub const VELOCITY_RANGE: (f64, f64) = (1.0, 16.0);

pub const MOTORS: usize = 4;

/// Electrical and mechanical constants of one rotor motor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotorParams {
    /// Winding resistance R (ohm).
    pub resistance: f64,
    /// Supply voltage (V).
    pub supply_voltage: f64,
    /// Maximum rotor speed (rad/s).
    pub omega_max: f64,
    /// Motor friction torque T_f (N m).
    pub friction_torque: f64,
    /// Load torque coefficient k_tau, load torque = k_tau w^2.
    pub drag_torque_coeff: f64,
    /// Viscous damping D_f (N m s/rad).
    pub viscous_damping: f64,
    /// Back-EMF constant K_E (V s/rad).
    pub voltage_constant: f64,
    /// Torque constant K_T (N m/A).
    pub torque_constant: f64,
    /// Motor rotor inertia J_m (kg m^2).
    pub motor_inertia: f64,
    pub blade_count: u32,
    /// Mass of one blade (kg).
    pub blade_mass: f64,
    /// Propeller radius (m).
    pub prop_radius: f64,
    /// Blade-to-motor clearance (m).
    pub blade_clearance: f64,
}

impl Default for MotorParams {
    fn default() -> Self {
        Self {
            resistance: 0.3,
            supply_voltage: 15.0,
            omega_max: 7994.0 * RPM_TO_RAD_S,
            friction_torque: 0.0187,
            drag_torque_coeff: 9.04969e-9,
            viscous_damping: 2e-4,
            voltage_constant: 0.532,
            torque_constant: 0.532,
            motor_inertia: 4.9e-6,
            blade_count: 3,
            blade_mass: 0.001,
            prop_radius: 0.1,
            blade_clearance: 0.023,
        }
    }
}

impl MotorParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("resistance", self.resistance),
            ("supply_voltage", self.supply_voltage),
            ("omega_max", self.omega_max),
            ("voltage_constant", self.voltage_constant),
            ("motor_inertia", self.motor_inertia),
            ("prop_radius", self.prop_radius),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("friction_torque", self.friction_torque),
            ("drag_torque_coeff", self.drag_torque_coeff),
            ("viscous_damping", self.viscous_damping),
            ("blade_mass", self.blade_mass),
            ("blade_clearance", self.blade_clearance),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(self.torque_constant > 0.0) {
            return Err(Error::ZeroTorqueConstant(self.torque_constant));
        }
        Ok(())
    }

    /// Rotor plus load inertia `J_m + J_L`.
    pub fn total_inertia(&self) -> Result<f64> {
        Ok(self.motor_inertia + load_inertia(self)?)
    }

    /// Motor current for rotor speed `w` and acceleration `w_dot`.
    pub fn current(&self, omega: f64, omega_dot: f64) -> Result<f64> {
        if !(self.torque_constant > 0.0) {
            return Err(Error::ZeroTorqueConstant(self.torque_constant));
        }
        let j = self.total_inertia()?;
        let torque = self.friction_torque
            + self.drag_torque_coeff * omega * omega
            + self.viscous_damping * omega
            + j * omega_dot;
        Ok(torque / self.torque_constant)
    }

    /// Steady-state terminal voltage (inductance neglected).
    pub fn voltage(&self, omega: f64, omega_dot: f64) -> Result<f64> {
        Ok(self.resistance * self.current(omega, omega_dot)? + self.voltage_constant * omega)
    }

    /// `e * i` evaluated from the current and voltage equations directly.
    pub fn electrical_power(&self, omega: f64, omega_dot: f64) -> Result<f64> {
        let i = self.current(omega, omega_dot)?;
        let e = self.resistance * i + self.voltage_constant * omega;
        Ok(e * i)
    }
}

/// Blade load inertia `J_L = n_B m_B (r - eps)^2 / 4`.
pub fn load_inertia(params: &MotorParams) -> Result<f64> {
    if params.blade_clearance > params.prop_radius {
        return Err(Error::BladeClearanceExceedsRadius {
            radius: params.prop_radius,
            clearance: params.blade_clearance,
        });
    }
    let arm = params.prop_radius - params.blade_clearance;
    Ok(0.25 * params.blade_count as f64 * params.blade_mass * arm * arm)
}

/// Expansion of per-motor electrical power:
///
/// `P = c0 + c1 w + c2 w^2 + c3 w^3 + c4 w^4 + c5 w_dot^2 + w_dot (d0 + d1 w + d2 w^2)`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyCoefficients {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    /// `R J^2 / K_T^2`, multiplies `w_dot^2`.
    pub c5: f64,
    /// `2 R J T_f / K_T^2`, multiplies `w_dot`.
    pub d0: f64,
    /// `J (2 R D_f / K_T + K_E) / K_T`, multiplies `w w_dot`.
    pub d1: f64,
    /// `2 R J k_tau / K_T^2`, multiplies `w^2 w_dot`.
    pub d2: f64,
    /// Total inertia `J = J_m + J_L` (kg m^2).
    pub inertia: f64,
}

pub fn energy_coefficients(p: &MotorParams) -> Result<EnergyCoefficients> {
    let kt = p.torque_constant;
    if !(kt > 0.0) {
        return Err(Error::ZeroTorqueConstant(kt));
    }
    let (r, tf, df, ktau, ke) = (
        p.resistance,
        p.friction_torque,
        p.viscous_damping,
        p.drag_torque_coeff,
        p.voltage_constant,
    );
    let j = p.total_inertia()?;
    Ok(EnergyCoefficients {
        c0: r * tf * tf / (kt * kt),
        c1: tf / kt * (2.0 * r * df / kt + ke),
        c2: df / kt * (r * df / kt + ke) + 2.0 * r * tf * ktau / (kt * kt),
        c3: ktau / kt * (2.0 * r * df / kt + ke),
        c4: r * ktau * ktau / (kt * kt),
        c5: r * j * j / (kt * kt),
        d0: 2.0 * r * j * tf / (kt * kt),
        d1: j / kt * (2.0 * r * df / kt + ke),
        d2: 2.0 * r * j * ktau / (kt * kt),
        inertia: j,
    })
}

/// Instantaneous power of one motor (W).
pub fn motor_power(c: &EnergyCoefficients, omega: f64, omega_dot: f64) -> f64 {
    let w = omega;
    let steady = c.c0 + w * (c.c1 + w * (c.c2 + w * (c.c3 + w * c.c4)));
    steady + c.c5 * omega_dot * omega_dot + omega_dot * (c.d0 + w * (c.d1 + w * c.d2))
}

/// Uniformly sampled rotor speeds of the four motors.
#[derive(Debug, Clone, PartialEq)]
pub struct RotorSpeedProfile {
    pub omega: Vec<[f64; MOTORS]>,
    /// Sample period (s).
    pub dt: f64,
}

impl RotorSpeedProfile {
    pub fn new(omega: Vec<[f64; MOTORS]>, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(invalid(format!("sample period must be positive, got {dt}")));
        }
        if omega
            .iter()
            .flatten()
            .any(|w| !(*w >= 0.0) || !w.is_finite())
        {
            return Err(invalid("rotor speeds must be finite and non-negative"));
        }
        Ok(Self { omega, dt })
    }

    /// All four motors following the same speed trace.
    pub fn symmetric(omega: &[f64], dt: f64) -> Result<Self> {
        Self::new(omega.iter().map(|&w| [w; MOTORS]).collect(), dt)
    }

    pub fn duration(&self) -> f64 {
        self.omega.len().saturating_sub(1) as f64 * self.dt
    }

    /// Central differences inside, one-sided at the ends.
    pub fn acceleration(&self, k: usize, motor: usize) -> f64 {
        let n = self.omega.len();
        if n < 2 {
            return 0.0;
        }
        let w = |i: usize| self.omega[i][motor];
        if k == 0 {
            (w(1) - w(0)) / self.dt
        } else if k == n - 1 {
            (w(n - 1) - w(n - 2)) / self.dt
        } else {
            (w(k + 1) - w(k - 1)) / (2.0 * self.dt)
        }
    }

    /// Summed four-motor power at sample `k`.
    pub fn power_at(&self, c: &EnergyCoefficients, k: usize) -> f64 {
        (0..MOTORS)
            .map(|m| motor_power(c, self.omega[k][m], self.acceleration(k, m)))
            .sum()
    }
}

/// Trapezoidal integral of the summed motor power over the profile (J).
pub fn trajectory_energy(c: &EnergyCoefficients, profile: &RotorSpeedProfile) -> Result<f64> {
    let n = profile.omega.len();
    if n == 0 {
        return Err(Error::EmptyProfile);
    }
    let mut e = 0.0;
    let mut prev = profile.power_at(c, 0);
    for k in 1..n {
        let cur = profile.power_at(c, k);
        e += 0.5 * (prev + cur) * profile.dt;
        prev = cur;
    }
    Ok(e)
}

/// Steady-flight map from linear speed to rotor speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlightModel {
    pub mass: f64,
    pub gravity: f64,
    /// Body drag coefficient k_d (N s^2/m^2).
    pub drag: f64,
    /// Rotor speed that balances weight (rad/s).
    pub hover_omega: f64,
    pub omega_max: f64,
}

impl FlightModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.gravity > 0.0 && self.hover_omega > 0.0) {
            return Err(invalid("mass, gravity and hover speed must be positive"));
        }
        if !(self.drag >= 0.0) {
            return Err(invalid("drag must be non-negative"));
        }
        Ok(())
    }

    /// Thrust per motor needed to hold speed `v` level (N).
    pub fn thrust_per_motor(&self, v: f64) -> f64 {
        let drag = self.drag * v * v / self.mass;
        self.mass / 4.0 * (self.gravity * self.gravity + drag * drag).sqrt()
    }

    /// Rotor speed before checking the motor limit.
    pub fn unbounded_rotor_speed(&self, v: f64) -> f64 {
        let ratio = self.thrust_per_motor(v) / self.thrust_per_motor(0.0);
        self.hover_omega * ratio.sqrt()
    }
}

pub fn rotor_speed_for_velocity(fm: &FlightModel, v: f64) -> Result<f64> {
    if !(v >= 0.0) {
        return Err(invalid(format!("speed must be non-negative, got {v}")));
    }
    let omega = fm.unbounded_rotor_speed(v);
    if omega > fm.omega_max {
        return Err(Error::ExceedsMaxRotorSpeed {
            velocity: v,
            omega,
            omega_max: fm.omega_max,
        });
    }
    Ok(omega)
}

/// Four-motor power when cruising at constant speed `v` (W).
pub fn cruise_power(c: &EnergyCoefficients, fm: &FlightModel, v: f64) -> Result<f64> {
    let w = rotor_speed_for_velocity(fm, v)?;
    Ok(MOTORS as f64 * motor_power(c, w, 0.0))
}

/// `(v, E)` for flying `depth` meters at each constant speed in `v_grid`.
pub fn energy_velocity_profile(
    c: &EnergyCoefficients,
    fm: &FlightModel,
    depth: f64,
    v_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if !(depth > 0.0) {
        return Err(invalid(format!("depth must be positive, got {depth}")));
    }
    let (lo, hi) = VELOCITY_RANGE;
    v_grid
        .iter()
        .map(|&v| {
            if !(v >= lo - 1e-12 && v <= hi + 1e-12) {
                return Err(invalid(format!("velocity {v} outside [{lo}, {hi}] m/s")));
            }
            Ok((v, depth / v * cruise_power(c, fm, v)?))
        })
        .collect()
}

/// The 1 m/s step sweep from 1 to 16 m/s.
pub fn default_velocity_grid() -> Vec<f64> {
    (1..=16).map(f64::from).collect()
}

/// Rotor speed at which the four motors together draw `total_power`.
pub fn hover_omega_for_power(
    c: &EnergyCoefficients,
    total_power: f64,
    omega_max: f64,
) -> Result<f64> {
    let f = |w: f64| MOTORS as f64 * motor_power(c, w, 0.0) - total_power;
    if f(0.0) > 0.0 || f(omega_max) < 0.0 {
        return Err(invalid(format!(
            "hover power {total_power} W not reachable within [0, {omega_max}] rad/s"
        )));
    }
    bisect(f, 0.0, omega_max, 1e-10).ok_or_else(|| invalid("hover calibration failed"))
}

/// Continuous argmin over `[1, 16]` m/s of cruise energy per meter.
pub fn optimal_cruise_velocity(c: &EnergyCoefficients, fm: &FlightModel) -> f64 {
    let (lo, hi) = VELOCITY_RANGE;
    let per_meter = |v: f64| {
        cruise_power(c, fm, v)
            .map(|p| p / v)
            .unwrap_or(f64::INFINITY)
    };
    golden_min(per_meter, lo, hi, 1e-9)
}

/// Calibrated motor and flight model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyModel {
    pub params: MotorParams,
    pub coefficients: EnergyCoefficients,
    pub flight: FlightModel,
}

impl EnergyModel {
    /// Hover speed by root-finding on total power, then the drag coefficient
    /// by bisection so the cruise optimum lands on `optimal_velocity`.
    pub fn calibrate(
        params: MotorParams,
        mass: f64,
        gravity: f64,
        hover_power: f64,
        optimal_velocity: f64,
    ) -> Result<Self> {
        params.validate()?;
        let coefficients = energy_coefficients(&params)?;
        let hover_omega = hover_omega_for_power(&coefficients, hover_power, params.omega_max)?;
        let model = |drag: f64| FlightModel {
            mass,
            gravity,
            drag,
            hover_omega,
            omega_max: params.omega_max,
        };
        model(0.0).validate()?;
        let drag = bisect(
            |kd| optimal_cruise_velocity(&coefficients, &model(kd)) - optimal_velocity,
            1e-3,
            0.3,
            1e-12,
        )
        .ok_or_else(|| {
            invalid(format!(
                "no drag coefficient puts the optimum at {optimal_velocity} m/s"
            ))
        })?;
        Ok(Self {
            params,
            coefficients,
            flight: model(drag),
        })
    }

    pub fn calibrated_default() -> Result<Self> {
        Self::calibrate(
            MotorParams::default(),
            DRONE_MASS_KG,
            GRAVITY,
            HOVER_POWER_W,
            CALIBRATED_OPTIMAL_VELOCITY,
        )
    }

    /// Total four-motor power at hover (W).
    pub fn hover_power(&self) -> f64 {
        MOTORS as f64 * motor_power(&self.coefficients, self.flight.hover_omega, 0.0)
    }

    pub fn profile(&self, depth: f64, v_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
        energy_velocity_profile(&self.coefficients, &self.flight, depth, v_grid)
    }

    /// Plain-text calibration summary.
    pub fn report(&self) -> String {
        let c = &self.coefficients;
        format!(
            "hover_omega_rad_s = {:.6}\nomega_max_rad_s = {:.6}\ndrag_coefficient = {:.9}\n\
             hover_power_W = {:.6}\noptimal_cruise_velocity_m_s = {:.6}\nmass_kg = {}\n\
             c0 = {:e}\nc1 = {:e}\nc2 = {:e}\nc3 = {:e}\nc4 = {:e}\nc5 = {:e}\n\
             d0 = {:e}\nd1 = {:e}\nd2 = {:e}\ninertia_kg_m2 = {:e}\n",
            self.flight.hover_omega,
            self.flight.omega_max,
            self.flight.drag,
            self.hover_power(),
            optimal_cruise_velocity(c, &self.flight),
            self.flight.mass,
            c.c0,
            c.c1,
            c.c2,
            c.c3,
            c.c4,
            c.c5,
            c.d0,
            c.d1,
            c.d2,
            c.inertia
        )
    }
}

/// Writes `depth,v,energy_J` rows.
pub fn write_profile_csv<W: Write>(mut w: W, depth: f64, profile: &[(f64, f64)]) -> Result<()> {
    writeln!(w, "depth,v,energy_J")?;
    for (v, e) in profile {
        writeln!(w, "{depth},{v},{e}")?;
    }
    Ok(())
}
