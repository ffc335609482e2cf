//! Quintic fits of energy-velocity profiles and the optimal-velocity dataset.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{default_velocity_grid, EnergyModel, VELOCITY_RANGE};
use crate::error::{invalid, Error, Result};
use crate::numeric::{bisect, polyval};

const DEGREE: usize = 5;
const SCAN_INTERVALS: usize = 200;
const ROOT_TOL: f64 = 1e-9;

/// `E(v) = sum coefficients[k] v^k` over a velocity domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuinticFit {
    pub coefficients: [f64; DEGREE + 1],
    /// Root-mean-square fit residual (J).
    pub residual_rms: f64,
    pub v_lo: f64,
    pub v_hi: f64,
}

impl QuinticFit {
    pub fn energy(&self, v: f64) -> f64 {
        polyval(&self.coefficients, v)
    }

    /// Coefficients of `dE/dv` in ascending powers of `v`.
    pub fn derivative_coefficients(&self) -> [f64; DEGREE] {
        std::array::from_fn(|j| (j + 1) as f64 * self.coefficients[j + 1])
    }

    pub fn slope(&self, v: f64) -> f64 {
        polyval(&self.derivative_coefficients(), v)
    }
}

fn distinct_count(xs: &[f64]) -> usize {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    sorted.len()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Least-squares quintic through `(v, E)` samples.
///
/// The design matrix is built on centered and scaled abscissae and the
/// solution is mapped back to plain powers of `v`.
pub fn fit_quintic(profile: &[(f64, f64)]) -> Result<QuinticFit> {
    if profile.len() < DEGREE + 1 {
        return Err(Error::InsufficientSamples {
            need: DEGREE + 1,
            got: profile.len(),
        });
    }
    if profile
        .iter()
        .any(|(v, e)| !v.is_finite() || !e.is_finite())
    {
        return Err(invalid("profile contains non-finite values"));
    }
    let vs: Vec<f64> = profile.iter().map(|p| p.0).collect();
    let distinct = distinct_count(&vs);
    if distinct < DEGREE + 1 {
        return Err(Error::DegenerateDesignMatrix { distinct });
    }
    let lo = vs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let center = 0.5 * (lo + hi);
    let scale = 0.5 * (hi - lo);

    let n = profile.len();
    let a = DMatrix::from_fn(n, DEGREE + 1, |i, k| {
        ((vs[i] - center) / scale).powi(k as i32)
    });
    let b = DVector::from_iterator(n, profile.iter().map(|p| p.1));
    let scaled = a
        .clone()
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| invalid(format!("least squares failed: {e}")))?;

    let residual = &a * &scaled - &b;
    let residual_rms = (residual.norm_squared() / n as f64).sqrt();

    let mut coefficients = [0.0; DEGREE + 1];
    for (k, ak) in scaled.iter().enumerate() {
        let factor = ak / scale.powi(k as i32);
        for (i, c) in coefficients.iter_mut().enumerate().take(k + 1) {
            *c += factor * binomial(k, i) * (-center).powi((k - i) as i32);
        }
    }
    Ok(QuinticFit {
        coefficients,
        residual_rms,
        v_lo: lo,
        v_hi: hi,
    })
}

/// Minimizer of the fitted energy and whether it is an interior stationary point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Optimum {
    pub velocity: f64,
    pub interior: bool,
}

/// Roots of `dE/dv` in the fit domain, by sign-change scan and bisection.
pub fn stationary_points(fit: &QuinticFit) -> Vec<f64> {
    let step = (fit.v_hi - fit.v_lo) / SCAN_INTERVALS as f64;
    let mut roots = Vec::new();
    for k in 0..SCAN_INTERVALS {
        let a = fit.v_lo + k as f64 * step;
        let b = if k + 1 == SCAN_INTERVALS {
            fit.v_hi
        } else {
            a + step
        };
        let (fa, fb) = (fit.slope(a), fit.slope(b));
        if fa == 0.0 {
            roots.push(a);
        } else if fa.signum() != fb.signum() && fb != 0.0 {
            if let Some(r) = bisect(|v| fit.slope(v), a, b, ROOT_TOL) {
                roots.push(r);
            }
        }
    }
    if fit.slope(fit.v_hi) == 0.0 {
        roots.push(fit.v_hi);
    }
    roots
}

pub fn optimum(fit: &QuinticFit) -> Optimum {
    let roots = stationary_points(fit);
    let mut best = Optimum {
        velocity: fit.v_lo,
        interior: false,
    };
    let mut best_e = fit.energy(fit.v_lo);
    let candidates = roots.iter().map(|&r| (r, true)).chain([(fit.v_hi, false)]);
    for (v, interior) in candidates {
        let e = fit.energy(v);
        if e < best_e {
            best_e = e;
            best = Optimum {
                velocity: v,
                interior: interior && v > fit.v_lo && v < fit.v_hi,
            };
        }
    }
    best
}

pub fn optimal_velocity(fit: &QuinticFit) -> f64 {
    optimum(fit).velocity
}

/// Brute-force argmin of the fitted energy on a uniform grid of `step`.
pub fn grid_argmin(fit: &QuinticFit, step: f64) -> f64 {
    let n = ((fit.v_hi - fit.v_lo) / step).round() as usize;
    (0..=n)
        .map(|k| (fit.v_lo + k as f64 * step).min(fit.v_hi))
        .min_by(|a, b| fit.energy(*a).total_cmp(&fit.energy(*b)))
        .unwrap_or(fit.v_lo)
}

/// One dataset row: depth, optimal velocity and the derivative coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub depth: f64,
    pub v_star: f64,
    /// Fit coefficients `k1..k5`; `dE/dv = sum j k_j v^(j-1)`.
    pub k: [f64; DEGREE],
    /// False when the optimum sits on a domain endpoint.
    pub interior: bool,
}

impl TrainingSample {
    /// `sum_j j k_j v^(j-1)`.
    pub fn constraint(&self, v: f64) -> f64 {
        let mut acc = 0.0;
        for j in (1..=DEGREE).rev() {
            acc = acc * v + j as f64 * self.k[j - 1];
        }
        acc
    }
}

/// 21 depths from 2.0 to 6.0 m in 0.2 m steps.
pub fn training_depths() -> Vec<f64> {
    (0..=20).map(|i| 2.0 + 0.2 * i as f64).collect()
}

pub const HELD_OUT_DEPTHS: [f64; 3] = [2.5, 3.7, 5.3];

pub fn fit_depth(model: &EnergyModel, depth: f64) -> Result<QuinticFit> {
    let profile = model.profile(depth, &default_velocity_grid())?;
    fit_quintic(&profile)
}

/// Dense-grid optimum of the fitted profile at `depth`.
pub fn oracle_velocity(model: &EnergyModel, depth: f64) -> Result<f64> {
    Ok(grid_argmin(&fit_depth(model, depth)?, 1e-3))
}

pub fn build_dataset(model: &EnergyModel, depths: &[f64]) -> Result<Vec<TrainingSample>> {
    if depths.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for (i, d) in depths.iter().enumerate() {
        if !(*d > 0.0) {
            return Err(invalid(format!("depth must be positive, got {d}")));
        }
        if depths[..i].contains(d) {
            return Err(Error::DuplicateDepth(*d));
        }
    }
    depths
        .par_iter()
        .map(|&depth| {
            let fit = fit_depth(model, depth)?;
            let opt = optimum(&fit);
            Ok(TrainingSample {
                depth,
                v_star: opt.velocity,
                k: std::array::from_fn(|j| fit.coefficients[j + 1]),
                interior: opt.interior,
            })
        })
        .collect()
}

pub fn write_dataset_csv<W: Write>(w: W, samples: &[TrainingSample]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["depth", "v_star", "k1", "k2", "k3", "k4", "k5"])?;
    for s in samples {
        let mut row = vec![s.depth.to_string(), s.v_star.to_string()];
        row.extend(s.k.iter().map(f64::to_string));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dataset_csv<R: Read>(r: R) -> Result<Vec<TrainingSample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != ["depth", "v_star", "k1", "k2", "k3", "k4", "k5"] {
        return Err(Error::Parse(format!(
            "unexpected dataset header {header:?}"
        )));
    }
    let (lo, hi) = VELOCITY_RANGE;
    let mut samples = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::Parse(format!("bad number {f:?}")))
            })
            .collect::<Result<_>>()?;
        if vals.len() != 7 {
            return Err(Error::Parse(format!(
                "expected 7 fields, got {}",
                vals.len()
            )));
        }
        if !(vals[0] > 0.0) {
            return Err(Error::Parse(format!("non-positive depth {}", vals[0])));
        }
        samples.push(TrainingSample {
            depth: vals[0],
            v_star: vals[1],
            k: [vals[2], vals[3], vals[4], vals[5], vals[6]],
            interior: vals[1] > lo && vals[1] < hi,
        });
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(f: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
        default_velocity_grid()
            .into_iter()
            .map(|v| (v, f(v)))
            .collect()
    }

    #[test]
    fn recovers_known_quintic() {
        let c = [3.0, -1.5, 0.25, 0.01, -2e-4, 3e-6];
        let fit = fit_quintic(&sample(|v| polyval(&c, v))).unwrap();
        for (a, b) in fit.coefficients.iter().zip(c) {
            assert!((a - b).abs() <= 1e-8 * b.abs().max(1e-6), "{a} vs {b}");
        }
        assert!(fit.residual_rms < 1e-8);
    }

    #[test]
    fn parabola_vertex() {
        let fit = fit_quintic(&sample(|v| (v - 8.0).powi(2) + 100.0)).unwrap();
        assert!((optimal_velocity(&fit) - 8.0).abs() < 1e-6);
        assert!((grid_argmin(&fit, 0.01) - 8.0).abs() < 0.25);
    }

    #[test]
    fn monotone_profile_picks_low_endpoint() {
        let fit = fit_quintic(&sample(|v| 2.0 * v + 1.0)).unwrap();
        let o = optimum(&fit);
        assert_eq!(o.velocity, 1.0);
        assert!(!o.interior);
    }

    #[test]
    fn too_few_or_duplicate_samples() {
        let five: Vec<_> = (1..=5).map(|v| (v as f64, 1.0)).collect();
        assert!(matches!(
            fit_quintic(&five),
            Err(Error::InsufficientSamples { need: 6, got: 5 })
        ));
        let dup: Vec<_> = [1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0]
            .iter()
            .map(|&v| (v, v))
            .collect();
        assert!(matches!(
            fit_quintic(&dup),
            Err(Error::DegenerateDesignMatrix { distinct: 4 })
        ));
    }

    #[test]
    fn dataset_rows_are_stationary() {
        let m = EnergyModel::calibrated_default().unwrap();
        let ds = build_dataset(&m, &[2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(ds.len(), 5);
        for s in &ds {
            assert!((1.0..=16.0).contains(&s.v_star));
            assert!(s.interior);
            let scale = s.k.iter().map(|k| k.abs()).fold(0.0, f64::max);
            assert!(s.constraint(s.v_star).abs() < 1e-6 * scale);
        }
        assert!(matches!(
            build_dataset(&m, &[2.0, 3.0, 2.0]),
            Err(Error::DuplicateDepth(_))
        ));
    }

    #[test]
    fn dataset_csv_round_trip() {
        let m = EnergyModel::calibrated_default().unwrap();
        let ds = build_dataset(&m, &[2.0, 4.4]).unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&mut buf, &ds).unwrap();
        assert_eq!(read_dataset_csv(buf.as_slice()).unwrap(), ds);
        assert!(read_dataset_csv("depth,v\n1,2\n".as_bytes()).is_err());
        assert!(matches!(
            read_dataset_csv("depth,v_star,k1,k2,k3,k4,k5\n".as_bytes()),
            Err(Error::EmptyDataset)
        ));
    }
}
