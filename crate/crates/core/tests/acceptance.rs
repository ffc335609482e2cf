//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints one PASS/FAIL line; the process exits nonzero if any fail.

use std::process::ExitCode;
use std::time::Instant;

use evplan::energy::{
    default_velocity_grid, motor_power, write_profile_csv, EnergyModel, MotorParams,
};
use evplan::fit::{
    build_dataset, fit_quintic, optimal_velocity, oracle_velocity, training_depths,
    write_dataset_csv, QuinticFit, HELD_OUT_DEPTHS,
};
use evplan::harness::{
    ablation_matrix, run_repeated, success_rate_grid, tracking_iou, write_ablation_csv,
    write_episode_csv, write_grid_csv, Ablation, EpisodeConfig, GridSpec, Models, PerceptionMode,
    DEFAULT_GATE_SPEED, DEPTH_LATENCY, EVENT_LATENCY,
};
use evplan::pgnn::{
    loss_and_gradient, predict, train_pgnn, write_loss_curve_csv, MlpParams, PhysicsAt, TrainConfig,
};
use evplan::planner::{
    min_jerk_profile, min_jerk_trajectory, predict_intercept, sample_state, PlannerInput,
};
use evplan::scene::{step_gate, GateState, SensorConfig, WorldConfig};
use evplan::snn::LifConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn energy_oracle() -> Outcome {
    let params = MotorParams::default();
    let model = EnergyModel::calibrated_default().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let w = rng.random_range(0.0..params.omega_max);
        let wd = rng.random_range(-1000.0..1000.0);
        let a = motor_power(&model.coefficients, w, wd);
        let b = params.electrical_power(w, wd).map_err(|e| e.to_string())?;
        worst = worst.max((a - b).abs() / b.abs().max(1e-300));
    }
    check(worst < 1e-12, format!("worst relative error {worst:.2e}"))
}

fn hover_anchor() -> Outcome {
    let m = EnergyModel::calibrated_default().map_err(|e| e.to_string())?;
    let p = m.hover_power();
    check(
        (p - 124.0).abs() <= 1.24 && m.flight.hover_omega < m.flight.omega_max,
        format!(
            "hover {p:.3} W at {:.1} rad/s (max {:.1})",
            m.flight.hover_omega, m.flight.omega_max
        ),
    )
}

fn profile_shape() -> Outcome {
    let m = EnergyModel::calibrated_default().map_err(|e| e.to_string())?;
    let grid = default_velocity_grid();
    for depth in [2.0, 3.0, 4.0, 5.0, 6.0] {
        let p = m.profile(depth, &grid).map_err(|e| e.to_string())?;
        let e: Vec<f64> = p.iter().map(|x| x.1).collect();
        let k = (0..e.len()).min_by(|a, b| e[*a].total_cmp(&e[*b])).unwrap();
        let interior = k > 0 && k + 1 < e.len();
        let descending = e[..=k].windows(2).all(|w| w[1] < w[0]);
        let ascending = e[k..].windows(2).all(|w| w[1] > w[0]);
        let max_first = e.iter().all(|x| *x <= e[0]);
        if !(interior && descending && ascending && max_first) {
            return Err(format!(
                "depth {depth}: not U-shaped with the maximum at 1 m/s"
            ));
        }
    }
    Ok("5 depths U-shaped, maximum at 1 m/s".into())
}

fn brute_argmin(fit: &QuinticFit) -> f64 {
    let n = ((fit.v_hi - fit.v_lo) / 1e-3).round() as usize;
    (0..=n)
        .map(|i| fit.v_lo + i as f64 * 1e-3)
        .min_by(|a, b| fit.energy(*a).total_cmp(&fit.energy(*b)))
        .unwrap()
}

fn fit_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let grid = default_velocity_grid();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let a = rng.random_range(50.0..400.0);
        let b = rng.random_range(0.05..1.0);
        let c = rng.random_range(0.0..50.0);
        let profile: Vec<(f64, f64)> = grid
            .iter()
            .map(|v| (*v, a / v + b * v * v + c + rng.random_range(-0.5..0.5)))
            .collect();
        let fit = fit_quintic(&profile).map_err(|e| e.to_string())?;
        worst = worst.max((optimal_velocity(&fit) - brute_argmin(&fit)).abs());
    }
    check(
        worst <= 0.01,
        format!("worst deviation {worst:.4} m/s over 100 profiles"),
    )
}

fn gradient_check() -> Outcome {
    let energy = EnergyModel::calibrated_default().map_err(|e| e.to_string())?;
    let data = build_dataset(&energy, &training_depths()).map_err(|e| e.to_string())?;
    let params = MlpParams::init(11);
    let lambda = 0.5;
    let at = PhysicsAt::Prediction;
    let (_, grad) = loss_and_gradient(&params, &data, lambda, at).map_err(|e| e.to_string())?;
    let theta = params.flatten();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    let h = 1e-6;
    for _ in 0..50 {
        let i = rng.random_range(0..theta.len());
        let loss_at = |delta: f64| {
            let mut p = params.clone();
            let mut t = theta.clone();
            t[i] += delta;
            p.unflatten(&t);
            loss_and_gradient(&p, &data, lambda, at).map(|(l, _)| l.total)
        };
        let numeric = (loss_at(h).map_err(|e| e.to_string())?
            - loss_at(-h).map_err(|e| e.to_string())?)
            / (2.0 * h);
        let scale = grad[i].abs().max(numeric.abs()).max(1e-4);
        worst = worst.max((grad[i] - numeric).abs() / scale);
    }
    check(
        worst < 1e-4,
        format!("worst relative error {worst:.2e} over 50 parameters"),
    )
}

fn pgnn_accuracy(models: &Models) -> Outcome {
    let mut worst = (0.0f64, 0.0);
    for depth in training_depths().into_iter().chain(HELD_OUT_DEPTHS) {
        let oracle = oracle_velocity(&models.energy, depth).map_err(|e| e.to_string())?;
        let pred = predict(&models.pgnn, depth)
            .map_err(|e| e.to_string())?
            .v_pred;
        if (pred - oracle).abs() > worst.0 {
            worst = ((pred - oracle).abs(), depth);
        }
    }
    check(
        worst.0 <= 0.5,
        format!("worst |v_pred - v*| {:.3} m/s at {} m", worst.0, worst.1),
    )
}

fn intercept_oracle() -> Outcome {
    let hand = [((0.4, 0.5), 1.5), ((1.7, 1.8), 1.2), ((-1.7, -1.8), -1.2)];
    for ((y1, y2), want) in hand {
        let r = predict_intercept(&PlannerInput {
            t_traj: 1.0,
            bound: 2.0,
            y1,
            y2,
            dt: 0.1,
        })
        .map_err(|e| e.to_string())?;
        if (r.y_star - want).abs() > 1e-12 {
            return Err(format!("hand trace ({y1}, {y2}) gave {}", r.y_star));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut n = 0;
    while n < 10_000 {
        let l = rng.random_range(0.5..3.0);
        let dt = 0.1;
        let v: f64 = rng.random_range(0.2..3.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let y2 = rng.random_range(-l..l);
        let y1: f64 = y2 - v * dt;
        if y1.abs() >= l {
            continue;
        }
        let to_wall = if v > 0.0 { l - y2 } else { l + y2 };
        let travel = rng.random_range(to_wall..to_wall + 2.0 * l);
        let t_traj = travel / v.abs();
        let r = predict_intercept(&PlannerInput {
            t_traj,
            bound: l,
            y1,
            y2,
            dt,
        })
        .map_err(|e| e.to_string())?;
        let gate = GateState::new(y2, (y2 - y1) / dt, l, 1.0, 0.0).map_err(|e| e.to_string())?;
        worst = worst.max((r.y_star - step_gate(&gate, t_traj).y).abs());
        n += 1;
    }
    check(
        worst <= 1e-9,
        format!("hand traces exact, worst {worst:.2e} m over 10000 bounces"),
    )
}

fn min_jerk_properties() -> Outcome {
    let traj =
        min_jerk_trajectory([0.0, 0.0, 1.0], [4.0, -1.0, 1.0], 0.5).map_err(|e| e.to_string())?;
    let s0 = sample_state(&traj, 0.0).map_err(|e| e.to_string())?;
    let s1 = sample_state(&traj, 0.5).map_err(|e| e.to_string())?;
    let boundaries = s0.position == traj.start
        && s1.position == traj.end
        && [s0.velocity, s0.acceleration, s1.velocity, s1.acceleration] == [[0.0; 3]; 4];
    let mid = min_jerk_profile(0.5)[0] == 0.5;
    let base = [0.0, 0.0, 0.0, 10.0, -15.0, 6.0];
    let optimal = jerk_integral(&base, &[0.0; 8]);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut all_larger = true;
    for _ in 0..100 {
        // t^3 (1 - t)^3 (a + b t) leaves all six boundary conditions intact
        let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let bump = [
            0.0,
            0.0,
            0.0,
            a,
            b - 3.0 * a,
            3.0 * a - 3.0 * b,
            3.0 * b - a,
            -b,
        ];
        all_larger &= jerk_integral(&base, &bump) > optimal;
    }
    check(
        boundaries && mid && all_larger,
        format!(
            "boundaries {boundaries}, s(0.5) = 0.5 {mid}, 100 perturbations costlier {all_larger}"
        ),
    )
}

/// Squared jerk of `base + bump` (coefficients of `t^k`) integrated on [0, 1] by Simpson.
fn jerk_integral(base: &[f64; 6], bump: &[f64; 8]) -> f64 {
    let mut c = [0.0; 8];
    for k in 0..6 {
        c[k] += base[k];
    }
    for k in 0..8 {
        c[k] += bump[k];
    }
    let jerk = |t: f64| {
        (3..8)
            .map(|k| (k * (k - 1) * (k - 2)) as f64 * c[k] * t.powi(k as i32 - 3))
            .sum::<f64>()
    };
    let n = 2000;
    let h = 1.0 / n as f64;
    (0..=n)
        .map(|i| {
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * jerk(i as f64 * h).powi(2)
        })
        .sum::<f64>()
        * h
        / 3.0
}

fn tracking() -> Outcome {
    let mut means = Vec::new();
    for depth in [3.0, 4.0, 5.0, 6.0, 7.0, 8.0] {
        let mut total = 0.0;
        let mut n = 0.0;
        for v in [0.75, 1.0, 1.25, -0.75, -1.0, -1.25] {
            for y0 in [-1.5, -0.5, 0.5, 1.5] {
                let world = WorldConfig {
                    gate: GateState::new(y0, v, 2.0, 1.0, -2.0).map_err(|e| e.to_string())?,
                    drone: [depth - 2.0, 0.0, 1.0],
                    sensing_interval: 0.1,
                    sensor: SensorConfig::default(),
                    seed: 7,
                };
                total +=
                    tracking_iou(&world, &LifConfig::default(), 20).map_err(|e| e.to_string())?;
                n += 1.0;
            }
        }
        means.push(total / n);
    }
    let near = means[0] >= 0.8 && means[1] >= 0.8;
    let monotone = means[2..].windows(2).all(|w| w[1] <= w[0]);
    let text: Vec<String> = means.iter().map(|m| format!("{m:.3}")).collect();
    check(
        near && monotone,
        format!("mean IOU at 3..8 m: {}", text.join(" ")),
    )
}

fn closed_loop(models: &Models, ablation: &Ablation) -> Outcome {
    let ev = ablation.cells[0];
    let depth = ablation.cells[2];
    let a = ev.mean_energy <= 0.5 * depth.mean_energy;
    let expected = (DEPTH_LATENCY - EVENT_LATENCY) * models.energy.hover_power();
    let surplus = depth.mean_energy - ev.mean_energy;
    let b = (surplus - expected).abs() <= 0.1 * expected;
    let c = ablation
        .cells
        .iter()
        .all(|x| ev.mean_energy <= x.mean_energy)
        && ablation.corner_ratio >= 2.0;
    let rows = success_rate_grid(&GridSpec::standard(), models).map_err(|e| e.to_string())?;
    let event: Vec<_> = rows
        .iter()
        .filter(|r| r.perception == PerceptionMode::EventSnn)
        .collect();
    let base: Vec<_> = rows
        .iter()
        .filter(|r| r.perception == PerceptionMode::DepthBaseline)
        .collect();
    let wins = event
        .iter()
        .zip(&base)
        .filter(|(e, d)| e.success_rate >= d.success_rate)
        .count();
    let d = wins as f64 >= 0.8 * event.len() as f64;
    check(
        a && b && c && d,
        format!(
            "(a) {:.1} J vs {:.1} J {a}; (b) surplus {surplus:.1} J vs {expected:.1} J {b}; \
             (c) ratio {:.3} {c}; (d) {wins}/{} cells {d}",
            ev.mean_energy,
            depth.mean_energy,
            ablation.corner_ratio,
            event.len()
        ),
    )
}

fn determinism(models: &Models, ablation: &Ablation) -> Outcome {
    let energy = &models.energy;
    let twice = |f: &dyn Fn() -> evplan::Result<Vec<u8>>| -> Result<bool, String> {
        let a = f().map_err(|e| e.to_string())?;
        let b = f().map_err(|e| e.to_string())?;
        Ok(a == b && !a.is_empty())
    };
    let profile = twice(&|| {
        let mut buf = Vec::new();
        write_profile_csv(
            &mut buf,
            4.0,
            &energy.profile(4.0, &default_velocity_grid())?,
        )?;
        Ok(buf)
    })?;
    let dataset = twice(&|| {
        let mut buf = Vec::new();
        write_dataset_csv(&mut buf, &build_dataset(energy, &training_depths())?)?;
        Ok(buf)
    })?;
    let training = twice(&|| {
        let data = build_dataset(energy, &training_depths())?;
        let trained = train_pgnn(
            &data,
            &TrainConfig {
                epochs: 200,
                ..TrainConfig::default()
            },
        )?;
        let mut buf = trained.params.to_json()?.into_bytes();
        write_loss_curve_csv(&mut buf, &trained.loss_curve)?;
        Ok(buf)
    })?;
    let episodes = twice(&|| {
        let mut buf = Vec::new();
        write_episode_csv(&mut buf, &run_repeated(&EpisodeConfig::default(), models)?)?;
        Ok(buf)
    })?;
    let grid = twice(&|| {
        let mut buf = Vec::new();
        write_grid_csv(&mut buf, &success_rate_grid(&GridSpec::standard(), models)?)?;
        Ok(buf)
    })?;
    let mut first = Vec::new();
    write_ablation_csv(&mut first, ablation).map_err(|e| e.to_string())?;
    let again = ablation_matrix(&EpisodeConfig::default(), DEFAULT_GATE_SPEED, models)
        .map_err(|e| e.to_string())?;
    let mut second = Vec::new();
    write_ablation_csv(&mut second, &again).map_err(|e| e.to_string())?;
    let abl = first == second;
    check(
        profile && dataset && training && episodes && grid && abl,
        format!(
            "profile {profile}, dataset {dataset}, training {training}, episodes {episodes}, grid {grid}, ablation {abl}"
        ),
    )
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |id: &str, name: &str, started: Instant, outcome: Outcome| {
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS {id:>2} {name}: {d} ({secs:.1} s)"),
            Err(d) => {
                failed += 1;
                println!("FAIL {id:>2} {name}: {d} ({secs:.1} s)");
            }
        }
    };
    let t = Instant::now();
    report("1", "energy model matches e*i", t, energy_oracle());
    let t = Instant::now();
    report("2", "hover power anchor", t, hover_anchor());
    let t = Instant::now();
    report("3", "energy-velocity profile shape", t, profile_shape());
    let t = Instant::now();
    report("4", "fitted optimum vs grid argmin", t, fit_oracle());
    let t = Instant::now();
    report("5", "network gradient check", t, gradient_check());
    let t = Instant::now();
    let models = Models::train_default(0);
    match &models {
        Ok(m) => report("6", "velocity network accuracy", t, pgnn_accuracy(m)),
        Err(e) => report("6", "velocity network accuracy", t, Err(e.to_string())),
    }
    let t = Instant::now();
    report(
        "7",
        "intercept matches bouncing gate",
        t,
        intercept_oracle(),
    );
    let t = Instant::now();
    report("8", "minimum-jerk properties", t, min_jerk_properties());
    let t = Instant::now();
    report("9", "spiking tracker IOU", t, tracking());
    let t = Instant::now();
    let ablation = models.as_ref().map_err(|e| e.to_string()).and_then(|m| {
        ablation_matrix(&EpisodeConfig::default(), DEFAULT_GATE_SPEED, m).map_err(|e| e.to_string())
    });
    match (&models, &ablation) {
        (Ok(m), Ok(a)) => report("10", "closed-loop trends", t, closed_loop(m, a)),
        (_, Err(e)) => report("10", "closed-loop trends", t, Err(e.clone())),
        (Err(e), _) => report("10", "closed-loop trends", t, Err(e.to_string())),
    }
    let t = Instant::now();
    match (&models, &ablation) {
        (Ok(m), Ok(a)) => report("11", "byte-identical reruns", t, determinism(m, a)),
        _ => report(
            "11",
            "byte-identical reruns",
            t,
            Err("models or ablation unavailable".into()),
        ),
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
