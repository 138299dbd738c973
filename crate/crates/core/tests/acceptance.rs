//! Acceptance suite. Prints one PASS/FAIL line per criterion. Exits non-zero
//! on failure only when `ACCEPTANCE_STRICT` is set, so an honest FAIL does
//! not break the workspace test run.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use refnav::ekf::{damp_sigma, idx, MotionModel, SigmaDamperState, StateVector};
use refnav::eval::{detection_report, evaluate_averaging, evaluate_lbpm_outputs, ChannelErrors};
use refnav::io::write_estimate;
use refnav::lbpm::{
    arc_displacement, lcp_to_azimuth, pose_from_marker_pair, velocity_from_observations, ConeForm,
    LbpmConfig, Marker, MarkerLibrary, MarkerObservation,
};
use refnav::pipeline::{run, PipelineConfig, PipelineInputs, PipelineOutput};
use refnav::profile::profile;
use refnav::sim::{simulate, Scenario, ScenarioKind, SimRun};
use refnav::ssc::{train_on_imu, ForestParams, RandomForestModel, SscConfig, StandstillClassifier};
use refnav::{ltp_to_lcp, normalize_angle, LtpPose, MotionState, Vec2};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn kmh(v: f64) -> f64 {
    v / 3.6
}

fn no_ssc() -> PipelineConfig {
    PipelineConfig {
        use_ssc: false,
        ..PipelineConfig::default()
    }
}

fn inputs_for<'a>(
    r: &'a SimRun,
    lidar: bool,
    model: Option<&'a RandomForestModel>,
) -> PipelineInputs<'a> {
    let t0 = r.truth.samples()[0];
    PipelineInputs {
        imu: &r.imu,
        points: lidar.then_some(r.points.as_slice()),
        markers: lidar.then_some(&r.markers),
        classifier: model,
        initial_pose: t0.pose(),
        initial_speed: t0.v,
    }
}

fn position_errors(out: &PipelineOutput, r: &SimRun) -> Vec<f64> {
    out.rows
        .iter()
        .zip(r.truth.samples())
        .map(|(e, s)| (e.x - s.x).hypot(e.y - s.y))
        .collect()
}

/// Classifier trained on a simulated three-mode dataset.
fn trained_model() -> RandomForestModel {
    let r = simulate(&Scenario::new(ScenarioKind::ThreeMode, 0.0, 1800.0, 1)).expect("simulate");
    let labels: Vec<MotionState> = r.truth.samples().iter().map(|s| s.motion).collect();
    train_on_imu(
        &r.imu,
        &labels,
        &SscConfig::default(),
        &ForestParams::default(),
        42,
    )
    .expect("train")
}

fn c1_damper_ratio() -> Outcome {
    let (wc, ws) = SigmaDamperState::blend_weights(3.0, 1.5);
    let e = (-2.0f64).exp();
    let exact = (wc - e).abs() < 1e-12 && (ws - (1.0 - e)).abs() < 1e-12;
    let d = damp_sigma(
        SigmaDamperState {
            c: 2.0,
            improving_time: 2.9,
            t_sat: 1.5,
        },
        0.5,
        0.1,
    );
    let blended = (d.c - (2.0 * e + 0.5 * (1.0 - e))).abs() < 1e-12;
    let rounded = ((wc * 100.0).round() / 100.0, (ws * 100.0).round() / 100.0);
    outcome(
        exact && blended && rounded == (0.14, 0.86),
        format!(
            "weights {wc:.6}:{ws:.6}, rounded {:.2}:{:.2} (reference 0.14:0.86)",
            rounded.0, rounded.1
        ),
    )
}

fn c2_lbpm_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_v = 0.0f64;
    let mut worst_p = 0.0f64;
    let mut worst_psi = 0.0f64;
    let mut n = 0;
    while n < 1000 {
        let v = rng.random_range(0.5..12.0);
        let w = if rng.random_bool(0.2) {
            0.0
        } else {
            rng.random_range(-0.6..0.6)
        };
        let pose1 = LtpPose::new(
            rng.random_range(-50.0..50.0),
            rng.random_range(-50.0..50.0),
            rng.random_range(-PI..PI),
        );
        let at = |dt: f64| {
            let (dx, dy, dpsi) = arc_displacement(v, w, dt);
            pose1.compose(dx, dy, dpsi)
        };
        // two markers within range of both looks
        let m = |rng: &mut ChaCha8Rng| {
            let r = rng.random_range(2.0..14.0);
            let a = rng.random_range(-PI..PI);
            pose1.position() + Vec2::new(r * a.cos(), r * a.sin())
        };
        let (a, b) = (m(&mut rng), m(&mut rng));
        if (a - b).norm() < 1.0 {
            continue;
        }
        let lib = MarkerLibrary::new(vec![Marker::new("A", a.x, a.y), Marker::new("B", b.x, b.y)])
            .expect("library");
        let look = |p: Vec2, t: f64| {
            let (d, az) = lcp_to_azimuth(ltp_to_lcp(p, &at(t)));
            MarkerObservation::new(t, d, az)
        };
        let t_b = rng.random_range(0.01..0.1);
        let t_a2 = rng.random_range(0.05..0.15);
        let o_a1 = look(a, 0.0);
        let o_a2 = look(a, t_a2);
        let o_b = look(b, t_b);
        if o_a1.distance > 16.0 || o_a2.distance > 16.0 || o_b.distance > 16.0 {
            continue;
        }
        let Ok(v_est) = velocity_from_observations(&o_a1, &o_a2, w, ConeForm::Geometric) else {
            continue;
        };
        let (p1, p2) = pose_from_marker_pair(&o_a1, &o_b, (0, 1), &lib, v, w).expect("pose");
        let (q1, q2) = (pose1, at(t_b));
        worst_v = worst_v.max((v_est - v).abs());
        for (e, t) in [(p1, q1), (p2, q2)] {
            worst_p = worst_p.max((e.x - t.x).hypot(e.y - t.y));
            worst_psi = worst_psi.max(normalize_angle(e.psi - t.psi).abs());
        }
        n += 1;
    }
    outcome(
        worst_v < 1e-6 && worst_p < 1e-9 && worst_psi < 1e-9,
        format!("{n} geometries: max |dv| {worst_v:.2e} m/s, |dp| {worst_p:.2e} m, |dpsi| {worst_psi:.2e} rad"),
    )
}

struct NoisyRun {
    label: String,
    errors: ChannelErrors,
    averaging_single_rms: f64,
    averaging_rms: f64,
}

/// Published reference mean, std and max per channel.
type ReferenceRow = [[f64; 3]; 3];

fn reference_rows() -> Vec<(&'static str, f64, ReferenceRow)> {
    vec![
        (
            "drive-by",
            5.0,
            [[0.06, 0.08, 0.33], [0.04, 0.02, 0.09], [0.73, 0.25, 1.48]],
        ),
        (
            "drive-by",
            10.0,
            [[0.08, 0.10, 0.57], [0.03, 0.02, 0.10], [0.19, 0.20, 0.86]],
        ),
        (
            "drive-by",
            15.0,
            [[0.07, 0.09, 0.39], [0.03, 0.02, 0.13], [0.26, 0.19, 0.69]],
        ),
        (
            "drive-by",
            20.0,
            [[0.08, 0.09, 0.50], [0.03, 0.02, 0.09], [0.37, 0.23, 0.83]],
        ),
        (
            "drive-by",
            25.0,
            [[0.08, 0.10, 0.65], [0.04, 0.02, 0.07], [0.58, 0.23, 0.84]],
        ),
        (
            "drive-by",
            30.0,
            [[0.08, 0.10, 0.57], [0.06, 0.02, 0.10], [0.51, 0.22, 0.96]],
        ),
        (
            "drive-by",
            35.0,
            [[0.08, 0.11, 0.44], [0.07, 0.03, 0.11], [0.44, 0.25, 0.88]],
        ),
        (
            "drive-by",
            40.0,
            [[0.11, 0.13, 0.47], [0.08, 0.03, 0.15], [0.41, 0.26, 0.86]],
        ),
        (
            "slalom",
            5.0,
            [[0.08, 0.11, 0.59], [0.04, 0.02, 0.12], [0.24, 0.29, 1.37]],
        ),
        (
            "slalom",
            10.0,
            [[0.09, 0.12, 0.59], [0.04, 0.02, 0.13], [0.40, 0.29, 1.22]],
        ),
        (
            "slalom",
            20.0,
            [[0.14, 0.17, 0.71], [0.04, 0.02, 0.10], [0.32, 0.36, 1.18]],
        ),
        (
            "slalom",
            30.0,
            [[0.18, 0.24, 0.76], [0.05, 0.02, 0.09], [0.36, 0.40, 1.28]],
        ),
        (
            "slalom",
            40.0,
            [[0.18, 0.22, 0.62], [0.10, 0.02, 0.12], [0.53, 0.43, 1.25]],
        ),
    ]
}

fn noisy_runs() -> Vec<(NoisyRun, ReferenceRow)> {
    reference_rows()
        .into_iter()
        .enumerate()
        .map(|(i, (name, speed, reference))| {
            let kind = if name == "drive-by" {
                ScenarioKind::DriveBy
            } else {
                ScenarioKind::Slalom
            };
            let r =
                simulate(&Scenario::new(kind, kmh(speed), 30.0, 100 + i as u64)).expect("simulate");
            let out = run(&inputs_for(&r, true, None), &no_ssc()).expect("pipeline");
            let outputs: Vec<_> = out.lbpm.iter().map(|u| u.output).collect();
            let errors = evaluate_lbpm_outputs(&outputs, &r.truth).expect("lbpm errors");
            let avg = evaluate_averaging(&out.lbpm, &r.truth).expect("averaging");
            (
                NoisyRun {
                    label: format!("{name} {speed:>2} km/h"),
                    errors,
                    averaging_single_rms: avg.single.rms,
                    averaging_rms: avg.averaged.rms,
                },
                reference,
            )
        })
        .collect()
}

fn c3_noisy_envelopes(runs: &[(NoisyRun, ReferenceRow)]) -> Outcome {
    println!(
        "      {:<18} {:>26} | {:>26} | {:>26}",
        "", "velocity m/s mean/std/max", "position m mean/std/max", "orientation deg mean/std/max"
    );
    let mut pass = true;
    for (r, p) in runs {
        let e = &r.errors;
        let ch = [e.velocity, e.position, e.orientation_deg];
        println!(
            "      {:<18} {:>26} | {:>26} | {:>26}",
            format!("{} sim", r.label),
            format!("{:.3}/{:.3}/{:.3}", ch[0].mean, ch[0].std, ch[0].max),
            format!("{:.3}/{:.3}/{:.3}", ch[1].mean, ch[1].std, ch[1].max),
            format!("{:.3}/{:.3}/{:.3}", ch[2].mean, ch[2].std, ch[2].max),
        );
        println!(
            "      {:<18} {:>26} | {:>26} | {:>26}",
            "  reference",
            format!("{:.2}/{:.2}/{:.2}", p[0][0], p[0][1], p[0][2]),
            format!("{:.2}/{:.2}/{:.2}", p[1][0], p[1][1], p[1][2]),
            format!("{:.2}/{:.2}/{:.2}", p[2][0], p[2][1], p[2][2]),
        );
        pass &= e.velocity.mean <= 0.2 && e.position.mean <= 0.10 && e.orientation_deg.mean <= 1.5;
    }
    let worst =
        |f: fn(&ChannelErrors) -> f64| runs.iter().map(|(r, _)| f(&r.errors)).fold(0.0, f64::max);
    outcome(
        pass,
        format!(
            "{} runs; worst means {:.3} m/s, {:.3} m, {:.3} deg (limits 0.2, 0.10, 1.5)",
            runs.len(),
            worst(|e| e.velocity.mean),
            worst(|e| e.position.mean),
            worst(|e| e.orientation_deg.mean)
        ),
    )
}

fn c4_averaging(runs: &[(NoisyRun, ReferenceRow)]) -> Outcome {
    let never_worse = runs
        .iter()
        .all(|(r, _)| r.averaging_rms <= r.averaging_single_rms);
    let strict = runs
        .iter()
        .filter(|(r, _)| r.averaging_rms < r.averaging_single_rms)
        .count();
    let share = strict as f64 / runs.len() as f64;
    let ratios: Vec<String> = runs
        .iter()
        .map(|(r, _)| format!("{:.2}", r.averaging_rms / r.averaging_single_rms))
        .collect();
    outcome(
        never_worse && share >= 0.8,
        format!(
            "averaged/single RMS per run [{}]; strictly better in {strict}/{}",
            ratios.join(" "),
            runs.len()
        ),
    )
}

fn c5_zero_false_positives(model: &RandomForestModel) -> Outcome {
    let cfg = SscConfig::default();
    let r = simulate(&Scenario::new(ScenarioKind::ThreeMode, 0.0, 1800.0, 2)).expect("simulate");
    let mut clf = StandstillClassifier::new(model.clone(), cfg).expect("classifier");
    let detected: Vec<MotionState> = r.imu.iter().map(|s| clf.push(s).state).collect();
    let truth: Vec<MotionState> = r.truth.samples().iter().map(|s| s.motion).collect();
    let rep = detection_report(&truth, &detected, cfg.n_samples).expect("report");
    let max_delay = rep.max_stop_delay().unwrap_or(0);
    let c = rep.confusion;
    outcome(
        rep.false_positive_outside_tolerance == 0 && max_delay <= 2 * cfg.n_samples,
        format!(
            "30 min held out: TP {} FN {} FP {} TN {}; FP beyond one window of a transition {}; worst stop delay {} samples (limit {})",
            c.true_positive,
            c.false_negative,
            c.false_positive,
            c.true_negative,
            rep.false_positive_outside_tolerance,
            if max_delay == usize::MAX { "never".to_string() } else { max_delay.to_string() },
            2 * cfg.n_samples
        ),
    )
}

fn c6_vibrating_standstill(model: &RandomForestModel) -> Outcome {
    let r = simulate(&Scenario::new(
        ScenarioKind::StandstillVibration,
        0.0,
        254.0,
        5,
    ))
    .expect("simulate");
    let with = run(
        &inputs_for(&r, false, Some(model)),
        &PipelineConfig::default(),
    )
    .expect("pipeline");
    let without = run(&inputs_for(&r, false, None), &no_ssc()).expect("pipeline");
    let (a, b) = (with.path_length(), without.path_length());
    outcome(
        a <= 0.12 && b > 0.5,
        format!("apparent movement with gate {a:.4} m (limit 0.12), without {b:.3} m (must exceed 0.5; reference 0.12 vs 1.26)"),
    )
}

fn c7_slow_roll(model: &RandomForestModel) -> Outcome {
    let mut worst = 1.0f64;
    let mut parts = Vec::new();
    for (i, v) in [0.3, 0.6, 1.0].into_iter().enumerate() {
        let r = simulate(&Scenario::new(
            ScenarioKind::WalkingRoll,
            v,
            120.0,
            70 + i as u64,
        ))
        .expect("simulate");
        let mut clf =
            StandstillClassifier::new(model.clone(), SscConfig::default()).expect("classifier");
        let (mut rolling, mut hit) = (0usize, 0usize);
        for (s, t) in r.imu.iter().zip(r.truth.samples()) {
            let c = clf.push(s).state;
            if t.motion == MotionState::Motion {
                rolling += 1;
                hit += usize::from(c == MotionState::Motion);
            }
        }
        let share = hit as f64 / rolling as f64;
        worst = worst.min(share);
        parts.push(format!("{v} m/s {:.1}%", 100.0 * share));
    }
    outcome(
        worst >= 0.95,
        format!("Motion share while rolling: {}", parts.join(", ")),
    )
}

fn c8_jacobian() -> Outcome {
    let model = MotionModel { t_beta: 0.5 };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let mut x = StateVector::zeros();
        for i in 0..x.len() {
            x[i] = rng.random_range(-1.0..1.0);
        }
        x[idx::PSI] = rng.random_range(-2.5..2.5);
        x[idx::V] = rng.random_range(0.5..30.0);
        x[idx::YAW_RATE] = rng.random_range(-1.0..1.0);
        x[idx::AX] = rng.random_range(-3.0..3.0);
        let dt = rng.random_range(0.005..0.05);
        let f = model.jacobian(&x, dt);
        let mut num = f * 0.0;
        for j in 0..x.len() {
            let h = 1e-6 * x[j].abs().max(1.0);
            let (mut xp, mut xm) = (x, x);
            xp[j] += h;
            xm[j] -= h;
            let (fp, fm) = (model.propagate(&xp, dt), model.propagate(&xm, dt));
            for i in 0..x.len() {
                let mut d = fp[i] - fm[i];
                if i == idx::PSI || i == idx::BETA_V || i == idx::BETA_P {
                    d = normalize_angle(d);
                }
                num[(i, j)] = d / (2.0 * h);
            }
        }
        worst = worst.max((f - num).norm() / num.norm());
    }
    outcome(
        worst < 1e-5,
        format!("1000 states, max relative Frobenius error {worst:.2e}"),
    )
}

fn c9_drift() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for seed in [9u64, 10] {
        let r = simulate(&Scenario::new(
            ScenarioKind::DriveBy,
            kmh(20.0),
            600.0,
            seed,
        ))
        .expect("simulate");
        let dr = run(&inputs_for(&r, false, None), &no_ssc()).expect("pipeline");
        let lb = run(&inputs_for(&r, true, None), &no_ssc()).expect("pipeline");
        let e_dr = position_errors(&dr, &r);
        let e_lb = position_errors(&lb, &r);
        // two-minute block means
        let blocks: Vec<f64> = e_dr
            .chunks(12000)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect();
        let rising = blocks.windows(2).all(|w| w[1] > w[0]);
        let dr_max = e_dr.iter().copied().fold(0.0, f64::max);
        let lb_max = e_lb.iter().copied().fold(0.0, f64::max);
        pass &= rising && dr_max > 10.0 && lb_max < 0.5;
        parts.push(format!(
            "seed {seed}: IMU-only 2-min means [{}] m, max {dr_max:.1} m; with markers max {lb_max:.3} m",
            blocks.iter().map(|b| format!("{b:.1}")).collect::<Vec<_>>().join(" ")
        ));
    }
    outcome(pass, parts.join("; "))
}

fn c10_runtime(model: &RandomForestModel) -> Outcome {
    let r = simulate(&Scenario::new(ScenarioKind::Slalom, kmh(20.0), 60.0, 11)).expect("simulate");
    let stats = profile(&r, model, &PipelineConfig::default(), 100_000).expect("profile");
    let budget = |m: &str| match m {
        "clustering" => 100.0,
        "ssc_classify" => 300.0,
        "ekf_step" => 1000.0,
        "velocity" => 100.0,
        "pose" => 200.0,
        _ => f64::INFINITY,
    };
    let pass = stats
        .iter()
        .all(|s| s.calls >= 100_000 && s.median_us < budget(&s.module));
    let parts: Vec<String> = stats
        .iter()
        .map(|s| {
            format!(
                "{} {:.2} us (< {})",
                s.module,
                s.median_us,
                budget(&s.module)
            )
        })
        .collect();
    outcome(
        pass,
        format!("median per call over 1e5 calls: {}", parts.join(", ")),
    )
}

fn c11_d_c_max() -> Outcome {
    let d = LbpmConfig::default().d_c_max();
    outcome((d - 1.0).abs() <= 0.01, format!("d_c,max = {d:.4} m"))
}

fn c12_determinism(model: &RandomForestModel) -> Outcome {
    let sc = Scenario::new(ScenarioKind::ParkingLoop, 0.0, 40.0, 12);
    let (a, b) = (
        simulate(&sc).expect("simulate"),
        simulate(&sc).expect("simulate"),
    );
    let same_sim = a.imu == b.imu && a.points == b.points && a.truth.samples() == b.truth.samples();

    let csv = |concurrent: bool| {
        let cfg = PipelineConfig {
            concurrent,
            ..PipelineConfig::default()
        };
        let out = run(&inputs_for(&a, true, Some(model)), &cfg).expect("pipeline");
        let mut buf = Vec::new();
        write_estimate(&mut buf, &out.rows).expect("csv");
        buf
    };
    let serial = csv(false);
    let serial_again = csv(false);
    let threaded = csv(true);
    let threaded_again = csv(true);
    let same_run = serial == serial_again && serial == threaded && threaded == threaded_again;

    let small = simulate(&Scenario::new(ScenarioKind::ThreeMode, 0.0, 200.0, 3)).expect("simulate");
    let labels: Vec<MotionState> = small.truth.samples().iter().map(|s| s.motion).collect();
    let train = || {
        train_on_imu(
            &small.imu,
            &labels,
            &SscConfig::default(),
            &ForestParams::default(),
            5,
        )
        .and_then(|m| m.to_json())
        .expect("train")
    };
    let same_model = train() == train();
    outcome(
        same_sim && same_run && same_model,
        format!(
            "simulation {same_sim}, estimate CSV serial/concurrent ({} bytes) {same_run}, trained model {same_model}",
            serial.len()
        ),
    )
}

fn main() {
    let started = Instant::now();
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    results.push(("1 sigma-damper ratio", c1_damper_ratio()));
    results.push(("2 LbPM exactness", c2_lbpm_exactness()));
    let runs = noisy_runs();
    results.push(("3 LbPM noisy envelopes", c3_noisy_envelopes(&runs)));
    results.push(("4 two-instance averaging", c4_averaging(&runs)));
    let model = trained_model();
    results.push((
        "5 SSC zero false positives",
        c5_zero_false_positives(&model),
    ));
    results.push(("6 vibrating standstill", c6_vibrating_standstill(&model)));
    results.push(("7 slow-roll detection", c7_slow_roll(&model)));
    results.push(("8 EKF Jacobian", c8_jacobian()));
    results.push(("9 dead-reckoning drift", c9_drift()));
    results.push(("10 runtime budget", c10_runtime(&model)));
    results.push(("11 d_c,max", c11_d_c_max()));
    results.push(("12 determinism", c12_determinism(&model)));

    for (name, o) in &results {
        println!(
            "{} criterion {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    let failed = results.iter().filter(|(_, o)| !o.pass).count();
    println!(
        "acceptance: {} passed, {failed} failed in {:.1} s",
        results.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
