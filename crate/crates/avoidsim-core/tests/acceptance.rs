//! Acceptance suite: one test per shipped guarantee, each printing a
//! PASS line with its measured numbers (run with `--nocapture` to see
//! them).

mod common;

use avoidsim_core::comfort::{
    ahp_weights, classify, evaluate_accuracy, synth_dataset, train, ClassifierKind,
    ClassifierModel, ComparisonMatrix, Standardizer, SynthConfig, TrainOptions,
};
use avoidsim_core::qp::{kkt_residuals, solve_qp, QpProblem, QpStatus, SolveOptions};
use avoidsim_core::sim::{comfort_report, run_scenario_traced, to_csv, ScenarioConfig, SimLog};
use avoidsim_core::tracker::{track_step, PathSample, ReferencePath, TrackerConfig};
use avoidsim_core::vehicle::{
    compute_features, linearize, step_dynamic, ControlInput, FeatureVector, VehicleParams,
    VehicleState,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn scenario(name: &str) -> ScenarioConfig {
    let path = format!("{}/../../scenarios/{name}", env!("CARGO_MANIFEST_DIR"));
    ScenarioConfig::load(path.as_ref()).unwrap_or_else(|e| panic!("loading {name}: {e}"))
}

/// Executed-trajectory onset: distance from the obstacle at which the run
/// first deviates 0.1 m laterally from its start lane.
fn onset_distance(log: &SimLog, obstacle_x: f64) -> Option<f64> {
    let y0 = log.rows.first()?.y;
    log.rows.iter().find(|r| (r.y - y0).abs() > 0.1).map(|r| obstacle_x - r.x)
}

/// Every chosen plan that initiates a lateral deviation must do so no
/// closer to the obstacle than the last-point-to-steer distance.
fn assert_plpts_respected(trace: &avoidsim_core::sim::RunTrace) -> usize {
    let mut checked = 0;
    for ev in &trace.plan_events {
        if !ev.feasible {
            continue;
        }
        if let Some(gap) = ev.onset_gap {
            assert!(
                gap >= ev.required_gap,
                "t={:.2}: deviation initiated {gap:.2} m before the obstacle, required {:.2} m",
                ev.t,
                ev.required_gap
            );
            checked += 1;
        }
    }
    checked
}

#[test]
fn acceptance_01_qp_matches_enumeration_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..200 {
        let n = 2 + case % 7; // up to 8 variables
        let m = 1 + case % 12;
        let (h, f, a, b) = common::random_qp(&mut rng, n, m);
        let p = QpProblem::new(h.clone(), f.clone(), a.clone(), b.clone()).unwrap();
        let sol = solve_qp(&p, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal, "case {case} did not converge");
        let (x_ref, _) = common::enumerate_qp(&h, &f, &a, &b)
            .expect("enumeration oracle found no KKT point on a feasible problem");
        let dx = (sol.x.clone() - &x_ref).amax();
        assert!(dx <= 1e-7, "case {case}: minimizer mismatch {dx:.3e}");
        let res = kkt_residuals(&p, &sol);
        assert!(res.max() <= 1e-8, "case {case}: residuals {res:?}");
    }
    let dt = start.elapsed();
    assert!(dt.as_secs_f64() < 10.0, "took {dt:?}");
    println!("acceptance 1: PASS - 200 QPs match the enumeration oracle (<=1e-7), KKT <= 1e-8, {dt:?}");
}

#[test]
fn acceptance_02_linearization_matches_finite_differences() {
    let start = Instant::now();
    let p = VehicleParams::default();
    let dt = 0.02;
    let h = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let s = VehicleState::new(
            rng.gen_range(-10.0..10.0),
            rng.gen_range(-10.0..10.0),
            rng.gen_range(-2.5..2.5),
            rng.gen_range(3.0..25.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-0.5..0.5),
        );
        let u = ControlInput::new(rng.gen_range(-0.4..0.4));
        let (a, b) = linearize(&s, &u, &p, dt).unwrap();
        // Central differences of the step map, component by component.
        let step_state = |st: VehicleState, delta: f64| {
            let next = step_dynamic(&st, &ControlInput::new(delta), &p, dt).unwrap();
            [next.x, next.y, next.psi, next.vx, next.vy, next.r]
        };
        let fields = |st: &VehicleState| [st.x, st.y, st.psi, st.vx, st.vy, st.r];
        for j in 0..6 {
            let mut sp = s;
            let mut sm = s;
            let mut ap = fields(&sp);
            let mut am = fields(&sm);
            ap[j] += h;
            am[j] -= h;
            sp = VehicleState::new(ap[0], ap[1], ap[2], ap[3], ap[4], ap[5]);
            sm = VehicleState::new(am[0], am[1], am[2], am[3], am[4], am[5]);
            let fp = step_state(sp, u.delta_f);
            let fm = step_state(sm, u.delta_f);
            for i in 0..6 {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                let an = a[(i, j)];
                let rel = (fd - an).abs() / an.abs().max(1e-3);
                worst = worst.max(rel);
                assert!(rel <= 1e-5, "A[{i}][{j}] rel err {rel:.2e}");
            }
        }
        let fp = step_state(s, u.delta_f + h);
        let fm = step_state(s, u.delta_f - h);
        for i in 0..6 {
            let fd = (fp[i] - fm[i]) / (2.0 * h);
            let rel = (fd - b[i]).abs() / b[i].abs().max(1e-3);
            worst = worst.max(rel);
            assert!(rel <= 1e-5, "B[{i}] rel err {rel:.2e}");
        }
    }
    let dt = start.elapsed();
    assert!(dt.as_secs_f64() < 1.0, "took {dt:?}");
    println!("acceptance 2: PASS - linearization vs finite differences, worst rel {worst:.2e}, {dt:?}");
}

#[test]
fn acceptance_03_tracker_steady_state_on_arc() {
    let p = VehicleParams::default();
    let cfg = TrackerConfig::default();
    let v = 30.0 / 3.6;
    let radius = 50.0;
    let n = 400;
    let samples: Vec<PathSample> = (0..=n)
        .map(|i| {
            let th = 1.5 * i as f64 / n as f64;
            PathSample { x: radius * th.sin(), y: radius * (1.0 - th.cos()), psi: th, v }
        })
        .collect();
    let path = ReferencePath::new(samples).unwrap();

    let mut state = VehicleState::cruising(0.0, 0.0, v);
    let mut u = ControlInput::default();
    let steps = (8.0 / cfg.dt) as usize;
    let mut tail = Vec::new();
    for k in 0..steps {
        let (nu, _) = track_step(&state, &path, &p, &cfg, &u).unwrap();
        // Hard input constraints, exactly.
        assert!(nu.delta_f.abs() <= cfg.bounds.delta, "magnitude bound violated");
        assert!(
            (nu.delta_f - u.delta_f).abs() <= cfg.bounds.ddelta_per_step,
            "rate bound violated"
        );
        u = nu;
        state = step_dynamic(&state, &u, &p, cfg.dt).unwrap();
        if k >= steps - 50 {
            tail.push(u.delta_f);
        }
    }
    let mean_u: f64 = tail.iter().sum::<f64>() / tail.len() as f64;
    let expected = p.steady_steer_for_radius(radius, v);
    let rel = (mean_u - expected).abs() / expected;
    assert!(rel <= 0.10, "steady steering {mean_u:.4} vs analytic {expected:.4} (rel {rel:.3})");
    println!(
        "acceptance 3: PASS - steady steering {mean_u:.4} rad vs analytic {expected:.4} rad (rel {rel:.3}), hard bounds exact"
    );
}

#[test]
fn acceptance_04_single_obstacle_avoidance() {
    let start = Instant::now();
    let cfg = scenario("single_obstacle_30.cfg");
    assert_eq!(cfg.planner.weights.s_obstacle, 20.0);
    assert_eq!(cfg.speed_kmh, 30.0);
    let (log, trace) = run_scenario_traced(&cfg).unwrap();
    assert!(trace.clearance.iter().all(|c| *c > 0.0), "collision logged");
    assert!(trace.min_clearance >= 0.5, "min clearance {}", trace.min_clearance);
    assert_plpts_respected(&trace);
    let final_offset = (log.rows.last().unwrap().y - log.rows[0].y).abs();
    assert!(final_offset < 0.1, "final offset {final_offset}");
    let dt = start.elapsed();
    assert!(dt.as_secs_f64() < 5.0, "took {dt:?}");
    println!(
        "acceptance 4: PASS - zero collisions, min clearance {:.2} m, final offset {final_offset:.3} m, {dt:?}",
        trace.min_clearance
    );
}

#[test]
fn acceptance_05_double_cross_obstacles() {
    let start = Instant::now();
    let cfg = scenario("double_cross_30.cfg");
    assert_eq!(cfg.obstacles.len(), 2);
    let (_, trace) = run_scenario_traced(&cfg).unwrap();
    assert!(trace.clearance.iter().all(|c| *c > 0.0), "collision logged");
    assert_plpts_respected(&trace);
    let dt = start.elapsed();
    assert!(dt.as_secs_f64() < 5.0, "took {dt:?}");
    println!(
        "acceptance 5: PASS - both cross-distributed obstacles cleared, min clearance {:.2} m, {dt:?}",
        trace.min_clearance
    );
}

#[test]
fn acceptance_06_obstacle_weight_sweep_monotone_onset() {
    let base = scenario("s_sweep.cfg");
    let obstacle_x = base.obstacles[0].xo;
    let mut onsets = Vec::new();
    for s in [30.0, 40.0, 50.0, 60.0, 70.0, 80.0] {
        let mut cfg = base.clone();
        cfg.set_param("planner.weights.s_obstacle", s).unwrap();
        let (log, trace) = run_scenario_traced(&cfg).unwrap();
        assert!(trace.min_clearance > 0.0, "collision at S={s}");
        assert_plpts_respected(&trace);
        let onset = onset_distance(&log, obstacle_x)
            .unwrap_or_else(|| panic!("S={s}: never deviated"));
        onsets.push((s, onset));
    }
    for w in onsets.windows(2) {
        assert!(
            w[1].1 >= w[0].1,
            "onset distance decreased: S={} -> {:.2} m, S={} -> {:.2} m",
            w[0].0,
            w[0].1,
            w[1].0,
            w[1].1
        );
    }
    let spread = onsets.last().unwrap().1 - onsets[0].1;
    assert!(spread >= 2.0, "spread {spread:.2} m");
    let list: Vec<String> = onsets.iter().map(|(s, d)| format!("S={s}:{d:.1}m")).collect();
    println!(
        "acceptance 6: PASS - onset distance non-decreasing [{}], spread {spread:.1} m",
        list.join(" ")
    );
}

#[test]
fn acceptance_07_plpts_constraint_holds_in_every_run() {
    // Spot values against the speed-distance table.
    let table = avoidsim_core::planner::PlptsTable::default();
    assert_eq!(avoidsim_core::planner::plpts_distance(30.0, &table).unwrap(), 8.65);
    assert_eq!(avoidsim_core::planner::plpts_distance(80.0, &table).unwrap(), 18.15);

    let mut checked = 0usize;
    let mut runs = vec![
        scenario("single_obstacle_30.cfg"),
        scenario("double_cross_30.cfg"),
        scenario("confidence_ab.cfg"),
    ];
    for s in [30.0, 80.0] {
        let mut cfg = scenario("s_sweep.cfg");
        cfg.set_param("planner.weights.s_obstacle", s).unwrap();
        runs.push(cfg);
    }
    for cfg in &runs {
        let (_, trace) = run_scenario_traced(cfg).unwrap();
        for ev in &trace.plan_events {
            if !ev.feasible {
                continue;
            }
            if let Some(gap) = ev.onset_gap {
                assert!(
                    gap >= ev.required_gap,
                    "t={:.2}: chosen plan initiates deviation {gap:.2} m before the obstacle, \
                     required {:.2} m",
                    ev.t,
                    ev.required_gap
                );
                checked += 1;
            }
        }
    }
    assert!(checked > 0, "no onset events observed");
    println!(
        "acceptance 7: PASS - {checked} steering onsets all respect the last-point-to-steer distance; 30 km/h -> 8.65 m, 80 km/h -> 18.15 m exact"
    );
}

#[test]
fn acceptance_08_confidence_term_improves_comfort_counts() {
    let start = Instant::now();
    let cfg_b = scenario("confidence_ab.cfg");
    assert!(cfg_b.planner.weights.r_confidence > 0.0);
    let mut cfg_a = cfg_b.clone();
    cfg_a.planner.weights.r_confidence = 0.0;
    let (log_a, trace_a) = run_scenario_traced(&cfg_a).unwrap();
    let (log_b, trace_b) = run_scenario_traced(&cfg_b).unwrap();
    for trace in [&trace_a, &trace_b] {
        assert!(trace.clearance.iter().all(|c| *c > 0.0), "collision logged");
        assert_plpts_respected(trace);
    }
    let data = synth_dataset(&cfg_b.classifier.synth).unwrap();
    let model = train(&data, cfg_b.classifier.kind, &TrainOptions::default()).unwrap();
    let rep_a = comfort_report(&log_a, &model).unwrap();
    let rep_b = comfort_report(&log_b, &model).unwrap();
    assert!(
        rep_b.good() >= rep_a.good(),
        "good count decreased: {} -> {}",
        rep_a.good(),
        rep_b.good()
    );
    assert!(
        rep_b.poor() <= rep_a.poor(),
        "poor count increased: {} -> {}",
        rep_a.poor(),
        rep_b.poor()
    );
    let dt = start.elapsed();
    assert!(dt.as_secs_f64() < 10.0, "took {dt:?}");
    println!(
        "acceptance 8: PASS - evaluation model on: good {} -> {}, poor {} -> {} (of {}), {dt:?}",
        rep_a.good(),
        rep_b.good(),
        rep_a.poor(),
        rep_b.poor(),
        rep_a.total
    );
}

fn feature_grid() -> Vec<FeatureVector> {
    // 5^5 = 3125 points spanning the class-mean region.
    let axis = [-3.0, -1.5, 0.0, 1.5, 3.0];
    let mut out = Vec::with_capacity(3125);
    for &a in &axis {
        for &b in &axis {
            for &c in &axis {
                for &d in &axis {
                    for &e in &axis {
                        out.push(FeatureVector::new(a, b, c, d, e));
                    }
                }
            }
        }
    }
    out
}

#[test]
fn acceptance_09_classifier_equivalences_and_reproducible_accuracy() {
    let raw = Standardizer { mean: [0.0; 5], std: [1.0; 5] };
    let mut eye = [[0.0; 5]; 5];
    for (i, row) in eye.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let means = [
        [0.0, 0.4, -0.2, 0.1, 0.0],
        [1.4, -0.3, 0.9, 0.0, 0.7],
        [2.9, 0.8, -0.6, -1.1, 1.3],
    ];
    let risk01 = [[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]];
    let build = |kind| {
        ClassifierModel::from_parts(
            kind,
            raw.clone(),
            means,
            [eye, eye, eye],
            vec![],
            [1.0 / 3.0; 3],
            risk01,
            1.0,
        )
        .unwrap()
    };
    let grid = feature_grid();
    assert_eq!(grid.len(), 3125);

    let maha = build(ClassifierKind::Mahalanobis);
    let center = build(ClassifierKind::ClassCenterEuclidean);
    let bayes = build(ClassifierKind::BayesMinRisk);
    let mut agree_maha = 0usize;
    let mut agree_bayes = 0usize;
    for p in &grid {
        let c = classify(&center, p);
        if classify(&maha, p) == c {
            agree_maha += 1;
        }
        if classify(&bayes, p) == c {
            agree_bayes += 1;
        }
    }
    assert_eq!(agree_maha, grid.len(), "identity-covariance mahalanobis disagreed");
    assert_eq!(agree_bayes, grid.len(), "equal-prior 0-1-risk bayes disagreed");

    // Overlapping clusters: intermediate, bit-exactly reproducible
    // accuracies on a held-out draw.
    let train_cfg = SynthConfig::separated(77, 40, 1.5);
    let test_cfg = SynthConfig::separated(78, 40, 1.5);
    let run_all = || -> Vec<f64> {
        let data = synth_dataset(&train_cfg).unwrap();
        let test = synth_dataset(&test_cfg).unwrap();
        ClassifierKind::ALL
            .into_iter()
            .map(|kind| {
                let model = train(&data, kind, &TrainOptions::default()).unwrap();
                evaluate_accuracy(&model, &test).0
            })
            .collect()
    };
    let accs = run_all();
    for (kind, acc) in ClassifierKind::ALL.into_iter().zip(&accs) {
        assert!(
            *acc > 0.34 && *acc < 0.99,
            "{} accuracy {acc} outside (0.34, 0.99)",
            kind.name()
        );
    }
    let accs2 = run_all();
    for (a, b) in accs.iter().zip(&accs2) {
        assert_eq!(a.to_bits(), b.to_bits(), "accuracy not bit-reproducible");
    }
    let listed: Vec<String> = ClassifierKind::ALL
        .into_iter()
        .zip(&accs)
        .map(|(k, a)| format!("{}:{:.3}", k.name(), a))
        .collect();
    println!(
        "acceptance 9: PASS - 3125/3125 decision agreement on both equivalences; accuracies [{}] reproducible bit-exactly",
        listed.join(" ")
    );
}

#[test]
fn acceptance_10_ahp_consistency_and_eigen_oracle() {
    // Consistent 5x5 matrices recover their generating weights.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let mut w: Vec<f64> = (0..5).map(|_| rng.gen_range(0.05..1.0)).collect();
        let sum: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= sum);
        let m = ComparisonMatrix::from_weights(&w).unwrap();
        let res = ahp_weights(&m).unwrap();
        for (got, want) in res.weights.iter().zip(&w) {
            assert!((got - want).abs() <= 1e-9, "weight {got} vs {want}");
        }
        assert!(res.cr.abs() <= 1e-9, "cr {}", res.cr);
    }
    // Random reciprocal matrices against a dense eigensolver.
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = 5;
        let mut m = DMatrix::from_element(n, n, 1.0);
        for i in 0..n {
            for j in i + 1..n {
                let v = rng.gen_range(0.2..9.0);
                m[(i, j)] = v;
                m[(j, i)] = 1.0 / v;
            }
        }
        let cm = ComparisonMatrix::new(m.clone()).unwrap();
        let res = ahp_weights(&cm).unwrap();
        let oracle =
            m.complex_eigenvalues().iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max);
        let err = (res.lambda_max - oracle).abs();
        worst = worst.max(err);
        assert!(err <= 1e-8, "lambda_max {} vs oracle {oracle}", res.lambda_max);
    }
    println!(
        "acceptance 10: PASS - consistent 5x5 weights recovered to 1e-9 with CR = 0; lambda_max within {worst:.1e} of the eigensolver"
    );
}

#[test]
fn acceptance_11_scenarios_are_byte_deterministic() {
    for name in
        ["single_obstacle_30.cfg", "double_cross_30.cfg", "s_sweep.cfg", "confidence_ab.cfg"]
    {
        let cfg = scenario(name);
        let a = to_csv(&avoidsim_core::sim::run_scenario(&cfg).unwrap());
        let b = to_csv(&avoidsim_core::sim::run_scenario(&cfg).unwrap());
        assert_eq!(a, b, "{name} not byte-identical across reruns");
    }
    println!("acceptance 11: PASS - all four shipped scenarios produce byte-identical logs on rerun");
}

/// Straight-driving comfort sanity used by the report path: all-good labels.
#[test]
fn acceptance_support_straight_driving_reports_good() {
    let mut cfg = ScenarioConfig::default();
    cfg.duration = 4.0;
    let log = avoidsim_core::sim::run_scenario(&cfg).unwrap();
    let features = compute_features(&log.states_with_times()).unwrap();
    let data = synth_dataset(&cfg.classifier.synth).unwrap();
    let model = train(&data, cfg.classifier.kind, &TrainOptions::default()).unwrap();
    for f in &features {
        assert_eq!(classify(&model, f), avoidsim_core::comfort::ComfortClass::Good);
    }
}
