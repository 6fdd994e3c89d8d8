//! Acceptance suite: one test per headline claim, each driven through the
//! experiment registry at its full budget and pinned tolerance. Every test
//! prints one `ACCEPTANCE <k> <name>: PASS/FAIL (<secs> s)` line (visible
//! under `--nocapture`) and asserts both the verdict and the wall-time
//! budget the claim is specified with.

use std::time::Instant;

use capwalk_core::harness::{run_experiment, ExperimentConfig, ParamValue, Report};
use capwalk_core::harness::Verdict;

fn announce(k: u32, name: &str, pass: bool, secs: f64) {
    let word = if pass { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {k:02} {name}: {word} ({secs:.1} s)");
}

fn config(name: &str, overrides: &[(&str, ParamValue)]) -> ExperimentConfig {
    let mut c = ExperimentConfig::defaults_for(name).expect("known experiment");
    for (key, value) in overrides {
        c.set(key, value.clone());
    }
    c
}

fn run(c: &ExperimentConfig) -> Report {
    run_experiment(c).expect("config resolves")
}

fn passed(rep: &Report) -> bool {
    rep.verdict == Verdict::Pass
}

fn row_value(rep: &Report, label: &str) -> f64 {
    rep.results
        .iter()
        .find(|r| r.label == label)
        .unwrap_or_else(|| panic!("report has no `{label}` row"))
        .value
}

fn count(v: u64) -> ParamValue {
    ParamValue::Count(v)
}

fn nums(v: &[f64]) -> ParamValue {
    ParamValue::Numbers(v.to_vec())
}

/// Closes out a criterion: prints the line, then asserts the result and the
/// budget with the offending reports attached.
fn conclude(k: u32, name: &str, t0: Instant, ok: bool, budget_secs: f64, reports: &[&Report]) {
    let secs = t0.elapsed().as_secs_f64();
    let pass = ok && secs < budget_secs;
    announce(k, name, pass, secs);
    if !pass {
        let dump: Vec<String> = reports.iter().map(|r| r.canonical_payload()).collect();
        panic!(
            "{name}: checks {}, {secs:.1} s against a {budget_secs:.0} s budget\n{}",
            if ok { "passed" } else { "FAILED" },
            dump.join("\n")
        );
    }
}

#[test]
fn acceptance_01_flat_constant_is_one() {
    let t0 = Instant::now();
    let rep = run(&config("constants", &[]));
    let ok = passed(&rep) && row_value(&rep, "hitting-bound-constant") == 1.0;
    conclude(1, "flat-constant-is-one", t0, ok, 1.0, &[&rep]);
}

#[test]
fn acceptance_02_capacity_closed_forms() {
    let t0 = Instant::now();
    let mut reports = Vec::new();
    // plain kernel, unit sphere: coarse then fine
    for (points, tol) in [(500u64, 0.02), (5000, 0.005)] {
        reports.push(run(&config(
            "capacity",
            &[("points", count(points)), ("tol", ParamValue::Number(tol))],
        )));
    }
    // ratio kernel: spheres centered at the base point, radius-independent
    for r in [0.5, 1.0, 2.0] {
        reports.push(run(&config(
            "capacity",
            &[
                ("kernel", ParamValue::Text("martin".into())),
                ("set", ParamValue::Text(format!("sphere:c=(0,0,0),r={r}"))),
                ("points", count(1500)),
            ],
        )));
    }
    let ok = reports.iter().all(passed);
    let refs: Vec<&Report> = reports.iter().collect();
    conclude(2, "capacity-closed-forms", t0, ok, 60.0, &refs);
}

#[test]
fn acceptance_03_ball_hitting_capacity_window() {
    let t0 = Instant::now();
    let rep = run(&config("sandwich-euclidean", &[("trials", count(1_000_000))]));
    conclude(3, "ball-hitting-capacity-window", t0, passed(&rep), 600.0, &[&rep]);
}

#[test]
fn acceptance_04_harmonic_ratio_and_bridge_order() {
    let t0 = Instant::now();
    let mut reports = Vec::new();
    let mut ok = true;
    for (n, mani) in [(3usize, "euclidean:n=3"), (5, "euclidean:n=5")] {
        for (r, d) in [(0.5, 2.0), (1.0, 3.0), (1.0, 5.0)] {
            let zeros = ",0".repeat(n - 1);
            let set = format!("ball:c=({d}{zeros}),r={r}");
            let base: Vec<f64> = vec![0.0; n];
            let mut with_bridge = config(
                "hit",
                &[
                    ("trials", count(200_000)),
                    ("set", ParamValue::Text(set)),
                    ("x0", nums(&base)),
                ],
            );
            with_bridge.manifold = mani.parse().unwrap();
            let mut without_bridge = with_bridge.clone();
            without_bridge.set("bridge", ParamValue::Bool(false));
            let on = run(&with_bridge);
            let off = run(&without_bridge);
            // same walker stream either way: dropping the crossing draw can
            // only lose hits
            ok &= passed(&on)
                && row_value(&off, "hitting-probability")
                    <= row_value(&on, "hitting-probability");
            reports.push(on);
            reports.push(off);
        }
    }
    let refs: Vec<&Report> = reports.iter().collect();
    conclude(4, "harmonic-ratio-and-bridge-order", t0, ok, 600.0, &refs);
}

#[test]
fn acceptance_05_exit_time_tail() {
    let t0 = Instant::now();
    let flat = run(&config("exit-tail", &[("trials", count(1_000_000))]));
    let mut curved_config = config("exit-tail", &[("trials", count(1_000_000))]);
    curved_config.manifold = "eh-product:n=6,a=1".parse().unwrap();
    let curved = run(&curved_config);
    let ok = passed(&flat) && passed(&curved);
    conclude(5, "exit-time-tail", t0, ok, 600.0, &[&flat, &curved]);
}

#[test]
fn acceptance_06_sausage_scaling() {
    let t0 = Instant::now();
    let rep = run(&config(
        "two-walker",
        &[("trials", count(100_000)), ("halved", ParamValue::Bool(true))],
    ));
    conclude(6, "sausage-scaling", t0, passed(&rep), 3600.0, &[&rep]);
}

#[test]
fn acceptance_07_bolt_hitting() {
    let t0 = Instant::now();
    let rep = run(&config("eh-bolt", &[("trials", count(300_000))]));
    conclude(7, "bolt-hitting", t0, passed(&rep), 600.0, &[&rep]);
}

#[test]
fn acceptance_08_interval_energy() {
    let t0 = Instant::now();
    let rep = run(&config("hausdorff", &[]));
    conclude(8, "interval-energy", t0, passed(&rep), 60.0, &[&rep]);
}

#[test]
fn acceptance_09_curvature_tube_volume() {
    let t0 = Instant::now();
    let rep = run(&config("jn-volume", &[]));
    conclude(9, "curvature-tube-volume", t0, passed(&rep), 600.0, &[&rep]);
}

#[test]
fn acceptance_10_kernel_bound_grid() {
    let t0 = Instant::now();
    let rep = run(&config("green-bounds", &[]));
    conclude(10, "kernel-bound-grid", t0, passed(&rep), 1.0, &[&rep]);
}

#[test]
fn acceptance_11_thread_count_invariance() {
    let t0 = Instant::now();
    let shrink: &[(&str, &[(&str, ParamValue)])] = &[
        ("constants", &[]),
        ("capacity", &[("points", ParamValue::Count(200)), ("levels", ParamValue::Count(2))]),
        ("hit", &[("trials", ParamValue::Count(800))]),
        (
            "sandwich-euclidean",
            &[
                ("trials", ParamValue::Count(600)),
                ("points", ParamValue::Count(80)),
                ("d_list", ParamValue::Numbers(vec![2.0])),
            ],
        ),
        (
            "two-walker",
            &[
                ("trials", ParamValue::Count(200)),
                ("eps_list", ParamValue::Numbers(vec![0.04, 0.08, 0.16])),
                ("doubling_check", ParamValue::Bool(false)),
            ],
        ),
        (
            "exit-tail",
            &[
                ("trials", ParamValue::Count(500)),
                ("delta_list", ParamValue::Numbers(vec![0.005])),
            ],
        ),
        (
            "eh-bolt",
            &[
                ("trials", ParamValue::Count(300)),
                ("r0_list", ParamValue::Numbers(vec![5.0, 10.0, 20.0])),
            ],
        ),
        (
            "jn-volume",
            &[
                ("samples", ParamValue::Count(20_000)),
                ("eps_list", ParamValue::Numbers(vec![0.5])),
                ("r_list", ParamValue::Numbers(vec![5.0, 10.0])),
            ],
        ),
        ("hausdorff", &[("points", ParamValue::Count(120))]),
        (
            "green-bounds",
            &[("grid", ParamValue::Count(6)), ("d_list", ParamValue::Numbers(vec![1.0, 2.0]))],
        ),
    ];
    let mut ok = true;
    let mut mismatches = Vec::new();
    for (name, overrides) in shrink {
        let c = config(name, overrides);
        let serial = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run(&c).canonical_payload());
        let threaded = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap()
            .install(|| run(&c).canonical_payload());
        if serial != threaded {
            ok = false;
            mismatches.push(*name);
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    announce(11, "thread-count-invariance", ok, secs);
    assert!(ok, "payloads differ across thread counts for: {mismatches:?}");
}
