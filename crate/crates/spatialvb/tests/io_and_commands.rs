use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spatialvb::compare::{compare, mse, read_missing_means};
use spatialvb::config::UsageError;
use spatialvb::data::{fmt_f64, Dataset};
use spatialvb::fit::load_dataset;
use spatialvb::{cmd_compare, cmd_fit, cmd_simulate, Method, RunConfig};
use spatialvb_core::missing::{simulate_dataset, SimConfig, SimMechanism};
use spatialvb_core::vb::VbConfig;

fn cfg(out: &Path) -> RunConfig {
    RunConfig { out: out.to_path_buf(), ..RunConfig::default() }
}

fn small_fit(data: &Path, out: &Path, method: Method) -> RunConfig {
    RunConfig {
        data: Some(data.to_path_buf()),
        method,
        vb: VbConfig { iterations: 300, summary_draws: 500, ..VbConfig::default() },
        out: out.to_path_buf(),
        ..RunConfig::default()
    }
}

fn simulate_small(dir: &Path, side: usize, mechanism: SimMechanism, seed: u64) -> Dataset {
    let mut c = cfg(dir);
    c.simulation = SimConfig { side, r: 2, mechanism, seed, ..SimConfig::default() };
    cmd_simulate(&c).unwrap()
}

fn header(path: &Path) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.headers().unwrap().iter().map(String::from).collect()
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect()
}

fn is_usage(e: &anyhow::Error) -> bool {
    e.downcast_ref::<UsageError>().is_some()
}

#[test]
fn simulate_writes_mar_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    let ds = cmd_simulate(&cfg(&d)).unwrap();
    assert_eq!(ds.n(), 625);
    let y = rows(&d.join("y.csv"));
    assert_eq!(header(&d.join("y.csv")), ["y"]);
    assert_eq!(y.len(), 625);
    let na = y.iter().filter(|r| r[0] == "NA").count();
    assert!((468..=470).contains(&na), "{na} missing");
    assert_eq!(header(&d.join("X.csv")), (0..=10).map(|j| format!("x{j}")).collect::<Vec<_>>());
    assert_eq!(header(&d.join("W.csv")), ["row", "col", "weight"]);
    assert_eq!(rows(&d.join("W.csv")).len(), 4 * 25 * 24);
    assert_eq!(header(&d.join("pattern.csv")), ["index", "missing"]);
    assert_eq!(rows(&d.join("y_full.csv")).len(), 625);
    assert!(!d.join("Xstar.csv").exists());
    let truth: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("truth.json")).unwrap()).unwrap();
    assert_eq!(truth["n_missing"], na);
    assert_eq!(truth["rho"], 0.8);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn simulate_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let mech = SimMechanism::Mnar { psi_0: 1.5, psi_xstar: 0.5, psi_y: -0.1, covariate_index: 1 };
    simulate_small(&a, 6, mech.clone(), 9);
    simulate_small(&b, 6, mech, 9);
    for f in ["y.csv", "y_full.csv", "X.csv", "Xstar.csv", "W.csv", "pattern.csv", "truth.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let ma: serde_json::Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    let mb: serde_json::Value = serde_json::from_slice(&fs::read(b.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(ma["config_hash"], mb["config_hash"]);
}

#[test]
fn mnar_simulation_hits_about_three_quarters() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    let mut c = cfg(&d);
    c.simulation.mechanism = SimMechanism::Mnar { psi_0: 1.5, psi_xstar: 0.5, psi_y: -0.1, covariate_index: 1 };
    let ds = cmd_simulate(&c).unwrap();
    let frac = ds.y.iter().filter(|v| v.is_none()).count() as f64 / ds.n() as f64;
    assert!((0.65..0.85).contains(&frac), "{frac}");
    assert_eq!(header(&d.join("Xstar.csv")), ["xstar0", "xstar1"]);
}

#[test]
fn ingestion_round_trips_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    let sim = SimConfig {
        side: 7,
        mechanism: SimMechanism::Mnar { psi_0: 1.0, psi_xstar: 0.5, psi_y: -0.2, covariate_index: 2 },
        ..SimConfig::default()
    };
    let data = simulate_dataset(&sim, &mut ChaCha8Rng::seed_from_u64(sim.seed)).unwrap();
    let ds = Dataset::from_simulation(&sim, &data).unwrap();
    ds.write(&d).unwrap();
    let back = Dataset::read(&d).unwrap();
    assert_eq!(back, ds);
    assert_eq!(back.weights(true).unwrap(), data.sem.w);
    assert_eq!(back.pattern(), data.pattern);
    assert_eq!(back.x_star.as_ref().unwrap(), &data.selection.unwrap().x_star);
    assert_eq!(back.y_full.as_ref().unwrap(), &data.sem.y);
    assert_eq!(back.fingerprint().unwrap(), ds.fingerprint().unwrap());
}

#[test]
fn float_text_is_shortest_round_trip() {
    let mut r = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10_000 {
        let v = f64::from_bits(r.random::<u64>());
        if v.is_finite() {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
    assert_eq!(fmt_f64(0.1), "0.1");
    assert_eq!(fmt_f64(1.0), "1");
}

#[test]
fn malformed_files_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    simulate_small(&d, 4, SimMechanism::Mar { missing_fraction: 0.25 }, 2);
    let y = fs::read_to_string(d.join("y.csv")).unwrap();

    fs::write(d.join("y.csv"), y.replacen("\n", "\n\"\"\n", 1)).unwrap();
    let e = Dataset::read(&d).unwrap_err().to_string();
    assert!(e.contains("empty field"), "{e}");

    fs::write(d.join("y.csv"), &y).unwrap();
    let x = fs::read_to_string(d.join("X.csv")).unwrap();
    let mut lines: Vec<&str> = x.lines().collect();
    let bad = lines[1].replacen("1,", "NA,", 1);
    lines[1] = &bad;
    fs::write(d.join("X.csv"), lines.join("\n")).unwrap();
    assert!(Dataset::read(&d).is_err());

    fs::write(d.join("X.csv"), &x).unwrap();
    let pat = fs::read_to_string(d.join("pattern.csv")).unwrap();
    let mut lines: Vec<&str> = pat.lines().collect();
    lines[1] = if lines[1] == "0,0" { "0,1" } else { "0,0" };
    fs::write(d.join("pattern.csv"), lines.join("\n")).unwrap();
    let e = Dataset::read(&d).unwrap_err().to_string();
    assert!(e.contains("disagrees"), "{e}");

    fs::write(d.join("pattern.csv"), &pat).unwrap();
    fs::write(d.join("W.csv"), "row,col,weight\n0,1,1\n").unwrap();
    let ds = Dataset::read(&d).unwrap();
    assert!(ds.weights(true).is_err(), "asymmetric pattern must fail");
}

#[test]
fn jvb_fit_writes_contract() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    simulate_small(&d, 6, SimMechanism::Mar { missing_fraction: 0.5 }, 3);
    let out = tmp.path().join("jvb");
    let s = cmd_fit(&small_fit(&d, &out, Method::Jvb), 1).unwrap().remove(0);
    let names: Vec<&str> = s.parameters.iter().map(|e| e.name.as_str()).collect();
    assert_eq!(names, ["beta0", "beta1", "beta2", "sigma2", "rho"]);
    assert!(s.parameters.iter().all(|e| e.mean.is_finite() && e.sd > 0.0));
    assert_eq!(s.n_missing, 18);
    assert_eq!(s.diagnostics.elbo_kind.as_deref(), Some("elbo"));

    assert_eq!(header(&out.join("elbo_trace.csv")), ["iteration", "value", "kind"]);
    let trace = rows(&out.join("elbo_trace.csv"));
    assert_eq!(trace.len(), 300);
    assert_eq!(trace[0][0], "1");
    assert_eq!(
        header(&out.join("mean_trajectory.csv")),
        ["iteration", "beta0", "beta1", "beta2", "gamma", "rho_logit"]
    );
    assert_eq!(rows(&out.join("mean_trajectory.csv")).len(), 300);
    assert_eq!(header(&out.join("missing_posterior.csv")), ["index", "mean", "sd"]);
    let mp = rows(&out.join("missing_posterior.csv"));
    assert_eq!(mp.len(), 18);
    let missing: Vec<usize> =
        rows(&d.join("pattern.csv")).iter().filter(|r| r[1] == "1").map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(mp.iter().map(|r| r[0].parse::<usize>().unwrap()).collect::<Vec<_>>(), missing);
    assert!(!out.join("chain.csv").exists());

    let m: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 1);
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(m["config"]["method"], "jvb");
    let files: Vec<&str> = m["files"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(files, ["elbo_trace.csv", "mean_trajectory.csv", "missing_posterior.csv", "summary.json"]);
}

#[test]
fn hvb_trace_is_labelled_proxy() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    simulate_small(&d, 5, SimMechanism::Mar { missing_fraction: 0.5 }, 5);
    let out = tmp.path().join("g");
    let s = cmd_fit(&small_fit(&d, &out, Method::HvbG), 1).unwrap().remove(0);
    assert_eq!(s.label, "HVB-G");
    assert_eq!(s.diagnostics.elbo_kind.as_deref(), Some("proxy"));
    assert!(rows(&out.join("elbo_trace.csv")).iter().all(|r| r[2] == "proxy"));
}

#[test]
fn incompatible_method_is_rejected_before_compute() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    simulate_small(&d, 4, SimMechanism::Mar { missing_fraction: 0.5 }, 1);
    for (m, mech) in [
        (Method::Hvb3B, None),
        (Method::HvbAllB, Some(spatialvb::Mechanism::Mar)),
        (Method::HvbG, Some(spatialvb::Mechanism::Mnar)),
    ] {
        let out = tmp.path().join("never");
        let mut c = small_fit(&d, &out, m);
        c.mechanism = mech;
        let e = cmd_fit(&c, 1).unwrap_err();
        assert!(is_usage(&e), "{e}");
        assert!(!out.exists());
    }
    // declared in the config, so rejected without touching the data
    let mut c = small_fit(Path::new("/nonexistent"), &tmp.path().join("x"), Method::Hvb3B);
    c.mechanism = Some(spatialvb::Mechanism::Mar);
    assert!(is_usage(&cmd_fit(&c, 1).unwrap_err()));
}

#[test]
fn mnar_fit_with_3b_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    simulate_small(&d, 5, SimMechanism::Mnar { psi_0: 1.0, psi_xstar: 0.5, psi_y: -0.1, covariate_index: 1 }, 4);
    let out = tmp.path().join("r");
    let s = cmd_fit(&small_fit(&d, &out, Method::Hvb3B), 1).unwrap().remove(0);
    assert_eq!(s.mechanism, spatialvb::Mechanism::Mnar);
    let names: Vec<&str> = s.parameters.iter().map(|e| e.name.as_str()).collect();
    assert_eq!(names[names.len() - 3..], ["psi0", "psi1", "psi_y"]);
    assert!(s.diagnostics.acceptance_mean.unwrap() > 0.0);
}

#[test]
fn hmc_chain_has_one_column_per_coordinate() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    let ds = simulate_small(&d, 10, SimMechanism::Mar { missing_fraction: 0.25 }, 6);
    let n_u = ds.y.iter().filter(|v| v.is_none()).count();
    let out = tmp.path().join("hmc");
    let mut c = small_fit(&d, &out, Method::Hmc);
    c.hmc.n_samples = 200;
    c.hmc.burn_in = 100;
    let s = cmd_fit(&c, 1).unwrap().remove(0);
    let h = header(&out.join("chain.csv"));
    assert_eq!(h.len(), 5 + n_u);
    assert_eq!(h[..5], ["beta0", "beta1", "beta2", "gamma", "rho_logit"]);
    assert!(h[5..].iter().all(|c| c.starts_with('y')));
    assert_eq!(rows(&out.join("chain.csv")).len(), 200);
    assert_eq!(rows(&out.join("missing_posterior.csv")).len(), n_u);
    assert!(s.diagnostics.hmc_step_size.unwrap() > 0.0);
    assert!(!out.join("elbo_trace.csv").exists());
}

#[test]
fn in_memory_simulation_is_written_with_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    let mut c = cfg(&out);
    c.simulation = SimConfig { side: 5, r: 1, ..SimConfig::default() };
    c.vb = VbConfig { iterations: 100, summary_draws: 100, ..VbConfig::default() };
    let s = cmd_fit(&c, 1).unwrap().remove(0);
    let (ds, _) = load_dataset(&c).unwrap();
    assert_eq!(Dataset::read(&out.join("data")).unwrap(), ds);
    assert_eq!(s.dataset, ds.fingerprint().unwrap());
}

#[test]
fn replicates_match_across_job_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    simulate_small(&d, 4, SimMechanism::Mar { missing_fraction: 0.5 }, 8);
    let run = |jobs: usize, name: &str| {
        let mut c = small_fit(&d, &tmp.path().join(name), Method::HvbNoB);
        c.replicates = 3;
        cmd_fit(&c, jobs).unwrap()
    };
    let serial = run(1, "serial");
    let parallel = run(3, "parallel");
    for k in 0..3 {
        assert_eq!(serial[k].parameters, parallel[k].parameters);
        assert_eq!(serial[k].seed, 1 + k as u64);
        for f in ["elbo_trace.csv", "missing_posterior.csv", "mean_trajectory.csv"] {
            let a = fs::read(tmp.path().join("serial").join(format!("rep{k}")).join(f)).unwrap();
            let b = fs::read(tmp.path().join("parallel").join(format!("rep{k}")).join(f)).unwrap();
            assert_eq!(a, b, "{f}");
        }
    }
    assert_ne!(serial[0].parameters, serial[1].parameters);
}

#[test]
fn compare_tabulates_and_scores() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    simulate_small(&d, 6, SimMechanism::Mar { missing_fraction: 0.5 }, 3);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    cmd_fit(&small_fit(&d, &a, Method::Jvb), 1).unwrap();
    cmd_fit(&small_fit(&d, &b, Method::HvbG), 1).unwrap();

    let c = compare(&[a.clone(), b.clone()]).unwrap();
    assert_eq!(c.labels, ["JVB", "HVB-G"]);
    assert_eq!(c.rows.len(), 5);
    let truth = c.truth.as_ref().unwrap();
    assert!(truth.iter().all(Option::is_some));
    let ds = Dataset::read(&d).unwrap();
    let y_full = ds.y_full.unwrap();
    let direct: f64 = {
        let m = read_missing_means(&a).unwrap();
        m.iter().map(|&(i, v)| (v - y_full[i]).powi(2)).sum::<f64>() / m.len() as f64
    };
    let got = c.mse.as_ref().unwrap();
    assert_eq!(got[0], direct);
    assert_eq!(got[1], mse(&read_missing_means(&b).unwrap(), &y_full).unwrap());

    let mut cc = cfg(&tmp.path().join("cmp"));
    cc.runs = vec![a.clone(), b.clone()];
    cmd_compare(&cc).unwrap();
    let path = tmp.path().join("cmp/comparison.csv");
    assert_eq!(header(&path), ["parameter", "truth", "JVB mean", "JVB sd", "HVB-G mean", "HVB-G sd"]);
    let r = rows(&path);
    assert_eq!(r.len(), 6);
    assert_eq!(r[5][0], "MSE");
    assert_ne!(r[5][2], "NA");
    let text = c.render();
    assert!(text.lines().next().unwrap().starts_with("parameter"));
    assert!(text.contains("MSE"));
}

#[test]
fn compare_refuses_bad_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let d1 = tmp.path().join("d1");
    let d2 = tmp.path().join("d2");
    simulate_small(&d1, 4, SimMechanism::Mar { missing_fraction: 0.5 }, 1);
    simulate_small(&d2, 4, SimMechanism::Mar { missing_fraction: 0.5 }, 2);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    cmd_fit(&small_fit(&d1, &a, Method::Jvb), 1).unwrap();
    cmd_fit(&small_fit(&d2, &b, Method::Jvb), 1).unwrap();
    assert!(is_usage(&compare(std::slice::from_ref(&a)).err().unwrap()));
    let e = compare(&[a.clone(), b]).err().unwrap().to_string();
    assert!(e.contains("different datasets"), "{e}");

    // without truth.json the MSE row stays NA
    fs::remove_file(d1.join("truth.json")).unwrap();
    let c2 = tmp.path().join("c2");
    cmd_fit(&small_fit(&d1, &c2, Method::HvbNoB), 1).unwrap();
    let c = compare(&[a, c2]).unwrap();
    assert!(c.mse.is_none() && c.truth.is_none());
    assert!(String::from_utf8(c.to_csv().unwrap()).unwrap().lines().last().unwrap().starts_with("MSE,NA,NA,NA,NA,NA"));
}

fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_spatialvb"))
}

#[test]
fn cli_print_config_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("c.json");
    fs::write(&cfg_path, r#"{"method": "hvb-allb", "vb": {"iterations": 50}}"#).unwrap();
    let out = Command::new(bin())
        .args(["fit", "--config", cfg_path.to_str().unwrap(), "--seed", "7", "--print-config"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let resolved: RunConfig = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(resolved.seed, 7);
    assert_eq!(resolved.simulation.seed, 7);
    assert_eq!(resolved.vb.iterations, 50);
    assert_eq!(resolved.vb.p, VbConfig::default().p);
    assert_eq!(resolved.method, Method::HvbAllB);

    // hvb-allb on the default MAR simulation
    let out = Command::new(bin())
        .args(["fit", "--config", cfg_path.to_str().unwrap()])
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!tmp.path().join("out").exists());

    fs::write(&cfg_path, r#"{"method": "jvb", "iterations": 5}"#).unwrap();
    let out = Command::new(bin()).args(["fit", "--config", cfg_path.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "unknown keys are rejected");

    let out = Command::new(bin()).args(["compare", "only-one"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cli_simulate_fit_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |s: &str| tmp.path().join(s).to_str().unwrap().to_string();
    let sim = tmp.path().join("sim.json");
    fs::write(&sim, r#"{"simulation": {"side": 5, "r": 1}}"#).unwrap();
    let st = Command::new(bin()).args(["simulate", "--config", &p("sim.json"), "--out", &p("d")]).status().unwrap();
    assert!(st.success());
    let fit = tmp.path().join("fit.json");
    for m in ["jvb", "hvb-nob"] {
        fs::write(
            &fit,
            format!(r#"{{"data": {:?}, "method": "{m}", "vb": {{"iterations": 200, "summary_draws": 200}}}}"#, p("d")),
        )
        .unwrap();
        let st = Command::new(bin()).args(["fit", "--config", &p("fit.json"), "--out", &p(m)]).status().unwrap();
        assert!(st.success());
    }
    let out = Command::new(bin()).args(["compare", "--out", &p("cmp"), &p("jvb"), &p("hvb-nob")]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("JVB") && text.contains("HVB-NoB") && text.contains("MSE"));
    assert!(tmp.path().join("cmp/comparison.csv").exists());
}
