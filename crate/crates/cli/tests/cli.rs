use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn isl_lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isl-lab"))
        .args(args)
        .env_remove("ISL_LAB_THREADS")
        .output()
        .expect("binary runs")
}

fn out_arg(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).display().to_string()
}

fn read(path: impl AsRef<Path>) -> String {
    fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

fn error_report(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("not JSON ({e}): {text}"))
}

const TINY: [&str; 8] = ["--epochs", "4", "--n-real", "200", "--batch", "100", "--eval-samples", "500"];

#[test]
fn bench1d_writes_results_traces_and_checkpoints() {
    let dir = TempDir::new().unwrap();
    let out = out_arg(&dir, "run");
    let mut args = vec!["bench1d", "--seeds", "1,2", "--methods", "dual,classical", "--out", &out];
    args.extend(TINY);
    let o = isl_lab(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let results = read(dir.path().join("run/results.csv"));
    let mut lines = results.lines();
    assert_eq!(lines.next(), Some("target,method,k,seed,metric,value"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2 * 2 * 3);
    assert!(rows.iter().any(|r| r.contains(",classical,10,2,ks,")));
    for seed in [1, 2] {
        for method in ["dual", "classical"] {
            let trace = read(dir.path().join(format!("run/traces/{method}_seed{seed}.csv")));
            assert_eq!(trace.lines().next(), Some("epoch,loss,wallclock_s"));
            assert_eq!(trace.lines().count(), 5);
            let ck = dir.path().join(format!("run/checkpoints/{method}_seed{seed}.json"));
            isl_core::autodiff::Generator::load(&ck).unwrap();
        }
    }
}

#[test]
fn identical_configs_give_identical_files() {
    let dir = TempDir::new().unwrap();
    for name in ["a", "b"] {
        let out = out_arg(&dir, name);
        let mut args = vec!["bench1d", "--seeds", "3,4", "--out", &out];
        args.extend(TINY);
        assert!(isl_lab(&args).status.success());
    }
    for file in ["results.csv", "checkpoints/dual_seed3.json", "checkpoints/dual_seed4.json"] {
        assert_eq!(read(dir.path().join("a").join(file)), read(dir.path().join("b").join(file)), "{file}");
    }
    // Trace files match apart from the wall-clock column.
    let losses = |name: &str| -> Vec<String> {
        read(dir.path().join(name).join("traces/dual_seed3.csv"))
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    assert_eq!(losses("a"), losses("b"));
}

#[test]
fn thread_cap_does_not_change_results() {
    let dir = TempDir::new().unwrap();
    let mut outputs = Vec::new();
    for (name, threads) in [("one", "1"), ("two", "2")] {
        let out = out_arg(&dir, name);
        let mut args = vec!["bench1d", "--seeds", "5,6,7", "--out", &out, "--no-checkpoints"];
        args.extend(TINY);
        let o = Command::new(env!("CARGO_BIN_EXE_isl-lab"))
            .args(&args)
            .env("ISL_LAB_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success());
        outputs.push(read(dir.path().join(name).join("results.csv")));
    }
    assert_eq!(outputs[0], outputs[1]);
    let o = Command::new(env!("CARGO_BIN_EXE_isl-lab"))
        .args(["bench1d", "--out", &out_arg(&dir, "zero")])
        .env("ISL_LAB_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn flags_override_config_file() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("sweep.cfg");
    fs::write(&cfg, "# small run\nk = 5\nepochs = 2\nn_real = 200\nbatch = 100\neval_samples = 300\nseeds = 9\n").unwrap();
    let out = out_arg(&dir, "run");
    let o = isl_lab(&["bench1d", "--config", cfg.to_str().unwrap(), "--k", "4", "--out", &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rendered = read(dir.path().join("run/config.txt"));
    assert!(rendered.contains("k = 4\n"));
    assert!(rendered.contains("epochs = 2\n"));
    assert!(rendered.contains("seeds = 9\n"));
    assert!(read(dir.path().join("run/results.csv")).contains(",dual,4,9,ks,"));
}

#[test]
fn invalid_config_exits_2_with_json() {
    let dir = TempDir::new().unwrap();
    let out = out_arg(&dir, "run");
    for args in [
        vec!["bench1d", "--target", "normal(0,-1)", "--out", &out],
        vec!["bench1d", "--target", "dualmoon", "--out", &out],
        vec!["bench2d", "--methods", "classical", "--out", &out],
        vec!["bench1d", "--k", "ten", "--out", &out],
        vec!["bench1d", "--batch", "5", "--out", &out],
        vec!["ot", "--unknown-flag"],
    ] {
        let o = isl_lab(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let report = error_report(&o);
        assert_eq!(report["exit_code"], 2);
        assert!(report["message"].as_str().is_some_and(|m| !m.is_empty()));
    }
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "k = 5\nthis line is wrong\n").unwrap();
    let o = isl_lab(&["bench1d", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_report(&o)["error"], "invalid_config");
}

#[test]
fn divergence_exits_3() {
    let dir = TempDir::new().unwrap();
    let out = out_arg(&dir, "run");
    let o = isl_lab(&["bench1d", "--epochs", "3", "--lr", "1e300", "--eval-samples", "100", "--out", &out]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_report(&o)["error"], "diverged");
}

#[test]
fn io_failure_exits_4() {
    let dir = TempDir::new().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "not a directory").unwrap();
    let out = blocker.join("run").display().to_string();
    let mut args = vec!["bench1d", "--out", &out];
    args.extend(TINY);
    let o = isl_lab(&args);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(error_report(&o)["error"], "io");
    let o = isl_lab(&["bench1d", "--config", dir.path().join("missing.cfg").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn props_pass() {
    let dir = TempDir::new().unwrap();
    let out = out_arg(&dir, "props");
    let o = isl_lab(&["props", "--out", &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(!stdout.contains("FAIL"));
    assert!(read(dir.path().join("props/results.csv")).starts_with("target,method,k,seed,metric,value\n"));
}

#[test]
fn timing_orders_dual_before_classical() {
    let dir = TempDir::new().unwrap();
    let out = out_arg(&dir, "timing");
    let o = isl_lab(&["timing", "--epochs", "3", "--eval-samples", "200", "--out", &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let results = read(dir.path().join("timing/results.csv"));
    let per_epoch = |method: &str| -> f64 {
        results
            .lines()
            .find(|l| l.contains(&format!(",{method},")) && l.contains(",seconds_per_epoch,"))
            .and_then(|l| l.rsplit(',').next())
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!(per_epoch("dual") < per_epoch("classical"));
}

#[test]
fn density_runs_write_grids_and_plots() {
    let dir = TempDir::new().unwrap();
    let out1 = out_arg(&dir, "d1");
    let mut args = vec!["density1d", "--density-samples", "5000", "--grid", "50", "--plots", "--out", &out1];
    args.extend(TINY);
    let o = isl_lab(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for method in ["dual", "kde"] {
        let csv = read(dir.path().join(format!("d1/densities/{method}_seed1.csv")));
        assert_eq!(csv.lines().next(), Some("x,p_hat"));
        assert_eq!(csv.lines().count(), 51);
        let svg = read(dir.path().join(format!("d1/plots/density_{method}_seed1.svg")));
        assert_eq!(svg.matches("<polyline points=\"").count(), 3);
    }
    let results = read(dir.path().join("d1/results.csv"));
    assert!(results.contains(",kde,10,1,density_ks,"));
    assert!(results.contains(",dual,10,1,density_ks,"));

    let out2 = out_arg(&dir, "d2");
    let mut args = vec!["density2d", "--target", "gaussian2d(0,0,1,1,0)", "--density-samples", "2000", "--grid", "20", "--plots", "--out", &out2];
    args.extend(TINY);
    let o = isl_lab(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(dir.path().join("d2/densities/dual_seed1.csv"));
    assert_eq!(csv.lines().next(), Some("x,y,p_hat"));
    assert_eq!(csv.lines().count(), 401);
    assert!(read(dir.path().join("d2/results.csv")).contains("density_grid_l1"));
    assert!(read(dir.path().join("d2/plots/contour_dual_seed1.svg")).contains("<path d="));
}

#[test]
fn plot_subcommand_checks_schema() {
    let dir = TempDir::new().unwrap();
    let trace = dir.path().join("trace.csv");
    fs::write(&trace, "epoch,loss,wallclock_s\n1,0.5,0.1\n2,0.4,0.2\n3,0.35,0.3\n").unwrap();
    let svg = dir.path().join("plots/loss.svg");
    let o = isl_lab(&["plot", "--input", trace.to_str().unwrap(), "--kind", "loss-curve", "--output", svg.to_str().unwrap()]);
    assert!(o.status.success());
    let first = read(&svg);
    assert!(first.starts_with("<svg"));
    assert!(isl_lab(&["plot", "--input", trace.to_str().unwrap(), "--kind", "loss-curve", "--output", svg.to_str().unwrap()])
        .status
        .success());
    assert_eq!(read(&svg), first);

    let o = isl_lab(&["plot", "--input", trace.to_str().unwrap(), "--kind", "contour", "--output", svg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_report(&o)["error"], "schema_mismatch");

    let density = dir.path().join("cauchy.csv");
    let mut text = String::from("x,p_hat\n");
    for i in 0..41 {
        let x = -10.0 + 0.5 * i as f64;
        text += &format!("{x},{}\n", 0.8 / (std::f64::consts::PI * 2.0 * (1.0 + ((x - 1.0) / 2.0).powi(2))));
    }
    fs::write(&density, text).unwrap();
    let out = dir.path().join("overlay.svg");
    let o = isl_lab(&[
        "plot",
        "--input",
        density.to_str().unwrap(),
        "--kind",
        "density-overlay",
        "--target",
        "cauchy(1,2)",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_eq!(read(&out).matches("<polyline points=\"").count(), 3);
}
