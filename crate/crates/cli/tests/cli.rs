use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use accelmc::chain::{max_admissible_epsilon, metropolis_cycle_perturbation, metropolis_generator};
use accelmc::chain::{CyclePerturbation, EnergyFunction};

const BIN: &str = env!("CARGO_BIN_EXE_accelmc");

struct Row {
    instance: String,
    criterion: String,
    baseline: f64,
    perturbed: f64,
    delta: f64,
    verdict: String,
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn accelmc(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("ACCELMC_OUT_DIR").output().unwrap()
}

fn run_to(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    accelmc(&args)
}

fn read_rows(out: &Path) -> Vec<Row> {
    let mut r = csv::Reader::from_path(out.join("results.csv")).unwrap();
    assert_eq!(
        r.headers().unwrap().iter().collect::<Vec<_>>(),
        ["instance", "criterion", "baseline", "perturbed", "delta", "verdict"]
    );
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            let row = Row {
                instance: rec[0].to_string(),
                criterion: rec[1].to_string(),
                baseline: rec[2].parse().unwrap(),
                perturbed: rec[3].parse().unwrap(),
                delta: rec[4].parse().unwrap(),
                verdict: rec[5].to_string(),
            };
            // delta is recomputed from unrounded values, so allow one unit in the 12th digit
            let scale = row.baseline.abs().max(row.perturbed.abs()).max(1e-300);
            assert!((row.perturbed - row.baseline - row.delta).abs() <= 1e-10 * scale, "{}", row.instance);
            row
        })
        .collect()
}

fn summary(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn symmetric_two_state_without_perturbation_has_zero_delta() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "kind = \"chain-gap\"\n[chain.explicit]\nenergies = [0.0, 0.0]\n");
    let out = dir.path().join("out");
    let o = run_to(&cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_rows(&out);
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert_eq!(r.delta, 0.0);
        assert_eq!(r.verdict, "pass");
        assert!(r.criterion.starts_with("gap:"));
    }
    assert_eq!(summary(&out)["verdicts"]["pass"], 3);
}

#[test]
fn rate_identity_on_a_five_state_instance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "kind = \"chain-ldp\"\nseed = 31\n[chain]\ninstances = 3\nmin_states = 5\nmax_states = 5\n",
    );
    let out = dir.path().join("out");
    assert_eq!(run_to(&cfg, &out, &[]).status.code(), Some(0));
    let rows = read_rows(&out);
    let ident: Vec<&Row> = rows.iter().filter(|r| r.criterion == "rate-identity").collect();
    assert_eq!(ident.len(), 3);
    for r in ident {
        assert!(r.delta.abs() <= 1e-6, "{}: {}", r.instance, r.delta);
    }
    // rate rows put the perturbed rate at or above the baseline
    assert!(rows.iter().filter(|r| r.criterion.starts_with("rate:")).all(|r| r.delta >= -1e-8));
}

#[test]
fn one_dimensional_cosine_baseline_rate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "kind = \"diffusion-ldp\"\n[diffusion]\nnodes = 64\n");
    let out = dir.path().join("out");
    assert_eq!(run_to(&cfg, &out, &[]).status.code(), Some(0));
    let rows = read_rows(&out);
    let h = 2.0 * std::f64::consts::PI / 64.0;
    let base = rows.iter().find(|r| r.criterion == "rate:mobility").unwrap().baseline;
    assert!((base - 0.125).abs() < h * h, "{base}");
}

#[test]
fn resolution_sweep_shows_second_order_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "kind = \"diffusion-ldp\"\n[diffusion]\nnodes = 32\n");
    let out = dir.path().join("out");
    let o = accelmc(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--param",
        "diffusion.nodes",
        "--values",
        "64,128,256",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let errors: Vec<f64> = read_rows(&out)
        .iter()
        .filter(|r| r.criterion == "rate:mobility")
        .map(|r| (r.baseline - 0.125).abs())
        .collect();
    assert_eq!(errors.len(), 3);
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.0..=5.0).contains(&ratio), "{errors:?}");
    }
    let rows = read_rows(&out);
    assert!(rows[0].instance.starts_with("diffusion.nodes=64/"));
    assert!(rows.last().unwrap().instance.starts_with("diffusion.nodes=256/"));
}

#[test]
fn cycle_weight_sweep_lowers_variance_monotonically() {
    let energies = [0.0, 0.4, 1.0, 0.3];
    let h = EnergyFunction::new(energies.to_vec()).unwrap();
    let q0 = metropolis_generator(&h, None).unwrap();
    let unit = metropolis_cycle_perturbation(&h, &CyclePerturbation::new(vec![0, 1, 2], 1.0).unwrap()).unwrap();
    let max = max_admissible_epsilon(&q0, &unit).unwrap();
    let values: Vec<String> = (0..5).map(|k| format!("{:?}", max * k as f64 / 4.0)).collect();

    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "kind = \"chain-variance\"\n[chain]\ndynamics = \"metropolis\"\n[chain.explicit]\n\
         energies = [0.0, 0.4, 1.0, 0.3]\nobservable = [1.0, -0.5, 0.2, 0.0]\n\
         [chain.explicit.cycle]\nstates = [0, 1, 2]\nepsilon = 0.0\n",
    );
    let out = dir.path().join("out");
    let o = accelmc(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--param",
        "chain.explicit.cycle.epsilon",
        "--values",
        &values.join(","),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let deltas: Vec<f64> =
        read_rows(&out).iter().filter(|r| r.criterion == "variance:cycle").map(|r| r.delta).collect();
    assert_eq!(deltas.len(), 5);
    assert!(deltas[0].abs() < 1e-15);
    for w in deltas.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{deltas:?}");
    }
    assert!(deltas[4] < 0.0);
}

#[test]
fn empty_sweep_writes_only_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "kind = \"chain-gap\"\n");
    let out = dir.path().join("out");
    let o = accelmc(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--param",
        "chain.cycle_budget",
        "--values",
        "",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(out.join("results.csv")).unwrap(), "instance,criterion,baseline,perturbed,delta,verdict\n");
    assert_eq!(summary(&out)["rows"], 0);
}

#[test]
fn csv_is_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "kind = \"chain-variance\"\nseed = 4\n[chain]\ninstances = 6\n[chain.simulate]\nt = 50.0\nreplicas = 16\n",
    );
    let outs: Vec<PathBuf> = ["a", "b", "c"].iter().map(|n| dir.path().join(n)).collect();
    run_to(&cfg, &outs[0], &["--jobs", "1"]);
    run_to(&cfg, &outs[1], &["--jobs", "1"]);
    run_to(&cfg, &outs[2], &["--jobs", "3"]);
    let read = |p: &PathBuf| std::fs::read(p.join("results.csv")).unwrap();
    assert_eq!(read(&outs[0]), read(&outs[1]));
    assert_eq!(read(&outs[0]), read(&outs[2]));
    // a different seed changes the instances
    let other = dir.path().join("d");
    run_to(&cfg, &other, &["--seed", "5"]);
    assert_ne!(read(&outs[0]), read(&other));
}

#[test]
fn failing_rows_set_exit_status_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "kind = \"diffusion-ldp\"\n[diffusion]\npotential = \"cosine-2d\"\nmobility = \"sin-squared\"\n\
         mobility_param = 0.5\ndrift = 1.0\nnodes = 24\n[[diffusion.density]]\nwave = [1, 0]\namplitude = 0.3\nkind = \"sin\"\n",
    );
    let out = dir.path().join("out");
    assert_eq!(run_to(&cfg, &out, &[]).status.code(), Some(0));
    // a vanishing tolerance turns the discretization error of the corrections into failures
    let o = run_to(&cfg, &out, &["--tolerance-scale", "1e-9"]);
    assert_eq!(o.status.code(), Some(1));
    let s = summary(&out);
    assert!(s["verdicts"]["fail"].as_u64().unwrap() > 0);
    let failures = s["failures"].as_array().unwrap();
    assert!(failures.iter().all(|f| f["instance"].as_str().unwrap().contains("-s0")));
    assert!(read_rows(&out).iter().any(|r| r.verdict == "fail" && r.criterion.starts_with("correction")));
}

#[test]
fn config_errors_exit_two_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "kind = \"chain-gap\"\n[chain]\ninstances = \"many\"\n");
    let o = accelmc(&["validate-config", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.toml:3:"), "{err}");

    let cfg = write_config(dir.path(), "field.toml", "kind = \"diffusion-sim\"\n[diffusion]\nreplicas = 1\n");
    let o = accelmc(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("diffusion.replicas"));

    let cfg = write_config(dir.path(), "ok.toml", "kind = \"chain-ldp\"\n");
    let o = accelmc(&["validate-config", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("ok"));
}

#[test]
fn computation_errors_name_the_instance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "kind = \"chain-gap\"\nseed = 8\n[chain.explicit]\nenergies = [0.0, 1.0, 2.0]\n\
         [chain.explicit.cycle]\nstates = [0, 1, 2]\nepsilon = 50.0\n",
    );
    let o = run_to(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("explicit-s8"));
}

#[test]
fn output_directory_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "kind = \"chain-gap\"\n[chain]\ninstances = 2\n");
    let env_out = dir.path().join("from-env");
    let o = Command::new(BIN)
        .args(["run", "--config", cfg.to_str().unwrap()])
        .env("ACCELMC_OUT_DIR", &env_out)
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(env_out.join("results.csv").exists());
    // --out wins over the environment
    let flag_out = dir.path().join("from-flag");
    let o = Command::new(BIN)
        .args(["run", "--config", cfg.to_str().unwrap(), "--out", flag_out.to_str().unwrap()])
        .env("ACCELMC_OUT_DIR", &env_out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(flag_out.join("summary.json").exists());
    // without either, the default directory is relative to the working directory
    let o = Command::new(BIN)
        .args(["run", "--config", cfg.to_str().unwrap()])
        .env_remove("ACCELMC_OUT_DIR")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("accelmc-out/results.csv").exists());
}

#[test]
fn sweep_rejects_unknown_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "kind = \"chain-gap\"\n");
    let o = accelmc(&["sweep", "--config", cfg.to_str().unwrap(), "--param", "chain.bogus", "--values", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("chain.bogus"));
}

#[test]
fn bundled_configs_validate() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(configs).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            let o = accelmc(&["validate-config", "--config", p.to_str().unwrap()]);
            assert_eq!(o.status.code(), Some(0), "{}: {}", p.display(), String::from_utf8_lossy(&o.stderr));
            n += 1;
        }
    }
    assert!(n >= 5);
}
