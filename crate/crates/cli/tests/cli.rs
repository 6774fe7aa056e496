use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tmdmap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tmdmap")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = tmdmap(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn two_well_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = dir.path().join("cloud.csv");
    let ksum = dir.path().join("ksum.csv");
    let solve = dir.path().join("solve");
    let current = dir.path().join("current.csv");
    #[rustfmt::skip]
    ok(&["sample", "--potential", "twowell", "--method", "em", "--steps", "300000", "--subsample", "100",
         "--seed", "5", "--x0=-1,0", "--out", s(&cloud)]);
    let text = fs::read_to_string(&cloud).unwrap();
    assert_eq!(text.lines().next(), Some("x1,x2"));
    assert_eq!(text.lines().count(), 3001);

    ok(&["ksum", "--cloud", s(&cloud), "--eps-min", "1e-3", "--eps-max", "1", "--grid-size", "16", "--out", s(&ksum)]);
    assert_eq!(fs::read_to_string(&ksum).unwrap().lines().count(), 17);

    #[rustfmt::skip]
    let geometry = ["--potential", "twowell", "--a-center=-1,0", "--b-center=1,0", "--radius", "0.3", "--eps", "0.02"];
    let mut args = vec!["solve-committor", "--cloud", s(&cloud), "--out", s(&solve)];
    args.extend(geometry);
    ok(&args);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(solve.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["maximum_principle"], true);
    assert_eq!(manifest["n"], 3000);
    let q: Vec<f64> = fs::read_to_string(solve.join("committor.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(q.iter().all(|v| (-1e-8..=1.0 + 1e-8).contains(v)));

    let solution = solve.join("committor.csv");
    let mut args = vec!["tpt-summary", "--solution", s(&solution), "--current", s(&current)];
    args.extend(geometry);
    let summary: serde_json::Value = serde_json::from_str(&ok(&args)).unwrap();
    for key in ["nu_AB", "rho_A", "k_AB"] {
        let v = summary[key].as_f64().unwrap();
        assert!(v > 0.0 && v.is_finite(), "{key} = {v}");
    }
    assert_eq!(fs::read_to_string(&current).unwrap().lines().next(), Some("x1,x2,j1,j2"));
}

#[test]
fn circle_sampling_and_delta_net() {
    let dir = tempfile::tempdir().unwrap();
    let full = dir.path().join("full.csv");
    let thin = dir.path().join("thin.csv");
    ok(&["sample", "--potential", "circle", "--method", "circle-uniform", "--n", "500", "--out", s(&full)]);
    #[rustfmt::skip]
    ok(&["sample", "--potential", "circle", "--method", "circle-uniform", "--n", "500", "--delta", "0.1",
         "--out", s(&thin)]);
    let n_full = fs::read_to_string(&full).unwrap().lines().count() - 1;
    let n_thin = fs::read_to_string(&thin).unwrap().lines().count() - 1;
    assert_eq!(n_full, 500);
    assert!((40..=63).contains(&n_thin), "{n_thin}");
}

#[test]
fn hexagon_experiment_reruns_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("hex.cfg");
    fs::write(&cfg, "# small run\nrings = 20, 40\neps_count = 40\ncheck_rings = 12\ncheck_eps = 0.05\n").unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    ok(&["experiment", "hexagon", "--config", s(&cfg), "--out", s(&first)]);
    for f in ["manifest.json", "results.csv", "plot.svg"] {
        assert!(first.join(f).exists(), "{f}");
    }
    let manifest = first.join("manifest.json");
    ok(&["experiment", "hexagon", "--manifest", s(&manifest), "--out", s(&second)]);
    for entry in fs::read_dir(&first).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(fs::read(first.join(&name)).unwrap(), fs::read(second.join(&name)).unwrap(), "{name:?}");
    }
    let wrong = tmdmap(&["experiment", "bias-prefactor", "--manifest", s(&manifest), "--out", s(&second)]);
    assert!(!wrong.status.success());
}

#[test]
fn config_introspection_and_errors() {
    let printed = ok(&["experiment", "rmse-sweep", "--potential", "mueller", "--print-config"]);
    assert!(printed.lines().any(|l| l == "potential = mueller"));
    assert!(printed.lines().any(|l| l == "seed = 2024"));
    let schema = ok(&["experiment", "bias-prefactor", "--schema"]);
    assert!(schema.contains("repeats"));

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    assert!(!tmdmap(&["experiment", "hexagon", "--set", "bogus=1", "--out", s(&out)]).status.success());
    assert!(!tmdmap(&["experiment", "rmse-sweep", "--potential", "circle", "--print-config"]).status.success());
    let missing = dir.path().join("missing.csv");
    let r = tmdmap(&["ksum", "--cloud", s(&missing)]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("missing.csv"));
}
