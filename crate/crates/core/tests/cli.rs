use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_glmm-smc"))
}

fn run(args: &[&str]) -> std::process::Output {
    bin().args(args).output().expect("binary runs")
}

fn read(p: &Path) -> Vec<u8> {
    fs::read(p).unwrap()
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["simulate", "poisson", "--n", "500", "--seed", "1", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["data.csv", "truth.json", "config.toml"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f} differs");
    }
    let rows = fs::read_to_string(a.join("data.csv")).unwrap().lines().count();
    assert_eq!(rows, 501);
}

#[test]
fn simulate_logit_has_visits() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "logit", "--n", "30", "--seed", "2", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let header = fs::read_to_string(dir.path().join("data.csv")).unwrap();
    let header = header.lines().next().unwrap();
    assert!(header.contains("subject") && header.contains("visit6") && header.contains("age"));
}

#[test]
fn validation_errors_exit_2() {
    let o = run(&["simulate", "poisson", "--n", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["fit", "--preset", "no-such-preset"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["fit", "--preset", "paper-4.1", "--set", "smc.n_stages=3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_data_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "fit",
        "--preset",
        "paper-4.1",
        "--data",
        dir.path().join("nope.csv").to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn fit_writes_artifacts_and_compare_self_is_diagonal() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let o = run(&[
        "fit",
        "--preset",
        "paper-4.1",
        "--n",
        "100",
        "--set",
        "smc.n_stages=12",
        "--set",
        "model.simulate.n=150",
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "config.toml",
        "metadata.json",
        "samples.csv",
        "summary.csv",
        "trace.json",
        "ess_trace.csv",
        "curve_x2.csv",
        "standardisation.json",
        "data.csv",
        "truth.json",
    ] {
        assert!(run_dir.join(f).exists(), "{f} missing");
    }
    let header = fs::read_to_string(run_dir.join("samples.csv")).unwrap();
    let header = header.lines().next().unwrap().to_string();
    assert!(header.starts_with("(Intercept),x1,x2,s(x2)[1]"));
    assert!(header.ends_with("sigma_sq[s(x2)],weight"));

    // The echoed config reproduces the run exactly.
    let again = dir.path().join("again");
    let o = run(&[
        "fit",
        "--config",
        run_dir.join("config.toml").to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(&run_dir.join("samples.csv")), read(&again.join("samples.csv")));

    let cmp = dir.path().join("cmp");
    let o = run(&[
        "compare",
        run_dir.to_str().unwrap(),
        run_dir.to_str().unwrap(),
        "--param",
        "x1",
        "--out",
        cmp.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let qq = fs::read_to_string(cmp.join("qq_1_vs_0.csv")).unwrap();
    for line in qq.lines().skip(1) {
        let (a, b) = line.split_once(',').unwrap();
        assert_eq!(a, b);
    }
    assert!(cmp.join("kde.csv").exists());
    // Two copies of the same run form one group with identical means.
    let table = fs::read_to_string(cmp.join("carpenter_ess.csv")).unwrap();
    assert!(table.lines().nth(1).unwrap().ends_with("inf,true"), "{table}");

    let o = run(&["compare", run_dir.to_str().unwrap(), "--param", "nope", "--out", cmp.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn single_replicate_omits_cross_run_ess() {
    let dir = tempfile::tempdir().unwrap();
    let mut dirs = Vec::new();
    for sampler in ["smc", "is"] {
        let d = dir.path().join(sampler);
        let o = run(&[
            "fit",
            "--preset",
            "paper-4.1",
            "--sampler",
            sampler,
            "--n",
            "200",
            "--set",
            "smc.n_stages=10",
            "--set",
            "model.simulate.n=100",
            "--out",
            d.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        dirs.push(d);
    }
    let cmp = dir.path().join("cmp");
    let o = run(&[
        "compare",
        dirs[0].to_str().unwrap(),
        dirs[1].to_str().unwrap(),
        "--param",
        "x1",
        "--out",
        cmp.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("only one replicate"));
    assert!(!cmp.join("carpenter_ess.csv").exists());
}

#[test]
fn output_root_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .env("GLMM_SMC_OUT", dir.path())
        .args(["simulate", "poisson", "--n", "5", "--seed", "3"])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("simulate-poisson-seed3").join("data.csv").exists());
}
