use std::path::Path;
use std::process::{Command, Output};

fn fdrv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdrv"))
        .args(args)
        .env_remove("FDRV_THREADS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

#[test]
fn coeffs_table_shape() {
    let o = fdrv(&["coeffs", "--T", "8", "--d", "0.75", "--M", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,pi,R1,R2,R3"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 8);
    assert!(rows[0].starts_with("0,1"));
    assert!(rows.iter().all(|r| r.split(',').count() == 5));
}

#[test]
fn coeffs_routes_agree() {
    let a = stdout(&fdrv(&["coeffs", "--T", "64", "--d", "1.1", "--M", "2"]));
    let b = stdout(&fdrv(&[
        "coeffs",
        "--T",
        "64",
        "--d",
        "1.1",
        "--M",
        "2",
        "--route",
        "closed-form",
    ]));
    for (x, y) in a.lines().zip(b.lines()).skip(1) {
        for (u, v) in x.split(',').zip(y.split(',')).skip(1) {
            let (u, v): (f64, f64) = (u.parse().unwrap(), v.parse().unwrap());
            assert!((u - v).abs() <= 1e-11 * u.abs().max(1.0), "{u} vs {v}");
        }
    }
}

#[test]
fn selftest_exit_codes() {
    let ok = fdrv(&["selftest"]);
    assert_eq!(
        ok.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    let bad = fdrv(&["selftest", "--inject-fault"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn selftest_json_is_structured() {
    let o = fdrv(&["selftest", "--json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["pass"], serde_json::Value::Bool(true));
    let checks = v["checks"].as_array().unwrap();
    assert!(checks.len() >= 8);
    assert!(checks
        .iter()
        .all(|c| c["error"].as_f64().unwrap() <= c["tolerance"].as_f64().unwrap()));
}

#[test]
fn invalid_config_exits_two_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(
        &cfg,
        r#"{"schema_version":1,"process":[{"tag":"Z"}],"T":[64],"d":0.75,"N":0,"grid":[1.0]}"#,
    )
    .unwrap();
    let out = dir.path().join("report.csv");
    let o = fdrv(&[
        "montecarlo",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
}

#[test]
fn unknown_subcommand_and_bad_d() {
    assert_eq!(fdrv(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        fdrv(&["coeffs", "--T", "8", "--d", "0.4", "--M", "1"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn simulate_impulse_matches_filter() {
    let o = fdrv(&[
        "simulate",
        "--process",
        "Z",
        "--T",
        "16",
        "--d",
        "1",
        "--impulse",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    // d = 1: pi_n = 1, so Z_t = T^{-1/2} for every t after the impulse
    let vals: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(vals.len(), 16);
    assert!(vals.iter().all(|v| (v - 0.25).abs() < 1e-15));
}

#[test]
fn binary_round_trip_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("z.bin");
    let o = fdrv(&[
        "simulate",
        "--process",
        "DmZ1",
        "--T",
        "32",
        "--d",
        "0.75",
        "--N",
        "3",
        "--format",
        "binary",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let ens = fdrv::procsim::read_binary(&mut std::fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(ens.dim(), (3, 32, 1));
}

#[test]
fn reports_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let dir2 = dir.path().join("cfg.json");
    std::fs::write(
        &dir2,
        r#"{"schema_version":1,"process":[{"tag":"Z"},{"tag":"H","m":1}],"T":[128],"d":0.75,"N":400,"grid":[0.5,1.0]}"#,
    )
    .unwrap();
    let run = |threads: &str, cfg: &str, sub: &str| {
        let out = dir.path().join(format!("{sub}-{threads}.csv"));
        fdrv(&[
            "--threads",
            threads,
            sub,
            cfg,
            "--out",
            out.to_str().unwrap(),
        ]);
        std::fs::read(out).unwrap()
    };
    let cfg = dir2.to_str().unwrap();
    assert_eq!(run("1", cfg, "montecarlo"), run("4", cfg, "montecarlo"));
    let m = config("mfcvar.json");
    assert_eq!(run("1", &m, "mfcvar"), run("3", &m, "mfcvar"));
}

#[test]
fn covariance_table() {
    let o = fdrv(&[
        "covariance",
        "--kind",
        "a-pair",
        "--m",
        "0",
        "--m2",
        "0",
        "--d",
        "1",
        "--r",
        "0.5,1",
        "--s",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let last: f64 = text
        .lines()
        .last()
        .unwrap()
        .rsplit(',')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    // d = 1, m = 0: Brownian motion, kappa(1, 1) = 1
    assert!((last - 1.0).abs() < 1e-12, "{text}");
}

#[test]
fn shipped_configs_parse() {
    let mc = std::fs::read_to_string(config("montecarlo.json")).unwrap();
    fdrv::mcharness::ExperimentConfig::from_json(&mc).unwrap();
    let mv = std::fs::read_to_string(config("mfcvar.json")).unwrap();
    let _: fdrv::mfcvar::McvarExperiment = serde_json::from_str(&mv).unwrap();
}
