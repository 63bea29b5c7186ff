use std::process::{Command, Output};

fn ablq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ablq")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn field(line: &str, key: &str) -> f64 {
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing in {line}"))
        .parse()
        .unwrap()
}

#[test]
fn shuffle_query_is_tagged_lower() {
    let o = ablq(&["query", "--mechanism", "shuffle", "--sigma", "0.5", "--steps", "10000", "--delta", "1e-6"]);
    assert!(o.status.success());
    let line = stdout(&o);
    assert!(line.contains("kind=lower"), "{line}");
    assert!(field(&line, "epsilon") >= 10.994);
    assert!(field(&line, "argmax_c") > 0.0);
}

#[test]
fn deterministic_query_json() {
    let o = ablq(&["query", "--mechanism", "deterministic", "--sigma", "0.4", "--eps", "4", "--format", "json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["kind"], "exact");
    assert_eq!(v["mechanism"], "deterministic");
    assert_eq!(v["method"], "closed-form");
    assert_eq!(v["adjacency"], "zero_out");
    assert!((v["delta"].as_f64().unwrap() - 0.244).abs() < 5e-4);
}

#[test]
fn poisson_pld_query() {
    let o = ablq(&["query", "--mechanism", "poisson", "--accountant", "pld", "--sigma", "0.5", "--steps", "10000", "--delta", "1e-6"]);
    assert!(o.status.success());
    let line = stdout(&o);
    assert!(line.contains("kind=upper"));
    assert!((field(&line, "epsilon") - 1.96).abs() < 0.05);
}

#[test]
fn substitution_uses_group_privacy() {
    let base = ablq(&["query", "--mechanism", "deterministic", "--sigma", "0.8", "--eps", "0.5"]);
    let sub = ablq(&["query", "--mechanism", "deterministic", "--sigma", "0.8", "--eps", "1", "--adjacency", "substitution"]);
    assert!(sub.status.success());
    let (b, s) = (stdout(&base), stdout(&sub));
    assert!(s.contains("kind=upper") && s.contains("adjacency=substitution"));
    let want = field(&b, "delta") * (1.0 + 0.5f64.exp());
    assert!((field(&s, "delta") / want - 1.0).abs() < 1e-12);
    // lower bounds do not transfer
    let o = ablq(&["query", "--mechanism", "shuffle", "--sigma", "0.5", "--steps", "10", "--eps", "1", "--adjacency", "substitution"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_flags_exit_2() {
    for args in [
        vec!["query", "--mechanism", "poisson", "--sigma", "0.5", "--steps", "10", "--eps", "1", "--delta", "1e-3"],
        vec!["query", "--mechanism", "poisson", "--sigma", "-1", "--steps", "10", "--eps", "1"],
        vec!["query", "--mechanism", "shuffle", "--accountant", "rdp", "--sigma", "1", "--steps", "10", "--eps", "1"],
        vec!["sweep", "--preset", "fig2", "--accountant", ""],
        vec!["sweep", "--preset", "nope"],
        vec!["simulate", "--mechanism", "shuffle", "--batch-size", "2", "--steps", "3", "--sigma", "1", "--data", "1,1,1"],
    ] {
        assert_eq!(ablq(&args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn bracket_failure_exits_3() {
    // the pessimistic infinity mass alone exceeds the target δ
    let o = ablq(&["query", "--mechanism", "poisson", "--sigma", "0.5", "--steps", "100", "--delta", "1e-12", "--tail-mass", "1e-6"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn sweep_writes_deterministic_csv() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let args = |p: &std::path::Path| {
        vec![
            "sweep".to_string(),
            "--mode".into(),
            "delta-vs-eps".into(),
            "--sigma".into(),
            "0.3".into(),
            "--steps".into(),
            "10".into(),
            "--grid-start".into(),
            "40".into(),
            "--grid-stop".into(),
            "60".into(),
            "--grid-points".into(),
            "5".into(),
            "--accountant".into(),
            "deterministic,poisson-halfspace-lower".into(),
            "--out".into(),
            p.display().to_string(),
        ]
    };
    for p in [&a, &b] {
        let v = args(p);
        let o = ablq(&v.iter().map(String::as_str).collect::<Vec<_>>());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let csv = std::fs::read_to_string(&a).unwrap();
    assert_eq!(csv, std::fs::read_to_string(&b).unwrap());
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "x,mechanism,method,kind,epsilon,delta");
    assert_eq!(lines.len(), 11);
    // at ε = 60 the halfspace lower bound on δ_P exceeds δ_D
    let last: Vec<&str> = lines[10].split(',').collect();
    let det: Vec<&str> = lines[9].split(',').collect();
    assert_eq!((last[2], last[3]), ("halfspace", "lower"));
    assert!(last[5].parse::<f64>().unwrap() > det[5].parse::<f64>().unwrap());
    for l in &lines[1..] {
        let mantissa = l.split(',').next().unwrap().split('e').next().unwrap();
        assert_eq!(mantissa.trim_start_matches('-').len(), 18, "{l}");
    }
}

#[test]
fn sweep_io_error_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("missing").join("x.csv");
    let o = ablq(&["sweep", "--preset", "fig7", "--accountant", "deterministic", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn simulate_deterministic_blocks() {
    let o = ablq(&["simulate", "--mechanism", "deterministic", "--batch-size", "2", "--steps", "2", "--sigma", "1e-9", "--data", "0.5,_,-1,0.25", "--format", "json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let g: Vec<f64> = v["outputs"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!((g[0] - 0.5).abs() < 1e-6 && (g[1] + 0.75).abs() < 1e-6);
}
