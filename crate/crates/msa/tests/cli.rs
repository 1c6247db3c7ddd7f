use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use msa::commands::{msa_config, rate_rows, solve};
use msa::config::{CommonArgs, ProblemSelector, RunConfig, DEFAULT_STEPS};
use msa::problems::load;
use msa::trace::{read_rate, read_trace, TraceRow};
use tempfile::TempDir;

fn msa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msa"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: [&str; 6] = ["--paths", "2000", "--steps", "10", "--iters", "4"];

#[test]
fn zero_iterations_write_only_the_header() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("trace.csv");
    let res = msa(&[
        "run",
        "--problem",
        "lq",
        "--iters",
        "0",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(
        fs::read_to_string(&out).unwrap(),
        "iter,J,J_stderr,mu,mu_stderr,descent,wall_ms\n"
    );
}

#[test]
fn same_config_gives_identical_bytes() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for target in [&a, &b] {
        let mut args = vec![
            "run",
            "--problem",
            "linear-recursive",
            "--seed",
            "11",
            "--out",
            path_str(target),
        ];
        args.extend(SMALL);
        assert_eq!(code(&msa(&args)), 0);
    }
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());
    assert!(!bytes.contains(&b'\r'));
    assert_eq!(bytes.last(), Some(&b'\n'));
}

#[test]
fn written_trace_parses_back_to_the_records() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("trace.csv");
    let mut args = vec![
        "run",
        "--problem",
        "lq",
        "--seed",
        "3",
        "--out",
        path_str(&out),
    ];
    args.extend(SMALL);
    assert_eq!(code(&msa(&args)), 0);
    let parsed = read_trace(fs::File::open(&out).unwrap()).unwrap();

    let flags = CommonArgs {
        problem: Some("lq".into()),
        seed: Some(3),
        paths: Some(2000),
        steps: Some(10),
        iters: Some(4),
        ..CommonArgs::default()
    };
    let (cfg, _) = RunConfig::resolve(&flags, DEFAULT_STEPS).unwrap();
    let loaded = load(&cfg.problem, cfg.l).unwrap();
    let records = solve(&cfg, &loaded).unwrap();
    let expected: Vec<TraceRow> = records.iter().map(TraceRow::from).collect();
    assert_eq!(parsed.len(), 4);
    for (p, e) in parsed.iter().zip(&expected) {
        assert_eq!(p.iter, e.iter);
        for (x, y) in [
            (p.j, e.j),
            (p.j_stderr, e.j_stderr),
            (p.mu, e.mu),
            (p.mu_stderr, e.mu_stderr),
            (p.descent, e.descent),
        ] {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(p.wall_ms, 0.0);
    }
}

#[test]
fn sine_driver_trace_settles_inside_three_standard_errors() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("trace.csv");
    let res = msa(&[
        "run",
        "--problem",
        "example41",
        "--L",
        "0.1",
        "--seed",
        "7",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(code(&res), 0);
    let rows = read_trace(fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(rows.len(), 30);
    let inside = |r: &TraceRow| r.j.abs() <= 3.0 * r.j_stderr;
    let entry = rows.iter().position(inside).expect("J enters the band");
    assert!(entry <= 1, "entered at row {}", entry + 1);
    assert!(rows[entry..].iter().all(inside));
}

#[test]
fn unwritable_output_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("missing").join("trace.csv");
    let res = msa(&[
        "run",
        "--problem",
        "lq",
        "--iters",
        "1",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(code(&res), 2);
    assert!(!res.stderr.is_empty());
}

#[test]
fn invalid_parameters_exit_with_two() {
    for args in [
        vec!["run", "--paths", "0"],
        vec!["run", "--problem", "example41", "--L", "3.0"],
        vec!["run", "--rho", "-1"],
        vec!["run", "--degree", "20"],
        vec!["run", "--problem", "no-such-file.toml"],
        vec!["run", "--bogus-flag"],
        vec!["rate", "--problem", "example41", "--iters", "1"],
    ] {
        assert_eq!(code(&msa(&args)), 2, "{args:?}");
    }
}

#[test]
fn numerical_failure_exits_with_three() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("explode.toml");
    fs::write(
        &spec,
        "kind = \"linear-recursive\"\nx0 = [1.0]\nb1 = [1e308]\nalpha = [1.0]\n[domain]\npoints = [[0.0]]\n",
    )
    .unwrap();
    let res = msa(&[
        "run",
        "--problem",
        path_str(&spec),
        "--paths",
        "200",
        "--steps",
        "4",
        "--iters",
        "1",
    ]);
    assert_eq!(code(&res), 3, "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn flags_override_the_config_file() {
    let dir = TempDir::new().unwrap();
    let cfg_path = dir.path().join("exp.toml");
    fs::write(
        &cfg_path,
        "problem = \"lq\"\nseed = 5\npaths = 1000\nsteps = 8\niters = 3\nout = \"from_file.csv\"\n",
    )
    .unwrap();
    let flags = CommonArgs {
        config: Some(cfg_path.clone()),
        iters: Some(2),
        ..CommonArgs::default()
    };
    let (cfg, _) = RunConfig::resolve(&flags, DEFAULT_STEPS).unwrap();
    assert_eq!(cfg.problem, ProblemSelector::Lq);
    assert_eq!((cfg.seed, cfg.paths, cfg.steps, cfg.iters), (5, 1000, 8, 2));
    assert_eq!(
        cfg.out.as_deref(),
        Some(dir.path().join("from_file.csv").as_path())
    );

    let res = msa(&["run", "--config", path_str(&cfg_path), "--iters", "2"]);
    assert_eq!(code(&res), 0);
    let rows = read_trace(fs::File::open(dir.path().join("from_file.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 2);

    fs::write(&cfg_path, "unknown_key = 1\n").unwrap();
    assert_eq!(code(&msa(&["run", "--config", path_str(&cfg_path)])), 2);
}

#[test]
fn resolved_config_is_validated_before_compute() {
    let flags = CommonArgs {
        problem: Some("lq".into()),
        epsilon: Some(-1.0),
        ..CommonArgs::default()
    };
    let (cfg, _) = RunConfig::resolve(&flags, DEFAULT_STEPS).unwrap();
    let loaded = load(&cfg.problem, cfg.l).unwrap();
    assert!(msa_config(&cfg, &loaded).is_err());
}

fn oracle_stdout(args: &[&str]) -> String {
    let res = msa(args);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    String::from_utf8(res.stdout).unwrap()
}

#[test]
fn oracle_finds_zero_cost_for_the_sine_driver() {
    let text = oracle_stdout(&[
        "oracle",
        "--problem",
        "example41",
        "--L",
        "0.1",
        "--steps",
        "3",
    ]);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("Jstar=0"));
    assert_eq!(lines.next(), Some("evaluated=128"));
    assert_eq!(lines.next(), Some("j,node,u"));
    let table: Vec<&str> = lines.collect();
    assert_eq!(table.len(), 7);
    assert!(table.iter().all(|row| row.ends_with(",0")));
}

#[test]
fn oracle_finds_zero_cost_for_the_quadratic_desk() {
    for mode in ["full", "recombining"] {
        let text = oracle_stdout(&["oracle", "--problem", "lq", "--mode", mode]);
        assert!(text.starts_with("Jstar=0\n"), "{text}");
    }
}

#[test]
fn control_independent_spec_has_one_evaluation() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("fixed.toml");
    fs::write(
        &spec,
        "kind = \"linear-recursive\"\nx0 = [0.5]\nb1 = [0.1]\nsigma3 = [0.3]\nf1 = [0.2]\nf2 = 0.2\nalpha = [1.0]\n[domain]\npoints = [[0.25]]\n",
    )
    .unwrap();
    let text = oracle_stdout(&["oracle", "--problem", path_str(&spec), "--steps", "3"]);
    assert!(text.contains("\nevaluated=1\n"));
    let jstar: f64 = text
        .lines()
        .next()
        .unwrap()
        .strip_prefix("Jstar=")
        .unwrap()
        .parse()
        .unwrap();

    let loaded = load(&ProblemSelector::Custom(spec), 0.1).unwrap();
    let single =
        msa_core::benchmarks::evaluate_policy(loaded.problem.as_ref(), 3, &[0.25; 7]).unwrap();
    assert_eq!(jstar, single.cost());
}

#[test]
fn oracle_budget_exceeded_exits_with_two() {
    let res = msa(&["oracle", "--problem", "lq", "--steps", "5"]);
    assert_eq!(code(&res), 2);
    let res = msa(&[
        "oracle",
        "--problem",
        "lq",
        "--steps",
        "3",
        "--budget",
        "100",
    ]);
    assert_eq!(code(&res), 2);
}

#[test]
fn rate_reports_bounded_gap_sequence() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("rate.csv");
    let res = msa(&[
        "rate",
        "--problem",
        "lq",
        "--paths",
        "20000",
        "--iters",
        "6",
        "--seed",
        "7",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(code(&res), 0);
    let rows = read_rate(fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(rows.len(), 6);
    let c1 = rows[0].gap.max(1.0);
    for r in &rows {
        assert_eq!(r.iter_times_gap, r.iter as f64 * r.gap);
        assert!(r.gap >= 0.0);
        assert!(r.iter_times_gap <= c1);
    }
    let summary = String::from_utf8(res.stdout).unwrap();
    assert!(summary.starts_with("max_iter_times_gap="), "{summary}");
    assert!(summary.contains("bounded=true"));
}

#[test]
fn zero_gap_gives_zero_products() {
    let flags = CommonArgs {
        problem: Some("lq".into()),
        paths: Some(500),
        steps: Some(5),
        iters: Some(3),
        ..CommonArgs::default()
    };
    let (cfg, _) = RunConfig::resolve(&flags, DEFAULT_STEPS).unwrap();
    let loaded = load(&cfg.problem, cfg.l).unwrap();
    let records = solve(&cfg, &loaded).unwrap();
    // Shifting J* onto the first gap makes it zero.
    let (rows, c1, max) = rate_rows(&records[..1], records[0].cost.mean, 1);
    assert_eq!(rows[0].gap, 0.0);
    assert_eq!(rows[0].iter_times_gap, 0.0);
    assert_eq!((c1, max), (1.0, Some(0.0)));
}

#[test]
fn quadratic_spec_file_matches_the_builtin_desk() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("lq.toml");
    fs::write(
        &spec,
        "kind = \"lq\"\nx0 = [0.0]\ngamma = [1.0]\na = [1.0]\nb = [1.0]\nsigma_u = [1.0]\njstar = 0.0\n[domain]\npoints = [[-1.0], [0.0], [1.0]]\n",
    )
    .unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let mut args = vec!["run", "--problem", path_str(&spec), "--out", path_str(&a)];
    args.extend(SMALL);
    assert_eq!(code(&msa(&args)), 0);
    let mut args = vec!["run", "--problem", "lq", "--out", path_str(&b)];
    args.extend(SMALL);
    assert_eq!(code(&msa(&args)), 0);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}
