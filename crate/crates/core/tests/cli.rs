use std::path::Path;
use std::process::{Command, Output};

use needlet::config::{read_map, write_map};
use needlet::needlet::{CoefficientPyramid, NeedletSystem, PyramidFormat, PyramidTag};
use needlet::threshold::truncate;

fn needlet(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_needlet"))
        .args(args)
        .current_dir(dir)
        .env_remove("NEEDLET_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn frame_reports_levels_and_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let out = needlet(&["frame", "--bandwidth", "2", "--j-max", "4"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| l.trim_start().chars().next().is_some_and(|c| c.is_ascii_digit()))
        .map(|l| l.split_whitespace().map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 5);
    for (j, row) in rows.iter().enumerate() {
        assert_eq!(row[0], j as f64);
        assert!(row[2] > 0.0 && row[3] >= row[2]);
        assert!(row[4].abs() < 1e-10, "sum of weights off by {}", row[4]);
        assert!(row[5] < 1e-8, "unitary residual {}", row[5]);
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(needlet(&["frame", "--bandwidth", "1.0"], p).status.code(), Some(1));
    assert_eq!(needlet(&["nonsense"], p).status.code(), Some(1));
    assert_eq!(needlet(&["rate", "--r", "2"], p).status.code(), Some(1));
    assert_eq!(needlet(&["--help"], p).status.code(), Some(0));
    let capped = needlet(&["frame", "--j-max", "9", "--point-cap", "1000"], p);
    assert_eq!(capped.status.code(), Some(2), "{}", stderr(&capped));
    let threads = Command::new(env!("CARGO_BIN_EXE_needlet"))
        .args(["rate", "--r", "2", "--pi", "2", "--p", "2"])
        .env("NEEDLET_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(1));
}

#[test]
fn rate_prints_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let out = needlet(&["rate", "--r", "2", "--pi", "1", "--p", "6"], dir.path());
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("alpha 1\n"), "{text}");
    assert!(text.contains("zone Sparse"), "{text}");
    let inf = stdout(&needlet(&["rate", "--r", "2", "--pi", "2", "--p", "inf"], dir.path()));
    assert!(inf.contains("alpha 0.25\n"), "{inf}");
}

#[test]
fn analyze_synth_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let grid_path = p.join("grid.csv");
    let out = needlet(&["frame", "--j-max", "3", "--grid-out", grid_path.to_str().unwrap()], p);
    assert!(out.status.success(), "{}", stderr(&out));
    let grid = read_map(&grid_path, false).unwrap();
    let pts: Vec<_> = grid.iter().map(|s| s.point).collect();
    let f = |x: [f64; 3]| x[0] * x[2] + 0.3 * x[1] - (x[2] * x[2] - 1.0 / 3.0);
    let values: Vec<f64> = pts.iter().map(|p| f(p.xyz())).collect();
    write_map(&p.join("f.csv"), &pts, &values).unwrap();

    let out = needlet(
        &["analyze", "--input", "f.csv", "--out", "f.pyr", "--j-max", "3", "--format", "binary"],
        p,
    );
    assert!(out.status.success(), "{}", stderr(&out));
    std::fs::write(p.join("targets.csv"), "theta,phi\n0.4,1.0\n2.0,5.5\n").unwrap();
    let out = needlet(&["synth", "--input", "f.pyr", "--targets", "targets.csv", "--out", "s.csv"], p);
    assert!(out.status.success(), "{}", stderr(&out));
    for s in read_map(&p.join("s.csv"), false).unwrap() {
        assert!((s.value - f(s.point.xyz())).abs() < 1e-10);
    }

    // a map that is not on the analysis grid is rejected
    let out = needlet(&["analyze", "--input", "targets.csv", "--out", "bad.pyr"], p);
    assert_eq!(out.status.code(), Some(1));
    assert!(!p.join("bad.pyr").exists());
}

#[test]
fn denoise_kappa_zero_is_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let sys = NeedletSystem::new(2.0, 4).unwrap();
    let mut noisy = sys.zero_pyramid(PyramidTag::Noisy);
    for (j, lv) in noisy.levels.iter_mut().enumerate() {
        for (k, v) in lv.iter_mut().enumerate() {
            *v = ((j * 31 + k * 17) % 13) as f64 * 0.01 - 0.06;
        }
    }
    noisy.write(&p.join("noisy.bin"), PyramidFormat::Binary).unwrap();
    let out = needlet(
        &["denoise", "--input", "noisy.bin", "--out", "est.bin", "--n", "64", "--kappa", "0", "--format", "binary"],
        p,
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("J_n 3  t_n 1.25"), "{text}");
    assert_eq!(text.lines().filter(|l| l.trim_start().starts_with(char::is_numeric)).count(), 4);

    let mut expected = truncate(&noisy, 3);
    expected.tag = PyramidTag::Thresholded;
    assert_eq!(std::fs::read(p.join("est.bin")).unwrap(), expected.to_bytes());
    assert_eq!(CoefficientPyramid::read(&p.join("est.bin")).unwrap(), expected);
}

#[test]
fn malformed_pyramid_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let good = NeedletSystem::new(2.0, 1).unwrap().zero_pyramid(PyramidTag::Noisy).to_text();
    let bad = good.replacen("j_max=1", "j_max=x", 1);
    std::fs::write(p.join("bad.txt"), bad).unwrap();
    let out = needlet(&["denoise", "--input", "bad.txt", "--out", "o.txt", "--n", "4"], p);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("`j_max`"), "{}", stderr(&out));
    assert!(!p.join("o.txt").exists());
}

#[test]
fn config_file_values_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("run.toml"), "[frame]\nbandwidth = 3.0\nj_max = 2\n").unwrap();
    let from_file = stdout(&needlet(&["frame", "--config", "run.toml"], p));
    assert!(from_file.starts_with("bandwidth 3  j_max 2"), "{from_file}");
    let flagged = stdout(&needlet(&["frame", "--config", "run.toml", "--j-max", "1"], p));
    assert!(flagged.starts_with("bandwidth 3  j_max 1"), "{flagged}");

    std::fs::write(p.join("bad.toml"), "[frame]\nbandwith = 3.0\n").unwrap();
    let out = needlet(&["frame", "--config", "bad.toml"], p);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("bandwith"), "{}", stderr(&out));
}

#[test]
fn generate_observe_denoise_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let run = |args: &[&str]| {
        let o = needlet(args, p);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        stdout(&o)
    };
    let gen = run(&["generate", "--j-max", "5", "--m", "2", "--seed", "3", "--out", "clean.txt"]);
    assert!(gen.contains("seminorm 2.0"), "{gen}");
    run(&["observe", "--input", "clean.txt", "--n", "1024", "--seed", "4", "--out", "noisy.txt"]);
    let again = needlet(&["observe", "--input", "clean.txt", "--n", "1024", "--seed", "4", "--out", "noisy2.txt"], p);
    assert!(again.status.success());
    assert_eq!(std::fs::read(p.join("noisy.txt")).unwrap(), std::fs::read(p.join("noisy2.txt")).unwrap());
    let den = run(&["denoise", "--input", "noisy.txt", "--n", "1024", "--out", "est.txt"]);
    assert!(den.contains("J_n 5"), "{den}");
    let est = CoefficientPyramid::read(&p.join("est.txt")).unwrap();
    assert_eq!(est.tag, PyramidTag::Thresholded);
}

#[test]
fn bench_writes_reports_and_assertion_fails_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let args = [
        "bench", "--seed", "2", "--n-grid", "64,128,256,512", "--replications", "50", "--csv", "r.csv", "--report",
        "r.txt",
    ];
    let out = needlet(&args, p);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(p.join("r.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("n,risk_mean,risk_se,kept_fraction,alpha_theory,slope_fit"));
    assert_eq!(lines.count(), 4);
    assert!(std::fs::read_to_string(p.join("r.txt")).unwrap().contains("slope_fit"));

    let mut strict = args.to_vec();
    strict.extend(["--assert-rate", "--tolerance", "1e-9"]);
    assert_eq!(needlet(&strict, p).status.code(), Some(3));
}

#[test]
fn calibration_is_monotone_in_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let kappa = |gamma: &str| -> f64 {
        let out = needlet(
            &["calibrate", "--n-grid", "16,32,64,128", "--replications", "200", "--gamma", gamma],
            dir.path(),
        );
        assert!(out.status.success(), "{}", stderr(&out));
        stdout(&out).lines().next().unwrap().strip_prefix("kappa ").unwrap().parse().unwrap()
    };
    let loose = kappa("0.5");
    let tight = kappa("0.01");
    assert!(loose < tight, "{loose} vs {tight}");
}

#[test]
fn reference_bench_meets_rate_assertion() {
    let dir = tempfile::tempdir().unwrap();
    let out = needlet(&["bench", "--assert-rate", "--tolerance", "0.25", "--csv", "ref.csv"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}\n{}", stdout(&out), stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("ref.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}
