use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dqw(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dqw"))
        .current_dir(dir)
        .env_remove("DQW_THREADS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn scan_is_identical_across_thread_counts() {
    let dirs: Vec<_> = ["1", "4"]
        .iter()
        .map(|threads| {
            let dir = tempfile::tempdir().unwrap();
            fs::write(
                dir.path().join("scan.toml"),
                "grid_size = 20\nsteps = 160\nnoise_kind = \"spatial\"\nnoise_ratio = 0.3\nrealizations = 5\n",
            )
            .unwrap();
            let o = dqw(
                dir.path(),
                &["--config", "scan.toml", "--threads", threads, "--out", "o", "--seed", "7", "scan", "--grid-sizes", "20,24,30"],
            );
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            dir
        })
        .collect();
    let a = files(&dirs[0].path().join("o"));
    let b = files(&dirs[1].path().join("o"));
    assert!(a.iter().any(|(n, _)| n == "scan.csv"));
    assert!(a.iter().any(|(n, _)| n == "scaling.svg"));
    assert_eq!(a.len(), b.len());
    for ((na, ba), (nb, bb)) in a.iter().zip(&b) {
        assert_eq!(na, nb);
        assert!(ba == bb, "{na} differs between thread counts");
    }
}

#[test]
fn threads_env_var_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_dqw"))
        .current_dir(dir.path())
        .env("DQW_THREADS", "2")
        .args(["--out", "o", "run"])
        .output()
        .unwrap();
    assert!(o.status.success());
    let text = fs::read_to_string(dir.path().join("o/series_M200_r0.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("j,P"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("j1 = 82"));

    let o = Command::new(env!("CARGO_BIN_EXE_dqw"))
        .current_dir(dir.path())
        .env("DQW_THREADS", "many")
        .arg("run")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("odd.toml"), "grid_size = 201\n").unwrap();
    fs::write(dir.path().join("extra.toml"), "grid_size = 20\nspeed = 3\n").unwrap();
    fs::write(dir.path().join("neg.toml"), "grid_size = 20\nnoise_ratio = -1.0\n").unwrap();

    let o = dqw(dir.path(), &["--config", "odd.toml", "run"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid_size must be even"));
    for args in [
        &["--config", "extra.toml", "run"][..],
        &["--config", "neg.toml", "ensemble"],
        &["--config", "missing.toml", "run"],
        &["scan", "--grid-sizes", "20,21"],
        &["plot", "--kind", "pie", "x.csv"],
        &["frobnicate"],
    ] {
        let o = dqw(dir.path(), args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn runtime_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = dqw(dir.path(), &["plot", "--kind", "series", "absent.csv"]);
    assert_eq!(o.status.code(), Some(3));
    fs::write(dir.path().join("junk.csv"), "not,a,series\n").unwrap();
    let o = dqw(dir.path(), &["plot", "--kind", "series", "junk.csv"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn snapshot_then_plot() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.toml"), "grid_size = 30\nsteps = 100\nsnapshots = [\"j1\", 10]\n").unwrap();
    let o = dqw(dir.path(), &["--config", "s.toml", "--out", "o", "snapshot", "--binary"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("o");
    assert!(out.join("dist_M30_j10.bin").exists());
    assert!(out.join("dist_M30_j10.meta.toml").exists());
    assert!(out.join("heatmap_M30.svg").exists());

    let o = dqw(dir.path(), &["--out", "p", "plot", "--kind", "heatmap", "o/dist_M30_j10.bin"]);
    assert!(o.status.success());
    let o = dqw(
        dir.path(),
        &["--out", "p", "plot", "--kind", "rescaled_series", "--rescale", "logN", "o/ensemble_M30.csv"],
    );
    assert!(o.status.success());
    let svg = fs::read_to_string(dir.path().join("p/rescaled_series.svg")).unwrap();
    assert!(svg.contains("ln N"));
}
