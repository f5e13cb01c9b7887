use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use color_core::net::Mlp;
use color_core::rng::derive_rng;

fn color(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_color"))
        .args(args)
        .env_remove("COLOR_OUT_DIR")
        .output()
        .expect("run color binary")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn mapgen(dir: &Path, count: usize, seed: u64, density: f64) {
    ok(&color(&[
        "mapgen",
        "--count",
        &count.to_string(),
        "--size",
        "200",
        "--density",
        &density.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        dir.to_str().unwrap(),
    ]));
}

/// Tiny run: two copies on two 2 m maps, short episodes, small batches.
fn write_config(dir: &Path, max_t_steps: u64, extra: &str) -> PathBuf {
    mapgen(&dir.join("maps"), 2, 3, 0.05);
    let text = format!(
        "[run]
mode = color
seed = 1
max_t_steps = {max_t_steps}
out_dir = out
name = t
metrics_every_s = 0.01

[maps]
train = maps

[env]
n = 2
timeout_steps = 40

[asl]
batch_size = 16
start_threshold = 50
replay_capacity = 1000

[vem]
or_init = 2
or_final = 1
decay_steps = 1000

[eval]
episodes = 3
{extra}
"
    );
    let p = dir.join("run.ini");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn mapgen_is_deterministic() {
    let t = tempfile::tempdir().unwrap();
    mapgen(&t.path().join("a"), 3, 9, 0.1);
    mapgen(&t.path().join("b"), 3, 9, 0.1);
    for k in 0..3 {
        let f = format!("map_{k:03}.txt");
        let a = std::fs::read(t.path().join("a").join(&f)).unwrap();
        let b = std::fs::read(t.path().join("b").join(&f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn mapgen_density_zero_has_only_border_walls() {
    let t = tempfile::tempdir().unwrap();
    mapgen(t.path(), 1, 0, 0.0);
    let text = std::fs::read_to_string(t.path().join("map_000.txt")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    let last = rows.len() - 1;
    for (r, row) in rows.iter().enumerate() {
        for (c, ch) in row.chars().enumerate() {
            let border = r == 0 || r == last || c == 0 || c == row.len() - 1;
            assert_eq!(ch == '#', border, "row {r} col {c}");
        }
    }
}

#[test]
fn train_with_t_equal_n_stops_after_one_iteration() {
    let t = tempfile::tempdir().unwrap();
    let cfg = write_config(t.path(), 2, "every_b_steps = 0");
    let stdout = ok(&color(&["train", "--config", cfg.to_str().unwrap(), "--seed", "4"]));
    assert!(stdout.contains("T_step = 2"), "{stdout}");
    let run = t.path().join("out/t-color-s4");
    let metrics = std::fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert!(metrics.lines().count() >= 2, "{metrics}");
    let echo = std::fs::read_to_string(run.join("config.ini")).unwrap();
    assert!(echo.contains("seed = 4"));
    assert!(echo.contains("gamma = 0.98"), "defaults are materialized");
    assert!(run.join("best.ckpt").exists() && run.join("report.txt").exists());
}

#[test]
fn out_dir_env_var_overrides_config() {
    let t = tempfile::tempdir().unwrap();
    let cfg = write_config(t.path(), 2, "every_b_steps = 0");
    let alt = t.path().join("elsewhere");
    let out = Command::new(env!("CARGO_BIN_EXE_color"))
        .args(["train", "--config", cfg.to_str().unwrap()])
        .env("COLOR_OUT_DIR", &alt)
        .output()
        .unwrap();
    ok(&out);
    assert!(alt.join("t-color-s1/metrics.csv").exists());
    assert!(!t.path().join("out").exists());
}

#[test]
fn trained_checkpoint_reevaluates_to_the_in_training_score() {
    let t = tempfile::tempdir().unwrap();
    let cfg = write_config(t.path(), 600, "every_b_steps = 100\nseed = 77");
    ok(&color(&["train", "--config", cfg.to_str().unwrap()]));
    let run = t.path().join("out/t-color-s1");

    let metrics = std::fs::read_to_string(run.join("metrics.csv")).unwrap();
    let mut prev = (0u64, 0u64);
    for line in metrics.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let cur = (f[1].parse().unwrap(), f[2].parse().unwrap());
        assert!(cur.0 >= prev.0 && cur.1 >= prev.1, "counters went backwards: {line}");
        prev = cur;
    }

    // The last evaluation row belongs to the final network, saved as latest.ckpt.
    let evals = std::fs::read_to_string(run.join("evals.csv")).unwrap();
    let last = evals.lines().last().unwrap();
    let in_training: f64 = last.rsplit(',').next().unwrap().parse().unwrap();
    let stdout = ok(&color(&[
        "eval",
        "--ckpt",
        run.join("latest.ckpt").to_str().unwrap(),
        "--maps",
        t.path().join("maps").to_str().unwrap(),
        "--episodes",
        "3",
        "--seed",
        "77",
        "--config",
        cfg.to_str().unwrap(),
    ]));
    let mean_line = stdout.lines().find(|l| l.starts_with("mean,")).unwrap();
    let rate: f64 = mean_line.split(',').nth(5).unwrap().parse().unwrap();
    assert!((rate - in_training).abs() < 1e-9, "eval {rate} vs in-training {in_training}");
}

#[test]
fn eval_rejects_wrong_network_shape() {
    let t = tempfile::tempdir().unwrap();
    mapgen(&t.path().join("maps"), 1, 0, 0.0);
    let ckpt = t.path().join("small.ckpt");
    Mlp::<f32>::new(&[32, 8, 5], &mut derive_rng(0, 0)).save(&ckpt).unwrap();
    let out = color(&[
        "eval",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--maps",
        t.path().join("maps").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("layer sizes"));
}

#[test]
fn bench_reports_each_n_and_rejects_zero_duration() {
    let t = tempfile::tempdir().unwrap();
    let cfg = write_config(t.path(), 600, "");
    let stdout = ok(&color(&["bench", "--config", cfg.to_str().unwrap(), "--duration", "0.05", "--n", "1,3"]));
    let rows: Vec<&str> = stdout.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    let f: Vec<&str> = rows[1].split(',').collect();
    assert_eq!(f[0], "3");
    let steps: u64 = f[2].parse().unwrap();
    assert_eq!(steps % 3, 0, "every copy steps once per batch");

    let out = color(&["bench", "--config", cfg.to_str().unwrap(), "--duration", "0"]);
    assert!(!out.status.success());
}
