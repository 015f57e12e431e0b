use std::fs;
use std::path::Path;
use std::process::Command;

use proptest::prelude::*;

use zs_seek::analysis::MetricsRow;
use zs_seek::harness::{parse_config, run_experiment, Overrides};

fn zs_seek(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_zs-seek"))
        .args(args)
        .env("ZS_SEEK_THREADS", "2")
        .output()
        .unwrap()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().into_string().unwrap(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn two_seeds_write_expected_rows() {
    let out = tempfile::tempdir().unwrap();
    let dir = out.path().to_str().unwrap();
    let res = zs_seek(&[
        "--seed",
        "1",
        "--seed",
        "2",
        "--rounds",
        "100",
        "--metrics-every",
        "10",
        "--out",
        dir,
    ]);
    assert_eq!(
        res.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    for seed in [1, 2] {
        let text = fs::read_to_string(out.path().join(format!("seed_{seed}.csv"))).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "k,alpha,cons_err_x,cons_err_y,ne_err_x,ne_err_y,max_residual"
        );
        assert_eq!(lines.len(), 1 + 10);
        let ks: Vec<u64> = lines[1..]
            .iter()
            .map(|l| MetricsRow::parse_csv_line(l).unwrap().k)
            .collect();
        assert!(ks.windows(2).all(|w| w[0] < w[1]));
    }
    assert!(out.path().join("summary.csv").exists());
}

#[test]
fn same_config_twice_is_byte_identical() {
    let cfg_dir = tempfile::tempdir().unwrap();
    let cfg_path = cfg_dir.path().join("run.cfg");
    fs::write(
        &cfg_path,
        "# short run\nrun.rounds = 300\nrun.seeds = 5, 6, 7\nrun.metrics_every = 50\n",
    )
    .unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let res = zs_seek(&[
            "--config",
            cfg_path.to_str().unwrap(),
            "--out",
            d.path().to_str().unwrap(),
        ]);
        assert_eq!(res.status.code(), Some(0));
    }
    let (fa, fb) = (read_dir_sorted(a.path()), read_dir_sorted(b.path()));
    assert_eq!(fa.len(), 4);
    assert_eq!(fa, fb);
}

#[test]
fn exit_codes() {
    assert_eq!(zs_seek(&["--mu", "-1"]).status.code(), Some(1));
    assert_eq!(zs_seek(&["--step-p", "0.4"]).status.code(), Some(1));
    assert_eq!(zs_seek(&["--scenario", "unknown"]).status.code(), Some(1));
    assert_eq!(
        zs_seek(&["--config", "/nonexistent/run.cfg"]).status.code(),
        Some(1)
    );

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "run.mu 0.1\n").unwrap();
    let res = zs_seek(&["--config", bad.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 1"));

    // output path is a regular file: fails at run time
    let file = dir.path().join("taken");
    fs::write(&file, "").unwrap();
    let res = zs_seek(&["--rounds", "10", "--out", file.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn custom_game_from_config() {
    let dir = tempfile::tempdir().unwrap();
    // f = x^2 - y^2 for every agent, two agents per network
    let text = format!(
        "game.scenario = custom\n\
         game.cost1 = 1, -1, 0, 0, 0, 0\ngame.cost1 = 1, -1, 0, 0, 0, 0\n\
         game.cost2 = 1, -1, 0, 0, 0, 0\ngame.cost2 = 1, -1, 0, 0, 0, 0\n\
         game.nash = 0, 0\n\
         topo.self_weights = 0.4, 0.6\n\
         run.rounds = 20000\nrun.metrics_every = 1000\nrun.seeds = 1\nrun.out = {}\n",
        dir.path().display()
    );
    let cfg = parse_config(&text, &Overrides::default()).unwrap();
    let summary = run_experiment(&cfg, Some(1)).unwrap();
    let last = summary.seeds[0].last;
    assert_eq!(last.k, 20000);
    assert!(last.ne_err_x < 0.05 && last.ne_err_y < 0.05, "{last:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn scalar_invariants_decide_validity(
        mu in -1.0f64..1.0,
        p in 0.0f64..1.5,
        rounds in 0u64..5,
    ) {
        let text = format!("run.mu = {mu:?}\nrun.step_p = {p:?}\nrun.rounds = {rounds}\n");
        let valid = mu > 0.0 && p > 0.5 && p <= 1.0 && rounds >= 1;
        match parse_config(&text, &Overrides::default()) {
            Ok(cfg) => {
                prop_assert!(valid);
                prop_assert_eq!(cfg.mu, mu);
                prop_assert_eq!(cfg.step_p, p);
            }
            Err(e) => {
                prop_assert!(!valid);
                prop_assert!(matches!(e.key(), Some("run.mu" | "run.step_p" | "run.rounds")));
            }
        }
    }
}
