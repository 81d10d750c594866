use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use graphprompt::graphdata::{synthetic_collection, write_tu_dataset, SyntheticConfig};

fn gp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphprompt"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Writes a small synthetic dataset and a config pointing at it.
fn workspace(dir: &Path, extra: &str) -> PathBuf {
    let c = synthetic_collection("SYN", &SyntheticConfig { num_graphs: 24, ..Default::default() }, 11).unwrap();
    write_tu_dataset(&c, dir.join("data").join("SYN"), "SYN").unwrap();
    let cfg = dir.join("exp.cfg");
    fs::write(
        &cfg,
        format!(
            "dataset = SYN\ndata_dir = {}\nout_dir = {}\nepochs = 3\nnum_tasks = 3\nquery_per_class = 3\nmax_steps = 5\n{extra}",
            dir.join("data").display(),
            dir.join("out").display()
        ),
    )
    .unwrap();
    cfg
}

fn read_tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn selfcheck_passes_on_a_clean_build() {
    let o = gp(&["selfcheck"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains(" 0 failed"));
}

#[test]
fn injected_fault_is_named() {
    let o = gp(&["selfcheck", "--inject-fault"]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("FAIL  gradcheck faulty_square"), "{}", stdout(&o));
}

#[test]
fn empty_registry_fails() {
    let o = gp(&["selfcheck", "--empty"]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn gradcheck_subcommand() {
    assert_eq!(gp(&["gradcheck"]).status.code(), Some(0));
    assert_eq!(gp(&["gradcheck", "--step", "0"]).status.code(), Some(1));
}

#[test]
fn validation_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = workspace(dir.path(), "num_tasks = 0\n");
    let o = gp(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("num_tasks"), "{}", stderr(&o));

    fs::write(&cfg, "dataset = SYN\nwidth = 3\ncolour = red\n").unwrap();
    let o = gp(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("width") && stderr(&o).contains("colour"), "{}", stderr(&o));

    let o = gp(&["run", "--config", "/nonexistent/exp.cfg"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(gp(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn missing_dataset_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = workspace(dir.path(), "dataset = NOPE\n");
    let o = gp(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("NOPE"), "{}", stderr(&o));
}

#[test]
fn diverging_training_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = workspace(dir.path(), "lr = 1e300\nepochs = 20\n");
    let o = gp(&["pretrain", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}{}", stdout(&o), stderr(&o));
}

#[test]
fn run_writes_reports_and_replays_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = workspace(dir.path(), "mode = single, layerwise\n");
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let o = gp(&["run", "--config", cfg.to_str().unwrap(), "--seed", "5", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let (a, b) = (read_tree(&out_a), read_tree(&out_b));
    let names: Vec<String> = a.iter().map(|(p, _)| p.display().to_string()).collect();
    assert!(names.contains(&"SYN/summary.csv".to_string()), "{names:?}");
    assert!(names.contains(&"SYN/link_pred_seed5/encoder.gpck".to_string()), "{names:?}");
    assert!(names.contains(&"SYN/link_pred_seed5/node_k1_layerwise.csv".to_string()), "{names:?}");
    assert_eq!(a, b);

    let summary = String::from_utf8(a.iter().find(|(p, _)| p.ends_with("summary.csv")).unwrap().1.clone()).unwrap();
    assert_eq!(summary.lines().count(), 3, "{summary}");
}

#[test]
fn config_keys_work_as_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = workspace(dir.path(), "");
    let o = gp(&["pretrain", "--config", cfg.to_str().unwrap(), "--epochs", "2", "--pretrain-kind", "dgi"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let curve = fs::read_to_string(dir.path().join("out/SYN/dgi_seed0/pretrain_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 4, "{curve}");
}
