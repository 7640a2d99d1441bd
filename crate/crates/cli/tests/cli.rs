use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TOY: &str = r#"
seed = 3

[world]
node_count_range = [2, 2]
other_uav_count = 0
mission_deadline = 60.0
departure_area = { min = { x = -18.0, y = -12.0 }, max = { x = -14.0, y = 12.0 } }
landing_area = { min = { x = 14.0, y = -12.0 }, max = { x = 18.0, y = 12.0 } }

[world.arena]
x_range = [-20.0, 20.0]
y_range = [-20.0, 20.0]
sensing_radius = 15.0

[train]
hidden = [8]
batch_size = 8
learning_starts = 50
max_steps = 300
total_episodes = 50

[jammer_train]
hidden = [8]
batch_size = 8
learning_starts = 50
max_steps = 200
total_episodes = 10
"#;

const INTELLIGENT: &str = r#"
[jammer]
kind = "intelligent"
position = { x = 0.0, y = -18.0 }
destination = { x = 0.0, y = 18.0 }
altitude = 30.0
tx_power = 1e-4
deadline = 60.0
"#;

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uavjam")).args(args).output().unwrap()
}

fn ok(out: &Output) -> String {
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(out.status.success(), "stderr: {}\nstdout: {stdout}", String::from_utf8_lossy(&out.stderr));
    stdout
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_then_eval_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "toy.toml", TOY);
    let out = dir.path().join("run");
    let stdout = ok(&run(&["train-uav", "--config", s(&cfg), "--out", s(&out)]));
    assert!(stdout.contains("training threshold 3.5"));
    for f in ["uav.ckpt.json", "uav_curve.csv", "config.toml"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let curve = fs::read_to_string(out.join("uav_curve.csv")).unwrap();
    assert!(curve.lines().count() > 1);

    // The echo alone reproduces the run.
    let echo = out.join("config.toml");
    let again = dir.path().join("again");
    ok(&run(&["train-uav", "--config", s(&echo), "--out", s(&again)]));
    assert_eq!(fs::read(out.join("uav.ckpt.json")).unwrap(), fs::read(again.join("uav.ckpt.json")).unwrap());

    let ckpt = out.join("uav.ckpt.json");
    let eval_out = dir.path().join("eval");
    let stdout = ok(&run(&[
        "eval", "--config", s(&cfg), "--out", s(&eval_out), "--uav-checkpoint", s(&ckpt), "--episodes", "1", "--export-traj",
    ]));
    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(eval_out.join("metrics.json")).unwrap()).unwrap();
    for key in ["sr", "dr", "tr", "cr", "mean_reward", "episodes"] {
        assert!(metrics.get(key).is_some(), "metrics lacks {key}");
    }
    assert_eq!(metrics["episodes"], 1);
    assert!(stdout.contains("\"episodes\":1"));
    let traj = fs::read_to_string(eval_out.join("trajectories/episode_00000.csv")).unwrap();
    assert_eq!(traj.lines().next().unwrap(), "step,actor,x,y,h,vx,vy,scheduled_node,sinr,data_delivered");

    let par = dir.path().join("par");
    ok(&run(&["eval", "--config", s(&cfg), "--out", s(&par), "--uav-checkpoint", s(&ckpt), "--episodes", "4", "--workers", "2"]));
}

#[test]
fn intelligent_pipeline_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let clean = write_config(dir.path(), "toy.toml", TOY);
    let attack = write_config(dir.path(), "attack.toml", &format!("{TOY}{INTELLIGENT}"));
    let defense = write_config(
        dir.path(),
        "defense.toml",
        &format!("{TOY}{INTELLIGENT}\n[defense]\nmode = \"intelligent\"\nvelocity_filter = true\nmission_deadline = 100.0\n"),
    );
    let uav_dir = dir.path().join("uav");
    ok(&run(&["train-uav", "--config", s(&clean), "--out", s(&uav_dir)]));
    let uav = uav_dir.join("uav.ckpt.json");

    let jam_dir = dir.path().join("jammer");
    ok(&run(&["train-jammer", "--config", s(&attack), "--out", s(&jam_dir), "--uav-checkpoint", s(&uav)]));
    let jammer = jam_dir.join("jammer.ckpt.json");
    assert!(jam_dir.join("jammer_curve.csv").exists());

    let def_dir = dir.path().join("defense");
    let stdout = ok(&run(&["train-defense", "--config", s(&defense), "--out", s(&def_dir), "--jammer-checkpoint", s(&jammer)]));
    assert!(stdout.contains("mission deadline 100"));

    let ev = dir.path().join("eval");
    ok(&run(&[
        "eval", "--config", s(&defense), "--out", s(&ev), "--uav-checkpoint", s(&def_dir.join("uav.ckpt.json")),
        "--jammer-checkpoint", s(&jammer), "--episodes", "2",
    ]));

    // The undefended policy has no jammer block, so it cannot drive the defended scenario.
    let bad = run(&["eval", "--config", s(&defense), "--out", s(&ev), "--uav-checkpoint", s(&uav), "--episodes", "1"]);
    assert_eq!(bad.status.code(), Some(3));
}

#[test]
fn higher_threshold_training_echoes_boosted_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{TOY}\n[defense]\nmode = \"higher_threshold\"\nthreshold_boost = 0.4\n").replace("max_steps = 300", "max_steps = 60");
    let cfg = write_config(dir.path(), "hst.toml", &body);
    let stdout = ok(&run(&["train-uav", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]));
    assert!(stdout.contains("training threshold 3.9"), "{stdout}");
    assert!(stdout.contains("mode = \"higher_threshold\""));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let unknown = write_config(dir.path(), "typo.toml", "[train]\nlearning_rate = 1e-3\n");
    let r = run(&["train-uav", "--config", s(&unknown), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2));
    let invalid = write_config(dir.path(), "bad.toml", "[train]\nbatch_size = 0\n");
    let r = run(&["train-uav", "--config", s(&invalid), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("train.batch_size"));
    let r = run(&["train-uav", "--config", s(&dir.path().join("absent.toml")), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2));
    // train-uav refuses the intelligent defense mode.
    let intel = write_config(dir.path(), "intel.toml", "[defense]\nmode = \"intelligent\"\n");
    assert_eq!(run(&["train-uav", "--config", s(&intel), "--out", s(&out)]).status.code(), Some(2));
}

#[test]
fn checkpoint_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "toy.toml", TOY);
    let out = dir.path().join("o");
    let missing = dir.path().join("missing.ckpt.json");
    let r = run(&["eval", "--config", s(&cfg), "--out", s(&out), "--uav-checkpoint", s(&missing)]);
    assert_eq!(r.status.code(), Some(3));
    let garbage = write_config(dir.path(), "garbage.ckpt.json", "{\"not\": \"a checkpoint\"}");
    let r = run(&["eval", "--config", s(&cfg), "--out", s(&out), "--uav-checkpoint", s(&garbage)]);
    assert_eq!(r.status.code(), Some(3));
    // No checkpoint at all is a configuration problem.
    assert_eq!(run(&["eval", "--config", s(&cfg), "--out", s(&out)]).status.code(), Some(2));
}

fn read_region(path: &Path) -> Vec<(f64, f64, bool)> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x,y,reliable");
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2] == "1")
        })
        .collect()
}

#[test]
fn region_csv_layout_and_subset() {
    let dir = tempfile::tempdir().unwrap();
    let jammed_dir = dir.path().join("jammed");
    let cfg = configs().join("region.toml");
    ok(&run(&["region", "--config", s(&cfg), "--out", s(&jammed_dir), "--resolution", "2"]));
    let jammed = read_region(&jammed_dir.join("region.csv"));
    // 80 m arena at 2 m cells, row-major by y then x.
    assert_eq!(jammed.len(), 40 * 40);
    assert!(jammed[0].1 == jammed[39].1 && jammed[0].0 < jammed[1].0 && jammed[40].1 > jammed[0].1);

    let text = fs::read_to_string(&cfg).unwrap();
    let clean_cfg = write_config(dir.path(), "clean.toml", &text.replace("kind = \"continuous\"", "kind = \"none\""));
    let clean_dir = dir.path().join("clean");
    ok(&run(&["region", "--config", s(&clean_cfg), "--out", s(&clean_dir), "--resolution", "2"]));
    let clean = read_region(&clean_dir.join("region.csv"));
    assert_eq!(clean.len(), jammed.len());
    assert!(jammed.iter().zip(&clean).all(|(j, c)| !j.2 || c.2));
    assert!(jammed.iter().filter(|c| c.2).count() < clean.iter().filter(|c| c.2).count());

    let fine = dir.path().join("fine");
    ok(&run(&["region", "--config", s(&cfg), "--out", s(&fine)]));
    assert_eq!(read_region(&fine.join("region.csv")).len(), 80 * 80);
}

#[test]
fn periodic_region_off_window_matches_clean() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("region.toml")).unwrap();
    let periodic = text
        .replace("kind = \"continuous\"", "kind = \"periodic\"\nperiod_on = 40.0")
        .replace("tx_power = 3.3333333333333335e-4", "tx_power = 5e-4");
    let p = write_config(dir.path(), "periodic.toml", &periodic);
    let clean = write_config(dir.path(), "clean.toml", &text.replace("kind = \"continuous\"", "kind = \"none\""));
    let grid = |cfg: &Path, at: &str, name: &str| {
        let o = dir.path().join(name);
        ok(&run(&["region", "--config", s(cfg), "--out", s(&o), "--resolution", "4", "--at", at]));
        fs::read_to_string(o.join("region.csv")).unwrap()
    };
    let off = grid(&p, "45", "off");
    let on = grid(&p, "10", "on");
    assert_eq!(off, grid(&clean, "0", "clean"));
    assert_ne!(on, off);
}
