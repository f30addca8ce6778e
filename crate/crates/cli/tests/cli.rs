use std::path::Path;
use std::process::Command;

const CONFIG: &str = r#"
episodes = 3
runs = 2
seed = 1
out_dir = "OUT"

[env]
name = "cartpole"

[agent]
gamma = 0.99
learning_rate = 1e-3
batch_size = 8
start_epsilon = 1.0
stop_epsilon = 1e-3
epsilon_decay = 1e-3
max_buffer_size = 500
min_buffer_size = 10
copy_step = { steps = 25 }

[lcr]
K = 2
lcr_batch_size = 20
gradient_steps = 2
lcr_learning_rate = 1e-4
"#;

fn lcr(args: &[&str]) -> (bool, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_lcr")).args(args).output().unwrap();
    (
        out.status.success(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    let text = CONFIG.replace("OUT", &dir.join("out").display().to_string());
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn train_then_dump_representations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let (ok, stdout, stderr) = lcr(&["train", "--config", &cfg]);
    assert!(ok, "{stderr}");
    let metrics = Path::new(stdout.trim());
    assert!(metrics.ends_with("metrics.csv"));
    let text = std::fs::read_to_string(metrics).unwrap();
    assert!(text.starts_with(
        "run_id,seed,episode,total_env_steps,episode_return,epsilon,mean_td_loss,lcr_loss_first,lcr_loss_last"
    ));
    assert_eq!(text.lines().count(), 1 + 2 * 3);

    let model = dir.path().join("out/model_run1.bin");
    let repr = dir.path().join("repr.csv");
    let (ok, _, stderr) = lcr(&[
        "dump-repr",
        "--config",
        &cfg,
        "--model",
        &model.display().to_string(),
        "--trajectories",
        "3",
        "--out",
        &repr.display().to_string(),
    ]);
    assert!(ok, "{stderr}");
    let header = std::fs::read_to_string(&repr).unwrap();
    assert!(header.starts_with("trajectory_id,step,phi_1,"));
}

#[test]
fn seed_override_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let run = |seed: &str, out: &str| {
        let out = dir.path().join(out).display().to_string();
        let (ok, stdout, stderr) = lcr(&["--seed", seed, "train", "--config", &cfg, "--out", &out]);
        assert!(ok, "{stderr}");
        std::fs::read_to_string(stdout.trim()).unwrap()
    };
    let (a, b, c) = (run("5", "a"), run("5", "b"), run("6", "c"));
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.lines().nth(1).unwrap().starts_with("0,5,0,"));
}

#[test]
fn sweep_prints_one_file_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let (ok, stdout, stderr) = lcr(&["sweep", "--config", &cfg, "--param", "K", "--values", "2,4"]);
    assert!(ok, "{stderr}");
    let files: Vec<&str> = stdout.lines().collect();
    assert_eq!(files.len(), 2);
    assert!(files[0].ends_with("K_2.csv") && files[1].ends_with("K_4.csv"));
    assert!(files.iter().all(|f| Path::new(f).exists()));
}

#[test]
fn bad_input_fails_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let (ok, _, stderr) = lcr(&["sweep", "--config", &cfg, "--param", "gamma", "--values", "0.5"]);
    assert!(!ok);
    assert!(stderr.contains("unknown sweep parameter"), "{stderr}");
    let (ok, _, stderr) = lcr(&["train", "--config", "/nonexistent/x.toml"]);
    assert!(!ok);
    assert!(stderr.starts_with("error:"), "{stderr}");
    std::fs::write(dir.path().join("bad.toml"), "episodes = \"many\"").unwrap();
    let (ok, _, stderr) = lcr(&["train", "--config", &dir.path().join("bad.toml").display().to_string()]);
    assert!(!ok);
    assert!(stderr.contains("bad.toml"), "{stderr}");
}
