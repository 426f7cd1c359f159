use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lomap(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lomap"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn meta_hash(dir: &Path) -> String {
    let text = fs::read_to_string(dir.join("run.meta")).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix("config_hash="))
        .unwrap()
        .to_string()
}

#[test]
fn gen_data_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    for name in ["a.lmpd", "b.lmpd"] {
        let out = lomap(d, &["gen-data", "--episodes", "20", "--seed", "7", "--out", name]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = fs::read(d.join("a.lmpd")).unwrap();
    assert_eq!(a, fs::read(d.join("b.lmpd")).unwrap());
    assert_eq!(&a[..4], b"LMPD");
    lomap(d, &["gen-data", "--episodes", "20", "--seed", "8", "--out", "c.lmpd"]);
    assert_ne!(a, fs::read(d.join("c.lmpd")).unwrap());
}

#[test]
fn parameter_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(code(&lomap(d, &["gen-data", "--episodes", "0"])), 2);
    assert_eq!(code(&lomap(d, &["gen-data", "--set", "bogus=1"])), 2);
    assert_eq!(code(&lomap(d, &["gen-data", "--world", "ocean"])), 2);
    fs::write(d.join("run.cfg"), "episodes=5\nunknown_key=3\n").unwrap();
    assert_eq!(code(&lomap(d, &["gen-data", "--config", "run.cfg"])), 2);
    assert_eq!(code(&lomap(d, &["gap", "--dims", "4,16"])), 2);
    assert_eq!(code(&lomap(d, &["gap", "--dims", "4,8,16"])), 2);
    assert_eq!(code(&lomap(d, &["train"])), 2);
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("run.cfg"), "# small run\nepisodes=5\nnoise=0.1\n").unwrap();
    let out = lomap(d, &["gen-data", "--config", "run.cfg", "--episodes", "7", "--out", "x.lmpd"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("(7 rows)"));
}

#[test]
fn corrupt_inputs_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(code(&lomap(d, &["gen-data", "--episodes", "10", "--out", "ok.lmpd"])), 0);
    let mut bytes = fs::read(d.join("ok.lmpd")).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    fs::write(d.join("bad.lmpd"), &bytes).unwrap();
    assert_eq!(code(&lomap(d, &["train", "--data", "bad.lmpd", "--steps", "1"])), 3);
    assert_eq!(code(&lomap(d, &["train", "--data", "missing.lmpd"])), 3);
    fs::write(d.join("maze.txt"), "###\n#S#\n###\n").unwrap();
    assert_eq!(code(&lomap(d, &["plot", "--set", "maze=maze.txt"])), 3);
}

#[test]
fn train_plan_eval_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(code(&lomap(d, &["gen-data", "--episodes", "40", "--out", "d.lmpd"])), 0);
    let out = lomap(
        d,
        &["train", "--data", "d.lmpd", "--steps", "0", "--model", "both", "--set", "hidden=16", "--out", "tr"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["denoiser.lmpc", "guide.lmpc", "index.lmpi", "losses.csv", "run.meta"] {
        assert!(d.join("tr").join(f).exists(), "{f}");
    }
    let losses = fs::read_to_string(d.join("tr/losses.csv")).unwrap();
    assert_eq!(losses.trim(), "model,epoch,loss,config_hash");

    let out = lomap(
        d,
        &[
            "plan", "--denoiser", "tr/denoiser.lmpc", "--guide", "tr/guide.lmpc", "--data", "d.lmpd", "--set",
            "index=tr/index.lmpi", "--episodes", "2", "--dump", "--out", "pl",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let hash = meta_hash(&d.join("pl"));
    let episodes = fs::read_to_string(d.join("pl/episodes.csv")).unwrap();
    let lines: Vec<&str> = episodes.lines().collect();
    assert_eq!(lines[0], "episode,success,return,steps,collided,config_hash");
    assert_eq!(lines.len(), 3);
    assert!(lines[1..].iter().all(|l| l.ends_with(&hash)));

    let out = lomap(
        d,
        &[
            "eval", "--denoiser", "tr/denoiser.lmpc", "--data", "d.lmpd", "--pairs", "2", "--plan-counts", "1,2",
            "--out", "ev",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = fs::read_to_string(d.join("ev/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 5);
    assert!(metrics.starts_with("method,plans,artifact_ratio,pair_collision_rate,realism,dynamic_mse,config_hash"));
    assert_eq!(code(&lomap(d, &["eval", "--denoiser", "tr/denoiser.lmpc", "--data", "d.lmpd", "--pairs", "0"])), 2);
}

#[test]
fn index_from_another_run_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    lomap(d, &["gen-data", "--episodes", "40", "--out", "d.lmpd"]);
    for (dir, lr) in [("a", "1"), ("b", "2")] {
        let out = lomap(
            d,
            &["train", "--data", "d.lmpd", "--steps", "0", "--set", "hidden=8", "--set", &format!("lr=0.00{lr}"), "--out", dir],
        );
        assert_eq!(code(&out), 0);
    }
    let out = lomap(
        d,
        &["plan", "--denoiser", "a/denoiser.lmpc", "--data", "d.lmpd", "--set", "index=b/index.lmpi", "--episodes", "1"],
    );
    assert_eq!(code(&out), 3);
}

#[test]
fn gap_rows_and_figure() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = lomap(d, &["gap", "--samples", "400", "--trials", "2", "--dims", "2,8,32", "--out", "g"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(d.join("g/gap.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[1..4].iter().all(|l| l.starts_with("data,")));
    assert!(lines[4].starts_with("fit,") || lines[4].starts_with("degenerate,"));
    let svg = fs::read_to_string(d.join("g/gap.svg")).unwrap();
    assert!(svg.contains("<svg") && svg.contains(&meta_hash(&d.join("g"))));
}

#[test]
fn plot_walls_only_and_bounds() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(code(&lomap(d, &["plot", "--out", "p"])), 0);
    let svg = fs::read_to_string(d.join("p/maze.svg")).unwrap();
    assert!(svg.contains("<rect") && !svg.contains("#FF0000"));
    fs::write(d.join("t.csv"), "episode,t,x,y\n0,0,1.5,1.5\n0,1,-4,1.5\n").unwrap();
    assert_eq!(code(&lomap(d, &["plot", "--trajectories", "t.csv"])), 3);
}
