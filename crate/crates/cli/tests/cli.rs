use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_crowdtrack"));
    c.env("SOURCE_DATE_EPOCH", "0").env_remove("CROWDTRACK_JOBS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = run(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn configs(dir: &Path, scene: &str, noise: &str) -> (PathBuf, PathBuf) {
    let (s, n) = (dir.join("scene.cfg"), dir.join("noise.cfg"));
    fs::write(&s, scene).unwrap();
    fs::write(&n, noise).unwrap();
    (s, n)
}

fn simulate(dir: &Path, name: &str, scene: &str, noise: &str) -> PathBuf {
    let (s, n) = configs(dir, scene, noise);
    let out = dir.join(name);
    ok(&["simulate", "--scene", p(&s), "--noise", p(&n), "--out", p(&out)]);
    out
}

const SCENE: &str = "seed = 11\nnum_pedestrians = 12\nduration = 8\n";

#[test]
fn simulate_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let a = simulate(tmp.path(), "a", SCENE, "");
    let b = simulate(tmp.path(), "b", SCENE, "");
    for f in ["gt.txt", "det.txt", "emb.txt", "truth.txt", "cam.cfg", "scene.cfg", "noise.cfg"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert!(a.join("simulate.manifest.json").exists());
}

#[test]
fn zero_noise_detections_equal_ground_truth() {
    let tmp = TempDir::new().unwrap();
    let noise = "center_jitter = 0\nheight_jitter = 0\nmiss_rate = 0\nocclusion_miss_rate = 0\nfalse_positives = 0\nembedding_noise = 0\n";
    let seq = simulate(tmp.path(), "s", SCENE, noise);
    let boxes = |f: &str| -> Vec<String> {
        fs::read_to_string(seq.join(f))
            .unwrap()
            .lines()
            .map(|l| {
                let v: Vec<&str> = l.split(',').collect();
                format!("{},{}", v[0], v[2..6].join(","))
            })
            .collect()
    };
    let (mut gt, mut det) = (boxes("gt.txt"), boxes("det.txt"));
    gt.sort();
    det.sort();
    assert!(!gt.is_empty());
    assert_eq!(gt, det);
}

#[test]
fn missing_config_is_an_error() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nope.cfg");
    let err = fails(&["simulate", "--scene", p(&missing), "--noise", p(&missing), "--out", p(&tmp.path().join("o"))]);
    assert!(err.contains("nope.cfg"), "{err}");
}

#[test]
fn invalid_config_value_is_an_error() {
    let tmp = TempDir::new().unwrap();
    let (s, n) = configs(tmp.path(), "num_pedestrians = many\n", "");
    fails(&["simulate", "--scene", p(&s), "--noise", p(&n), "--out", p(&tmp.path().join("o"))]);
}

#[test]
fn tracking_options() {
    let tmp = TempDir::new().unwrap();
    let seq = simulate(tmp.path(), "s", SCENE, "");
    let (cam, det, emb) = (seq.join("cam.cfg"), seq.join("det.txt"), seq.join("emb.txt"));
    let res = tmp.path().join("run/res.txt");
    let base = ["track", "--cam", p(&cam), "--det", p(&det), "--out", p(&res)];

    let err = fails(&[&base[..], &["--model", "kalman9"]].concat());
    assert!(err.contains("kalman9"), "{err}");
    let err = fails(&base);
    assert!(err.contains("--no-appearance"), "{err}");

    let stdout = ok(&[&base[..], &["--no-appearance"]].concat());
    assert!(stdout.starts_with("Phys-3D"));
    let manifest = fs::read_to_string(tmp.path().join("run/track.manifest.json")).unwrap();
    assert!(manifest.contains("\"use_appearance\": false"));

    let stdout = ok(&[&base[..], &["--emb", p(&emb), "--model", "cv8d"]].concat());
    assert!(stdout.starts_with("CV-8D"));
    assert!(tmp.path().join("run/counts.txt").exists());
}

#[test]
fn evaluate_ground_truth_against_itself() {
    let tmp = TempDir::new().unwrap();
    let seq = simulate(tmp.path(), "s", SCENE, "");
    fs::write(seq.join("counts.txt"), fs::read(seq.join("truth.txt")).unwrap()).unwrap();
    let out = tmp.path().join("eval");
    let gt = seq.join("gt.txt");
    ok(&["evaluate", "--gt", p(&gt), "--res", p(&gt), "--out", p(&out), "--name", "5"]);
    let csv = fs::read_to_string(out.join("eval.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "Video,MOTA,MOTP,IDF1,IDP,IDR,IDSW,Matches,FP,Misses,FAF,Precision,Recall,MT,PT,ML,LC,RC,TC,TV,MAPE"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!((row[0], row[1], row[3], row[6]), ("5", "100.00", "100.00", "0"));
    assert_eq!(row[20], "0.00");
}

#[test]
fn evaluate_rejects_results_beyond_the_ground_truth() {
    let tmp = TempDir::new().unwrap();
    let gt = tmp.path().join("gt.txt");
    let res = tmp.path().join("res.txt");
    fs::write(&gt, "1,1,10,10,5,5,1,-1,-1,-1\n").unwrap();
    fs::write(&res, "1,1,10,10,5,5,1,-1,-1,-1\n9,1,10,10,5,5,1,-1,-1,-1\n").unwrap();
    fails(&["evaluate", "--gt", p(&gt), "--res", p(&res), "--truth-count", "1", "--counts", p(&gt)]);
}

#[test]
fn sweep_and_report_need_inputs() {
    let tmp = TempDir::new().unwrap();
    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let out = tmp.path().join("out");
    let err = fails(&["sweep", "--sequences", p(&empty), "--out", p(&out)]);
    assert!(err.contains("no sequences"), "{err}");
    fails(&["report", "--runs", p(&empty)]);
    fs::create_dir(empty.join("run")).unwrap();
    let err = fails(&["report", "--runs", p(&empty)]);
    assert!(err.contains("manifest"), "{err}");
}

#[test]
fn sweep_ranks_by_error() {
    let tmp = TempDir::new().unwrap();
    let seqs = tmp.path().join("seqs");
    fs::create_dir(&seqs).unwrap();
    for seed in [3, 4] {
        let scene = format!("seed = {seed}\nnum_pedestrians = 8\nduration = 8\n");
        simulate(&seqs, &format!("seq-{seed}"), &scene, "");
    }
    let out = tmp.path().join("sweep");
    ok(&["sweep", "--sequences", p(&seqs), "--out", p(&out), "--grid", "start:0.05,0.1 end:0.2,0.3"]);
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 4 + 2);
    assert!(rows.windows(2).all(|w| (w[0][2], w[0][3]) <= (w[1][2], w[1][3])));
    let last = rows.last().unwrap();
    assert_eq!(last[0], last[1]);
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if !path.to_string_lossy().ends_with(".manifest.json") {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn benchmark_is_independent_of_jobs() {
    let tmp = TempDir::new().unwrap();
    let run = |jobs: &str| {
        let out = tmp.path().join(format!("bench-{jobs}"));
        ok(&[
            "benchmark", "--out", p(&out), "--sequences", "3", "--min-pedestrians", "8", "--max-pedestrians", "12",
            "--models", "ca12d,phys3d", "--jobs", jobs,
        ]);
        out
    };
    let (a, b) = (run("1"), run("3"));
    let ta = tree(&a);
    assert!(ta.iter().any(|(f, _)| f.ends_with("report.md")));
    assert!(ta.iter().any(|(f, _)| f.ends_with("runs/phys3d-seq-03/res.txt")));
    assert_eq!(ta, tree(&b));
    let report = fs::read_to_string(a.join("report.csv")).unwrap();
    assert!(report.starts_with("Model,MAE,RMSE,MAPE(%),ME\nCA-12D,"));
}
