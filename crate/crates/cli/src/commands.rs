use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde_json::json;

use crowdtrack_core::counting::{count_sequence, mirrored_line_count, CountSummary};
use crowdtrack_core::io::{
    assemble_detections, detections_to_embeddings, detections_to_records, format_counts, outputs_to_records,
    parse_counts, read_embeddings, read_mot, records_to_trajectories, trajectories_to_records,
    write_mot, KeyValueConfig, RunSettings, SequenceInfo,
};
use crowdtrack_core::metrics::{aligned_table, clear_mot, counting_metrics, sequence_table_csv, sequence_table_text, CountReport, SequenceRow, Trajectories};
use crowdtrack_core::pipeline::{ablation_grid, band_sweep, par_map, rank_sweep, BenchmarkConfig, EVAL_IOU};
use crowdtrack_core::simulator::{generate, NoiseConfig, SceneConfig, SimulatedSequence};
use crowdtrack_core::{run_sequence, Camera64, Detection64, FrameOutput64, MotionModelKind};

use crate::manifest::RunManifest;
use crate::{BenchmarkArgs, EvaluateArgs, ReportArgs, SimulateArgs, SweepArgs, TrackArgs, TrackingOptions};

pub const ENV_PREFIX: &str = "CROWDTRACK_";

const GRID_STARTS: [f64; 5] = [0.05, 0.1, 0.15, 0.2, 0.3];
const GRID_ENDS: [f64; 6] = [0.15, 0.2, 0.25, 0.3, 0.35, 0.4];

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn parent_of(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_config<C: KeyValueConfig>(path: &Path) -> Result<C> {
    C::read(path, Some(ENV_PREFIX)).with_context(|| format!("reading {}", path.display()))
}

fn f2(v: f64) -> String {
    format!("{v:.2}")
}

/// Writes gt.txt, det.txt, emb.txt, truth.txt and the configs of a sequence.
pub fn write_sequence_dir(seq: &SimulatedSequence, dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    ensure_dir(dir)?;
    let mut files = BTreeMap::new();
    let mut put = |key: &str, name: &str, text: String| -> Result<()> {
        let path = dir.join(name);
        write_text(&path, &text)?;
        files.insert(key.to_string(), path);
        Ok(())
    };
    let dets = seq.detections();
    let gt = seq.ground_truth();
    put("gt", "gt.txt", crowdtrack_core::io::format_mot(trajectories_to_records(&gt).values().flatten()))?;
    put("det", "det.txt", crowdtrack_core::io::format_mot(detections_to_records(&dets).values().flatten()))?;
    put("emb", "emb.txt", crowdtrack_core::io::format_embeddings(&detections_to_embeddings(&dets)?))?;
    put("truth", "truth.txt", format_counts(&seq.truth))?;
    put("cam", "cam.cfg", seq.scene.camera.to_kv())?;
    put("scene", "scene.cfg", seq.scene.to_kv())?;
    put("noise", "noise.cfg", seq.noise.to_kv())?;
    let info = SequenceInfo {
        name: seq.name.clone(),
        fps: seq.scene.fps,
        frames: seq.frames.last().map_or(0, |f| f.frame),
    };
    put("seqinfo", "seqinfo.cfg", info.to_kv())?;
    Ok(files)
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let mut scene: SceneConfig = read_config(&args.scene)?;
    let noise: NoiseConfig = read_config(&args.noise)?;
    if let Some(seed) = args.seed {
        scene.seed = seed;
    }
    let mut seq = generate(&scene, &noise)?;
    if let Some(name) = args.out.file_name().and_then(|n| n.to_str()) {
        seq.name = name.to_string();
    }
    let files = write_sequence_dir(&seq, &args.out)?;
    let mut m = RunManifest::new("simulate", json!({ "scene": scene, "noise": noise }));
    m.seed = Some(scene.seed);
    m.input("scene", &args.scene);
    m.input("noise", &args.noise);
    for (k, p) in &files {
        m.output(k, p);
    }
    m.results = json!({ "truth": seq.truth, "frames": seq.frames.len(), "visible_pedestrians": seq.visible_pedestrians() });
    m.write(&args.out)?;
    println!(
        "{}: {} frames, truth left={} right={} total={}",
        args.out.display(),
        seq.frames.len(),
        seq.truth.left,
        seq.truth.right,
        seq.truth.total
    );
    Ok(())
}

/// Settings from defaults, the optional config file, environment and flags, in that order.
fn resolve_settings(opts: &TrackingOptions, det: Option<&Path>) -> Result<RunSettings> {
    let mut s = match &opts.config {
        Some(p) => read_config::<RunSettings>(p)?,
        None => RunSettings::default(),
    };
    if let Some(fps) = det.map(|d| parent_of(d).join("seqinfo.cfg")).filter(|p| p.exists()) {
        let info: SequenceInfo = read_config(&fps)?;
        s.tracker.fps = info.fps;
    }
    if let Some(m) = &opts.model {
        s.tracker.model = m.parse::<MotionModelKind>()?;
    }
    if let Some(v) = opts.band_start {
        s.band.start = v;
    }
    if let Some(v) = opts.band_end {
        s.band.end = v;
    }
    if let Some(v) = opts.persistence {
        s.band.persistence_n = v;
    }
    if let Some(v) = opts.fps {
        s.tracker.fps = v;
    }
    if opts.no_appearance {
        s.tracker.association.use_appearance = false;
    }
    s.tracker.validate()?;
    s.band.validate()?;
    Ok(s)
}

fn last_frame_hint(det: &Path) -> Result<Option<u32>> {
    let p = parent_of(det).join("seqinfo.cfg");
    if !p.exists() {
        return Ok(None);
    }
    let info: SequenceInfo = read_config(&p)?;
    Ok((info.frames > 0).then_some(info.frames))
}

/// Detections of frames `1..=last`, with empty frames filled in.
fn load_detections(det: &Path, emb: Option<&Path>, use_appearance: bool) -> Result<Vec<(u32, Vec<Detection64>)>> {
    let records = read_mot::<f64>(det).with_context(|| format!("reading {}", det.display()))?;
    let table = match (use_appearance, emb) {
        (true, Some(p)) => Some(read_embeddings::<f64>(p).with_context(|| format!("reading {}", p.display()))?),
        (true, None) => bail!("embeddings are required unless --no-appearance is given"),
        (false, _) => None,
    };
    let dets = assemble_detections(&records, table.as_ref())?;
    let last = last_frame_hint(det)?
        .unwrap_or(0)
        .max(records.keys().next_back().copied().unwrap_or(0));
    let mut by_frame: BTreeMap<u32, Vec<Detection64>> = dets.into_iter().collect();
    Ok((1..=last).map(|f| (f, by_frame.remove(&f).unwrap_or_default())).collect())
}

struct TrackedRun {
    outputs: Vec<FrameOutput64>,
    counts: CountSummary,
    line: CountSummary,
}

fn track_files(det: &Path, emb: Option<&Path>, cam: &Camera64, settings: &RunSettings) -> Result<TrackedRun> {
    let dets = load_detections(det, emb, settings.tracker.association.use_appearance)?;
    let outputs = run_sequence(&dets, &settings.tracker, cam)?;
    let w = cam.image_width;
    let line_fraction = 0.5 * (settings.band.start + settings.band.end);
    Ok(TrackedRun {
        counts: count_sequence(&outputs, w, &settings.band),
        line: mirrored_line_count(&outputs, line_fraction, w),
        outputs,
    })
}

fn settings_json(s: &RunSettings) -> serde_json::Value {
    json!({ "tracker": s.tracker, "band": s.band })
}

fn write_run(
    res: &Path,
    run: &TrackedRun,
    settings: &RunSettings,
    cam: &Camera64,
    inputs: &[(&str, &Path)],
    truth: Option<CountSummary>,
) -> Result<()> {
    let dir = parent_of(res);
    ensure_dir(&dir)?;
    write_mot(res, &outputs_to_records(&run.outputs))?;
    let counts_path = dir.join("counts.txt");
    write_text(&counts_path, &format_counts(&run.counts))?;
    let mut m = RunManifest::new("track", json!({ "settings": settings_json(settings), "camera": cam }));
    for (k, p) in inputs {
        m.input(k, p);
    }
    m.output("res", res);
    m.output("counts", &counts_path);
    m.results = json!({
        "model": settings.tracker.model.label(),
        "counts": run.counts,
        "line": run.line,
        "truth": truth,
    });
    m.write(&dir)?;
    Ok(())
}

fn read_truth(path: &Path) -> Result<CountSummary> {
    parse_counts(&fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)
        .with_context(|| format!("parsing {}", path.display()))
}

pub fn track(args: &TrackArgs) -> Result<()> {
    let settings = resolve_settings(&args.options, Some(&args.det))?;
    let cam: Camera64 = read_config(&args.cam)?;
    cam.validate()?;
    let emb = args.emb.as_deref().filter(|_| settings.tracker.association.use_appearance);
    let run = track_files(&args.det, emb, &cam, &settings)?;
    let truth = args.truth.as_deref().map(read_truth).transpose()?;
    let mut inputs: Vec<(&str, &Path)> = vec![("cam", &args.cam), ("det", &args.det)];
    if let Some(e) = emb {
        inputs.push(("emb", e));
    }
    if let Some(c) = &args.options.config {
        inputs.push(("config", c));
    }
    write_run(&args.out, &run, &settings, &cam, &inputs, truth)?;
    println!(
        "{} LC={} RC={} TC={}",
        settings.tracker.model.label(),
        run.counts.left,
        run.counts.right,
        run.counts.total
    );
    Ok(())
}

fn load_trajectories(path: &Path, frames_hint: Option<u32>) -> Result<Trajectories<f64>> {
    let records = read_mot::<f64>(path).with_context(|| format!("reading {}", path.display()))?;
    let mut t = records_to_trajectories(&records)?;
    t.num_frames = frames_hint.or_else(|| records.keys().next_back().copied());
    Ok(t)
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let gt_dir = parent_of(&args.gt);
    let res_dir = parent_of(&args.res);
    let gt = load_trajectories(&args.gt, last_frame_hint(&args.gt)?)?;
    let hyp = load_trajectories(&args.res, None)?;
    let mot = clear_mot(&gt, &hyp, EVAL_IOU)?;
    let truth = match args.truth_count {
        Some(k) => k,
        None => read_truth(&gt_dir.join("truth.txt"))
            .context("no --truth-count given and no truth.txt next to the ground truth")?
            .total,
    };
    let counts_path = args.counts.clone().unwrap_or_else(|| res_dir.join("counts.txt"));
    let counts = read_truth(&counts_path).context("count summary of the run")?;
    let name = args.name.clone().unwrap_or_else(|| {
        gt_dir
            .canonicalize()
            .ok()
            .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "sequence".into())
    });
    let rows = vec![SequenceRow {
        name,
        mot,
        counts,
        truth,
    }];
    let out = args.out.clone().unwrap_or(res_dir);
    ensure_dir(&out)?;
    let text = sequence_table_text(&rows);
    write_text(&out.join("eval.csv"), &sequence_table_csv(&rows))?;
    write_text(&out.join("eval.txt"), &text)?;
    let mut m = RunManifest::new("evaluate", json!({ "iou_threshold": EVAL_IOU, "truth_count": truth }));
    m.input("gt", &args.gt);
    m.input("res", &args.res);
    m.input("counts", &counts_path);
    m.output("csv", &out.join("eval.csv"));
    m.output("text", &out.join("eval.txt"));
    m.results = json!({ "mot": mot });
    m.write(&out)?;
    print!("{text}");
    Ok(())
}

fn parse_grid(tokens: &[String]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut starts = GRID_STARTS.to_vec();
    let mut ends = GRID_ENDS.to_vec();
    for tok in tokens.iter().flat_map(|t| t.split_whitespace()) {
        let (key, values) = tok
            .split_once(':')
            .ok_or_else(|| anyhow!("grid entry '{tok}' is not key:values"))?;
        let list = values
            .split(',')
            .filter(|v| !v.is_empty())
            .map(|v| v.trim().parse::<f64>().map_err(|_| anyhow!("invalid grid value '{v}'")))
            .collect::<Result<Vec<f64>>>()?;
        if list.is_empty() {
            bail!("grid entry '{key}' has no values");
        }
        match key {
            "start" => starts = list,
            "end" => ends = list,
            other => bail!("unknown grid key '{other}' (expected start or end)"),
        }
    }
    Ok((starts, ends))
}

/// Subdirectories of `dir` containing `marker`, sorted by path.
fn sequence_dirs(dir: &Path, marker: &str) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.join(marker).exists())
        .collect();
    out.sort();
    Ok(out)
}

fn count_row(label: &str, r: &CountReport) -> Vec<String> {
    vec![label.to_string(), f2(r.mae), f2(r.rmse), f2(r.mape), f2(r.me)]
}

fn csv(header: &[String], rows: &[Vec<String>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

fn markdown(header: &[String], rows: &[Vec<String>]) -> String {
    let mut s = format!("| {} |\n|{}|\n", header.join(" | "), vec!["---"; header.len()].join("|"));
    for r in rows {
        s.push_str(&format!("| {} |\n", r.join(" | ")));
    }
    s
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

pub fn sweep(args: &SweepArgs) -> Result<()> {
    if args.param != "band" {
        bail!("unsupported sweep parameter '{}' (only band)", args.param);
    }
    let (starts, ends) = parse_grid(&args.grid)?;
    let dirs = sequence_dirs(&args.sequences, "det.txt")?;
    if dirs.is_empty() {
        bail!("no sequences with det.txt under {}", args.sequences.display());
    }
    let base = resolve_settings(&args.options, None)?;
    let tracked = par_map(&dirs, args.jobs, |dir| {
        let mut settings = base;
        let info = dir.join("seqinfo.cfg");
        if args.options.fps.is_none() && info.exists() {
            settings.tracker.fps = SequenceInfo::read(&info, None)?.fps;
        }
        let run = || -> Result<(Vec<FrameOutput64>, f64, CountSummary)> {
            let cam: Camera64 = read_config(&dir.join("cam.cfg"))?;
            let emb = dir.join("emb.txt");
            let emb = emb.exists().then_some(emb.as_path());
            let run = track_files(&dir.join("det.txt"), emb, &cam, &settings)?;
            Ok((run.outputs, cam.image_width, read_truth(&dir.join("truth.txt"))?))
        };
        run().map_err(|e| crowdtrack_core::Error::Evaluation(format!("{}: {e:#}", dir.display())))
    })?;
    let grid = ablation_grid(&starts, &ends, base.band.persistence_n);
    let mut rows = band_sweep(&tracked, &grid)?;
    rank_sweep(&mut rows);

    let header = strings(&["Start", "End", "MAE", "RMSE", "MAPE(%)", "ME"]);
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(b, r)| vec![f2(b.start), f2(b.end), f2(r.mae), f2(r.rmse), f2(r.mape), f2(r.me)])
        .collect();
    ensure_dir(&args.out)?;
    let text = aligned_table(&header, &body);
    write_text(&args.out.join("sweep.csv"), &csv(&header, &body))?;
    write_text(&args.out.join("sweep.txt"), &text)?;
    let mut m = RunManifest::new(
        "sweep",
        json!({ "settings": settings_json(&base), "starts": starts, "ends": ends, "jobs": args.jobs }),
    );
    m.input("sequences", &args.sequences);
    m.output("csv", &args.out.join("sweep.csv"));
    m.output("text", &args.out.join("sweep.txt"));
    m.results = json!({ "sequences": dirs.len(), "rows": rows.len() });
    m.write(&args.out)?;
    print!("{text}");
    Ok(())
}

const MODEL_ORDER: [MotionModelKind; 3] = MotionModelKind::ALL;

type Table = Vec<Vec<String>>;

/// Counting accuracy per model over the track manifests below `runs`.
fn model_tables(runs: &Path) -> Result<(Vec<String>, Table, Table)> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(runs)
        .with_context(|| format!("reading {}", runs.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        bail!("no runs under {}", runs.display());
    }
    let mut band: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    let mut line: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for dir in &dirs {
        let path = dir.join(RunManifest::file_name("track"));
        if !path.exists() {
            bail!("missing manifest {}", path.display());
        }
        let m = RunManifest::read(&path)?;
        let label = m.results["model"].as_str().unwrap_or_default().to_string();
        let idx = MODEL_ORDER
            .iter()
            .position(|k| k.label() == label)
            .ok_or_else(|| anyhow!("{}: unknown model '{label}'", path.display()))?;
        let get = |key: &str| -> Result<CountSummary> {
            serde_json::from_value(m.results[key].clone())
                .map_err(|_| anyhow!("{}: no {key} counts recorded", path.display()))
        };
        let truth = f64::from(get("truth")?.total);
        band.entry(idx).or_default().push((f64::from(get("counts")?.total), truth));
        line.entry(idx).or_default().push((f64::from(get("line")?.total), truth));
    }
    let header = strings(&["Model", "MAE", "RMSE", "MAPE(%)", "ME"]);
    let mut models = Vec::new();
    let mut methods = Vec::new();
    for (idx, pairs) in &band {
        let label = MODEL_ORDER[*idx].label();
        models.push(count_row(label, &counting_metrics(pairs)?));
        methods.push(count_row(&format!("{label} line-crossing"), &counting_metrics(&line[idx])?));
        methods.push(count_row(&format!("{label} counting band"), &counting_metrics(pairs)?));
    }
    Ok((header, models, methods))
}

fn write_report(runs: &Path, out: &Path) -> Result<String> {
    let (header, models, methods) = model_tables(runs)?;
    ensure_dir(out)?;
    let mut method_header = header.clone();
    method_header[0] = "Method".into();
    write_text(&out.join("report.csv"), &csv(&header, &models))?;
    write_text(&out.join("methods.csv"), &csv(&method_header, &methods))?;
    let md = format!(
        "## Counting accuracy by model\n\n{}\n## Line crossing vs. counting band\n\n{}",
        markdown(&header, &models),
        markdown(&method_header, &methods)
    );
    write_text(&out.join("report.md"), &md)?;
    Ok(aligned_table(&header, &models))
}

pub fn report(args: &ReportArgs) -> Result<()> {
    let out = args.out.clone().unwrap_or_else(|| args.runs.clone());
    let text = write_report(&args.runs, &out)?;
    let mut m = RunManifest::new("report", json!({}));
    m.input("runs", &args.runs);
    m.output("csv", &out.join("report.csv"));
    m.output("markdown", &out.join("report.md"));
    m.write(&out)?;
    print!("{text}");
    Ok(())
}

pub fn benchmark(args: &BenchmarkArgs) -> Result<()> {
    let scene = match &args.scene {
        Some(p) => read_config(p)?,
        None => SceneConfig::default(),
    };
    let noise = match &args.noise {
        Some(p) => read_config(p)?,
        None => NoiseConfig::default(),
    };
    let cfg = BenchmarkConfig {
        sequences: args.sequences,
        base_seed: args.seed,
        min_pedestrians: args.min_pedestrians,
        max_pedestrians: args.max_pedestrians,
        scene,
        noise,
    };
    let models = args
        .models
        .iter()
        .map(|m| m.parse::<MotionModelKind>())
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if models.is_empty() {
        bail!("no models selected");
    }
    let opts = TrackingOptions {
        model: None,
        config: args.config.clone(),
        band_start: None,
        band_end: None,
        persistence: None,
        fps: None,
        no_appearance: false,
    };
    let base = resolve_settings(&opts, None)?;

    let seq_root = args.out.join("sequences");
    let run_root = args.out.join("runs");
    let mut sequences = cfg.generate(args.jobs)?;
    for (i, s) in sequences.iter_mut().enumerate() {
        s.name = format!("seq-{:02}", i + 1);
    }
    par_map(&sequences, args.jobs, |s| {
        write_sequence_dir(s, &seq_root.join(&s.name))
            .map(|_| ())
            .map_err(|e| crowdtrack_core::Error::Evaluation(format!("{e:#}")))
    })?;

    let work: Vec<(MotionModelKind, usize)> = models
        .iter()
        .flat_map(|&m| (0..sequences.len()).map(move |i| (m, i)))
        .collect();
    let rows = par_map(&work, args.jobs, |&(model, i)| {
        let seq = &sequences[i];
        let dir = seq_root.join(&seq.name);
        let run = || -> Result<SequenceRow> {
            let settings = RunSettings {
                tracker: crowdtrack_core::TrackerConfig {
                    model,
                    fps: seq.scene.fps,
                    ..base.tracker
                },
                band: base.band,
            };
            let cam = seq.scene.camera;
            let det = dir.join("det.txt");
            let emb = dir.join("emb.txt");
            let tracked = track_files(&det, Some(&emb), &cam, &settings)?;
            let res = run_root.join(format!("{}-{}", model, seq.name)).join("res.txt");
            write_run(&res, &tracked, &settings, &cam, &[("det", &det), ("emb", &emb)], Some(seq.truth))?;
            let gt = load_trajectories(&dir.join("gt.txt"), last_frame_hint(&det)?)?;
            let hyp = load_trajectories(&res, None)?;
            Ok(SequenceRow {
                name: seq.name.clone(),
                mot: clear_mot(&gt, &hyp, EVAL_IOU)?,
                counts: tracked.counts,
                truth: seq.truth.total,
            })
        };
        run().map_err(|e| crowdtrack_core::Error::Evaluation(format!("{} {}: {e:#}", model, seq.name)))
    })?;

    ensure_dir(&args.out)?;
    let mut summary_rows = Vec::new();
    for (m, chunk) in models.iter().zip(rows.chunks(sequences.len())) {
        write_text(&args.out.join(format!("sequences-{m}.csv")), &sequence_table_csv(chunk))?;
        write_text(&args.out.join(format!("sequences-{m}.txt")), &sequence_table_text(chunk))?;
        let idsw: u64 = chunk.iter().map(|r| r.mot.idsw).sum();
        let n = chunk.len() as f64;
        summary_rows.push(vec![
            m.label().to_string(),
            idsw.to_string(),
            f2(chunk.iter().map(|r| r.mot.mota).sum::<f64>() / n),
            f2(chunk.iter().map(|r| r.mot.idf1).sum::<f64>() / n),
        ]);
    }
    let header = strings(&["Model", "IDSW", "MOTA", "IDF1"]);
    write_text(&args.out.join("tracking.csv"), &csv(&header, &summary_rows))?;
    let text = write_report(&run_root, &args.out)?;

    let mut m = RunManifest::new(
        "benchmark",
        json!({ "benchmark": cfg, "models": models, "settings": settings_json(&base), "jobs": args.jobs }),
    );
    m.seed = Some(args.seed);
    m.output("sequences", &seq_root);
    m.output("runs", &run_root);
    m.output("report", &args.out.join("report.md"));
    m.write(&args.out)?;
    print!("{text}{}", aligned_table(&header, &summary_rows));
    Ok(())
}
