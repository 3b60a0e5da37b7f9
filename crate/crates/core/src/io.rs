//! Text formats: MOT box files, embedding files and key=value configs.
//!
//! MOT lines are `frame,id,left,top,width,height,conf,-1,-1,-1` with boxes
//! and confidences printed to two decimals; detections carry id −1.
//! Embedding lines are `frame,index,v1,…,vD`, aligned with the detection
//! order inside each frame. Numbers are always written with a '.' decimal
//! separator.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::association::{Detection, Embedding};
use crate::counting::{BandConfig, CountSummary};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, HeadBox};
use crate::metrics::Trajectories;
use crate::motion::MotionModelKind;
use crate::scalar::Real;
use crate::simulator::{NoiseConfig, SceneConfig};
use crate::tracker::{FrameOutput, TrackerConfig};

/// Norm tolerance applied to parsed embeddings.
pub const EMBEDDING_NORM_TOLERANCE: f64 = 1e-4;

/// One line of a MOT file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotRecord<T> {
    pub frame: u32,
    pub id: i64,
    pub bbox: HeadBox<T>,
    pub confidence: T,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn field<F: FromStr>(raw: &str, line: usize, name: &str) -> Result<F> {
    raw.trim()
        .parse()
        .map_err(|_| parse_err(line, format!("invalid {name} '{}'", raw.trim())))
}

fn finite<T: Real>(v: T, line: usize, name: &str) -> Result<T> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(parse_err(line, format!("non-finite {name}")))
    }
}

/// Parses MOT text. Frames may appear in any order; lines keep file order within a frame.
pub fn parse_mot<T: Real>(text: &str) -> Result<BTreeMap<u32, Vec<MotRecord<T>>>> {
    let mut out: BTreeMap<u32, Vec<MotRecord<T>>> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = raw.split(',').collect();
        if cols.len() < 7 {
            return Err(parse_err(line, format!("expected at least 7 fields, found {}", cols.len())));
        }
        let frame: u32 = field(cols[0], line, "frame")?;
        if frame == 0 {
            return Err(parse_err(line, "frame numbers start at 1"));
        }
        let id: i64 = field(cols[1], line, "id")?;
        let mut nums = [T::zero(); 5];
        for (k, name) in ["bb_left", "bb_top", "bb_width", "bb_height", "conf"].iter().enumerate() {
            nums[k] = finite(field(cols[2 + k], line, name)?, line, name)?;
        }
        let bbox = HeadBox::from_tlwh(nums[0], nums[1], nums[2], nums[3]).map_err(|e| match e {
            Error::Domain(m) => parse_err(line, m),
            other => other,
        })?;
        out.entry(frame).or_default().push(MotRecord {
            frame,
            id,
            bbox,
            confidence: nums[4],
        });
    }
    Ok(out)
}

pub fn read_mot<T: Real>(path: &Path) -> Result<BTreeMap<u32, Vec<MotRecord<T>>>> {
    parse_mot(&fs::read_to_string(path)?)
}

pub fn format_mot_line<T: Real>(r: &MotRecord<T>) -> String {
    let [l, t, w, h] = r.bbox.to_tlwh();
    format!(
        "{},{},{:.2},{:.2},{:.2},{:.2},{:.2},-1,-1,-1",
        r.frame,
        r.id,
        l.as_f64(),
        t.as_f64(),
        w.as_f64(),
        h.as_f64(),
        r.confidence.as_f64()
    )
}

pub fn format_mot<'a, T: Real + 'a>(records: impl IntoIterator<Item = &'a MotRecord<T>>) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&format_mot_line(r));
        s.push('\n');
    }
    s
}

pub fn write_mot<T: Real>(path: &Path, frames: &BTreeMap<u32, Vec<MotRecord<T>>>) -> Result<()> {
    fs::write(path, format_mot(frames.values().flatten()))?;
    Ok(())
}

/// MOT records of ground-truth or hypothesis trajectories (confidence 1).
pub fn trajectories_to_records<T: Real>(t: &Trajectories<T>) -> BTreeMap<u32, Vec<MotRecord<T>>> {
    t.frames
        .iter()
        .map(|(&frame, boxes)| {
            let recs = boxes
                .iter()
                .map(|&(id, bbox)| MotRecord {
                    frame,
                    id: id as i64,
                    bbox,
                    confidence: T::one(),
                })
                .collect();
            (frame, recs)
        })
        .collect()
}

/// Trajectories from MOT records; ids must be non-negative.
pub fn records_to_trajectories<T: Real>(records: &BTreeMap<u32, Vec<MotRecord<T>>>) -> Result<Trajectories<T>> {
    let mut t = Trajectories::new();
    for (&frame, recs) in records {
        let entry = t.frames.entry(frame).or_default();
        for r in recs {
            let id = u64::try_from(r.id)
                .map_err(|_| Error::Evaluation(format!("negative track id {} in frame {frame}", r.id)))?;
            entry.push((id, r.bbox));
        }
    }
    Ok(t)
}

/// Confirmed, detection-backed tracker outputs as MOT records.
pub fn outputs_to_records<T: Real>(frames: &[FrameOutput<T>]) -> BTreeMap<u32, Vec<MotRecord<T>>> {
    trajectories_to_records(&Trajectories::from_outputs(frames, false))
}

/// Detections as MOT records with id −1.
pub fn detections_to_records<T: Real>(frames: &[(u32, Vec<Detection<T>>)]) -> BTreeMap<u32, Vec<MotRecord<T>>> {
    frames
        .iter()
        .filter(|(_, dets)| !dets.is_empty())
        .map(|(frame, dets)| {
            let recs = dets
                .iter()
                .map(|d| MotRecord {
                    frame: *frame,
                    id: -1,
                    bbox: d.bbox,
                    confidence: d.confidence,
                })
                .collect();
            (*frame, recs)
        })
        .collect()
}

/// Embedding records keyed by frame, in detection order.
pub type EmbeddingTable<T> = BTreeMap<u32, Vec<Embedding<T>>>;

pub fn parse_embeddings<T: Real>(text: &str) -> Result<EmbeddingTable<T>> {
    let mut rows: BTreeMap<u32, BTreeMap<usize, (usize, Embedding<T>)>> = BTreeMap::new();
    let mut dim = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = raw.split(',').collect();
        if cols.len() < 3 {
            return Err(parse_err(line, "embedding line needs frame, index and values"));
        }
        let frame: u32 = field(cols[0], line, "frame")?;
        let index: usize = field(cols[1], line, "index")?;
        let values = cols[2..]
            .iter()
            .map(|c| field::<T>(c, line, "value").and_then(|v| finite(v, line, "value")))
            .collect::<Result<Vec<T>>>()?;
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(parse_err(line, format!("expected {d} values, found {}", values.len())))
            }
            _ => {}
        }
        let emb = Embedding::from_unit(values, T::lit(EMBEDDING_NORM_TOLERANCE)).map_err(|e| parse_err(line, e.to_string()))?;
        if rows.entry(frame).or_default().insert(index, (line, emb)).is_some() {
            return Err(parse_err(line, format!("duplicate embedding {frame},{index}")));
        }
    }
    let mut out = BTreeMap::new();
    for (frame, by_index) in rows {
        let mut list = Vec::with_capacity(by_index.len());
        for (expected, (index, (line, emb))) in by_index.into_iter().enumerate() {
            if index != expected {
                return Err(parse_err(line, format!("frame {frame} skips embedding index {expected}")));
            }
            list.push(emb);
        }
        out.insert(frame, list);
    }
    Ok(out)
}

pub fn read_embeddings<T: Real>(path: &Path) -> Result<EmbeddingTable<T>> {
    parse_embeddings(&fs::read_to_string(path)?)
}

pub fn format_embeddings<T: Real>(table: &EmbeddingTable<T>) -> String {
    let mut s = String::new();
    for (frame, list) in table {
        for (i, e) in list.iter().enumerate() {
            let _ = write!(s, "{frame},{i}");
            for v in e.values() {
                let _ = write!(s, ",{:.8}", v.as_f64());
            }
            s.push('\n');
        }
    }
    s
}

pub fn write_embeddings<T: Real>(path: &Path, table: &EmbeddingTable<T>) -> Result<()> {
    fs::write(path, format_embeddings(table))?;
    Ok(())
}

/// Embeddings of detections that carry one; frames without any are omitted.
pub fn detections_to_embeddings<T: Real>(frames: &[(u32, Vec<Detection<T>>)]) -> Result<EmbeddingTable<T>> {
    let mut out = BTreeMap::new();
    for (frame, dets) in frames {
        let embs: Vec<Embedding<T>> = dets.iter().filter_map(|d| d.embedding.clone()).collect();
        if embs.is_empty() {
            continue;
        }
        if embs.len() != dets.len() {
            return Err(Error::Alignment(format!("frame {frame} has detections without embeddings")));
        }
        out.insert(*frame, embs);
    }
    Ok(out)
}

/// Joins detection records with their embeddings, checking alignment per frame.
pub fn assemble_detections<T: Real>(
    records: &BTreeMap<u32, Vec<MotRecord<T>>>,
    embeddings: Option<&EmbeddingTable<T>>,
) -> Result<Vec<(u32, Vec<Detection<T>>)>> {
    if let Some(table) = embeddings {
        for (frame, embs) in table {
            let n = records.get(frame).map_or(0, Vec::len);
            if n != embs.len() {
                return Err(Error::Alignment(format!(
                    "frame {frame}: {n} detections but {} embeddings",
                    embs.len()
                )));
            }
        }
    }
    records
        .iter()
        .map(|(&frame, recs)| {
            let embs = embeddings.and_then(|t| t.get(&frame));
            if embeddings.is_some() && embs.map_or(0, Vec::len) != recs.len() {
                return Err(Error::Alignment(format!(
                    "frame {frame}: {} detections but {} embeddings",
                    recs.len(),
                    embs.map_or(0, Vec::len)
                )));
            }
            let dets = recs
                .iter()
                .enumerate()
                .map(|(i, r)| Detection::new(r.bbox, r.confidence, embs.map(|e| e[i].clone())))
                .collect();
            Ok((frame, dets))
        })
        .collect()
}

/// Ordered `key = value` pairs with their line numbers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    pub entries: Vec<(String, String, usize)>,
}

impl KeyValues {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content
                .split_once('=')
                .ok_or_else(|| parse_err(i + 1, format!("expected key=value, found '{content}'")))?;
            let key = k.trim().to_ascii_lowercase();
            if key.is_empty() {
                return Err(parse_err(i + 1, "empty key"));
            }
            if entries.iter().any(|(e, _, _): &(String, String, usize)| *e == key) {
                return Err(parse_err(i + 1, format!("duplicate key '{key}'")));
            }
            entries.push((key, v.trim().to_string(), i + 1));
        }
        Ok(Self { entries })
    }

    /// Appends or replaces values from `PREFIX_KEY` environment variables for the given keys.
    pub fn with_env(mut self, prefix: &str, keys: &[&str]) -> Self {
        for key in keys {
            let var = format!("{prefix}{}", key.to_ascii_uppercase());
            if let Ok(v) = std::env::var(&var) {
                self.entries.retain(|(k, _, _)| k != key);
                self.entries.push((key.to_string(), v.trim().to_string(), 0));
            }
        }
        self
    }
}

/// A configuration stored as `key = value` text.
pub trait KeyValueConfig: Sized + Default {
    const KEYS: &'static [&'static str];

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String>;

    fn entries(&self) -> Vec<(&'static str, String)>;

    fn apply(mut self, kv: &KeyValues) -> Result<Self> {
        for (key, value, line) in &kv.entries {
            if !Self::KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!("line {line}: unknown key '{key}'")));
            }
            self.set(key, value)
                .map_err(|m| Error::Config(format!("line {line}: {key}: {m}")))?;
        }
        Ok(self)
    }

    fn from_kv(text: &str) -> Result<Self> {
        Self::default().apply(&KeyValues::parse(text)?)
    }

    fn read(path: &Path, env_prefix: Option<&str>) -> Result<Self> {
        let mut kv = KeyValues::parse(&fs::read_to_string(path)?)?;
        if let Some(p) = env_prefix {
            kv = kv.with_env(p, Self::KEYS);
        }
        Self::default().apply(&kv)
    }

    fn to_kv(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

fn num<F: FromStr>(value: &str) -> std::result::Result<F, String> {
    value.parse().map_err(|_| format!("invalid value '{value}'"))
}

fn opt_pair(v: Option<(f64, f64)>, i: usize) -> String {
    v.map_or_else(|| "none".to_string(), |p| if i == 0 { p.0 } else { p.1 }.to_string())
}

fn set_camera(cam: &mut CameraIntrinsics<f64>, key: &str, value: &str) -> std::result::Result<bool, String> {
    match key {
        "fx" => cam.fx = num(value)?,
        "fy" => cam.fy = num(value)?,
        "cx" => cam.cx = num(value)?,
        "cy" => cam.cy = num(value)?,
        "width" => cam.image_width = num(value)?,
        "height" => cam.image_height = num(value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

fn camera_entries(cam: &CameraIntrinsics<f64>) -> Vec<(&'static str, String)> {
    vec![
        ("fx", cam.fx.to_string()),
        ("fy", cam.fy.to_string()),
        ("cx", cam.cx.to_string()),
        ("cy", cam.cy.to_string()),
        ("width", cam.image_width.to_string()),
        ("height", cam.image_height.to_string()),
    ]
}

const CAMERA_KEYS: [&str; 6] = ["fx", "fy", "cx", "cy", "width", "height"];

impl KeyValueConfig for CameraIntrinsics<f64> {
    const KEYS: &'static [&'static str] = &CAMERA_KEYS;

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        set_camera(self, key, value).map(|_| ())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        camera_entries(self)
    }
}

impl KeyValueConfig for SceneConfig {
    const KEYS: &'static [&'static str] = &[
        "seed", "num_pedestrians", "side", "x_min", "x_max", "y_min", "y_max", "head_height_mean",
        "head_height_std", "aspect_min", "aspect_max", "walk_std", "d0", "v0", "decel", "fps", "duration",
        "min_height_px", "arrival_start", "arrival_end", "depth_min", "depth_max", "fx", "fy", "cx", "cy",
        "width", "height",
    ];

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let depth = |v: &str| -> std::result::Result<Option<f64>, String> {
            if v.eq_ignore_ascii_case("none") {
                Ok(None)
            } else {
                num(v).map(Some)
            }
        };
        match key {
            "seed" => self.seed = num(value)?,
            "num_pedestrians" => self.num_pedestrians = num(value)?,
            "side" => self.side = value.parse().map_err(|e: Error| e.to_string())?,
            "x_min" => self.x_range.0 = num(value)?,
            "x_max" => self.x_range.1 = num(value)?,
            "y_min" => self.y_range.0 = num(value)?,
            "y_max" => self.y_range.1 = num(value)?,
            "head_height_mean" => self.head_height_mean = num(value)?,
            "head_height_std" => self.head_height_std = num(value)?,
            "aspect_min" => self.aspect_range.0 = num(value)?,
            "aspect_max" => self.aspect_range.1 = num(value)?,
            "walk_std" => self.walk_std = num(value)?,
            "d0" => self.d0 = num(value)?,
            "v0" => self.v0 = num(value)?,
            "decel" => self.decel = num(value)?,
            "fps" => self.fps = num(value)?,
            "duration" => self.duration = num(value)?,
            "min_height_px" => self.min_height_px = num(value)?,
            "arrival_start" => self.arrival_window.0 = num(value)?,
            "arrival_end" => self.arrival_window.1 = num(value)?,
            "depth_min" | "depth_max" => {
                let v = depth(value)?;
                let cur = self.depth_range.unwrap_or((0.0, 0.0));
                self.depth_range = match (key, v) {
                    (_, None) => None,
                    ("depth_min", Some(v)) => Some((v, cur.1)),
                    (_, Some(v)) => Some((cur.0, v)),
                };
            }
            _ => {
                if !set_camera(&mut self.camera, key, value)? {
                    return Err("unknown key".into());
                }
            }
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let mut e = vec![
            ("seed", self.seed.to_string()),
            ("num_pedestrians", self.num_pedestrians.to_string()),
            ("side", self.side.to_string()),
            ("x_min", self.x_range.0.to_string()),
            ("x_max", self.x_range.1.to_string()),
            ("y_min", self.y_range.0.to_string()),
            ("y_max", self.y_range.1.to_string()),
            ("head_height_mean", self.head_height_mean.to_string()),
            ("head_height_std", self.head_height_std.to_string()),
            ("aspect_min", self.aspect_range.0.to_string()),
            ("aspect_max", self.aspect_range.1.to_string()),
            ("walk_std", self.walk_std.to_string()),
            ("d0", self.d0.to_string()),
            ("v0", self.v0.to_string()),
            ("decel", self.decel.to_string()),
            ("fps", self.fps.to_string()),
            ("duration", self.duration.to_string()),
            ("min_height_px", self.min_height_px.to_string()),
            ("arrival_start", self.arrival_window.0.to_string()),
            ("arrival_end", self.arrival_window.1.to_string()),
            ("depth_min", opt_pair(self.depth_range, 0)),
            ("depth_max", opt_pair(self.depth_range, 1)),
        ];
        e.extend(camera_entries(&self.camera));
        e
    }
}

impl KeyValueConfig for NoiseConfig {
    const KEYS: &'static [&'static str] = &[
        "center_jitter",
        "height_jitter",
        "miss_rate",
        "occlusion_iou",
        "occlusion_miss_rate",
        "false_positives",
        "embedding_dim",
        "embedding_noise",
    ];

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "center_jitter" => self.center_jitter = num(value)?,
            "height_jitter" => self.height_jitter = num(value)?,
            "miss_rate" => self.miss_rate = num(value)?,
            "occlusion_iou" => self.occlusion_iou = num(value)?,
            "occlusion_miss_rate" => self.occlusion_miss_rate = num(value)?,
            "false_positives" => self.false_positives = num(value)?,
            "embedding_dim" => self.embedding_dim = num(value)?,
            "embedding_noise" => self.embedding_noise = num(value)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("center_jitter", self.center_jitter.to_string()),
            ("height_jitter", self.height_jitter.to_string()),
            ("miss_rate", self.miss_rate.to_string()),
            ("occlusion_iou", self.occlusion_iou.to_string()),
            ("occlusion_miss_rate", self.occlusion_miss_rate.to_string()),
            ("false_positives", self.false_positives.to_string()),
            ("embedding_dim", self.embedding_dim.to_string()),
            ("embedding_noise", self.embedding_noise.to_string()),
        ]
    }
}

/// Tracker and counting settings of a tracking run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunSettings {
    pub tracker: TrackerConfig<f64>,
    pub band: BandConfig<f64>,
}

impl KeyValueConfig for RunSettings {
    const KEYS: &'static [&'static str] = &[
        "model",
        "n_init",
        "max_age",
        "min_confidence",
        "fps",
        "emit_predicted_frames",
        "lambda",
        "appearance_gate",
        "cascade_depth",
        "depth_jump_max",
        "iou_fallback_threshold",
        "gallery_size",
        "use_appearance",
        "head_height",
        "band_start",
        "band_end",
        "persistence",
        "end_of_video_min",
        "count_predicted",
    ];

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let t = &mut self.tracker;
        let a = &mut t.association;
        match key {
            "model" => t.model = value.parse::<MotionModelKind>().map_err(|e| e.to_string())?,
            "n_init" => t.n_init = num(value)?,
            "max_age" => t.max_age = num(value)?,
            "min_confidence" => t.min_confidence = num(value)?,
            "fps" => t.fps = num(value)?,
            "emit_predicted_frames" => t.emit_predicted_frames = num(value)?,
            "lambda" => a.lambda = num(value)?,
            "appearance_gate" => a.appearance_gate = num(value)?,
            "cascade_depth" => a.cascade_depth = num(value)?,
            "depth_jump_max" => a.depth_jump_max = num(value)?,
            "iou_fallback_threshold" => a.iou_fallback_threshold = num(value)?,
            "gallery_size" => a.gallery_size = num(value)?,
            "use_appearance" => a.use_appearance = num(value)?,
            "head_height" => t.noise.head_height = num(value)?,
            "band_start" => self.band.start = num(value)?,
            "band_end" => self.band.end = num(value)?,
            "persistence" => self.band.persistence_n = num(value)?,
            "end_of_video_min" => self.band.end_of_video_min = num(value)?,
            "count_predicted" => self.band.count_predicted = num(value)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let t = &self.tracker;
        let a = &t.association;
        vec![
            ("model", t.model.to_string()),
            ("n_init", t.n_init.to_string()),
            ("max_age", t.max_age.to_string()),
            ("min_confidence", t.min_confidence.to_string()),
            ("fps", t.fps.to_string()),
            ("emit_predicted_frames", t.emit_predicted_frames.to_string()),
            ("lambda", a.lambda.to_string()),
            ("appearance_gate", a.appearance_gate.to_string()),
            ("cascade_depth", a.cascade_depth.to_string()),
            ("depth_jump_max", a.depth_jump_max.to_string()),
            ("iou_fallback_threshold", a.iou_fallback_threshold.to_string()),
            ("gallery_size", a.gallery_size.to_string()),
            ("use_appearance", a.use_appearance.to_string()),
            ("head_height", t.noise.head_height.to_string()),
            ("band_start", self.band.start.to_string()),
            ("band_end", self.band.end.to_string()),
            ("persistence", self.band.persistence_n.to_string()),
            ("end_of_video_min", self.band.end_of_video_min.to_string()),
            ("count_predicted", self.band.count_predicted.to_string()),
        ]
    }
}

/// Per-sequence metadata stored next to the box files.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceInfo {
    pub name: String,
    pub fps: f64,
    pub frames: u32,
}

impl Default for SequenceInfo {
    fn default() -> Self {
        Self {
            name: String::new(),
            fps: 25.0,
            frames: 0,
        }
    }
}

impl KeyValueConfig for SequenceInfo {
    const KEYS: &'static [&'static str] = &["name", "fps", "frames"];

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "name" => self.name = value.to_string(),
            "fps" => self.fps = num(value)?,
            "frames" => self.frames = num(value)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("name", self.name.clone()),
            ("fps", self.fps.to_string()),
            ("frames", self.frames.to_string()),
        ]
    }
}

/// `left`, `right` and `total` as key=value text.
pub fn format_counts(c: &CountSummary) -> String {
    format!("left = {}\nright = {}\ntotal = {}\n", c.left, c.right, c.total)
}

pub fn parse_counts(text: &str) -> Result<CountSummary> {
    let kv = KeyValues::parse(text)?;
    let (mut left, mut right, mut total) = (None, None, None);
    for (k, v, line) in &kv.entries {
        let n: u32 = v
            .parse()
            .map_err(|_| parse_err(*line, format!("invalid count '{v}'")))?;
        match k.as_str() {
            "left" => left = Some(n),
            "right" => right = Some(n),
            "total" => total = Some(n),
            _ => return Err(parse_err(*line, format!("unknown key '{k}'"))),
        }
    }
    match (left, right) {
        (Some(l), Some(r)) => {
            let c = CountSummary::new(l, r);
            if total.is_some_and(|t| t != c.total) {
                return Err(Error::Config("total must equal max(left, right)".into()));
            }
            Ok(c)
        }
        _ => Err(Error::Config("counts need left and right".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_mot_line() {
        let recs = parse_mot::<f64>("1,3,100.00,50.00,20.00,30.00,0.95,-1,-1,-1\n").unwrap();
        let r = recs[&1][0];
        assert_eq!((r.frame, r.id), (1, 3));
        assert_eq!((r.bbox.x, r.bbox.y, r.bbox.h), (110.0, 65.0, 30.0));
        assert_eq!(r.bbox.a, 20.0 / 30.0);
        assert_eq!(r.confidence, 0.95);
    }

    #[test]
    fn rejects_zero_width() {
        let err = parse_mot::<f64>("1,3,100,50,0,30,0.9,-1,-1,-1\n").unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 1);
                assert!(message.contains("non-positive box dimension"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let text = "1,1,0,0,10,10,1,-1,-1,-1\n\n2,1,zero,0,10,10,1,-1,-1,-1\n";
        assert!(matches!(parse_mot::<f64>(text), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(parse_mot::<f64>("0,1,0,0,1,1,1\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_mot::<f64>("1,1,0,0\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn canonical_round_trip_and_sorting() {
        let text = "2,1,10.00,20.00,30.00,40.00,1.00,-1,-1,-1\n1,-1,5.50,6.25,7.00,8.00,0.55,-1,-1,-1\n";
        let recs = parse_mot::<f64>(text).unwrap();
        assert_eq!(
            format_mot(recs.values().flatten()),
            "1,-1,5.50,6.25,7.00,8.00,0.55,-1,-1,-1\n2,1,10.00,20.00,30.00,40.00,1.00,-1,-1,-1\n"
        );
    }

    fn unit(i: usize) -> Embedding<f64> {
        let mut v = vec![0.0; 4];
        v[i] = 1.0;
        Embedding::normalized(v).unwrap()
    }

    #[test]
    fn embeddings_round_trip() {
        let mut t = EmbeddingTable::new();
        t.insert(1, vec![unit(0), unit(2)]);
        let back = parse_embeddings::<f64>(&format_embeddings(&t)).unwrap();
        assert_eq!(back, t);
        assert!(parse_embeddings::<f64>("1,0,0.5,0.5\n").is_err());
        assert!(parse_embeddings::<f64>("1,1,1.0,0.0\n").is_err());
    }

    #[test]
    fn alignment_is_checked() {
        let recs = parse_mot::<f64>(
            "1,-1,0,0,10,10,0.9,-1,-1,-1\n1,-1,20,0,10,10,0.9,-1,-1,-1\n1,-1,40,0,10,10,0.9,-1,-1,-1\n",
        )
        .unwrap();
        let mut t = EmbeddingTable::new();
        t.insert(1, vec![unit(0), unit(1)]);
        assert!(matches!(assemble_detections(&recs, Some(&t)), Err(Error::Alignment(_))));
        t.get_mut(&1).unwrap().push(unit(3));
        let dets = assemble_detections(&recs, Some(&t)).unwrap();
        assert_eq!(dets[0].1[2].embedding, Some(unit(3)));
        assert!(assemble_detections(&recs, None).unwrap()[0].1[0].embedding.is_none());
    }

    #[test]
    fn configs_round_trip_and_reject_unknown_keys() {
        let scene = SceneConfig {
            seed: 7,
            depth_range: Some((5.0, 20.0)),
            ..SceneConfig::default()
        };
        assert_eq!(SceneConfig::from_kv(&scene.to_kv()).unwrap(), scene);
        let noise = NoiseConfig::default();
        assert_eq!(NoiseConfig::from_kv(&noise.to_kv()).unwrap(), noise);
        let run = RunSettings::default();
        assert_eq!(RunSettings::from_kv(&run.to_kv()).unwrap(), run);
        assert!(matches!(NoiseConfig::from_kv("bogus = 1\n"), Err(Error::Config(_))));
        assert!(NoiseConfig::from_kv("miss_rate\n").is_err());
        let n = NoiseConfig::from_kv("# comment\nmiss_rate = 0.25 # trailing\n").unwrap();
        assert_eq!(n.miss_rate, 0.25);
    }

    #[test]
    fn counts_round_trip() {
        let c = CountSummary::new(4, 7);
        assert_eq!(parse_counts(&format_counts(&c)).unwrap(), c);
        assert!(parse_counts("left = 1\nright = 2\ntotal = 1\n").is_err());
    }
}
