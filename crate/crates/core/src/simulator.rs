//! Seeded platform-approach scenes.
//!
//! A camera moves along its optical axis toward the platform end and
//! decelerates at a constant rate. Pedestrians stand beside the track at
//! fixed lateral offsets and drift slowly, so their image positions move
//! outward as the camera passes them. Ground-truth head boxes come from the
//! pinhole model; detections are corrupted copies with misses, occlusion
//! drop-outs, false positives and noisy appearance embeddings.
//!
//! Randomness comes from `Xoshiro256PlusPlus` seeded through `seed_from_u64`,
//! with independent streams for the scene layout and for the detector noise.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::association::{Detection, Embedding, EMBEDDING_DIM};
use crate::counting::{count_sequence, BandConfig, CountSummary};
use crate::error::{Error, Result};
use crate::geometry::{project, CameraIntrinsics, HeadBox, Point3D, MIN_DEPTH};
use crate::metrics::Trajectories;
use crate::tracker::{FrameOutput, TrackOutput, TrackStatus};

/// Lowest camera depth offset, in metres.
pub const MIN_CAMERA_DEPTH: f64 = 2.0;

const NOISE_STREAM: u64 = 0xD1B5_4A32_D192_ED03;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlatformSide {
    Left,
    Right,
    Both,
}

impl std::str::FromStr for PlatformSide {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" => Ok(Self::Left),
            "right" => Ok(Self::Right),
            "both" => Ok(Self::Both),
            other => Err(Error::Config(format!("unknown platform side '{other}'"))),
        }
    }
}

impl std::fmt::Display for PlatformSide {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Left => "left",
            Self::Right => "right",
            Self::Both => "both",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub seed: u64,
    pub num_pedestrians: usize,
    pub side: PlatformSide,
    /// Range of the lateral distance |X| from the optical axis (m).
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub head_height_mean: f64,
    pub head_height_std: f64,
    pub aspect_range: (f64, f64),
    /// Random-walk std of X and Y (m/√s).
    pub walk_std: f64,
    /// Camera depth offset at t = 0 (m).
    pub d0: f64,
    /// Initial camera speed toward the platform (m/s).
    pub v0: f64,
    /// Deceleration (m/s², ≥ 0).
    pub decel: f64,
    pub fps: f64,
    /// Sequence length (s).
    pub duration: f64,
    pub camera: CameraIntrinsics<f64>,
    /// Boxes shorter than this are invisible (px).
    pub min_height_px: f64,
    /// Initial depths are drawn so that each pedestrian crosses the centre of
    /// its counting band at a time drawn uniformly from this window, given as
    /// fractions of the duration.
    pub arrival_window: (f64, f64),
    /// When set, initial depths are drawn uniformly from this range instead.
    pub depth_range: Option<(f64, f64)>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_pedestrians: 20,
            side: PlatformSide::Left,
            x_range: (1.5, 5.0),
            y_range: (-0.3, 0.6),
            head_height_mean: 0.3,
            head_height_std: 0.02,
            aspect_range: (0.65, 0.85),
            walk_std: 0.02,
            d0: 50.0,
            v0: 8.0,
            decel: 0.8,
            fps: 25.0,
            duration: 10.0,
            camera: CameraIntrinsics::default(),
            min_height_px: 10.0,
            arrival_window: (0.2, 0.9),
            depth_range: None,
        }
    }
}

fn check_range(name: &str, r: (f64, f64)) -> Result<()> {
    if !(r.0.is_finite() && r.1.is_finite() && r.0 <= r.1) {
        return Err(Error::Config(format!("{name} must be an ordered finite range")));
    }
    Ok(())
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        check_range("x_range", self.x_range)?;
        check_range("y_range", self.y_range)?;
        check_range("aspect_range", self.aspect_range)?;
        check_range("arrival_window", self.arrival_window)?;
        if let Some(r) = self.depth_range {
            check_range("depth_range", r)?;
            if r.0 <= 0.0 {
                return Err(Error::Config("depth_range must be positive".into()));
            }
        }
        if self.x_range.0 < 0.0 || self.aspect_range.0 <= 0.0 {
            return Err(Error::Config("x_range and aspect_range must be non-negative".into()));
        }
        for (name, v) in [
            ("head_height_std", self.head_height_std),
            ("walk_std", self.walk_std),
            ("v0", self.v0),
            ("decel", self.decel),
            ("min_height_px", self.min_height_px),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative")));
            }
        }
        if !(self.head_height_mean > 0.0) {
            return Err(Error::Config("head_height_mean must be positive".into()));
        }
        if !(self.fps > 0.0 && self.duration > 0.0 && self.d0.is_finite()) {
            return Err(Error::Config("fps and duration must be positive".into()));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.fps
    }

    pub fn num_frames(&self) -> u32 {
        (self.duration * self.fps).round().max(1.0) as u32
    }

    /// Distance travelled by the camera after `t` seconds.
    pub fn travelled(&self, t: f64) -> f64 {
        let t = if self.decel > 0.0 { t.min(self.v0 / self.decel) } else { t };
        self.v0 * t - 0.5 * self.decel * t * t
    }

    /// Camera depth offset `d(t)`, floored at [`MIN_CAMERA_DEPTH`].
    pub fn camera_depth(&self, t: f64) -> f64 {
        (self.d0 - self.travelled(t)).max(MIN_CAMERA_DEPTH)
    }

    pub fn camera_speed(&self, t: f64) -> f64 {
        (self.v0 - self.decel * t).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Std of the centre jitter, as a fraction of the box height.
    pub center_jitter: f64,
    /// Std of the height jitter, as a fraction of the box height.
    pub height_jitter: f64,
    pub miss_rate: f64,
    pub occlusion_iou: f64,
    pub occlusion_miss_rate: f64,
    /// Poisson mean of false positives per frame.
    pub false_positives: f64,
    pub embedding_dim: usize,
    /// Per-component Gaussian noise added to identity embeddings.
    pub embedding_noise: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            center_jitter: 0.02,
            height_jitter: 0.03,
            miss_rate: 0.1,
            occlusion_iou: 0.3,
            occlusion_miss_rate: 0.5,
            false_positives: 1.0,
            embedding_dim: EMBEDDING_DIM,
            embedding_noise: 0.06,
        }
    }
}

impl NoiseConfig {
    /// No jitter, misses or false positives; embeddings are exact.
    pub fn noiseless() -> Self {
        Self {
            center_jitter: 0.0,
            height_jitter: 0.0,
            miss_rate: 0.0,
            occlusion_iou: 1.0,
            occlusion_miss_rate: 0.0,
            false_positives: 0.0,
            embedding_dim: EMBEDDING_DIM,
            embedding_noise: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("miss_rate", self.miss_rate),
            ("occlusion_iou", self.occlusion_iou),
            ("occlusion_miss_rate", self.occlusion_miss_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        for (name, v) in [
            ("center_jitter", self.center_jitter),
            ("height_jitter", self.height_jitter),
            ("false_positives", self.false_positives),
            ("embedding_noise", self.embedding_noise),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative")));
            }
        }
        if self.embedding_dim == 0 {
            return Err(Error::Config("embedding_dim must be positive".into()));
        }
        Ok(())
    }
}

/// Fixed attributes of one simulated person.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pedestrian {
    pub id: u64,
    /// Signed lateral offset at t = 0 (negative is left of the axis).
    pub x: f64,
    pub y: f64,
    /// Depth relative to the camera offset: `Z(t) = d(t) + z_offset`.
    pub z_offset: f64,
    pub head_height: f64,
    pub aspect: f64,
}

/// A detection together with the ground-truth id it was derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDetection {
    pub detection: Detection<f64>,
    /// `None` for false positives.
    pub source: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimFrame {
    pub frame: u32,
    pub ground_truth: Vec<(u64, HeadBox<f64>)>,
    /// Camera-frame position of every visible pedestrian, aligned with `ground_truth`.
    pub positions: Vec<Point3D<f64>>,
    pub detections: Vec<SimDetection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSequence {
    pub name: String,
    pub scene: SceneConfig,
    pub noise: NoiseConfig,
    pub pedestrians: Vec<Pedestrian>,
    pub frames: Vec<SimFrame>,
    /// Per-side number of people that pass through the default counting band.
    pub truth: CountSummary,
}

impl SimulatedSequence {
    pub fn camera(&self) -> &CameraIntrinsics<f64> {
        &self.scene.camera
    }

    pub fn detections(&self) -> Vec<(u32, Vec<Detection<f64>>)> {
        self.frames
            .iter()
            .map(|f| (f.frame, f.detections.iter().map(|d| d.detection.clone()).collect()))
            .collect()
    }

    pub fn ground_truth(&self) -> Trajectories<f64> {
        let mut t = Trajectories::new();
        for f in &self.frames {
            t.frames.insert(f.frame, f.ground_truth.clone());
        }
        t.num_frames = self.frames.last().map(|f| f.frame);
        t
    }

    /// Ground truth presented as perfectly tracked, confirmed outputs.
    pub fn ideal_outputs(&self) -> Vec<FrameOutput<f64>> {
        self.frames
            .iter()
            .map(|f| FrameOutput {
                frame: f.frame,
                tracks: f
                    .ground_truth
                    .iter()
                    .map(|&(id, bbox)| TrackOutput {
                        id,
                        bbox,
                        status: TrackStatus::Confirmed,
                        predicted: false,
                    })
                    .collect(),
            })
            .collect()
    }

    /// Count an ideal tracker would report with `band`.
    pub fn band_reach(&self, band: &BandConfig<f64>) -> CountSummary {
        count_sequence(&self.ideal_outputs(), self.scene.camera.image_width, band)
    }

    /// Number of distinct pedestrians visible in at least one frame.
    pub fn visible_pedestrians(&self) -> usize {
        let ids: std::collections::BTreeSet<u64> = self
            .frames
            .iter()
            .flat_map(|f| f.ground_truth.iter().map(|(id, _)| *id))
            .collect();
        ids.len()
    }

    /// Keeps only frames `1..=last`, recomputing the truth.
    pub fn truncate(&mut self, last: u32) {
        self.frames.retain(|f| f.frame <= last);
        self.scene.duration = f64::from(last) / self.scene.fps;
        self.truth = self.band_reach(&BandConfig::default());
    }

    /// Removes the detections derived from `id` in the given frames.
    pub fn drop_detections(&mut self, id: u64, frames: impl IntoIterator<Item = u32>) {
        let frames: std::collections::BTreeSet<u32> = frames.into_iter().collect();
        for f in self.frames.iter_mut().filter(|f| frames.contains(&f.frame)) {
            f.detections.retain(|d| d.source != Some(id));
        }
    }
}

fn uniform(rng: &mut Xoshiro256PlusPlus, range: (f64, f64)) -> f64 {
    if range.1 > range.0 {
        rng.gen_range(range.0..range.1)
    } else {
        range.0
    }
}

fn random_unit(rng: &mut Xoshiro256PlusPlus, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Tangent of the viewing angle at the centre line of the default band on a side.
fn band_centre_tangent(cam: &CameraIntrinsics<f64>, left: bool) -> f64 {
    let band = BandConfig::<f64>::default();
    let mid = 0.5 * (band.start + band.end) * cam.image_width;
    if left {
        (cam.cx - mid) / cam.fx
    } else {
        (cam.image_width - mid - cam.cx) / cam.fx
    }
}

/// Draws the pedestrians of a scene from its seed.
pub fn sample_pedestrians(scene: &SceneConfig) -> Vec<Pedestrian> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(scene.seed);
    let height = Normal::new(scene.head_height_mean, scene.head_height_std).expect("validated std");
    (0..scene.num_pedestrians)
        .map(|i| {
            let left = match scene.side {
                PlatformSide::Left => true,
                PlatformSide::Right => false,
                PlatformSide::Both => rng.gen_bool(0.5),
            };
            let lateral = uniform(&mut rng, scene.x_range);
            let y = uniform(&mut rng, scene.y_range);
            let head_height = height.sample(&mut rng).max(0.1 * scene.head_height_mean);
            let aspect = uniform(&mut rng, scene.aspect_range);
            let z0 = match scene.depth_range {
                Some(r) => uniform(&mut rng, r),
                None => {
                    let tan = band_centre_tangent(&scene.camera, left).max(1e-3);
                    let t = uniform(&mut rng, scene.arrival_window) * scene.duration;
                    lateral / tan + scene.travelled(t)
                }
            };
            Pedestrian {
                id: i as u64 + 1,
                x: if left { -lateral } else { lateral },
                y,
                z_offset: z0 - scene.camera_depth(0.0),
                head_height,
                aspect,
            }
        })
        .collect()
}

/// Generates a scene with pedestrians drawn from its seed.
pub fn generate(scene: &SceneConfig, noise: &NoiseConfig) -> Result<SimulatedSequence> {
    scene.validate()?;
    let pedestrians = sample_pedestrians(scene);
    generate_with(scene, noise, pedestrians)
}

/// Generates a scene with the given pedestrians.
pub fn generate_with(scene: &SceneConfig, noise: &NoiseConfig, pedestrians: Vec<Pedestrian>) -> Result<SimulatedSequence> {
    scene.validate()?;
    noise.validate()?;
    let cam = scene.camera;
    let dt = scene.dt();
    let step = Normal::new(0.0, scene.walk_std * dt.sqrt()).expect("validated std");

    // Identity embeddings and walks come from the scene stream, after the layout draws.
    let mut scene_rng = Xoshiro256PlusPlus::seed_from_u64(scene.seed);
    scene_rng.jump();
    let identities: Vec<Vec<f64>> = pedestrians
        .iter()
        .map(|_| random_unit(&mut scene_rng, noise.embedding_dim))
        .collect();
    let mut noise_rng = Xoshiro256PlusPlus::seed_from_u64(scene.seed ^ NOISE_STREAM);

    let mut lateral: Vec<(f64, f64)> = pedestrians.iter().map(|p| (p.x, p.y)).collect();
    let mut frames = Vec::with_capacity(scene.num_frames() as usize);
    for k in 1..=scene.num_frames() {
        let t = f64::from(k - 1) * dt;
        if k > 1 {
            for xy in lateral.iter_mut() {
                xy.0 += step.sample(&mut scene_rng);
                xy.1 += step.sample(&mut scene_rng);
            }
        }
        let d = scene.camera_depth(t);

        let mut ground_truth = Vec::new();
        let mut positions = Vec::new();
        let mut owners = Vec::new();
        for (i, p) in pedestrians.iter().enumerate() {
            let point = Point3D::new(lateral[i].0, lateral[i].1, d + p.z_offset);
            if point.z < MIN_DEPTH {
                continue;
            }
            let (x, y) = project(&point, &cam)?;
            let h = cam.fy * p.head_height / point.z;
            let inside = x >= 0.0 && x < cam.image_width && y >= 0.0 && y < cam.image_height;
            if h >= scene.min_height_px && inside {
                ground_truth.push((p.id, HeadBox::new(x, y, p.aspect, h)));
                positions.push(point);
                owners.push(i);
            }
        }

        let mut detections = Vec::new();
        for (j, &(id, gt)) in ground_truth.iter().enumerate() {
            let occlusion = ground_truth
                .iter()
                .zip(&positions)
                .filter(|(_, q)| q.z < positions[j].z)
                .map(|((_, other), _)| gt.iou(other))
                .fold(0.0, f64::max);
            let drop_p = if occlusion > noise.occlusion_iou {
                noise.occlusion_miss_rate
            } else {
                noise.miss_rate
            };
            let u: f64 = noise_rng.gen();
            let jitter = [
                noise_rng.sample::<f64, _>(StandardNormal),
                noise_rng.sample::<f64, _>(StandardNormal),
                noise_rng.sample::<f64, _>(StandardNormal),
            ];
            if u < drop_p {
                continue;
            }
            let bbox = HeadBox::new(
                gt.x + jitter[0] * noise.center_jitter * gt.h,
                gt.y + jitter[1] * noise.center_jitter * gt.h,
                gt.a,
                (gt.h * (1.0 + jitter[2] * noise.height_jitter)).max(1.0),
            );
            let embedding = noisy_embedding(&identities[owners[j]], noise.embedding_noise, &mut noise_rng)?;
            let confidence = (0.95 - 0.4 * occlusion).clamp(0.0, 1.0);
            detections.push(SimDetection {
                detection: Detection::new(bbox, confidence, Some(embedding)),
                source: Some(id),
            });
        }
        if noise.false_positives > 0.0 {
            let n = Poisson::new(noise.false_positives)
                .map_err(|e| Error::Config(format!("false positive rate: {e}")))?
                .sample(&mut noise_rng) as usize;
            for _ in 0..n {
                let h = noise_rng.gen_range(scene.min_height_px.max(1.0)..scene.min_height_px.max(1.0) + 50.0);
                let bbox = HeadBox::new(
                    noise_rng.gen_range(0.0..cam.image_width),
                    noise_rng.gen_range(0.0..cam.image_height),
                    uniform(&mut noise_rng, scene.aspect_range),
                    h,
                );
                let embedding = Embedding::normalized(random_unit(&mut noise_rng, noise.embedding_dim))?;
                let confidence = noise_rng.gen_range(0.5..0.7);
                detections.push(SimDetection {
                    detection: Detection::new(bbox, confidence, Some(embedding)),
                    source: None,
                });
            }
        }

        frames.push(SimFrame {
            frame: k,
            ground_truth,
            positions,
            detections,
        });
    }

    let mut seq = SimulatedSequence {
        name: format!("sim-{:04}", scene.seed),
        scene: scene.clone(),
        noise: noise.clone(),
        pedestrians,
        frames,
        truth: CountSummary::default(),
    };
    seq.truth = seq.band_reach(&BandConfig::default());
    Ok(seq)
}

fn noisy_embedding(identity: &[f64], std: f64, rng: &mut Xoshiro256PlusPlus) -> Result<Embedding<f64>> {
    if std == 0.0 {
        return Embedding::normalized(identity.to_vec());
    }
    let v = identity
        .iter()
        .map(|x| x + std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Embedding::normalized(v)
}

/// A hand-built sequence with its known outcome.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: &'static str,
    pub sequence: SimulatedSequence,
    pub expected: CountSummary,
    /// Expected identity switches of a correct tracker.
    pub expected_idsw: u64,
    /// Line-crossing count at `line_fraction` when the scenario defines one.
    pub expected_line: Option<(f64, u32)>,
}

fn scripted_scene(seed: u64) -> SceneConfig {
    SceneConfig {
        seed,
        num_pedestrians: 0,
        walk_std: 0.0,
        ..SceneConfig::default()
    }
}

fn in_band_frames(seq: &SimulatedSequence, id: u64, band: &BandConfig<f64>) -> Vec<u32> {
    let w = seq.scene.camera.image_width;
    seq.frames
        .iter()
        .filter(|f| {
            f.ground_truth
                .iter()
                .any(|(gid, b)| *gid == id && crate::counting::band_membership(b.x, w, band).is_some())
        })
        .map(|f| f.frame)
        .collect()
}

fn occlusion_three() -> Result<Scenario> {
    let scene = SceneConfig {
        v0: 3.0,
        decel: 0.2,
        ..scripted_scene(101)
    };
    let ped = Pedestrian {
        id: 1,
        x: -2.0,
        y: 0.2,
        z_offset: 2.0 / band_centre_tangent(&scene.camera, true) + scene.travelled(5.0) - scene.d0,
        head_height: 0.3,
        aspect: 0.75,
    };
    let mut seq = generate_with(&scene, &NoiseConfig::noiseless(), vec![ped])?;
    let band = in_band_frames(&seq, 1, &BandConfig::default());
    if band.len() < 8 {
        return Err(Error::Config("occlusion-3 scene leaves the band too quickly".into()));
    }
    let hidden = band[3]..band[3] + 3;
    seq.drop_detections(1, hidden);
    seq.name = "occlusion-3".into();
    Ok(Scenario {
        name: "occlusion-3",
        sequence: seq,
        expected: CountSummary::new(1, 0),
        expected_idsw: 0,
        expected_line: None,
    })
}

fn crossing_pair() -> Result<Scenario> {
    // Image rays cross when the nearer person is at Z = 10 m and the farther at 15 m.
    let scene = SceneConfig {
        v0: 6.0,
        decel: 0.3,
        duration: 9.0,
        ..scripted_scene(102)
    };
    let d0 = scene.camera_depth(0.0);
    let z_near = 10.0 + scene.travelled(3.0);
    let peds = vec![
        Pedestrian {
            id: 1,
            x: -1.5,
            y: 0.3,
            z_offset: z_near - d0,
            head_height: 0.3,
            aspect: 0.75,
        },
        Pedestrian {
            id: 2,
            x: -2.25,
            y: -0.3,
            z_offset: z_near + 5.0 - d0,
            head_height: 0.3,
            aspect: 0.75,
        },
    ];
    let mut seq = generate_with(&scene, &NoiseConfig::noiseless(), peds)?;
    // Orthogonal appearance.
    for f in seq.frames.iter_mut() {
        for d in f.detections.iter_mut() {
            let mut v = vec![0.0; EMBEDDING_DIM];
            v[d.source.unwrap_or(0) as usize] = 1.0;
            d.detection.embedding = Some(Embedding::normalized(v)?);
        }
    }
    seq.name = "crossing-pair".into();
    Ok(Scenario {
        name: "crossing-pair",
        sequence: seq,
        expected: CountSummary::new(2, 0),
        expected_idsw: 0,
        expected_line: None,
    })
}

fn edge_jitter() -> Result<Scenario> {
    // Static camera; a static head jitters by ±1 px around the band start.
    let scene = SceneConfig {
        v0: 0.0,
        decel: 0.0,
        duration: 2.0,
        ..scripted_scene(103)
    };
    let cam = scene.camera;
    let band = BandConfig::<f64>::default();
    let edge = band.start * cam.image_width;
    let h = 40.0;
    let embedding = {
        let mut v = vec![0.0; EMBEDDING_DIM];
        v[0] = 1.0;
        Embedding::normalized(v)?
    };
    let frames = (1..=scene.num_frames())
        .map(|k| {
            // Confirmation happens inside the band; afterwards the outside positions are missed.
            let inside = k <= 4 || k % 2 == 0;
            let x = if inside { edge + 1.0 } else { edge - 1.0 };
            let bbox = HeadBox::new(x, 600.0, 0.75, h);
            let detections = if inside {
                vec![SimDetection {
                    detection: Detection::new(bbox, 0.95, Some(embedding.clone())),
                    source: Some(1),
                }]
            } else {
                Vec::new()
            };
            let z = cam.fy * 0.3 / h;
            SimFrame {
                frame: k,
                ground_truth: vec![(1, bbox)],
                positions: vec![Point3D::new((x - cam.cx) * z / cam.fx, (600.0 - cam.cy) * z / cam.fy, z)],
                detections,
            }
        })
        .collect();
    let mut seq = SimulatedSequence {
        name: "edge-jitter".into(),
        scene,
        noise: NoiseConfig::noiseless(),
        pedestrians: Vec::new(),
        frames,
        truth: CountSummary::default(),
    };
    seq.truth = CountSummary::new(1, 0);
    Ok(Scenario {
        name: "edge-jitter",
        sequence: seq,
        expected: CountSummary::new(1, 0),
        expected_idsw: 0,
        expected_line: Some((band.start, 0)),
    })
}

fn end_of_video_partial() -> Result<Scenario> {
    let scene = SceneConfig {
        v0: 4.0,
        decel: 0.0,
        ..scripted_scene(104)
    };
    let ped = Pedestrian {
        id: 1,
        x: 2.5,
        y: 0.1,
        z_offset: 2.5 / band_centre_tangent(&scene.camera, false) + scene.travelled(6.0) - scene.d0,
        head_height: 0.3,
        aspect: 0.7,
    };
    let mut seq = generate_with(&scene, &NoiseConfig::noiseless(), vec![ped])?;
    // Cut the video one frame after the head has moved 20 px into the band.
    let cam = seq.scene.camera;
    let entry = BandConfig::<f64>::default().end;
    let inner = (1.0 - entry) * cam.image_width + 20.0;
    let last = seq
        .frames
        .iter()
        .find(|f| f.ground_truth.iter().any(|(_, b)| b.x >= inner))
        .map(|f| f.frame)
        .ok_or_else(|| Error::Config("end-of-video scene never reaches the band".into()))?;
    seq.truncate(last);
    seq.truth = CountSummary::new(0, 1);
    seq.name = "end-of-video".into();
    Ok(Scenario {
        name: "end-of-video",
        sequence: seq,
        expected: CountSummary::new(0, 1),
        expected_idsw: 0,
        expected_line: None,
    })
}

fn static_centre() -> Result<Scenario> {
    let scene = SceneConfig {
        v0: 0.0,
        decel: 0.0,
        duration: 3.0,
        ..scripted_scene(105)
    };
    let ped = Pedestrian {
        id: 1,
        x: 0.5,
        y: 0.0,
        z_offset: 8.0 - scene.d0,
        head_height: 0.3,
        aspect: 0.75,
    };
    let mut seq = generate_with(&scene, &NoiseConfig::noiseless(), vec![ped])?;
    seq.name = "static-centre".into();
    Ok(Scenario {
        name: "static-centre",
        sequence: seq,
        expected: CountSummary::new(0, 0),
        expected_idsw: 0,
        expected_line: None,
    })
}

/// Small sequences with analytically known counts and identities.
pub fn scripted_scenarios() -> Result<Vec<Scenario>> {
    Ok(vec![
        occlusion_three()?,
        crossing_pair()?,
        edge_jitter()?,
        end_of_video_partial()?,
        static_centre()?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(x: f64, scene: SceneConfig) -> SimulatedSequence {
        let ped = Pedestrian {
            id: 1,
            x,
            y: 0.0,
            z_offset: 10.0 - scene.d0,
            head_height: 0.3,
            aspect: 0.75,
        };
        generate_with(&scene, &NoiseConfig::noiseless(), vec![ped]).unwrap()
    }

    #[test]
    fn noiseless_detections_equal_ground_truth() {
        let seq = single(0.0, SceneConfig { v0: 1.0, decel: 0.0, duration: 4.0, walk_std: 0.0, ..SceneConfig::default() });
        let mut prev = 0.0;
        for f in &seq.frames {
            assert_eq!(f.detections.len(), 1);
            assert_eq!(f.detections[0].detection.bbox, f.ground_truth[0].1);
            assert!(f.ground_truth[0].1.h > prev);
            prev = f.ground_truth[0].1.h;
        }
    }

    #[test]
    fn height_is_constant_after_the_camera_stops() {
        let scene = SceneConfig { v0: 2.0, decel: 1.0, duration: 4.0, walk_std: 0.0, ..SceneConfig::default() };
        let seq = single(0.0, scene.clone());
        let stop = (2.0 * scene.fps) as usize;
        let hs: Vec<f64> = seq.frames.iter().map(|f| f.ground_truth[0].1.h).collect();
        assert!(hs[1] > hs[0]);
        for w in hs[stop + 1..].windows(2) {
            assert_eq!(w[0], w[1]);
        }
    }

    #[test]
    fn camera_depth_is_floored() {
        let scene = SceneConfig { d0: 5.0, v0: 10.0, decel: 0.0, ..SceneConfig::default() };
        assert_eq!(scene.camera_depth(100.0), MIN_CAMERA_DEPTH);
        assert_eq!(scene.camera_speed(0.0), 10.0);
    }

    #[test]
    fn same_seed_same_sequence() {
        let scene = SceneConfig { seed: 9, num_pedestrians: 15, ..SceneConfig::default() };
        let a = generate(&scene, &NoiseConfig::default()).unwrap();
        let b = generate(&scene, &NoiseConfig::default()).unwrap();
        assert_eq!(a, b);
        let c = generate(&SceneConfig { seed: 10, ..scene }, &NoiseConfig::default()).unwrap();
        assert_ne!(a.frames, c.frames);
    }

    #[test]
    fn heights_follow_the_pinhole_model() {
        let scene = SceneConfig { seed: 3, num_pedestrians: 30, side: PlatformSide::Both, ..SceneConfig::default() };
        let seq = generate(&scene, &NoiseConfig::default()).unwrap();
        for f in &seq.frames {
            for ((id, b), p) in f.ground_truth.iter().zip(&f.positions) {
                let ped = &seq.pedestrians[*id as usize - 1];
                assert!((b.h - scene.camera.fy * ped.head_height / p.z).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn every_default_pedestrian_reaches_the_band() {
        for seed in 0..5 {
            let scene = SceneConfig { seed, num_pedestrians: 25, side: PlatformSide::Both, ..SceneConfig::default() };
            let seq = generate(&scene, &NoiseConfig::default()).unwrap();
            assert_eq!((seq.truth.left + seq.truth.right) as usize, scene.num_pedestrians);
        }
    }

    #[test]
    fn detections_are_traceable() {
        let scene = SceneConfig { seed: 4, num_pedestrians: 30, ..SceneConfig::default() };
        let seq = generate(&scene, &NoiseConfig::default()).unwrap();
        let mut fps = 0;
        for f in &seq.frames {
            for d in &f.detections {
                match d.source {
                    Some(id) => assert!(f.ground_truth.iter().any(|(g, _)| *g == id)),
                    None => fps += 1,
                }
            }
        }
        assert!(fps > 0);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = NoiseConfig { miss_rate: 1.5, ..NoiseConfig::default() };
        assert!(generate(&SceneConfig::default(), &bad).is_err());
        let mut scene = SceneConfig::default();
        scene.camera.fx = 0.0;
        assert!(generate(&scene, &NoiseConfig::default()).is_err());
    }

    #[test]
    fn scenarios_build() {
        let all = scripted_scenarios().unwrap();
        assert_eq!(all.len(), 5);
        for s in &all {
            assert_eq!(s.sequence.truth, s.expected, "{}", s.name);
        }
    }
}
