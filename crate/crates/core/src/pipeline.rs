//! Sequence-level evaluation and the seeded benchmark.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counting::{count_sequence, mirrored_line_count, BandConfig, CountSummary};
use crate::error::{Error, Result};
use crate::metrics::{clear_mot, counting_metrics, CountReport, MotReport, SequenceRow, Trajectories};
use crate::motion::MotionModelKind;
use crate::simulator::{generate, NoiseConfig, PlatformSide, SceneConfig, SimulatedSequence};
use crate::tracker::{run_sequence, FrameOutput, TrackerConfig};

/// IoU threshold of the CLEAR-MOT and identity matching.
pub const EVAL_IOU: f64 = 0.5;

/// Maps `f` over `items` on `jobs` worker threads, keeping input order.
pub fn par_map<I, O, F>(items: &[I], jobs: usize, f: F) -> Result<Vec<O>>
where
    I: Sync,
    O: Send,
    F: Fn(&I) -> Result<O> + Sync + Send,
{
    if jobs <= 1 {
        return items.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| items.par_iter().map(&f).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceResult {
    pub name: String,
    pub model: MotionModelKind,
    pub counts: CountSummary,
    pub line: CountSummary,
    pub truth: CountSummary,
    pub mot: MotReport,
}

impl SequenceResult {
    pub fn row(&self) -> SequenceRow {
        SequenceRow {
            name: self.name.clone(),
            mot: self.mot,
            counts: self.counts,
            truth: self.truth.total,
        }
    }
}

/// Runs the tracker over a simulated sequence.
pub fn track_sequence(seq: &SimulatedSequence, config: &TrackerConfig<f64>) -> Result<Vec<FrameOutput<f64>>> {
    let config = TrackerConfig {
        fps: seq.scene.fps,
        ..*config
    };
    run_sequence(&seq.detections(), &config, seq.camera())
}

/// Tracks, counts and scores one sequence.
pub fn evaluate_sequence(
    seq: &SimulatedSequence,
    config: &TrackerConfig<f64>,
    band: &BandConfig<f64>,
    line_fraction: f64,
) -> Result<SequenceResult> {
    let outputs = track_sequence(seq, config)?;
    evaluate_outputs(seq, &outputs, config.model, band, line_fraction)
}

/// Counts and scores tracker outputs of a simulated sequence.
pub fn evaluate_outputs(
    seq: &SimulatedSequence,
    outputs: &[FrameOutput<f64>],
    model: MotionModelKind,
    band: &BandConfig<f64>,
    line_fraction: f64,
) -> Result<SequenceResult> {
    let width = seq.camera().image_width;
    let hyp = Trajectories::from_outputs(outputs, false);
    Ok(SequenceResult {
        name: seq.name.clone(),
        model,
        counts: count_sequence(outputs, width, band),
        line: mirrored_line_count(outputs, line_fraction, width),
        truth: seq.truth,
        mot: clear_mot(&seq.ground_truth(), &hyp, EVAL_IOU)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub sequences: usize,
    pub base_seed: u64,
    pub min_pedestrians: usize,
    pub max_pedestrians: usize,
    pub scene: SceneConfig,
    pub noise: NoiseConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            sequences: 20,
            base_seed: 2024,
            min_pedestrians: 10,
            max_pedestrians: 60,
            scene: SceneConfig::default(),
            noise: NoiseConfig::default(),
        }
    }
}

impl BenchmarkConfig {
    /// Scene of every benchmark sequence: pedestrian counts spread evenly over
    /// the configured range, platform side alternating.
    pub fn scenes(&self) -> Vec<SceneConfig> {
        let n = self.sequences;
        (0..n)
            .map(|i| {
                let span = self.max_pedestrians.saturating_sub(self.min_pedestrians);
                let peds = if n > 1 {
                    self.min_pedestrians + (i * span + (n - 1) / 2) / (n - 1)
                } else {
                    self.min_pedestrians
                };
                SceneConfig {
                    seed: self.base_seed + i as u64,
                    num_pedestrians: peds,
                    side: if i % 2 == 0 { PlatformSide::Left } else { PlatformSide::Right },
                    ..self.scene.clone()
                }
            })
            .collect()
    }

    pub fn generate(&self, jobs: usize) -> Result<Vec<SimulatedSequence>> {
        if self.sequences == 0 {
            return Err(Error::Config("benchmark needs at least one sequence".into()));
        }
        par_map(&self.scenes(), jobs, |s| generate(s, &self.noise))
    }
}

/// Aggregate scores of one configuration over a set of sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: MotionModelKind,
    pub band: CountReport,
    pub line: CountReport,
    pub idsw: u64,
    pub mota: f64,
    pub idf1: f64,
}

pub fn summarize(model: MotionModelKind, results: &[SequenceResult]) -> Result<ModelSummary> {
    if results.is_empty() {
        return Err(Error::Evaluation("no sequence results".into()));
    }
    let truth = |r: &SequenceResult| f64::from(r.truth.total);
    let band: Vec<(f64, f64)> = results.iter().map(|r| (f64::from(r.counts.total), truth(r))).collect();
    let line: Vec<(f64, f64)> = results.iter().map(|r| (f64::from(r.line.total), truth(r))).collect();
    let n = results.len() as f64;
    Ok(ModelSummary {
        model,
        band: counting_metrics(&band)?,
        line: counting_metrics(&line)?,
        idsw: results.iter().map(|r| r.mot.idsw).sum(),
        mota: results.iter().map(|r| r.mot.mota).sum::<f64>() / n,
        idf1: results.iter().map(|r| r.mot.idf1).sum::<f64>() / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRun {
    pub summary: ModelSummary,
    pub sequences: Vec<SequenceResult>,
}

/// Evaluates every model on every sequence; results are independent of `jobs`.
pub fn run_models(
    sequences: &[SimulatedSequence],
    models: &[MotionModelKind],
    base: &TrackerConfig<f64>,
    band: &BandConfig<f64>,
    jobs: usize,
) -> Result<Vec<ModelRun>> {
    let line_fraction = 0.5 * (band.start + band.end);
    let work: Vec<(usize, usize)> = (0..models.len())
        .flat_map(|m| (0..sequences.len()).map(move |s| (m, s)))
        .collect();
    let results = par_map(&work, jobs, |&(m, s)| {
        let config = TrackerConfig {
            model: models[m],
            ..*base
        };
        evaluate_sequence(&sequences[s], &config, band, line_fraction)
    })?;
    let mut runs = Vec::new();
    for (m, chunk) in results.chunks(sequences.len().max(1)).enumerate() {
        runs.push(ModelRun {
            summary: summarize(models[m], chunk)?,
            sequences: chunk.to_vec(),
        });
    }
    Ok(runs)
}

/// Band counts of tracker outputs under several band settings.
pub fn band_sweep(
    outputs: &[(Vec<FrameOutput<f64>>, f64, CountSummary)],
    bands: &[BandConfig<f64>],
) -> Result<Vec<(BandConfig<f64>, CountReport)>> {
    bands
        .iter()
        .map(|band| {
            band.validate()?;
            let pairs: Vec<(f64, f64)> = outputs
                .iter()
                .map(|(frames, width, truth)| (f64::from(count_sequence(frames, *width, band).total), f64::from(truth.total)))
                .collect();
            Ok((*band, counting_metrics(&pairs)?))
        })
        .collect()
}

/// Start/end grid of the band ablation, plus the degenerate `start = end` rows.
pub fn ablation_grid(starts: &[f64], ends: &[f64], persistence_n: u32) -> Vec<BandConfig<f64>> {
    let mut out = Vec::new();
    for &s in starts {
        for &e in ends {
            if s < e {
                out.push(BandConfig {
                    persistence_n,
                    ..BandConfig::with_bounds(s, e)
                });
            }
        }
    }
    for &s in starts {
        out.push(BandConfig {
            persistence_n,
            ..BandConfig::with_bounds(s, s)
        });
    }
    out
}

/// Sorts ablation rows by MAE, then RMSE; ties keep grid order.
pub fn rank_sweep(rows: &mut [(BandConfig<f64>, CountReport)]) {
    rows.sort_by(|a, b| {
        a.1.mae
            .total_cmp(&b.1.mae)
            .then(a.1.rmse.total_cmp(&b.1.rmse))
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_scenes_span_the_range() {
        let cfg = BenchmarkConfig::default();
        let scenes = cfg.scenes();
        assert_eq!(scenes.len(), 20);
        assert_eq!(scenes[0].num_pedestrians, 10);
        assert_eq!(scenes[19].num_pedestrians, 60);
        assert!(scenes.windows(2).all(|w| w[0].num_pedestrians <= w[1].num_pedestrians));
    }

    #[test]
    fn par_map_keeps_order() {
        let items: Vec<u32> = (0..50).collect();
        let a = par_map(&items, 1, |x| Ok(x * 2)).unwrap();
        let b = par_map(&items, 4, |x| Ok(x * 2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn grid_includes_degenerate_rows() {
        let g = ablation_grid(&[0.05, 0.1], &[0.1, 0.2], 2);
        assert_eq!(g.len(), 3 + 2);
        assert!(g.iter().filter(|b| b.is_degenerate()).count() == 2);
    }
}
