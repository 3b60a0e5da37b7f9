//! CLEAR-MOT, identity and counting metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::assignment::{solve_assignment, CostMatrix};
use crate::counting::CountSummary;
use crate::error::{Error, Result};
use crate::geometry::HeadBox;
use crate::scalar::Real;
use crate::tracker::FrameOutput;

/// Labelled boxes per frame, used for both ground truth and hypotheses.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectories<T> {
    pub frames: BTreeMap<u32, Vec<(u64, HeadBox<T>)>>,
    /// Last frame of the sequence when known; otherwise the last frame with boxes.
    pub num_frames: Option<u32>,
}

pub type GroundTruthSequence<T> = Trajectories<T>;

impl<T: Real> Trajectories<T> {
    pub fn new() -> Self {
        Self {
            frames: BTreeMap::new(),
            num_frames: None,
        }
    }

    pub fn push(&mut self, frame: u32, id: u64, bbox: HeadBox<T>) {
        self.frames.entry(frame).or_default().push((id, bbox));
    }

    /// Confirmed tracker outputs; predicted boxes are kept only when asked for.
    pub fn from_outputs(frames: &[FrameOutput<T>], include_predicted: bool) -> Self {
        let mut t = Self::new();
        for f in frames {
            t.frames.insert(
                f.frame,
                f.confirmed(include_predicted).map(|e| (e.id, e.bbox)).collect(),
            );
        }
        t
    }

    pub fn last_frame(&self) -> u32 {
        self.num_frames
            .unwrap_or_else(|| self.frames.keys().next_back().copied().unwrap_or(0))
    }

    pub fn box_count(&self) -> usize {
        self.frames.values().map(Vec::len).sum()
    }

    pub fn ids(&self) -> BTreeSet<u64> {
        self.frames.values().flatten().map(|(id, _)| *id).collect()
    }

    pub fn frame(&self, frame: u32) -> &[(u64, HeadBox<T>)] {
        self.frames.get(&frame).map_or(&[], Vec::as_slice)
    }

    fn check_unique_ids(&self) -> Result<()> {
        for (frame, boxes) in &self.frames {
            let mut seen = BTreeSet::new();
            if boxes.iter().any(|(id, _)| !seen.insert(*id)) {
                return Err(Error::Evaluation(format!("duplicate id in frame {frame}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MotReport {
    pub mota: f64,
    pub motp: f64,
    pub idf1: f64,
    pub idp: f64,
    pub idr: f64,
    pub idsw: u64,
    pub matches: u64,
    pub fp: u64,
    pub fn_: u64,
    pub faf: f64,
    pub precision: f64,
    pub recall: f64,
    pub mt: u64,
    pub pt: u64,
    pub ml: u64,
    pub num_gt: u64,
    pub num_frames: u64,
}

fn check_frames<T: Real>(gt: &Trajectories<T>, hyp: &Trajectories<T>) -> Result<u32> {
    gt.check_unique_ids()?;
    hyp.check_unique_ids()?;
    let last = gt.last_frame();
    if let Some((&first, _)) = hyp.frames.iter().next().filter(|_| !hyp.frames.is_empty()) {
        let hyp_last = hyp.last_frame();
        if first == 0 || hyp_last > last {
            return Err(Error::Evaluation(format!(
                "hypothesis frames {first}..={hyp_last} fall outside ground truth frames 1..={last}"
            )));
        }
    }
    Ok(last)
}

/// CLEAR-MOT accumulation with correspondence carry-over.
pub fn clear_mot<T: Real>(gt: &Trajectories<T>, hyp: &Trajectories<T>, iou_threshold: T) -> Result<MotReport> {
    let last = check_frames(gt, hyp)?;
    let mut report = MotReport {
        num_frames: u64::from(last),
        ..MotReport::default()
    };
    // Current correspondence (carried over) and the last hypothesis matched to each gt.
    let mut active: BTreeMap<u64, u64> = BTreeMap::new();
    let mut last_match: BTreeMap<u64, u64> = BTreeMap::new();
    let mut gt_frames: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
    let mut dist_sum = 0.0f64;

    let frames: BTreeSet<u32> = gt.frames.keys().chain(hyp.frames.keys()).copied().collect();
    for f in frames {
        let g = gt.frame(f);
        let h = hyp.frame(f);
        let mut g_used = vec![false; g.len()];
        let mut h_used = vec![false; h.len()];
        let mut pairs: Vec<(usize, usize)> = Vec::new();

        for (gi, (gid, gbox)) in g.iter().enumerate() {
            if let Some(&hid) = active.get(gid) {
                if let Some(hi) = h.iter().position(|(id, _)| *id == hid) {
                    if !h_used[hi] && gbox.iou(&h[hi].1) >= iou_threshold {
                        g_used[gi] = true;
                        h_used[hi] = true;
                        pairs.push((gi, hi));
                    }
                }
            }
        }

        let g_free: Vec<usize> = (0..g.len()).filter(|&i| !g_used[i]).collect();
        let h_free: Vec<usize> = (0..h.len()).filter(|&i| !h_used[i]).collect();
        let costs = CostMatrix::from_fn(g_free.len(), h_free.len(), |r, c| {
            let iou = g[g_free[r]].1.iou(&h[h_free[c]].1);
            if iou >= iou_threshold {
                T::one() - iou
            } else {
                T::infinity()
            }
        });
        for (r, c) in solve_assignment(&costs, T::one()).pairs {
            let (gi, hi) = (g_free[r], h_free[c]);
            g_used[gi] = true;
            h_used[hi] = true;
            pairs.push((gi, hi));
            let (gid, hid) = (g[gi].0, h[hi].0);
            if last_match.get(&gid).is_some_and(|&prev| prev != hid) {
                report.idsw += 1;
            }
        }

        active.clear();
        for &(gi, hi) in &pairs {
            let (gid, hid) = (g[gi].0, h[hi].0);
            active.insert(gid, hid);
            last_match.insert(gid, hid);
            dist_sum += 1.0 - g[gi].1.iou(&h[hi].1).as_f64();
        }
        for (gi, (gid, _)) in g.iter().enumerate() {
            let e = gt_frames.entry(*gid).or_default();
            e.0 += 1;
            if g_used[gi] {
                e.1 += 1;
            }
        }
        report.matches += pairs.len() as u64;
        report.fp += h_used.iter().filter(|u| !**u).count() as u64;
        report.fn_ += g_used.iter().filter(|u| !**u).count() as u64;
        report.num_gt += g.len() as u64;
    }

    let num_gt = report.num_gt as f64;
    let errors = (report.fp + report.fn_ + report.idsw) as f64;
    report.mota = if num_gt > 0.0 { 100.0 - 100.0 * errors / num_gt } else { 0.0 };
    report.motp = if report.matches > 0 {
        100.0 * dist_sum / report.matches as f64
    } else {
        0.0
    };
    report.faf = if last > 0 { report.fp as f64 / f64::from(last) } else { 0.0 };
    report.precision = ratio(report.matches, report.matches + report.fp);
    report.recall = ratio(report.matches, report.num_gt);
    for &(len, tracked) in gt_frames.values() {
        let frac = tracked as f64 / len as f64;
        if frac >= 0.8 {
            report.mt += 1;
        } else if frac <= 0.2 {
            report.ml += 1;
        } else {
            report.pt += 1;
        }
    }
    let id = identity_metrics(gt, hyp, iou_threshold)?;
    report.idf1 = id.idf1;
    report.idp = id.idp;
    report.idr = id.idr;
    Ok(report)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IdentityReport {
    pub idtp: u64,
    pub idfp: u64,
    pub idfn: u64,
    pub idp: f64,
    pub idr: f64,
    pub idf1: f64,
}

/// Sorted gt ids, sorted hypothesis ids and per-pair overlap counts.
pub type OverlapCounts = (Vec<u64>, Vec<u64>, BTreeMap<(u64, u64), u64>);

/// Frames in which gt `g` and hypothesis `h` overlap by at least the threshold, per pair.
pub fn overlap_counts<T: Real>(
    gt: &Trajectories<T>,
    hyp: &Trajectories<T>,
    iou_threshold: T,
) -> OverlapCounts {
    let gt_ids: Vec<u64> = gt.ids().into_iter().collect();
    let hyp_ids: Vec<u64> = hyp.ids().into_iter().collect();
    let mut overlap = BTreeMap::new();
    for (f, g) in &gt.frames {
        for (gid, gbox) in g {
            for (hid, hbox) in hyp.frame(*f) {
                if gbox.iou(hbox) >= iou_threshold {
                    *overlap.entry((*gid, *hid)).or_insert(0u64) += 1;
                }
            }
        }
    }
    (gt_ids, hyp_ids, overlap)
}

/// IDP / IDR / IDF1 from the best one-to-one trajectory matching.
pub fn identity_metrics<T: Real>(gt: &Trajectories<T>, hyp: &Trajectories<T>, iou_threshold: T) -> Result<IdentityReport> {
    check_frames(gt, hyp)?;
    let (gt_ids, hyp_ids, overlap) = overlap_counts(gt, hyp, iou_threshold);
    let costs = CostMatrix::from_fn(gt_ids.len(), hyp_ids.len(), |r, c| {
        -(overlap.get(&(gt_ids[r], hyp_ids[c])).copied().unwrap_or(0) as f64)
    });
    let idtp: u64 = solve_assignment(&costs, 0.0)
        .pairs
        .iter()
        .map(|&(r, c)| overlap.get(&(gt_ids[r], hyp_ids[c])).copied().unwrap_or(0))
        .sum();
    Ok(identity_from_counts(idtp, gt.box_count() as u64, hyp.box_count() as u64))
}

pub(crate) fn identity_from_counts(idtp: u64, gt_boxes: u64, hyp_boxes: u64) -> IdentityReport {
    let idfn = gt_boxes - idtp;
    let idfp = hyp_boxes - idtp;
    IdentityReport {
        idtp,
        idfp,
        idfn,
        idp: ratio(idtp, idtp + idfp),
        idr: ratio(idtp, idtp + idfn),
        idf1: ratio(2 * idtp, 2 * idtp + idfp + idfn),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CountReport {
    pub mae: f64,
    pub rmse: f64,
    /// Percent.
    pub mape: f64,
    /// Positive when overcounting.
    pub me: f64,
}

/// Error statistics over `(predicted, true)` count pairs. True counts must be positive.
pub fn counting_metrics(pairs: &[(f64, f64)]) -> Result<CountReport> {
    if pairs.is_empty() {
        return Err(Error::Evaluation("no count pairs".into()));
    }
    if let Some((_, t)) = pairs.iter().find(|(_, t)| !(*t > 0.0)) {
        return Err(Error::Evaluation(format!("true count {t} is not positive")));
    }
    let n = pairs.len() as f64;
    let mae = pairs.iter().map(|(p, t)| (p - t).abs()).sum::<f64>() / n;
    let rmse = (pairs.iter().map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n).sqrt();
    let mape = 100.0 * pairs.iter().map(|(p, t)| (p - t).abs() / t).sum::<f64>() / n;
    let me = pairs.iter().map(|(p, t)| p - t).sum::<f64>() / n;
    Ok(CountReport { mae, rmse, mape, me })
}

/// One row of the per-sequence table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRow {
    pub name: String,
    pub mot: MotReport,
    pub counts: CountSummary,
    pub truth: u32,
}

impl SequenceRow {
    pub fn mape(&self) -> f64 {
        if self.truth == 0 {
            return 0.0;
        }
        100.0 * (f64::from(self.counts.total) - f64::from(self.truth)).abs() / f64::from(self.truth)
    }

    fn cells(&self) -> Vec<String> {
        let m = &self.mot;
        vec![
            self.name.clone(),
            format!("{:.2}", m.mota),
            format!("{:.2}", m.motp),
            format!("{:.2}", m.idf1),
            format!("{:.2}", m.idp),
            format!("{:.2}", m.idr),
            m.idsw.to_string(),
            m.matches.to_string(),
            m.fp.to_string(),
            m.fn_.to_string(),
            format!("{:.2}", m.faf),
            format!("{:.2}", m.precision),
            format!("{:.2}", m.recall),
            m.mt.to_string(),
            m.pt.to_string(),
            m.ml.to_string(),
            self.counts.left.to_string(),
            self.counts.right.to_string(),
            self.counts.total.to_string(),
            self.truth.to_string(),
            format!("{:.2}", self.mape()),
        ]
    }
}

/// Column order of the per-sequence table.
pub const SEQUENCE_COLUMNS: [&str; 21] = [
    "Video", "MOTA", "MOTP", "IDF1", "IDP", "IDR", "IDSW", "Matches", "FP", "Misses", "FAF",
    "Precision", "Recall", "MT", "PT", "ML", "LC", "RC", "TC", "TV", "MAPE",
];

pub fn sequence_table_csv(rows: &[SequenceRow]) -> String {
    let mut out = SEQUENCE_COLUMNS.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.cells().join(","));
        out.push('\n');
    }
    out
}

pub fn sequence_table_text(rows: &[SequenceRow]) -> String {
    let header: Vec<String> = SEQUENCE_COLUMNS.iter().map(|s| s.to_string()).collect();
    let body: Vec<Vec<String>> = rows.iter().map(SequenceRow::cells).collect();
    aligned_table(&header, &body)
}

/// Right-aligned plain-text table.
pub fn aligned_table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[String]| {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(header);
    for row in rows {
        line(row);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x: f64) -> HeadBox<f64> {
        HeadBox::new(x, 100.0, 1.0, 20.0)
    }

    fn traj(entries: &[(u32, u64, f64)]) -> Trajectories<f64> {
        let mut t = Trajectories::new();
        for &(f, id, x) in entries {
            t.push(f, id, bx(x));
        }
        t
    }

    #[test]
    fn perfect_tracking() {
        let gt = traj(&[(1, 1, 10.0), (1, 2, 100.0), (2, 1, 12.0), (2, 2, 98.0)]);
        let r = clear_mot(&gt, &gt, 0.5).unwrap();
        assert_eq!((r.mota, r.motp, r.idf1, r.idsw, r.faf), (100.0, 0.0, 100.0, 0, 0.0));
        assert_eq!(r.mt, 2);
    }

    #[test]
    fn missing_hypothesis_frame() {
        let gt = traj(&[(1, 1, 10.0), (2, 1, 10.0)]);
        let hyp = traj(&[(1, 5, 10.0)]);
        let r = clear_mot(&gt, &hyp, 0.5).unwrap();
        assert_eq!((r.fn_, r.fp, r.idsw), (1, 0, 0));
        assert_eq!(r.mota, 50.0);
    }

    #[test]
    fn identity_switch() {
        let gt = traj(&[(1, 1, 10.0), (2, 1, 10.0)]);
        let hyp = traj(&[(1, 5, 10.0), (2, 6, 10.0)]);
        let r = clear_mot(&gt, &hyp, 0.5).unwrap();
        assert_eq!(r.idsw, 1);
        assert_eq!(r.mota, 50.0);
    }

    #[test]
    fn fragmented_identity() {
        let mut entries = Vec::new();
        for f in 1..=10u32 {
            entries.push((f, 1u64, 10.0));
        }
        let gt = traj(&entries);
        let hyp = traj(
            &(1..=10u32)
                .map(|f| (f, if f <= 5 { 7 } else { 8 }, 10.0))
                .collect::<Vec<_>>(),
        );
        let id = identity_metrics(&gt, &hyp, 0.5).unwrap();
        assert_eq!(id.idf1, 50.0);
        let none = Trajectories::new();
        let id = identity_metrics(&gt, &none, 0.5).unwrap();
        assert_eq!((id.idr, id.idf1), (0.0, 0.0));
    }

    #[test]
    fn counting_metric_arithmetic() {
        let r = counting_metrics(&[(19.0, 19.0), (18.0, 19.0)]).unwrap();
        assert_eq!(r.mae, 0.5);
        assert!((r.rmse - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((r.mape - 100.0 / 38.0).abs() < 1e-12);
        assert_eq!(r.me, -0.5);
        let r = counting_metrics(&[(4.0, 4.0), (8.0, 8.0)]).unwrap();
        assert_eq!((r.mae, r.rmse, r.mape, r.me), (0.0, 0.0, 0.0, 0.0));
        let r = counting_metrics(&[(19.0, 18.0)]).unwrap();
        assert_eq!(format!("{:.2}", r.mape), "5.56");
        assert!(counting_metrics(&[(1.0, 0.0)]).is_err());
    }

    #[test]
    fn out_of_range_hypotheses_are_rejected() {
        let gt = traj(&[(1, 1, 10.0), (2, 1, 10.0)]);
        let hyp = traj(&[(7, 1, 10.0)]);
        assert!(matches!(clear_mot(&gt, &hyp, 0.5), Err(Error::Evaluation(_))));
    }

    #[test]
    fn table_columns() {
        let row = SequenceRow {
            name: "5".into(),
            mot: MotReport::default(),
            counts: CountSummary::new(19, 0),
            truth: 18,
        };
        let csv = sequence_table_csv(std::slice::from_ref(&row));
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "Video,MOTA,MOTP,IDF1,IDP,IDR,IDSW,Matches,FP,Misses,FAF,Precision,Recall,MT,PT,ML,LC,RC,TC,TV,MAPE"
        );
        assert!(lines.next().unwrap().ends_with(",19,0,19,18,5.56"));
        assert!(sequence_table_text(&[row]).contains("5.56"));
    }
}
