//! KITTI-protocol evaluation: difficulty assignment, greedy matching,
//! precision/recall accumulation, interpolated AP at R11/R40, and average
//! orientation similarity, for the 2D, BEV and 3D tasks.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::{iou_2d, iou_3d, iou_bev};
use crate::kitti_io::ObjectRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Difficulty {
    Easy,
    Moderate,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Moderate, Difficulty::Hard];

    pub fn name(&self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Moderate => "moderate",
            Difficulty::Hard => "hard",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Det2D,
    Bev,
    Det3D,
    Aos,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Det2D, Task::Bev, Task::Det3D, Task::Aos];

    pub fn name(&self) -> &'static str {
        match self {
            Task::Det2D => "2d",
            Task::Bev => "bev",
            Task::Det3D => "3d",
            Task::Aos => "aos",
        }
    }
}

/// Thresholds one difficulty level places on a ground-truth object.
#[derive(Debug, Clone, Copy)]
pub struct DifficultyRule {
    pub min_box_height: f64,
    pub max_occlusion: i32,
    pub max_truncation: f64,
}

/// The rule triple; defaults follow the public devkit convention.
#[derive(Debug, Clone, Copy)]
pub struct DifficultyRules {
    pub easy: DifficultyRule,
    pub moderate: DifficultyRule,
    pub hard: DifficultyRule,
}

impl Default for DifficultyRules {
    fn default() -> Self {
        DifficultyRules {
            easy: DifficultyRule { min_box_height: 40.0, max_occlusion: 0, max_truncation: 0.15 },
            moderate: DifficultyRule { min_box_height: 25.0, max_occlusion: 1, max_truncation: 0.30 },
            hard: DifficultyRule { min_box_height: 25.0, max_occlusion: 2, max_truncation: 0.50 },
        }
    }
}

impl DifficultyRules {
    pub fn rule(&self, d: Difficulty) -> &DifficultyRule {
        match d {
            Difficulty::Easy => &self.easy,
            Difficulty::Moderate => &self.moderate,
            Difficulty::Hard => &self.hard,
        }
    }
}

/// Easiest level whose thresholds the object satisfies; None means the
/// object is ignored (neither positive nor false positive) at every level.
pub fn assign_difficulty(gt: &ObjectRecord, rules: &DifficultyRules) -> Option<Difficulty> {
    let h = gt.box_height_px();
    for d in Difficulty::ALL {
        let r = rules.rule(d);
        if h >= r.min_box_height && gt.occlusion <= r.max_occlusion && gt.truncation <= r.max_truncation {
            return Some(d);
        }
    }
    None
}

/// Ground-truth role during matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GtStatus {
    /// counts toward recall; a match is a true positive
    Counted,
    /// too hard for the current level: matches produce neither TP nor FP
    Ignored,
    /// DontCare region: detections overlapping it are discarded from FP
    DontCare,
}

/// Per-frame matching outcome. True positives carry (score, rotation-y
/// error) so AOS can reuse 2D matchings.
#[derive(Debug, Clone, Default)]
pub struct FrameMatch {
    pub tp: Vec<(f64, f64)>,
    pub fp_scores: Vec<f64>,
    pub num_counted_gt: usize,
    /// per detection (input order): index of the matched ground truth
    pub assignments: Vec<Option<usize>>,
}

/// Greedy one-to-one matching: detections in descending score order each
/// take the highest-overlap unmatched ground truth meeting the threshold.
/// Unmatched detections overlapping a DontCare region above the threshold
/// (2D overlap) are discarded rather than counted as false positives.
pub fn match_detections(
    dets: &[ObjectRecord],
    gts: &[ObjectRecord],
    gt_status: &[GtStatus],
    overlap_fn: &dyn Fn(&ObjectRecord, &ObjectRecord) -> f64,
    iou_threshold: f64,
) -> FrameMatch {
    assert_eq!(gts.len(), gt_status.len());
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b].score.unwrap_or(0.0).total_cmp(&dets[a].score.unwrap_or(0.0)).then(a.cmp(&b))
    });
    let mut gt_taken = vec![false; gts.len()];
    let mut result = FrameMatch {
        num_counted_gt: gt_status.iter().filter(|&&s| s == GtStatus::Counted).count(),
        assignments: vec![None; dets.len()],
        ..Default::default()
    };
    for &di in &order {
        let det = &dets[di];
        let score = det.score.unwrap_or(0.0);
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gts.iter().enumerate() {
            if gt_taken[gi] || gt_status[gi] == GtStatus::DontCare {
                continue;
            }
            let ov = overlap_fn(det, gt);
            if ov >= iou_threshold && best.is_none_or(|(_, b)| ov > b) {
                best = Some((gi, ov));
            }
        }
        match best {
            Some((gi, _)) => {
                gt_taken[gi] = true;
                result.assignments[di] = Some(gi);
                if gt_status[gi] == GtStatus::Counted {
                    result.tp.push((score, det.rotation_y - gts[gi].rotation_y));
                }
                // matches to ignored ground truths produce neither TP nor FP
            }
            None => {
                let in_dontcare = gts.iter().zip(gt_status.iter()).any(|(gt, &s)| {
                    s == GtStatus::DontCare && iou_2d(&det.box2d, &gt.box2d) >= iou_threshold
                });
                if !in_dontcare {
                    result.fp_scores.push(score);
                }
            }
        }
    }
    result
}

/// One scored detection outcome flowing into a PR curve.
#[derive(Debug, Clone, Copy)]
enum Outcome {
    Tp { similarity: f64 },
    Fp,
}

/// Precision/recall samples; `weighted` carries the orientation-similarity
/// analog of precision for AOS.
#[derive(Debug, Clone, Default)]
pub struct PrCurve {
    /// (recall, precision, orientation-weighted precision)
    pub points: Vec<(f64, f64, f64)>,
    pub num_gt: usize,
}

fn build_curve(mut entries: Vec<(f64, Outcome)>, num_gt: usize) -> PrCurve {
    entries.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut sim_sum = 0.0;
    let mut points = Vec::with_capacity(entries.len());
    for (_, outcome) in entries {
        match outcome {
            Outcome::Tp { similarity } => {
                tp += 1;
                sim_sum += similarity;
            }
            Outcome::Fp => fp += 1,
        }
        if num_gt > 0 {
            let recall = tp as f64 / num_gt as f64;
            let precision = tp as f64 / (tp + fp) as f64;
            let weighted = sim_sum / (tp + fp) as f64;
            points.push((recall, precision, weighted));
        }
    }
    PrCurve { points, num_gt }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApMode {
    R11,
    R40,
}

fn recall_samples(mode: ApMode) -> Vec<f64> {
    match mode {
        // legacy 11-point rule includes recall 0.0
        ApMode::R11 => (0..=10).map(|i| i as f64 / 10.0).collect(),
        // the 40-point correction excludes it
        ApMode::R40 => (1..=40).map(|i| i as f64 / 40.0).collect(),
    }
}

fn interpolated_mean(points: &[(f64, f64)], mode: ApMode) -> f64 {
    let samples = recall_samples(mode);
    let mut total = 0.0;
    for &r in &samples {
        // monotone interpolation: max precision at recall >= r
        let p = points
            .iter()
            .filter(|(recall, _)| *recall >= r - 1e-12)
            .map(|&(_, p)| p)
            .fold(0.0, f64::max);
        total += p;
    }
    total / samples.len() as f64
}

/// Interpolated average precision over an explicit (recall, precision)
/// curve.
pub fn average_precision(pr_curve: &[(f64, f64)], mode: ApMode) -> f64 {
    interpolated_mean(pr_curve, mode)
}

/// AP-style accumulation where each true positive contributes
/// (1 + cos(delta ry)) / 2 instead of 1.
pub fn average_orientation_similarity(curve: &PrCurve, mode: ApMode) -> f64 {
    let pts: Vec<(f64, f64)> = curve.points.iter().map(|&(r, _, w)| (r, w)).collect();
    interpolated_mean(&pts, mode)
}

/// Evaluation grid configuration.
#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub class_names: Vec<String>,
    pub iou_thresholds: Vec<f64>,
    pub rules: DifficultyRules,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            class_names: vec!["Car".to_string()],
            iou_thresholds: vec![0.5, 0.7],
            rules: DifficultyRules::default(),
        }
    }
}

/// One cell of the result grid.
#[derive(Debug, Clone)]
pub struct EvalEntry {
    pub class_name: String,
    pub difficulty: Difficulty,
    pub task: Task,
    pub iou_threshold: f64,
    pub ap_r11: f64,
    pub ap_r40: f64,
    pub curve: PrCurve,
}

#[derive(Debug, Clone, Default)]
pub struct EvalResult {
    pub entries: Vec<EvalEntry>,
}

impl EvalResult {
    pub fn get(&self, class: &str, d: Difficulty, task: Task, thr: f64) -> Option<&EvalEntry> {
        self.entries.iter().find(|e| {
            e.class_name == class
                && e.difficulty == d
                && e.task == task
                && (e.iou_threshold - thr).abs() < 1e-9
        })
    }
}

type OverlapFn = Box<dyn Fn(&ObjectRecord, &ObjectRecord) -> f64>;

fn task_overlap(task: Task) -> OverlapFn {
    match task {
        Task::Det2D | Task::Aos => Box::new(|d: &ObjectRecord, g: &ObjectRecord| iou_2d(&d.box2d, &g.box2d)),
        Task::Bev => Box::new(|d: &ObjectRecord, g: &ObjectRecord| iou_bev(&d.box3d(), &g.box3d())),
        Task::Det3D => Box::new(|d: &ObjectRecord, g: &ObjectRecord| iou_3d(&d.box3d(), &g.box3d())),
    }
}

/// Full result grid over tasks x difficulties x thresholds x classes,
/// under both AP modes.
pub fn evaluate(
    dets_by_frame: &BTreeMap<String, Vec<ObjectRecord>>,
    gts_by_frame: &BTreeMap<String, Vec<ObjectRecord>>,
    config: &EvalConfig,
) -> Result<EvalResult> {
    for frame in dets_by_frame.keys() {
        if !gts_by_frame.contains_key(frame) {
            return Err(Error::Consistency(format!(
                "frame {frame} has detections but no ground truth"
            )));
        }
    }
    let mut result = EvalResult::default();
    for class in &config.class_names {
        for difficulty in Difficulty::ALL {
            for task in Task::ALL {
                let overlap = task_overlap(task);
                for &thr in &config.iou_thresholds {
                    let mut entries: Vec<(f64, Outcome)> = Vec::new();
                    let mut num_gt = 0usize;
                    for (frame, gts) in gts_by_frame {
                        let dets: Vec<ObjectRecord> = dets_by_frame
                            .get(frame)
                            .map(|ds| ds.iter().filter(|d| &d.class_name == class).cloned().collect())
                            .unwrap_or_default();
                        let frame_gts: Vec<ObjectRecord> = gts
                            .iter()
                            .filter(|g| &g.class_name == class || g.is_dontcare())
                            .cloned()
                            .collect();
                        let status: Vec<GtStatus> = frame_gts
                            .iter()
                            .map(|g| {
                                if g.is_dontcare() {
                                    GtStatus::DontCare
                                } else {
                                    match assign_difficulty(g, &config.rules) {
                                        Some(d) if d <= difficulty => GtStatus::Counted,
                                        _ => GtStatus::Ignored,
                                    }
                                }
                            })
                            .collect();
                        let m = match_detections(&dets, &frame_gts, &status, overlap.as_ref(), thr);
                        num_gt += m.num_counted_gt;
                        for &(score, dry) in &m.tp {
                            let similarity = (1.0 + dry.cos()) / 2.0;
                            entries.push((score, Outcome::Tp { similarity }));
                        }
                        for &score in &m.fp_scores {
                            entries.push((score, Outcome::Fp));
                        }
                    }
                    let curve = build_curve(entries, num_gt);
                    let (ap_r11, ap_r40) = match task {
                        Task::Aos => (
                            average_orientation_similarity(&curve, ApMode::R11),
                            average_orientation_similarity(&curve, ApMode::R40),
                        ),
                        _ => {
                            let pts: Vec<(f64, f64)> =
                                curve.points.iter().map(|&(r, p, _)| (r, p)).collect();
                            (
                                average_precision(&pts, ApMode::R11),
                                average_precision(&pts, ApMode::R40),
                            )
                        }
                    };
                    result.entries.push(EvalEntry {
                        class_name: class.clone(),
                        difficulty,
                        task,
                        iou_threshold: thr,
                        ap_r11,
                        ap_r40,
                        curve,
                    });
                }
            }
        }
    }
    Ok(result)
}
