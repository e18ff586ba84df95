//! Monte-Carlo selection harness: gaze metrics, the three-arm accuracy
//! comparison and the identical-pair gap sweep.

use super::{detect_candidates, score_candidates, select_object, DetectorNoise, SelectionError};
use crate::gaze::{
    build_heatmap, gaze_point, simulate_gaze, GazeError, GazeParams, HeadPose, Heatmap, MonitorPlane,
    DEFAULT_PIXEL_PITCH, DEFAULT_VIEWING_DISTANCE,
};
use crate::geometry::PixelBox;
use crate::scene::{
    generate_pair_scene, generate_scene_with_pairs, render, CameraModel, MassClass, ObjectTemplate, RenderOutput,
};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Peak-relative density below which heatmap pixels are dropped for the IoU metric.
pub const SUPPORT_THRESHOLD: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GazeEvalReport {
    pub success_rate: f64,
    pub eval_iou: f64,
    /// Mean distance (px) from the gaze center to the true box, over failures only.
    pub mse_px: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GazeTrialMetrics {
    pub success: bool,
    pub iou: f64,
    pub miss_distance: f64,
}

/// Per-trial gaze metrics against the true box.
pub fn gaze_trial_metrics(heatmap: &Heatmap, truth: &PixelBox) -> GazeTrialMetrics {
    let (ax, ay) = heatmap.argmax();
    let success = truth.contains(ax, ay);
    let peak = heatmap.max_density();
    let floor = SUPPORT_THRESHOLD * peak;
    let w = heatmap.width as usize;
    let outside_support = heatmap
        .grid
        .iter()
        .enumerate()
        .filter(|(i, v)| **v >= floor && !truth.contains((i % w) as u32, (i / w) as u32))
        .count() as u64;
    let union = truth.area() + outside_support;
    // densities are taken relative to the peak so the ratio lives in [0, 1]
    let iou = heatmap.mass_in(truth) / peak / union as f64;
    let miss_distance = if success { 0.0 } else { truth.distance_to(heatmap.center.0, heatmap.center.1) };
    GazeTrialMetrics { success, iou, miss_distance }
}

pub fn summarize_gaze(trials: &[GazeTrialMetrics]) -> Result<GazeEvalReport, SelectionError> {
    if trials.is_empty() {
        return Err(SelectionError::EmptyBatch);
    }
    let n = trials.len() as f64;
    let failures: Vec<f64> = trials.iter().filter(|t| !t.success).map(|t| t.miss_distance).collect();
    Ok(GazeEvalReport {
        success_rate: trials.iter().filter(|t| t.success).count() as f64 / n,
        eval_iou: trials.iter().map(|t| t.iou).sum::<f64>() / n,
        mse_px: if failures.is_empty() { 0.0 } else { failures.iter().sum::<f64>() / failures.len() as f64 },
    })
}

pub fn evaluate_gaze(sessions: &[(Heatmap, PixelBox)]) -> Result<GazeEvalReport, SelectionError> {
    let metrics: Vec<GazeTrialMetrics> = sessions.iter().map(|(h, b)| gaze_trial_metrics(h, b)).collect();
    summarize_gaze(&metrics)
}

/// Simulated viewer in front of the monitor showing the scene image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GazeRig {
    pub pixel_pitch: f64,
    pub viewing_distance: f64,
    pub noise_deg: f64,
    pub frames: usize,
    pub params: GazeParams,
}

impl Default for GazeRig {
    fn default() -> Self {
        GazeRig {
            pixel_pitch: DEFAULT_PIXEL_PITCH,
            viewing_distance: DEFAULT_VIEWING_DISTANCE,
            noise_deg: 1.0,
            frames: 30,
            params: GazeParams::default(),
        }
    }
}

impl GazeRig {
    pub fn monitor(&self, width: u32, height: u32) -> MonitorPlane {
        MonitorPlane::desk(width, height, self.pixel_pitch)
    }

    pub fn head(&self, monitor: &MonitorPlane) -> HeadPose {
        HeadPose::centered(monitor, self.viewing_distance)
    }

    /// Heatmap after the viewer fixates image pixel `fixation` for `frames` frames.
    pub fn heatmap_for_fixation(&self, fixation: (f64, f64), width: u32, height: u32, seed: u64) -> Result<Heatmap, GazeError> {
        let monitor = self.monitor(width, height);
        let head = self.head(&monitor);
        let target = monitor.from_image(fixation.0, fixation.1);
        let frames = simulate_gaze(target, &monitor, &head, self.noise_deg, self.frames, seed)?;
        let (l, m) = gaze_point(&frames, &monitor, &head, &self.params)?;
        build_heatmap(monitor.to_image(l, m), width, height, self.params.sigma_px)
    }
}

/// SplitMix64 finalizer, used to derive independent per-trial seeds.
pub fn mix_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniformly chosen visible pixel of the target, the simulated fixation point.
fn fixation_on(render: &RenderOutput, object_id: &str, rng: &mut ChaCha8Rng) -> Option<(f64, f64)> {
    let pixels = render.object_pixels(object_id);
    pixels.choose(rng).map(|(x, y)| (*x as f64, *y as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Gaze,
    Language,
    Both,
}

impl std::str::FromStr for Arm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "gaze" => Ok(Arm::Gaze),
            "language" => Ok(Arm::Language),
            "both" => Ok(Arm::Both),
            other => Err(format!("unknown arm {other:?} (expected gaze, language or both)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionSuiteConfig {
    pub trials: usize,
    pub objects: usize,
    pub pairs: usize,
    pub rig: GazeRig,
    pub detector: DetectorNoise,
}

impl Default for SelectionSuiteConfig {
    fn default() -> Self {
        SelectionSuiteConfig { trials: 200, objects: 8, pairs: 2, rig: GazeRig::default(), detector: DetectorNoise::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub gaze: bool,
    pub language: bool,
    pub both: bool,
    pub gaze_metrics: GazeTrialMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmAccuracy {
    pub arm: Arm,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub trials: usize,
    pub seed: u64,
    pub arms: Vec<ArmAccuracy>,
    pub gaze: GazeEvalReport,
    /// Fused accuracy minus gaze-only accuracy, in percentage points.
    pub margin_over_gaze: f64,
    pub margin_over_language: f64,
}

impl SelectionReport {
    pub fn accuracy(&self, arm: Arm) -> Option<f64> {
        self.arms.iter().find(|a| a.arm == arm).map(|a| a.accuracy)
    }
}

/// One trial on a scene with identical pairs; the target is drawn from the paired objects.
pub fn selection_trial(cfg: &SelectionSuiteConfig, catalog: &[ObjectTemplate], seed: u64) -> Option<TrialOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = (0..8u64).find_map(|k| generate_scene_with_pairs(mix_seed(seed, k), cfg.objects, cfg.pairs, catalog).ok())?;
    let camera = CameraModel::default_for(&scene.table);
    let image = render(&scene, &camera);
    let paired: Vec<&crate::scene::SceneObject> = scene
        .objects
        .iter()
        .filter(|o| image.boxes.contains_key(&o.id) && scene.objects.iter().filter(|p| p.name == o.name).count() > 1)
        .collect();
    let pool: Vec<&crate::scene::SceneObject> =
        if paired.is_empty() { scene.objects.iter().filter(|o| image.boxes.contains_key(&o.id)).collect() } else { paired };
    let target = *pool.choose(&mut rng)?;
    let fixation = fixation_on(&image, &target.id, &mut rng)?;
    let heatmap = cfg.rig.heatmap_for_fixation(fixation, image.width, image.height, mix_seed(seed, 101)).ok()?;
    let truth = image.boxes[&target.id];

    let everything: Vec<super::Candidate> = image
        .boxes
        .iter()
        .map(|(id, b)| super::Candidate { object_id: id.clone(), bbox: *b, confidence: 1.0 })
        .collect();
    let gaze = select_object(&score_candidates(&heatmap, &everything)).is_ok_and(|c| c.candidate.object_id == target.id);
    let candidates = detect_candidates(&target.name, &image, &scene, &cfg.detector, mix_seed(seed, 202));
    let language = candidates.first().is_some_and(|c| c.object_id == target.id);
    let both = select_object(&score_candidates(&heatmap, &candidates)).is_ok_and(|c| c.candidate.object_id == target.id);
    Some(TrialOutcome { gaze, language, both, gaze_metrics: gaze_trial_metrics(&heatmap, &truth) })
}

pub fn run_selection_suite(cfg: &SelectionSuiteConfig, catalog: &[ObjectTemplate], seed: u64, arms: &[Arm]) -> SelectionReport {
    let outcomes: Vec<TrialOutcome> =
        (0..cfg.trials as u64).into_par_iter().filter_map(|i| selection_trial(cfg, catalog, mix_seed(seed, i))).collect();
    let n = outcomes.len().max(1) as f64;
    let rate = |f: fn(&TrialOutcome) -> bool| outcomes.iter().filter(|o| f(o)).count() as f64 / n;
    let (g, l, b) = (rate(|o| o.gaze), rate(|o| o.language), rate(|o| o.both));
    let metrics: Vec<GazeTrialMetrics> = outcomes.iter().map(|o| o.gaze_metrics).collect();
    let mut wanted = arms.to_vec();
    wanted.sort();
    wanted.dedup();
    SelectionReport {
        trials: outcomes.len(),
        seed,
        arms: wanted
            .into_iter()
            .map(|arm| ArmAccuracy { arm, accuracy: match arm { Arm::Gaze => g, Arm::Language => l, Arm::Both => b } })
            .collect(),
        gaze: summarize_gaze(&metrics).unwrap_or(GazeEvalReport { success_rate: 0.0, eval_iou: 0.0, mse_px: 0.0 }),
        margin_over_gaze: 100.0 * (b - g),
        margin_over_language: 100.0 * (b - l),
    }
}

/// Fused-selection success rate for an identical pair at a fixed surface gap.
pub fn pair_success_rate(template: &ObjectTemplate, gap: f64, trials: usize, seed: u64, rig: &GazeRig, detector: &DetectorNoise) -> f64 {
    let ok: Vec<bool> = (0..trials as u64)
        .into_par_iter()
        .filter_map(|i| {
            let s = mix_seed(seed, i);
            let (scene, _) = (0..8u64).find_map(|k| generate_pair_scene(mix_seed(s, k), template, gap).ok())?;
            let image = render(&scene, &CameraModel::default_for(&scene.table));
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let target = scene.objects.choose(&mut rng)?;
            let fixation = fixation_on(&image, &target.id, &mut rng)?;
            let heatmap = rig.heatmap_for_fixation(fixation, image.width, image.height, mix_seed(s, 101)).ok()?;
            let candidates = detect_candidates(&target.name, &image, &scene, detector, mix_seed(s, 202));
            Some(select_object(&score_candidates(&heatmap, &candidates)).is_ok_and(|c| c.candidate.object_id == target.id))
        })
        .collect();
    ok.iter().filter(|b| **b).count() as f64 / ok.len().max(1) as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub class: MassClass,
    pub template: String,
    pub threshold_gap: f64,
    pub success_at_threshold: f64,
    /// Smallest swept gap from which every larger swept gap passes.
    pub min_working_gap: Option<f64>,
}

/// Smallest gap in `sweep` (ascending) from which all larger gaps reach `required` success.
pub fn min_working_gap(rates: &[(f64, f64)], required: f64) -> Option<f64> {
    let mut best = None;
    for (gap, rate) in rates.iter().rev() {
        if *rate >= required {
            best = Some(*gap);
        } else {
            break;
        }
    }
    best
}

/// Gap each size class must handle, and the template standing in for the class.
pub fn gap_classes() -> Vec<(MassClass, ObjectTemplate, f64)> {
    use crate::scene::catalog::{eraser, flashlight, strawberry};
    vec![(MassClass::Large, flashlight(), 0.05), (MassClass::Medium, strawberry(), 0.045), (MassClass::Small, eraser(), 0.0375)]
}

/// Swept surface gaps (m), ascending.
pub const GAP_SWEEP: [f64; 8] = [0.005, 0.01, 0.02, 0.03, 0.0375, 0.045, 0.05, 0.06];

/// Success at each class threshold plus the swept minimum working gap.
pub fn run_gap_suite(trials: usize, seed: u64, required: f64, rig: &GazeRig, detector: &DetectorNoise) -> Vec<GapRow> {
    gap_classes()
        .into_iter()
        .map(|(class, template, threshold)| {
            let rates: Vec<(f64, f64)> =
                GAP_SWEEP.iter().map(|g| (*g, pair_success_rate(&template, *g, trials, seed, rig, detector))).collect();
            let at = rates
                .iter()
                .find(|(g, _)| (g - threshold).abs() < 1e-12)
                .map(|r| r.1)
                .unwrap_or_else(|| pair_success_rate(&template, threshold, trials, seed, rig, detector));
            GapRow {
                class,
                template: template.name.clone(),
                threshold_gap: threshold,
                success_at_threshold: at,
                min_working_gap: min_working_gap(&rates, required),
            }
        })
        .collect()
}

/// Larger classes must not need a smaller gap than smaller ones. A class with
/// no working gap counts as needing more than the whole sweep.
pub fn gaps_monotone(rows: &[GapRow]) -> bool {
    let need = |r: &GapRow| r.min_working_gap.unwrap_or(f64::INFINITY);
    let mut sorted: Vec<&GapRow> = rows.iter().collect();
    sorted.sort_by_key(|r| std::cmp::Reverse(r.class));
    sorted.windows(2).all(|w| need(w[0]) >= need(w[1]))
}
