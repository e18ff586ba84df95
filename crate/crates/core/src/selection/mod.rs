//! Object selection: a noisy lexicon detector proposes candidate boxes, the
//! gaze heatmap scores them, and the holding-part region is carved out of the
//! winner according to who holds the part.

pub mod eval;

use crate::gaze::Heatmap;
use crate::geometry::{PixelBox, PixelRegion};
use crate::parser::Holder;
use crate::scene::{RenderOutput, Scene};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SelectionError {
    #[error("no candidate matches {0:?}")]
    NoCandidate(String),
    #[error("part {part:?} not found on {object}")]
    PartNotFound { object: String, part: String },
    #[error("heatmap is {heatmap:?} but image is {image:?}")]
    SizeMismatch { heatmap: (u32, u32), image: (u32, u32) },
    #[error("empty evaluation batch")]
    EmptyBatch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub object_id: String,
    #[serde(rename = "box")]
    pub bbox: PixelBox,
    pub confidence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    #[serde(flatten)]
    pub candidate: Candidate,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub chosen: Candidate,
    /// Region the robot may grasp; the whole box when no part was named.
    pub part_region: PixelRegion,
    pub scores: Vec<ScoredCandidate>,
}

/// Error model for the ground-truth detector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorNoise {
    /// Probability that an object matched only through a synonym is missed.
    pub synonym_miss_rate: f64,
    /// Standard deviation of additive confidence noise.
    pub confidence_jitter: f64,
    /// Probability of one extra box on a non-matching visible object.
    pub spurious_rate: f64,
    /// Drop candidates whose attributes contradict adjectives in the phrase.
    pub adjective_matching: bool,
}

impl Default for DetectorNoise {
    fn default() -> Self {
        DetectorNoise { synonym_miss_rate: 0.1, confidence_jitter: 0.05, spurious_rate: 0.2, adjective_matching: true }
    }
}

impl DetectorNoise {
    pub fn exact() -> Self {
        DetectorNoise { synonym_miss_rate: 0.0, confidence_jitter: 0.0, spurious_rate: 0.0, adjective_matching: true }
    }
}

const NAME_CONFIDENCE: f64 = 0.85;
const SYNONYM_CONFIDENCE: f64 = 0.75;
const ADJECTIVE_BONUS: f64 = 0.1;
const SPURIOUS_CONFIDENCE: f64 = 0.35;

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_lowercase).collect()
}

/// How an object's name list matches the phrase: (via synonym, leftover adjective words).
fn match_phrase(phrase: &[String], name: &str, synonyms: &[String]) -> Option<(bool, Vec<String>)> {
    let mut best: Option<(usize, bool)> = None;
    for (label, is_syn) in std::iter::once((name, false)).chain(synonyms.iter().map(|s| (s.as_str(), true))) {
        let w = words(label);
        if !w.is_empty() && phrase.ends_with(&w) && best.is_none_or(|(n, _)| w.len() > n) {
            best = Some((w.len(), is_syn));
        }
    }
    best.map(|(n, syn)| (syn, phrase[..phrase.len() - n].to_vec()))
}

/// Lexicon detector over scene ground truth. Candidates are returned in
/// descending confidence order.
pub fn detect_candidates(
    object_phrase: &str,
    render: &RenderOutput,
    scene: &Scene,
    noise: &DetectorNoise,
    seed: u64,
) -> Vec<Candidate> {
    let phrase = words(object_phrase);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, noise.confidence_jitter.max(0.0)).expect("finite std");
    let known_attributes: std::collections::BTreeSet<&str> =
        scene.objects.iter().flat_map(|o| o.attributes.iter().map(String::as_str)).collect();

    let mut matched = Vec::new();
    let mut unmatched = Vec::new();
    for obj in &scene.objects {
        let Some(bbox) = render.boxes.get(&obj.id) else { continue };
        // draw noise for every visible object so results don't depend on which ones match
        let draw_miss: f64 = rng.random();
        let draw_jitter = jitter.sample(&mut rng);
        match match_phrase(&phrase, &obj.name, &obj.synonyms) {
            Some((via_synonym, adjectives)) => {
                if via_synonym && draw_miss < noise.synonym_miss_rate {
                    continue;
                }
                let relevant: Vec<&String> = adjectives.iter().filter(|a| known_attributes.contains(a.as_str())).collect();
                let agrees = relevant.iter().all(|a| obj.attributes.contains(a));
                let base = if via_synonym { SYNONYM_CONFIDENCE } else { NAME_CONFIDENCE };
                let bonus = if !relevant.is_empty() && agrees { ADJECTIVE_BONUS } else { 0.0 };
                let c = Candidate { object_id: obj.id.clone(), bbox: *bbox, confidence: (base + bonus + draw_jitter).clamp(0.0, 1.0) };
                matched.push((c, agrees));
            }
            None => unmatched.push((obj.id.clone(), *bbox)),
        }
    }
    if noise.adjective_matching && matched.iter().any(|(_, agrees)| *agrees) {
        matched.retain(|(_, agrees)| *agrees);
    }
    let mut out: Vec<Candidate> = matched.into_iter().map(|(c, _)| c).collect();
    let spurious_draw: f64 = rng.random();
    if !out.is_empty() && spurious_draw < noise.spurious_rate {
        if let Some((id, bbox)) = unmatched.choose(&mut rng) {
            let confidence = (SPURIOUS_CONFIDENCE + jitter.sample(&mut rng)).clamp(0.0, 1.0);
            out.push(Candidate { object_id: id.clone(), bbox: *bbox, confidence });
        }
    }
    out.sort_by(|a, b| b.confidence.total_cmp(&a.confidence).then_with(|| a.object_id.cmp(&b.object_id)));
    out
}

/// Heatmap mass inside each candidate box.
pub fn score_candidates(heatmap: &Heatmap, candidates: &[Candidate]) -> Vec<ScoredCandidate> {
    candidates
        .iter()
        .map(|c| ScoredCandidate { candidate: c.clone(), score: heatmap.mass_in(&c.bbox) })
        .collect()
}

/// Ordering used for selection: score, then confidence, then smaller id wins.
fn rank(a: &ScoredCandidate, b: &ScoredCandidate) -> Ordering {
    a.score
        .total_cmp(&b.score)
        .then_with(|| a.candidate.confidence.total_cmp(&b.candidate.confidence))
        .then_with(|| b.candidate.object_id.cmp(&a.candidate.object_id))
}

pub fn select_object(scored: &[ScoredCandidate]) -> Result<&ScoredCandidate, SelectionError> {
    scored.iter().max_by(|a, b| rank(a, b)).ok_or_else(|| SelectionError::NoCandidate(String::new()))
}

/// Grasp region on the chosen object for the named part and holder.
pub fn resolve_part(
    chosen: &Candidate,
    part: Option<&str>,
    holder: Holder,
    render: &RenderOutput,
    scene: &Scene,
) -> Result<PixelRegion, SelectionError> {
    let Some(part) = part else { return Ok(chosen.bbox.into()) };
    if holder == Holder::None {
        return Ok(chosen.bbox.into());
    }
    let not_found = || SelectionError::PartNotFound { object: chosen.object_id.clone(), part: part.to_string() };
    let object = scene.object(&chosen.object_id).map_err(|_| not_found())?;
    if object.part(part).is_none() {
        return Err(not_found());
    }
    // part detections across the whole image; keep the one overlapping the chosen box most
    let part_box = render
        .part_masks
        .values()
        .filter_map(|parts| parts.get(part))
        .filter_map(|mask| PixelBox::bounding(mask.coords(render.width)))
        .map(|b| (chosen.bbox.overlap_area(&b), b))
        .filter(|(overlap, _)| *overlap > 0)
        .max_by_key(|(overlap, b)| (*overlap, std::cmp::Reverse((b.y0, b.x0))))
        .map(|(_, b)| b)
        .ok_or_else(not_found)?;
    let inside = chosen.bbox.intersect(&part_box).ok_or_else(not_found)?;
    Ok(match holder {
        Holder::Robot => PixelRegion::Box { bounds: inside },
        _ => PixelRegion::BoxMinusBox { outer: chosen.bbox, hole: inside },
    })
}

/// Full selection step for one parsed command.
#[allow(clippy::too_many_arguments)]
pub fn select(
    heatmap: &Heatmap,
    object_phrase: &str,
    part: Option<&str>,
    holder: Holder,
    render: &RenderOutput,
    scene: &Scene,
    noise: &DetectorNoise,
    seed: u64,
) -> Result<SelectionResult, SelectionError> {
    if (heatmap.width, heatmap.height) != (render.width, render.height) {
        return Err(SelectionError::SizeMismatch {
            heatmap: (heatmap.width, heatmap.height),
            image: (render.width, render.height),
        });
    }
    let candidates = detect_candidates(object_phrase, render, scene, noise, seed);
    let scores = score_candidates(heatmap, &candidates);
    let chosen = select_object(&scores)
        .map_err(|_| SelectionError::NoCandidate(object_phrase.to_string()))?
        .candidate
        .clone();
    let part_region = resolve_part(&chosen, part, holder, render, scene)?;
    Ok(SelectionResult { chosen, part_region, scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaze::build_heatmap;
    use crate::geometry::pose_xyz_yaw;
    use crate::scene::catalog::{flashlight, mug, screwdriver};
    use crate::scene::{render, CameraModel, Table};
    use proptest::prelude::*;

    fn two_flashlights() -> (Scene, RenderOutput) {
        let t = flashlight();
        let table = Table::default();
        let a = t.instantiate("flashlight-0", pose_xyz_yaw(-0.1, 0.0, 0.0, 0.0), Some("red"));
        let b = t.instantiate("flashlight-1", pose_xyz_yaw(0.1, 0.05, 0.0, 0.3), Some("blue"));
        let scene = Scene { id: "fl".into(), seed: 0, table, objects: vec![a, b] };
        scene.validate().unwrap();
        let r = render(&scene, &CameraModel::default_for(&scene.table));
        (scene, r)
    }

    fn cand(id: &str, conf: f64, b: PixelBox) -> Candidate {
        Candidate { object_id: id.into(), bbox: b, confidence: conf }
    }

    #[test]
    fn detector_finds_both_flashlights() {
        let (scene, r) = two_flashlights();
        let c = detect_candidates("flashlight", &r, &scene, &DetectorNoise::exact(), 1);
        assert_eq!(c.len(), 2);
        assert!(detect_candidates("unicorn", &r, &scene, &DetectorNoise::default(), 1).is_empty());
        let torch = detect_candidates("torch", &r, &scene, &DetectorNoise::exact(), 1);
        assert_eq!(torch.len(), 2);
    }

    #[test]
    fn adjective_picks_red_flashlight() {
        let (scene, r) = two_flashlights();
        let c = detect_candidates("red flashlight", &r, &scene, &DetectorNoise::default(), 4);
        let red: Vec<_> = c.iter().filter(|c| c.object_id == "flashlight-0").collect();
        assert_eq!(red.len(), 1);
        assert_eq!(c[0].object_id, "flashlight-0");
        assert!(c.iter().all(|c| c.object_id != "flashlight-1"));
        // an adjective nobody has is ignored
        assert_eq!(detect_candidates("shiny flashlight", &r, &scene, &DetectorNoise::exact(), 4).len(), 2);
    }

    #[test]
    fn detector_is_deterministic_and_bounded() {
        let (scene, r) = two_flashlights();
        let noise = DetectorNoise { confidence_jitter: 0.8, spurious_rate: 1.0, ..Default::default() };
        let a = detect_candidates("flashlight", &r, &scene, &noise, 9);
        assert_eq!(a, detect_candidates("flashlight", &r, &scene, &noise, 9));
        assert!(a.iter().all(|c| (0.0..=1.0).contains(&c.confidence) && c.bbox.x1 < r.width && c.bbox.y1 < r.height));
    }

    #[test]
    fn scoring_fixtures() {
        let h = build_heatmap((100.0, 100.0), 640, 480, 57.0).unwrap();
        let full = cand("all", 0.5, PixelBox::new(0, 0, 639, 479));
        let near = cand("a", 0.5, PixelBox::new(60, 60, 140, 140));
        let far = cand("b", 0.5, PixelBox::new(400, 300, 500, 400));
        let s = score_candidates(&h, &[full, near, far]);
        assert!((s[0].score - 1.0).abs() < 1e-9);
        assert!(s[1].score > s[2].score);
        assert!(s[2].score < 0.02);
    }

    #[test]
    fn selection_tie_breaks() {
        let b = PixelBox::new(0, 0, 1, 1);
        let sc = |id: &str, conf: f64, score: f64| ScoredCandidate { candidate: cand(id, conf, b), score };
        assert_eq!(select_object(&[sc("x", 0.1, 0.4), sc("y", 0.9, 0.1)]).unwrap().candidate.object_id, "x");
        assert_eq!(select_object(&[sc("x", 0.9, 0.3), sc("y", 0.7, 0.3)]).unwrap().candidate.object_id, "x");
        assert_eq!(select_object(&[sc("y", 0.7, 0.3), sc("x", 0.7, 0.3)]).unwrap().candidate.object_id, "x");
        assert_eq!(select_object(&[]), Err(SelectionError::NoCandidate(String::new())));
    }

    fn single(template: crate::scene::ObjectTemplate, yaw: f64) -> (Scene, RenderOutput) {
        let o = template.instantiate(format!("{}-0", template.name), pose_xyz_yaw(0.0, 0.0, 0.0, yaw), None);
        let scene = Scene { id: "one".into(), seed: 0, table: Table::default(), objects: vec![o] };
        let r = render(&scene, &CameraModel::default_for(&scene.table));
        (scene, r)
    }

    #[test]
    fn mug_handle_for_user_is_cut_out() {
        let (scene, r) = single(mug(), 0.0);
        let c = cand("mug-0", 0.9, r.boxes["mug-0"]);
        let region = resolve_part(&c, Some("handle"), Holder::Human, &r, &scene).unwrap();
        let handle = r.part_mask("mug-0", "handle").unwrap();
        assert!(!handle.is_empty());
        assert!(handle.coords(r.width).all(|(x, y)| !region.contains(x, y)));
        // rim or body remains graspable
        let body = r.part_mask("mug-0", "body").unwrap();
        assert!(body.coords(r.width).any(|(x, y)| region.contains(x, y)));
    }

    #[test]
    fn screwdriver_shaft_for_robot() {
        let (scene, r) = single(screwdriver(), 0.4);
        let c = cand("screwdriver-0", 0.9, r.boxes["screwdriver-0"]);
        let region = resolve_part(&c, Some("shaft"), Holder::Robot, &r, &scene).unwrap();
        let shaft = PixelBox::bounding(r.part_mask("screwdriver-0", "shaft").unwrap().coords(r.width)).unwrap();
        assert_eq!(region, PixelRegion::Box { bounds: c.bbox.intersect(&shaft).unwrap() });
        assert_eq!(resolve_part(&c, None, Holder::None, &r, &scene).unwrap(), PixelRegion::Box { bounds: c.bbox });
        assert!(matches!(
            resolve_part(&c, Some("lid"), Holder::Robot, &r, &scene),
            Err(SelectionError::PartNotFound { .. })
        ));
    }

    #[test]
    fn red_flashlight_is_selected_under_gaze() {
        let (scene, r) = two_flashlights();
        let b = r.boxes["flashlight-0"];
        let h = build_heatmap(b.center(), r.width, r.height, 57.0).unwrap();
        let res = select(&h, "flashlight", None, Holder::None, &r, &scene, &DetectorNoise::default(), 3).unwrap();
        assert_eq!(res.chosen.object_id, "flashlight-0");
        let miss = select(&h, "unicorn", None, Holder::None, &r, &scene, &DetectorNoise::default(), 3);
        assert_eq!(miss, Err(SelectionError::NoCandidate("unicorn".into())));
    }

    proptest! {
        #[test]
        fn holder_regions_partition_the_box(x0 in 0u32..300, y0 in 0u32..200, w in 1u32..200, h in 1u32..200,
                                            fx in 0.0f64..1.0, fy in 0.0f64..1.0, pw in 0u32..150, ph in 0u32..150) {
            let outer = PixelBox::new(x0, y0, x0 + w, y0 + h);
            // part anchored inside the box so the two always overlap
            let (px, py) = (x0 + (fx * w as f64) as u32, y0 + (fy * h as f64) as u32);
            let part = PixelBox::new(px.saturating_sub(pw / 2), py.saturating_sub(ph / 2), px + pw, py + ph);
            let inside = outer.intersect(&part).unwrap();
            let robot = PixelRegion::Box { bounds: inside };
            let human = PixelRegion::BoxMinusBox { outer, hole: inside };
            prop_assert_eq!(robot.area() + human.area(), outer.area());
            for (x, y) in outer.pixels() {
                prop_assert!(robot.contains(x, y) ^ human.contains(x, y));
            }
        }

        #[test]
        fn scoring_is_order_independent(cx in 0.0f64..639.0, cy in 0.0f64..479.0, boxes in prop::collection::vec((0u32..600, 0u32..440, 1u32..40, 1u32..40), 1..6)) {
            let h = build_heatmap((cx, cy), 640, 480, 57.0).unwrap();
            let cands: Vec<Candidate> = boxes.iter().enumerate().map(|(i, (x, y, w, hh))| cand(&format!("o{i}"), 0.5, PixelBox::new(*x, *y, x + w, y + hh))).collect();
            let mut rev = cands.clone();
            rev.reverse();
            let a = score_candidates(&h, &cands);
            let b = score_candidates(&h, &rev);
            prop_assert_eq!(&select_object(&a).unwrap().candidate.object_id, &select_object(&b).unwrap().candidate.object_id);
            for s in &a {
                let t = b.iter().find(|t| t.candidate.object_id == s.candidate.object_id).unwrap();
                prop_assert_eq!(s.score, t.score);
            }
        }
    }
}
