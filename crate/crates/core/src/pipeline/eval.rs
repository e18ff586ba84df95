//! Evaluation suites beyond selection: grasp constraints, motion convergence
//! and the per-stage timing breakdown.

use super::{fixtures, run_pipeline, PipelineConfig, Stage};
use crate::grasp::{plan_grasp, projects_into, GraspParams};
use crate::motion::{integrate, pose_to_task, task_energy, task_error, ArmModel, Joints, RmpParams};
use crate::parser::Holder;
use crate::scene::{default_catalog, generate_scene, render, CameraModel, Scene};
use crate::selection::eval::mix_seed;
use crate::selection::{resolve_part, Candidate, SelectionResult};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraspSuiteConfig {
    pub scenes: usize,
    /// Objects planned per scene.
    pub per_scene: usize,
    /// Objects placed in each scene.
    pub objects: usize,
    pub params: GraspParams,
}

impl Default for GraspSuiteConfig {
    fn default() -> Self {
        GraspSuiteConfig { scenes: 50, per_scene: 2, objects: 5, params: GraspParams::default() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GraspSuiteReport {
    /// Plans made with a part preference, and how many kept every contact in the permitted region.
    pub preference_plans: usize,
    pub preference_satisfied: usize,
    /// Preference requests that produced no plan (part not visible, no stable grasp).
    pub preference_failures: usize,
    /// Plans made without a preference on objects that have a standard-grasp part.
    pub free_plans: usize,
    pub free_avoided: usize,
    pub free_failures: usize,
}

impl GraspSuiteReport {
    pub fn preference_rate(&self) -> f64 {
        self.preference_satisfied as f64 / self.preference_plans.max(1) as f64
    }

    pub fn avoidance_rate(&self) -> f64 {
        self.free_avoided as f64 / self.free_plans.max(1) as f64
    }

    fn merge(mut self, o: GraspSuiteReport) -> Self {
        self.preference_plans += o.preference_plans;
        self.preference_satisfied += o.preference_satisfied;
        self.preference_failures += o.preference_failures;
        self.free_plans += o.free_plans;
        self.free_avoided += o.free_avoided;
        self.free_failures += o.free_failures;
        self
    }
}

/// Exact-box selection of `id`, as if the user had looked straight at it.
fn oracle_selection(scene: &Scene, image: &crate::scene::RenderOutput, id: &str, part: Option<&str>, holder: Holder) -> Option<SelectionResult> {
    let chosen = Candidate { object_id: id.to_string(), bbox: *image.boxes.get(id)?, confidence: 1.0 };
    let part_region = resolve_part(&chosen, part, holder, image, scene).ok()?;
    Some(SelectionResult { chosen, part_region, scores: vec![] })
}

fn grasp_scene(cfg: &GraspSuiteConfig, seed: u64) -> GraspSuiteReport {
    let mut rep = GraspSuiteReport::default();
    let Ok(scene) = generate_scene(seed, cfg.objects, &default_catalog()) else {
        return rep;
    };
    let camera = CameraModel::default_for(&scene.table);
    let image = render(&scene, &camera);
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 7));
    let visible: Vec<_> = scene.objects.iter().filter(|o| image.boxes.contains_key(&o.id) && !o.parts.is_empty()).collect();
    for (k, obj) in visible.iter().take(cfg.per_scene).enumerate() {
        let plan_seed = mix_seed(seed, 100 + k as u64);
        // preference: a random named part, held by either side
        let part = &obj.parts[rng.random_range(0..obj.parts.len())];
        let holder = if rng.random_bool(0.5) { Holder::Human } else { Holder::Robot };
        match oracle_selection(&scene, &image, &obj.id, Some(&part.name), holder)
            .and_then(|sel| plan_grasp(&image, &camera, &sel, holder, &scene, &cfg.params, plan_seed).ok().map(|p| (sel, p)))
        {
            Some((sel, plan)) => {
                rep.preference_plans += 1;
                if plan.chosen.contacts.iter().all(|c| projects_into(c, &sel.part_region, &camera)) {
                    rep.preference_satisfied += 1;
                }
            }
            None => rep.preference_failures += 1,
        }
        // no preference: stay off the part people usually hold
        let Some(standard) = obj.standard_part() else { continue };
        match oracle_selection(&scene, &image, &obj.id, None, Holder::None)
            .and_then(|sel| plan_grasp(&image, &camera, &sel, Holder::None, &scene, &cfg.params, plan_seed).ok())
        {
            Some(plan) => {
                rep.free_plans += 1;
                if plan.chosen.contacts.iter().all(|c| !obj.in_part(standard, c)) {
                    rep.free_avoided += 1;
                }
            }
            None => rep.free_failures += 1,
        }
    }
    rep
}

pub fn run_grasp_suite(cfg: &GraspSuiteConfig, seed: u64) -> GraspSuiteReport {
    (0..cfg.scenes as u64)
        .into_par_iter()
        .map(|i| grasp_scene(cfg, mix_seed(seed, i)))
        .collect::<Vec<_>>()
        .into_iter()
        .fold(GraspSuiteReport::default(), GraspSuiteReport::merge)
}

/// One catalog object over three placements, without and with a part preference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalogRow {
    pub object: String,
    pub no_part: [bool; 3],
    /// `None` for objects with no standard-grasp part to leave free.
    pub part: Option<[bool; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalogGrid {
    pub rows: Vec<CatalogRow>,
}

impl CatalogGrid {
    pub fn no_part_rate(&self) -> f64 {
        let n = self.rows.len() * 3;
        self.rows.iter().flat_map(|r| r.no_part).filter(|b| *b).count() as f64 / n.max(1) as f64
    }

    pub fn part_rate(&self) -> f64 {
        let trials: Vec<bool> = self.rows.iter().filter_map(|r| r.part).flatten().collect();
        trials.iter().filter(|b| **b).count() as f64 / trials.len().max(1) as f64
    }
}

const GRID_YAWS: [f64; 3] = [0.3, 1.4, 2.5];

/// Each catalog object alone on the table at three yaws. A trial succeeds when
/// a stable grasp is found; with a part, the user holds the standard part and
/// the grasp must stay in what is left.
pub fn run_catalog_grid(params: &GraspParams, seed: u64) -> CatalogGrid {
    let rows = default_catalog()
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let mut no_part = [false; 3];
            let mut part = t.parts.iter().any(|p| p.standard_grasp).then_some([false; 3]);
            for (k, yaw) in GRID_YAWS.iter().enumerate() {
                let table = crate::scene::Table::default();
                let obj = t.instantiate(format!("{}-0", t.name), crate::scene::resting_pose(t, &table, 0.0, 0.0, *yaw), None);
                let scene = Scene { id: format!("grid-{}", t.name), seed, table, objects: vec![obj] };
                let camera = CameraModel::default_for(&scene.table);
                let image = render(&scene, &camera);
                let id = scene.objects[0].id.clone();
                let s = mix_seed(seed, (i * 3 + k) as u64);
                no_part[k] = oracle_selection(&scene, &image, &id, None, Holder::None)
                    .is_some_and(|sel| plan_grasp(&image, &camera, &sel, Holder::None, &scene, params, s).is_ok());
                if let Some(slots) = part.as_mut() {
                    let name = scene.objects[0].standard_part().map(|p| p.name.clone()).unwrap_or_default();
                    slots[k] = oracle_selection(&scene, &image, &id, Some(&name), Holder::Human).is_some_and(|sel| {
                        plan_grasp(&image, &camera, &sel, Holder::Human, &scene, params, s)
                            .is_ok_and(|p| p.chosen.contacts.iter().all(|c| projects_into(c, &sel.part_region, &camera)))
                    });
                }
            }
            CatalogRow { object: t.name.clone(), no_part, part }
        })
        .collect();
    CatalogGrid { rows }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionSuiteReport {
    pub targets: usize,
    pub converged: usize,
    pub max_steps_used: usize,
    /// Samples outside the joint or speed limits, over all trajectories.
    pub limit_violations: usize,
    /// Largest single-step increase of the task energy, over all trajectories.
    pub worst_energy_increase: f64,
    pub dt: f64,
}

impl MotionSuiteReport {
    pub fn convergence_rate(&self) -> f64 {
        self.converged as f64 / self.targets.max(1) as f64
    }
}

/// Reachable targets: forward kinematics of home plus a uniform joint offset in ±`spread`.
pub fn random_targets(arm: &ArmModel, count: usize, spread: f64, seed: u64) -> Vec<crate::geometry::Pose> {
    let home = Joints::from(arm.home);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let q = home + Joints::from_fn(|_, _| rng.random_range(-spread..spread));
            arm.fk(&q).expect("home offsets stay within the limits")
        })
        .collect()
}

pub fn run_motion_suite(arm: &ArmModel, params: &RmpParams, targets: usize, seed: u64) -> MotionSuiteReport {
    let home = Joints::from(arm.home);
    let results: Vec<(bool, usize, usize, f64)> = random_targets(arm, targets, 0.8, seed)
        .par_iter()
        .map(|target| {
            let Ok(t) = integrate(arm, &home, target, params) else {
                return (false, 0, 0, f64::INFINITY);
            };
            let x_g = pose_to_task(target);
            let mut violations = 0;
            let mut energies = Vec::with_capacity(t.len());
            for s in &t.samples {
                let q = Joints::from(s.q);
                let inside = (0..6).all(|i| {
                    let [lo, hi] = arm.joint_limits[i];
                    q[i] >= lo && q[i] <= hi && s.q_dot[i].abs() <= arm.velocity_limit + 1e-12
                });
                if !inside {
                    violations += 1;
                    continue;
                }
                let x = pose_to_task(&arm.fk(&q).expect("within limits"));
                energies.push(task_energy(&task_error(&x, &x_g), &(arm.jacobian(&q) * Joints::from(s.q_dot)), params));
            }
            let worst = energies.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
            (t.converged, t.len(), violations, worst)
        })
        .collect();
    MotionSuiteReport {
        targets,
        converged: results.iter().filter(|r| r.0).count(),
        max_steps_used: results.iter().map(|r| r.1).max().unwrap_or(0),
        limit_violations: results.iter().map(|r| r.2).sum(),
        worst_energy_increase: results.iter().map(|r| r.3).fold(f64::NEG_INFINITY, f64::max),
        dt: params.dt,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTimingRow {
    pub stage: Stage,
    pub mean_seconds: f64,
    /// Fraction of the summed stage means.
    pub share: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub runs: usize,
    /// Runs whose grasp stage predicted hands.
    pub hand_aware_runs: usize,
    pub rows: Vec<StageTimingRow>,
    pub dominant: Stage,
}

/// Runs the two-flashlight fixture (no part named, so hands are predicted)
/// `runs` times with varied seeds and averages each stage.
pub fn run_timing_suite(cfg: &PipelineConfig, runs: usize) -> TimingReport {
    let fx = fixtures::two_flashlights();
    let mut totals = [0.0f64; 6];
    let mut hand_aware = 0;
    for i in 0..runs as u64 {
        let c = PipelineConfig { seed: mix_seed(cfg.seed, i), ..cfg.clone() };
        let s = run_pipeline(&fx.scene, &fx.gaze_frames(&c), fx.utterance, &c);
        if s.grasp.as_ref().is_some_and(|g| !g.hands.is_empty()) {
            hand_aware += 1;
        }
        for t in &s.timings {
            totals[t.stage as usize] += t.seconds;
        }
    }
    let n = runs.max(1) as f64;
    let sum: f64 = totals.iter().sum::<f64>().max(f64::MIN_POSITIVE);
    let rows: Vec<StageTimingRow> = Stage::ALL
        .iter()
        .map(|s| StageTimingRow { stage: *s, mean_seconds: totals[*s as usize] / n, share: totals[*s as usize] / sum })
        .collect();
    let dominant = rows.iter().max_by(|a, b| a.mean_seconds.total_cmp(&b.mean_seconds)).map(|r| r.stage).unwrap_or(Stage::Grasp);
    TimingReport { runs, hand_aware_runs: hand_aware, rows, dominant }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_grasp_suite_is_deterministic() {
        let cfg = GraspSuiteConfig { scenes: 3, ..Default::default() };
        let a = run_grasp_suite(&cfg, 4);
        assert_eq!(a, run_grasp_suite(&cfg, 4));
        assert!(a.preference_plans + a.preference_failures > 0);
        assert_eq!(a.preference_satisfied, a.preference_plans);
    }

    #[test]
    fn catalog_grid_layout() {
        let g = run_catalog_grid(&GraspParams::default(), 1);
        assert_eq!(g.rows.len(), 15);
        // objects without a standard part have no part column
        for (row, t) in g.rows.iter().zip(default_catalog()) {
            assert_eq!(row.part.is_some(), t.parts.iter().any(|p| p.standard_grasp), "{}", row.object);
        }
        assert!(g.no_part_rate() > 0.8, "{g:?}");
    }

    #[test]
    fn motion_suite_counts() {
        let r = run_motion_suite(&ArmModel::ur5e(), &RmpParams::default(), 4, 2);
        assert_eq!(r.targets, 4);
        assert_eq!(r.limit_violations, 0);
        assert!(r.converged <= 4 && r.max_steps_used > 0);
    }

    #[test]
    fn timing_rows_cover_every_stage() {
        let r = run_timing_suite(&PipelineConfig::default(), 1);
        assert_eq!(r.rows.len(), 6);
        assert!((r.rows.iter().map(|x| x.share).sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(r.hand_aware_runs, 1);
    }
}
