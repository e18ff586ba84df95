use crate::server;
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use handover_core::gaze::log::{parse_log, write_log};
use handover_core::motion::write_trajectory;
use handover_core::parser::parse;
use handover_core::pipeline::eval::{run_catalog_grid, run_grasp_suite, run_motion_suite, run_timing_suite, GraspSuiteConfig};
use handover_core::pipeline::{fixtures, frames_from_cursor, replay_with, run_pipeline, scene_camera, PipelineConfig, Session, SessionStatus};
use handover_core::scene::io::{load_scene, scene_to_json};
use handover_core::scene::{default_catalog, generate_scene_with_pairs};
use handover_core::selection::eval::{gaps_monotone, run_gap_suite, run_selection_suite, Arm, SelectionSuiteConfig};
use serde_json::json;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "handover", version, about = "Gaze and language driven robot-to-human handover simulator")]
pub struct Cli {
    /// Pipeline config (JSON); missing fields take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for scene generation, the pipeline and evaluation suites.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a random tabletop scene.
    GenScene {
        #[arg(long, default_value_t = 6)]
        objects: usize,
        /// Number of identical-object pairs among them.
        #[arg(long, default_value_t = 0)]
        pairs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a demo scene and a simulated gaze log looking at its target.
    Fixture {
        /// mug-handle or two-flashlights
        name: String,
        #[arg(long)]
        scene_out: PathBuf,
        #[arg(long)]
        gaze_out: PathBuf,
    },
    /// Run the full pipeline on a scene.
    Run {
        #[arg(long)]
        scene: PathBuf,
        /// Gaze log, one frame per line.
        #[arg(long, conflicts_with = "cursor")]
        gaze_log: Option<PathBuf>,
        /// Image pixel the viewer looks at, as `x,y`, instead of a gaze log.
        #[arg(long, value_parser = parse_pixel)]
        cursor: Option<(f64, f64)>,
        /// The spoken command.
        #[arg(long)]
        say: String,
        /// Session file to write.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Joint trajectory (approach then delivery) to write.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Re-execute a recorded session. With --config the result is a derived session.
    Replay {
        session: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fail unless the stage outputs match the recording exactly.
        #[arg(long)]
        check: bool,
    },
    /// Parse a command and print the object, part and holder.
    Parse { text: String },
    /// Three-arm selection accuracy and the gaze metrics; optionally the gap sweep.
    EvalSelection {
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long)]
        gap: bool,
        #[arg(long, default_value_t = 100)]
        gap_trials: usize,
    },
    /// Grasp region satisfaction and standard-part avoidance; optionally the per-object grid.
    EvalGrasp {
        #[arg(long, default_value_t = 50)]
        scenes: usize,
        #[arg(long)]
        grid: bool,
    },
    /// Convergence over random reachable targets.
    EvalMotion {
        #[arg(long, default_value_t = 50)]
        targets: usize,
    },
    /// Per-stage wall-clock breakdown.
    EvalTiming {
        #[arg(long, default_value_t = 5)]
        runs: usize,
    },
    /// Serve the HTTP and WebSocket API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
}

fn parse_pixel(s: &str) -> Result<(f64, f64), String> {
    let (x, y) = s.split_once(',').ok_or("expected x,y")?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok((num(x)?, num(y)?))
}

pub fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<PipelineConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<PipelineConfig>(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(anyhow::Error::msg).context("invalid config")?;
    Ok(cfg)
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn summary(s: &Session) -> serde_json::Value {
    json!({
        "id": s.id,
        "derived_from": s.derived_from,
        "status": s.status,
        "parsed": s.parsed,
        "selected": s.selection.as_ref().map(|x| &x.chosen.object_id),
        "grasp": s.grasp.as_ref().map(|g| json!({
            "mode": g.mode,
            "center": g.chosen.center().coords.as_slice(),
            "approach": g.chosen.approach.as_slice(),
            "width": g.chosen.width,
            "stability": g.chosen.stability,
        })),
        "motion": s.motion.as_ref().map(|m| json!({
            "converged": m.converged(),
            "approach_steps": m.approach.len(),
            "deliver_steps": m.deliver.len(),
        })),
        "timings": s.timings,
    })
}

fn failed(s: &Session) -> bool {
    matches!(s.status, SessionStatus::Failed { .. })
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref(), cli.seed)?;
    let seed = cfg.seed;
    match cli.command {
        Command::GenScene { objects, pairs, out } => {
            let scene = generate_scene_with_pairs(seed, objects, pairs, &default_catalog())?;
            write_or_print(out.as_deref(), &scene_to_json(&scene))
        }
        Command::Fixture { name, scene_out, gaze_out } => {
            let Some(fx) = fixtures::all().into_iter().find(|f| f.name == name) else {
                bail!("unknown fixture {name:?} (expected mug-handle or two-flashlights)");
            };
            std::fs::write(&scene_out, scene_to_json(&fx.scene))?;
            std::fs::write(&gaze_out, write_log(&fx.try_gaze_frames(&cfg)?))?;
            print_json(&json!({ "scene": scene_out, "gaze_log": gaze_out, "utterance": fx.utterance, "target": fx.target }))
        }
        Command::Run { scene, gaze_log, cursor, say, out, trajectory } => {
            let scene = load_scene(&scene).with_context(|| format!("loading {}", scene.display()))?;
            let frames = match (gaze_log, cursor) {
                (Some(p), _) => parse_log(&std::fs::read_to_string(&p)?).with_context(|| format!("reading gaze log {}", p.display()))?,
                (None, Some(px)) => {
                    let cam = scene_camera(&scene);
                    frames_from_cursor(&vec![px; cfg.gaze.frames.max(1)], &cfg.gaze, cam.width, cam.height)?
                }
                (None, None) => bail!("give either --gaze-log or --cursor"),
            };
            let session = run_pipeline(&scene, &frames, &say, &cfg);
            if let Some(p) = out {
                std::fs::write(&p, session.to_json())?;
            }
            if let (Some(p), Some(m)) = (trajectory, &session.motion) {
                let mut traj = m.approach.clone();
                traj.samples = m.concatenated();
                traj.converged = m.converged();
                write_trajectory(std::fs::File::create(&p)?, &traj, &cfg.rmp)?;
            }
            print_json(&summary(&session))?;
            if failed(&session) {
                std::process::exit(2);
            }
            Ok(())
        }
        Command::Replay { session, out, check } => {
            let text = std::fs::read_to_string(&session).with_context(|| format!("reading {}", session.display()))?;
            let recorded = Session::from_json(&text)?;
            let override_cfg = cli.config.is_some().then_some(&cfg);
            let again = replay_with(&text, override_cfg)?;
            if let Some(p) = out {
                std::fs::write(&p, again.to_json())?;
            }
            let identical = again.outputs_json() == recorded.outputs_json();
            let mut report = summary(&again);
            report["identical_to_recording"] = json!(identical);
            print_json(&report)?;
            if check && !identical {
                bail!("replay of {} differs from the recording", recorded.id);
            }
            Ok(())
        }
        Command::Parse { text } => {
            let lexicon = handover_core::parser::Lexicon::default();
            print_json(&parse(&text, &lexicon)?)
        }
        Command::EvalSelection { trials, gap, gap_trials } => {
            let suite = SelectionSuiteConfig { trials, rig: cfg.gaze.clone(), detector: cfg.detector.clone(), ..Default::default() };
            let rep = run_selection_suite(&suite, &default_catalog(), seed, &[Arm::Gaze, Arm::Language, Arm::Both]);
            let acc = |a| rep.accuracy(a).unwrap_or(0.0);
            let mut out = json!({
                "report": rep,
                "dominance": {
                    "fused_over_gaze_5pt": acc(Arm::Both) >= acc(Arm::Gaze) + 0.05,
                    "fused_over_language_20pt": acc(Arm::Both) >= acc(Arm::Language) + 0.20,
                    "fused_at_least_90": acc(Arm::Both) >= 0.90,
                },
            });
            if gap {
                let rows = run_gap_suite(gap_trials, seed, 0.9, &cfg.gaze, &cfg.detector);
                out["gap"] = json!({ "monotone": gaps_monotone(&rows), "rows": rows });
            }
            print_json(&out)
        }
        Command::EvalGrasp { scenes, grid } => {
            let suite = GraspSuiteConfig { scenes, params: cfg.grasp.clone(), ..Default::default() };
            let rep = run_grasp_suite(&suite, seed);
            let mut out = json!({
                "report": rep,
                "preference_rate": rep.preference_rate(),
                "avoidance_rate": rep.avoidance_rate(),
            });
            if grid {
                let g = run_catalog_grid(&cfg.grasp, seed);
                out["grid"] = json!({ "no_part_rate": g.no_part_rate(), "part_rate": g.part_rate(), "rows": g.rows });
            }
            print_json(&out)
        }
        Command::EvalMotion { targets } => {
            let rep = run_motion_suite(&cfg.arm, &cfg.rmp, targets, seed);
            print_json(&json!({ "report": rep, "convergence_rate": rep.convergence_rate() }))
        }
        Command::EvalTiming { runs } => print_json(&run_timing_suite(&cfg, runs)),
        Command::Serve { addr } => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
                tracing::info!("listening on {}", listener.local_addr()?);
                eprintln!("listening on {}", listener.local_addr()?);
                axum::serve(listener, server::router(server::AppState::new(cfg))).await?;
                Ok(())
            })
        }
    }
}
