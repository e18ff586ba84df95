//! Shared setup for the benchmarks: one recorded fixture run whose stage
//! inputs are kept so each stage can be timed on its own.

use handover_core::gaze::GazeFrame;
use handover_core::parser::{Lexicon, ParsedCommand};
use handover_core::pipeline::fixtures::Fixture;
use handover_core::pipeline::{run_pipeline, scene_camera, scene_lexicon, PipelineConfig, Session, SessionStatus};
use handover_core::scene::{render, CameraModel, RenderOutput};
use handover_core::selection::SelectionResult;

pub struct Prepared {
    pub fixture: Fixture,
    pub config: PipelineConfig,
    pub frames: Vec<GazeFrame>,
    pub camera: CameraModel,
    pub image: RenderOutput,
    pub lexicon: Lexicon,
    pub session: Session,
}

impl Prepared {
    /// Runs the fixture once; panics if the run does not reach execution,
    /// since timing a failed path would be misleading.
    pub fn new(fixture: Fixture) -> Prepared {
        let config = PipelineConfig::default();
        let frames = fixture.gaze_frames(&config);
        let session = run_pipeline(&fixture.scene, &frames, fixture.utterance, &config);
        assert_eq!(session.status, SessionStatus::Executed, "{}: {:?}", fixture.name, session.status);
        let camera = scene_camera(&fixture.scene);
        let image = render(&fixture.scene, &camera);
        let lexicon = scene_lexicon(&fixture.scene);
        Prepared { fixture, config, frames, camera, image, lexicon, session }
    }

    pub fn parsed(&self) -> &ParsedCommand {
        self.session.parsed.as_ref().expect("executed session")
    }

    pub fn selection(&self) -> &SelectionResult {
        self.session.selection.as_ref().expect("executed session")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use handover_core::pipeline::fixtures;

    #[test]
    fn fixtures_prepare() {
        for fx in fixtures::all() {
            let target = fx.target.clone();
            let p = Prepared::new(fx);
            assert_eq!(p.selection().chosen.object_id, target);
            assert!(p.image.boxes.contains_key(&target));
        }
    }
}
