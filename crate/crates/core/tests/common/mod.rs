//! Helpers shared by the scenario-level test suites.
#![allow(dead_code)]

use std::collections::BTreeMap;

use parkwatch::events::{EventType, IncidentEvent};
use parkwatch::geometry::{rect_overlap, OverlapMetric, Rect};
use parkwatch::synthgen::{GroundTruthEvent, GroundTruthType};
use parkwatch::{run_frames, RunConfig, RunOutput, Scene};

pub fn scene(name: &str) -> Scene {
    Scene::builtin(name)
        .expect("bundled scenario")
        .expect("valid scenario")
}

pub fn config(pipeline: &str, overrides: &[&str]) -> RunConfig {
    let mut all = vec![format!("pipeline={pipeline}")];
    all.extend(overrides.iter().map(|s| s.to_string()));
    RunConfig::from_json("{}", &all).expect("valid config")
}

pub fn run_scene(scene: &Scene, pipeline: &str, overrides: &[&str]) -> RunOutput {
    run_frames(&config(pipeline, overrides), scene.frames().map(Ok)).expect("run succeeds")
}

pub fn truth_of(scene: &Scene, kind: GroundTruthType) -> Vec<GroundTruthEvent> {
    scene
        .ground_truth()
        .into_iter()
        .filter(|e| e.event_type == kind)
        .collect()
}

/// Scripted actor whose static position best explains `bbox`, if any covers
/// more than half of it.
pub fn actor_of(scene: &Scene, bbox: &Rect) -> Option<u64> {
    truth_of(scene, GroundTruthType::StaticBegin)
        .iter()
        .map(|e| {
            (
                e.object_id,
                rect_overlap(&e.bbox, bbox, OverlapMetric::MinArea),
            )
        })
        .filter(|&(_, o)| o > 0.5)
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(id, _)| id)
}

/// Frames of the events for each (actor, stage) pair; postponed checks are
/// left out. An actor of `None` is a detection no script actor explains.
pub fn stage_frames(
    scene: &Scene,
    events: &[IncidentEvent],
) -> BTreeMap<(Option<u64>, String), Vec<u64>> {
    let mut out: BTreeMap<_, Vec<u64>> = BTreeMap::new();
    for e in events
        .iter()
        .filter(|e| e.event_type != EventType::PostponedCheck)
    {
        let key = (
            actor_of(scene, &e.bbox),
            format!("{:?}", e.event_type).to_lowercase(),
        );
        out.entry(key).or_default().push(e.frame_index);
    }
    out
}

pub fn count(events: &[IncidentEvent], kind: EventType) -> usize {
    events.iter().filter(|e| e.event_type == kind).count()
}
