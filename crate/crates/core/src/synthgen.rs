//! Scripted synthetic scenes with ground truth.
//!
//! A script places textured rectangles ("actors") on a flat or graded road,
//! moves them along waypoint schedules, and optionally applies a global
//! brightness ramp and per-pixel noise. Rendering is a pure function of the
//! script, so the same script always produces the same bytes.

use std::fs;
use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame_io::{write_frame, GrayFrame};
use crate::geometry::Rect;

/// Scenarios shipped with the crate, by name.
pub const BUILTIN_SCENARIOS: &[(&str, &str)] = &[
    (
        "park-and-stay",
        include_str!("../scenarios/park-and-stay.json"),
    ),
    ("fig3-style", include_str!("../scenarios/fig3-style.json")),
    (
        "occlusion-pass",
        include_str!("../scenarios/occlusion-pass.json"),
    ),
    ("removal", include_str!("../scenarios/removal.json")),
    (
        "illumination-ramp",
        include_str!("../scenarios/illumination-ramp.json"),
    ),
    (
        "crowded-movers",
        include_str!("../scenarios/crowded-movers.json"),
    ),
    (
        "bench-street",
        include_str!("../scenarios/bench-street.json"),
    ),
];

pub fn builtin_script(name: &str) -> Option<&'static str> {
    BUILTIN_SCENARIOS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| *s)
}

pub const GROUND_TRUTH_FILE: &str = "ground_truth.jsonl";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Background {
    Flat {
        level: u8,
    },
    /// Linear horizontal ramp from the left edge to the right edge.
    Gradient {
        left: u8,
        right: u8,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorScript {
    /// `[width, height]`
    pub size: [usize; 2],
    pub texture_seed: u64,
    #[serde(default = "default_tone")]
    pub base_tone: u8,
    #[serde(default = "default_texture_amplitude")]
    pub texture_amplitude: u8,
    /// `[frame, x, y]` of the top-left corner. The actor appears at the first
    /// waypoint and stays at the last one until removed.
    pub waypoints: Vec<[u64; 3]>,
    #[serde(default)]
    pub removal_frame: Option<u64>,
}

fn default_tone() -> u8 {
    180
}

fn default_texture_amplitude() -> u8 {
    40
}

/// Brightness ramp: identity before `start_frame`, `gain·p + offset` from
/// `end_frame` on, linear in between.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Illumination {
    pub start_frame: u64,
    pub end_frame: u64,
    pub gain: f64,
    #[serde(default)]
    pub offset: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Noise {
    pub amplitude: u8,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneScript {
    pub width: usize,
    pub height: usize,
    pub frames: u64,
    pub fps: f64,
    pub background: Background,
    #[serde(default)]
    pub actors: Vec<ActorScript>,
    #[serde(default)]
    pub illumination: Option<Illumination>,
    #[serde(default)]
    pub noise: Noise,
}

impl SceneScript {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::config("width", "frame must be at least 1x1"));
        }
        if self.frames == 0 {
            return Err(Error::config("frames", "must be at least 1"));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::config("fps", "must be positive"));
        }
        if self.noise.amplitude > 127 {
            return Err(Error::config("noise.amplitude", "must be at most 127"));
        }
        if let Some(il) = &self.illumination {
            if il.end_frame <= il.start_frame {
                return Err(Error::config(
                    "illumination.end_frame",
                    "must be after start_frame",
                ));
            }
            if !(il.gain.is_finite() && il.offset.is_finite()) {
                return Err(Error::config("illumination.gain", "must be finite"));
            }
        }
        for (i, a) in self.actors.iter().enumerate() {
            let key = |field: &str| format!("actors[{i}].{field}");
            let [w, h] = a.size;
            if w * h < 2 {
                return Err(Error::config(
                    key("size"),
                    "actor needs at least two pixels",
                ));
            }
            if a.texture_amplitude == 0 {
                return Err(Error::config(
                    key("texture_amplitude"),
                    "texture must not be flat",
                ));
            }
            if a.waypoints.is_empty() {
                return Err(Error::config(
                    key("waypoints"),
                    "at least one waypoint is required",
                ));
            }
            for (j, win) in a.waypoints.windows(2).enumerate() {
                if win[1][0] <= win[0][0] {
                    return Err(Error::config(
                        format!("actors[{i}].waypoints[{}]", j + 1),
                        "waypoint frames must strictly increase",
                    ));
                }
            }
            for (j, &[f, x, y]) in a.waypoints.iter().enumerate() {
                let rect = Rect::new(x as usize, y as usize, w, h);
                if f >= self.frames || !rect.fits_within(self.width, self.height) {
                    return Err(Error::config(
                        format!("actors[{i}].waypoints[{j}]"),
                        format!(
                            "actor at ({x}, {y}) frame {f} leaves the {}x{} scene",
                            self.width, self.height
                        ),
                    ));
                }
            }
            if let Some(r) = a.removal_frame {
                if r <= a.waypoints[0][0] {
                    return Err(Error::config(
                        key("removal_frame"),
                        "must come after the first waypoint",
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundTruthType {
    StaticBegin,
    StaticEnd,
    OccludedBegin,
    OccludedEnd,
    Removed,
}

/// Ground-truth record, laid out like the incident log. `object_id` is the
/// actor's index in the script; intervals are inclusive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthEvent {
    pub event_type: GroundTruthType,
    pub object_id: u64,
    pub frame_index: u64,
    pub timestamp_s: f64,
    pub bbox: Rect,
    pub gamma: Option<f64>,
    /// Length of the interval so far; zero on `*_begin` and `removed`.
    pub duration_s: f64,
}

/// A validated script with its textures and background raster prepared.
#[derive(Clone, Debug)]
pub struct Scene {
    script: SceneScript,
    background: Vec<u8>,
    textures: Vec<Vec<u8>>,
}

impl Scene {
    pub fn new(script: SceneScript) -> Result<Self> {
        script.validate()?;
        let (w, h) = (script.width, script.height);
        let background = match script.background {
            Background::Flat { level } => vec![level; w * h],
            Background::Gradient { left, right } => {
                let row: Vec<u8> = (0..w)
                    .map(|x| {
                        let s = if w > 1 {
                            x as f64 / (w - 1) as f64
                        } else {
                            0.0
                        };
                        (f64::from(left) + (f64::from(right) - f64::from(left)) * s).round() as u8
                    })
                    .collect();
                row.repeat(h)
            }
        };
        let textures = script
            .actors
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let t = speckle(a);
                if t.windows(2).all(|p| p[0] == p[1]) {
                    return Err(Error::config(
                        format!("actors[{i}].texture_seed"),
                        "texture came out flat; pick another seed",
                    ));
                }
                Ok(t)
            })
            .collect::<Result<_>>()?;
        Ok(Scene {
            script,
            background,
            textures,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Scene::new(SceneScript::from_json(text)?)
    }

    pub fn builtin(name: &str) -> Option<Result<Self>> {
        builtin_script(name).map(Scene::from_json)
    }

    pub fn script(&self) -> &SceneScript {
        &self.script
    }

    pub fn frame_count(&self) -> u64 {
        self.script.frames
    }

    /// Where actor `index` is drawn at frame `t`, if it is visible.
    pub fn actor_rect(&self, index: usize, t: u64) -> Option<Rect> {
        let a = &self.script.actors[index];
        let first = a.waypoints[0][0];
        if t < first || a.removal_frame.is_some_and(|r| t >= r) {
            return None;
        }
        let [w, h] = a.size;
        let seg = a.waypoints.windows(2).find(|p| t < p[1][0]);
        let (x, y) = match seg {
            None => {
                let last = a.waypoints[a.waypoints.len() - 1];
                (last[1], last[2])
            }
            Some(p) => {
                let s = (t - p[0][0]) as f64 / (p[1][0] - p[0][0]) as f64;
                let lerp = |a: u64, b: u64| (a as f64 + (b as f64 - a as f64) * s).round() as u64;
                (lerp(p[0][1], p[1][1]), lerp(p[0][2], p[1][2]))
            }
        };
        Some(Rect::new(x as usize, y as usize, w, h))
    }

    pub fn frame(&self, t: u64) -> GrayFrame {
        let (w, h) = (self.script.width, self.script.height);
        let mut pixels = self.background.clone();
        for (i, texture) in self.textures.iter().enumerate() {
            if let Some(r) = self.actor_rect(i, t) {
                for row in 0..r.h {
                    let dst = (r.y + row) * w + r.x;
                    pixels[dst..dst + r.w].copy_from_slice(&texture[row * r.w..(row + 1) * r.w]);
                }
            }
        }
        if let Some(il) = &self.script.illumination {
            if t > il.start_frame {
                let s =
                    ((t - il.start_frame) as f64 / (il.end_frame - il.start_frame) as f64).min(1.0);
                let gain = 1.0 + (il.gain - 1.0) * s;
                let offset = il.offset * s;
                for p in &mut pixels {
                    *p = (gain * f64::from(*p) + offset).round().clamp(0.0, 255.0) as u8;
                }
            }
        }
        let a = i16::from(self.script.noise.amplitude);
        if a > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(
                self.script.noise.seed ^ t.wrapping_mul(0x9E37_79B9_7F4A_7C15),
            );
            for p in &mut pixels {
                *p = (i16::from(*p) + rng.random_range(-a..=a)).clamp(0, 255) as u8;
            }
        }
        GrayFrame::new(w, h, pixels, t, self.script.fps).expect("raster matches the scene size")
    }

    pub fn frames(&self) -> impl Iterator<Item = GrayFrame> + '_ {
        (0..self.script.frames).map(|t| self.frame(t))
    }

    pub fn ground_truth(&self) -> Vec<GroundTruthEvent> {
        let fps = self.script.fps;
        let last_frame = self.script.frames - 1;
        let mut events = Vec::new();
        let mut push = |kind, id: usize, frame: u64, bbox, since: u64| {
            events.push(GroundTruthEvent {
                event_type: kind,
                object_id: id as u64,
                frame_index: frame,
                timestamp_s: frame as f64 / fps,
                bbox,
                gamma: None,
                duration_s: (frame - since) as f64 / fps,
            });
        };
        for (i, a) in self.script.actors.iter().enumerate() {
            let end = a
                .removal_frame
                .map_or(last_frame, |r| (r - 1).min(last_frame));
            for (begin, stop) in self.static_intervals(a, end) {
                let bbox = self.actor_rect(i, begin).expect("static actor is visible");
                push(GroundTruthType::StaticBegin, i, begin, bbox, begin);
                let mut occluded_since = None;
                for t in begin..=stop {
                    let covered = (i + 1..self.script.actors.len()).any(|j| {
                        self.actor_rect(j, t)
                            .is_some_and(|r| r.intersection(&bbox).is_some())
                    });
                    match (covered, occluded_since) {
                        (true, None) => {
                            push(GroundTruthType::OccludedBegin, i, t, bbox, t);
                            occluded_since = Some(t);
                        }
                        (false, Some(s)) => {
                            push(GroundTruthType::OccludedEnd, i, t - 1, bbox, s);
                            occluded_since = None;
                        }
                        _ => {}
                    }
                }
                if let Some(s) = occluded_since {
                    push(GroundTruthType::OccludedEnd, i, stop, bbox, s);
                }
                push(GroundTruthType::StaticEnd, i, stop, bbox, begin);
            }
            if let Some(r) = a.removal_frame.filter(|&r| r <= last_frame) {
                let bbox = self
                    .actor_rect(i, r - 1)
                    .expect("actor visible before removal");
                push(GroundTruthType::Removed, i, r, bbox, r);
            }
        }
        events.sort_by_key(|e| (e.frame_index, e.object_id));
        events
    }

    /// Inclusive frame intervals during which the actor keeps one position,
    /// merged across consecutive waypoints and clipped to `end`.
    fn static_intervals(&self, a: &ActorScript, end: u64) -> Vec<(u64, u64)> {
        let mut spans: Vec<(u64, u64)> = Vec::new();
        let pos = |w: &[u64; 3]| (w[1], w[2]);
        let mut add = |b: u64, e: u64| {
            if b > end {
                return;
            }
            let e = e.min(end);
            match spans.last_mut() {
                Some(last) if last.1 == b => last.1 = e,
                _ => spans.push((b, e)),
            }
        };
        for p in a.waypoints.windows(2) {
            if pos(&p[0]) == pos(&p[1]) {
                add(p[0][0], p[1][0]);
            }
        }
        let last = a.waypoints[a.waypoints.len() - 1];
        // held at the final waypoint
        if last[0] < end {
            add(last[0], end);
        }
        spans
    }

    /// Writes every frame as PGM plus the ground-truth log into `dir`.
    pub fn render(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for frame in self.frames() {
            write_frame(dir, &frame)?;
        }
        let path = dir.join(GROUND_TRUTH_FILE);
        let mut text = String::new();
        for e in self.ground_truth() {
            text.push_str(&serde_json::to_string(&e).expect("ground truth serializes"));
            text.push('\n');
        }
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

/// Seeded speckle: base tone plus uniform per-pixel variation, clamped.
fn speckle(a: &ActorScript) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.texture_seed);
    let amp = i16::from(a.texture_amplitude);
    (0..a.size[0] * a.size[1])
        .map(|_| (i16::from(a.base_tone) + rng.random_range(-amp..=amp)).clamp(0, 255) as u8)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn script(json: serde_json::Value) -> SceneScript {
        serde_json::from_value(json).unwrap()
    }

    fn one_static_actor() -> SceneScript {
        script(serde_json::json!({
            "width": 40, "height": 20, "frames": 301, "fps": 30.0,
            "background": {"kind": "flat", "level": 60},
            "actors": [{"size": [8, 6], "texture_seed": 5, "waypoints": [[0, 10, 4], [300, 10, 4]]}]
        }))
    }

    #[test]
    fn static_actor_ground_truth() {
        let gt = Scene::new(one_static_actor()).unwrap().ground_truth();
        let kinds: Vec<(GroundTruthType, u64)> =
            gt.iter().map(|e| (e.event_type, e.frame_index)).collect();
        assert_eq!(
            kinds,
            vec![
                (GroundTruthType::StaticBegin, 0),
                (GroundTruthType::StaticEnd, 300)
            ]
        );
        assert_eq!(gt[1].duration_s, 10.0);
        assert_eq!(gt[0].bbox, Rect::new(10, 4, 8, 6));
    }

    #[test]
    fn rendering_is_deterministic() {
        let mut s = one_static_actor();
        s.noise = Noise {
            amplitude: 3,
            seed: 11,
        };
        let a = Scene::new(s.clone()).unwrap();
        let b = Scene::new(s).unwrap();
        for t in [0, 1, 150, 300] {
            assert_eq!(a.frame(t).pixels(), b.frame(t).pixels());
        }
        assert_ne!(a.frame(1).pixels(), a.frame(2).pixels());
    }

    #[test]
    fn empty_noiseless_scene_is_the_background() {
        let s = script(serde_json::json!({
            "width": 9, "height": 3, "frames": 5, "fps": 10.0,
            "background": {"kind": "gradient", "left": 10, "right": 90}
        }));
        let scene = Scene::new(s).unwrap();
        let expected: Vec<u8> = [10, 20, 30, 40, 50, 60, 70, 80, 90].repeat(3);
        for f in scene.frames() {
            assert_eq!(f.pixels(), &expected[..]);
        }
    }

    #[test]
    fn positions_interpolate_and_hold() {
        let s = script(serde_json::json!({
            "width": 100, "height": 20, "frames": 50, "fps": 10.0,
            "background": {"kind": "flat", "level": 0},
            "actors": [{"size": [4, 4], "texture_seed": 1,
                        "waypoints": [[10, 0, 0], [20, 10, 5]], "removal_frame": 40}]
        }));
        let scene = Scene::new(s).unwrap();
        assert_eq!(scene.actor_rect(0, 9), None);
        assert_eq!(scene.actor_rect(0, 10), Some(Rect::new(0, 0, 4, 4)));
        assert_eq!(scene.actor_rect(0, 15), Some(Rect::new(5, 3, 4, 4))); // 2.5 rounds up
        assert_eq!(scene.actor_rect(0, 39), Some(Rect::new(10, 5, 4, 4)));
        assert_eq!(scene.actor_rect(0, 40), None);
        let gt = scene.ground_truth();
        let kinds: Vec<(GroundTruthType, u64)> =
            gt.iter().map(|e| (e.event_type, e.frame_index)).collect();
        assert_eq!(
            kinds,
            vec![
                (GroundTruthType::StaticBegin, 20),
                (GroundTruthType::StaticEnd, 39),
                (GroundTruthType::Removed, 40)
            ]
        );
    }

    #[test]
    fn crossing_actor_marks_occlusion() {
        let s = script(serde_json::json!({
            "width": 200, "height": 20, "frames": 700, "fps": 30.0,
            "background": {"kind": "flat", "level": 50},
            "actors": [
                {"size": [10, 10], "texture_seed": 1, "waypoints": [[0, 100, 5]]},
                // right edge passes 100 at frame 500, left edge reaches 110 at 521
                {"size": [12, 10], "texture_seed": 2, "waypoints": [[490, 79, 5], [530, 119, 5]],
                 "removal_frame": 531}
            ]
        }));
        let gt = Scene::new(s).unwrap().ground_truth();
        let occ: Vec<(GroundTruthType, u64)> = gt
            .iter()
            .filter(|e| e.object_id == 0)
            .map(|e| (e.event_type, e.frame_index))
            .collect();
        assert_eq!(
            occ,
            vec![
                (GroundTruthType::StaticBegin, 0),
                (GroundTruthType::OccludedBegin, 500),
                (GroundTruthType::OccludedEnd, 520),
                (GroundTruthType::StaticEnd, 699)
            ]
        );
    }

    #[test]
    fn illumination_ramp_scales_brightness() {
        let s = script(serde_json::json!({
            "width": 4, "height": 1, "frames": 40, "fps": 10.0,
            "background": {"kind": "flat", "level": 100},
            "illumination": {"start_frame": 10, "end_frame": 30, "gain": 2.0, "offset": 10.0}
        }));
        let scene = Scene::new(s).unwrap();
        assert_eq!(scene.frame(10).pixels()[0], 100);
        assert_eq!(scene.frame(20).pixels()[0], 155); // 1.5 * 100 + 5
        assert_eq!(scene.frame(30).pixels()[0], 210);
        assert_eq!(scene.frame(39).pixels()[0], 210);
    }

    #[test]
    fn textures_are_speckled() {
        let scene = Scene::new(one_static_actor()).unwrap();
        let f = scene.frame(0);
        let patch = f.patch(&Rect::new(10, 4, 8, 6)).unwrap();
        assert!(patch.iter().any(|&p| p != patch[0]));
        assert!(patch.iter().all(|&p| (140..=220).contains(&p)));
    }

    #[test]
    fn validation_names_the_field() {
        let bad = r#"{"width": 40, "height": 20, "frames": 10, "fps": 30,
            "background": {"kind": "flat", "level": 60},
            "actors": [{"size": [8, 6], "texture_seed": 5, "waypoints": [[0, 10, 4], [0, 12, 4]]}]}"#;
        match Scene::from_json(bad) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "actors[0].waypoints[1]"),
            other => panic!("{other:?}"),
        }
        let outside = bad.replace("[0, 12, 4]", "[5, 35, 4]");
        match Scene::from_json(&outside) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "actors[0].waypoints[1]"),
            other => panic!("{other:?}"),
        }
        let typo = bad.replace("\"texture_seed\": 5", "\"texture_seed\": \"five\"");
        match Scene::from_json(&typo) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "actors[0].texture_seed"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bundled_scenarios_parse() {
        for (name, text) in BUILTIN_SCENARIOS {
            let scene = Scene::from_json(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(scene.frame_count() > 0);
        }
        assert!(builtin_script("no-such-scene").is_none());
    }

    #[test]
    fn render_writes_frames_and_truth() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = one_static_actor();
        s.frames = 3;
        s.actors[0].waypoints = vec![[0, 10, 4]];
        Scene::new(s).unwrap().render(dir.path()).unwrap();
        assert!(dir.path().join("frame_000002.pgm").is_file());
        let truth = fs::read_to_string(dir.path().join(GROUND_TRUTH_FILE)).unwrap();
        assert_eq!(truth.lines().count(), 2);
        assert!(truth
            .starts_with("{\"event_type\":\"static_begin\",\"object_id\":0,\"frame_index\":0,"));
    }
}
