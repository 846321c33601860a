//! Stopped / parked / moved lifecycle of stationary objects.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rect_overlap, OverlapMetric, Rect};
use crate::ncc_monitor::{MonitorOutcome, OutcomeKind};
use crate::tracker::TrackedObject;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Tracking,
    Stopped,
    Parked,
    Moved,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Tracking => "tracking",
            Stage::Stopped => "stopped",
            Stage::Parked => "parked",
            Stage::Moved => "moved",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    Stopped,
    Parked,
    Moved,
    PostponedCheck,
}

/// One line of the incident log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncidentEvent {
    pub event_type: EventType,
    pub object_id: u64,
    pub frame_index: u64,
    pub timestamp_s: f64,
    pub bbox: Rect,
    pub gamma: Option<f64>,
    pub duration_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IncidentState {
    pub object_id: u64,
    pub stage: Stage,
    pub stop_start_frame: u64,
    pub total_stopped_frames: u64,
    pub bbox: Rect,
    pub last_gamma: Option<f64>,
    /// False once the incident is closed: moved, or gone before parking.
    pub active: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventParams {
    /// Static frames after which an object counts as stopped.
    pub stop_frames: u64,
    /// Static frames after which an object counts as parked.
    pub park_frames: u64,
}

impl Default for EventParams {
    fn default() -> Self {
        EventParams {
            stop_frames: 50,
            park_frames: 150,
        }
    }
}

impl EventParams {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        if self.park_frames <= self.stop_frames {
            return Err(Error::config(
                format!("{prefix}park_frames"),
                "must exceed stop_frames",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct EventEngine {
    params: EventParams,
    fps: f64,
    /// Candidates overlapping an active incident by more than this are the
    /// same vehicle seen again and do not open a new incident.
    overlap_threshold: f64,
    overlap_metric: OverlapMetric,
    incidents: BTreeMap<u64, IncidentState>,
    retired: BTreeSet<u64>,
    last_frame: Option<u64>,
}

impl EventEngine {
    pub fn new(
        params: EventParams,
        fps: f64,
        overlap_threshold: f64,
        overlap_metric: OverlapMetric,
    ) -> Self {
        EventEngine {
            params,
            fps,
            overlap_threshold,
            overlap_metric,
            incidents: BTreeMap::new(),
            retired: BTreeSet::new(),
            last_frame: None,
        }
    }

    pub fn incidents(&self) -> impl Iterator<Item = &IncidentState> {
        self.incidents.values()
    }

    pub fn incident(&self, object_id: u64) -> Option<&IncidentState> {
        self.incidents.get(&object_id)
    }

    fn event(
        &self,
        kind: EventType,
        state: &IncidentState,
        frame_index: u64,
        gamma: Option<f64>,
    ) -> IncidentEvent {
        IncidentEvent {
            event_type: kind,
            object_id: state.object_id,
            frame_index,
            timestamp_s: frame_index as f64 / self.fps,
            bbox: state.bbox,
            gamma,
            duration_s: (frame_index - state.stop_start_frame) as f64 / self.fps,
        }
    }

    /// Feeds one frame's stationary candidates and monitor outcomes.
    ///
    /// Parked events are the cue to register a reference patch, moved events
    /// the cue to drop it.
    pub fn advance(
        &mut self,
        frame_index: u64,
        candidates: &[TrackedObject],
        outcomes: &[MonitorOutcome],
    ) -> Result<Vec<IncidentEvent>> {
        if let Some(last) = self.last_frame {
            assert!(frame_index >= last, "frames must be fed in order");
        }
        self.last_frame = Some(frame_index);
        let mut events = Vec::new();

        for outcome in outcomes {
            let state = match self.incidents.get(&outcome.object_id) {
                Some(s) if s.active && s.stage == Stage::Parked => s.clone(),
                _ => return Err(Error::UnknownObject(outcome.object_id)),
            };
            let mut next = state;
            next.total_stopped_frames = frame_index - next.stop_start_frame;
            match outcome.kind {
                OutcomeKind::Present => next.last_gamma = outcome.gamma,
                OutcomeKind::Skipped => {}
                OutcomeKind::Postponed => {
                    events.push(self.event(EventType::PostponedCheck, &next, frame_index, None));
                }
                OutcomeKind::Moved => {
                    next.last_gamma = outcome.gamma;
                    next.stage = Stage::Moved;
                    next.active = false;
                    events.push(self.event(EventType::Moved, &next, frame_index, outcome.gamma));
                    self.retired.insert(next.object_id);
                }
            }
            self.incidents.insert(next.object_id, next);
        }

        let seen: BTreeSet<u64> = candidates.iter().map(|c| c.id).collect();
        for candidate in candidates {
            if self.retired.contains(&candidate.id) {
                continue;
            }
            if !self.incidents.contains_key(&candidate.id) {
                let duplicate = self.incidents.values().any(|s| {
                    s.active
                        && s.stage >= Stage::Stopped
                        && rect_overlap(&s.bbox, &candidate.bbox, self.overlap_metric)
                            > self.overlap_threshold
                });
                if duplicate {
                    continue;
                }
                self.incidents.insert(
                    candidate.id,
                    IncidentState {
                        object_id: candidate.id,
                        stage: Stage::Tracking,
                        stop_start_frame: candidate.first_seen_frame,
                        total_stopped_frames: 0,
                        bbox: candidate.bbox,
                        last_gamma: None,
                        active: true,
                    },
                );
            }
            let mut state = self.incidents[&candidate.id].clone();
            if !state.active || state.stage >= Stage::Parked {
                continue;
            }
            state.bbox = candidate.bbox;
            state.total_stopped_frames = frame_index.saturating_sub(state.stop_start_frame);
            if state.stage == Stage::Tracking
                && state.total_stopped_frames >= self.params.stop_frames
            {
                state.stage = Stage::Stopped;
                events.push(self.event(EventType::Stopped, &state, frame_index, None));
            }
            if state.stage == Stage::Stopped
                && state.total_stopped_frames >= self.params.park_frames
            {
                state.stage = Stage::Parked;
                events.push(self.event(EventType::Parked, &state, frame_index, None));
            }
            self.incidents.insert(candidate.id, state);
        }

        // candidates that vanished before parking close their incident
        self.incidents.retain(|id, s| {
            if !s.active || s.stage >= Stage::Parked || seen.contains(id) {
                return true;
            }
            s.active = false;
            // an object that never reached the stopped stage is no incident
            s.stage != Stage::Tracking
        });
        for s in self.incidents.values_mut().filter(|s| s.active) {
            s.total_stopped_frames = frame_index.saturating_sub(s.stop_start_frame);
        }
        Ok(events)
    }

    /// Per-object summary of the incidents that reached at least the stopped stage.
    pub fn report(&self) -> Summary {
        let rows: Vec<IncidentSummary> = self
            .incidents
            .values()
            .filter(|s| s.stage >= Stage::Stopped)
            .map(|s| IncidentSummary {
                object_id: s.object_id,
                stage: s.stage,
                stop_start_frame: s.stop_start_frame,
                total_stopped_frames: s.total_stopped_frames,
                duration_s: s.total_stopped_frames as f64 / self.fps,
                last_gamma: s.last_gamma,
            })
            .collect();
        let max_parking_minutes = rows
            .iter()
            .filter(|r| r.stage >= Stage::Parked)
            .map(|r| r.duration_s / 60.0)
            .reduce(f64::max);
        Summary {
            rows,
            max_parking_minutes,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IncidentSummary {
    pub object_id: u64,
    /// Furthest stage reached.
    pub stage: Stage,
    pub stop_start_frame: u64,
    pub total_stopped_frames: u64,
    pub duration_s: f64,
    pub last_gamma: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Summary {
    pub rows: Vec<IncidentSummary>,
    pub max_parking_minutes: Option<f64>,
}

impl Summary {
    pub fn max_parking_display(&self) -> Option<String> {
        self.max_parking_minutes.map(|m| format!("{m:.2}"))
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>6}  {:<8}  {:>10}  {:>13}  {:>10}  {:>8}",
            "object", "stage", "stop_start", "stopped_frames", "duration_s", "gamma"
        );
        for r in &self.rows {
            let gamma = r
                .last_gamma
                .map_or_else(|| "-".to_string(), |g| format!("{g:.4}"));
            let _ = writeln!(
                out,
                "{:>6}  {:<8}  {:>10}  {:>13}  {:>10.2}  {:>8}",
                r.object_id,
                r.stage.as_str(),
                r.stop_start_frame,
                r.total_stopped_frames,
                r.duration_s,
                gamma
            );
        }
        match self.max_parking_display() {
            Some(m) => {
                let _ = writeln!(out, "maximum parking time: {m} minutes");
            }
            None => {
                let _ = writeln!(out, "no parked vehicles");
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "object_id,stage,stop_start_frame,total_stopped_frames,duration_s,last_gamma\n",
        );
        for r in &self.rows {
            let gamma = r.last_gamma.map(|g| g.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.object_id,
                r.stage.as_str(),
                r.stop_start_frame,
                r.total_stopped_frames,
                r.duration_s,
                gamma
            );
        }
        out
    }
}

/// Writes events as JSON lines.
pub fn write_events<W: Write>(mut out: W, events: &[IncidentEvent]) -> std::io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn engine() -> EventEngine {
        EventEngine::new(EventParams::default(), 30.0, 0.8, OverlapMetric::MinArea)
    }

    fn candidate(id: u64, first_seen: u64, bbox: Rect) -> TrackedObject {
        TrackedObject {
            id,
            bbox,
            consecutive_frames: 1,
            first_seen_frame: first_seen,
            last_matched_frame: first_seen,
            missed_frames: 0,
        }
    }

    fn outcome(id: u64, kind: OutcomeKind, gamma: Option<f64>) -> MonitorOutcome {
        MonitorOutcome {
            object_id: id,
            kind,
            gamma,
        }
    }

    const BOX: Rect = Rect {
        x: 10,
        y: 5,
        w: 20,
        h: 10,
    };

    /// Candidate static from frame 100, present through `until`.
    fn run_static(e: &mut EventEngine, until: u64) -> Vec<IncidentEvent> {
        let c = [candidate(1, 100, BOX)];
        let mut all = Vec::new();
        for f in 100..=until {
            all.extend(e.advance(f, &c, &[]).unwrap());
        }
        all
    }

    #[test]
    fn stages_at_fifty_and_one_fifty_frames() {
        let mut e = engine();
        let events = run_static(&mut e, 400);
        let stages: Vec<(EventType, u64)> = events
            .iter()
            .map(|e| (e.event_type, e.frame_index))
            .collect();
        assert_eq!(
            stages,
            vec![(EventType::Stopped, 150), (EventType::Parked, 250)]
        );
        assert_eq!(events[1].duration_s, 5.0);
        let summary = e.report();
        assert_eq!(summary.rows.len(), 1);
        assert_eq!(summary.rows[0].duration_s, 10.0);
        assert_eq!(summary.rows[0].stage, Stage::Parked);
    }

    #[test]
    fn departure_before_parking_closes_as_stopped() {
        let mut e = engine();
        let mut events = run_static(&mut e, 240);
        events.extend(e.advance(241, &[], &[]).unwrap());
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].event_type, EventType::Stopped);
        let s = e.incident(1).unwrap();
        assert_eq!(
            (s.stage, s.active, s.total_stopped_frames),
            (Stage::Stopped, false, 140)
        );
        assert!(e.report().max_parking_minutes.is_none());
    }

    #[test]
    fn short_lived_candidate_leaves_no_trace() {
        let mut e = engine();
        run_static(&mut e, 120);
        e.advance(121, &[], &[]).unwrap();
        assert!(e.incident(1).is_none());
        assert!(e.report().rows.is_empty());
    }

    #[test]
    fn moved_outcome_retires_the_incident() {
        let mut e = engine();
        run_static(&mut e, 260);
        let ev = e
            .advance(270, &[], &[outcome(1, OutcomeKind::Moved, Some(0.12))])
            .unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(
            (ev[0].event_type, ev[0].gamma),
            (EventType::Moved, Some(0.12))
        );
        assert_eq!(ev[0].duration_s, 170.0 / 30.0);
        // the same tracker id never reopens
        assert!(e
            .advance(271, &[candidate(1, 100, BOX)], &[])
            .unwrap()
            .is_empty());
        assert_eq!(e.incident(1).unwrap().stage, Stage::Moved);
        // and an outcome for it is an error
        assert!(matches!(
            e.advance(272, &[], &[outcome(1, OutcomeKind::Present, Some(1.0))]),
            Err(Error::UnknownObject(1))
        ));
    }

    #[test]
    fn postponed_checks_are_logged() {
        let mut e = engine();
        run_static(&mut e, 260);
        let ev = e
            .advance(261, &[], &[outcome(1, OutcomeKind::Postponed, None)])
            .unwrap();
        assert_eq!(ev[0].event_type, EventType::PostponedCheck);
        assert_eq!(ev[0].gamma, None);
    }

    #[test]
    fn outcome_for_unknown_object_is_an_error() {
        let mut e = engine();
        assert!(matches!(
            e.advance(0, &[], &[outcome(9, OutcomeKind::Skipped, None)]),
            Err(Error::UnknownObject(9))
        ));
    }

    #[test]
    fn redetection_of_a_parked_vehicle_is_suppressed() {
        let mut e = engine();
        run_static(&mut e, 260);
        let again = [candidate(2, 255, Rect::new(11, 5, 20, 10))];
        for f in 261..=500 {
            assert!(e.advance(f, &again, &[]).unwrap().is_empty());
        }
        assert!(e.incident(2).is_none());
        // elsewhere in the frame a new incident opens normally
        let other = [candidate(3, 400, Rect::new(60, 5, 20, 10))];
        let ev = e.advance(501, &other, &[]).unwrap();
        assert_eq!(ev[0].object_id, 3);
    }

    #[test]
    fn max_parking_formatting() {
        let mut e = engine();
        let c = [candidate(1, 0, BOX)];
        e.advance(0, &c, &[]).unwrap();
        e.advance(7440, &c, &[]).unwrap();
        let s = e.report();
        assert_eq!(s.max_parking_display().as_deref(), Some("4.13"));
        assert!(s.table().contains("maximum parking time: 4.13 minutes"));
    }

    #[test]
    fn rows_ordered_by_object_id() {
        let mut e = engine();
        let cs = [
            candidate(4, 0, Rect::new(60, 0, 10, 10)),
            candidate(2, 0, Rect::new(0, 0, 10, 10)),
        ];
        e.advance(0, &cs, &[]).unwrap();
        e.advance(60, &cs, &[]).unwrap();
        let ids: Vec<u64> = e.report().rows.iter().map(|r| r.object_id).collect();
        assert_eq!(ids, vec![2, 4]);
        assert!(engine().report().rows.is_empty());
    }

    #[test]
    fn log_line_schema() {
        let ev = IncidentEvent {
            event_type: EventType::PostponedCheck,
            object_id: 3,
            frame_index: 45,
            timestamp_s: 1.5,
            bbox: Rect::new(1, 2, 3, 4),
            gamma: None,
            duration_s: 0.5,
        };
        let mut buf = Vec::new();
        write_events(&mut buf, &[ev]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"event_type\":\"postponed_check\",\"object_id\":3,\"frame_index\":45,\"timestamp_s\":1.5,\
             \"bbox\":[1,2,3,4],\"gamma\":null,\"duration_s\":0.5}\n"
        );
    }

    #[test]
    fn csv_has_a_row_per_incident() {
        let mut e = engine();
        run_static(&mut e, 400);
        let csv = e.report().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1], "1,parked,100,300,10,");
    }
}
