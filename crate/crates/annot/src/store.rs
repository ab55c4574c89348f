//! Append-only JSON-lines event log with an in-memory state derived from it.
//!
//! Appends are serialized through one writer lock. Readers load the current
//! state through an atomic pointer and never block on the writer.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use arc_swap::ArcSwap;
use serde::{Deserialize, Serialize};
use spev_core::subjective::{aggregate_subjects, median_vv, AnnotationRecord, GroundTruthRow};

use crate::api::{Annotation, FrameProgress, Session, SessionStatus, SessionView};
use crate::catalog::CameraEntry;
use crate::error::AnnotError;

pub const LOG_FILE: &str = "annotations.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    SessionCreated(Session),
    Annotation(Annotation),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub session: Session,
    /// Log position of the creating event; orders sessions.
    pub seq: u64,
    pub records: BTreeMap<(u64, u8), AnnotationRecord>,
}

impl SessionState {
    pub fn is_complete(&self) -> bool {
        self.session
            .frames
            .iter()
            .all(|f| self.frame_records(*f).len() == self.session.required_repetitions as usize)
    }

    pub fn status(&self) -> SessionStatus {
        if self.is_complete() {
            SessionStatus::Complete
        } else {
            SessionStatus::Open
        }
    }

    pub fn frame_records(&self, frame_index: u64) -> Vec<AnnotationRecord> {
        self.records
            .range((frame_index, 0)..=(frame_index, u8::MAX))
            .map(|(_, r)| r.clone())
            .collect()
    }

    pub fn view(&self) -> SessionView {
        SessionView {
            session: self.session.clone(),
            status: self.status(),
            progress: self
                .session
                .frames
                .iter()
                .map(|&f| {
                    let recs = self.frame_records(f);
                    FrameProgress {
                        frame_index: f,
                        repetitions: recs.iter().map(|r| r.repetition).collect(),
                        median_v_v: median_vv(&recs).ok(),
                    }
                })
                .collect(),
        }
    }
}

/// Everything derivable from the log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct State {
    pub sessions: BTreeMap<String, Arc<SessionState>>,
    pub events: u64,
}

impl State {
    pub fn session(&self, id: &str) -> Result<&Arc<SessionState>, AnnotError> {
        self.sessions
            .get(id)
            .ok_or_else(|| AnnotError::UnknownSession(id.into()))
    }

    /// Checks log-level invariants: known session, open, frame in session,
    /// repetition in range and not yet recorded.
    fn check(&self, event: &Event) -> Result<(), AnnotError> {
        match event {
            Event::SessionCreated(s) => {
                if self.sessions.contains_key(&s.session_id) {
                    return Err(AnnotError::InvalidRequest(format!(
                        "session {} already exists",
                        s.session_id
                    )));
                }
                if s.frames.is_empty() {
                    return Err(AnnotError::EmptyFrameSelection);
                }
            }
            Event::Annotation(a) => {
                let st = self.session(&a.session_id)?;
                if st.is_complete() {
                    return Err(AnnotError::SessionClosed(a.session_id.clone()));
                }
                if !st.session.frames.contains(&a.frame_index) {
                    return Err(AnnotError::UnknownFrame {
                        scope: format!("session {}", a.session_id),
                        frame_index: a.frame_index,
                    });
                }
                if !(1..=st.session.required_repetitions).contains(&a.repetition) {
                    return Err(AnnotError::RepetitionOutOfRange(a.repetition));
                }
                if st.records.contains_key(&(a.frame_index, a.repetition)) {
                    return Err(AnnotError::DuplicateRepetition {
                        frame_index: a.frame_index,
                        repetition: a.repetition,
                    });
                }
            }
        }
        Ok(())
    }

    /// State after `event`, which must already pass [`State::check`].
    fn apply(&self, event: &Event) -> State {
        let mut next = self.clone();
        match event {
            Event::SessionCreated(s) => {
                next.sessions.insert(
                    s.session_id.clone(),
                    Arc::new(SessionState {
                        session: s.clone(),
                        seq: self.events,
                        records: BTreeMap::new(),
                    }),
                );
            }
            Event::Annotation(a) => {
                let mut st = (*next.sessions[&a.session_id]).clone();
                st.records.insert((a.frame_index, a.repetition), a.clone().into());
                next.sessions.insert(a.session_id.clone(), Arc::new(st));
            }
        }
        next.events += 1;
        next
    }

    /// Rebuilds state from a sequence of events.
    pub fn replay<'a>(events: impl IntoIterator<Item = &'a Event>) -> Result<State, AnnotError> {
        let mut state = State::default();
        for (i, e) in events.into_iter().enumerate() {
            state
                .check(e)
                .map_err(|err| AnnotError::Storage(format!("event {i}: {err}")))?;
            state = state.apply(e);
        }
        Ok(state)
    }
}

pub struct Store {
    path: PathBuf,
    writer: Mutex<File>,
    state: ArcSwap<State>,
}

impl Store {
    /// Opens or creates the log in `dir` and replays it. A final line cut
    /// short by a crash is dropped and truncated away.
    pub fn open(dir: &Path) -> Result<Store, AnnotError> {
        let storage = |e: std::io::Error| AnnotError::Storage(format!("{}: {e}", dir.display()));
        fs::create_dir_all(dir).map_err(storage)?;
        let path = dir.join(LOG_FILE);
        let (events, valid_len) = if path.exists() {
            read_log(&path)?
        } else {
            (Vec::new(), 0)
        };
        let state = State::replay(&events)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(storage)?;
        if file.metadata().map_err(storage)?.len() != valid_len {
            file.set_len(valid_len).map_err(storage)?;
        }
        Ok(Store {
            path,
            writer: Mutex::new(file),
            state: ArcSwap::from_pointee(state),
        })
    }

    pub fn log_path(&self) -> &Path {
        &self.path
    }

    /// Current state; cheap and never blocked by writers.
    pub fn snapshot(&self) -> Arc<State> {
        self.state.load_full()
    }

    /// Validates `event` against the latest state, appends it and publishes
    /// the new state. Returns the state that includes the event.
    pub fn append(&self, event: Event) -> Result<Arc<State>, AnnotError> {
        let mut file = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        let current = self.state.load_full();
        current.check(&event)?;
        let mut line = serde_json::to_vec(&event).map_err(|e| AnnotError::Storage(e.to_string()))?;
        line.push(b'\n');
        file.write_all(&line)
            .map_err(|e| AnnotError::Storage(format!("{}: {e}", self.path.display())))?;
        let next = Arc::new(current.apply(&event));
        self.state.store(next.clone());
        Ok(next)
    }
}

fn read_log(path: &Path) -> Result<(Vec<Event>, u64), AnnotError> {
    let storage = |e: String| AnnotError::Storage(format!("{}: {e}", path.display()));
    let file = File::open(path).map_err(|e| storage(e.to_string()))?;
    let mut reader = BufReader::new(file);
    let mut events = Vec::new();
    let mut valid = 0u64;
    let mut buf = Vec::new();
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf).map_err(|e| storage(e.to_string()))?;
        if n == 0 {
            break;
        }
        if buf.last() != Some(&b'\n') {
            // Torn tail from an interrupted append.
            break;
        }
        let e =
            serde_json::from_slice::<Event>(&buf).map_err(|e| storage(format!("line {}: {e}", events.len() + 1)))?;
        events.push(e);
        valid += n as u64;
    }
    Ok((events, valid))
}

/// Ground truth for one camera. For each subject the most recently created
/// complete session counts; each frame aggregates the medians of the
/// subjects whose chosen session contains it.
pub fn export_ground_truth(
    state: &State,
    camera_id: &str,
    camera: &CameraEntry,
) -> Result<Vec<GroundTruthRow>, AnnotError> {
    let mut latest: BTreeMap<&str, &SessionState> = BTreeMap::new();
    for st in state.sessions.values() {
        if st.session.camera_id != camera_id || !st.is_complete() {
            continue;
        }
        let slot = latest.entry(st.session.subject_id.as_str()).or_insert(st);
        if st.seq > slot.seq {
            *slot = st;
        }
    }
    if latest.is_empty() {
        return Err(AnnotError::NoCompleteSessions(camera_id.into()));
    }
    let mut per_frame: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for st in latest.values() {
        for &f in &st.session.frames {
            let m = median_vv(&st.frame_records(f)).map_err(|e| AnnotError::Storage(e.to_string()))?;
            per_frame.entry(f).or_default().push(m);
        }
    }
    per_frame
        .into_iter()
        .map(|(frame_index, medians)| {
            let (v_v_agg, vis) = aggregate_subjects(&medians, &camera.geometry).map_err(|e| match e {
                spev_core::subjective::SubjectiveError::BelowHorizon { v_v, v_h } => {
                    AnnotError::BelowHorizon { v_v, v_h }
                }
                other => AnnotError::Storage(other.to_string()),
            })?;
            Ok(GroundTruthRow {
                frame_index,
                camera_id: camera_id.into(),
                v_v_agg,
                vis_15: vis.vis_15,
                vis_9: vis.vis_9,
                vis_mean: vis.vis_mean,
                n_subjects: medians.len(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session(id: &str, frames: Vec<u64>) -> Event {
        Event::SessionCreated(Session {
            session_id: id.into(),
            camera_id: "c".into(),
            subject_id: "p".into(),
            frames,
            required_repetitions: 5,
            created_at: String::new(),
        })
    }

    fn mark(id: &str, frame: u64, rep: u8) -> Event {
        Event::Annotation(Annotation {
            session_id: id.into(),
            camera_id: "c".into(),
            frame_index: frame,
            subject_id: "p".into(),
            repetition: rep,
            v_v: 600.0,
            created_at: String::new(),
        })
    }

    #[test]
    fn replay_enforces_uniqueness() {
        let ok = vec![session("s", vec![1]), mark("s", 1, 1), mark("s", 1, 2)];
        let state = State::replay(&ok).unwrap();
        assert_eq!(state.events, 3);
        assert_eq!(state.sessions["s"].records.len(), 2);
        let dup = vec![session("s", vec![1]), mark("s", 1, 1), mark("s", 1, 1)];
        assert!(State::replay(&dup).is_err());
        assert!(State::replay(&[session("s", vec![1]), session("s", vec![1])]).is_err());
        assert!(State::replay(&[mark("ghost", 1, 1)]).is_err());
    }

    #[test]
    fn completion_closes_the_session() {
        let mut events = vec![session("s", vec![4])];
        events.extend((1..=5).map(|r| mark("s", 4, r)));
        let state = State::replay(&events).unwrap();
        assert_eq!(state.sessions["s"].status(), SessionStatus::Complete);
        assert_eq!(
            state.check(&mark("s", 4, 1)),
            Err(AnnotError::SessionClosed("s".into()))
        );
    }

    #[test]
    fn appends_survive_reopening() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        store.append(session("s", vec![0])).unwrap();
        store.append(mark("s", 0, 3)).unwrap();
        assert!(store.append(mark("s", 0, 3)).is_err());
        let before = store.snapshot();
        drop(store);
        let again = Store::open(dir.path()).unwrap();
        assert_eq!(*again.snapshot(), *before);
        assert_eq!(fs::read_to_string(again.log_path()).unwrap().lines().count(), 2);
    }

    #[test]
    fn corrupt_complete_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(LOG_FILE), "not json\n").unwrap();
        assert!(matches!(Store::open(dir.path()), Err(AnnotError::Storage(_))));
    }
}
