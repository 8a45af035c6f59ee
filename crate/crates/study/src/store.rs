//! Study state: session assignment, judgment recording and the
//! append-only event log it is rebuilt from.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use prosody_core::triad::{Judgment, PairChoice, Triad};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("no more triads available for rater {0}")]
    StudyComplete(String),
    #[error("rater {rater_id} already judged triad {triad_id}")]
    DuplicateJudgment { rater_id: String, triad_id: String },
    #[error("unknown triad {0}")]
    UnknownTriad(String),
    #[error("triad {triad_id} is not in any session of rater {rater_id}")]
    SessionMismatch { rater_id: String, triad_id: String },
    #[error("unknown clip {0}")]
    NotFound(String),
    #[error("missing study data: {0}")]
    MissingData(String),
    #[error("event log {path}, line {line}: {msg}")]
    CorruptLog { path: PathBuf, line: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub raters_per_triad: usize,
    pub tasks_per_session: usize,
    pub seed: u64,
    /// Shown to raters above every task.
    pub instructions: String,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            raters_per_triad: 3,
            tasks_per_session: 20,
            seed: 17,
            instructions: "Listen to the clips and choose two that are the most similar to each other.".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub rater_id: String,
    /// Triad ids in presentation order, including the attention check.
    pub tasks: Vec<String>,
    /// A triad whose `identical_pair` clips are the same recording.
    pub attention_triad: Triad,
    pub identical_pair: PairChoice,
}

impl Session {
    pub fn attention_index(&self) -> usize {
        self.tasks
            .iter()
            .position(|t| *t == self.attention_triad.triad_id)
            .expect("attention check is in the task list")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    SessionCreated { session: Session },
    JudgmentRecorded {
        session_id: String,
        judgment: Judgment,
        /// Set for attention checks only.
        attention_passed: Option<bool>,
    },
}

#[derive(Debug, Default)]
struct State {
    sessions: Vec<Session>,
    session_index: HashMap<String, usize>,
    /// Presentations counted at assignment time.
    presentations: HashMap<String, usize>,
    seen: HashMap<String, HashSet<String>>,
    /// (rater, triad) to session id, for every assigned task.
    assigned: HashMap<(String, String), String>,
    judged: HashSet<(String, String)>,
    judgments: Vec<(String, Judgment)>,
    attention: HashMap<String, bool>,
    completed: HashMap<String, usize>,
}

/// Session summary returned to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub rater_id: String,
    pub tasks: Vec<String>,
    pub completed: usize,
    pub instructions: String,
}

pub struct Study {
    cfg: StudyConfig,
    triads: Vec<Triad>,
    triad_index: HashMap<String, usize>,
    log_path: PathBuf,
    inner: Mutex<(State, File)>,
}

impl Study {
    /// Opens the study, replaying `log_path` if it exists.
    pub fn open(triads: Vec<Triad>, cfg: StudyConfig, log_path: impl Into<PathBuf>) -> Result<Self, StudyError> {
        let log_path = log_path.into();
        let triad_index = triads.iter().enumerate().map(|(i, t)| (t.triad_id.clone(), i)).collect();
        let mut study_state = State::default();
        if log_path.exists() {
            let io = |source| StudyError::Io {
                path: log_path.clone(),
                source,
            };
            let reader = BufReader::new(File::open(&log_path).map_err(io)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let event: Event = serde_json::from_str(&line).map_err(|e| StudyError::CorruptLog {
                    path: log_path.clone(),
                    line: i + 1,
                    msg: e.to_string(),
                })?;
                apply(&mut study_state, event);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(|source| StudyError::Io {
                path: log_path.clone(),
                source,
            })?;
        Ok(Self {
            cfg,
            triads,
            triad_index,
            log_path,
            inner: Mutex::new((study_state, file)),
        })
    }

    pub fn config(&self) -> &StudyConfig {
        &self.cfg
    }

    pub fn log_path(&self) -> &Path {
        &self.log_path
    }

    fn append(&self, file: &mut File, event: &Event) -> Result<(), StudyError> {
        let mut line = serde_json::to_string(event).expect("events serialize");
        line.push('\n');
        let io = |source| StudyError::Io {
            path: self.log_path.clone(),
            source,
        };
        file.write_all(line.as_bytes()).map_err(io)?;
        file.sync_data().map_err(io)
    }

    fn view(&self, st: &State, s: &Session) -> SessionView {
        SessionView {
            session_id: s.session_id.clone(),
            rater_id: s.rater_id.clone(),
            tasks: s.tasks.clone(),
            completed: st.completed.get(&s.session_id).copied().unwrap_or(0),
            instructions: self.cfg.instructions.clone(),
        }
    }

    /// Assigns the least-presented triads this rater has not seen, plus an
    /// attention check at a uniformly random position.
    pub fn create_session(&self, rater_id: &str) -> Result<SessionView, StudyError> {
        let mut guard = self.inner.lock().expect("study lock");
        let (st, file) = &mut *guard;
        let seen = st.seen.get(rater_id);
        let mut eligible: Vec<(usize, usize)> = self
            .triads
            .iter()
            .enumerate()
            .filter(|(_, t)| t.has_distinct_clips())
            .filter(|(_, t)| seen.is_none_or(|s| !s.contains(&t.triad_id)))
            .map(|(i, t)| (st.presentations.get(&t.triad_id).copied().unwrap_or(0), i))
            .filter(|(p, _)| *p < self.cfg.raters_per_triad)
            .collect();
        if eligible.len() < self.cfg.tasks_per_session || self.cfg.tasks_per_session == 0 {
            return Err(StudyError::StudyComplete(rater_id.to_string()));
        }
        eligible.sort_unstable();
        let chosen: Vec<&Triad> = eligible[..self.cfg.tasks_per_session]
            .iter()
            .map(|&(_, i)| &self.triads[i])
            .collect();

        let n = st.sessions.len();
        let session_id = format!("s{n:05}");
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let base = chosen.choose(&mut rng).expect("nonempty session");
        let identical_pair = PairChoice::ALL[rng.random_range(0..3)];
        let (i, j) = identical_pair.positions();
        let mut clips = [base.clips[1].clone(), base.clips[1].clone(), base.clips[1].clone()];
        clips[i] = base.clips[0].clone();
        clips[j] = base.clips[0].clone();
        let attention_triad = Triad {
            triad_id: format!("attn-{session_id}"),
            dataset: base.dataset,
            lexical_form: base.lexical_form.clone(),
            clips,
        };
        let mut tasks: Vec<String> = chosen.iter().map(|t| t.triad_id.clone()).collect();
        let slot = rng.random_range(0..=tasks.len());
        tasks.insert(slot, attention_triad.triad_id.clone());

        let session = Session {
            session_id,
            rater_id: rater_id.to_string(),
            tasks,
            attention_triad,
            identical_pair,
        };
        let event = Event::SessionCreated { session };
        self.append(file, &event)?;
        apply(st, event);
        let s = st.sessions.last().expect("just added");
        Ok(self.view(st, s))
    }

    /// Looks up a study triad or a session's attention check.
    pub fn triad(&self, triad_id: &str) -> Option<Triad> {
        if let Some(&i) = self.triad_index.get(triad_id) {
            return Some(self.triads[i].clone());
        }
        let st = &self.inner.lock().expect("study lock").0;
        let sid = triad_id.strip_prefix("attn-")?;
        st.session_index
            .get(sid)
            .map(|&i| st.sessions[i].attention_triad.clone())
    }

    pub fn session(&self, session_id: &str) -> Option<SessionView> {
        let st = &self.inner.lock().expect("study lock").0;
        st.session_index.get(session_id).map(|&i| self.view(st, &st.sessions[i]))
    }

    /// Records a judgment; returns whether an attention check passed
    /// (`None` for ordinary triads).
    pub fn record_judgment(&self, mut j: Judgment) -> Result<Option<bool>, StudyError> {
        let mut guard = self.inner.lock().expect("study lock");
        let (st, file) = &mut *guard;
        let is_regular = self.triad_index.contains_key(&j.triad_id);
        let attention_session = j
            .triad_id
            .strip_prefix("attn-")
            .and_then(|sid| st.session_index.get(sid).copied());
        if !is_regular && attention_session.is_none() {
            return Err(StudyError::UnknownTriad(j.triad_id));
        }
        let key = (j.rater_id.clone(), j.triad_id.clone());
        let Some(session_id) = st.assigned.get(&key).cloned() else {
            return Err(StudyError::SessionMismatch {
                rater_id: j.rater_id,
                triad_id: j.triad_id,
            });
        };
        if st.judged.contains(&key) {
            return Err(StudyError::DuplicateJudgment {
                rater_id: j.rater_id,
                triad_id: j.triad_id,
            });
        }
        let attention_passed = attention_session.map(|i| st.sessions[i].identical_pair == j.chosen_pair);
        j.is_attention_check = attention_passed.is_some();
        let event = Event::JudgmentRecorded {
            session_id,
            judgment: j,
            attention_passed,
        };
        self.append(file, &event)?;
        apply(st, event);
        Ok(attention_passed)
    }

    /// Ordinary judgments from sessions whose attention check was passed,
    /// in log order.
    pub fn export_judgments(&self) -> Vec<Judgment> {
        let st = &self.inner.lock().expect("study lock").0;
        st.judgments
            .iter()
            .filter(|(sid, j)| !j.is_attention_check && st.attention.get(sid) == Some(&true))
            .map(|(_, j)| j.clone())
            .collect()
    }

    /// Attention outcome per session that has answered its check.
    pub fn attention_results(&self) -> BTreeMap<String, bool> {
        let st = &self.inner.lock().expect("study lock").0;
        st.attention.iter().map(|(k, v)| (k.clone(), *v)).collect()
    }

    pub fn presentations(&self, triad_id: &str) -> usize {
        let st = &self.inner.lock().expect("study lock").0;
        st.presentations.get(triad_id).copied().unwrap_or(0)
    }
}

fn apply(st: &mut State, event: Event) {
    match event {
        Event::SessionCreated { session } => {
            for t in &session.tasks {
                if *t != session.attention_triad.triad_id {
                    *st.presentations.entry(t.clone()).or_default() += 1;
                }
                st.seen.entry(session.rater_id.clone()).or_default().insert(t.clone());
                st.assigned
                    .insert((session.rater_id.clone(), t.clone()), session.session_id.clone());
            }
            st.session_index.insert(session.session_id.clone(), st.sessions.len());
            st.sessions.push(session);
        }
        Event::JudgmentRecorded {
            session_id,
            judgment,
            attention_passed,
        } => {
            st.judged.insert((judgment.rater_id.clone(), judgment.triad_id.clone()));
            *st.completed.entry(session_id.clone()).or_default() += 1;
            if let Some(pass) = attention_passed {
                st.attention.insert(session_id.clone(), pass);
            }
            st.judgments.push((session_id, judgment));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use prosody_core::manifest::Dataset;

    fn triads(n: usize) -> Vec<Triad> {
        (0..n)
            .map(|i| Triad {
                triad_id: format!("t{i:03}"),
                dataset: Dataset::FiCa,
                lexical_form: "yeah".into(),
                clips: [format!("a{i}"), format!("b{i}"), format!("c{i}")],
            })
            .collect()
    }

    fn judge(study: &Study, rater: &str, triad: &str, p: PairChoice) -> Result<Option<bool>, StudyError> {
        study.record_judgment(Judgment {
            triad_id: triad.into(),
            rater_id: rater.into(),
            chosen_pair: p,
            is_attention_check: false,
            timestamp: 0,
        })
    }

    #[test]
    fn assignment_rules() {
        let dir = tempfile::tempdir().unwrap();
        let study = Study::open(triads(60), StudyConfig::default(), dir.path().join("log.jsonl")).unwrap();
        let s1 = study.create_session("r1").unwrap();
        assert_eq!(s1.tasks.len(), 21);
        let distinct: HashSet<&String> = s1.tasks.iter().collect();
        assert_eq!(distinct.len(), 21);
        let s2 = study.create_session("r1").unwrap();
        assert!(s1.tasks.iter().all(|t| !s2.tasks.contains(t)));

        for r in ["r2", "r3", "r4", "r5", "r6", "r7", "r8"] {
            let _ = study.create_session(r);
        }
        assert!(triads(60).iter().all(|t| study.presentations(&t.triad_id) <= 3));
        assert!(matches!(study.create_session("r9"), Err(StudyError::StudyComplete(_))));
    }

    #[test]
    fn attention_check_construction() {
        let dir = tempfile::tempdir().unwrap();
        let study = Study::open(triads(30), StudyConfig::default(), dir.path().join("log.jsonl")).unwrap();
        let s = study.create_session("r").unwrap();
        let attn_id = s.tasks.iter().find(|t| t.starts_with("attn-")).unwrap();
        let t = study.triad(attn_id).unwrap();
        assert!(!t.has_distinct_clips());
        let good = PairChoice::ALL
            .into_iter()
            .find(|p| {
                let (a, b) = t.pair(*p);
                a == b
            })
            .unwrap();
        let bad = PairChoice::ALL.into_iter().find(|p| *p != good).unwrap();
        assert_eq!(judge(&study, "r", attn_id, bad).unwrap(), Some(false));
        assert_eq!(study.attention_results()[&s.session_id], false);
    }

    #[test]
    fn judgment_errors() {
        let dir = tempfile::tempdir().unwrap();
        let study = Study::open(triads(30), StudyConfig::default(), dir.path().join("log.jsonl")).unwrap();
        let s = study.create_session("r").unwrap();
        let t = s.tasks.iter().find(|t| !t.starts_with("attn-")).unwrap();
        assert_eq!(judge(&study, "r", t, PairChoice::AB).unwrap(), None);
        assert!(matches!(judge(&study, "r", t, PairChoice::AB), Err(StudyError::DuplicateJudgment { .. })));
        assert!(matches!(judge(&study, "r", "nope", PairChoice::AB), Err(StudyError::UnknownTriad(_))));
        assert!(matches!(judge(&study, "other", t, PairChoice::AB), Err(StudyError::SessionMismatch { .. })));
        let unassigned = triads(30).into_iter().find(|x| !s.tasks.contains(&x.triad_id)).unwrap();
        assert!(matches!(
            judge(&study, "r", &unassigned.triad_id, PairChoice::AB),
            Err(StudyError::SessionMismatch { .. })
        ));
    }

    #[test]
    fn replay_restores_state() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("log.jsonl");
        let (sid, first) = {
            let study = Study::open(triads(30), StudyConfig::default(), &log).unwrap();
            let s = study.create_session("r").unwrap();
            judge(&study, "r", &s.tasks[0], PairChoice::AC).unwrap();
            (s.session_id, s.tasks[0].clone())
        };
        let study = Study::open(triads(30), StudyConfig::default(), &log).unwrap();
        assert_eq!(study.session(&sid).unwrap().completed, 1);
        assert!(matches!(judge(&study, "r", &first, PairChoice::AB), Err(StudyError::DuplicateJudgment { .. })));
        let lines = std::fs::read_to_string(&log).unwrap().lines().count();
        assert_eq!(lines, 2);
    }
}
