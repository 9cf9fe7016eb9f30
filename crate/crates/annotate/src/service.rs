use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use stance_core::corpus::RecordSet;
use stance_core::gateway::{context, parse::parse_text, render_prompt, Gateway, TemplateId};
use stance_core::irr::{cohen_kappa, sample_validation_set, IrrError, KappaResult, LabelVector};
use stance_core::{Confidence, StanceLabel};

use crate::error::ServiceError;

const SESSIONS: &str = "sessions.jsonl";
const LABELS: &str = "labels.jsonl";

/// Where a justification option came from. Stored server-side only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// The self-reflected classification's reason.
    Revised,
    /// The pre-reflection reason, or a rephrasing when the two match.
    Alternative,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Revised => "revised",
            Provenance::Alternative => "alternative",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionItem {
    pub item_id: String,
    /// Option texts in the order shown to the rater.
    pub options: [String; 2],
    pub provenance: [Provenance; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSession {
    pub session_id: String,
    pub rater_id: String,
    pub n: usize,
    pub seed: u64,
    pub items: Vec<SessionItem>,
    pub created_at: String,
}

impl AnnotationSession {
    pub fn item_ids(&self) -> Vec<&str> {
        self.items.iter().map(|i| i.item_id.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanLabel {
    pub session_id: String,
    pub item_id: String,
    pub label: StanceLabel,
    pub confidence: Confidence,
    pub justification_choice: u8,
    pub submitted_at: String,
}

/// What the client sees for the current item. Carries no machine output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationItem {
    pub item_id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub label_options: Vec<String>,
    pub confidence_options: Vec<String>,
    pub justification_options: [String; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NextItem {
    Item {
        session_id: String,
        position: usize,
        total: usize,
        item: AnnotationItem,
    },
    Done {
        session_id: String,
        answered: usize,
        total: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSubmission {
    pub item_id: String,
    pub label: String,
    pub confidence: String,
    pub justification_choice: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub session_id: String,
    pub item_id: String,
    pub cursor: usize,
    pub total: usize,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reference {
    MachineOriginal,
    MachineRevised,
    OtherRater(String),
}

impl std::str::FromStr for Reference {
    type Err = ServiceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "machine_original" => Ok(Reference::MachineOriginal),
            "machine_revised" => Ok(Reference::MachineRevised),
            _ => match s.strip_prefix("other_rater:") {
                Some(id) if !id.is_empty() => Ok(Reference::OtherRater(id.to_string())),
                _ => Err(ServiceError::Validation(format!(
                    "reference '{s}' must be machine_original, machine_revised or other_rater:<session_id>"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionIrr {
    pub session_id: String,
    pub reference: String,
    pub n_items: usize,
    pub stance: KappaResult,
    /// Agreement on which justification source was picked; absent when it
    /// cannot be computed for the answered items.
    pub justification: Option<KappaResult>,
}

#[derive(Debug, Default)]
struct State {
    sessions: BTreeMap<String, AnnotationSession>,
    /// Labels per session in submission order.
    labels: BTreeMap<String, Vec<HumanLabel>>,
}

impl State {
    fn cursor(&self, session_id: &str) -> usize {
        self.labels.get(session_id).map_or(0, Vec::len)
    }

    /// Checks `label` as the next submission for its session.
    fn check(&self, session: &AnnotationSession, item_id: &str) -> Result<(), ServiceError> {
        let done = self.labels.get(&session.session_id).map(Vec::as_slice).unwrap_or(&[]);
        if done.iter().any(|l| l.item_id == item_id) {
            return Err(ServiceError::Duplicate(format!("item '{item_id}' already answered")));
        }
        match session.items.get(done.len()) {
            Some(cur) if cur.item_id == item_id => Ok(()),
            Some(cur) => Err(ServiceError::Order(format!(
                "item '{item_id}' is not the current item '{}'",
                cur.item_id
            ))),
            None => Err(ServiceError::Order(format!(
                "session is complete; '{item_id}' not accepted"
            ))),
        }
    }
}

/// Session store over a read-only snapshot of classified records.
pub struct AnnotationService {
    dir: PathBuf,
    records: RecordSet,
    pool: Vec<String>,
    gateway: Gateway,
    state: RwLock<State>,
    /// Serializes appends so the JSONL files keep submission order.
    writer: Mutex<()>,
}

fn session_id(rater_id: &str, n: usize, seed: u64) -> String {
    stance_core::sha256_hex(format!("{rater_id}\u{1f}{n}\u{1f}{seed}"))[..16].to_string()
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, ServiceError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| ServiceError::Internal(format!("{} line {}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

fn append_jsonl<T: Serialize>(path: &Path, value: &T) -> Result<(), ServiceError> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let mut line = serde_json::to_string(value).map_err(|e| ServiceError::Internal(e.to_string()))?;
    line.push('\n');
    f.write_all(line.as_bytes())?;
    f.sync_data()?;
    Ok(())
}

impl AnnotationService {
    /// Opens the service over `records`, replaying any sessions and labels
    /// already in `dir`.
    pub fn open(dir: impl Into<PathBuf>, records: RecordSet, gateway: Gateway) -> Result<Self, ServiceError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let pool = records
            .active()
            .filter(|r| r.stance_revised.is_some() && r.stance_original.is_some())
            .map(|r| r.record_id.clone())
            .collect();
        let mut state = State::default();
        for s in read_jsonl::<AnnotationSession>(&dir.join(SESSIONS))? {
            state.sessions.insert(s.session_id.clone(), s);
        }
        for label in read_jsonl::<HumanLabel>(&dir.join(LABELS))? {
            let session = state
                .sessions
                .get(&label.session_id)
                .ok_or_else(|| ServiceError::Internal(format!("label for unknown session '{}'", label.session_id)))?;
            state.check(session, &label.item_id)?;
            state.labels.entry(label.session_id.clone()).or_default().push(label);
        }
        Ok(AnnotationService {
            dir,
            records,
            pool,
            gateway,
            state: RwLock::new(state),
            writer: Mutex::new(()),
        })
    }

    /// Number of classified records available for sampling.
    pub fn pool_size(&self) -> usize {
        self.pool.len()
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, State> {
        self.state.read().unwrap_or_else(|e| e.into_inner())
    }

    fn options_for(&self, session_id: &str, item_id: &str) -> Result<SessionItem, ServiceError> {
        let record = self
            .records
            .get(item_id)
            .ok_or_else(|| ServiceError::Internal(format!("record '{item_id}' vanished")))?;
        let revised = record
            .stance_revised
            .as_ref()
            .map(|s| s.reason.clone())
            .unwrap_or_default();
        let original = record
            .stance_original
            .as_ref()
            .map(|s| s.reason.clone())
            .unwrap_or_default();
        let alternative = if original.trim() != revised.trim() && !original.trim().is_empty() {
            original
        } else {
            let prompt = render_prompt(TemplateId::Paraphrase, &context([("text", revised.as_str())]))
                .map_err(|e| ServiceError::Internal(e.to_string()))?;
            self.gateway
                .ask(&prompt, "", parse_text)
                .map_err(|e| ServiceError::Internal(format!("rephrasing for '{item_id}': {e}")))?
        };
        let swap = u8::from_str_radix(
            &stance_core::sha256_hex(format!("{session_id}\u{1f}{item_id}"))[..2],
            16,
        )
        .expect("hex digest")
            % 2
            == 1;
        Ok(if swap {
            SessionItem {
                item_id: item_id.to_string(),
                options: [alternative, revised],
                provenance: [Provenance::Alternative, Provenance::Revised],
            }
        } else {
            SessionItem {
                item_id: item_id.to_string(),
                options: [revised, alternative],
                provenance: [Provenance::Revised, Provenance::Alternative],
            }
        })
    }

    /// Creates the session for `(rater_id, n, seed)` or returns the existing
    /// one. Equal `(n, seed)` gives equal items for every rater.
    pub fn create_session(&self, rater_id: &str, n: usize, seed: u64) -> Result<AnnotationSession, ServiceError> {
        let id = session_id(rater_id, n, seed);
        if let Some(s) = self.read().sessions.get(&id) {
            return Ok(s.clone());
        }
        let ids = sample_validation_set(&self.pool, n, seed).map_err(|e| ServiceError::Sample(e.to_string()))?;
        let items = ids
            .iter()
            .map(|item| self.options_for(&id, item))
            .collect::<Result<Vec<_>, _>>()?;
        let session = AnnotationSession {
            session_id: id.clone(),
            rater_id: rater_id.to_string(),
            n,
            seed,
            items,
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        };
        let _w = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let mut state = self.state.write().unwrap_or_else(|e| e.into_inner());
        if let Some(s) = state.sessions.get(&id) {
            return Ok(s.clone());
        }
        append_jsonl(&self.dir.join(SESSIONS), &session)?;
        state.sessions.insert(id, session.clone());
        Ok(session)
    }

    pub fn session(&self, session_id: &str) -> Result<AnnotationSession, ServiceError> {
        self.read()
            .sessions
            .get(session_id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("session '{session_id}'")))
    }

    pub fn labels(&self, session_id: &str) -> Vec<HumanLabel> {
        self.read().labels.get(session_id).cloned().unwrap_or_default()
    }

    /// The item at the cursor. Does not advance.
    pub fn next_item(&self, session_id: &str) -> Result<NextItem, ServiceError> {
        let state = self.read();
        let session = state
            .sessions
            .get(session_id)
            .ok_or_else(|| ServiceError::NotFound(format!("session '{session_id}'")))?;
        let cursor = state.cursor(session_id);
        let total = session.items.len();
        let Some(item) = session.items.get(cursor) else {
            return Ok(NextItem::Done {
                session_id: session_id.to_string(),
                answered: cursor,
                total,
            });
        };
        let record = self
            .records
            .get(&item.item_id)
            .ok_or_else(|| ServiceError::Internal(format!("record '{}' vanished", item.item_id)))?;
        Ok(NextItem::Item {
            session_id: session_id.to_string(),
            position: cursor,
            total,
            item: AnnotationItem {
                item_id: item.item_id.clone(),
                title: record.title.clone().unwrap_or_default(),
                abstract_text: record.abstract_text.clone().unwrap_or_default(),
                label_options: StanceLabel::ALL.iter().map(|l| l.as_str().to_string()).collect(),
                confidence_options: Confidence::ALL.iter().map(|c| c.as_str().to_string()).collect(),
                justification_options: item.options.clone(),
            },
        })
    }

    pub fn submit_label(&self, session_id: &str, sub: &LabelSubmission) -> Result<Ack, ServiceError> {
        let label = StanceLabel::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == sub.label)
            .ok_or_else(|| ServiceError::Validation(format!("label '{}' is not a stance label", sub.label)))?;
        let confidence = Confidence::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == sub.confidence)
            .ok_or_else(|| {
                ServiceError::Validation(format!("confidence '{}' is not High, Medium or Low", sub.confidence))
            })?;
        if sub.justification_choice > 1 {
            return Err(ServiceError::Validation(format!(
                "justification_choice {} must be 0 or 1",
                sub.justification_choice
            )));
        }
        let _w = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let mut state = self.state.write().unwrap_or_else(|e| e.into_inner());
        let session = state
            .sessions
            .get(session_id)
            .ok_or_else(|| ServiceError::NotFound(format!("session '{session_id}'")))?;
        state.check(session, &sub.item_id)?;
        let total = session.items.len();
        let human = HumanLabel {
            session_id: session_id.to_string(),
            item_id: sub.item_id.clone(),
            label,
            confidence,
            justification_choice: sub.justification_choice,
            submitted_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        };
        append_jsonl(&self.dir.join(LABELS), &human)?;
        let done = state.labels.entry(session_id.to_string()).or_default();
        done.push(human);
        let cursor = done.len();
        Ok(Ack {
            session_id: session_id.to_string(),
            item_id: sub.item_id.clone(),
            cursor,
            total,
            done: cursor == total,
        })
    }

    /// Stance and justification-source kappa of a session against `reference`.
    pub fn session_irr(&self, session_id: &str, reference: &Reference) -> Result<SessionIrr, ServiceError> {
        let state = self.read();
        let session = state
            .sessions
            .get(session_id)
            .ok_or_else(|| ServiceError::NotFound(format!("session '{session_id}'")))?;
        let mine = state.labels.get(session_id).map(Vec::as_slice).unwrap_or(&[]);
        let chosen = |s: &AnnotationSession, l: &HumanLabel| -> Provenance {
            s.items
                .iter()
                .find(|i| i.item_id == l.item_id)
                .map(|i| i.provenance[usize::from(l.justification_choice)])
                .expect("label belongs to its session")
        };

        let (human, machine, human_j, other_j, name) = match reference {
            Reference::MachineOriginal | Reference::MachineRevised => {
                let revised = *reference == Reference::MachineRevised;
                let mut h = Vec::new();
                let mut m = Vec::new();
                let mut hj = Vec::new();
                let mut mj = Vec::new();
                for l in mine {
                    let rec = self.records.get(&l.item_id).expect("sampled from the snapshot");
                    let res = if revised {
                        &rec.stance_revised
                    } else {
                        &rec.stance_original
                    };
                    let Some(res) = res else { continue };
                    h.push((l.item_id.clone(), l.label.as_str().to_string()));
                    m.push((l.item_id.clone(), res.label.as_str().to_string()));
                    hj.push((l.item_id.clone(), chosen(session, l).as_str().to_string()));
                    // the model's own pick is always its revised reason
                    mj.push((l.item_id.clone(), Provenance::Revised.as_str().to_string()));
                }
                let name = if revised { "machine_revised" } else { "machine_original" };
                (h, m, hj, mj, name.to_string())
            }
            Reference::OtherRater(other_id) => {
                let other = state
                    .sessions
                    .get(other_id)
                    .ok_or_else(|| ServiceError::NotFound(format!("session '{other_id}'")))?;
                let theirs: BTreeMap<&str, &HumanLabel> = state
                    .labels
                    .get(other_id)
                    .map(|v| v.iter().map(|l| (l.item_id.as_str(), l)).collect())
                    .unwrap_or_default();
                let mut h = Vec::new();
                let mut o = Vec::new();
                let mut hj = Vec::new();
                let mut oj = Vec::new();
                for l in mine {
                    let Some(t) = theirs.get(l.item_id.as_str()) else {
                        continue;
                    };
                    h.push((l.item_id.clone(), l.label.as_str().to_string()));
                    o.push((l.item_id.clone(), t.label.as_str().to_string()));
                    hj.push((l.item_id.clone(), chosen(session, l).as_str().to_string()));
                    oj.push((l.item_id.clone(), chosen(other, t).as_str().to_string()));
                }
                (h, o, hj, oj, format!("other_rater:{other_id}"))
            }
        };
        let n_items = human.len();
        let irr = |e: IrrError| match e {
            IrrError::InsufficientData(m) => ServiceError::InsufficientData(m),
            other => ServiceError::Internal(other.to_string()),
        };
        let a = LabelVector::new(session.rater_id.clone(), human).map_err(irr)?;
        let b = LabelVector::new(name.clone(), machine).map_err(irr)?;
        let stance = cohen_kappa(&a, &b).map_err(irr)?;
        let justification = LabelVector::new("a", human_j)
            .and_then(|x| Ok((x, LabelVector::new("b", other_j)?)))
            .and_then(|(x, y)| cohen_kappa(&x, &y))
            .ok();
        Ok(SessionIrr {
            session_id: session_id.to_string(),
            reference: name,
            n_items,
            stance,
            justification,
        })
    }

    /// Ids of every session owned by `rater_id`.
    pub fn sessions_of(&self, rater_id: &str) -> HashSet<String> {
        self.read()
            .sessions
            .values()
            .filter(|s| s.rater_id == rater_id)
            .map(|s| s.session_id.clone())
            .collect()
    }
}
