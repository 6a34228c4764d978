//! Chat sessions, candidate ranking and vote bookkeeping, independent of HTTP.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use gca_core::corpus::{detokenize, tokenize, EncodedSequence};
use gca_core::evaluation::{
    jaccard_index, rank_candidates, tally_for, winner_set, Candidate, Criterion, Source, TallySummary, VoteRecord,
    VoteStore, Winner, TIE,
};
use serde::{Deserialize, Serialize};

use crate::bundle::ModelBundle;
use crate::error::{Result, ServiceError};

/// The loaded generators and the model whose discriminator judges them.
/// Read-only once built.
#[derive(Debug)]
pub struct Agent {
    models: BTreeMap<String, ModelBundle>,
    order: Vec<String>,
    judge: String,
    criterion: Criterion,
}

/// One model's answer as shown to clients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateView {
    pub model: String,
    pub text: String,
    /// Geometric mean of the judge's token outputs.
    pub score: f64,
    /// Product of the judge's token outputs.
    pub probability: f64,
}

/// Ranked answers to one context, best first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Answers {
    pub candidates: Vec<CandidateView>,
    pub tie: bool,
    /// The judge's pick: the top model, or TIE.
    pub adversarial_winner: Winner,
    #[serde(skip)]
    tokens: BTreeMap<String, Vec<String>>,
}

impl Agent {
    /// The first model is the judge unless `judge` names another one.
    pub fn new(models: Vec<(String, ModelBundle)>, judge: Option<String>, criterion: Criterion) -> Result<Self> {
        let Some((first_id, first)) = models.first() else {
            return Err(config_error("at least one model is required"));
        };
        let vocab = first.vocab.clone();
        let judge = judge.unwrap_or_else(|| first_id.clone());
        let mut order = Vec::new();
        let mut map = BTreeMap::new();
        for (id, bundle) in models {
            if id.is_empty() || id == TIE {
                return Err(config_error(format!("{id:?} cannot be used as a model id")));
            }
            if bundle.vocab != vocab {
                return Err(config_error(format!("model {id} uses a different vocabulary")));
            }
            order.push(id.clone());
            if map.insert(id.clone(), bundle).is_some() {
                return Err(config_error(format!("model id {id} is used twice")));
            }
        }
        if !map.contains_key(&judge) {
            return Err(config_error(format!("judge {judge} is not a loaded model")));
        }
        Ok(Self {
            models: map,
            order,
            judge,
            criterion,
        })
    }

    /// Model ids in load order.
    pub fn model_ids(&self) -> &[String] {
        &self.order
    }

    pub fn judge(&self) -> &str {
        &self.judge
    }

    pub fn model(&self, id: &str) -> Option<&ModelBundle> {
        self.models.get(id)
    }

    /// Checks a model selection; `None` selects every loaded model.
    pub fn select(&self, requested: Option<Vec<String>>) -> Result<Vec<String>> {
        let Some(ids) = requested else {
            return Ok(self.order.clone());
        };
        if ids.is_empty() {
            return Err(ServiceError::Validation("select at least one model".into()));
        }
        for (i, id) in ids.iter().enumerate() {
            if !self.models.contains_key(id) {
                return Err(ServiceError::Validation(format!("unknown model {id}")));
            }
            if ids[..i].contains(id) {
                return Err(ServiceError::Validation(format!("model {id} selected twice")));
            }
        }
        Ok(ids)
    }

    /// Decodes an answer to `history` with every model in `models` and ranks
    /// the answers with the judge.
    pub fn answer(&self, models: &[String], history: &[Vec<String>]) -> Result<Answers> {
        let judge = &self.models[&self.judge];
        let judge_context = judge.encode_history(history);
        let mut candidates = Vec::with_capacity(models.len());
        let mut tokens = BTreeMap::new();
        for id in models {
            let bundle = self
                .models
                .get(id)
                .ok_or_else(|| ServiceError::Validation(format!("unknown model {id}")))?;
            let decoded = bundle.model.greedy_decode(&bundle.encode_history(history))?;
            let answer = EncodedSequence::from_ids(decoded.answer.tokens(), judge.model.config.seq_len)?;
            tokens.insert(id.clone(), bundle.answer_tokens(&decoded.answer));
            candidates.push(Candidate::scored(&judge.model, id.clone(), &judge_context, answer)?);
        }
        let ranking = rank_candidates(candidates, self.criterion)?;
        let adversarial_winner = ranking.winner();
        Ok(Answers {
            candidates: ranking
                .candidates
                .iter()
                .map(|c| CandidateView {
                    model: c.model.clone(),
                    text: detokenize(&tokens[&c.model]),
                    score: c.score,
                    probability: c.probability,
                })
                .collect(),
            tie: ranking.tie,
            adversarial_winner,
            tokens,
        })
    }
}

fn config_error(message: impl Into<String>) -> ServiceError {
    ServiceError::Core(gca_core::Error::Config(message.into()))
}

#[derive(Clone, Debug)]
struct Line {
    utterance: String,
    utterance_tokens: Vec<String>,
    answers: Answers,
    vote: Option<Winner>,
}

impl Line {
    /// The answer that continues the conversation: the human choice, else the
    /// judge's, else the top-ranked one.
    fn chosen(&self) -> &str {
        match (&self.vote, &self.answers.adversarial_winner) {
            (Some(Winner::Model(m)), _) | (_, Winner::Model(m)) => m,
            _ => &self.answers.candidates[0].model,
        }
    }
}

#[derive(Clone, Debug)]
struct ChatSession {
    id: String,
    models: Vec<String>,
    created_at: u64,
    lines: Vec<Line>,
}

impl ChatSession {
    fn history(&self) -> Vec<Vec<String>> {
        let mut out = Vec::with_capacity(2 * self.lines.len());
        for line in &self.lines {
            out.push(line.utterance_tokens.clone());
            out.push(line.answers.tokens[line.chosen()].clone());
        }
        out
    }

    fn view(&self) -> SessionView {
        SessionView {
            session_id: self.id.clone(),
            models: self.models.clone(),
            created_at: self.created_at,
            lines: self
                .lines
                .iter()
                .enumerate()
                .map(|(i, l)| line_view(&self.id, i, l))
                .collect(),
        }
    }
}

fn line_id(session: &str, index: usize) -> String {
    format!("{session}:{index}")
}

fn line_view(session: &str, index: usize, line: &Line) -> LineView {
    LineView {
        line_id: line_id(session, index),
        utterance: line.utterance.clone(),
        candidates: line.answers.candidates.clone(),
        tie: line.answers.tie,
        adversarial_winner: line.answers.adversarial_winner.clone(),
        vote: line.vote.clone(),
        chosen: line.chosen().to_owned(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineView {
    pub line_id: String,
    pub utterance: String,
    /// Best first.
    pub candidates: Vec<CandidateView>,
    pub tie: bool,
    pub adversarial_winner: Winner,
    /// The human vote, if any.
    pub vote: Option<Winner>,
    /// Model whose answer the conversation continues with.
    pub chosen: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub models: Vec<String>,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    pub lines: Vec<LineView>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatReply {
    pub session_id: String,
    #[serde(flatten)]
    pub line: LineView,
}

/// Human tally, adversarial tally and their agreement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    #[serde(flatten)]
    pub human: TallySummary,
    pub adversarial: TallySummary,
    /// Jaccard index of the human and adversarial winner sets.
    pub jaccard: f64,
}

/// Builds the report from the current (latest per line and source) votes.
pub fn report(votes: &[VoteRecord], models: &[String]) -> Report {
    let by = |source| votes.iter().filter(move |v: &&VoteRecord| v.source == source);
    let ids = || models.iter().map(String::as_str);
    Report {
        human: tally_for(by(Source::Human), ids()),
        adversarial: tally_for(by(Source::Adversarial), ids()),
        jaccard: jaccard_index(&winner_set(votes, Source::Human), &winner_set(votes, Source::Adversarial)),
    }
}

/// Shared service state: the agent, in-memory sessions and the vote store.
///
/// Lock order is sessions, then votes.
pub struct AppState {
    pub agent: Agent,
    sessions: Mutex<HashMap<String, ChatSession>>,
    votes: Mutex<VoteStore>,
}

impl AppState {
    pub fn new(agent: Agent, votes: VoteStore) -> Self {
        Self {
            agent,
            sessions: Mutex::new(HashMap::new()),
            votes: Mutex::new(votes),
        }
    }

    pub fn create_session(&self, models: Option<Vec<String>>) -> Result<SessionView> {
        let models = self.agent.select(models)?;
        let created_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let session = ChatSession {
            id: uuid::Uuid::new_v4().simple().to_string(),
            models,
            created_at,
            lines: Vec::new(),
        };
        let view = session.view();
        self.sessions.lock().unwrap().insert(session.id.clone(), session);
        Ok(view)
    }

    pub fn session(&self, id: &str) -> Result<SessionView> {
        let sessions = self.sessions.lock().unwrap();
        sessions
            .get(id)
            .map(ChatSession::view)
            .ok_or_else(|| ServiceError::NotFound(format!("no session {id}")))
    }

    /// Appends `utterance` to the session (a new one when `session_id` is
    /// empty), answers it with every active model and records the judge's vote.
    pub fn chat(&self, session_id: &str, utterance: &str) -> Result<ChatReply> {
        let utterance_tokens = tokenize(utterance);
        if utterance_tokens.is_empty() {
            return Err(ServiceError::Validation("utterance is empty".into()));
        }
        let session_id = if session_id.is_empty() {
            self.create_session(None)?.session_id
        } else {
            session_id.to_owned()
        };
        let (models, mut history) = {
            let sessions = self.sessions.lock().unwrap();
            let s = sessions
                .get(&session_id)
                .ok_or_else(|| ServiceError::NotFound(format!("no session {session_id}")))?;
            (s.models.clone(), s.history())
        };
        history.push(utterance_tokens.clone());
        let answers = self.agent.answer(&models, &history)?;

        let mut sessions = self.sessions.lock().unwrap();
        let session = sessions
            .get_mut(&session_id)
            .ok_or_else(|| ServiceError::NotFound(format!("no session {session_id}")))?;
        let index = session.lines.len();
        if answers.candidates.len() > 1 {
            self.votes.lock().unwrap().append(&VoteRecord {
                line_id: line_id(&session_id, index),
                winner: answers.adversarial_winner.clone(),
                source: Source::Adversarial,
            })?;
        }
        session.lines.push(Line {
            utterance: utterance.to_owned(),
            utterance_tokens,
            answers,
            vote: None,
        });
        Ok(ChatReply {
            line: line_view(&session_id, index, &session.lines[index]),
            session_id,
        })
    }

    /// Persists a human vote; a later vote on the same line replaces it.
    pub fn vote(&self, line: &str, winner: Winner) -> Result<VoteRecord> {
        let unknown = || ServiceError::Validation(format!("unknown line id {line}"));
        let (session_id, index) = line.rsplit_once(':').ok_or_else(unknown)?;
        let index: usize = index.parse().map_err(|_| unknown())?;
        let mut sessions = self.sessions.lock().unwrap();
        let entry = sessions
            .get_mut(session_id)
            .and_then(|s| s.lines.get_mut(index))
            .ok_or_else(unknown)?;
        if let Winner::Model(m) = &winner {
            if !entry.answers.candidates.iter().any(|c| &c.model == m) {
                return Err(ServiceError::Validation(format!("model {m} did not answer line {line}")));
            }
        }
        let record = VoteRecord {
            line_id: line.to_owned(),
            winner,
            source: Source::Human,
        };
        self.votes.lock().unwrap().append(&record)?;
        entry.vote = Some(record.winner.clone());
        Ok(record)
    }

    pub fn report(&self) -> Result<Report> {
        let votes = self.votes.lock().unwrap().current()?;
        Ok(report(&votes, self.agent.model_ids()))
    }
}
