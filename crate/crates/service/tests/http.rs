use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use gca_core::corpus::{tokenize, ModelConfig, TOY_CORPUS};
use gca_core::evaluation::{Source, VoteRecord, VoteStore, Winner};
use gca_core::model::Gca;
use gca_service::bundle::prepare_corpus;
use gca_service::{api, Agent, AppState, ChatReply, ModelBundle, Report, SessionView};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn bundles() -> Vec<(String, ModelBundle)> {
    let (vocab, config, _) = prepare_corpus(TOY_CORPUS, ModelConfig::desk_scale()).unwrap();
    [("seq2seq", 1), ("gca", 2)]
        .into_iter()
        .map(|(id, seed)| {
            let bundle = ModelBundle::new(Gca::new(config, seed).unwrap(), vocab.clone()).unwrap();
            (id.to_owned(), bundle)
        })
        .collect()
}

fn state(votes: &std::path::Path) -> Arc<AppState> {
    let agent = Agent::new(bundles(), Some("gca".into()), Default::default()).unwrap();
    Arc::new(AppState::new(agent, VoteStore::open(votes)))
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

async fn raw(app: &Router, uri: &str, body: &str) -> StatusCode {
    let req = Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_owned()))
        .unwrap();
    app.clone().oneshot(req).await.unwrap().status()
}

async fn chat(app: &Router, session: &str, utterance: &str) -> ChatReply {
    let (status, v) = call(app, Method::POST, "/chat", Some(json!({"session_id": session, "utterance": utterance}))).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    serde_json::from_value(v).unwrap()
}

#[tokio::test]
async fn sessions_are_created_and_listed() {
    let dir = tempfile::tempdir().unwrap();
    let app = api::router(state(&dir.path().join("votes.jsonl")));
    let (status, v) = call(&app, Method::POST, "/session", None).await;
    assert_eq!(status, StatusCode::CREATED);
    let view: SessionView = serde_json::from_value(v).unwrap();
    assert_eq!(view.models, ["seq2seq", "gca"]);
    assert!(view.lines.is_empty());

    let (status, v) = call(&app, Method::GET, &format!("/dialogues/{}", view.session_id), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(serde_json::from_value::<SessionView>(v).unwrap(), view);

    let (status, v) = call(&app, Method::POST, "/session", Some(json!({"models": ["gca"]}))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(v["models"], json!(["gca"]));
    let (status, _) = call(&app, Method::POST, "/session", Some(json!({"models": ["nope"]}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, v) = call(&app, Method::GET, "/dialogues/missing", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(v["error"].as_str().unwrap().contains("missing"));
}

#[tokio::test]
async fn chat_returns_two_ranked_candidates() {
    let dir = tempfile::tempdir().unwrap();
    let app = api::router(state(&dir.path().join("votes.jsonl")));
    let reply = chat(&app, "", "hello , how are you today ?").await;
    assert!(!reply.session_id.is_empty());
    assert_eq!(reply.line.candidates.len(), 2);
    let c = &reply.line.candidates;
    assert!(c[0].score >= c[1].score);
    assert_eq!(reply.line.tie, (c[0].score - c[1].score).abs() < 0.05 * c[0].score.min(c[1].score));
    let expected = if reply.line.tie { Winner::Tie } else { Winner::Model(c[0].model.clone()) };
    assert_eq!(reply.line.adversarial_winner, expected);
    assert_eq!(reply.line.vote, None);

    let (_, v) = call(&app, Method::GET, &format!("/dialogues/{}", reply.session_id), None).await;
    let view: SessionView = serde_json::from_value(v).unwrap();
    assert_eq!(view.lines, vec![reply.line.clone()]);

    // the judge's pick is recorded as the adversarial vote
    let stored = VoteStore::open(dir.path().join("votes.jsonl")).current().unwrap();
    assert_eq!(
        stored,
        vec![VoteRecord {
            line_id: reply.line.line_id.clone(),
            winner: expected,
            source: Source::Adversarial
        }]
    );
}

#[tokio::test]
async fn decoding_is_deterministic_across_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let app = api::router(state(&dir.path().join("votes.jsonl")));
    let script = ["hi there !", "what is your name ?", "see you tomorrow ."];
    let mut runs = Vec::new();
    for _ in 0..2 {
        let mut session = String::new();
        let mut lines = Vec::new();
        for u in script {
            let r = chat(&app, &session, u).await;
            session = r.session_id.clone();
            lines.push((r.line.candidates, r.line.tie));
        }
        runs.push(lines);
    }
    assert_eq!(runs[0], runs[1]);
}

#[tokio::test]
async fn requests_are_validated() {
    let dir = tempfile::tempdir().unwrap();
    let app = api::router(state(&dir.path().join("votes.jsonl")));
    let (status, _) = call(&app, Method::POST, "/chat", Some(json!({"session_id": "nope", "utterance": "hi"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, Method::POST, "/chat", Some(json!({"utterance": "   "}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&app, Method::POST, "/chat", Some(json!({"utterance": "hi", "mood": "happy"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&app, Method::POST, "/vote", Some(json!({"line_id": "x:0", "winner": "gca"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&app, Method::POST, "/vote", Some(json!({"line_id": "x:0"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(raw(&app, "/chat", "{not json").await, StatusCode::BAD_REQUEST);
    assert_eq!(raw(&app, "/session", "{\"extra\": 1}").await, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn votes_persist_and_revotes_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("votes.jsonl");
    let app = api::router(state(&path));
    let reply = chat(&app, "", "are you hungry ?").await;
    let line = reply.line.line_id.clone();

    let (status, v) = call(&app, Method::POST, "/vote", Some(json!({"line_id": line, "winner": "seq2seq"}))).await;
    assert_eq!(status, StatusCode::OK);
    let record: VoteRecord = serde_json::from_value(v).unwrap();
    assert_eq!(
        record,
        VoteRecord {
            line_id: line.clone(),
            winner: Winner::Model("seq2seq".into()),
            source: Source::Human
        }
    );
    let human = |store: Vec<VoteRecord>| store.into_iter().filter(|r| r.source == Source::Human).collect::<Vec<_>>();
    assert_eq!(human(VoteStore::open(&path).current().unwrap()), vec![record]);

    let (_, v) = call(&app, Method::POST, "/vote", Some(json!({"line_id": line, "winner": "gca"}))).await;
    let latest: VoteRecord = serde_json::from_value(v).unwrap();
    assert_eq!(human(VoteStore::open(&path).current().unwrap()), vec![latest]);
    let (_, v) = call(&app, Method::GET, &format!("/dialogues/{}", reply.session_id), None).await;
    assert_eq!(v["lines"][0]["vote"], json!("gca"));
    assert_eq!(v["lines"][0]["chosen"], json!("gca"));

    let (status, _) = call(&app, Method::POST, "/vote", Some(json!({"line_id": line, "winner": "other"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let (_, v) = call(&app, Method::POST, "/vote", Some(json!({"line_id": line, "winner": "TIE"}))).await;
    assert_eq!(v["winner"], json!("TIE"));
    let (_, v) = call(&app, Method::GET, "/report", None).await;
    let report: Report = serde_json::from_value(v).unwrap();
    assert_eq!(report.human.ties, 1);
    assert_eq!(report.human.contested, 0);
    assert_eq!(report.human.counts.values().sum::<usize>(), 0);
}

#[tokio::test]
async fn the_conversation_continues_with_the_chosen_answer() {
    let dir = tempfile::tempdir().unwrap();
    let st = state(&dir.path().join("votes.jsonl"));
    let app = api::router(st.clone());
    let first = chat(&app, "", "what is your name ?").await;
    let pick = first
        .line
        .candidates
        .iter()
        .find(|c| c.model != first.line.chosen)
        .unwrap()
        .clone();
    call(&app, Method::POST, "/vote", Some(json!({"line_id": first.line.line_id, "winner": pick.model}))).await;
    let second = chat(&app, &first.session_id, "nice to meet you .").await;

    let models = ["seq2seq".to_owned(), "gca".to_owned()];
    let history = vec![tokenize("what is your name ?"), tokenize(&pick.text), tokenize("nice to meet you .")];
    let expected = st.agent.answer(&models, &history).unwrap();
    assert_eq!(second.line.candidates, expected.candidates);
}

#[test]
fn only_the_last_utterances_reach_the_model() {
    let agent = Agent::new(bundles(), None, Default::default()).unwrap();
    let models = ["seq2seq".to_owned(), "gca".to_owned()];
    let long: Vec<Vec<String>> = ["hi there !", "hello .", "are you hungry ?", "no , i just ate pizza ."]
        .iter()
        .map(|u| tokenize(u))
        .collect();
    let n = agent.model("gca").unwrap().model.config.context_utterances;
    assert_eq!(
        agent.answer(&models, &long).unwrap(),
        agent.answer(&models, &long[long.len() - n..]).unwrap()
    );
}

#[tokio::test]
async fn report_arithmetic_and_restart() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("votes.jsonl");
    let app = api::router(state(&path));
    let (status, v) = call(&app, Method::GET, "/report", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["counts"], json!({"gca": 0, "seq2seq": 0}));
    assert_eq!(v["percentages"], Value::Null);
    assert_eq!(v["jaccard"], json!(1.0));

    let store = VoteStore::open(&path);
    for i in 0..87 {
        let winner = Winner::Model(if i < 26 { "seq2seq" } else { "gca" }.into());
        for source in [Source::Human, Source::Adversarial] {
            store
                .append(&VoteRecord {
                    line_id: format!("synthetic:{i}"),
                    winner: winner.clone(),
                    source,
                })
                .unwrap();
        }
    }
    let (_, v) = call(&app, Method::GET, "/report", None).await;
    let report: Report = serde_json::from_value(v).unwrap();
    assert_eq!(report.human.counts["seq2seq"], 26);
    assert_eq!(report.human.counts["gca"], 61);
    let p = report.human.percentages.clone().unwrap();
    assert!((p["seq2seq"] - 29.88).abs() <= 0.01 + 1e-9);
    assert!((p["gca"] - 70.11).abs() <= 0.01 + 1e-9);
    assert_eq!(report.jaccard, 1.0);

    let restarted = api::router(state(&path));
    let (_, v) = call(&restarted, Method::GET, "/report", None).await;
    assert_eq!(serde_json::from_value::<Report>(v).unwrap(), report);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_chats_are_all_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("votes.jsonl");
    let app = api::router(state(&path));
    let replies = futures_join(&app, 8).await;
    let mut ids: Vec<String> = replies.iter().map(|r| r.line.line_id.clone()).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 8);
    assert_eq!(VoteStore::open(&path).history().unwrap().len(), 8);
}

async fn futures_join(app: &Router, n: usize) -> Vec<ChatReply> {
    let tasks: Vec<_> = (0..n)
        .map(|i| {
            let app = app.clone();
            tokio::spawn(async move { chat(&app, "", &format!("hello number {i}")).await })
        })
        .collect();
    let mut out = Vec::new();
    for t in tasks {
        out.push(t.await.unwrap());
    }
    out
}
