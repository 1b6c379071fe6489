mod common;

use std::collections::HashMap;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::{Arc, Mutex};

use chrono::{TimeZone, Utc};
use common::{fixture, recipe, strings};
use proptest::prelude::*;
use souschef_core::corpus::load_corpus;
use souschef_core::gateway::{
    complete, parse_revision, read_revisions, render_continuation, revise_batch, revise_recipe, write_revisions,
    Backoff, BackendError, CompletionBackend, CompletionRequest, GatewayError, HttpReply, HttpTransport,
    IdentityMock, ParseError, RemoteBackend, RequestDefaults, ResultStore, ScriptedMock,
};
use souschef_core::par::Exec;
use souschef_core::prompt::build_revision_prompt;

fn quick() -> RequestDefaults {
    RequestDefaults {
        backoff: Backoff::none(),
        ..RequestDefaults::default()
    }
}

/// Fails the first `failures` calls, then answers with `text`.
struct FlakyTransport {
    failures: u32,
    status: Option<u16>,
    calls: Arc<AtomicU32>,
    bodies: Arc<Mutex<Vec<serde_json::Value>>>,
}

impl HttpTransport for FlakyTransport {
    fn post_json(&self, url: &str, bearer: &str, body: &serde_json::Value) -> Result<HttpReply, String> {
        assert_eq!(url, "http://llm.test/v1/completions");
        assert_eq!(bearer, "secret");
        self.bodies.lock().unwrap().push(body.clone());
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        if n < self.failures {
            return match self.status {
                Some(status) => Ok(HttpReply {
                    status,
                    body: "busy".into(),
                }),
                None => Err("connection reset".into()),
            };
        }
        Ok(HttpReply {
            status: 200,
            body: serde_json::json!({"choices": [{"text": "Boil.\n2. Serve."}]}).to_string(),
        })
    }
}

fn remote(failures: u32, status: Option<u16>) -> (RemoteBackend, Arc<AtomicU32>, Arc<Mutex<Vec<serde_json::Value>>>) {
    let calls = Arc::new(AtomicU32::new(0));
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let transport = FlakyTransport {
        failures,
        status,
        calls: calls.clone(),
        bodies: bodies.clone(),
    };
    let backend = RemoteBackend::with_transport("http://llm.test/v1/", "test-model", "secret", Box::new(transport)).unwrap();
    (backend, calls, bodies)
}

fn request(defaults: &RequestDefaults) -> CompletionRequest {
    defaults.request(build_revision_prompt(&recipe("r", "paella", 2)).unwrap())
}

#[test]
fn two_transient_failures_then_success() {
    let (backend, calls, bodies) = remote(2, None);
    let defaults = quick();
    let text = complete(&request(&defaults), &backend, &defaults.backoff).unwrap();
    assert_eq!(text, "Boil.\n2. Serve.");
    assert_eq!(calls.load(Ordering::SeqCst), 3);
    let body = &bodies.lock().unwrap()[0];
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["max_tokens"], 1024);
    assert_eq!(body["temperature"], 0.7);
    assert_eq!(body["stop"], serde_json::json!(["---"]));
    assert!(body["prompt"].as_str().unwrap().ends_with("Revised Recipe\n1. "));
}

#[test]
fn exhausted_budget_is_transport_error() {
    let (backend, calls, _) = remote(5, Some(503));
    let defaults = quick();
    let err = complete(&request(&defaults), &backend, &defaults.backoff).unwrap_err();
    assert!(matches!(err, GatewayError::Transport { attempts: 3, .. }), "{err}");
    assert_eq!(calls.load(Ordering::SeqCst), 3);
}

#[test]
fn persistent_rate_limit_is_throttle_error() {
    let (backend, _, _) = remote(5, Some(429));
    let defaults = quick();
    let err = complete(&request(&defaults), &backend, &defaults.backoff).unwrap_err();
    assert!(matches!(err, GatewayError::Throttled { attempts: 3, .. }), "{err}");
}

#[test]
fn client_error_is_not_retried() {
    let (backend, calls, _) = remote(5, Some(401));
    let defaults = quick();
    let err = complete(&request(&defaults), &backend, &defaults.backoff).unwrap_err();
    assert!(matches!(err, GatewayError::Backend(BackendError::Fatal(_))), "{err}");
    assert_eq!(calls.load(Ordering::SeqCst), 1);
}

#[test]
fn missing_credential_is_config_error() {
    // Only this test touches the variable.
    std::env::remove_var("LLM_API_KEY");
    let err = RemoteBackend::from_env("http://llm.test/v1", "m").err().unwrap();
    assert!(matches!(err, GatewayError::Config(_)), "{err}");
}

#[test]
fn backoff_doubles_and_caps() {
    let b = Backoff::default();
    let ms: Vec<u128> = (0..6).map(|i| b.delay(i).as_millis()).collect();
    assert_eq!(ms, vec![500, 1000, 2000, 4000, 8000, 8000]);
}

#[test]
fn parse_examples() {
    assert_eq!(parse_revision("Boil the water.\n2. Serve.").unwrap(), strings(&["Boil the water.", "Serve."]));
    let pies = parse_revision(
        "Preheat oven to 350 degrees F.\n2. Line baking sheets with parchment paper and set aside.",
    )
    .unwrap();
    assert_eq!(pies.len(), 2);
    assert_eq!(pies[0], "Preheat oven to 350 degrees F.");
    assert_eq!(parse_revision("step A\n3. step B").unwrap(), strings(&["step A", "step B"]));
    assert_eq!(parse_revision("  \n").unwrap_err(), ParseError::Empty);
    assert!(matches!(parse_revision("a\n3. b\n2. c"), Err(ParseError::NonIncreasing { previous: 3, found: 2, .. })));
    assert!(matches!(parse_revision("a\n2. b\n2. c"), Err(ParseError::NonIncreasing { .. })));
}

#[test]
fn internal_sentences_do_not_split() {
    let raw = "Cut 3-inch rounds. Re-roll scraps. 2. not a marker\n2. Bake.";
    assert_eq!(
        parse_revision(raw).unwrap(),
        strings(&["Cut 3-inch rounds. Re-roll scraps. 2. not a marker", "Bake."])
    );
}

#[test]
fn lone_enjoy_step_is_kept() {
    assert_eq!(parse_revision("Bake.\n2. Enjoy!").unwrap(), strings(&["Bake.", "Enjoy!"]));
}

#[test]
fn identity_revision_echoes_steps() {
    let r = recipe("r", "paella", 7);
    let result = revise_recipe(&r, &IdentityMock, &quick()).unwrap();
    assert_eq!(result.revised_steps, r.steps);
    assert_eq!(result.backend_id, "identity-mock");
    assert_eq!(result.prompt_fingerprint, build_revision_prompt(&r).unwrap().fingerprint());
}

#[test]
fn scripted_mini_apple_pies() {
    let pies = load_corpus(&fixture("mini_apple_pies.jsonl")).unwrap().collection.into_vec().remove(0);
    let completion = std::fs::read_to_string(fixture("mini_apple_pies.completion.txt")).unwrap();
    let fp = build_revision_prompt(&pies).unwrap().fingerprint();
    let backend = ScriptedMock::new(HashMap::from([(fp, completion.clone())]));
    let result = revise_recipe(&pies, &backend, &quick()).unwrap();
    assert_eq!(result.raw_completion, completion);
    assert_eq!(result.revised_steps.len(), 10);
    assert_eq!(result.revised_steps[9], "Bake pies on baking sheets for 20 minutes or until golden.");
    assert_eq!(result.revised_steps[0], "Preheat oven to 350 degrees F.");
}

#[test]
fn scripted_unknown_fingerprint_fails() {
    let err = revise_recipe(&recipe("r", "paella", 2), &ScriptedMock::default(), &quick()).unwrap_err();
    assert!(matches!(err, GatewayError::Backend(BackendError::UnknownFixture(_))), "{err}");
}

#[test]
fn scripted_results_are_deterministic() {
    let r = recipe("r", "paella", 3);
    let fp = build_revision_prompt(&r).unwrap().fingerprint();
    let backend = ScriptedMock::new(HashMap::from([(fp, "One.\n2. Two.".to_string())]));
    let mut a = revise_recipe(&r, &backend, &quick()).unwrap();
    let b = revise_recipe(&r, &backend, &quick()).unwrap();
    a.created_at = b.created_at;
    assert_eq!(a, b);
}

/// Answers from a fixed sequence and counts calls.
struct Sequence {
    replies: Vec<&'static str>,
    calls: AtomicU32,
}

impl CompletionBackend for Sequence {
    fn id(&self) -> String {
        "sequence".into()
    }

    fn attempt(&self, _: &CompletionRequest) -> Result<String, BackendError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst) as usize;
        Ok(self.replies[n.min(self.replies.len() - 1)].to_string())
    }
}

#[test]
fn parse_failure_gets_exactly_one_retry() {
    let r = recipe("r", "paella", 2);
    let recovering = Sequence {
        replies: vec!["a\n3. b\n2. c", "Fine.\n2. Done."],
        calls: AtomicU32::new(0),
    };
    let result = revise_recipe(&r, &recovering, &quick()).unwrap();
    assert_eq!(result.revised_steps, strings(&["Fine.", "Done."]));
    assert_eq!(recovering.calls.load(Ordering::SeqCst), 2);

    let broken = Sequence {
        replies: vec!["   "],
        calls: AtomicU32::new(0),
    };
    let err = revise_recipe(&r, &broken, &quick()).unwrap_err();
    assert!(matches!(err, GatewayError::Parse { source: ParseError::Empty, .. }), "{err}");
    assert_eq!(broken.calls.load(Ordering::SeqCst), 2);
}

#[test]
fn invalid_request_is_rejected_before_backend() {
    let mut defaults = quick();
    defaults.max_tokens = 0;
    let seq = Sequence {
        replies: vec!["x"],
        calls: AtomicU32::new(0),
    };
    let err = revise_recipe(&recipe("r", "paella", 2), &seq, &defaults).unwrap_err();
    assert!(matches!(err, GatewayError::InvalidRequest(_)), "{err}");
    assert_eq!(seq.calls.load(Ordering::SeqCst), 0);
}

#[test]
fn batch_persists_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let store = ResultStore::new(dir.path().join("results")).unwrap();
    let recipes: Vec<_> = (0..20).map(|i| recipe(&format!("r{i}"), "paella", i % 5 + 1)).collect();
    let defaults = RequestDefaults {
        fixed_time: Some(Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap()),
        ..quick()
    };
    let seq = revise_batch(&recipes, &IdentityMock, &defaults, 4, Exec::Sequential, Some(&store));
    let par = revise_batch(&recipes, &IdentityMock, &defaults, 4, Exec::Parallel, None);
    let seq: Vec<_> = seq.into_iter().map(Result::unwrap).collect();
    let par: Vec<_> = par.into_iter().map(Result::unwrap).collect();
    assert_eq!(seq, par);
    for (r, res) in recipes.iter().zip(&seq) {
        assert_eq!(res.recipe_id, r.id);
        let logged = std::fs::read_to_string(store.path_for(&r.id)).unwrap();
        assert_eq!(logged.lines().count(), 1);
    }
    let path = dir.path().join("revisions.jsonl");
    write_revisions(&path, &seq).unwrap();
    assert_eq!(read_revisions(&path).unwrap(), seq);
}

fn step_text() -> impl Strategy<Value = String> {
    "[A-Za-z(][A-Za-z0-9 ,.()!-]{0,40}".prop_map(|s| s.trim().to_string()).prop_filter("non-empty", |s| !s.is_empty())
}

proptest! {
    #[test]
    fn render_then_parse_is_identity(steps in proptest::collection::vec(step_text(), 1..25)) {
        prop_assert_eq!(parse_revision(&render_continuation(&steps)).unwrap(), steps);
    }

    #[test]
    fn parsed_steps_are_never_empty(raw in "[a-z0-9. \n]{0,80}") {
        if let Ok(steps) = parse_revision(&raw) {
            prop_assert!(!steps.is_empty());
            for s in &steps {
                prop_assert!(!s.trim().is_empty());
            }
            // Content is preserved in order once the markers are removed.
            let kept: String = steps.concat().chars().filter(|c| !c.is_whitespace()).collect();
            let raw_chars: String = raw.chars().filter(|c| !c.is_whitespace()).collect();
            let mut it = raw_chars.chars();
            prop_assert!(kept.chars().all(|c| it.any(|r| r == c)));
        }
    }
}
