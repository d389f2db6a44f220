mod common;

use std::collections::HashMap;
use std::sync::Arc;

use common::{chat_response, corpus, MockEndpoint};
use proptest::prelude::*;
use social_rl::annotation::{
    annotate_batch, parse_critical, parse_reply, read_records, render_prompt, render_reply, select_critical_utterance,
    write_records, AnnotationError, AnnotationRequest, Annotator, CachedAnnotator, ContextMode, Instruction,
    OracleAnnotator, RemoteAnnotator, RemoteConfig, ScoreBounds,
};
use social_rl::episode::{Dimension, Episode};
use social_rl::sim::{Scenario, LEARNER_ID};

fn episodes(n: usize) -> Vec<Episode> {
    corpus(&Scenario::easy(), n, 11)
}

fn request(e: &Episode, dim: Dimension) -> AnnotationRequest {
    AnnotationRequest::new(e.clone(), LEARNER_ID, dim, Instruction::Direct)
}

fn fast_config(url: &str) -> RemoteConfig {
    let mut c = RemoteConfig::new(url, "judge-test");
    c.backoff_ms = 1;
    c.timeout_secs = 5;
    c
}

/// A judge that answers each known prompt with a prepared reply.
fn scripted_judge(replies: HashMap<String, String>) -> MockEndpoint {
    let replies = Arc::new(replies);
    MockEndpoint::start(move |req, _| match replies.get(req.prompt()) {
        Some(r) => (200, chat_response(r)),
        None => (404, "{\"error\":\"unknown prompt\"}".into()),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn render_reply_parse_round_trip(idx in 0usize..12, lo in 0i64..3, span in 0i64..8, raw in prop::collection::vec(any::<u32>(), 20)) {
        let eps = episodes(12);
        let hi = lo + span;
        let req = request(&eps[idx], Dimension::Goal).with_bounds(hi.max(1) as u32, ScoreBounds::new(lo, hi));
        let prompt = render_prompt(&req).unwrap();
        let keys = req.expected_keys();
        for k in &keys {
            prop_assert!(prompt.contains(k.as_str()));
        }
        let scores: Vec<i64> = keys.iter().zip(&raw).map(|(_, r)| lo + (*r as i64) % (span + 1)).collect();
        let reply = render_reply(&keys, &scores);
        prop_assert_eq!(parse_reply(&reply, &keys, req.bounds).unwrap(), scores);
    }
}

#[test]
fn crafted_replies_trigger_each_parse_error() {
    let keys = vec!["Utterance 0 by Tom".to_string(), "Utterance 2 by Tom".to_string()];
    let b = ScoreBounds::new(0, 3);
    let missing = r#"{"Utterance 0 by Tom": 2}"#;
    assert!(matches!(parse_reply(missing, &keys, b), Err(AnnotationError::MissingAnnotation { key, .. }) if key == keys[1]));
    let high = r#"{"Utterance 0 by Tom": 2, "Utterance 2 by Tom": 7}"#;
    assert!(matches!(
        parse_reply(high, &keys, b),
        Err(AnnotationError::OutOfRangeScore { score: 7, lo: 0, hi: 3, .. })
    ));
    let negative = r#"{"Utterance 0 by Tom": -1, "Utterance 2 by Tom": 1}"#;
    assert!(matches!(parse_reply(negative, &keys, b), Err(AnnotationError::OutOfRangeScore { score: -1, .. })));
    for garbage in ["I would rate these highly.", "{not json", r#"{"Utterance 0 by Tom": "two", "Utterance 2 by Tom": 1}"#] {
        let err = parse_reply(garbage, &keys, b).unwrap_err();
        assert!(matches!(err, AnnotationError::UnparseableReply { .. }), "{garbage}: {err:?}");
        assert_eq!(err.raw_reply(), Some(garbage));
    }
}

#[test]
fn replies_wrapped_in_prose_and_fences_parse() {
    let keys = vec!["Utterance 1 by Ann".to_string()];
    let raw = "Here you go:\n```json\n{\"Utterance 1 by Ann\": 3.0}\n```\nThanks.";
    assert_eq!(parse_reply(raw, &keys, ScoreBounds::new(0, 3)).unwrap(), vec![3]);
}

#[test]
fn critical_reply_accepts_scores_or_a_named_label() {
    let cands = vec![(0, "Utterance 0 by Tom".to_string()), (2, "Utterance 2 by Tom".to_string())];
    assert_eq!(parse_critical(r#"{"Utterance 0 by Tom": 0, "Utterance 2 by Tom": 1}"#, &cands).unwrap(), 2);
    assert_eq!(parse_critical("The key one is Utterance 2 by Tom.", &cands).unwrap(), 2);
    assert!(matches!(parse_critical("none of them", &cands), Err(AnnotationError::UnparseableReply { .. })));
}

#[test]
fn oracle_records_are_in_bounds_and_singular_is_one_hot() {
    let oracle = OracleAnnotator::new(4);
    for e in episodes(6) {
        let req = request(&e, Dimension::Goal);
        let direct = oracle.annotate(&req).unwrap();
        assert_eq!(direct.scores.len(), req.expected_keys().len());
        assert!(direct.scores.iter().all(|s| (0..=3).contains(s)));
        let a = direct.attribution();
        assert!(a.iter().all(|x| (0.0..=1.0).contains(x)));

        let mut s = req.clone();
        s.instruction = Instruction::Singular;
        let singular = oracle.annotate(&s).unwrap();
        let critical = singular.critical.unwrap();
        assert!(req.agent_turns().contains(&critical));
        assert_eq!(singular.attribution().iter().filter(|x| **x == 1.0).count(), 1);
        assert_eq!(select_critical_utterance(&req, &oracle).unwrap(), critical);
        // Deterministic.
        assert_eq!(oracle.annotate(&req).unwrap(), direct);
    }
}

#[test]
fn remote_direct_annotation_matches_the_judge_end_to_end() {
    let oracle = OracleAnnotator::new(4);
    let reqs: Vec<AnnotationRequest> = episodes(4)
        .iter()
        .flat_map(|e| Dimension::SCORED.map(|d| request(e, d)))
        .collect();
    let expected: Vec<Vec<i64>> = reqs.iter().map(|r| oracle.annotate(r).unwrap().scores).collect();
    let replies = reqs
        .iter()
        .zip(&expected)
        .map(|(r, s)| (render_prompt(r).unwrap(), format!("Sure.\n{}", render_reply(&r.expected_keys(), s))))
        .collect();
    let server = scripted_judge(replies);
    let remote = RemoteAnnotator::with_api_key(fast_config(&server.url), "test-key".into());
    let got = annotate_batch(&reqs, &remote);
    for (g, e) in got.iter().zip(&expected) {
        assert_eq!(&g.as_ref().unwrap().scores, e);
    }
    let seen = server.requests();
    assert_eq!(seen.len(), reqs.len());
    assert!(seen.iter().all(|r| r.authorization.as_deref() == Some("Bearer test-key")));
    assert!(seen.iter().all(|r| r.body["model"] == "judge-test"));
    let record = got[0].as_ref().unwrap();
    assert_eq!(record.annotator_id, remote.annotator_id());
    assert!(record.timestamp > 0);
}

#[test]
fn remote_singular_returns_the_named_utterance() {
    let e = &episodes(1)[0];
    let mut req = request(e, Dimension::Goal);
    req.instruction = Instruction::Singular;
    let turns = req.agent_turns();
    let last = *turns.last().unwrap();
    let label = req.expected_keys().last().unwrap().clone();
    let server = MockEndpoint::fixed(&format!("The most critical is \"{label}\"."));
    let remote = RemoteAnnotator::with_api_key(fast_config(&server.url), "k".into());
    let record = remote.annotate(&req).unwrap();
    assert_eq!(record.critical, Some(last));
    assert_eq!(record.attribution().last(), Some(&1.0));
}

#[test]
fn remote_retries_server_errors_then_succeeds() {
    let e = &episodes(1)[0];
    let req = request(e, Dimension::Rel);
    let keys = req.expected_keys();
    let reply = chat_response(&render_reply(&keys, &vec![1; keys.len()]));
    let server = MockEndpoint::start(move |_, i| if i < 2 { (503, "busy".into()) } else { (200, reply.clone()) });
    let remote = RemoteAnnotator::with_api_key(fast_config(&server.url), "k".into());
    assert_eq!(remote.annotate(&req).unwrap().scores, vec![1; keys.len()]);
    assert_eq!(remote.network_calls(), 3);
}

#[test]
fn remote_gives_up_on_client_errors_and_exhausted_retries() {
    let req = request(&episodes(1)[0], Dimension::Goal);
    let server = MockEndpoint::start(|_, _| (401, "{\"error\":\"bad key\"}".into()));
    let remote = RemoteAnnotator::with_api_key(fast_config(&server.url), "k".into());
    assert!(matches!(remote.annotate(&req), Err(AnnotationError::Transport { attempts: 1, .. })));

    let server = MockEndpoint::start(|_, _| (500, "down".into()));
    let mut config = fast_config(&server.url);
    config.max_retries = 2;
    let remote = RemoteAnnotator::with_api_key(config, "k".into());
    assert!(matches!(remote.annotate(&req), Err(AnnotationError::Transport { attempts: 3, .. })));
}

#[test]
fn unparseable_reply_is_re_prompted_once() {
    let req = request(&episodes(1)[0], Dimension::Kno);
    let keys = req.expected_keys();
    let good = chat_response(&render_reply(&keys, &vec![0; keys.len()]));
    let server = MockEndpoint::start(move |_, i| if i == 0 { (200, chat_response("no idea")) } else { (200, good.clone()) });
    let remote = RemoteAnnotator::with_api_key(fast_config(&server.url), "k".into());
    assert_eq!(remote.annotate(&req).unwrap().scores, vec![0; keys.len()]);
    let seen = server.requests();
    assert_eq!(seen.len(), 2);
    assert!(seen[1].prompt().len() > seen[0].prompt().len());

    let server = MockEndpoint::fixed("still no idea");
    let remote = RemoteAnnotator::with_api_key(fast_config(&server.url), "k".into());
    assert!(matches!(remote.annotate(&req), Err(AnnotationError::UnparseableReply { .. })));
    assert_eq!(remote.network_calls(), 2);
}

#[test]
fn online_remote_sends_one_prefix_per_utterance() {
    let req = request(&episodes(1)[0], Dimension::Goal).with_context(ContextMode::Online);
    let n = req.agent_turns().len();
    // Score 2 whatever is asked; keys are pulled from the prompt's example block.
    let server = MockEndpoint::start(|r, _| {
        let keys: Vec<String> = r
            .prompt()
            .lines()
            .filter_map(|l| l.split_once(':').map(|(k, _)| k.trim().to_string()))
            .filter(|k| k.starts_with("Utterance ") && k.ends_with("by Tom"))
            .collect();
        (200, chat_response(&render_reply(&keys, &vec![2; keys.len()])))
    });
    let remote = RemoteAnnotator::with_api_key(fast_config(&server.url), "k".into());
    let record = remote.annotate(&req).unwrap();
    assert_eq!(record.scores, vec![2; n]);
    assert_eq!(server.requests().len(), n);
}

#[test]
fn cache_serves_repeats_without_network_calls() {
    let req = request(&episodes(1)[0], Dimension::Goal);
    let keys = req.expected_keys();
    let server = MockEndpoint::fixed(&render_reply(&keys, &vec![3; keys.len()]));
    let cached = CachedAnnotator::new(RemoteAnnotator::with_api_key(fast_config(&server.url), "k".into()));
    let a = cached.annotate(&req).unwrap();
    let b = cached.annotate(&req).unwrap();
    assert_eq!(a, b);
    assert_eq!(cached.inner().network_calls(), 1);
    assert_eq!(cached.hits(), 1);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.jsonl");
    write_records(&path, std::slice::from_ref(&a)).unwrap();
    let restored = read_records(&path).unwrap();
    assert_eq!(restored, vec![a.clone()]);
    let warm = CachedAnnotator::new(RemoteAnnotator::with_api_key(fast_config(&server.url), "k".into()))
        .with_records(restored);
    assert_eq!(warm.annotate(&req).unwrap(), a);
    assert_eq!(warm.inner().network_calls(), 0);
}

#[test]
fn fingerprint_depends_on_request_and_annotator() {
    let eps = episodes(2);
    let a = request(&eps[0], Dimension::Goal);
    assert_eq!(a.fingerprint("x"), a.clone().fingerprint("x"));
    assert_ne!(a.fingerprint("x"), a.fingerprint("y"));
    assert_ne!(a.fingerprint("x"), request(&eps[0], Dimension::Rel).fingerprint("x"));
    assert_ne!(a.fingerprint("x"), request(&eps[1], Dimension::Goal).fingerprint("x"));
}

#[test]
fn remote_config_has_no_place_for_secrets() {
    let ok = r#"endpoint = "http://localhost/v1"
model = "m""#;
    assert!(toml::from_str::<RemoteConfig>(ok).is_ok());
    let leaked = format!("{ok}\napi_key = \"sk-secret\"");
    assert!(toml::from_str::<RemoteConfig>(&leaked).is_err());
}
