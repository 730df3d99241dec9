use std::time::Instant;

use launder_core::patch::Patch;
use launder_core::scorers::{ExternalScorer, ExternalScorerConfig};
use launder_core::{Error, ErrorKind, ImageBuffer, ScorerPhase};

fn asset(name: &str) -> ExternalScorerConfig {
    let path = format!("{}/tests/assets/{name}", env!("CARGO_MANIFEST_DIR"));
    ExternalScorerConfig {
        command: vec!["sh".into(), path],
        timeout_ms: 500,
    }
}

fn patch() -> Patch {
    let data: Vec<u8> = (0..16 * 16 * 3).map(|i| (i * 31 % 256) as u8).collect();
    Patch {
        pixels: ImageBuffer::from_bytes(16, 16, 3, data).unwrap(),
        origin: (0, 0),
    }
}

fn phase_of(e: &Error) -> ScorerPhase {
    match e.root() {
        Error::Scorer { phase, .. } => *phase,
        other => panic!("not a scorer error: {other}"),
    }
}

fn spawn_err(cfg: &ExternalScorerConfig) -> Error {
    match ExternalScorer::spawn(cfg) {
        Ok(_) => panic!("spawn unexpectedly succeeded"),
        Err(e) => e,
    }
}

#[test]
fn constant_scorer_session() {
    let mut s = ExternalScorer::spawn(&asset("constant_scorer.sh")).unwrap();
    for _ in 0..5 {
        assert_eq!(s.score_patch(&patch()).unwrap(), 0.25);
    }
    assert_eq!(s.invocations(), 5);
    assert!(s.close(), "scorer should exit once stdin closes");
}

#[test]
fn malformed_response_is_response_error() {
    let mut s = ExternalScorer::spawn(&asset("garbage_scorer.sh")).unwrap();
    let e = s.score_patch(&patch()).unwrap_err();
    assert_eq!(phase_of(&e), ScorerPhase::Response);
    assert!(e.to_string().contains("not-a-number"), "{e}");
    assert_eq!(e.kind(), ErrorKind::Scorer);
    // session is poisoned afterwards
    assert!(s.score_patch(&patch()).is_err());
}

#[test]
fn wrong_greeting_is_handshake_error() {
    let e = spawn_err(&asset("bad_hello_scorer.sh"));
    assert_eq!(phase_of(&e), ScorerPhase::Handshake);
}

#[test]
fn missing_greeting_times_out() {
    let t = Instant::now();
    let e = spawn_err(&asset("silent_scorer.sh"));
    assert_eq!(phase_of(&e), ScorerPhase::Timeout);
    assert!(t.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn stalled_reply_times_out() {
    let mut s = ExternalScorer::spawn(&asset("stalled_scorer.sh")).unwrap();
    let t = Instant::now();
    let e = s.score_patch(&patch()).unwrap_err();
    assert_eq!(phase_of(&e), ScorerPhase::Timeout);
    assert!(t.elapsed().as_millis() >= 450);
    drop(s);
    assert!(t.elapsed().as_secs_f64() < 5.0, "stalled scorer must be killed");
}

#[test]
fn crash_after_greeting_is_not_a_timeout() {
    let mut s = ExternalScorer::spawn(&asset("crashing_scorer.sh")).unwrap();
    let e = s.score_patch(&patch()).unwrap_err();
    let p = phase_of(&e);
    assert!(matches!(p, ScorerPhase::Request | ScorerPhase::Response), "{p}");
}

#[test]
fn missing_program_is_launch_error() {
    let cfg = ExternalScorerConfig::new(vec!["/nonexistent/scorer-binary".into()]);
    assert_eq!(phase_of(&spawn_err(&cfg)), ScorerPhase::Launch);
    assert_eq!(phase_of(&spawn_err(&ExternalScorerConfig::new(vec![]))), ScorerPhase::Launch);
}
