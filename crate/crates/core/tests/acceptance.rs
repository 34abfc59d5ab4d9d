//! The thirteen acceptance criteria, one status line each.
//!
//! Criteria listed in `KNOWN_FAILURES` are reported but do not fail the suite.

use critbbm::verify::{self, Context, VerifyOptions, KNOWN_FAILURES};

#[test]
fn acceptance_criteria() {
    let opts = VerifyOptions::default();
    let ctx = Context::default();
    let mut unexpected = Vec::new();
    for id in 1..=13u8 {
        let outcome = verify::run_criterion(id, &opts, &ctx);
        println!("{outcome}");
        if !outcome.passed && !KNOWN_FAILURES.contains(&id) {
            unexpected.push(id);
        }
    }
    assert!(unexpected.is_empty(), "criteria failed: {unexpected:?}");
}
