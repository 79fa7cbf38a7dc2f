use ggt_core::verify::{run, Fault, Suite, VerifyOptions};

#[test]
fn all_suites_green_on_a_healthy_build() {
    let results = run(Suite::All, &VerifyOptions::default());
    assert!(!results.is_empty());
    for r in &results {
        eprintln!(
            "suite={} check={} status={} {}",
            r.suite,
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.detail
        );
        assert!(r.passed, "{}::{} failed: {}", r.suite, r.name, r.detail);
    }
}

#[test]
fn corrupted_merge_permutation_turns_the_oracle_suite_red() {
    let opts = VerifyOptions {
        seed: 0,
        fault: Some(Fault::MergePermutation),
    };
    let results = run(Suite::Oracle, &opts);
    let bruteforce = results
        .iter()
        .find(|r| r.name == "g_msa_matches_bruteforce")
        .expect("check present");
    assert!(
        !bruteforce.passed,
        "fault injection went undetected: {}",
        bruteforce.detail
    );
}

#[test]
fn suites_are_deterministic_given_the_seed() {
    let a = run(
        Suite::Grad,
        &VerifyOptions {
            seed: 7,
            fault: None,
        },
    );
    let b = run(
        Suite::Grad,
        &VerifyOptions {
            seed: 7,
            fault: None,
        },
    );
    let fmt = |rs: &[ggt_core::verify::CheckResult]| {
        rs.iter()
            .map(|r| format!("{}|{}|{}|{}", r.suite, r.name, r.passed, r.detail))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(fmt(&a), fmt(&b));
}
