//! Acceptance gate: one test per golden scenario, each printing a single
//! `ACCEPTANCE <nn> <name>: PASS/FAIL` line (run with `-- --nocapture` to see
//! the lines for passing tests). Scenarios with runtime pins assert their
//! wall-clock budget too.

use gsrp::scenario::{run_golden, ScenarioReport};

fn gate(number: usize, name: &str, budget_s: Option<f64>) {
    let report: ScenarioReport = match run_golden(name) {
        Ok(r) => r,
        Err(err) => {
            println!("ACCEPTANCE {number:02} {name}: FAIL");
            panic!("scenario {name} failed to run: {err}");
        }
    };
    let verdict = if report.passed() { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {number:02} {name}: {verdict}");
    for a in &report.assertions {
        let mark = if a.passed { "ok" } else { "VIOLATED" };
        println!("    [{mark}] {} ({})", a.label, a.detail);
    }
    println!("    elapsed {:.2} s", report.elapsed_s);
    assert!(
        report.passed(),
        "scenario {name} violated: {:?}",
        report.failures().collect::<Vec<_>>()
    );
    if let Some(budget) = budget_s {
        assert!(
            report.elapsed_s < budget,
            "scenario {name} took {:.1} s, budget {budget} s",
            report.elapsed_s
        );
    }
}

#[test]
fn acceptance_01_nearfield_failure() {
    gate(1, "nearfield_failure", Some(30.0));
}

#[test]
fn acceptance_02_noise_response() {
    gate(2, "noise_response", None);
}

#[test]
fn acceptance_03_nmf_mvcnr_equivalence() {
    gate(3, "nmf_mvcnr_equivalence", None);
}

#[test]
fn acceptance_04_weighting_curves() {
    gate(4, "weighting_curves", None);
}

#[test]
fn acceptance_05_appendix_inequality() {
    gate(5, "appendix_inequality", Some(5.0));
}

#[test]
fn acceptance_06_model_scaling_invariance() {
    gate(6, "model_scaling_invariance", None);
}

#[test]
fn acceptance_07_phat_frob_coincidence() {
    gate(7, "phat_frob_coincidence", None);
}

#[test]
fn acceptance_08_mpcnr_mvcnr_at_source() {
    gate(8, "mpcnr_mvcnr_at_source", None);
}

#[test]
fn acceptance_09_uca_cardioid() {
    gate(9, "uca_cardioid", Some(180.0));
}

#[test]
fn acceptance_10_pipeline_determinism() {
    gate(10, "pipeline_determinism", None);
}

#[test]
fn acceptance_11_regularization_limit() {
    gate(11, "regularization_limit", None);
}
