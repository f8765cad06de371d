//! Acceptance gate: the full criterion suite must pass.
//!
//! Runs every criterion sequentially (so per-criterion runtime budgets are
//! measured honestly) and prints one line per criterion. Run with
//! `--nocapture` to see the report on success; on failure the captured
//! report is shown and the panic message names each failing criterion.

#[test]
fn all_acceptance_criteria_pass() {
    let reports = rg_optim::check::run_all();
    rg_optim::check::print_reports(&reports);
    let failing: Vec<String> = reports
        .iter()
        .filter(|r| !r.passed)
        .map(|r| format!("criterion {:02} {}: {}", r.index, r.name, r.detail))
        .collect();
    assert!(
        failing.is_empty(),
        "{} of {} acceptance criteria failed:\n{}",
        failing.len(),
        reports.len(),
        failing.join("\n")
    );
}
