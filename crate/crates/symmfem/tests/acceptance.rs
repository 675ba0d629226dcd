//! Acceptance suite. Runs every criterion sequentially (the cost-structure
//! criterion times wall clocks, so criteria must not contend with each
//! other) and prints one line per criterion.
//!
//! Set `ACCEPTANCE_FULL=1` to run the eigenvalue criterion over its full
//! grid sequence; the default covers the first two grids.

use symmfem::acceptance::{all_passed, run_all, AcceptanceOptions};

#[test]
fn acceptance_criteria() {
    let opts = AcceptanceOptions {
        full_eigen_sequence: std::env::var("ACCEPTANCE_FULL").is_ok_and(|v| v == "1"),
    };
    let reports = run_all(&opts);
    for r in &reports {
        println!("{}", r.line());
    }
    assert!(
        all_passed(&reports),
        "failed criteria:\n{}",
        reports
            .iter()
            .filter(|r| !r.passed)
            .map(|r| r.line())
            .collect::<Vec<_>>()
            .join("\n")
    );
}
