//! Library side of the benchmark CLI: configuration parsing, experiment
//! execution, and verification reporting. The thin binary in `main.rs`
//! dispatches onto these.

pub mod config;
pub mod run;

use symmfem::acceptance::CriterionReport;

/// Prints one line per criterion and returns the process exit code:
/// zero iff every criterion passed (an empty set passes).
pub fn print_reports(reports: &[CriterionReport]) -> i32 {
    for r in reports {
        println!("{}", r.line());
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    if failed == 0 {
        println!("all {} criteria passed", reports.len());
        0
    } else {
        println!("{failed} of {} criteria failed", reports.len());
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(id: usize, passed: bool) -> CriterionReport {
        CriterionReport {
            id,
            name: "fixture",
            passed,
            details: "synthetic".into(),
        }
    }

    #[test]
    fn empty_report_set_passes() {
        assert_eq!(print_reports(&[]), 0);
    }

    #[test]
    fn forced_failure_fails() {
        assert_eq!(print_reports(&[fixture(1, true), fixture(2, false)]), 1);
    }

    #[test]
    fn lines_carry_every_criterion_id() {
        let reports: Vec<_> = (1..=7).map(|id| fixture(id, true)).collect();
        for r in &reports {
            assert!(r.line().contains(&format!("criterion-{}", r.id)));
        }
        assert_eq!(print_reports(&reports), 0);
    }
}
