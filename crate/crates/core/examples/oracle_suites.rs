//! Runs every randomized self-check and prints a one-line verdict per suite.

use freegate::oracle::{run_suite, Suite};

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    for suite in Suite::ALL {
        let report = run_suite(suite, seed);
        let tightest = report.cases.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min);
        println!(
            "{:<13} {} of {} cases passed, smallest margin {tightest:.2e}",
            suite.name(),
            report.cases.iter().filter(|c| c.passed).count(),
            report.cases.len()
        );
        for f in report.failures() {
            println!("  FAIL {}: {}", f.case, f.detail);
        }
    }
}
