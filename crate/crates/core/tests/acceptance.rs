//! One line per acceptance criterion; exits nonzero if any fails.

use cqed_core::validation::{run_all, SuiteConfig};

fn main() {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let outcomes = run_all(SuiteConfig {
        quick: false,
        threads,
    });
    let mut failed = 0;
    for o in &outcomes {
        let tag = if o.passed { "PASS" } else { "FAIL" };
        println!(
            "{tag} criterion {:>2} {}: {} [{:.2} s]",
            o.id, o.name, o.detail, o.seconds
        );
        failed += usize::from(!o.passed);
    }
    println!(
        "{} of {} criteria passed",
        outcomes.len() - failed,
        outcomes.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
