//! Analytic vs finite-difference gradients of the full objective on the
//! two-layer 16×16 model, for every method and channel strategy.
//!
//! ```bash
//! cargo run --release --example gradcheck
//! ```

use pal::backbone::ModelSpec;
use pal::harness::gradcheck::{all_cases, gradcheck, DEFAULT_EPS};

fn main() -> pal::Result<()> {
    let report = gradcheck(&ModelSpec::tiny(), &all_cases(), 2, 0, DEFAULT_EPS)?;
    for case in &report.cases {
        println!("{}", case.case);
        for g in &case.groups {
            println!("  {:<14} {:.2e}  ({} of {} compared)", g.name, g.max_rel_error, g.compared, g.total);
        }
    }
    println!("worst {:.2e}, {}", report.max_rel_error(), if report.passed() { "ok" } else { "FAILED" });
    Ok(())
}
