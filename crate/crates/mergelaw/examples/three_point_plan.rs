//! Forecasts a full CE-vs-k curve from measurements at k = 1, 2, 4 and
//! derives an early-stop recommendation and an experts-to-floor budget.

use mergelaw::plan::{plan, StopRule, ThreePointInput};

fn main() {
    // measured CE at k = 1, 2, 4 for an 8B backbone
    let input = ThreePointInput::new([(1, 0.7825), (2, 0.75385), (4, 0.739525)]);
    let report = plan(&input, 0.01, 0.01, 1..=16, StopRule::RelativeGain).unwrap();

    println!(
        "fitted: L_inf={:.4} A={:.4} b={:.4}",
        report.fitted.l_inf, report.fitted.a, report.fitted.b
    );
    println!("forecast:");
    for (k, ce) in &report.forecast {
        println!("  k={k:>2}: {ce:.4}");
    }
    println!("recommended stop k* = {}", report.k_star);
    println!("experts-to-floor k_eps = {}", report.k_epsilon);
    println!("rule: {}", report.rule);
}
