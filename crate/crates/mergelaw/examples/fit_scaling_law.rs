//! Fits the per-size curve and the joint (N, k) law to synthetic
//! measurements with mild multiplicative noise, then prints the
//! recovered parameters and fit quality.

use mergelaw::fit::{fit_curve, fit_joint, WeightsMode};
use mergelaw::law::{eval_joint, JointParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let truth = JointParams::new(0.18092, 0.11453, 0.42335, 0.052334, 0.0086009, 0.096378);
    let mut rng = ChaCha8Rng::seed_from_u64(42);

    let mut points = Vec::new();
    for &n in &[0.5, 1.5, 3.0, 7.0, 14.0, 32.0] {
        for k in 1..=9 {
            let noise = 1.0 + 0.005 * rng.random_range(-1.0..1.0f64);
            points.push((n, k, eval_joint(&truth, n, k) * noise));
        }
    }

    let report = fit_joint(&points, WeightsMode::ProportionalToK).unwrap();
    let p = report.joint_params().unwrap();
    println!("joint fit (0.5% noise), R^2 = {:.5}", report.r_squared);
    println!("  L*   {:.5}  (true {:.5})", p.l_star, truth.l_star);
    println!("  B    {:.5}  (true {:.5})", p.b_coeff, truth.b_coeff);
    println!("  beta {:.5}  (true {:.5})", p.beta, truth.beta);
    println!("  A0   {:.5}  (true {:.5})", p.a0, truth.a0);

    // per-size slice at N=32: fit the simple curve to its k series
    let slice: Vec<(u32, f64)> = points
        .iter()
        .filter(|(n, _, _)| *n == 32.0)
        .map(|&(_, k, ce)| (k, ce))
        .collect();
    let report = fit_curve(&slice, WeightsMode::ProportionalToK, false).unwrap();
    let (c, _) = report.curve_params().unwrap();
    println!(
        "\nper-size fit at N=32: L_inf={:.5} A={:.5} b={:.3}, R^2={:.5}",
        c.l_inf, c.a, c.b, report.r_squared
    );
}
