//! Evaluates the floor+tail law: per-size curves, the joint (N, k)
//! form, marginal gains, and the fractional-return summary.

use mergelaw::law::{
    eval_curve, eval_joint, fractional_return, marginal_gain, CurveParams, JointParams,
};

fn main() {
    // cross-domain curve fitted for a 3B backbone
    let curve = CurveParams::new(0.7137, 0.0783, 0.6875);
    println!("per-size curve L(k) = L_inf + A/(k+b):");
    for k in [1, 2, 4, 9] {
        println!(
            "  k={k}: L={:.4}  gain to k+1 = {:.5}",
            eval_curve(&curve, k, None),
            marginal_gain(&curve, k)
        );
    }

    // joint law for one evaluation domain across backbone sizes
    let joint = JointParams::new(0.28292, 0.20851, 0.41186, 0.082102, 0.13678, 0.43453);
    println!("\njoint law L(N, k) over backbone sizes (billions):");
    for n in [0.5, 3.0, 32.0] {
        let row: Vec<String> = (1..=9)
            .map(|k| format!("{:.3}", eval_joint(&joint, n, k)))
            .collect();
        println!("  N={n:>4}: {}", row.join(" "));
    }

    // fractional return: how much of the total achievable drop each k buys
    let series: Vec<f64> = (1..=9).map(|k| eval_curve(&curve, k, None)).collect();
    let fr = fractional_return(&series).unwrap();
    println!("\nfractional return R(k): {:?}", fr.r.iter().map(|r| (r * 100.0).round()).collect::<Vec<_>>());
    println!("smallest k with R >= 0.9: {}", fr.k_target(0.9));
}
