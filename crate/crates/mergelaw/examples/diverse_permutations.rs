//! Generates a diverse set of merge orders: base, its reverse, then
//! greedy max-min Hamming picks from random candidate pools.

use mergelaw::traj::{generate_permutations, hamming};

fn main() {
    let base: Vec<String> = [
        "algebra", "analysis", "biology", "chemistry", "code", "discrete", "geometry",
        "number_theory", "physics",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();

    let perms = generate_permutations(&base, 6, 1000, 3).unwrap();
    for (i, p) in perms.iter().enumerate() {
        let min_dist = perms[..i]
            .iter()
            .map(|q| hamming(q, p).unwrap())
            .min()
            .map(|d| d.to_string())
            .unwrap_or_else(|| "-".into());
        println!("P{}: {}  (min distance to earlier: {})", i + 1, p.join("-"), min_dist);
    }
}
