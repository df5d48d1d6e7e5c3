//! Builds synthetic incremental-merge trajectories with planted block
//! structure, recovers the donor-to-domain synergy matrix and its block
//! means, and summarizes across-order dispersion.

use std::collections::BTreeMap;

use mergelaw::table::{MeasurementRow, MeasurementTable, Trajectory};
use mergelaw::traj::{order_dispersion, synergy_matrix};

fn main() {
    // two science domains that help each other, one outsider they hurt
    let domains = ["bio", "chem", "code"];
    let gain = |donor: &str, receiver: &str| -> f64 {
        let science = |d: &str| d == "bio" || d == "chem";
        if science(donor) == science(receiver) {
            0.05
        } else {
            -0.01
        }
    };

    let mut trajectories = Vec::new();
    for order in [["bio", "chem", "code"], ["code", "bio", "chem"], ["chem", "code", "bio"]] {
        let mut ce: BTreeMap<String, f64> =
            domains.iter().map(|d| (d.to_string(), 1.0)).collect();
        let mut steps = vec![ce.clone()];
        for donor in &order[1..] {
            for d in &domains {
                *ce.get_mut(*d).unwrap() -= gain(donor, d);
            }
            steps.push(ce.clone());
        }
        trajectories.push(Trajectory {
            donors: order.iter().map(|s| s.to_string()).collect(),
            ce: steps,
        });
    }

    let m = synergy_matrix(&trajectories).unwrap();
    println!("synergy matrix (donor -> domain mean gain):");
    for (i, d) in m.donors.iter().enumerate() {
        let row: Vec<String> = (0..m.domains.len())
            .map(|j| match m.mean(i, j) {
                Some(v) => format!("{v:+.3}"),
                None => "  .  ".into(),
            })
            .collect();
        println!("  {d:>5}: {}", row.join(" "));
    }

    let mut groups = BTreeMap::new();
    groups.insert("science".to_string(), vec!["bio".to_string(), "chem".to_string()]);
    groups.insert("other".to_string(), vec!["code".to_string()]);
    println!("\nblock means:");
    for ((gd, ge), v) in m.block_means(&groups) {
        println!("  {gd} -> {ge}: {v:+.3}");
    }

    // across-order dispersion of macro CE at fixed (N, k)
    let mut table = MeasurementTable::default();
    for (order, ce) in [("p1", 0.52), ("p2", 0.55), ("p3", 0.50)] {
        for d in &domains {
            table.rows.push(MeasurementRow {
                method: "average".into(),
                n: 3.0,
                k: 3,
                domain: d.to_string(),
                group_id: order.into(),
                ce,
            });
        }
    }
    let (records, _) = order_dispersion(&table);
    let r = &records[0];
    println!(
        "\ndispersion at (N={}, k={}): mean={:.4} std={:.4} range={:.4} cv={:.4}",
        r.n, r.k, r.mean, r.std, r.range, r.cv
    );
}
