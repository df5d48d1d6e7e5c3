//! Order-level analytics for incremental merging: diverse permutation
//! generation by greedy max-min Hamming distance, donor-to-domain
//! synergy matrices from merge trajectories, and across-order dispersion
//! summaries.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::table::{MeasurementTable, Trajectory};

/// Positions at which two equal-length orders disagree.
pub fn hamming(a: &[String], b: &[String]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "hamming distance needs equal lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count())
}

/// RNG stream for candidate `j` of selection round `i`, independent of
/// evaluation order.
fn candidate_rng(seed: u64, round: u64, candidate: u64) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in seed
        .to_le_bytes()
        .into_iter()
        .chain(round.to_le_bytes())
        .chain(candidate.to_le_bytes())
    {
        h ^= u64::from(byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Number of distinct permutations of `n` labels, saturating.
fn permutation_space(n: usize) -> u128 {
    let mut acc: u128 = 1;
    for i in 2..=n as u128 {
        acc = acc.saturating_mul(i);
    }
    acc
}

/// Generates `m` merge orders over `base`: the base order itself, its
/// reverse, then greedy picks maximizing the minimum Hamming distance to
/// everything already selected over a pool of `candidates` random
/// shuffles per round (ties broken by earliest candidate).
pub fn generate_permutations(
    base: &[String],
    m: usize,
    candidates: usize,
    seed: u64,
) -> Result<Vec<Vec<String>>> {
    if m < 1 || candidates < 1 {
        return Err(Error::InvalidInput(
            "need m >= 1 and a candidate pool of >= 1".into(),
        ));
    }
    if base.is_empty() {
        return Err(Error::InvalidInput("empty base order".into()));
    }
    {
        let unique: BTreeSet<&String> = base.iter().collect();
        if unique.len() != base.len() {
            return Err(Error::InvalidInput("base order has duplicate labels".into()));
        }
    }
    if m as u128 > permutation_space(base.len()) {
        return Err(Error::InvalidInput(format!(
            "requested {m} permutations but only {} exist for {} labels",
            permutation_space(base.len()),
            base.len()
        )));
    }

    let mut selected: Vec<Vec<String>> = vec![base.to_vec()];
    if m >= 2 {
        selected.push(base.iter().rev().cloned().collect());
    }
    for round in 2..m as u64 {
        let mut best: Option<(usize, Vec<String>)> = None;
        for j in 0..candidates as u64 {
            let mut cand = base.to_vec();
            cand.shuffle(&mut candidate_rng(seed, round, j));
            let min_dist = selected
                .iter()
                .map(|p| hamming(p, &cand).expect("equal lengths"))
                .min()
                .expect("selected nonempty");
            // strict > keeps the earliest candidate on ties
            if best.as_ref().is_none_or(|(d, _)| min_dist > *d) {
                best = Some((min_dist, cand));
            }
        }
        selected.push(best.expect("candidates >= 1").1);
    }
    Ok(selected)
}

/// Donor-to-domain mean marginal gains accumulated over trajectories.
#[derive(Debug, Clone)]
pub struct SynergyMatrix {
    pub donors: Vec<String>,
    pub domains: Vec<String>,
    /// Per-cell sum of deltas and occurrence count, indexed [donor][domain].
    /// A cell with count 0 never occurred; its mean is reported as None.
    pub sums: Vec<Vec<f64>>,
    pub counts: Vec<Vec<usize>>,
}

impl SynergyMatrix {
    pub fn mean(&self, donor: usize, domain: usize) -> Option<f64> {
        let c = self.counts[donor][domain];
        (c > 0).then(|| self.sums[donor][domain] / c as f64)
    }

    /// Sum of the donor's mean gains over domains other than itself.
    pub fn donor_strength(&self, donor: usize) -> f64 {
        self.domains
            .iter()
            .enumerate()
            .filter(|(_, e)| **e != self.donors[donor])
            .filter_map(|(j, _)| self.mean(donor, j))
            .sum()
    }

    /// Sum of mean gains received by a domain from donors other than itself.
    pub fn receiver_susceptibility(&self, domain: usize) -> f64 {
        self.donors
            .iter()
            .enumerate()
            .filter(|(_, d)| **d != self.domains[domain])
            .filter_map(|(i, _)| self.mean(i, domain))
            .sum()
    }

    /// Occurrence-weighted mean gain for every (donor group, domain
    /// group) pair under a label grouping.
    pub fn block_means(
        &self,
        groups: &BTreeMap<String, Vec<String>>,
    ) -> BTreeMap<(String, String), f64> {
        let group_of = |label: &String| -> Option<&String> {
            groups
                .iter()
                .find(|(_, members)| members.contains(label))
                .map(|(name, _)| name)
        };
        let mut acc: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
        for (i, d) in self.donors.iter().enumerate() {
            let Some(gd) = group_of(d) else { continue };
            for (j, e) in self.domains.iter().enumerate() {
                let Some(ge) = group_of(e) else { continue };
                if self.counts[i][j] > 0 {
                    let entry = acc.entry((gd.clone(), ge.clone())).or_insert((0.0, 0));
                    entry.0 += self.sums[i][j];
                    entry.1 += self.counts[i][j];
                }
            }
        }
        acc.into_iter()
            .map(|(k, (s, c))| (k, s / c as f64))
            .collect()
    }
}

/// Accumulates marginal gains Delta = L(t-1) - L(t) at cell (d_t, domain)
/// for every trajectory step t >= 2. The first step has no predecessor
/// and contributes nothing.
pub fn synergy_matrix(trajectories: &[Trajectory]) -> Result<SynergyMatrix> {
    let mut donors: BTreeSet<String> = BTreeSet::new();
    let mut domains: BTreeSet<String> = BTreeSet::new();
    let mut usable = false;
    for t in trajectories {
        if t.donors.len() != t.ce.len() || t.donors.is_empty() {
            return Err(Error::InvalidInput(
                "trajectory needs one CE record per donor step".into(),
            ));
        }
        let first: BTreeSet<&String> = t.ce[0].keys().collect();
        for step in &t.ce {
            let keys: BTreeSet<&String> = step.keys().collect();
            if keys != first {
                return Err(Error::InvalidInput(format!(
                    "inconsistent evaluation domains within a trajectory ({:?} vs {:?})",
                    first, keys
                )));
            }
        }
        donors.extend(t.donors.iter().cloned());
        domains.extend(t.ce[0].keys().cloned());
        usable |= t.donors.len() >= 2;
    }
    if !usable {
        return Err(Error::InvalidInput(
            "need at least one trajectory with >= 2 steps".into(),
        ));
    }

    let donors: Vec<String> = donors.into_iter().collect();
    let domains: Vec<String> = domains.into_iter().collect();
    let d_idx: BTreeMap<&String, usize> = donors.iter().enumerate().map(|(i, d)| (d, i)).collect();
    let e_idx: BTreeMap<&String, usize> = domains.iter().enumerate().map(|(i, e)| (e, i)).collect();
    let mut sums = vec![vec![0.0; domains.len()]; donors.len()];
    let mut counts = vec![vec![0usize; domains.len()]; donors.len()];
    for t in trajectories {
        for step in 1..t.donors.len() {
            let i = d_idx[&t.donors[step]];
            for (e, &ce) in &t.ce[step] {
                let j = e_idx[e];
                sums[i][j] += t.ce[step - 1][e] - ce;
                counts[i][j] += 1;
            }
        }
    }
    Ok(SynergyMatrix {
        donors,
        domains,
        sums,
        counts,
    })
}

/// Across-order dispersion of macro CE for one (N, k) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionRecord {
    pub n: f64,
    pub k: u32,
    pub orders: usize,
    pub mean: f64,
    pub std: f64,
    pub range: f64,
    pub cv: f64,
}

/// Per-(N, k) dispersion of macro CE (unweighted domain mean) across
/// orders (`group_id`). Cells with a single order are skipped and
/// reported in the warnings list.
pub fn order_dispersion(table: &MeasurementTable) -> (Vec<DispersionRecord>, Vec<String>) {
    // (N, k) -> order -> (ce sum, domain count)
    let mut cells: BTreeMap<(u64, u32), (f64, BTreeMap<String, (f64, usize)>)> = BTreeMap::new();
    for r in &table.rows {
        let cell = cells
            .entry((r.n.to_bits(), r.k))
            .or_insert((r.n, BTreeMap::new()));
        let e = cell.1.entry(r.group_id.clone()).or_insert((0.0, 0));
        e.0 += r.ce;
        e.1 += 1;
    }
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for ((_, k), (n, orders)) in cells {
        if orders.len() < 2 {
            warnings.push(format!(
                "cell (N={n}, k={k}) has a single order; skipped"
            ));
            continue;
        }
        let macros: Vec<f64> = orders.values().map(|(s, c)| s / *c as f64).collect();
        let m = macros.len() as f64;
        let mean = macros.iter().sum::<f64>() / m;
        let std = (macros.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
        let (lo, hi) = macros
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            });
        records.push(DispersionRecord {
            n,
            k,
            orders: macros.len(),
            mean,
            std,
            range: hi - lo,
            cv: if mean != 0.0 { std / mean } else { 0.0 },
        });
    }
    (records, warnings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::MeasurementRow;
    use approx::assert_abs_diff_eq;

    fn labels(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn digits(n: usize) -> Vec<String> {
        (1..=n).map(|i| i.to_string()).collect()
    }

    #[test]
    fn hamming_basics() {
        let a = labels(&["1", "2", "3"]);
        assert_eq!(hamming(&a, &a).unwrap(), 0);
        assert_eq!(hamming(&a, &labels(&["3", "2", "1"])).unwrap(), 2);
        let base = digits(9);
        let rev: Vec<String> = base.iter().rev().cloned().collect();
        assert_eq!(hamming(&base, &rev).unwrap(), 8);
        assert!(hamming(&a, &base).is_err());
    }

    #[test]
    fn first_two_permutations_are_base_and_reverse() {
        let base = digits(9);
        let perms = generate_permutations(&base, 2, 10, 0).unwrap();
        assert_eq!(perms[0], base);
        assert_eq!(perms[1], base.iter().rev().cloned().collect::<Vec<_>>());
    }

    #[test]
    fn generated_permutations_are_valid_and_deterministic() {
        let base = digits(9);
        let a = generate_permutations(&base, 6, 200, 42).unwrap();
        let b = generate_permutations(&base, 6, 200, 42).unwrap();
        assert_eq!(a, b);
        for p in &a {
            let mut sorted = p.clone();
            sorted.sort();
            assert_eq!(sorted, base);
        }
        let c = generate_permutations(&base, 6, 200, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn greedy_pick_is_max_min_over_its_pool() {
        // re-score round 2's pool by brute force and check the selected
        // permutation attains the pool's best min-distance
        let base = digits(8);
        let seed = 7;
        let pool_size = 50;
        let perms = generate_permutations(&base, 3, pool_size, seed).unwrap();
        let prior = &perms[..2];
        let mut best = 0;
        for j in 0..pool_size as u64 {
            let mut cand = base.clone();
            cand.shuffle(&mut candidate_rng(seed, 2, j));
            let d = prior
                .iter()
                .map(|p| hamming(p, &cand).unwrap())
                .min()
                .unwrap();
            best = best.max(d);
        }
        let chosen = prior
            .iter()
            .map(|p| hamming(p, &perms[2]).unwrap())
            .min()
            .unwrap();
        assert_eq!(chosen, best);
    }

    #[test]
    fn permutation_request_limits() {
        let base = labels(&["a", "b"]);
        assert!(generate_permutations(&base, 3, 10, 0).is_err());
        assert!(generate_permutations(&base, 0, 10, 0).is_err());
        assert!(generate_permutations(&labels(&["a", "a"]), 1, 10, 0).is_err());
    }

    fn traj(donors: &[&str], steps: &[&[(&str, f64)]]) -> Trajectory {
        Trajectory {
            donors: labels(donors),
            ce: steps
                .iter()
                .map(|s| s.iter().map(|(k, v)| (k.to_string(), *v)).collect())
                .collect(),
        }
    }

    #[test]
    fn single_delta_synergy() {
        let t = traj(&["a", "b"], &[&[("x", 0.50)], &[("x", 0.45)]]);
        let m = synergy_matrix(&[t]).unwrap();
        let b = m.donors.iter().position(|d| d == "b").unwrap();
        let x = m.domains.iter().position(|e| e == "x").unwrap();
        assert_abs_diff_eq!(m.mean(b, x).unwrap(), 0.05, epsilon = 1e-12);
        assert_eq!(m.counts[b][x], 1);
        let a = m.donors.iter().position(|d| d == "a").unwrap();
        assert_eq!(m.mean(a, x), None);
    }

    #[test]
    fn rising_ce_gives_negative_entry() {
        let t = traj(&["a", "b"], &[&[("x", 0.50)], &[("x", 0.53)]]);
        let m = synergy_matrix(&[t]).unwrap();
        let b = m.donors.iter().position(|d| d == "b").unwrap();
        assert_abs_diff_eq!(m.mean(b, 0).unwrap(), -0.03, epsilon = 1e-12);
    }

    #[test]
    fn synergy_is_linear_in_ce() {
        let t = traj(
            &["a", "b", "c"],
            &[
                &[("x", 0.9), ("y", 1.1)],
                &[("x", 0.8), ("y", 1.0)],
                &[("x", 0.76), ("y", 1.02)],
            ],
        );
        let scaled = Trajectory {
            donors: t.donors.clone(),
            ce: t
                .ce
                .iter()
                .map(|s| s.iter().map(|(k, v)| (k.clone(), 3.0 * v)).collect())
                .collect(),
        };
        let m1 = synergy_matrix(&[t]).unwrap();
        let m2 = synergy_matrix(&[scaled]).unwrap();
        for i in 0..m1.donors.len() {
            for j in 0..m1.domains.len() {
                match (m1.mean(i, j), m2.mean(i, j)) {
                    (Some(a), Some(b)) => assert_abs_diff_eq!(3.0 * a, b, epsilon = 1e-12),
                    (None, None) => {}
                    other => panic!("count mismatch: {other:?}"),
                }
            }
        }
    }

    #[test]
    fn synergy_rejects_inconsistent_domains() {
        let t = traj(&["a", "b"], &[&[("x", 0.5)], &[("y", 0.4)]]);
        assert!(synergy_matrix(&[t]).is_err());
        let short = traj(&["a"], &[&[("x", 0.5)]]);
        assert!(synergy_matrix(&[short]).is_err());
    }

    #[test]
    fn block_means_and_strengths() {
        // donors/domains x,y in group "s"; z in group "o"; plant
        // in-block gain 0.07 and cross-block -0.01
        let t1 = traj(
            &["x", "y", "z"],
            &[
                &[("x", 1.00), ("y", 1.00), ("z", 1.00)],
                // y joins: helps x and y by 0.07, hurts z by 0.01
                &[("x", 0.93), ("y", 0.93), ("z", 1.01)],
                // z joins: hurts x and y by 0.01, helps z by 0.07
                &[("x", 0.94), ("y", 0.94), ("z", 0.94)],
            ],
        );
        let m = synergy_matrix(&[t1]).unwrap();
        let mut groups = BTreeMap::new();
        groups.insert("s".to_string(), labels(&["x", "y"]));
        groups.insert("o".to_string(), labels(&["z"]));
        let blocks = m.block_means(&groups);
        assert_abs_diff_eq!(
            blocks[&("s".to_string(), "s".to_string())],
            0.07,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            blocks[&("s".to_string(), "o".to_string())],
            -0.01,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            blocks[&("o".to_string(), "o".to_string())],
            0.07,
            epsilon = 1e-12
        );
        let y = m.donors.iter().position(|d| d == "y").unwrap();
        // y's off-diagonal strength: helps x (+0.07), hurts z (-0.01)
        assert_abs_diff_eq!(m.donor_strength(y), 0.06, epsilon = 1e-12);
        let z_dom = m.domains.iter().position(|e| e == "z").unwrap();
        // z receives -0.01 from donor y (donor z excluded)
        assert_abs_diff_eq!(m.receiver_susceptibility(z_dom), -0.01, epsilon = 1e-12);
    }

    fn row(n: f64, k: u32, domain: &str, order: &str, ce: f64) -> MeasurementRow {
        MeasurementRow {
            method: "average".into(),
            n,
            k,
            domain: domain.into(),
            group_id: order.into(),
            ce,
        }
    }

    #[test]
    fn dispersion_two_orders() {
        let mut t = MeasurementTable::default();
        t.rows.push(row(32.0, 2, "d", "p1", 0.4));
        t.rows.push(row(32.0, 2, "d", "p2", 0.6));
        let (recs, warns) = order_dispersion(&t);
        assert!(warns.is_empty());
        let r = &recs[0];
        assert_abs_diff_eq!(r.mean, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.std, 0.2 / 2f64.sqrt(), epsilon = 1e-9);
        assert_abs_diff_eq!(r.range, 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(r.cv, r.std / 0.5, epsilon = 1e-12);
    }

    #[test]
    fn dispersion_identical_orders_and_skips() {
        let mut t = MeasurementTable::default();
        for order in ["p1", "p2", "p3"] {
            t.rows.push(row(3.0, 1, "d", order, 0.7));
        }
        t.rows.push(row(7.0, 1, "d", "only", 0.5));
        let (recs, warns) = order_dispersion(&t);
        assert_eq!(recs.len(), 1);
        assert!(recs[0].std < 1e-12);
        assert_eq!(recs[0].range, 0.0);
        assert!(recs[0].cv < 1e-12);
        assert_eq!(warns.len(), 1);
        assert!(warns[0].contains("single order"));
    }

    #[test]
    fn dispersion_macro_is_domain_mean_and_range_bounds_std() {
        let mut t = MeasurementTable::default();
        // macro CE per order: p1 -> 0.5, p2 -> 0.59
        t.rows.push(row(32.0, 1, "a", "p1", 0.4));
        t.rows.push(row(32.0, 1, "b", "p1", 0.6));
        t.rows.push(row(32.0, 1, "a", "p2", 0.5));
        t.rows.push(row(32.0, 1, "b", "p2", 0.68));
        let (recs, _) = order_dispersion(&t);
        assert_abs_diff_eq!(recs[0].mean, 0.545, epsilon = 1e-12);
        assert_abs_diff_eq!(recs[0].range, 0.09, epsilon = 1e-12);
        assert!(recs[0].range >= recs[0].std);
    }
}
