//! The floor+tail merging law and derived planning quantities.
//!
//! Per-size form: `L(k) = L_inf + A / (k + b)`.
//! Joint form over model size N (in billions) and expert count k:
//! `L(N, k) = L_star + B * N^-beta + A0 * N^-gamma / (k + b0)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-curve parameters of `L(k) = L_inf + A/(k+b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveParams {
    #[serde(rename = "L_inf")]
    pub l_inf: f64,
    #[serde(rename = "A")]
    pub a: f64,
    pub b: f64,
}

impl CurveParams {
    pub fn new(l_inf: f64, a: f64, b: f64) -> CurveParams {
        CurveParams { l_inf, a, b }
    }
}

/// Joint (N, k) parameters of Lstar + B N^-beta + A0 N^-gamma / (k + b0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointParams {
    #[serde(rename = "L_star")]
    pub l_star: f64,
    #[serde(rename = "B")]
    pub b_coeff: f64,
    pub beta: f64,
    #[serde(rename = "A0")]
    pub a0: f64,
    pub gamma: f64,
    pub b0: f64,
}

impl JointParams {
    pub fn new(l_star: f64, b_coeff: f64, beta: f64, a0: f64, gamma: f64, b0: f64) -> JointParams {
        JointParams {
            l_star,
            b_coeff,
            beta,
            a0,
            gamma,
            b0,
        }
    }

    /// Floor at size N: L_star + B N^-beta.
    pub fn floor(&self, n: f64) -> f64 {
        self.l_star + self.b_coeff * n.powf(-self.beta)
    }

    /// Tail amplitude at size N: A0 N^-gamma.
    pub fn tail(&self, n: f64) -> f64 {
        self.a0 * n.powf(-self.gamma)
    }

    /// The per-size curve this joint law induces at model size N.
    pub fn curve_at(&self, n: f64) -> CurveParams {
        CurveParams::new(self.floor(n), self.tail(n), self.b0)
    }
}

/// Bounded interference correction `D * k / (k + q)` occasionally needed
/// for non-monotone late-k behavior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundedTermParams {
    #[serde(rename = "D")]
    pub d: f64,
    pub q: f64,
}

/// `L_inf + A/(k+b)` plus the optional bounded term.
pub fn eval_curve(p: &CurveParams, k: u32, extra: Option<&BoundedTermParams>) -> f64 {
    assert!(k >= 1, "k must be >= 1");
    let k = k as f64;
    let mut v = p.l_inf + p.a / (k + p.b);
    if let Some(e) = extra {
        v += e.d * k / (k + e.q);
    }
    v
}

/// Joint law at model size `n` (billions) and expert count `k`.
pub fn eval_joint(p: &JointParams, n: f64, k: u32) -> f64 {
    assert!(n > 0.0, "N must be > 0");
    assert!(k >= 1, "k must be >= 1");
    p.floor(n) + p.tail(n) / (k as f64 + p.b0)
}

/// L(k) - L(k+1) = A / ((k+b)(k+1+b)), exactly.
pub fn marginal_gain(p: &CurveParams, k: u32) -> f64 {
    assert!(k >= 1, "k must be >= 1");
    let k = k as f64;
    p.a / ((k + p.b) * (k + 1.0 + p.b))
}

/// Smallest expert budget whose tail contribution is within `epsilon` of
/// the floor: max(1, ceil(A/eps - b)).
pub fn experts_to_floor(a_of_n: f64, b: f64, epsilon: f64) -> u32 {
    assert!(epsilon > 0.0, "epsilon must be > 0");
    assert!(a_of_n >= 0.0, "tail amplitude must be >= 0");
    let raw = (a_of_n / epsilon - b).ceil();
    if raw < 1.0 {
        1
    } else {
        raw as u32
    }
}

/// Fractional-return summary of a measured CE-vs-k series.
#[derive(Debug, Clone, Serialize)]
pub struct FractionalReturn {
    /// Monotone envelope E(k): running minimum of the series.
    pub envelope: Vec<f64>,
    /// R(k) = (E(1) - E(k)) / (E(1) - E(k_max)); all 1 for a flat envelope.
    pub r: Vec<f64>,
}

impl FractionalReturn {
    /// Smallest k (1-based) with R(k) >= q.
    pub fn k_target(&self, q: f64) -> u32 {
        for (i, &r) in self.r.iter().enumerate() {
            if r >= q {
                return (i + 1) as u32;
            }
        }
        self.r.len() as u32
    }
}

/// Computes R(k) from a CE series indexed by k = 1..=k_max.
pub fn fractional_return(ce_series: &[f64]) -> Result<FractionalReturn> {
    if ce_series.len() < 2 {
        return Err(Error::InvalidInput(
            "fractional return needs at least 2 points".into(),
        ));
    }
    let mut envelope = Vec::with_capacity(ce_series.len());
    let mut running = f64::INFINITY;
    for &v in ce_series {
        running = running.min(v);
        envelope.push(running);
    }
    let total = envelope[0] - envelope[envelope.len() - 1];
    let r = if total == 0.0 {
        vec![1.0; envelope.len()]
    } else {
        envelope.iter().map(|&e| (envelope[0] - e) / total).collect()
    };
    Ok(FractionalReturn { envelope, r })
}
