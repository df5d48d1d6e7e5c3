//! Forecasting and budget planning from a few early measurements:
//! closed-form three-point inversion of the floor+tail curve, an
//! early-stop rule for the number of experts, and a combined plan report.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_curve, WeightsMode};
use crate::law::{eval_curve, experts_to_floor, marginal_gain, CurveParams};

/// Exactly three (k, CE) measurements, canonically at k in {1, 2, 4}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreePointInput {
    pub samples: [(u32, f64); 3],
}

impl ThreePointInput {
    pub fn new(samples: [(u32, f64); 3]) -> ThreePointInput {
        ThreePointInput { samples }
    }

    /// Samples sorted by k.
    fn sorted(&self) -> [(u32, f64); 3] {
        let mut s = self.samples;
        s.sort_by_key(|p| p.0);
        s
    }

    fn validate(&self) -> Result<()> {
        let s = self.sorted();
        if s[0].0 == s[1].0 || s[1].0 == s[2].0 {
            return Err(Error::InvalidInput(
                "three-point fit needs three distinct k values".into(),
            ));
        }
        for &(k, ce) in &s {
            if k < 1 {
                return Err(Error::InvalidInput("k must be >= 1".into()));
            }
            if !(ce > 0.0) || !ce.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "CE at k={k} must be a positive finite number, got {ce}"
                )));
            }
        }
        Ok(())
    }
}

/// How the recommended stopping point is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// Stop at the first k where (L(k) - L(k+1)) / L(k) < delta.
    #[default]
    RelativeGain,
    /// Stop at the first k where L(k) - L(k+1) < delta.
    AbsoluteGain,
}

impl StopRule {
    pub fn describe(&self, delta: f64) -> String {
        match self {
            StopRule::RelativeGain => format!(
                "k_star = min {{ k >= 1 : (L(k) - L(k+1)) / L(k) < {delta} }}, \
                 computed on the fitted curve"
            ),
            StopRule::AbsoluteGain => format!(
                "k_star = min {{ k >= 1 : L(k) - L(k+1) < {delta} }}, \
                 computed on the fitted curve"
            ),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PlanReport {
    pub fitted: CurveParams,
    /// Forecast CE per k over the requested range.
    pub forecast: Vec<(u32, f64)>,
    pub k_star: u32,
    pub k_epsilon: u32,
    pub delta: f64,
    pub epsilon: f64,
    /// Human-readable statement of the stopping rule applied.
    pub rule: String,
}

/// Inverts L(k) = L_inf + A/(k+b) from measurements at k = 1, 2, 4.
///
/// On the canonical grid the system solves in closed form:
/// r = (L1-L2)/(L2-L4), b = (4-2r)/(2r-1), A = (L1-L2)(1+b)(2+b),
/// L_inf = L1 - A/(1+b). When the algebraic b is negative or r <= 1/2
/// (possible under noise), or when the grid is not {1, 2, 4}, falls back
/// to the constrained grid fit on the three points.
pub fn three_point_fit(input: &ThreePointInput) -> Result<CurveParams> {
    input.validate()?;
    let s = input.sorted();
    if !(s[0].1 > s[1].1 && s[1].1 > s[2].1) {
        return Err(Error::InvalidInput(
            "curve not in diminishing-returns regime: CE must strictly decrease over the three k"
                .into(),
        ));
    }
    if [s[0].0, s[1].0, s[2].0] == [1, 2, 4] {
        let (l1, l2, l4) = (s[0].1, s[1].1, s[2].1);
        let r = (l1 - l2) / (l2 - l4);
        if r > 0.5 {
            let b = (4.0 - 2.0 * r) / (2.0 * r - 1.0);
            if b >= 0.0 {
                let a = (l1 - l2) * (1.0 + b) * (2.0 + b);
                let l_inf = l1 - a / (1.0 + b);
                return Ok(CurveParams::new(l_inf, a, b));
            }
        }
    }
    let (params, _) = fit_curve(&s, WeightsMode::Uniform, false)?
        .curve_params()
        .expect("curve fit returns curve params");
    Ok(params)
}

/// First k at which the marginal gain from one more expert drops below
/// `delta` under `rule`, capped at `k_max`.
pub fn recommend_k_with_rule(
    p: &CurveParams,
    delta: f64,
    k_max: u32,
    rule: StopRule,
) -> Result<u32> {
    if !(delta > 0.0) {
        return Err(Error::InvalidInput("delta must be > 0".into()));
    }
    let k_max = k_max.max(1);
    for k in 1..k_max {
        let gain = marginal_gain(p, k);
        let stat = match rule {
            StopRule::RelativeGain => gain / eval_curve(p, k, None),
            StopRule::AbsoluteGain => gain,
        };
        if stat < delta {
            return Ok(k);
        }
    }
    Ok(k_max)
}

/// `recommend_k_with_rule` under the default relative-gain rule.
pub fn recommend_k(p: &CurveParams, delta: f64, k_max: u32) -> Result<u32> {
    recommend_k_with_rule(p, delta, k_max, StopRule::RelativeGain)
}

/// Fits the three points, forecasts CE over `k_range`, and derives the
/// stopping point and the experts-to-floor budget.
pub fn plan(
    input: &ThreePointInput,
    delta: f64,
    epsilon: f64,
    k_range: std::ops::RangeInclusive<u32>,
    rule: StopRule,
) -> Result<PlanReport> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput("epsilon must be > 0".into()));
    }
    let fitted = three_point_fit(input)?;
    let k_max = *k_range.end();
    let forecast: Vec<(u32, f64)> = k_range
        .filter(|&k| k >= 1)
        .map(|k| (k, eval_curve(&fitted, k, None)))
        .collect();
    if forecast.is_empty() {
        return Err(Error::InvalidInput("empty forecast range".into()));
    }
    let k_star = recommend_k_with_rule(&fitted, delta, k_max, rule)?;
    let k_epsilon = experts_to_floor(fitted.a, fitted.b, epsilon);
    Ok(PlanReport {
        fitted,
        forecast,
        k_star,
        k_epsilon,
        delta,
        epsilon,
        rule: rule.describe(delta),
    })
}
