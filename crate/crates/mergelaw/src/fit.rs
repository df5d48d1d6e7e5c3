//! Weighted least-squares fitters for the floor+tail law family.
//!
//! All models here are linear in their amplitude parameters once the
//! offset/exponent parameters are fixed, so every fit is separable: an
//! inner (weighted) linear solve wrapped in an outer search over the few
//! nonlinear parameters — a grid plus golden-section for one dimension,
//! a multi-start simplex for the joint (beta, gamma, b0) search. This
//! keeps the fits deterministic and robust to initialization.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::law::{BoundedTermParams, CurveParams, JointParams};
use crate::optim::{golden_section, nelder_mead};
use crate::table::MeasurementTable;

/// Fit weighting scheme. Proportional-to-k mirrors the ~1/k contraction
/// of measurement variance across k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum WeightsMode {
    Uniform,
    #[default]
    ProportionalToK,
}

/// Across-order dispersion tail `std(k) = c0 + c1/(k+b)` with b on a
/// coarse grid in [0, 2].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionParams {
    pub c0: f64,
    pub c1: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model")]
pub enum FitParams {
    #[serde(rename = "curve")]
    Curve {
        #[serde(flatten)]
        params: CurveParams,
        #[serde(skip_serializing_if = "Option::is_none")]
        bounded: Option<BoundedTermParams>,
    },
    #[serde(rename = "joint")]
    Joint(JointParams),
    #[serde(rename = "variance")]
    Variance(JointParams),
    #[serde(rename = "dispersion")]
    Dispersion(DispersionParams),
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub params: FitParams,
    /// Unweighted R^2 on the fitted grid points, even for weighted fits.
    pub r_squared: f64,
    /// Per-point observed - fitted.
    pub residuals: Vec<f64>,
    pub weighted: bool,
    /// Degeneracy and convergence remarks.
    pub notes: Vec<String>,
}

/// 1 - SS_res/SS_tot.
pub fn r_squared(observed: &[f64], fitted: &[f64]) -> Result<f64> {
    if observed.len() != fitted.len() || observed.len() < 2 {
        return Err(Error::InvalidInput(
            "r_squared needs equal-length series of >= 2 points".into(),
        ));
    }
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let ss_tot: f64 = observed.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Numerical("zero total variance in observations".into()));
    }
    let ss_res: f64 = observed
        .iter()
        .zip(fitted)
        .map(|(y, f)| (y - f).powi(2))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// R^2 for reports: a perfectly reproduced constant series counts as 1.
fn r_squared_report(observed: &[f64], fitted: &[f64]) -> f64 {
    match r_squared(observed, fitted) {
        Ok(r2) => r2,
        Err(_) => {
            let ss_res: f64 = observed
                .iter()
                .zip(fitted)
                .map(|(y, f)| (y - f).powi(2))
                .sum();
            if ss_res < 1e-18 {
                1.0
            } else {
                f64::NEG_INFINITY
            }
        }
    }
}

fn weights_for(ks: &[u32], mode: WeightsMode) -> Vec<f64> {
    let raw: Vec<f64> = match mode {
        WeightsMode::Uniform => vec![1.0; ks.len()],
        WeightsMode::ProportionalToK => ks.iter().map(|&k| k as f64).collect(),
    };
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / sum).collect()
}

/// Weighted least squares with optional nonnegativity on flagged columns:
/// solve, clip negative flagged coefficients to zero, re-solve the rest.
fn solve_wls(columns: &[Vec<f64>], y: &[f64], w: &[f64], nonneg: &[bool]) -> Vec<f64> {
    let p = columns.len();
    let mut active: Vec<bool> = vec![true; p];
    loop {
        let cols: Vec<usize> = (0..p).filter(|&j| active[j]).collect();
        let coeffs = if cols.is_empty() {
            Vec::new()
        } else {
            let m = y.len();
            let mut design = DMatrix::zeros(m, cols.len());
            let mut rhs = DVector::zeros(m);
            for i in 0..m {
                let sw = w[i].sqrt();
                for (jj, &j) in cols.iter().enumerate() {
                    design[(i, jj)] = sw * columns[j][i];
                }
                rhs[i] = sw * y[i];
            }
            let svd = design.svd(true, true);
            let sol = svd.solve(&rhs, 1e-12).unwrap_or_else(|_| DVector::zeros(cols.len()));
            sol.iter().copied().collect::<Vec<f64>>()
        };
        let mut full = vec![0.0; p];
        for (jj, &j) in cols.iter().enumerate() {
            full[j] = coeffs[jj];
        }
        let violated: Vec<usize> = (0..p)
            .filter(|&j| nonneg[j] && active[j] && full[j] < 0.0)
            .collect();
        if violated.is_empty() {
            return full;
        }
        for j in violated {
            active[j] = false;
        }
    }
}

fn weighted_sse(y: &[f64], fitted: &[f64], w: &[f64]) -> f64 {
    y.iter()
        .zip(fitted)
        .zip(w)
        .map(|((a, b), wi)| wi * (a - b).powi(2))
        .sum()
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in input".into()));
    }
    Ok(())
}

const B_GRID_MAX: f64 = 5.0;
const EXP_MAX: f64 = 3.0;

/// Fits `L(k) = L_inf + A/(k+b)` (optionally plus `D*k/(k+q)`).
pub fn fit_curve(
    points: &[(u32, f64)],
    weights: WeightsMode,
    bounded_term: bool,
) -> Result<FitReport> {
    let min_points = if bounded_term { 5 } else { 3 };
    if points.len() < min_points {
        return Err(Error::InvalidInput(format!(
            "fit_curve needs >= {min_points} points, got {}",
            points.len()
        )));
    }
    let ks: Vec<u32> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    check_finite(&ys)?;
    {
        let mut sorted = ks.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() < 2 {
            return Err(Error::Numerical("degenerate design: all k equal".into()));
        }
    }
    let w = weights_for(&ks, weights);

    if bounded_term {
        return fit_curve_bounded(&ks, &ys, &w, weights);
    }

    // columns for a given b; coefficients are (L_inf, A) with A >= 0
    let solve_at = |b: f64| -> (Vec<f64>, f64) {
        let ones = vec![1.0; ks.len()];
        let tail: Vec<f64> = ks.iter().map(|&k| 1.0 / (k as f64 + b)).collect();
        let coeffs = solve_wls(&[ones, tail.clone()], &ys, &w, &[false, true]);
        let fitted: Vec<f64> = tail.iter().map(|t| coeffs[0] + coeffs[1] * t).collect();
        let sse = weighted_sse(&ys, &fitted, &w);
        (coeffs, sse)
    };

    let mut best_b = 0.0;
    let mut best_sse = f64::INFINITY;
    let mut b = 0.0;
    while b <= B_GRID_MAX + 1e-9 {
        let (_, sse) = solve_at(b);
        if sse < best_sse {
            best_sse = sse;
            best_b = b;
        }
        b += 0.05;
    }
    let lo = (best_b - 0.05).max(0.0);
    let hi = (best_b + 0.05).min(B_GRID_MAX);
    let b = golden_section(|b| solve_at(b).1, lo, hi, 1e-12);
    // the grid point may beat the refined bracket edge cases
    let b = if solve_at(b).1 <= best_sse { b } else { best_b };

    let (coeffs, _) = solve_at(b);
    let params = CurveParams::new(coeffs[0], coeffs[1], b);
    let fitted: Vec<f64> = ks
        .iter()
        .map(|&k| params.l_inf + params.a / (k as f64 + params.b))
        .collect();
    let residuals: Vec<f64> = ys.iter().zip(&fitted).map(|(y, f)| y - f).collect();
    Ok(FitReport {
        params: FitParams::Curve {
            params,
            bounded: None,
        },
        r_squared: r_squared_report(&ys, &fitted),
        residuals,
        weighted: weights == WeightsMode::ProportionalToK,
        notes: Vec::new(),
    })
}

fn fit_curve_bounded(ks: &[u32], ys: &[f64], w: &[f64], weights: WeightsMode) -> Result<FitReport> {
    // coefficients (L_inf, A, D) with A, D >= 0, given (b, q)
    let solve_at = |b: f64, q: f64| -> (Vec<f64>, f64) {
        let ones = vec![1.0; ks.len()];
        let tail: Vec<f64> = ks.iter().map(|&k| 1.0 / (k as f64 + b)).collect();
        let bump: Vec<f64> = ks.iter().map(|&k| k as f64 / (k as f64 + q)).collect();
        let coeffs = solve_wls(
            &[ones, tail.clone(), bump.clone()],
            ys,
            w,
            &[false, true, true],
        );
        let fitted: Vec<f64> = tail
            .iter()
            .zip(&bump)
            .map(|(t, u)| coeffs[0] + coeffs[1] * t + coeffs[2] * u)
            .collect();
        (coeffs, weighted_sse(ys, &fitted, w))
    };

    let mut best = (0.0, 1.0, f64::INFINITY);
    let mut b = 0.0;
    while b <= B_GRID_MAX + 1e-9 {
        let mut q = 0.25;
        while q <= 5.0 + 1e-9 {
            let (_, sse) = solve_at(b, q);
            if sse < best.2 {
                best = (b, q, sse);
            }
            q += 0.25;
        }
        b += 0.1;
    }
    let clamp = |x: &[f64]| {
        (
            x[0].clamp(0.0, B_GRID_MAX),
            x[1].clamp(1e-6, 10.0),
        )
    };
    let (x, _) = nelder_mead(
        |x| {
            let (b, q) = clamp(x);
            solve_at(b, q).1
        },
        &[best.0, best.1],
        0.05,
        400,
        1e-14,
    );
    let (b, q) = clamp(&x);
    let (coeffs, _) = solve_at(b, q);
    let params = CurveParams::new(coeffs[0], coeffs[1], b);
    let extra = BoundedTermParams { d: coeffs[2], q };
    let fitted: Vec<f64> = ks
        .iter()
        .map(|&k| crate::law::eval_curve(&params, k, Some(&extra)))
        .collect();
    let residuals: Vec<f64> = ys.iter().zip(&fitted).map(|(y, f)| y - f).collect();
    Ok(FitReport {
        params: FitParams::Curve {
            params,
            bounded: Some(extra),
        },
        r_squared: r_squared_report(ys, &fitted),
        residuals,
        weighted: weights == WeightsMode::ProportionalToK,
        notes: Vec::new(),
    })
}

/// Fits the joint law over (N, k) points: Lstar + B N^-beta + A0 N^-gamma/(k+b0).
///
/// Inner weighted linear solve for (Lstar, B, A0) given (beta, gamma, b0);
/// outer simplex search multi-started from a coarse grid. `variance_mode`
/// additionally forces Lstar >= 0 (a variance floor cannot be negative).
fn fit_joint_impl(
    points: &[(f64, u32, f64)],
    weights: WeightsMode,
    variance_mode: bool,
) -> Result<FitReport> {
    let ns: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ks: Vec<u32> = points.iter().map(|p| p.1).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.2).collect();
    check_finite(&ns)?;
    check_finite(&ys)?;
    {
        let mut un: Vec<u64> = ns.iter().map(|n| n.to_bits()).collect();
        un.sort_unstable();
        un.dedup();
        let mut uk = ks.clone();
        uk.sort_unstable();
        uk.dedup();
        if un.len() < 2 || uk.len() < 3 {
            return Err(Error::InvalidInput(format!(
                "joint fit needs >= 2 distinct N and >= 3 distinct k, got {} and {}",
                un.len(),
                uk.len()
            )));
        }
    }
    let w = weights_for(&ks, weights);
    let nonneg = [variance_mode, true, true];

    let solve_at = |beta: f64, gamma: f64, b0: f64| -> (Vec<f64>, f64) {
        let ones = vec![1.0; ns.len()];
        let floor_col: Vec<f64> = ns.iter().map(|&n| n.powf(-beta)).collect();
        let tail_col: Vec<f64> = ns
            .iter()
            .zip(&ks)
            .map(|(&n, &k)| n.powf(-gamma) / (k as f64 + b0))
            .collect();
        let coeffs = solve_wls(&[ones, floor_col.clone(), tail_col.clone()], &ys, &w, &nonneg);
        let fitted: Vec<f64> = floor_col
            .iter()
            .zip(&tail_col)
            .map(|(f, t)| coeffs[0] + coeffs[1] * f + coeffs[2] * t)
            .collect();
        (coeffs, weighted_sse(&ys, &fitted, &w))
    };

    let clamp = |x: &[f64]| {
        (
            x[0].clamp(0.0, EXP_MAX),
            x[1].clamp(0.0, EXP_MAX),
            x[2].clamp(0.0, B_GRID_MAX),
        )
    };
    let objective = |x: &[f64]| {
        let (beta, gamma, b0) = clamp(x);
        solve_at(beta, gamma, b0).1
    };

    // coarse grid of starts
    let mut starts: Vec<([f64; 3], f64)> = Vec::new();
    for ib in 0..=10 {
        for ig in 0..=10 {
            for ibo in 0..=8 {
                let x = [ib as f64 * 0.1, ig as f64 * 0.1, ibo as f64 * 0.25];
                let sse = objective(&x);
                starts.push((x, sse));
            }
        }
    }
    starts.sort_by(|a, b| {
        a.1.partial_cmp(&b.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal))
    });

    let mut best: (Vec<f64>, f64) = (starts[0].0.to_vec(), starts[0].1);
    for (x0, _) in starts.iter().take(5) {
        let (x, fx) = nelder_mead(objective, x0, 0.05, 600, 1e-16);
        if fx < best.1 {
            best = (x, fx);
        }
    }
    // polish from the winner with a tighter simplex
    let (x, fx) = nelder_mead(objective, &best.0, 0.002, 600, 1e-18);
    if fx < best.1 {
        best = (x, fx);
    }

    // cyclic 1-D refinement handles boundary-clamped coordinates the
    // simplex can stall on (e.g. b0 pinned at zero)
    let limits = [(0.0, EXP_MAX), (0.0, EXP_MAX), (0.0, B_GRID_MAX)];
    for _ in 0..3 {
        for i in 0..3 {
            let mut x = best.0.clone();
            let (lo, hi) = limits[i];
            let bracket_lo = (x[i] - 0.05).max(lo);
            let bracket_hi = (x[i] + 0.05).min(hi);
            let xi = golden_section(
                |v| {
                    x[i] = v;
                    objective(&x)
                },
                bracket_lo,
                bracket_hi,
                1e-12,
            );
            x[i] = xi;
            let fx = objective(&x);
            if fx < best.1 {
                best = (x, fx);
            }
        }
    }

    let (beta, gamma, b0) = clamp(&best.0);
    let (coeffs, _) = solve_at(beta, gamma, b0);
    let params = JointParams::new(coeffs[0], coeffs[1], beta, coeffs[2], gamma, b0);
    let fitted: Vec<f64> = points
        .iter()
        .map(|&(n, k, _)| crate::law::eval_joint(&params, n, k))
        .collect();
    let residuals: Vec<f64> = ys.iter().zip(&fitted).map(|(y, f)| y - f).collect();
    let mut notes = Vec::new();
    if params.b_coeff <= 1e-12 {
        notes.push("floor coefficient B at zero: beta unidentifiable".into());
    }
    if params.a0 <= 1e-12 {
        notes.push("tail amplitude A0 at zero: gamma and b0 unidentifiable".into());
    }
    Ok(FitReport {
        params: if variance_mode {
            FitParams::Variance(params)
        } else {
            FitParams::Joint(params)
        },
        r_squared: r_squared_report(&ys, &fitted),
        residuals,
        weighted: weights == WeightsMode::ProportionalToK,
        notes,
    })
}

/// Fits the joint mean law to (N, k, mean CE) points.
pub fn fit_joint(points: &[(f64, u32, f64)], weights: WeightsMode) -> Result<FitReport> {
    fit_joint_impl(points, weights, false)
}

/// Computes per-(N, k) sample variances across `group_id` and fits the
/// variance analogue of the joint law, unweighted.
pub fn fit_variance(table: &MeasurementTable) -> Result<FitReport> {
    use std::collections::BTreeMap;
    let mut cells: BTreeMap<(u64, u32), (f64, Vec<f64>)> = BTreeMap::new();
    for r in &table.rows {
        cells
            .entry((r.n.to_bits(), r.k))
            .or_insert((r.n, Vec::new()))
            .1
            .push(r.ce);
    }
    let mut points = Vec::new();
    for ((_, k), (n, values)) in cells {
        if values.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "variance cell (N={n}, k={k}) has {} group(s); need >= 2",
                values.len()
            )));
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var =
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
        points.push((n, k, var));
    }
    fit_joint_impl(&points, WeightsMode::Uniform, true)
}

/// Fits `std(k) = c0 + c1/(k+b)` by grid search over b in [0, 2] (step
/// 0.05) with ordinary least squares for (c0, c1).
pub fn fit_dispersion(std_by_k: &[(u32, f64)]) -> Result<FitReport> {
    if std_by_k.len() < 3 {
        return Err(Error::InvalidInput(
            "dispersion fit needs >= 3 points".into(),
        ));
    }
    let ks: Vec<u32> = std_by_k.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = std_by_k.iter().map(|p| p.1).collect();
    check_finite(&ys)?;
    let w = vec![1.0 / ys.len() as f64; ys.len()];

    let solve_at = |b: f64| -> (Vec<f64>, f64) {
        let ones = vec![1.0; ks.len()];
        let tail: Vec<f64> = ks.iter().map(|&k| 1.0 / (k as f64 + b)).collect();
        let coeffs = solve_wls(&[ones, tail.clone()], &ys, &w, &[false, true]);
        let fitted: Vec<f64> = tail.iter().map(|t| coeffs[0] + coeffs[1] * t).collect();
        (coeffs, weighted_sse(&ys, &fitted, &w))
    };

    let mut best = (0.0, f64::INFINITY);
    for i in 0..=40 {
        let b = i as f64 * 0.05;
        let (_, sse) = solve_at(b);
        if sse < best.1 {
            best = (b, sse);
        }
    }
    let (coeffs, _) = solve_at(best.0);
    let params = DispersionParams {
        c0: coeffs[0],
        c1: coeffs[1],
        b: best.0,
    };
    let fitted: Vec<f64> = ks
        .iter()
        .map(|&k| params.c0 + params.c1 / (k as f64 + params.b))
        .collect();
    let residuals: Vec<f64> = ys.iter().zip(&fitted).map(|(y, f)| y - f).collect();
    Ok(FitReport {
        params: FitParams::Dispersion(params),
        r_squared: r_squared_report(&ys, &fitted),
        residuals,
        weighted: false,
        notes: Vec::new(),
    })
}

impl FitReport {
    pub fn curve_params(&self) -> Option<(CurveParams, Option<BoundedTermParams>)> {
        match &self.params {
            FitParams::Curve { params, bounded } => Some((*params, *bounded)),
            _ => None,
        }
    }

    pub fn joint_params(&self) -> Option<JointParams> {
        match &self.params {
            FitParams::Joint(p) | FitParams::Variance(p) => Some(*p),
            _ => None,
        }
    }

    pub fn dispersion_params(&self) -> Option<DispersionParams> {
        match &self.params {
            FitParams::Dispersion(p) => Some(*p),
            _ => None,
        }
    }
}
