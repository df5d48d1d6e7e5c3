//! Monte-Carlo verification of the second-order loss expansion on
//! synthetic quadratic losses, where the expansion is exact and every
//! predicted quantity has a closed form.
//!
//! World: L(theta0 + d) = L0 + g'd + 1/2 d'Hd, with k task vectors drawn
//! i.i.d. from a distribution with mean mu and covariance Sigma, merged
//! as d = (c/k) sum v_i. Closed forms:
//! floor  = L0 + c g'mu + 1/2 c^2 mu'H mu
//! tail   = 1/2 c^2 Tr(H Sigma)            (mean excess is tail / k)
//! var(k) = c^2 a'Sigma a / k + c^4 Tr((H Sigma)^2) / (2 k^2),
//!          a = g + c H mu (exact for Gaussian draws)

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Deserialize;

use crate::error::{Error, Result};

/// Synthetic quadratic loss landscape plus the task-vector distribution.
#[derive(Debug, Clone)]
pub struct QuadraticWorld {
    pub dim: usize,
    pub l0: f64,
    pub g: DVector<f64>,
    pub h: DMatrix<f64>,
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub c: f64,
}

/// How task vectors are drawn around mu.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampleKind {
    #[default]
    Gaussian,
    /// Componentwise uniform on [-sqrt(3), sqrt(3)] through the same
    /// covariance factor: bounded support, identical mean and covariance.
    BoundedUniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimRecord {
    pub k: u32,
    pub mean_loss: f64,
    pub variance: f64,
    /// Standard error of the mean estimate.
    pub se_mean: f64,
    /// Standard error of the variance estimate (fourth-moment based).
    pub se_var: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub records: Vec<SimRecord>,
}

impl QuadraticWorld {
    pub fn validate(&self) -> Result<()> {
        let d = self.dim;
        if self.g.len() != d
            || self.mu.len() != d
            || self.h.nrows() != d
            || self.h.ncols() != d
            || self.sigma.nrows() != d
            || self.sigma.ncols() != d
        {
            return Err(Error::InvalidInput(
                "world dimensions are inconsistent".into(),
            ));
        }
        let sym = |m: &DMatrix<f64>| -> bool {
            (0..d).all(|i| (0..d).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= 1e-9))
        };
        if !sym(&self.h) {
            return Err(Error::InvalidInput("H must be symmetric".into()));
        }
        if !sym(&self.sigma) {
            return Err(Error::InvalidInput("Sigma must be symmetric".into()));
        }
        Ok(())
    }

    /// Loss at theta0 + d.
    pub fn loss(&self, d: &DVector<f64>) -> f64 {
        self.l0 + self.g.dot(d) + 0.5 * (self.h.clone() * d).dot(d)
    }

    /// Symmetric PSD factor F with F F' = Sigma, via eigendecomposition;
    /// eigenvalues below -1e-10 are rejected, small negatives clamped.
    fn sigma_factor(&self) -> Result<DMatrix<f64>> {
        let eig = SymmetricEigen::new(self.sigma.clone());
        let mut scaled = eig.eigenvectors.clone();
        for (j, &ev) in eig.eigenvalues.iter().enumerate() {
            if ev < -1e-10 {
                return Err(Error::Numerical(format!(
                    "Sigma is not positive semidefinite (eigenvalue {ev})"
                )));
            }
            let s = ev.max(0.0).sqrt();
            for i in 0..self.dim {
                scaled[(i, j)] *= s;
            }
        }
        Ok(scaled)
    }
}

/// L0 + c g'mu + 1/2 c^2 mu'H mu.
pub fn closed_form_floor(world: &QuadraticWorld) -> f64 {
    world.l0
        + world.c * world.g.dot(&world.mu)
        + 0.5 * world.c * world.c * (world.h.clone() * &world.mu).dot(&world.mu)
}

/// 1/2 c^2 Tr(H Sigma); the mean excess over the floor is this over k.
pub fn closed_form_tail(world: &QuadraticWorld) -> f64 {
    0.5 * world.c * world.c * (world.h.clone() * &world.sigma).trace()
}

/// Exact loss variance at count k for Gaussian task vectors:
/// c^2 a'Sigma a / k + c^4 Tr((H Sigma)^2) / (2 k^2), a = g + c H mu.
pub fn closed_form_variance_gaussian(world: &QuadraticWorld, k: u32) -> f64 {
    let a = &world.g + world.c * (world.h.clone() * &world.mu);
    let hs = world.h.clone() * &world.sigma;
    let kf = k as f64;
    let c2 = world.c * world.c;
    c2 * (world.sigma.clone() * &a).dot(&a) / kf
        + c2 * c2 * (hs.clone() * &hs).trace() / (2.0 * kf * kf)
}

/// RNG stream for one (seed, k, trial) cell, independent of how trials
/// are partitioned across workers.
fn trial_rng(seed: u64, k: u32, trial: u64) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in seed
        .to_le_bytes()
        .into_iter()
        .chain(u64::from(k).to_le_bytes())
        .chain(trial.to_le_bytes())
    {
        h ^= u64::from(byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Monte-Carlo estimate of the merged-loss mean and variance per k.
/// Deterministic for a given (world, k_grid, trials, seed).
pub fn simulate(
    world: &QuadraticWorld,
    k_grid: &[u32],
    trials: usize,
    seed: u64,
    kind: SampleKind,
) -> Result<SimResult> {
    world.validate()?;
    if k_grid.is_empty() || k_grid.iter().any(|&k| k < 1) {
        return Err(Error::InvalidInput("k grid must be nonempty with k >= 1".into()));
    }
    if trials < 2 {
        return Err(Error::InvalidInput("need at least 2 trials".into()));
    }
    let factor = world.sigma_factor()?;
    let sqrt3 = 3f64.sqrt();

    let mut records = Vec::with_capacity(k_grid.len());
    for &k in k_grid {
        let mut losses = Vec::with_capacity(trials);
        for trial in 0..trials {
            let mut rng = trial_rng(seed, k, trial as u64);
            let mut sum = DVector::zeros(world.dim);
            for _ in 0..k {
                let z = DVector::from_fn(world.dim, |_, _| match kind {
                    SampleKind::Gaussian => StandardNormal.sample(&mut rng),
                    SampleKind::BoundedUniform => rng.random_range(-sqrt3..sqrt3),
                });
                sum += &world.mu + &factor * z;
            }
            let d = sum * (world.c / k as f64);
            losses.push(world.loss(&d));
        }
        let n = losses.len() as f64;
        let mean = losses.iter().sum::<f64>() / n;
        let m2: f64 = losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let m4: f64 = losses.iter().map(|l| (l - mean).powi(4)).sum::<f64>() / n;
        // Var(sample variance) ~= (m4 - m2^2 (n-3)/(n-1)) / n
        let var_of_var = ((m4 - m2 * m2 * (n - 3.0) / (n - 1.0)) / n).max(0.0);
        records.push(SimRecord {
            k,
            mean_loss: mean,
            variance: m2,
            se_mean: (m2 / n).sqrt(),
            se_var: var_of_var.sqrt(),
            trials,
        });
    }
    Ok(SimResult { records })
}

/// OLS slope of log(variance) on log(k); the i.i.d. theory predicts -1
/// in general and -2 when g + c H mu = 0.
pub fn slope_check(result: &SimResult) -> Result<f64> {
    let pts: Vec<(f64, f64)> = result
        .records
        .iter()
        .map(|r| {
            if r.variance <= 0.0 {
                Err(Error::Numerical(format!(
                    "nonpositive variance estimate at k={}",
                    r.k
                )))
            } else {
                Ok(((r.k as f64).ln(), r.variance.ln()))
            }
        })
        .collect::<Result<_>>()?;
    if pts.len() < 3 {
        return Err(Error::InvalidInput(
            "slope check needs >= 3 k values".into(),
        ));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if den == 0.0 {
        return Err(Error::Numerical("all k equal in slope check".into()));
    }
    Ok(num / den)
}

/// JSON description of a world: dense vectors/matrices, or shorthand.
///
/// `h`/`sigma` accept a dense row-major matrix (array of rows), the
/// string "identity", or {"diagonal": [..]} / {"scaled_identity": s}.
/// `g`/`mu` accept an array or a single scalar broadcast to all
/// coordinates.
#[derive(Debug, Deserialize)]
pub struct WorldSpec {
    pub dim: usize,
    #[serde(default)]
    pub l0: f64,
    pub g: VecSpec,
    pub h: MatSpec,
    pub mu: VecSpec,
    pub sigma: MatSpec,
    #[serde(default = "one")]
    pub c: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum VecSpec {
    Scalar(f64),
    Dense(Vec<f64>),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum MatSpec {
    Named(String),
    Shaped {
        #[serde(default)]
        diagonal: Option<Vec<f64>>,
        #[serde(default)]
        scaled_identity: Option<f64>,
    },
    Dense(Vec<Vec<f64>>),
}

impl VecSpec {
    fn build(&self, dim: usize, name: &str) -> Result<DVector<f64>> {
        match self {
            VecSpec::Scalar(s) => Ok(DVector::from_element(dim, *s)),
            VecSpec::Dense(v) => {
                if v.len() != dim {
                    return Err(Error::InvalidInput(format!(
                        "{name} has length {}, expected {dim}",
                        v.len()
                    )));
                }
                Ok(DVector::from_vec(v.clone()))
            }
        }
    }
}

impl MatSpec {
    fn build(&self, dim: usize, name: &str) -> Result<DMatrix<f64>> {
        match self {
            MatSpec::Named(s) if s == "identity" => Ok(DMatrix::identity(dim, dim)),
            MatSpec::Named(s) => Err(Error::InvalidInput(format!(
                "unknown matrix shorthand {s:?} for {name}"
            ))),
            MatSpec::Shaped {
                diagonal: Some(d), ..
            } => {
                if d.len() != dim {
                    return Err(Error::InvalidInput(format!(
                        "{name} diagonal has length {}, expected {dim}",
                        d.len()
                    )));
                }
                Ok(DMatrix::from_diagonal(&DVector::from_vec(d.clone())))
            }
            MatSpec::Shaped {
                scaled_identity: Some(s),
                ..
            } => Ok(DMatrix::identity(dim, dim) * *s),
            MatSpec::Shaped { .. } => Err(Error::InvalidInput(format!(
                "matrix spec for {name} needs \"diagonal\" or \"scaled_identity\""
            ))),
            MatSpec::Dense(rows) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(Error::InvalidInput(format!(
                        "{name} must be a {dim}x{dim} matrix"
                    )));
                }
                Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
            }
        }
    }
}

impl WorldSpec {
    pub fn build(&self) -> Result<QuadraticWorld> {
        let world = QuadraticWorld {
            dim: self.dim,
            l0: self.l0,
            g: self.g.build(self.dim, "g")?,
            h: self.h.build(self.dim, "H")?,
            mu: self.mu.build(self.dim, "mu")?,
            sigma: self.sigma.build(self.dim, "Sigma")?,
            c: self.c,
        };
        world.validate()?;
        Ok(world)
    }
}

/// Parses a world from its JSON description.
pub fn world_from_json(json: &str) -> Result<QuadraticWorld> {
    let spec: WorldSpec = serde_json::from_str(json)
        .map_err(|e| Error::InvalidInput(format!("bad world JSON: {e}")))?;
    spec.build()
}
