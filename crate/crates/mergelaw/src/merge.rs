//! Task-vector computation and the unified merge rule.
//!
//! All four recipes share the same composition
//! `theta = theta0 + (c/k) * sum_i Psi(v_i)`; they differ only in the
//! per-vector transform `Psi` and the default scale `c`:
//!
//! | method  | Psi(v)                | c   | extras      |
//! |---------|-----------------------|-----|-------------|
//! | Average | v                     | 1.0 |             |
//! | TA      | v                     | 0.8 |             |
//! | TIES    | trim, elect, disjoint | 1.0 | density d   |
//! | DARE    | m .* v / (1 - p)      | 1.0 | drop p, seed|

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{check_compatible, Checkpoint, Tensor};
use crate::error::{Error, Result};

/// Per-tensor difference `expert - base`.
#[derive(Debug, Clone)]
pub struct TaskVector {
    pub source_id: String,
    pub deltas: BTreeMap<String, Tensor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergeKind {
    Average,
    Ta,
    Ties,
    Dare,
}

#[derive(Debug, Clone)]
pub struct MergeRecipe {
    pub kind: MergeKind,
    /// Total scale; the applied coefficients sum to `c`.
    pub c: f64,
    /// TIES trim density: fraction of entries kept per tensor, in (0, 1].
    pub density: f64,
    /// DARE per-element drop probability, in [0, 1).
    pub drop_rate: f64,
    /// DARE mask seed. Streams are bound to (seed, source_id, tensor name).
    pub seed: u64,
    /// TIES only: divide by the per-position count of agreeing entries
    /// instead of k (the original disjoint-mean behavior).
    pub disjoint_mean: bool,
}

impl MergeRecipe {
    pub fn new(kind: MergeKind) -> MergeRecipe {
        let c = match kind {
            MergeKind::Ta => 0.8,
            _ => 1.0,
        };
        MergeRecipe {
            kind,
            c,
            density: 1.0,
            drop_rate: 0.2,
            seed: 0,
            disjoint_mean: false,
        }
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn with_density(mut self, d: f64) -> Self {
        self.density = d;
        self
    }

    pub fn with_drop_rate(mut self, p: f64) -> Self {
        self.drop_rate = p;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.c <= 0.0 {
            return Err(Error::InvalidInput(format!("merge scale c must be > 0, got {}", self.c)));
        }
        if !(0.0..1.0).contains(&self.drop_rate) {
            return Err(Error::InvalidInput(format!(
                "DARE drop rate must be in [0, 1), got {}",
                self.drop_rate
            )));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "TIES density must be in (0, 1], got {}",
                self.density
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MergedModel {
    pub checkpoint: Checkpoint,
    pub recipe: MergeRecipe,
    pub donor_ids: Vec<String>,
    pub k: usize,
}

pub fn task_vector(base: &Checkpoint, expert: &Checkpoint, source_id: &str) -> Result<TaskVector> {
    let report = check_compatible(base, &[expert]);
    if !report.is_ok() {
        return Err(Error::Incompatible(report.describe()));
    }
    let deltas = base
        .tensors
        .iter()
        .map(|(name, b)| {
            let e = &expert.tensors[name];
            let data = e.data.iter().zip(&b.data).map(|(x, y)| x - y).collect();
            (name.clone(), Tensor::new(b.shape.clone(), data))
        })
        .collect();
    Ok(TaskVector {
        source_id: source_id.to_string(),
        deltas,
    })
}

/// One independent RNG stream per (seed, source_id, tensor name), so DARE
/// masks do not depend on expert ordering or parallel schedule.
fn mask_rng(seed: u64, source_id: &str, tensor: &str) -> ChaCha8Rng {
    // FNV-1a over the identifying tuple.
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    eat(&seed.to_le_bytes());
    eat(source_id.as_bytes());
    eat(&[0xff]);
    eat(tensor.as_bytes());
    ChaCha8Rng::seed_from_u64(h)
}

/// Indices of the top-`keep` entries by |value|, ties broken by lower
/// flat index. Returned as a boolean keep-mask.
fn trim_mask(values: &[f32], keep: usize) -> Vec<bool> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        values[b]
            .abs()
            .partial_cmp(&values[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut mask = vec![false; values.len()];
    for &i in idx.iter().take(keep) {
        mask[i] = true;
    }
    mask
}

/// Applies the recipe's per-vector transform `Psi`.
pub fn apply_recipe_transform(
    recipe: &MergeRecipe,
    vectors: &[TaskVector],
) -> Result<Vec<TaskVector>> {
    recipe.validate()?;
    if vectors.is_empty() {
        return Err(Error::InvalidInput("empty task-vector list".into()));
    }
    match recipe.kind {
        MergeKind::Average | MergeKind::Ta => Ok(vectors.to_vec()),
        MergeKind::Dare => {
            let p = recipe.drop_rate;
            let rescale = 1.0 / (1.0 - p);
            let out = vectors
                .iter()
                .map(|v| {
                    let deltas = v
                        .deltas
                        .iter()
                        .map(|(name, t)| {
                            let mut rng = mask_rng(recipe.seed, &v.source_id, name);
                            let data = t
                                .data
                                .iter()
                                .map(|&x| {
                                    // Draw unconditionally to keep the stream
                                    // aligned regardless of p.
                                    let keep = rng.random::<f64>() >= p;
                                    if keep {
                                        (x as f64 * rescale) as f32
                                    } else {
                                        0.0
                                    }
                                })
                                .collect();
                            (name.clone(), Tensor::new(t.shape.clone(), data))
                        })
                        .collect();
                    TaskVector {
                        source_id: v.source_id.clone(),
                        deltas,
                    }
                })
                .collect();
            Ok(out)
        }
        MergeKind::Ties => {
            let mut out = vectors.to_vec();
            // Trim: keep top-ceil(d*n) entries by magnitude, per tensor.
            for v in &mut out {
                for t in v.deltas.values_mut() {
                    let keep = (recipe.density * t.len() as f64).ceil() as usize;
                    let mask = trim_mask(&t.data, keep.min(t.len()));
                    for (x, m) in t.data.iter_mut().zip(&mask) {
                        if !m {
                            *x = 0.0;
                        }
                    }
                }
            }
            // Elect: per-element sign of the sum of trimmed vectors, then
            // Disjoint: zero entries disagreeing with the elected sign.
            let names: Vec<String> = out[0].deltas.keys().cloned().collect();
            for name in &names {
                let n = out[0].deltas[name].len();
                let mut sums = vec![0.0f64; n];
                for v in &out {
                    for (s, &x) in sums.iter_mut().zip(&v.deltas[name].data) {
                        *s += x as f64;
                    }
                }
                for v in &mut out {
                    let t = v.deltas.get_mut(name).unwrap();
                    for (x, &s) in t.data.iter_mut().zip(&sums) {
                        // Zero entries never disagree.
                        if (*x > 0.0 && s < 0.0) || (*x < 0.0 && s > 0.0) {
                            *x = 0.0;
                        }
                    }
                }
            }
            Ok(out)
        }
    }
}

pub fn merge(base: &Checkpoint, experts: &[&Checkpoint], recipe: &MergeRecipe) -> Result<MergedModel> {
    merge_labeled(
        base,
        &experts
            .iter()
            .enumerate()
            .map(|(i, e)| (format!("expert{i}"), *e))
            .collect::<Vec<_>>(),
        recipe,
    )
}

/// Like [`merge`] but with caller-supplied donor labels (DARE masks are
/// bound to these labels).
pub fn merge_labeled(
    base: &Checkpoint,
    experts: &[(String, &Checkpoint)],
    recipe: &MergeRecipe,
) -> Result<MergedModel> {
    recipe.validate()?;
    if experts.is_empty() {
        return Err(Error::InvalidInput("merge requires at least one expert".into()));
    }
    let refs: Vec<&Checkpoint> = experts.iter().map(|(_, e)| *e).collect();
    let report = check_compatible(base, &refs);
    if !report.is_ok() {
        return Err(Error::Incompatible(report.describe()));
    }

    let vectors: Vec<TaskVector> = experts
        .iter()
        .map(|(id, e)| task_vector(base, e, id))
        .collect::<Result<_>>()?;
    let transformed = apply_recipe_transform(recipe, &vectors)?;

    let k = transformed.len();
    let alpha = recipe.c / k as f64;
    let mut merged = Checkpoint {
        tensors: BTreeMap::new(),
        metadata: base.metadata.clone(),
    };
    for (name, bt) in &base.tensors {
        // Sum in f64, experts in donor order, so results do not depend on
        // the degree of parallelism.
        let mut acc = vec![0.0f64; bt.len()];
        let mut agree = vec![0u32; bt.len()];
        for v in &transformed {
            for (i, &x) in v.deltas[name].data.iter().enumerate() {
                acc[i] += x as f64;
                if x != 0.0 {
                    agree[i] += 1;
                }
            }
        }
        let data: Vec<f32> = bt
            .data
            .iter()
            .enumerate()
            .map(|(i, &b)| {
                let coeff = if recipe.disjoint_mean && recipe.kind == MergeKind::Ties {
                    if agree[i] > 0 {
                        recipe.c / agree[i] as f64
                    } else {
                        0.0
                    }
                } else {
                    alpha
                };
                (b as f64 + coeff * acc[i]) as f32
            })
            .collect();
        merged.insert(name.clone(), Tensor::new(bt.shape.clone(), data));
    }
    Ok(MergedModel {
        checkpoint: merged,
        recipe: recipe.clone(),
        donor_ids: experts.iter().map(|(id, _)| id.clone()).collect(),
        k,
    })
}
