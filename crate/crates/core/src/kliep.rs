//! Kullback–Leibler importance estimation.
//!
//! The importance `ŵ(x) = Σ_l α_l φ_l(x)` is a nonnegative combination of RBF
//! bumps centered on numerator samples. `α` maximizes the mean log-model over
//! the numerator set subject to the mean model value over the denominator set
//! being one. The kernel width is picked from a grid by likelihood
//! cross-validation over numerator folds.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataio::{RngStream, SampleSet};
use crate::error::{invalid, Error, Result};
use crate::kernels::{self, KernelBasis};

/// Floor applied to model values inside logs during line search and held-out scoring.
pub const LOG_FLOOR: f64 = 1e-12;

pub const SOURCE_TO_TARGET: &str = "source_to_target";
pub const TARGET_TO_SOURCE: &str = "target_to_source";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaGrid {
    /// Multipliers of the median pairwise distance of the pooled samples.
    Relative(Vec<f64>),
    Absolute(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KliepConfig {
    pub num_centers: usize,
    pub sigma_grid: SigmaGrid,
    pub cv_folds: usize,
    /// Tried in order at every iteration; the first that does not lower the objective is kept.
    pub step_sizes: Vec<f64>,
    pub max_iters: usize,
    pub tol: f64,
    /// Rows drawn from each set for the median heuristic.
    pub median_subsample: usize,
}

impl Default for KliepConfig {
    fn default() -> Self {
        Self {
            num_centers: 100,
            sigma_grid: SigmaGrid::Relative(vec![0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0]),
            cv_folds: 5,
            step_sizes: vec![1e-1, 1e-2, 1e-3, 1e-4],
            max_iters: 5000,
            tol: 1e-6,
            median_subsample: 500,
        }
    }
}

impl KliepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_centers == 0 {
            return Err(invalid!("num_centers must be >= 1"));
        }
        if self.cv_folds < 2 {
            return Err(invalid!("cv_folds must be >= 2, got {}", self.cv_folds));
        }
        let grid = match &self.sigma_grid {
            SigmaGrid::Relative(g) | SigmaGrid::Absolute(g) => g,
        };
        if grid.is_empty() || grid.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(invalid!("sigma grid must be a nonempty list of positive reals"));
        }
        if self.step_sizes.is_empty() || self.step_sizes.iter().any(|s| !(*s > 0.0)) {
            return Err(invalid!("step sizes must be a nonempty list of positive reals"));
        }
        if !(self.tol > 0.0) {
            return Err(invalid!("tol must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaScore {
    pub sigma: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitLog {
    pub iters: usize,
    pub objective: f64,
    /// The log floor fired for some model value at an accepted iterate.
    pub clamped: bool,
    #[serde(default)]
    pub degenerate: bool,
    #[serde(default)]
    pub start_objective: f64,
    #[serde(default)]
    pub median_distance: f64,
    #[serde(default)]
    pub cv: Vec<SigmaScore>,
    /// Objective after every accepted step, starting with the projected start point.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

/// A fitted importance function.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceModel {
    pub direction: String,
    pub basis: KernelBasis,
    pub alpha: Vec<f64>,
    pub fit_log: FitLog,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    direction: String,
    sigma: f64,
    centers: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    fit_log: FitLog,
}

impl Serialize for ImportanceModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ModelFile {
            direction: self.direction.clone(),
            sigma: self.basis.sigma(),
            centers: self.basis.centers().rows().into_iter().map(|r| r.to_vec()).collect(),
            alpha: self.alpha.clone(),
            fit_log: self.fit_log.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ImportanceModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let f = ModelFile::deserialize(deserializer)?;
        let d = f.centers.first().map_or(0, Vec::len);
        if f.centers.iter().any(|c| c.len() != d) {
            return Err(D::Error::custom("ragged centers"));
        }
        if f.alpha.len() != f.centers.len() {
            return Err(D::Error::custom("alpha length differs from center count"));
        }
        if f.alpha.iter().any(|a| !(*a >= 0.0)) {
            return Err(D::Error::custom("alpha must be nonnegative"));
        }
        let flat: Vec<f64> = f.centers.into_iter().flatten().collect();
        let centers = Array2::from_shape_vec((f.alpha.len(), d), flat).map_err(D::Error::custom)?;
        let basis = KernelBasis::new(centers, f.sigma).map_err(D::Error::custom)?;
        Ok(Self {
            direction: f.direction,
            basis,
            alpha: f.alpha,
            fit_log: f.fit_log,
        })
    }
}

impl ImportanceModel {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn sigma(&self) -> f64 {
        self.basis.sigma()
    }

    /// `ŵ(x_i) = Σ_l α_l rbf(x_i, c_l, σ)` for every row.
    pub fn weights(&self, xs: &SampleSet) -> Result<Vec<f64>> {
        if xs.dim() != self.dim() {
            return Err(invalid!("dimension mismatch: model d={}, samples d={}", self.dim(), xs.dim()));
        }
        let a = kernels::design_matrix(xs, &self.basis)?;
        Ok(matvec(&a, &self.alpha))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

pub fn weights(model: &ImportanceModel, xs: &SampleSet) -> Result<Vec<f64>> {
    model.weights(xs)
}

fn matvec(a: &Array2<f64>, x: &[f64]) -> Vec<f64> {
    a.rows()
        .into_iter()
        .map(|row| row.iter().zip(x).fold(0.0, |acc, (r, v)| acc + r * v))
        .collect()
}

/// `(1/n) Σ_j log((A α)_j)`; fails if any model value is nonpositive.
pub fn kliep_objective(alpha: &[f64], a_num: &Array2<f64>) -> Result<f64> {
    if a_num.ncols() != alpha.len() {
        return Err(invalid!("alpha has {} entries, matrix has {} columns", alpha.len(), a_num.ncols()));
    }
    if a_num.nrows() == 0 {
        return Err(invalid!("objective needs at least one numerator sample"));
    }
    let values = matvec(a_num, alpha);
    if let Some((j, v)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::Domain(format!(
            "model value {v} at numerator sample {j} is not positive; alpha left the feasible cone"
        )));
    }
    Ok(values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64)
}

/// Objective with the log floor; the flag reports whether the floor fired.
fn floored_objective(values: &[f64]) -> (f64, bool) {
    let mut clamped = false;
    let mut acc = 0.0;
    for &v in values {
        if v < LOG_FLOOR || v.is_nan() {
            clamped = true;
            acc += LOG_FLOOR.ln();
        } else {
            acc += v.ln();
        }
    }
    (acc / values.len() as f64, clamped)
}

/// Result of the constrained ascent for one design matrix.
#[derive(Debug, Clone)]
pub struct AscentResult {
    pub alpha: Vec<f64>,
    pub objective: f64,
    pub start_objective: f64,
    pub iters: usize,
    pub clamped: bool,
    pub degenerate: bool,
    pub trace: Vec<f64>,
}

/// Feasible-set projection: equality step, clip, rescale. `None` if the
/// clipped vector has no mass on the constraint.
fn project(alpha: &mut [f64], bvec: &[f64], bb: f64) -> Option<()> {
    let ba: f64 = bvec.iter().zip(alpha.iter()).map(|(b, a)| b * a).sum();
    let shift = (1.0 - ba) / bb;
    for (a, b) in alpha.iter_mut().zip(bvec) {
        *a = (*a + b * shift).max(0.0);
    }
    let ba: f64 = bvec.iter().zip(alpha.iter()).map(|(b, a)| b * a).sum();
    if !(ba > 0.0) || !ba.is_finite() {
        return None;
    }
    for a in alpha.iter_mut() {
        *a /= ba;
    }
    Some(())
}

fn columns_identical(a: &Array2<f64>) -> bool {
    a.rows().into_iter().all(|row| {
        let first = row[0];
        row.iter().all(|&v| (v - first).abs() <= 1e-12 * first.abs().max(1e-300))
    })
}

/// Projected gradient ascent of the mean log-model under `bvecᵀα = 1`, `α ≥ 0`.
///
/// `a_num` is the numerator design matrix and `bvec[l]` the mean of `φ_l` over
/// the denominator set. The problem is solved in units where `bvec` has unit
/// mean; the returned `α` is in the caller's units.
pub fn constrained_ascent(a_num: &Array2<f64>, bvec: &[f64], cfg: &KliepConfig) -> Result<AscentResult> {
    let b = a_num.ncols();
    if b == 0 || bvec.len() != b || a_num.nrows() == 0 {
        return Err(invalid!("design matrix and constraint vector shapes disagree"));
    }
    let scale = bvec.iter().sum::<f64>() / b as f64;
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Domain(
            "every basis function vanishes on the denominator samples; widen the kernel".into(),
        ));
    }
    let a = a_num / scale;
    let bv: Vec<f64> = bvec.iter().map(|v| v / scale).collect();
    let bb: f64 = bv.iter().map(|v| v * v).sum();
    let n = a.nrows() as f64;

    let mut alpha = vec![1.0 / b as f64; b];
    project(&mut alpha, &bv, bb).ok_or_else(|| Error::Domain("uniform start is infeasible".into()))?;
    let mut values = matvec(&a, &alpha);
    let (mut objective, mut clamped) = floored_objective(&values);
    let start_objective = objective;
    let mut trace = vec![objective];

    let degenerate = columns_identical(&a);
    let mut iters = 0;
    if !degenerate {
        let mut grad = vec![0.0; b];
        let mut cand = vec![0.0; b];
        while iters < cfg.max_iters {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for (row, v) in a.rows().into_iter().zip(&values) {
                let inv = 1.0 / v.max(LOG_FLOOR);
                for (g, r) in grad.iter_mut().zip(row) {
                    *g += r * inv;
                }
            }
            grad.iter_mut().for_each(|g| *g /= n);

            let mut accepted = None;
            for &eps in &cfg.step_sizes {
                for ((c, a0), g) in cand.iter_mut().zip(&alpha).zip(&grad) {
                    *c = a0 + eps * g;
                }
                if project(&mut cand, &bv, bb).is_none() {
                    continue;
                }
                let cand_values = matvec(&a, &cand);
                let (obj, cl) = floored_objective(&cand_values);
                if obj >= objective {
                    accepted = Some((cand_values, obj, cl));
                    break;
                }
            }
            let Some((cand_values, obj, cl)) = accepted else {
                break;
            };
            iters += 1;
            let improvement = obj - objective;
            alpha.copy_from_slice(&cand);
            values = cand_values;
            objective = obj;
            clamped = cl;
            trace.push(obj);
            if improvement < cfg.tol {
                break;
            }
        }
    }

    for a in alpha.iter_mut() {
        *a /= scale;
    }
    // objective is invariant under the unit change
    Ok(AscentResult {
        alpha,
        objective,
        start_objective,
        iters,
        clamped,
        degenerate,
        trace,
    })
}

fn sigma_candidates(cfg: &KliepConfig, median: f64) -> Vec<f64> {
    match &cfg.sigma_grid {
        SigmaGrid::Absolute(g) => g.clone(),
        SigmaGrid::Relative(g) => {
            let base = if median > 0.0 && median.is_finite() { median } else { 1.0 };
            g.iter().map(|m| m * base).collect()
        }
    }
}

fn column_means(a: &Array2<f64>) -> Vec<f64> {
    a.mean_axis(Axis(0)).map(|m| m.to_vec()).unwrap_or_default()
}

/// Fits `ŵ ≈ p_numerator / p_denominator`.
pub fn fit(numerator: &SampleSet, denominator: &SampleSet, cfg: &KliepConfig, rng: RngStream) -> Result<ImportanceModel> {
    cfg.validate()?;
    if numerator.dim() != denominator.dim() {
        return Err(invalid!(
            "dimension mismatch: numerator d={}, denominator d={}",
            numerator.dim(),
            denominator.dim()
        ));
    }
    if numerator.n() < cfg.cv_folds || denominator.n() < cfg.cv_folds {
        return Err(invalid!(
            "need at least cv_folds={} samples per set, got {} and {}",
            cfg.cv_folds,
            numerator.n(),
            denominator.n()
        ));
    }

    let median = kernels::median_heuristic(numerator, denominator, cfg.median_subsample, rng.sub(0))?;
    let sigmas = sigma_candidates(cfg, median);
    let mut sampler = rng.sampler();

    let mut cv = Vec::new();
    let best_sigma = if sigmas.len() == 1 {
        sigmas[0]
    } else {
        let n = numerator.n();
        let mut perm: Vec<usize> = (0..n).collect();
        sampler.shuffle(&mut perm);
        let mut scores = vec![0.0; sigmas.len()];
        for fold in 0..cfg.cv_folds {
            let held: Vec<usize> = perm.iter().skip(fold).step_by(cfg.cv_folds).copied().collect();
            let train: Vec<usize> = perm
                .iter()
                .enumerate()
                .filter(|(i, _)| i % cfg.cv_folds != fold)
                .map(|(_, &j)| j)
                .collect();
            let b = cfg.num_centers.min(train.len());
            let center_idx: Vec<usize> = sampler.choose(train.len(), b).into_iter().map(|i| train[i]).collect();
            let centers = numerator.data().select(Axis(0), &center_idx);
            let sq_train = kernels::squared_distances(numerator.data().select(Axis(0), &train).view(), centers.view())?;
            let sq_held = kernels::squared_distances(numerator.data().select(Axis(0), &held).view(), centers.view())?;
            let sq_den = kernels::squared_distances(denominator.view(), centers.view())?;
            for (score, &sigma) in scores.iter_mut().zip(&sigmas) {
                let a_train = kernels::kernel_from_sq(&sq_train, sigma)?;
                let bvec = column_means(&kernels::kernel_from_sq(&sq_den, sigma)?);
                let held_score = match constrained_ascent(&a_train, &bvec, cfg) {
                    Ok(sol) => {
                        let a_held = kernels::kernel_from_sq(&sq_held, sigma)?;
                        floored_objective(&matvec(&a_held, &sol.alpha)).0
                    }
                    Err(Error::Domain(_)) => f64::NEG_INFINITY,
                    Err(e) => return Err(e),
                };
                *score += held_score / cfg.cv_folds as f64;
            }
        }
        cv = sigmas
            .iter()
            .zip(&scores)
            .map(|(&sigma, &score)| SigmaScore { sigma, score })
            .collect();
        let mut best = 0;
        for (i, s) in scores.iter().enumerate() {
            if *s > scores[best] {
                best = i;
            }
        }
        sigmas[best]
    };

    let b = cfg.num_centers.min(numerator.n());
    let mut center_idx = sampler.choose(numerator.n(), b);
    center_idx.sort_unstable();
    let basis = KernelBasis::new(numerator.data().select(Axis(0), &center_idx), best_sigma)?;
    let a_num = kernels::design_matrix(numerator, &basis)?;
    let bvec = column_means(&kernels::design_matrix(denominator, &basis)?);
    let sol = constrained_ascent(&a_num, &bvec, cfg)?;

    Ok(ImportanceModel {
        direction: format!("{}/{}", numerator.tag(), denominator.tag()),
        basis,
        alpha: sol.alpha,
        fit_log: FitLog {
            iters: sol.iters,
            objective: sol.objective,
            clamped: sol.clamped,
            degenerate: sol.degenerate,
            start_objective: sol.start_objective,
            median_distance: median,
            cv,
            trace: sol.trace,
        },
    })
}

/// Fits `ŵ` (source weights, target over source) and `ψ̂` (target weights,
/// source over target). Both fits read the same stream independently.
pub fn fit_bidirectional(
    source: &SampleSet,
    target: &SampleSet,
    cfg: &KliepConfig,
    rng: RngStream,
) -> Result<(ImportanceModel, ImportanceModel)> {
    let mut w_hat = fit(target, source, cfg, rng)?;
    w_hat.direction = SOURCE_TO_TARGET.into();
    let mut psi_hat = fit(source, target, cfg, rng)?;
    psi_hat.direction = TARGET_TO_SOURCE.into();
    Ok((w_hat, psi_hat))
}
