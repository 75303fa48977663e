//! CP decomposition by alternating least squares and truncated HOSVD, plus
//! extraction of the weighted time-mode factor series that the detector
//! consumes.

use nalgebra::{DMatrix, DVector};
use rand::RngExt;
use rand_distr::StandardNormal;

use crate::error::{Result, TensegError};
use crate::seed;
use crate::tensor::Tensor;

/// CP model: `weights[l]` times the outer product of column `l` of every
/// factor. Factor columns are unit norm (or all-zero for a dead component)
/// and components are sorted by descending `|weight|`.
#[derive(Debug, Clone, PartialEq)]
pub struct CpModel {
    pub weights: Vec<f64>,
    pub factors: Vec<DMatrix<f64>>,
}

impl CpModel {
    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    /// Number of modes K.
    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.nrows()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.factors.is_empty() {
            return Err(TensegError::invalid_argument("CP model needs at least one factor"));
        }
        for f in &self.factors {
            if f.ncols() != self.rank() {
                return Err(TensegError::dimension_mismatch(format!(
                    "factor has {} columns, expected rank {}",
                    f.ncols(),
                    self.rank()
                )));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(TensegError::numeric("non-finite factor entry"));
            }
        }
        if self.weights.iter().any(|v| !v.is_finite()) {
            return Err(TensegError::numeric("non-finite weight"));
        }
        Ok(())
    }

    /// Dense reconstruction `Σ_l weight_l · u_1l ∘ … ∘ u_Kl`.
    pub fn reconstruct(&self) -> Result<Tensor> {
        self.validate()?;
        let shape = self.shape();
        // Mode-0 unfolding of the model: U_0 diag(w) (KR of the others)^T.
        let kr = khatri_rao_excluding(&self.factors, 0);
        let mut scaled = self.factors[0].clone();
        for (l, &w) in self.weights.iter().enumerate() {
            scaled.column_mut(l).scale_mut(w);
        }
        let unf = scaled * kr.transpose();
        Tensor::fold(&unf, 0, &shape)
    }

    /// Weighted time factor series: an `r × T` matrix whose row `l` is
    /// `weight_l` times column `l` of the time-mode factor, transposed.
    pub fn time_series(&self, time_mode: usize) -> Result<DMatrix<f64>> {
        if time_mode >= self.order() {
            return Err(TensegError::invalid_argument(format!(
                "time mode {time_mode} out of range for order {}",
                self.order()
            )));
        }
        let u = &self.factors[time_mode];
        let mut out = DMatrix::zeros(self.rank(), u.nrows());
        for l in 0..self.rank() {
            for t in 0..u.nrows() {
                out[(l, t)] = self.weights[l] * u[(t, l)];
            }
        }
        Ok(out)
    }
}

/// Settings for [`cp_als`].
#[derive(Debug, Clone)]
pub struct AlsConfig {
    pub rank: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl AlsConfig {
    pub fn new(rank: usize) -> Self {
        AlsConfig {
            rank,
            max_iters: 100,
            rel_tol: 1e-6,
            restarts: 1,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_iters(mut self, max_iters: usize, rel_tol: f64) -> Self {
        self.max_iters = max_iters;
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }
}

/// Result of an ALS run: fitted model plus the per-sweep relative
/// reconstruction errors of the winning restart.
#[derive(Debug, Clone)]
pub struct CpFit {
    pub model: CpModel,
    /// `‖t − t̂‖_F / ‖t‖_F` after each sweep; non-increasing. Computed in
    /// factored form, which bottoms out near `sqrt(machine eps)` relative;
    /// reconstruct the model directly when errors below ~1e-8 matter.
    pub rel_errors: Vec<f64>,
    pub converged: bool,
    /// Index of the restart that produced the best fit.
    pub restart: usize,
}

impl CpFit {
    pub fn rel_error(&self) -> f64 {
        self.rel_errors.last().copied().unwrap_or(1.0)
    }
}

/// Khatri-Rao product of all factors except `skip`, rows enumerating the
/// remaining modes with the lowest mode varying fastest (matching the
/// unfolding column order).
fn khatri_rao_excluding(factors: &[DMatrix<f64>], skip: usize) -> DMatrix<f64> {
    let rank = factors[0].ncols();
    let rows: usize = factors
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != skip)
        .map(|(_, f)| f.nrows())
        .product();
    let mut kr = DMatrix::zeros(rows, rank);
    let mut cur: Vec<f64> = Vec::with_capacity(rows);
    let mut next: Vec<f64> = Vec::with_capacity(rows);
    for l in 0..rank {
        cur.clear();
        cur.push(1.0);
        for (j, f) in factors.iter().enumerate() {
            if j == skip {
                continue;
            }
            next.clear();
            for i in 0..f.nrows() {
                let fv = f[(i, l)];
                next.extend(cur.iter().map(|&c| c * fv));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        kr.column_mut(l).copy_from_slice(&cur);
    }
    kr
}

/// Hadamard product of the Gram matrices `U_j^T U_j` for all `j != skip`.
fn hadamard_grams(grams: &[DMatrix<f64>], skip: usize) -> DMatrix<f64> {
    let r = grams[0].nrows();
    let mut w = DMatrix::from_element(r, r, 1.0);
    for (j, g) in grams.iter().enumerate() {
        if j != skip {
            w.component_mul_assign(g);
        }
    }
    w
}

/// Solves `U W = V` for U with W symmetric positive semidefinite; falls back
/// to the pseudo-inverse when W is singular (collinear components).
fn solve_ls(w: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = nalgebra::Cholesky::new(w.clone()) {
        return Ok(ch.solve(&v.transpose()).transpose());
    }
    let pinv = w
        .clone()
        .svd(true, true)
        .pseudo_inverse(1e-12)
        .map_err(TensegError::numeric)?;
    Ok(v * pinv)
}

/// Flips factor column signs so the largest-magnitude entry of every column
/// is nonnegative, pushing the sign into the weight.
fn apply_sign_convention(weights: &mut [f64], factors: &mut [DMatrix<f64>]) {
    for l in 0..weights.len() {
        for f in factors.iter_mut() {
            let mut best = 0usize;
            let mut best_abs = -1.0;
            for i in 0..f.nrows() {
                let a = f[(i, l)].abs();
                if a > best_abs {
                    best_abs = a;
                    best = i;
                }
            }
            if f[(best, l)] < 0.0 {
                f.column_mut(l).neg_mut();
                weights[l] = -weights[l];
            }
        }
    }
}

/// Sorts components by descending `|weight|`, stable under ties.
fn sort_components(weights: &mut Vec<f64>, factors: &mut [DMatrix<f64>]) {
    let r = weights.len();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| {
        weights[b]
            .abs()
            .partial_cmp(&weights[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let new_weights: Vec<f64> = order.iter().map(|&l| weights[l]).collect();
    *weights = new_weights;
    for f in factors.iter_mut() {
        let old = f.clone();
        for (dst, &src) in order.iter().enumerate() {
            f.set_column(dst, &old.column(src));
        }
    }
}

/// CP decomposition by alternating least squares with random restarts.
///
/// Each restart initializes factors from seeded standard normals, normalizes
/// columns, and sweeps the modes; every least-squares step keeps the
/// reconstruction error non-increasing. The best restart by final relative
/// error wins.
pub fn cp_als(t: &Tensor, cfg: &AlsConfig) -> Result<CpFit> {
    if cfg.rank == 0 {
        return Err(TensegError::invalid_argument("CP rank must be at least 1"));
    }
    if cfg.max_iters == 0 || cfg.restarts == 0 {
        return Err(TensegError::invalid_argument(
            "max_iters and restarts must be at least 1",
        ));
    }
    if t.order() < 2 {
        return Err(TensegError::invalid_argument(
            "CP decomposition needs an order-2 or higher tensor",
        ));
    }
    let norm_x = t.frobenius_norm();
    if norm_x == 0.0 {
        return Err(TensegError::numeric("cannot decompose the zero tensor"));
    }
    let order = t.order();
    let unfoldings: Vec<DMatrix<f64>> = (0..order)
        .map(|k| t.unfold(k))
        .collect::<Result<_>>()?;

    let mut best: Option<CpFit> = None;
    for restart in 0..cfg.restarts {
        let mut rng = seed::rng_for(cfg.seed, &[restart as u64]);
        let mut factors: Vec<DMatrix<f64>> = t
            .shape()
            .iter()
            .map(|&n| {
                let mut f =
                    DMatrix::from_fn(n, cfg.rank, |_, _| rng.sample::<f64, _>(StandardNormal));
                normalize_columns(&mut f);
                f
            })
            .collect();
        let mut grams: Vec<DMatrix<f64>> =
            factors.iter().map(|f| f.transpose() * f).collect();
        let mut weights = vec![1.0; cfg.rank];
        let mut rel_errors = Vec::new();
        let mut converged = false;

        for _ in 0..cfg.max_iters {
            let mut last_mttkrp = DMatrix::zeros(0, 0);
            for k in 0..order {
                let kr = khatri_rao_excluding(&factors, k);
                let v = &unfoldings[k] * kr;
                let w = hadamard_grams(&grams, k);
                let mut u = solve_ls(&w, &v)?;
                if u.iter().any(|x| !x.is_finite()) {
                    return Err(TensegError::numeric("ALS produced non-finite factors"));
                }
                weights = normalize_columns(&mut u);
                grams[k] = u.transpose() * &u;
                factors[k] = u;
                if k == order - 1 {
                    last_mttkrp = v;
                }
            }
            // ‖t − t̂‖² = ‖t‖² − 2⟨t, t̂⟩ + ‖t̂‖², all in factored form.
            let last = order - 1;
            let mut inner = 0.0;
            for l in 0..cfg.rank {
                let mut dot = 0.0;
                for i in 0..factors[last].nrows() {
                    dot += last_mttkrp[(i, l)] * factors[last][(i, l)];
                }
                inner += weights[l] * dot;
            }
            let full_gram = hadamard_grams(&grams, usize::MAX);
            let wvec = DVector::from_column_slice(&weights);
            let model_sq = (wvec.transpose() * &full_gram * &wvec)[(0, 0)];
            let err_sq = (norm_x * norm_x - 2.0 * inner + model_sq).max(0.0);
            let rel = err_sq.sqrt() / norm_x;
            let prev = rel_errors.last().copied().unwrap_or(f64::INFINITY);
            rel_errors.push(rel);
            if (prev - rel).abs() < cfg.rel_tol {
                converged = true;
                break;
            }
        }

        apply_sign_convention(&mut weights, &mut factors);
        sort_components(&mut weights, &mut factors);
        let fit = CpFit {
            model: CpModel { weights, factors },
            rel_errors,
            converged,
            restart,
        };
        let better = match &best {
            None => true,
            Some(b) => fit.rel_error() < b.rel_error(),
        };
        if better {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Normalizes each column to unit norm, returning the original norms.
/// All-zero columns are left in place with weight 0.
fn normalize_columns(m: &mut DMatrix<f64>) -> Vec<f64> {
    let mut norms = Vec::with_capacity(m.ncols());
    for l in 0..m.ncols() {
        let n = m.column(l).norm();
        if n > 0.0 {
            m.column_mut(l).scale_mut(1.0 / n);
        }
        norms.push(n);
    }
    norms
}

/// Truncated higher-order SVD: per-mode orthonormal factors from the top
/// left singular vectors of each unfolding, plus the projected core.
#[derive(Debug, Clone, PartialEq)]
pub struct HosvdModel {
    pub core: Tensor,
    pub factors: Vec<DMatrix<f64>>,
}

impl HosvdModel {
    pub fn ranks(&self) -> Vec<usize> {
        self.core.shape().to_vec()
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.factors.len() != self.core.order() {
            return Err(TensegError::dimension_mismatch(
                "factor count differs from core order",
            ));
        }
        for (k, f) in self.factors.iter().enumerate() {
            if f.ncols() != self.core.shape()[k] {
                return Err(TensegError::dimension_mismatch(format!(
                    "factor {k} has {} columns but core extent is {}",
                    f.ncols(),
                    self.core.shape()[k]
                )));
            }
        }
        Ok(())
    }

    /// Dense reconstruction `core ×_1 U_1 … ×_K U_K`.
    pub fn reconstruct(&self) -> Result<Tensor> {
        self.validate()?;
        let mut t = self.core.clone();
        for (k, f) in self.factors.iter().enumerate() {
            t = t.mode_product(f, k)?;
        }
        Ok(t)
    }

    /// Time factor series: row `l` is the Frobenius norm of core slice `l`
    /// along the time mode times column `l` of the time factor, transposed.
    pub fn time_series(&self, time_mode: usize) -> Result<DMatrix<f64>> {
        if time_mode >= self.order() {
            return Err(TensegError::invalid_argument(format!(
                "time mode {time_mode} out of range for order {}",
                self.order()
            )));
        }
        let u = &self.factors[time_mode];
        let r = self.core.shape()[time_mode];
        let core_unf = self.core.unfold(time_mode)?;
        let mut out = DMatrix::zeros(r, u.nrows());
        for l in 0..r {
            let slice_norm = core_unf.row(l).norm();
            for t in 0..u.nrows() {
                out[(l, t)] = slice_norm * u[(t, l)];
            }
        }
        Ok(out)
    }
}

/// Truncated HOSVD with per-mode target ranks.
///
/// Left singular vectors come from the eigendecomposition of the unfolding
/// Gram matrix; components are sorted by descending singular value with the
/// same deterministic sign convention as CP factors.
pub fn hosvd(t: &Tensor, ranks: &[usize]) -> Result<HosvdModel> {
    if ranks.len() != t.order() {
        return Err(TensegError::invalid_argument(format!(
            "need one rank per mode, got {} for order {}",
            ranks.len(),
            t.order()
        )));
    }
    for (k, (&r, &n)) in ranks.iter().zip(t.shape()).enumerate() {
        if r == 0 || r > n {
            return Err(TensegError::invalid_argument(format!(
                "rank {r} invalid for mode {k} of extent {n}"
            )));
        }
    }
    let mut factors = Vec::with_capacity(t.order());
    for (k, &r) in ranks.iter().enumerate() {
        let unf = t.unfold(k)?;
        let gram = &unf * unf.transpose();
        let eig = nalgebra::SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .partial_cmp(&eig.eigenvalues[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let mut u = DMatrix::zeros(unf.nrows(), r);
        for (dst, &src) in order.iter().take(r).enumerate() {
            u.set_column(dst, &eig.eigenvectors.column(src));
        }
        let mut dummy = vec![1.0; r];
        apply_sign_convention(&mut dummy, std::slice::from_mut(&mut u));
        factors.push(u);
    }
    let mut core = t.clone();
    for (k, f) in factors.iter().enumerate() {
        core = core.mode_product(&f.transpose(), k)?;
    }
    Ok(HosvdModel { core, factors })
}
