//! Sparse principal component analysis for locating the informative region
//! of a deforming shape.
//!
//! [`pca`] gives the dense baseline via thin SVD. [`spca`] sparsifies the
//! leading loading vectors by alternating two steps per component: an
//! elastic-net fit of the loading against the current rotation vector, and a
//! rotation update that is the gram-projected, orthogonalized image of that
//! loading. The elastic-net subproblem
//!
//! ```text
//! min_β (α − β)ᵀ G (α − β) + λ‖β‖² + λ₁‖β‖₁,   G = Yᵀ Y
//! ```
//!
//! is solved exactly by a least-angle path ([`elastic_net`]), which also
//! supports stopping at a requested number of non-zeros instead of a fixed
//! penalty. All gram products route through [`Gram`], so a tall-and-skinny
//! factor never materializes the d×d matrix: costs stay O(N²·d) for N frames
//! with d ≫ N columns.
//!
//! [`vertex_contributions`] folds a loading vector back onto mesh vertices
//! (sum of absolute x/y/z entries per vertex); vertices with non-zero
//! contribution are the informative ones.

use crate::linalg::thin_svd;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpcaError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("matrix must have at least 2 rows and 1 column, got {rows}x{cols}")]
    DegenerateMatrix { rows: usize, cols: usize },
    #[error("gram matrix is not symmetric (max asymmetry {max_asymmetry:.3e})")]
    NonSymmetricGram { max_asymmetry: f64 },
    #[error("dimension mismatch: gram is {gram}-dimensional, target vector has {target} entries")]
    DimensionMismatch { gram: usize, target: usize },
    #[error("active set became rank deficient at path step {step} (needs lambda > 0)")]
    RankDeficientActiveSet { step: usize },
    #[error("regularization path failed to terminate after {steps} steps")]
    PathStalled { steps: usize },
    #[error("loading dimension {dim} is not divisible by 3, cannot group by vertex")]
    NotVertexInterleaved { dim: usize },
    #[error("component {component} out of range, loadings have {available}")]
    ComponentOutOfRange { component: usize, available: usize },
}

/// Dense principal components of a centered (optionally normalized) matrix.
#[derive(Debug, Clone)]
pub struct PcaResult {
    /// Component scores Z = U·D, one row per frame, N×r.
    pub components: DMatrix<f64>,
    /// Loadings V, one column per component, d×r.
    pub loadings: DMatrix<f64>,
    /// Singular values, descending, length r = min(N, d).
    pub singular_values: DVector<f64>,
}

/// Thin-SVD principal component analysis: `y_norm = U·D·Vᵀ`, scores `U·D`,
/// loadings `V`. Each loading column is sign-fixed so its largest-magnitude
/// entry is positive. Directions whose variance is numerically zero (for
/// instance the one removed by centering) carry zero loadings, scores, and
/// singular values.
pub fn pca(y_norm: &DMatrix<f64>) -> Result<PcaResult, SpcaError> {
    if y_norm.nrows() < 2 || y_norm.ncols() < 1 {
        return Err(SpcaError::DegenerateMatrix {
            rows: y_norm.nrows(),
            cols: y_norm.ncols(),
        });
    }
    let f = thin_svd(y_norm);
    let mut scores = f.u;
    for c in 0..scores.ncols() {
        scores.column_mut(c).scale_mut(f.singular_values[c]);
    }
    Ok(PcaResult {
        components: scores,
        loadings: f.v,
        singular_values: f.singular_values,
    })
}

/// A symmetric positive semidefinite matrix G, either stored densely or held
/// as a factor F with G = FᵀF so products stay cheap when G is huge.
#[derive(Debug, Clone)]
pub struct Gram {
    form: GramForm,
}

#[derive(Debug, Clone)]
enum GramForm {
    Dense(DMatrix<f64>),
    Factor(DMatrix<f64>),
}

impl Gram {
    /// Wrap an explicit gram matrix. Must be square and symmetric (relative
    /// asymmetry below 1e-10).
    pub fn from_matrix(g: DMatrix<f64>) -> Result<Self, SpcaError> {
        if g.nrows() != g.ncols() {
            return Err(SpcaError::NonSymmetricGram {
                max_asymmetry: f64::INFINITY,
            });
        }
        let scale = g.amax().max(1e-300);
        let mut worst = 0.0_f64;
        for i in 0..g.nrows() {
            for j in (i + 1)..g.ncols() {
                worst = worst.max((g[(i, j)] - g[(j, i)]).abs());
            }
        }
        if worst > 1e-10 * scale {
            return Err(SpcaError::NonSymmetricGram {
                max_asymmetry: worst / scale,
            });
        }
        Ok(Self {
            form: GramForm::Dense(g),
        })
    }

    /// Implicit gram FᵀF of a (typically short and wide) factor F.
    pub fn from_factor(f: DMatrix<f64>) -> Self {
        Self {
            form: GramForm::Factor(f),
        }
    }

    pub fn dim(&self) -> usize {
        match &self.form {
            GramForm::Dense(g) => g.ncols(),
            GramForm::Factor(f) => f.ncols(),
        }
    }

    /// G·v.
    pub fn mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.form {
            GramForm::Dense(g) => g * v,
            GramForm::Factor(f) => f.transpose() * (f * v),
        }
    }

    /// G[:, idx]·coef for a sparse coefficient vector.
    fn mul_sparse(&self, idx: &[usize], coef: &[f64]) -> DVector<f64> {
        match &self.form {
            GramForm::Dense(g) => {
                let mut out = DVector::zeros(g.nrows());
                for (&j, &w) in idx.iter().zip(coef) {
                    out.axpy(w, &g.column(j).clone_owned(), 1.0);
                }
                out
            }
            GramForm::Factor(f) => {
                let mut mixed = DVector::zeros(f.nrows());
                for (&j, &w) in idx.iter().zip(coef) {
                    mixed.axpy(w, &f.column(j).clone_owned(), 1.0);
                }
                f.transpose() * mixed
            }
        }
    }

    /// G[idx, idx].
    fn submatrix(&self, idx: &[usize]) -> DMatrix<f64> {
        match &self.form {
            GramForm::Dense(g) => {
                DMatrix::from_fn(idx.len(), idx.len(), |r, c| g[(idx[r], idx[c])])
            }
            GramForm::Factor(f) => {
                let cols = DMatrix::from_fn(f.nrows(), idx.len(), |r, c| f[(r, idx[c])]);
                cols.transpose() * cols
            }
        }
    }

    fn trace(&self) -> f64 {
        match &self.form {
            GramForm::Dense(g) => g.diagonal().sum(),
            GramForm::Factor(f) => f.iter().map(|x| x * x).sum(),
        }
    }
}

/// How strongly a loading is sparsified: a fixed ℓ1 penalty, or a cap on the
/// number of non-zero entries (the path is walked until adding one more
/// variable would exceed the cap).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SparsityTarget {
    Penalty(f64),
    NonZeroCount(usize),
}

/// Exact solution of the gram-form elastic net
/// `min_β (α−β)ᵀG(α−β) + λ‖β‖² + λ₁‖β‖₁`
/// by a least-angle regularization path with drop handling.
///
/// With [`SparsityTarget::Penalty`] the path is stopped exactly at the given
/// λ₁ (a penalty of 0 returns the ridge solution `(G+λI)⁻¹Gα` directly).
/// With [`SparsityTarget::NonZeroCount`] it returns the last solution on the
/// path with at most that many non-zeros.
pub fn elastic_net(
    gram: &Gram,
    target_alpha: &DVector<f64>,
    lambda: f64,
    target: SparsityTarget,
) -> Result<DVector<f64>, SpcaError> {
    let d = gram.dim();
    if target_alpha.len() != d {
        return Err(SpcaError::DimensionMismatch {
            gram: d,
            target: target_alpha.len(),
        });
    }
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(SpcaError::InvalidConfig(format!(
            "ridge weight must be finite and non-negative, got {lambda}"
        )));
    }
    let target_corr = match target {
        SparsityTarget::Penalty(l1) => {
            if l1 < 0.0 || !l1.is_finite() {
                return Err(SpcaError::InvalidConfig(format!(
                    "l1 penalty must be finite and non-negative, got {l1}"
                )));
            }
            if l1 == 0.0 {
                return ridge_solution(gram, target_alpha, lambda);
            }
            l1 / 2.0
        }
        SparsityTarget::NonZeroCount(0) => return Ok(DVector::zeros(d)),
        SparsityTarget::NonZeroCount(_) => 0.0,
    };
    let count_cap = match target {
        SparsityTarget::NonZeroCount(n) => n,
        SparsityTarget::Penalty(_) => usize::MAX,
    };

    // KKT stationarity: at the solution for penalty λ₁, every active j has
    // |G(α−β) − λβ|_j = λ₁/2 and every inactive j sits below it. The path
    // moves β so active "correlations" c_j shrink toward that level at unit
    // rate per unit step.
    let mut c = gram.mul_vec(target_alpha);
    let mut beta = DVector::zeros(d);
    let mut active: Vec<usize> = Vec::new();
    let mut just_dropped: Option<usize> = None;
    let eps = 1e-12;
    let max_steps = 8 * d + 128;

    let mut big_c = 0.0_f64;
    for step in 0..max_steps {
        if active.is_empty() {
            let mut best = 0.0;
            let mut who = None;
            for j in 0..d {
                if c[j].abs() > best {
                    best = c[j].abs();
                    who = Some(j);
                }
            }
            big_c = best;
            match who {
                Some(j) if big_c > target_corr + eps && big_c > 1e-300 => active.push(j),
                _ => return Ok(beta),
            }
        }

        let sign: Vec<f64> = active.iter().map(|&j| c[j].signum()).collect();
        let mut gaa = gram.submatrix(&active);
        for i in 0..active.len() {
            gaa[(i, i)] += lambda;
        }
        let chol = match nalgebra::Cholesky::new(gaa) {
            Some(ch) => ch,
            None => return Err(SpcaError::RankDeficientActiveSet { step }),
        };
        let dir = chol.solve(&DVector::from_vec(sign.clone()));
        let a = gram.mul_sparse(&active, dir.as_slice());

        // Smallest positive step at which an inactive variable reaches the
        // common active correlation level.
        let mut gamma_join = f64::INFINITY;
        let mut joiner = None;
        let active_mask: std::collections::HashSet<usize> = active.iter().copied().collect();
        for j in 0..d {
            if active_mask.contains(&j) || Some(j) == just_dropped {
                continue;
            }
            for cand in [
                (big_c - c[j]) / (1.0 - a[j]),
                (big_c + c[j]) / (1.0 + a[j]),
            ] {
                if cand > eps && cand < gamma_join {
                    gamma_join = cand;
                    joiner = Some(j);
                }
            }
        }
        // Smallest positive step at which an active coefficient crosses zero.
        let mut gamma_cross = f64::INFINITY;
        let mut crosser = None;
        for (pos, &j) in active.iter().enumerate() {
            if dir[pos] != 0.0 {
                let g = -beta[j] / dir[pos];
                if g > eps && g < gamma_cross {
                    gamma_cross = g;
                    crosser = Some(pos);
                }
            }
        }
        let gamma_stop = if target_corr > 0.0 {
            big_c - target_corr
        } else {
            f64::INFINITY
        };
        let gamma_end = big_c;
        let gamma = gamma_join
            .min(gamma_cross)
            .min(gamma_stop)
            .min(gamma_end)
            .max(0.0);

        for (pos, &j) in active.iter().enumerate() {
            beta[j] += gamma * dir[pos];
        }
        c.axpy(-gamma, &a, 1.0);
        for (pos, &j) in active.iter().enumerate() {
            c[j] -= gamma * lambda * dir[pos];
        }
        big_c -= gamma;
        just_dropped = None;

        if gamma == gamma_stop || (gamma == gamma_end && gamma < gamma_join && gamma < gamma_cross)
        {
            return Ok(beta);
        }
        if gamma_cross <= gamma_join && gamma == gamma_cross {
            let pos = crosser.expect("finite cross step has a crosser");
            let j = active.remove(pos);
            beta[j] = 0.0;
            just_dropped = Some(j);
        } else if gamma == gamma_join {
            let j = joiner.expect("finite join step has a joiner");
            if active.len() + 1 > count_cap {
                return Ok(beta);
            }
            active.push(j);
        } else if big_c <= eps {
            return Ok(beta);
        }
    }
    Err(SpcaError::PathStalled { steps: max_steps })
}

/// Ridge solution `(G+λI)⁻¹Gα`, the λ₁ = 0 endpoint of the path. For a
/// factored gram this goes through the thin SVD of the factor; with λ = 0 it
/// falls back to the minimum-norm solution on the factor's row space.
fn ridge_solution(
    gram: &Gram,
    alpha: &DVector<f64>,
    lambda: f64,
) -> Result<DVector<f64>, SpcaError> {
    match &gram.form {
        GramForm::Dense(g) => {
            let mut lhs = g.clone();
            for i in 0..lhs.nrows() {
                lhs[(i, i)] += lambda;
            }
            let rhs = g * alpha;
            lhs.lu()
                .solve(&rhs)
                .ok_or(SpcaError::RankDeficientActiveSet { step: 0 })
        }
        GramForm::Factor(f) => {
            let fact = thin_svd(f);
            let mut proj = fact.v.transpose() * alpha;
            for i in 0..proj.len() {
                let s2 = fact.singular_values[i] * fact.singular_values[i];
                proj[i] *= if i < fact.rank { s2 / (s2 + lambda) } else { 0.0 };
            }
            Ok(&fact.v * proj)
        }
    }
}

/// Configuration for [`spca`]. `sparsity` holds either one shared target or
/// one per component.
#[derive(Debug, Clone)]
pub struct SpcaConfig {
    pub n_components: usize,
    pub ridge_lambda: f64,
    pub sparsity: Vec<SparsityTarget>,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SpcaConfig {
    fn default() -> Self {
        Self {
            n_components: 1,
            ridge_lambda: 1e-4,
            sparsity: vec![SparsityTarget::Penalty(0.0)],
            max_iter: 200,
            tol: 1e-6,
        }
    }
}

impl SpcaConfig {
    pub fn with_components(mut self, k: usize) -> Self {
        self.n_components = k;
        self
    }

    /// One sparsity target shared by every component.
    pub fn with_sparsity(mut self, target: SparsityTarget) -> Self {
        self.sparsity = vec![target];
        self
    }

    pub fn with_ridge_lambda(mut self, lambda: f64) -> Self {
        self.ridge_lambda = lambda;
        self
    }

    fn target_for(&self, j: usize) -> SparsityTarget {
        if self.sparsity.len() == 1 {
            self.sparsity[0]
        } else {
            self.sparsity[j]
        }
    }

    fn validate(&self, n: usize, d: usize) -> Result<(), SpcaError> {
        let max_k = (n - 1).min(d);
        if self.n_components == 0 || self.n_components > max_k {
            return Err(SpcaError::InvalidConfig(format!(
                "n_components must be in 1..={max_k} for a {n}x{d} matrix, got {}",
                self.n_components
            )));
        }
        if !(self.sparsity.len() == 1 || self.sparsity.len() == self.n_components) {
            return Err(SpcaError::InvalidConfig(format!(
                "need 1 or {} sparsity targets, got {}",
                self.n_components,
                self.sparsity.len()
            )));
        }
        if self.max_iter == 0 {
            return Err(SpcaError::InvalidConfig("max_iter must be positive".into()));
        }
        if !(self.tol > 0.0) {
            return Err(SpcaError::InvalidConfig(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// Result of [`spca`]: sparse loadings plus per-component convergence state.
#[derive(Debug, Clone)]
pub struct SpcaOutcome {
    /// B̂, d×k. Each column has unit Euclidean norm unless identically zero,
    /// with its largest-magnitude entry positive.
    pub loadings: DMatrix<f64>,
    /// Per component: did the alternation settle before `max_iter`?
    pub converged: Vec<bool>,
    /// Alternating iterations used per component.
    pub iterations: Vec<usize>,
    /// Penalty mode only: the alternation objective after every half-step
    /// (elastic-net step, then rotation step), per component. Empty vectors
    /// in count mode, where the effective penalty moves along the path.
    pub objective_trace: Vec<Vec<f64>>,
}

/// Sparse PCA of a centered/normalized frame matrix by per-component
/// alternation. Component j repeats until the normalized loading moves less
/// than `tol`:
///
/// 1. β_j ← elastic net fit against the rotation vector α_j;
/// 2. α_j ← normalize((I − A_{<j} A_{<j}ᵀ)·G·β_j), keeping rotations of later
///    components orthogonal to the already-settled ones.
///
/// Rotations start from the dense PCA loadings. Components that fail to
/// settle are returned as-is and flagged in `converged`.
pub fn spca(y_norm: &DMatrix<f64>, config: &SpcaConfig) -> Result<SpcaOutcome, SpcaError> {
    let (n, d) = (y_norm.nrows(), y_norm.ncols());
    if n < 2 || d < 1 {
        return Err(SpcaError::DegenerateMatrix { rows: n, cols: d });
    }
    config.validate(n, d)?;
    let k = config.n_components;
    let init = pca(y_norm)?;
    let gram = Gram::from_factor(y_norm.clone());
    let tr_g = gram.trace();

    let mut rotation = init.loadings.columns(0, k).clone_owned();
    let mut loadings = DMatrix::zeros(d, k);
    let mut converged = vec![false; k];
    let mut iterations = vec![0usize; k];
    let mut objective_trace = vec![Vec::new(); k];

    for j in 0..k {
        let target = config.target_for(j);
        let penalty = match target {
            SparsityTarget::Penalty(l1) => Some(l1),
            SparsityTarget::NonZeroCount(_) => None,
        };
        let mut beta_prev: Option<DVector<f64>> = None;
        for iter in 1..=config.max_iter {
            iterations[j] = iter;
            let alpha = rotation.column(j).clone_owned();
            let beta_raw = elastic_net(&gram, &alpha, config.ridge_lambda, target)?;
            if let Some(l1) = penalty {
                objective_trace[j].push(alternation_objective(
                    &gram,
                    tr_g,
                    &alpha,
                    &beta_raw,
                    config.ridge_lambda,
                    l1,
                ));
            }
            if beta_raw.norm() == 0.0 {
                // No variable clears the penalty: zero column, nothing to
                // iterate on.
                loadings.column_mut(j).fill(0.0);
                converged[j] = true;
                break;
            }
            let mut beta_unit = beta_raw.clone();
            beta_unit.normalize_mut();
            canonicalize_sign(&mut beta_unit);

            let mut g = gram.mul_vec(&beta_unit);
            for prev in 0..j {
                let coeff = rotation.column(prev).dot(&g);
                g.axpy(-coeff, &rotation.column(prev).clone_owned(), 1.0);
            }
            let g_norm = g.norm();
            if g_norm == 0.0 {
                loadings.set_column(j, &beta_unit);
                converged[j] = true;
                break;
            }
            g.unscale_mut(g_norm);
            rotation.set_column(j, &g);
            if let Some(l1) = penalty {
                objective_trace[j].push(alternation_objective(
                    &gram,
                    tr_g,
                    &g,
                    &beta_raw,
                    config.ridge_lambda,
                    l1,
                ));
            }

            loadings.set_column(j, &beta_unit);
            if let Some(prev) = &beta_prev {
                if (&beta_unit - prev).norm() < config.tol {
                    converged[j] = true;
                    break;
                }
            }
            beta_prev = Some(beta_unit);
        }
    }
    Ok(SpcaOutcome {
        loadings,
        converged,
        iterations,
        objective_trace,
    })
}

/// The quantity the alternation descends for the leading component:
/// `tr G − 2 βᵀGα + βᵀGβ + λ‖β‖² + λ₁‖β‖₁` with unit α.
fn alternation_objective(
    gram: &Gram,
    tr_g: f64,
    alpha: &DVector<f64>,
    beta: &DVector<f64>,
    lambda: f64,
    lambda1: f64,
) -> f64 {
    let g_beta = gram.mul_vec(beta);
    tr_g - 2.0 * beta.dot(&gram.mul_vec(alpha)) + beta.dot(&g_beta)
        + lambda * beta.norm_squared()
        + lambda1 * beta.iter().map(|x| x.abs()).sum::<f64>()
}

fn canonicalize_sign(v: &mut DVector<f64>) {
    let mut best = 0.0;
    let mut sign = 1.0;
    for x in v.iter() {
        if x.abs() > best {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        v.neg_mut();
    }
}

/// Per-vertex share of one loading column: |x| + |y| + |z| of the vertex's
/// three interleaved entries. `selected` lists the vertices with strictly
/// positive contribution, ascending.
#[derive(Debug, Clone)]
pub struct VertexContributions {
    pub contributions: Vec<f64>,
    pub selected: Vec<usize>,
    pub component: usize,
}

pub fn vertex_contributions(
    loadings: &DMatrix<f64>,
    component: usize,
) -> Result<VertexContributions, SpcaError> {
    if component >= loadings.ncols() {
        return Err(SpcaError::ComponentOutOfRange {
            component,
            available: loadings.ncols(),
        });
    }
    if loadings.nrows() % 3 != 0 || loadings.nrows() == 0 {
        return Err(SpcaError::NotVertexInterleaved {
            dim: loadings.nrows(),
        });
    }
    let col = loadings.column(component);
    let contributions: Vec<f64> = (0..loadings.nrows() / 3)
        .map(|v| col[3 * v].abs() + col[3 * v + 1].abs() + col[3 * v + 2].abs())
        .collect();
    let selected = contributions
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0.0)
        .map(|(i, _)| i)
        .collect();
    Ok(VertexContributions {
        contributions,
        selected,
        component,
    })
}
