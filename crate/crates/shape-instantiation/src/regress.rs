//! Partial-least-squares regression from low-dimensional shape codes to
//! high-dimensional shape rows, linear and Gaussian-kernel flavored.
//!
//! The linear fit ([`simpls_fit`]) extracts components directly from the
//! cross-product of the centered predictor and response blocks: each weight
//! vector is the leading left singular vector of the cross-product after
//! projecting out the already-extracted predictor loadings, so the scores
//! stay mutually orthogonal without ever deflating the data matrices.
//! Responses wider than the sample count are first compressed through a
//! thin orthogonal factor, which leaves the extracted weights unchanged but
//! keeps every step linear in the response width.
//!
//! The kernel variant ([`kplsr_fit`]) replaces predictor rows with a
//! Gaussian similarity profile against the training rows. Its width is a
//! fixed ratio of the largest squared pairwise distance, so rigid motions
//! and global rescalings of the predictor rows leave the model unchanged.
//!
//! With all `min(N−1, p)` components the linear fit reproduces the
//! minimum-norm least-squares solution; fewer components give the usual
//! regularized family, and [`PlsrModel::truncated`] recovers every smaller
//! model from one fit without refitting.

use crate::io::MatrixJson;
use crate::linalg::thin_svd;
use crate::ssm::{center_normalize, Normalization, NormalizationStats, SsmError};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegressError {
    #[error("need at least {needed} training rows, found {found}")]
    TooFewSamples { found: usize, needed: usize },
    #[error("predictors have {x_rows} rows but responses have {y_rows}")]
    RowCountMismatch { x_rows: usize, y_rows: usize },
    #[error("requested {requested} components, at most {max} are extractable")]
    InvalidComponents { requested: usize, max: usize },
    #[error(
        "training data ran out of rank at component {component}; fewer \
         components or more varied training frames are needed"
    )]
    RankError { component: usize },
    #[error("kernel width ratio must be positive and finite, got {0}")]
    InvalidRatio(f64),
    #[error("model expects {expected} input features, got {found}")]
    FeatureCountMismatch { expected: usize, found: usize },
    #[error("model document version {found} is not supported (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error("model document is inconsistent: {0}")]
    MalformedDoc(String),
    #[error(transparent)]
    Shape(#[from] SsmError),
}

/// Linear partial-least-squares model mapping predictor rows to response
/// rows through `n_components` score directions.
#[derive(Debug, Clone, PartialEq)]
pub struct PlsrModel {
    x_stats: NormalizationStats,
    y_stats: NormalizationStats,
    /// Predictor-space weight vectors, one column per component (p × M).
    weights: DMatrix<f64>,
    /// Squared norm of each score vector (M).
    score_gram: DVector<f64>,
    /// Score-response cross products tᵢᵀY₀, one row per component (M × q).
    score_response: DMatrix<f64>,
    /// Assembled coefficient matrix for the current component count (p × q).
    coefficients: DMatrix<f64>,
}

impl PlsrModel {
    pub fn n_components(&self) -> usize {
        self.weights.ncols()
    }

    pub fn n_features(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_targets(&self) -> usize {
        self.score_response.ncols()
    }

    /// Centered-space coefficient matrix (p × q).
    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    pub fn predict(&self, x: &DVector<f64>) -> Result<DVector<f64>, RegressError> {
        if x.len() != self.n_features() {
            return Err(RegressError::FeatureCountMismatch {
                expected: self.n_features(),
                found: x.len(),
            });
        }
        let centered = x - &self.x_stats.column_means;
        Ok(self.coefficients.tr_mul(&centered) + &self.y_stats.column_means)
    }

    /// Predict one response row per predictor row.
    pub fn predict_rows(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, RegressError> {
        if x.ncols() != self.n_features() {
            return Err(RegressError::FeatureCountMismatch {
                expected: self.n_features(),
                found: x.ncols(),
            });
        }
        let x0 = self.x_stats.apply(x)?;
        let mut out = x0 * &self.coefficients;
        for mut row in out.row_iter_mut() {
            row += self.y_stats.column_means.transpose();
        }
        Ok(out)
    }

    /// The model that keeping only the first `m` components would have
    /// produced; no refit happens and predictions nest exactly.
    pub fn truncated(&self, m: usize) -> Result<PlsrModel, RegressError> {
        if m == 0 || m > self.n_components() {
            return Err(RegressError::InvalidComponents {
                requested: m,
                max: self.n_components(),
            });
        }
        let weights = self.weights.columns(0, m).into_owned();
        let score_gram = self.score_gram.rows(0, m).into_owned();
        let score_response = self.score_response.rows(0, m).into_owned();
        let coefficients = assemble_coefficients(&weights, &score_gram, &score_response);
        Ok(PlsrModel {
            x_stats: self.x_stats.clone(),
            y_stats: self.y_stats.clone(),
            weights,
            score_gram,
            score_response,
            coefficients,
        })
    }

    pub fn to_doc(&self) -> PlsrModelDoc {
        PlsrModelDoc {
            version: crate::io::FORMAT_VERSION,
            x_mean: self.x_stats.column_means.iter().copied().collect(),
            y_mean: self.y_stats.column_means.iter().copied().collect(),
            weights: MatrixJson::from_matrix(&self.weights),
            score_gram: self.score_gram.iter().copied().collect(),
            score_response: MatrixJson::from_matrix(&self.score_response),
        }
    }

    pub fn from_doc(doc: &PlsrModelDoc) -> Result<PlsrModel, RegressError> {
        if doc.version != crate::io::FORMAT_VERSION {
            return Err(RegressError::UnsupportedVersion {
                found: doc.version,
                expected: crate::io::FORMAT_VERSION,
            });
        }
        let weights = doc
            .weights
            .to_matrix()
            .map_err(|e| RegressError::MalformedDoc(e.to_string()))?;
        let score_response = doc
            .score_response
            .to_matrix()
            .map_err(|e| RegressError::MalformedDoc(e.to_string()))?;
        let m = weights.ncols();
        if doc.score_gram.len() != m || score_response.nrows() != m {
            return Err(RegressError::MalformedDoc(format!(
                "{} weight columns vs {} score norms vs {} response rows",
                m,
                doc.score_gram.len(),
                score_response.nrows()
            )));
        }
        if doc.x_mean.len() != weights.nrows() || doc.y_mean.len() != score_response.ncols() {
            return Err(RegressError::MalformedDoc(
                "mean lengths do not match the weight/response shapes".into(),
            ));
        }
        if m == 0 {
            return Err(RegressError::MalformedDoc("no components stored".into()));
        }
        if doc.score_gram.iter().any(|g| !g.is_finite() || *g <= 0.0) {
            return Err(RegressError::MalformedDoc(
                "score norms must be positive and finite".into(),
            ));
        }
        let score_gram = DVector::from_vec(doc.score_gram.clone());
        let coefficients = assemble_coefficients(&weights, &score_gram, &score_response);
        Ok(PlsrModel {
            x_stats: center_stats(&doc.x_mean),
            y_stats: center_stats(&doc.y_mean),
            weights,
            score_gram,
            score_response,
            coefficients,
        })
    }
}

/// Serialized form of [`PlsrModel`]; matrices are stored row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlsrModelDoc {
    pub version: u32,
    pub x_mean: Vec<f64>,
    pub y_mean: Vec<f64>,
    pub weights: MatrixJson,
    pub score_gram: Vec<f64>,
    pub score_response: MatrixJson,
}

fn center_stats(means: &[f64]) -> NormalizationStats {
    NormalizationStats {
        column_means: DVector::from_row_slice(means),
        column_norms: DVector::zeros(means.len()),
        mode: Normalization::Center,
    }
}

fn assemble_coefficients(
    weights: &DMatrix<f64>,
    score_gram: &DVector<f64>,
    score_response: &DMatrix<f64>,
) -> DMatrix<f64> {
    let mut scaled = score_response.clone();
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        row /= score_gram[i];
    }
    weights * scaled
}

/// Solve (aᵀa)·x = aᵀ·rhs, the normal equations of the projection onto the
/// columns of `a`.
fn project_coefficients(a: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let gram = a.tr_mul(a);
    gram.lu().solve(&a.tr_mul(rhs))
}

/// Fit a partial-least-squares regression with `n_components` score
/// directions (at most `min(N−1, p)`). Needs at least 3 training rows.
pub fn simpls_fit(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    n_components: usize,
) -> Result<PlsrModel, RegressError> {
    let n = x.nrows();
    if y.nrows() != n {
        return Err(RegressError::RowCountMismatch {
            x_rows: n,
            y_rows: y.nrows(),
        });
    }
    if n < 3 {
        return Err(RegressError::TooFewSamples {
            found: n,
            needed: 3,
        });
    }
    let p = x.ncols();
    let q = y.ncols();
    let max_m = (n - 1).min(p);
    if n_components == 0 || n_components > max_m || p == 0 || q == 0 {
        return Err(RegressError::InvalidComponents {
            requested: n_components,
            max: if q == 0 { 0 } else { max_m },
        });
    }

    let (x0, x_stats) = center_normalize(x, Normalization::Center)?;
    let (y0, y_stats) = center_normalize(y, Normalization::Center)?;

    // The weights depend on the response block only through the column
    // space of the cross product, so a wide response can be replaced by its
    // thin orthogonal compression UΣ without changing any component.
    let y_thin = if q > n {
        let f = thin_svd(&y0);
        let mut compressed = f.u.columns(0, f.rank.max(1)).into_owned();
        for (k, mut col) in compressed.column_iter_mut().enumerate() {
            col *= f.singular_values[k];
        }
        compressed
    } else {
        y0.clone()
    };
    let s0 = x0.tr_mul(&y_thin);

    let mut weights = DMatrix::zeros(p, n_components);
    let mut loadings = DMatrix::zeros(p, n_components);
    let mut scores = DMatrix::zeros(n, n_components);
    let mut score_gram = DVector::zeros(n_components);
    let mut sigma_ref = 0.0;

    for i in 0..n_components {
        let deflated = if i == 0 {
            s0.clone()
        } else {
            let extracted = loadings.columns(0, i);
            let coef = project_coefficients(&extracted.into_owned(), &s0)
                .ok_or(RegressError::RankError { component: i + 1 })?;
            &s0 - extracted * coef
        };
        let f = thin_svd(&deflated);
        let sigma = f.singular_values[0];
        if i == 0 {
            sigma_ref = sigma;
        }
        if sigma <= 1e-12 * sigma_ref || sigma == 0.0 {
            return Err(RegressError::RankError { component: i + 1 });
        }
        let mut r = f.u.column(0).into_owned();
        if i > 0 {
            // One re-orthogonalization pass against the extracted loadings
            // keeps the scores orthogonal to working precision.
            let extracted = loadings.columns(0, i).into_owned();
            let rhs = DMatrix::from_column_slice(p, 1, r.as_slice());
            let coef = project_coefficients(&extracted, &rhs)
                .ok_or(RegressError::RankError { component: i + 1 })?;
            r -= extracted * coef.column(0);
            let norm = r.norm();
            if norm <= 1e-12 {
                return Err(RegressError::RankError { component: i + 1 });
            }
            r /= norm;
        }
        let t = &x0 * &r;
        let tt = t.norm_squared();
        if tt <= f64::EPSILON * x0.norm_squared() {
            return Err(RegressError::RankError { component: i + 1 });
        }
        let loading = x0.tr_mul(&t) / tt;
        weights.set_column(i, &r);
        loadings.set_column(i, &loading);
        scores.set_column(i, &t);
        score_gram[i] = tt;
    }

    let score_response = scores.tr_mul(&y0);
    let coefficients = assemble_coefficients(&weights, &score_gram, &score_response);
    Ok(PlsrModel {
        x_stats,
        y_stats,
        weights,
        score_gram,
        score_response,
        coefficients,
    })
}

/// Gaussian similarity matrix of the training rows: entries
/// exp(−‖xᵢ−xⱼ‖² / width) with width = ratio · max pairwise squared
/// distance. All-identical rows yield the all-ones matrix and width 0.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    pub matrix: DMatrix<f64>,
    pub width: f64,
}

pub fn gaussian_kernel(rows: &DMatrix<f64>, ratio: f64) -> Result<GaussianKernel, RegressError> {
    if !ratio.is_finite() || ratio <= 0.0 {
        return Err(RegressError::InvalidRatio(ratio));
    }
    let n = rows.nrows();
    let mut sq = DMatrix::zeros(n, n);
    let mut max_sq = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (rows.row(i) - rows.row(j)).norm_squared();
            sq[(i, j)] = d;
            sq[(j, i)] = d;
            max_sq = max_sq.max(d);
        }
    }
    if max_sq == 0.0 {
        return Ok(GaussianKernel {
            matrix: DMatrix::from_element(n, n, 1.0),
            width: 0.0,
        });
    }
    let width = ratio * max_sq;
    Ok(GaussianKernel {
        matrix: sq.map(|d| (-d / width).exp()),
        width,
    })
}

/// Similarity profile of one new row against the training rows. A width of
/// 0 (degenerate training set) degrades to an exact-match indicator.
pub fn gaussian_kernel_row(
    train_rows: &DMatrix<f64>,
    width: f64,
    x: &DVector<f64>,
) -> Result<DVector<f64>, RegressError> {
    if x.len() != train_rows.ncols() {
        return Err(RegressError::FeatureCountMismatch {
            expected: train_rows.ncols(),
            found: x.len(),
        });
    }
    Ok(DVector::from_fn(train_rows.nrows(), |i, _| {
        let d = (train_rows.row(i).transpose() - x).norm_squared();
        if width == 0.0 {
            if d == 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            (-d / width).exp()
        }
    }))
}

/// Kernel partial-least-squares model: a linear fit on Gaussian similarity
/// profiles instead of raw predictor rows.
#[derive(Debug, Clone, PartialEq)]
pub struct KplsrModel {
    train_rows: DMatrix<f64>,
    width: f64,
    ratio: f64,
    plsr: PlsrModel,
}

impl KplsrModel {
    pub fn n_components(&self) -> usize {
        self.plsr.n_components()
    }

    pub fn n_features(&self) -> usize {
        self.train_rows.ncols()
    }

    pub fn n_targets(&self) -> usize {
        self.plsr.n_targets()
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn predict(&self, x: &DVector<f64>) -> Result<DVector<f64>, RegressError> {
        let profile = gaussian_kernel_row(&self.train_rows, self.width, x)?;
        self.plsr.predict(&profile)
    }

    /// Keep only the first `m` components; see [`PlsrModel::truncated`].
    pub fn truncated(&self, m: usize) -> Result<KplsrModel, RegressError> {
        Ok(KplsrModel {
            train_rows: self.train_rows.clone(),
            width: self.width,
            ratio: self.ratio,
            plsr: self.plsr.truncated(m)?,
        })
    }

    pub fn to_doc(&self) -> KplsrModelDoc {
        KplsrModelDoc {
            version: crate::io::FORMAT_VERSION,
            train_rows: MatrixJson::from_matrix(&self.train_rows),
            width: self.width,
            ratio: self.ratio,
            plsr: self.plsr.to_doc(),
        }
    }

    pub fn from_doc(doc: &KplsrModelDoc) -> Result<KplsrModel, RegressError> {
        if doc.version != crate::io::FORMAT_VERSION {
            return Err(RegressError::UnsupportedVersion {
                found: doc.version,
                expected: crate::io::FORMAT_VERSION,
            });
        }
        let train_rows = doc
            .train_rows
            .to_matrix()
            .map_err(|e| RegressError::MalformedDoc(e.to_string()))?;
        let plsr = PlsrModel::from_doc(&doc.plsr)?;
        if plsr.n_features() != train_rows.nrows() {
            return Err(RegressError::MalformedDoc(format!(
                "inner model expects {} similarity features but {} training rows are stored",
                plsr.n_features(),
                train_rows.nrows()
            )));
        }
        if !doc.width.is_finite() || doc.width < 0.0 {
            return Err(RegressError::MalformedDoc(format!(
                "stored width {} is not usable",
                doc.width
            )));
        }
        Ok(KplsrModel {
            train_rows,
            width: doc.width,
            ratio: doc.ratio,
            plsr,
        })
    }
}

/// Serialized form of [`KplsrModel`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KplsrModelDoc {
    pub version: u32,
    pub train_rows: MatrixJson,
    pub width: f64,
    pub ratio: f64,
    pub plsr: PlsrModelDoc,
}

/// Fit a Gaussian-kernel partial-least-squares regression. The width is
/// `ratio` times the largest squared pairwise distance of the training
/// rows; components range over 1..=N−1.
pub fn kplsr_fit(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    n_components: usize,
    ratio: f64,
) -> Result<KplsrModel, RegressError> {
    if y.nrows() != x.nrows() {
        return Err(RegressError::RowCountMismatch {
            x_rows: x.nrows(),
            y_rows: y.nrows(),
        });
    }
    let kernel = gaussian_kernel(x, ratio)?;
    let plsr = simpls_fit(&kernel.matrix, y, n_components)?;
    Ok(KplsrModel {
        train_rows: x.clone(),
        width: kernel.width,
        ratio,
        plsr,
    })
}

/// Minimum-norm least-squares coefficients of centered data, via the thin
/// factorization pseudo-inverse. Reference implementation for tests and
/// diagnostics.
pub fn min_norm_lstsq(x0: &DMatrix<f64>, y0: &DMatrix<f64>) -> DMatrix<f64> {
    let f = thin_svd(x0);
    let uty = f.u.columns(0, f.rank).tr_mul(y0);
    let mut scaled = uty;
    for (k, mut row) in scaled.row_iter_mut().enumerate() {
        row /= f.singular_values[k];
    }
    f.v.columns(0, f.rank) * scaled
}
