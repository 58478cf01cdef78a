//! Internal numerically robust thin SVD.
//!
//! Frame matrices here are short-and-wide and rank deficient by
//! construction (centering removes one direction), a regime where the
//! iterative bidiagonal SVD can silently lose several digits. The classical
//! small-gram route is reliable instead: eigendecompose the smaller of Y·Yᵀ
//! and Yᵀ·Y symmetrically, then recover the other factor's columns by
//! projection. Squaring halves the attainable precision, so directions with
//! singular values below 1e-6 of the largest are treated as null and
//! zero-filled; everything retained is accurate to ~1e-12 relative.

use nalgebra::{DMatrix, DVector};

/// Thin SVD `y = u · diag(s) · vᵀ` with `r = min(nrows, ncols)` columns.
///
/// Guarantees: `s` is sorted descending; columns of `u` and `v` past `rank`
/// are exactly zero (as are their singular values); each retained `v` column
/// has its largest-magnitude entry positive, with the matching `u` column
/// flipped to preserve the product.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
    pub rank: usize,
}

/// Fraction of the leading singular value below which a direction counts as
/// null. The gram route squares the spectrum, so noise in a true-zero
/// eigenvalue sits near ε·σ₁² ≈ (1.5e-8·σ₁)²; 1e-6 keeps a safe margin.
const RANK_CUTOFF: f64 = 1e-6;

pub fn thin_svd(y: &DMatrix<f64>) -> ThinSvd {
    let (n, d) = y.shape();
    let r = n.min(d);
    let mut u = DMatrix::zeros(n, r);
    let mut v = DMatrix::zeros(d, r);
    let mut s = DVector::zeros(r);
    if r == 0 {
        return ThinSvd {
            u,
            singular_values: s,
            v,
            rank: 0,
        };
    }

    let wide = d >= n;
    let gram = if wide {
        y * y.transpose()
    } else {
        y.transpose() * y
    };
    let eig = nalgebra::SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("symmetric eigenvalues are finite")
    });

    let sigma_max = eig.eigenvalues[order[0]].max(0.0).sqrt();
    let cutoff = sigma_max * RANK_CUTOFF;
    let mut rank = 0;
    for (k, &i) in order.iter().enumerate() {
        let sigma = eig.eigenvalues[i].max(0.0).sqrt();
        if sigma <= cutoff || sigma == 0.0 {
            break;
        }
        s[k] = sigma;
        if wide {
            u.set_column(k, &eig.eigenvectors.column(i));
            let col = (y.transpose() * u.column(k)) / sigma;
            v.set_column(k, &col);
        } else {
            v.set_column(k, &eig.eigenvectors.column(i));
            let col = (y * v.column(k)) / sigma;
            u.set_column(k, &col);
        }
        rank = k + 1;
    }

    // Deterministic orientation: dominant entry of each v column positive.
    for k in 0..rank {
        let col = v.column(k);
        let mut best = 0.0;
        let mut sign = 1.0;
        for x in col.iter() {
            if x.abs() > best {
                best = x.abs();
                sign = x.signum();
            }
        }
        if sign < 0.0 {
            v.column_mut(k).neg_mut();
            u.column_mut(k).neg_mut();
        }
    }

    ThinSvd {
        u,
        singular_values: s,
        v,
        rank,
    }
}
