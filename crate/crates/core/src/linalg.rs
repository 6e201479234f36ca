//! Dense matrix helpers shared by the estimator, projection and confidence-set code.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;


/// Squared Frobenius norm.
pub fn frob_sq(m: &Matrix) -> f64 {
    m.iter().map(|x| x * x).sum()
}

/// Squared Frobenius distance, without allocating the difference.
pub fn frob_dist_sq(a: &Matrix, b: &Matrix) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Largest absolute entry.
pub fn sup_norm(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Clamp every entry to `[-bound, bound]` in place.
pub fn clamp_entries(m: &mut Matrix, bound: f64) {
    m.iter_mut().for_each(|x| *x = x.clamp(-bound, bound));
}

/// Thin SVD with singular values sorted in decreasing order.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub v_t: Matrix,
}

impl Spectrum {
    pub fn of(m: &Matrix) -> Result<Self> {
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical(
                "SVD input contains non-finite entries".into(),
            ));
        }
        // nalgebra's SVD returns inconsistent vectors for exactly rank-deficient input
        let (rows, cols) = m.shape();
        let svd = faer::Mat::<f64>::from_fn(rows, cols, |i, j| m[(i, j)])
            .thin_svd()
            .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
        let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());

        // sort explicitly rather than rely on the backend's ordering
        let mut order: Vec<usize> = (0..s.nrows()).collect();
        order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
        let singular_values = order.iter().map(|&i| s[i]).collect();
        let u = Matrix::from_fn(rows, order.len(), |r, c| u[(r, order[c])]);
        let v_t = Matrix::from_fn(order.len(), cols, |r, c| v[(c, order[r])]);
        if u.iter().chain(v_t.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Numerical("SVD produced non-finite vectors".into()));
        }
        Ok(Self {
            u,
            singular_values,
            v_t,
        })
    }

    pub fn len(&self) -> usize {
        self.singular_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.singular_values.is_empty()
    }

    /// `Σ_i f(s_i) u_i v_iᵀ`, skipping terms where `f` returns zero.
    pub fn rebuild_with(&self, f: impl Fn(usize, f64) -> f64) -> Matrix {
        let (rows, cols) = (self.u.nrows(), self.v_t.ncols());
        let mut out = Matrix::zeros(rows, cols);
        for (i, &s) in self.singular_values.iter().enumerate() {
            let w = f(i, s);
            if w == 0.0 {
                continue;
            }
            let u = self.u.column(i);
            let v = self.v_t.row(i);
            out.ger(w, &u, &v.transpose(), 1.0);
        }
        out
    }

    /// Best rank-`k` approximation (Eckart–Young).
    pub fn truncate(&self, k: usize) -> Matrix {
        self.rebuild_with(|i, s| if i < k { s } else { 0.0 })
    }

    /// Singular value soft-thresholding at level `tau`.
    pub fn soft_threshold(&self, tau: f64) -> Matrix {
        self.rebuild_with(|_, s| (s - tau).max(0.0))
    }

    /// `Σ_{i ≥ k} s_i²`, the squared Frobenius error of [`Spectrum::truncate`].
    pub fn tail_energy(&self, k: usize) -> f64 {
        self.singular_values.iter().skip(k).map(|s| s * s).sum()
    }

    pub fn nuclear_norm(&self) -> f64 {
        self.singular_values.iter().sum()
    }

    /// Number of singular values above `rel_tol · s_max`.
    pub fn numerical_rank(&self, rel_tol: f64) -> usize {
        let top = self.singular_values.first().copied().unwrap_or(0.0);
        if top == 0.0 {
            return 0;
        }
        self.singular_values
            .iter()
            .filter(|&&s| s > rel_tol * top)
            .count()
    }
}

pub fn nuclear_norm(m: &Matrix) -> Result<f64> {
    Ok(Spectrum::of(m)?.nuclear_norm())
}

pub fn numerical_rank(m: &Matrix, rel_tol: f64) -> Result<usize> {
    Ok(Spectrum::of(m)?.numerical_rank(rel_tol))
}
