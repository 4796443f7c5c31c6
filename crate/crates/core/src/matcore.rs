//! Dense complex-matrix backbone shared by the optimizers.
//!
//! Matrices are `nalgebra` dynamic matrices over `Complex<f64>`. The three
//! numerically sensitive primitives live here: a Hermitian-positive-definite
//! log-determinant (base 2), HPD linear solves, and a full SVD whose right
//! factor is always the complete M×M basis (the analog initializer needs
//! more right-singular vectors than the channel rank provides).
//!
//! The Cholesky factorization is hand-rolled so that the log-determinant path
//! stays independent of the eigensolver used as a test oracle.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

/// Dense complex matrix used throughout the crate.
pub type CMat = DMatrix<Complex64>;

/// Relative asymmetry tolerance for the Hermitian check.
pub const HERM_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum MatError {
    #[error("matrix is not Hermitian (relative asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("SVD failed to converge")]
    ConvergenceFailure,
    #[error("matrix contains non-finite entries")]
    NonFinite,
}

pub fn cplx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Build a matrix from row-major real/imag pairs.
pub fn from_rows(rows: usize, cols: usize, entries: &[Complex64]) -> CMat {
    assert_eq!(entries.len(), rows * cols, "entry count must be rows*cols");
    CMat::from_fn(rows, cols, |i, j| entries[i * cols + j])
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn zeros(rows: usize, cols: usize) -> CMat {
    CMat::zeros(rows, cols)
}

/// Conjugate transpose.
pub fn adjoint(a: &CMat) -> CMat {
    a.adjoint()
}

pub fn frob_norm(a: &CMat) -> f64 {
    a.norm()
}

pub fn all_finite(a: &CMat) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Real part of the Frobenius inner product ⟨A, B⟩ = Tr[Aᴴ B].
pub fn inner_re(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

fn check_square_hermitian(a: &CMat) -> Result<(), MatError> {
    if a.nrows() != a.ncols() {
        return Err(MatError::DimensionMismatch(format!(
            "expected square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if !all_finite(a) {
        return Err(MatError::NonFinite);
    }
    let norm = a.norm();
    let asym = (a - a.adjoint()).norm();
    let rel = if norm > 0.0 { asym / norm } else { asym };
    if rel > HERM_TOL {
        return Err(MatError::NotHermitian(rel));
    }
    Ok(())
}

/// Lower-triangular Cholesky factor of a Hermitian positive definite matrix.
///
/// The input is symmetrized as (A+Aᴴ)/2 first; the optimizers build their
/// Gram matrices as I + FFᴴ, which is Hermitian up to round-off only.
struct CholeskyHpd {
    l: CMat,
}

impl CholeskyHpd {
    fn new(a: &CMat) -> Result<Self, MatError> {
        check_square_hermitian(a)?;
        let n = a.nrows();
        let h = (a + a.adjoint()).scale(0.5);
        let mut l = CMat::zeros(n, n);
        for j in 0..n {
            let mut d = h[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(MatError::NotPositiveDefinite);
            }
            let djj = d.sqrt();
            l[(j, j)] = cplx(djj, 0.0);
            for i in (j + 1)..n {
                let mut s = h[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Self { l })
    }

    /// Base-2 log-determinant of the factored matrix.
    fn log2_det(&self) -> f64 {
        let n = self.l.nrows();
        let mut acc = 0.0;
        for j in 0..n {
            acc += self.l[(j, j)].re.ln();
        }
        2.0 * acc / std::f64::consts::LN_2
    }

    /// Solve A X = B through the factor (forward then backward substitution).
    fn solve(&self, b: &CMat) -> CMat {
        let n = self.l.nrows();
        let mut x = b.clone();
        for col in 0..x.ncols() {
            // L y = b
            for i in 0..n {
                let mut s = x[(i, col)];
                for k in 0..i {
                    s -= self.l[(i, k)] * x[(k, col)];
                }
                x[(i, col)] = s / self.l[(i, i)];
            }
            // Lᴴ x = y
            for i in (0..n).rev() {
                let mut s = x[(i, col)];
                for k in (i + 1)..n {
                    s -= self.l[(k, i)].conj() * x[(k, col)];
                }
                x[(i, col)] = s / self.l[(i, i)];
            }
        }
        x
    }
}

/// log2 |A| for Hermitian positive definite A.
pub fn logdet_hpd(a: &CMat) -> Result<f64, MatError> {
    Ok(CholeskyHpd::new(a)?.log2_det())
}

/// Solve A X = B for Hermitian positive definite A.
pub fn solve_hpd(a: &CMat, b: &CMat) -> Result<CMat, MatError> {
    if a.nrows() != b.nrows() {
        return Err(MatError::DimensionMismatch(format!(
            "A is {}x{} but B has {} rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    Ok(CholeskyHpd::new(a)?.solve(b))
}

/// Full SVD: A = U diag(s) Vh with U of size N×N and Vh of size M×M.
///
/// Singular values are in descending order. Phases are pinned by requiring
/// the first component of each right-singular vector with modulus above
/// 1e-12 to be real and positive, so the factorization is reproducible.
/// Columns beyond rank(A) are an orthonormal completion of the basis.
pub fn svd_full(a: &CMat) -> Result<(CMat, Vec<f64>, CMat), MatError> {
    if !all_finite(a) {
        return Err(MatError::NonFinite);
    }
    let (n, m) = a.shape();
    let k = n.min(m);
    let svd = a
        .clone()
        .try_svd(true, true, f64::EPSILON * 16.0, 1000)
        .ok_or(MatError::ConvergenceFailure)?;
    let u_thin = svd.u.ok_or(MatError::ConvergenceFailure)?;
    let vt_thin = svd.v_t.ok_or(MatError::ConvergenceFailure)?;

    // Sort descending by singular value.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));

    let mut s = Vec::with_capacity(k);
    let mut u_cols: Vec<Vec<Complex64>> = Vec::with_capacity(k);
    let mut v_cols: Vec<Vec<Complex64>> = Vec::with_capacity(k);
    for &idx in &order {
        s.push(svd.singular_values[idx]);
        let u_col: Vec<Complex64> = (0..n).map(|i| u_thin[(i, idx)]).collect();
        // Right-singular vector = conjugated row of Vh.
        let v_col: Vec<Complex64> = (0..m).map(|j| vt_thin[(idx, j)].conj()).collect();
        let (u_col, v_col) = pin_phase_pair(u_col, v_col);
        u_cols.push(u_col);
        v_cols.push(v_col);
    }
    complete_basis(&mut u_cols, n);
    complete_basis(&mut v_cols, m);

    let u = CMat::from_fn(n, n, |i, j| u_cols[j][i]);
    let vh = CMat::from_fn(m, m, |i, j| v_cols[i][j].conj());

    // Paranoia: catch a silently wrong factorization before it propagates.
    let sigma = CMat::from_fn(n, m, |i, j| {
        if i == j {
            cplx(s[i], 0.0)
        } else {
            Complex64::default()
        }
    });
    let resid = (&u * sigma * &vh - a).norm();
    let scale = a.norm().max(1.0);
    if resid > 1e-9 * scale {
        return Err(MatError::ConvergenceFailure);
    }
    Ok((u, s, vh))
}

/// Rotate a (u, v) singular-vector pair so v's first significant entry is
/// real-positive; the shared phase keeps u σ vᴴ unchanged.
fn pin_phase_pair(
    mut u: Vec<Complex64>,
    mut v: Vec<Complex64>,
) -> (Vec<Complex64>, Vec<Complex64>) {
    if let Some(z) = v.iter().find(|z| z.norm() > 1e-12) {
        let phase = z / z.norm();
        let rot = phase.conj();
        for x in u.iter_mut() {
            *x *= rot;
        }
        for x in v.iter_mut() {
            *x *= rot;
        }
    }
    (u, v)
}

/// Extend a set of orthonormal columns to a full basis of C^dim by
/// Gram-Schmidt over the canonical basis vectors, in order.
fn complete_basis(cols: &mut Vec<Vec<Complex64>>, dim: usize) {
    let mut e = 0usize;
    while cols.len() < dim {
        assert!(e < dim, "basis completion ran out of candidates");
        let mut cand = vec![Complex64::default(); dim];
        cand[e] = cplx(1.0, 0.0);
        e += 1;
        // Two rounds of projection for orthogonality at round-off level.
        for _ in 0..2 {
            for col in cols.iter() {
                let proj: Complex64 =
                    col.iter().zip(cand.iter()).map(|(c, x)| c.conj() * x).sum();
                for (x, c) in cand.iter_mut().zip(col.iter()) {
                    *x -= proj * c;
                }
            }
        }
        let norm: f64 = cand.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-8 {
            for x in cand.iter_mut() {
                *x /= norm;
            }
            let (_, cand) = pin_phase_pair(Vec::new(), cand);
            cols.push(cand);
        }
    }
}
