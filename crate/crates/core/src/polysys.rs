//! Bilinear forms from the flattening kernel, their graded resultant matrices
//! and the left null spaces of those matrices.

use std::io::Write;

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef, Side};

use crate::bigraded::{Bidegree, ResultantLayout};
use crate::error::{Error, Result};
use crate::linalg::{self, frob, Rng};
use crate::scalar::Scalar;
use crate::tolerances::Tolerances;

/// Forms `f_j(x, y) = x^T F_j y` with `F_j` of size `(m+1) x (n+1)`.
#[derive(Clone, Debug)]
pub struct BilinearSystem<T> {
    pub m: usize,
    pub n: usize,
    pub forms: Vec<Mat<T>>,
}

impl<T: Scalar> BilinearSystem<T> {
    pub fn new(m: usize, n: usize, forms: Vec<Mat<T>>) -> Result<Self> {
        if let Some(f) = forms.iter().find(|f| f.nrows() != m + 1 || f.ncols() != n + 1) {
            return Err(Error::ShapeMismatch(format!("form of size {}x{} in a ({m},{n}) system", f.nrows(), f.ncols())));
        }
        Ok(BilinearSystem { m, n, forms })
    }

    pub fn num_forms(&self) -> usize {
        self.forms.len()
    }

    /// The same forms with the roles of x and y exchanged.
    pub fn transposed(&self) -> Self {
        BilinearSystem { m: self.n, n: self.m, forms: self.forms.iter().map(|f| linalg::transpose(f.as_ref())).collect() }
    }

    /// Residuals `beta^T F_j gamma`.
    pub fn evaluate(&self, beta: &[T], gamma: &[T]) -> Vec<T> {
        self.forms.iter().map(|f| bilinear(f.as_ref(), beta, gamma)).collect()
    }

    /// Rows `[ (F_j gamma)^T , beta^T F_j ]`: derivatives in beta, then gamma.
    pub fn jacobian(&self, beta: &[T], gamma: &[T]) -> Mat<T> {
        let (m1, n1) = (self.m + 1, self.n + 1);
        let mut jac = Mat::zeros(self.forms.len(), m1 + n1);
        for (j, f) in self.forms.iter().enumerate() {
            for k in 0..m1 {
                let mut acc = T::zero_value();
                for l in 0..n1 {
                    acc += f[(k, l)] * gamma[l];
                }
                jac[(j, k)] = acc;
            }
            for l in 0..n1 {
                let mut acc = T::zero_value();
                for k in 0..m1 {
                    acc += beta[k] * f[(k, l)];
                }
                jac[(j, m1 + l)] = acc;
            }
        }
        jac
    }

    /// Rows `beta^T F_j`, an `s x (n+1)` matrix whose kernel holds gamma.
    pub fn partner_matrix(&self, beta: &[T]) -> Mat<T> {
        let n1 = self.n + 1;
        Mat::from_fn(self.forms.len(), n1, |j, l| {
            let f = &self.forms[j];
            let mut acc = T::zero_value();
            for (k, &b) in beta.iter().enumerate() {
                acc += b * f[(k, l)];
            }
            acc
        })
    }
}

fn bilinear<T: Scalar>(f: MatRef<'_, T>, x: &[T], y: &[T]) -> T {
    let mut acc = T::zero_value();
    for (k, &xk) in x.iter().enumerate() {
        let mut row = T::zero_value();
        for (l, &yl) in y.iter().enumerate() {
            row += f[(k, l)] * yl;
        }
        acc += xk * row;
    }
    acc
}

/// Spectrum summary of the flattening used by [`kernel_flattening`].
#[derive(Clone, Debug)]
pub struct KernelReport {
    pub singular_values: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Kernel of the `(l+1) x (m+1)(n+1)` flattening as a bilinear system:
/// the right singular vectors of the `(m+1)(n+1) - r` smallest singular
/// values, each reshaped row-major into `F_j`.
pub fn kernel_flattening<T: Scalar>(
    flat: MatRef<'_, T>,
    m: usize,
    n: usize,
    r: usize,
    tol: &Tolerances,
) -> Result<(BilinearSystem<T>, KernelReport)> {
    let cols = (m + 1) * (n + 1);
    if flat.ncols() != cols {
        return Err(Error::ShapeMismatch(format!("flattening has {} columns, expected {cols}", flat.ncols())));
    }
    if r == 0 || r > flat.nrows().min(cols) {
        return Err(Error::RankOutOfRange { rank: r, max: flat.nrows().min(cols) });
    }
    let svd = linalg::svd_full(flat)?;
    let mut sv = svd.s.clone();
    sv.resize(cols, 0.0);
    let top = sv[0];
    if top == 0.0 {
        return Err(Error::ZeroTensor);
    }
    let mut warnings = Vec::new();
    let rank_ratio = sv[r - 1] / top;
    if rank_ratio < tol.rank {
        return Err(Error::FlatteningRankMismatch {
            rank: r,
            detail: format!("sigma_r / sigma_1 = {rank_ratio:.3e} < {:.1e}", tol.rank),
        });
    }
    if r < cols {
        let gap = sv[r] / top;
        let rel = sv[r] / sv[r - 1];
        if rel > tol.gap_hard {
            return Err(Error::FlatteningRankMismatch {
                rank: r,
                detail: format!("sigma_(r+1) / sigma_r = {rel:.3e} > {:.1e}", tol.gap_hard),
            });
        }
        if gap > tol.gap {
            warnings.push(format!("flattening is not exactly rank {r}: sigma_(r+1) / sigma_1 = {gap:.3e}"));
        }
    }
    let forms = (r..cols)
        .map(|c| Mat::from_fn(m + 1, n + 1, |k, l| svd.v[(k * (n + 1) + l, c)]))
        .collect();
    Ok((BilinearSystem::new(m, n, forms)?, KernelReport { singular_values: svd.s, warnings }))
}

/// The graded resultant matrix `R_I(d,e)` in compressed-column storage.
#[derive(Clone, Debug)]
pub struct ResultantMatrix<T> {
    pub layout: ResultantLayout,
    pub nrows: usize,
    pub ncols: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<T>,
}

/// Column `j * shifts + s` holds `u_s * f_j`: the entries of `F_j` placed
/// on the rows of `u_s * x_k * y_l`.
pub fn build_resultant<T: Scalar>(sys: &BilinearSystem<T>, degree: Bidegree) -> Result<ResultantMatrix<T>> {
    let layout = ResultantLayout::new(sys.m, sys.n, degree)?;
    let block = (sys.m + 1) * (sys.n + 1);
    let ncols = layout.cols(sys.num_forms());
    let mut col_ptr = Vec::with_capacity(ncols + 1);
    let mut row_idx = Vec::with_capacity(ncols * block);
    let mut values = Vec::with_capacity(ncols * block);
    col_ptr.push(0);
    for f in &sys.forms {
        for s in 0..layout.shifts {
            let rows = layout.rows_of_shift(s);
            for k in 0..=sys.m {
                for l in 0..=sys.n {
                    row_idx.push(rows[k * (sys.n + 1) + l]);
                    values.push(f[(k, l)]);
                }
            }
            col_ptr.push(row_idx.len());
        }
    }
    Ok(ResultantMatrix { nrows: layout.rows, ncols, layout, col_ptr, row_idx, values })
}

impl<T: Scalar> ResultantMatrix<T> {
    pub fn degree(&self) -> Bidegree {
        self.layout.degree
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn to_dense(&self) -> Mat<T> {
        let mut out = Mat::zeros(self.nrows, self.ncols);
        for c in 0..self.ncols {
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                out[(self.row_idx[p], c)] += self.values[p];
            }
        }
        out
    }

    /// `R R^H`.
    pub fn gram(&self) -> Mat<T> {
        let dense = self.to_dense();
        &dense * dense.adjoint()
    }

    /// MatrixMarket coordinate dump (real, or complex with `re im` pairs).
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let field = if T::FIELD == crate::scalar::Field::Real { "real" } else { "complex" };
        writeln!(w, "%%MatrixMarket matrix coordinate {field} general")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for c in 0..self.ncols {
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                let z = self.values[p].to_c64();
                if T::FIELD == crate::scalar::Field::Real {
                    writeln!(w, "{} {} {:.17e}", self.row_idx[p] + 1, c + 1, z.re)?;
                } else {
                    writeln!(w, "{} {} {:.17e} {:.17e}", self.row_idx[p] + 1, c + 1, z.re, z.im)?;
                }
            }
        }
        Ok(())
    }
}

/// How the left null space of the resultant matrix is computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NullspaceMethod {
    /// Full dense SVD.
    Svd,
    /// Shift-inverted subspace iteration on `R R^H`.
    Eigs,
}

impl NullspaceMethod {
    pub fn name(self) -> &'static str {
        match self {
            NullspaceMethod::Svd => "svd",
            NullspaceMethod::Eigs => "eigs",
        }
    }
}

/// An orthonormal basis of the left null space, as the rows of `n`.
#[derive(Clone, Debug)]
pub struct Cokernel<T> {
    pub n: Mat<T>,
    pub method: NullspaceMethod,
    /// (r+1)-th smallest over r-th smallest singular value of R.
    pub separation: f64,
    /// `||N R||_F / ||R||_F`.
    pub residual: f64,
    /// Iterations used by the Gram eigensolver.
    pub iterations: usize,
    pub warnings: Vec<String>,
}

/// `r x rows` matrix with orthonormal rows spanning the left null space of
/// `R` (rows hold conjugated left singular vectors, so `N R ~ 0`).
pub fn left_nullspace<T: Scalar>(
    res: &ResultantMatrix<T>,
    r: usize,
    method: NullspaceMethod,
    tol: &Tolerances,
    rng: &mut Rng,
) -> Result<Cokernel<T>> {
    let rows = res.nrows;
    if r == 0 || r > rows {
        return Err(Error::CorankMismatch { expected: r, detail: format!("matrix has only {rows} rows") });
    }
    if res.ncols == 0 {
        return Err(Error::ShapeMismatch("resultant matrix has no columns".into()));
    }
    let (n, separation, iterations) = match method {
        NullspaceMethod::Svd => {
            let dense = res.to_dense();
            let svd = linalg::svd_full(dense.as_ref())?;
            let mut ext = svd.s.clone();
            ext.resize(rows, 0.0);
            let top = ext[0].max(f64::MIN_POSITIVE);
            let small = ext[rows - r].max(f64::EPSILON * top);
            let sep = if r == rows { f64::INFINITY } else { ext[rows - r - 1] / small };
            let n = svd.u.as_ref().get(.., rows - r..).adjoint().to_owned();
            (n, sep, 0)
        }
        NullspaceMethod::Eigs => gram_nullspace(res, r, tol, rng)?,
    };
    let mut warnings = Vec::new();
    if separation < tol.separation_hard {
        return Err(Error::CorankMismatch {
            expected: r,
            detail: format!("singular value separation {separation:.3e} below {:.1e}", tol.separation_hard),
        });
    }
    if separation < tol.separation {
        warnings.push(format!("weak cokernel separation {separation:.3e}"));
    }
    let dense = res.to_dense();
    let residual = frob((&n * &dense).as_ref()) / frob(dense.as_ref()).max(f64::MIN_POSITIVE);
    if residual > tol.null {
        warnings.push(format!("cokernel residual {residual:.3e} above {:.1e}", tol.null));
    }
    Ok(Cokernel { n, method, separation, residual, iterations, warnings })
}

/// Smallest eigenpairs of `G = R R^H` by subspace iteration with
/// `(G + shift I)^{-1}` and Rayleigh-Ritz projection.
fn gram_nullspace<T: Scalar>(res: &ResultantMatrix<T>, r: usize, tol: &Tolerances, rng: &mut Rng) -> Result<(Mat<T>, f64, usize)> {
    let rows = res.nrows;
    let g = res.gram();
    let gnorm = frob(g.as_ref()).max(f64::MIN_POSITIVE);
    let block = rows.min(r + (r / 4).max(8));
    let shift = 1e-12 * gnorm;
    let mut shifted = g.clone();
    for i in 0..rows {
        shifted[(i, i)] += T::from_f64(shift);
    }
    let chol = shifted
        .as_ref()
        .llt(Side::Lower)
        .map_err(|e| Error::LinAlg(format!("Cholesky of the shifted Gram matrix failed: {e:?}")))?;
    let mut x = linalg::orthonormalize(linalg::gaussian_mat::<T>(rows, block, rng).as_ref());
    let mut ritz_vals = vec![0.0; block];
    let mut iterations = 0;
    for it in 1..=tol.eigs_max_iter {
        iterations = it;
        let y = chol.solve(x.as_ref());
        let q = linalg::orthonormalize(y.as_ref());
        let gq = &g * &q;
        let h = q.adjoint() * &gq;
        let eig = h
            .as_ref()
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::LinAlg(format!("Rayleigh-Ritz eigensolver failed: {e:?}")))?;
        let w = eig.U().to_owned();
        ritz_vals = eig.S().column_vector().iter().map(|v| v.real_part()).collect();
        x = &q * &w;
        let gx = &gq * &w;
        let gap = if block > r { ritz_vals[r].abs() } else { gnorm };
        let target = (tol.eigs_tol * gap).max(10.0 * f64::EPSILON * gnorm);
        let converged = (0..r).all(|i| {
            let mut acc = 0.0;
            for row in 0..rows {
                acc += (gx[(row, i)] - x[(row, i)].scale_real(ritz_vals[i])).modulus_sqr();
            }
            acc.sqrt() <= target
        });
        if converged && it >= 2 {
            break;
        }
    }
    let floor = f64::EPSILON * gnorm;
    let sep = if block > r {
        (ritz_vals[r].max(0.0) / ritz_vals[r - 1].abs().max(floor)).sqrt()
    } else {
        f64::INFINITY
    };
    let n = x.as_ref().get(.., ..r).adjoint().to_owned();
    Ok((n, sep, iterations))
}
