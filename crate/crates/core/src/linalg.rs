//! Thin wrappers over faer used throughout the pipeline.

use faer::{c64, Mat, MatRef};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_mat<T: Scalar>(rows: usize, cols: usize, rng: &mut Rng) -> Mat<T> {
    let mut out = Mat::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            out[(i, j)] = T::sample_normal(rng);
        }
    }
    out
}

pub fn gaussian_vec<T: Scalar>(len: usize, rng: &mut Rng) -> Vec<T> {
    (0..len).map(|_| T::sample_normal(rng)).collect()
}

pub fn frob<T: Scalar>(a: MatRef<'_, T>) -> f64 {
    let mut acc = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            acc += a[(i, j)].modulus_sqr();
        }
    }
    acc.sqrt()
}

pub fn vec_norm<T: Scalar>(v: &[T]) -> f64 {
    v.iter().map(|x| x.modulus_sqr()).sum::<f64>().sqrt()
}

/// Singular value decomposition with singular values as plain `f64`,
/// sorted nonincreasing.
pub struct SvdParts<T> {
    pub u: Mat<T>,
    pub s: Vec<f64>,
    pub v: Mat<T>,
}

pub fn svd_full<T: Scalar>(a: MatRef<'_, T>) -> Result<SvdParts<T>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(SvdParts { u: Mat::identity(a.nrows(), a.nrows()), s: vec![], v: Mat::identity(a.ncols(), a.ncols()) });
    }
    let svd = a.svd().map_err(|e| Error::LinAlg(format!("svd did not converge: {e:?}")))?;
    let s = svd.S().column_vector().iter().map(|x| x.real_part()).collect();
    Ok(SvdParts { u: svd.U().to_owned(), s, v: svd.V().to_owned() })
}

pub fn svd_thin<T: Scalar>(a: MatRef<'_, T>) -> Result<SvdParts<T>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(SvdParts { u: Mat::zeros(a.nrows(), 0), s: vec![], v: Mat::zeros(a.ncols(), 0) });
    }
    let svd = a.thin_svd().map_err(|e| Error::LinAlg(format!("svd did not converge: {e:?}")))?;
    let s = svd.S().column_vector().iter().map(|x| x.real_part()).collect();
    Ok(SvdParts { u: svd.U().to_owned(), s, v: svd.V().to_owned() })
}

pub fn singular_values<T: Scalar>(a: MatRef<'_, T>) -> Result<Vec<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(vec![]);
    }
    let s = a.singular_values().map_err(|e| Error::LinAlg(format!("svd did not converge: {e:?}")))?;
    Ok(s.into_iter().map(|x| x.real_part()).collect())
}

pub fn to_c64<T: Scalar>(a: MatRef<'_, T>) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)].to_c64())
}

pub fn from_c64<T: Scalar>(a: MatRef<'_, c64>) -> Mat<T> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| T::from_c64(a[(i, j)]))
}

/// Conjugate transpose, materialized.
pub fn adjoint<T: Scalar>(a: MatRef<'_, T>) -> Mat<T> {
    Mat::from_fn(a.ncols(), a.nrows(), |i, j| a[(j, i)].conjugate())
}

/// Plain transpose (no conjugation), materialized.
pub fn transpose<T: Scalar>(a: MatRef<'_, T>) -> Mat<T> {
    a.transpose().to_owned()
}

pub fn column<T: Scalar>(a: MatRef<'_, T>, j: usize) -> Vec<T> {
    (0..a.nrows()).map(|i| a[(i, j)]).collect()
}

pub fn from_columns<T: Scalar>(rows: usize, cols: &[Vec<T>]) -> Mat<T> {
    Mat::from_fn(rows, cols.len(), |i, j| cols[j][i])
}

/// Least-squares solution of `a x = b` by Householder QR. Fails when the
/// triangular factor has a diagonal entry below `tol` times the largest.
pub fn lstsq<T: Scalar>(a: MatRef<'_, T>, b: MatRef<'_, T>, tol: f64) -> Result<Mat<T>> {
    assert_eq!(a.nrows(), b.nrows());
    assert!(a.nrows() >= a.ncols(), "least squares needs a tall matrix");
    let qr = a.col_piv_qr();
    let r = qr.thin_R();
    let n = a.ncols();
    let diag: Vec<f64> = (0..n).map(|i| r[(i, i)].modulus()).collect();
    let top = diag.iter().cloned().fold(0.0, f64::max);
    let low = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if n > 0 && !(low > tol * top) {
        return Err(Error::LinAlg(format!("least-squares matrix is rank deficient (|r_min|/|r_max| = {:.3e})", low / top)));
    }
    let q = qr.compute_thin_Q();
    let y = solve_upper(r.get(..n, ..n), (q.adjoint() * b).as_ref());
    let (fwd, _) = qr.P().arrays();
    let mut x = Mat::zeros(n, b.ncols());
    for (pos, &orig) in fwd.iter().enumerate() {
        for c in 0..b.ncols() {
            x[(orig, c)] = y[(pos, c)];
        }
    }
    Ok(x)
}

/// Least squares followed by `steps` rounds of iterative refinement, each
/// correcting against a residual computed in double-double arithmetic.
pub fn lstsq_refined<T: Scalar>(a: MatRef<'_, T>, b: MatRef<'_, T>, tol: f64, steps: usize) -> Result<Mat<T>> {
    let mut x = lstsq(a, b, tol)?;
    for _ in 0..steps {
        let res = accurate_residual(b, a, x.as_ref());
        let dx = lstsq(a, res.as_ref(), tol)?;
        x += dx;
    }
    Ok(x)
}

/// `b - a x`, accumulated in double-double and rounded once per entry.
pub fn accurate_residual<T: Scalar>(b: MatRef<'_, T>, a: MatRef<'_, T>, x: MatRef<'_, T>) -> Mat<T> {
    assert_eq!(a.ncols(), x.nrows());
    assert_eq!((a.nrows(), x.ncols()), (b.nrows(), b.ncols()));
    Mat::from_fn(b.nrows(), b.ncols(), |i, j| {
        let mut acc = DdComplex::from_scalar(b[(i, j)]);
        for t in 0..a.ncols() {
            acc = acc.sub(DdComplex::from_scalar(a[(i, t)]).mul_scalar(x[(t, j)]));
        }
        acc.round()
    })
}

/// Error-free sum: `a + b = s + e` exactly.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Error-free product via a fused multiply-add.
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    fn new(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    fn renorm(hi: f64, lo: f64) -> Self {
        let s = hi + lo;
        Dd { hi: s, lo: lo - (s - hi) }
    }

    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        Dd::renorm(s, e + self.lo + o.lo)
    }

    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    fn mul_f64(self, x: f64) -> Dd {
        let (p, e) = two_prod(self.hi, x);
        Dd::renorm(p, e + self.lo * x)
    }
}

/// Complex number with double-double parts. Real scalars keep a zero
/// imaginary part throughout.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct DdComplex {
    re: Dd,
    im: Dd,
}

impl DdComplex {
    pub(crate) fn from_scalar<T: Scalar>(z: T) -> Self {
        let z = z.to_c64();
        DdComplex { re: Dd::new(z.re), im: Dd::new(z.im) }
    }

    pub(crate) fn mul_scalar<T: Scalar>(self, z: T) -> Self {
        let z = z.to_c64();
        if T::FIELD == crate::scalar::Field::Real {
            return DdComplex { re: self.re.mul_f64(z.re), im: Dd::default() };
        }
        DdComplex {
            re: self.re.mul_f64(z.re).add(self.im.mul_f64(z.im).neg()),
            im: self.re.mul_f64(z.im).add(self.im.mul_f64(z.re)),
        }
    }

    pub(crate) fn sub(self, o: DdComplex) -> Self {
        DdComplex { re: self.re.add(o.re.neg()), im: self.im.add(o.im.neg()) }
    }

    pub(crate) fn round<T: Scalar>(self) -> T {
        T::from_c64(c64::new(self.re.hi + self.re.lo, self.im.hi + self.im.lo))
    }
}

/// Solves `t x = b` for upper-triangular `t` by back substitution.
pub fn solve_upper<T: Scalar>(t: MatRef<'_, T>, b: MatRef<'_, T>) -> Mat<T> {
    let n = t.nrows();
    let mut x = b.to_owned();
    for c in 0..x.ncols() {
        for i in (0..n).rev() {
            let mut acc = x[(i, c)];
            for k in i + 1..n {
                acc -= t[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = acc / t[(i, i)];
        }
    }
    x
}

/// Orthonormal basis for the column span (thin QR, no rank detection).
pub fn orthonormalize<T: Scalar>(a: MatRef<'_, T>) -> Mat<T> {
    a.qr().compute_thin_Q()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accurate_residual_sees_below_rounding() {
        // 1 + 2^-60 - 1 vanishes in plain arithmetic
        let tiny = 2f64.powi(-60);
        let a = Mat::from_fn(1, 3, |_, j| [1.0, tiny, -1.0][j]);
        let x = Mat::from_fn(3, 1, |_, _| 1.0);
        let b = Mat::<f64>::zeros(1, 1);
        assert_eq!(accurate_residual(b.as_ref(), a.as_ref(), x.as_ref())[(0, 0)], -tiny);
        let z = Mat::from_fn(1, 3, |_, j| c64::new(0.0, [1.0, tiny, -1.0][j]));
        let w = Mat::from_fn(3, 1, |_, _| c64::new(0.0, 1.0));
        let r = accurate_residual(Mat::<c64>::zeros(1, 1).as_ref(), z.as_ref(), w.as_ref())[(0, 0)];
        assert_eq!(r, c64::new(tiny, 0.0));
    }

    #[test]
    fn refinement_keeps_exact_solutions() {
        let a = Mat::from_fn(4, 2, |i, j| (i + 2 * j) as f64 + 1.0);
        let x = Mat::from_fn(2, 1, |i, _| [0.5, -2.0][i]);
        let b = &a * &x;
        let got = lstsq_refined(a.as_ref(), b.as_ref(), 1e-12, 2).unwrap();
        assert!((got - x).norm_max() < 1e-15);
    }

    #[test]
    fn lstsq_recovers_exact_solution() {
        let mut r = rng(3);
        let a: Mat<f64> = gaussian_mat(7, 3, &mut r);
        let x: Mat<f64> = gaussian_mat(3, 2, &mut r);
        let b = &a * &x;
        let got = lstsq(a.as_ref(), b.as_ref(), 1e-12).unwrap();
        assert!(frob((&got - &x).as_ref()) < 1e-12);
    }

    #[test]
    fn lstsq_complex() {
        let mut r = rng(4);
        let a: Mat<c64> = gaussian_mat(6, 4, &mut r);
        let x: Mat<c64> = gaussian_mat(4, 1, &mut r);
        let b = &a * &x;
        let got = lstsq(a.as_ref(), b.as_ref(), 1e-12).unwrap();
        assert!(frob((&got - &x).as_ref()) < 1e-12);
    }

    #[test]
    fn lstsq_rejects_rank_deficient() {
        let a = Mat::from_fn(4, 2, |i, _| i as f64);
        let b = Mat::from_fn(4, 1, |i, _| i as f64);
        assert!(lstsq(a.as_ref(), b.as_ref(), 1e-12).is_err());
    }
}
