//! Pre-normal forms and the eigenvalue problems they induce.
//!
//! A pre-normal form is an `r x HF_S(d,e)` matrix `N` whose kernel is the
//! degree-`(d,e)` part of the ideal. Restricting `N` to multiples of a
//! generic form `h0` and of `h * x_k` gives matrices whose quotients
//! `M_k = (N_h0|B)^{-1} N_{h x_k}|B` commute and have the values
//! `(h x_k / h0)(zeta_i)` as eigenvalues.

use faer::linalg::solvers::DenseSolveCore;
use faer::{c64, Mat, MatRef};

use crate::bigraded::{Bidegree, MonomialBasis, ResultantLayout};
use crate::error::{Error, Result};
use crate::linalg::{self, frob, Rng};
use crate::scalar::Scalar;
use crate::tolerances::Tolerances;

/// Which factor the eigenvalues of a family reveal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Reveals {
    /// Coordinates of the x-points (`beta`).
    X,
    /// Coordinates of the y-points (`gamma`).
    Y,
}

/// A left null space basis of `R_I(d,e)` together with its indexing.
#[derive(Clone, Debug)]
pub struct PreNormalForm<T> {
    pub n: Mat<T>,
    pub degree: Bidegree,
    pub basis: MonomialBasis,
    layout: ResultantLayout,
}

impl<T: Scalar> PreNormalForm<T> {
    pub fn new(n: Mat<T>, m: usize, ny: usize, degree: Bidegree) -> Result<Self> {
        let basis = MonomialBasis::new(m, ny, degree);
        if n.ncols() != basis.len() {
            return Err(Error::ShapeMismatch(format!("pre-normal form has {} columns, S_{degree} has {}", n.ncols(), basis.len())));
        }
        let layout = ResultantLayout::new(m, ny, degree)?;
        Ok(PreNormalForm { n, degree, basis, layout })
    }

    pub fn rank(&self) -> usize {
        self.n.nrows()
    }

    pub fn shift_degree(&self) -> Bidegree {
        self.degree.shift()
    }

    /// `N_{a',b'}` for the `s`-th monomial of degree `(d-1, e-1)`: column
    /// `(k, l)` is the column of `N` at `x^{a'+e_k} y^{b'+e_l}`.
    pub fn shifted_by_index(&self, s: usize) -> Mat<T> {
        let rows = self.layout.rows_of_shift(s);
        Mat::from_fn(self.n.nrows(), rows.len(), |i, c| self.n[(i, rows[c])])
    }

    /// [`shifted_by_index`](Self::shifted_by_index) addressed by exponents.
    pub fn shifted_submatrix(&self, a: &[u32], b: &[u32]) -> Result<Mat<T>> {
        let shift = self.shift_degree();
        let ok = a.len() == self.basis.m + 1
            && b.len() == self.basis.n + 1
            && a.iter().sum::<u32>() as usize == shift.d
            && b.iter().sum::<u32>() as usize == shift.e;
        if !ok {
            return Err(Error::ShapeMismatch(format!("shift {a:?},{b:?} is not a monomial of degree {shift}")));
        }
        let lower = MonomialBasis::new(self.basis.m, self.basis.n, shift);
        Ok(self.shifted_by_index(lower.index_of(a, b)))
    }

    /// `sum_s c_s N_{shift s}` for coefficients over `S_(d-1, e-1)`.
    pub fn combine_shifts(&self, coeffs: &[T]) -> Mat<T> {
        assert_eq!(coeffs.len(), self.layout.shifts);
        let mut acc = Mat::<T>::zeros(self.n.nrows(), (self.basis.m + 1) * (self.basis.n + 1));
        for (s, &c) in coeffs.iter().enumerate() {
            if c == T::zero_value() {
                continue;
            }
            let sub = self.shifted_by_index(s);
            for j in 0..acc.ncols() {
                for i in 0..acc.nrows() {
                    acc[(i, j)] += c * sub[(i, j)];
                }
            }
        }
        acc
    }

    pub fn num_shifts(&self) -> usize {
        self.layout.shifts
    }
}

/// Random `h0` in `S_(d-1, e-1)` and `N_h0`.
pub fn make_h0<T: Scalar>(pnf: &PreNormalForm<T>, rng: &mut Rng) -> (Vec<T>, Mat<T>) {
    let coeffs = linalg::gaussian_vec::<T>(pnf.num_shifts(), rng);
    let n_h0 = pnf.combine_shifts(&coeffs);
    (coeffs, n_h0)
}

/// The matrices the eigenvalue problem is built from: `N_h0` and one
/// `N_g` per coordinate function `g`, all on the same column index set.
#[derive(Clone, Debug)]
pub struct ShiftedFamily<T> {
    pub h0: Vec<T>,
    /// Coefficients of `h` over `S_(d-2, e-1)`; `[1]` when `h = 1`.
    pub h: Vec<T>,
    pub n_h0: Mat<T>,
    pub n_g: Vec<Mat<T>>,
    pub reveals: Reveals,
}

/// Family for a normal form of degree `(d, e)` with `d >= 2`: `g = h x_k`.
/// `h0` and `h` are drawn from `rng` unless given.
pub fn general_family<T: Scalar>(
    pnf: &PreNormalForm<T>,
    h0: Option<Vec<T>>,
    h: Option<Vec<T>>,
    rng: &mut Rng,
) -> Result<ShiftedFamily<T>> {
    let deg = pnf.degree;
    if deg.d < 2 || deg.e < 1 {
        return Err(Error::ShapeMismatch(format!("the multiplication family needs d >= 2 and e >= 1, got {deg}")));
    }
    let (m, ny) = (pnf.basis.m, pnf.basis.n);
    let (h0, n_h0) = match h0 {
        Some(c) => {
            if c.len() != pnf.num_shifts() {
                return Err(Error::ShapeMismatch(format!("h0 needs {} coefficients", pnf.num_shifts())));
            }
            let n_h0 = pnf.combine_shifts(&c);
            (c, n_h0)
        }
        None => make_h0(pnf, rng),
    };
    let shift = deg.shift();
    let h_degree = Bidegree::new(shift.d - 1, shift.e);
    let h_basis = MonomialBasis::new(m, ny, h_degree);
    let h = match h {
        Some(c) => {
            if c.len() != h_basis.len() {
                return Err(Error::ShapeMismatch(format!("h needs {} coefficients", h_basis.len())));
            }
            c
        }
        None if h_basis.len() == 1 => vec![T::one_value()],
        None => linalg::gaussian_vec::<T>(h_basis.len(), rng),
    };
    // raise[u * (m+1) + k] = index of x_k * u among the shifts
    let shift_basis = MonomialBasis::new(m, ny, shift);
    let raise = shift_basis.x_raise_table(&h_basis);
    let n_g = (0..=m)
        .map(|k| {
            let mut coeffs = vec![T::zero_value(); pnf.num_shifts()];
            for (u, &c) in h.iter().enumerate() {
                coeffs[raise[u * (m + 1) + k]] += c;
            }
            pnf.combine_shifts(&coeffs)
        })
        .collect();
    Ok(ShiftedFamily { h0, h, n_h0, n_g, reveals: Reveals::X })
}

/// Pencil family at degree (1,1) for `r <= m+1` with independent x-points.
///
/// `N` spans the row space of the flattening. The block of columns
/// `x_0 y_l, ..., x_m y_l` represents multiplication by `y_l` on `S_(1,0)`;
/// `h0` is a random combination of the `y_l`, so the eigenvalues reveal the
/// y-points.
pub fn pencil_family<T: Scalar>(flat: MatRef<'_, T>, m: usize, ny: usize, r: usize, rng: &mut Rng) -> Result<ShiftedFamily<T>> {
    let cols = (m + 1) * (ny + 1);
    if flat.ncols() != cols {
        return Err(Error::ShapeMismatch(format!("flattening has {} columns, expected {cols}", flat.ncols())));
    }
    if r == 0 || r > m + 1 || r > flat.nrows() {
        return Err(Error::RankOutOfRange { rank: r, max: (m + 1).min(flat.nrows()) });
    }
    let svd = linalg::svd_full(flat)?;
    let n = svd.v.as_ref().get(.., ..r).adjoint().to_owned();
    Ok(pencil_from_rowspace(n.as_ref(), m, ny, rng))
}

/// [`pencil_family`] from an orthonormal basis of the flattening's row
/// space, given as the rows of `n`.
pub fn pencil_from_rowspace<T: Scalar>(n: MatRef<'_, T>, m: usize, ny: usize, rng: &mut Rng) -> ShiftedFamily<T> {
    let r = n.nrows();
    let block = |l: usize| Mat::from_fn(r, m + 1, |i, k| n[(i, k * (ny + 1) + l)]);
    let n_g: Vec<Mat<T>> = (0..=ny).map(block).collect();
    let h0 = linalg::gaussian_vec::<T>(ny + 1, rng);
    let mut n_h0 = Mat::<T>::zeros(r, m + 1);
    for (l, &c) in h0.iter().enumerate() {
        for j in 0..m + 1 {
            for i in 0..r {
                n_h0[(i, j)] += c * n_g[l][(i, j)];
            }
        }
    }
    ShiftedFamily { h0, h: vec![T::one_value()], n_h0, n_g, reveals: Reveals::Y }
}

/// Pivoted QR of `N_h0`: `N_h0[:, perm] = Q T`, with `B = perm[..r]`.
#[derive(Clone, Debug)]
pub struct BasisChoice<T> {
    pub q: Mat<T>,
    /// The leading `r x r` upper-triangular block.
    pub t: Mat<T>,
    pub perm: Vec<usize>,
    /// Condition number of `N_h0|B`.
    pub condition: f64,
}

impl<T> BasisChoice<T> {
    pub fn basis(&self) -> &[usize] {
        &self.perm[..self.q.ncols()]
    }
}

pub fn choose_basis<T: Scalar>(n_h0: MatRef<'_, T>, tol: &Tolerances) -> Result<BasisChoice<T>> {
    let r = n_h0.nrows();
    if r == 0 || n_h0.ncols() < r {
        return Err(Error::BasisDeficient(format!("{} candidate columns for {r} basis elements", n_h0.ncols())));
    }
    let qr = n_h0.col_piv_qr();
    let full_t = qr.thin_R();
    let t = full_t.get(.., ..r).to_owned();
    let first = t[(0, 0)].modulus();
    let last = t[(r - 1, r - 1)].modulus();
    if !(last > tol.pivot * first) {
        return Err(Error::BasisDeficient(format!("pivot ratio {:.3e} below {:.1e}", last / first, tol.pivot)));
    }
    let sv = linalg::singular_values(t.as_ref())?;
    let condition = sv[0] / sv[r - 1];
    let (fwd, _) = qr.P().arrays();
    Ok(BasisChoice { q: qr.compute_Q(), t, perm: fwd.to_vec(), condition })
}

/// Multiplication matrices `M_k = T^{-1} Q^H N_{g_k}[:, B]`.
#[derive(Clone, Debug)]
pub struct MultiplicationFamily<T> {
    pub matrices: Vec<Mat<T>>,
    pub basis: Vec<usize>,
    pub condition: f64,
    pub reveals: Reveals,
}

pub fn multiplication_matrices<T: Scalar>(family: &ShiftedFamily<T>, tol: &Tolerances) -> Result<MultiplicationFamily<T>> {
    let choice = choose_basis(family.n_h0.as_ref(), tol)?;
    let r = choice.t.nrows();
    let b = choice.basis().to_vec();
    let matrices = family
        .n_g
        .iter()
        .map(|ng| {
            let sel = Mat::from_fn(r, r, |i, j| ng[(i, b[j])]);
            let rhs = choice.q.adjoint() * sel;
            linalg::solve_upper(choice.t.as_ref(), rhs.as_ref())
        })
        .collect();
    Ok(MultiplicationFamily { matrices, basis: b, condition: choice.condition, reveals: family.reveals })
}

impl<T: Scalar> MultiplicationFamily<T> {
    /// Largest `||M_i M_j - M_j M_i||_F / (||M_i||_F ||M_j||_F)`. Matrices
    /// below `1e-8` of the largest one belong to a coordinate that vanishes
    /// at every point; they hold only rounding noise and are skipped.
    pub fn commutation_error(&self) -> f64 {
        let norms: Vec<f64> = self.matrices.iter().map(|m| frob(m.as_ref())).collect();
        let floor = 1e-8 * norms.iter().copied().fold(0.0, f64::max);
        let mut worst: f64 = 0.0;
        for i in 0..self.matrices.len() {
            for j in i + 1..self.matrices.len() {
                let (a, b) = (&self.matrices[i], &self.matrices[j]);
                if norms[i] <= floor || norms[j] <= floor {
                    continue;
                }
                let denom = norms[i] * norms[j];
                let comm = a * b - b * a;
                worst = worst.max(frob(comm.as_ref()) / denom);
            }
        }
        worst
    }
}

/// Joint eigenvalues of a commuting family.
#[derive(Clone, Debug)]
pub struct Diagonalization {
    /// `values[(k, i)]`: eigenvalue of `M_k` at the `i`-th joint eigenvector.
    pub values: Mat<c64>,
    /// Left eigenvectors (rows of `V^{-1}`).
    pub left: Mat<c64>,
    /// Right eigenvectors.
    pub right: Mat<c64>,
    /// Largest off-diagonal mass of `V^{-1} M_k V` relative to the largest `||M_k||_F`.
    pub residual: f64,
    pub attempts: usize,
    pub warnings: Vec<String>,
}

/// Eigendecomposition of a random combination of the family, then the
/// diagonals of `V^{-1} M_k V`. Retries with fresh combinations when the
/// off-diagonal residual is large.
pub fn simultaneous_diagonalize<T: Scalar>(fam: &MultiplicationFamily<T>, rng: &mut Rng, tol: &Tolerances) -> Result<Diagonalization> {
    let mats: Vec<Mat<c64>> = fam.matrices.iter().map(|m| linalg::to_c64(m.as_ref())).collect();
    let Some(first) = mats.first() else {
        return Err(Error::ShapeMismatch("empty multiplication family".into()));
    };
    let r = first.nrows();
    // off-diagonal mass is measured against the largest matrix, so that a
    // coordinate vanishing at every point does not count as defective
    let scale = mats.iter().map(|m| frob(m.as_ref())).fold(0.0, f64::max);
    let mut best: Option<Diagonalization> = None;
    let attempts = 1 + tol.diagonalization_retries;
    for attempt in 1..=attempts {
        let weights: Vec<c64> = (0..mats.len()).map(|_| T::sample_normal(rng).to_c64()).collect();
        let mut comb = Mat::<c64>::zeros(r, r);
        for (w, m) in weights.iter().zip(&mats) {
            comb += m * faer::Scale(*w);
        }
        let Ok(eig) = comb.as_ref().eigen() else {
            continue;
        };
        let v = eig.U().to_owned();
        let lu = v.as_ref().partial_piv_lu();
        let left = lu.inverse();
        let mut values = Mat::<c64>::zeros(mats.len(), r);
        let mut residual: f64 = 0.0;
        for (k, m) in mats.iter().enumerate() {
            let d = &left * (m * &v);
            let mut off: f64 = 0.0;
            for j in 0..r {
                for i in 0..r {
                    if i == j {
                        values[(k, i)] = d[(i, i)];
                    } else {
                        off += d[(i, j)].norm_sqr();
                    }
                }
            }
            let rel = if scale > 0.0 { off.sqrt() / scale } else { off.sqrt() };
            residual = residual.max(if rel.is_finite() { rel } else { f64::INFINITY });
        }
        let candidate = Diagonalization { values, left, right: v, residual, attempts: attempt, warnings: vec![] };
        let better = best.as_ref().is_none_or(|b| candidate.residual < b.residual);
        if better {
            best = Some(candidate);
        }
        if residual <= tol.diagonalization {
            break;
        }
    }
    let Some(mut best) = best else {
        return Err(Error::DefectiveEigenvectors("eigensolver failed on every attempt".into()));
    };
    if best.residual > tol.diagonalization_hard {
        return Err(Error::DefectiveEigenvectors(format!(
            "off-diagonal residual {:.3e} after {attempts} attempts",
            best.residual
        )));
    }
    if best.residual > tol.diagonalization {
        best.warnings.push(format!("joint diagonalization residual {:.3e}", best.residual));
    }
    Ok(best)
}

impl Diagonalization {
    /// Column `i` of the eigenvalue table as a point in the field `T`.
    pub fn point<T: Scalar>(&self, i: usize) -> Vec<T> {
        (0..self.values.nrows()).map(|k| T::from_c64(self.values[(k, i)])).collect()
    }
}
