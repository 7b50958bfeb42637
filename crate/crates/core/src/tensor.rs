//! Dense tensors, CP decompositions, mode grouping and ST-HOSVD compression.

use std::fmt;

use faer::{Mat, MatRef};

use crate::bigraded::{select_degree, DegreePlan};
use crate::error::{Error, Result};
use crate::linalg::{self, gaussian_mat, DdComplex};
use crate::scalar::Scalar;

/// Dense tensor with row-major (last index fastest) storage.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> DenseTensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::ShapeMismatch(format!("dimensions must be positive, got {shape:?}")));
        }
        let len = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or(Error::Overflow("tensor size"))?;
        if len != data.len() {
            return Err(Error::ShapeMismatch(format!("shape {shape:?} needs {len} entries, got {}", data.len())));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite_value()) {
            return Err(Error::NonFinite(pos));
        }
        Ok(DenseTensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        DenseTensor { shape, data: vec![T::zero_value(); len] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, idx: &[usize]) -> T {
        self.data[self.offset(idx)]
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        idx.iter().zip(&self.shape).fold(0, |acc, (&i, &d)| acc * d + i)
    }

    pub fn frobenius_norm(&self) -> f64 {
        linalg::vec_norm(&self.data)
    }

    /// Same data, new shape with the same number of entries.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() || shape.contains(&0) {
            return Err(Error::ShapeMismatch(format!("cannot reshape {:?} to {shape:?}", self.shape)));
        }
        Ok(DenseTensor { shape, data: self.data.clone() })
    }

    /// The first-mode flattening: row `j`, column `(i_2, ..., i_d)` in
    /// row-major order. For order 3 the columns are `(k, l)` row-major.
    pub fn flatten_mode1(&self) -> Mat<T> {
        let rows = self.shape[0];
        let cols = self.data.len() / rows;
        Mat::from_fn(rows, cols, |i, j| self.data[i * cols + j])
    }

    /// Inverse of [`flatten_mode1`](Self::flatten_mode1).
    pub fn from_mode1(flat: MatRef<'_, T>, shape: Vec<usize>) -> Result<Self> {
        let rows = shape.first().copied().unwrap_or(0);
        let cols: usize = shape.iter().skip(1).product();
        if flat.nrows() != rows || flat.ncols() != cols {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} flattening does not fit shape {shape:?}",
                flat.nrows(),
                flat.ncols()
            )));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(flat[(i, j)]);
            }
        }
        DenseTensor::new(shape, data)
    }

    /// Reorders axes so that new axis `q` is old axis `perm[q]`.
    pub fn permute_axes(&self, perm: &[usize]) -> Self {
        let d = self.order();
        assert_eq!(perm.len(), d);
        let new_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let mut old_strides = vec![1usize; d];
        for k in (0..d.saturating_sub(1)).rev() {
            old_strides[k] = old_strides[k + 1] * self.shape[k + 1];
        }
        let strides: Vec<usize> = perm.iter().map(|&p| old_strides[p]).collect();
        let mut data = Vec::with_capacity(self.data.len());
        let mut idx = vec![0usize; d];
        let mut off = 0usize;
        for _ in 0..self.data.len() {
            data.push(self.data[off]);
            // odometer increment over the new shape
            for q in (0..d).rev() {
                idx[q] += 1;
                off += strides[q];
                if idx[q] < new_shape[q] {
                    break;
                }
                off -= strides[q] * idx[q];
                idx[q] = 0;
            }
        }
        DenseTensor { shape: new_shape, data }
    }

    /// Mode-`k` unfolding: `shape[k]` rows, remaining modes row-major.
    pub fn unfold(&self, k: usize) -> Mat<T> {
        self.permute_axes(&front_perm(self.order(), k)).flatten_mode1()
    }

    /// Mode-`k` product `X x_k U`: replaces mode `k` by `U * X_(k)`.
    pub fn mode_product(&self, k: usize, u: MatRef<'_, T>) -> Self {
        assert_eq!(u.ncols(), self.shape[k]);
        let perm = front_perm(self.order(), k);
        let moved = self.permute_axes(&perm);
        let prod = u * moved.flatten_mode1();
        let mut shape = moved.shape.clone();
        shape[0] = u.nrows();
        let folded = DenseTensor::from_mode1(prod.as_ref(), shape).expect("consistent shape");
        folded.permute_axes(&inverse_perm(&perm))
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> DenseTensor<U> {
        DenseTensor { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }
}

fn front_perm(order: usize, k: usize) -> Vec<usize> {
    std::iter::once(k).chain((0..order).filter(|&q| q != k)).collect()
}

pub fn inverse_perm(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (q, &p) in perm.iter().enumerate() {
        inv[p] = q;
    }
    inv
}

/// A rank-`r` CP decomposition: one `dim_k x r` factor matrix per mode.
#[derive(Clone, Debug, PartialEq)]
pub struct CpDecomposition<T> {
    pub factors: Vec<Mat<T>>,
    /// Set once [`normalize`](Self::normalize) has run.
    pub normalized: bool,
}

impl<T: Scalar> CpDecomposition<T> {
    pub fn new(factors: Vec<Mat<T>>) -> Result<Self> {
        let Some(first) = factors.first() else {
            return Err(Error::ShapeMismatch("a decomposition needs at least one factor".into()));
        };
        let r = first.ncols();
        if r == 0 {
            return Err(Error::RankOutOfRange { rank: 0, max: usize::MAX });
        }
        if factors.iter().any(|f| f.ncols() != r) {
            return Err(Error::ShapeMismatch("factor matrices disagree on the rank".into()));
        }
        Ok(CpDecomposition { factors, normalized: false })
    }

    pub fn rank(&self) -> usize {
        self.factors[0].ncols()
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.nrows()).collect()
    }

    /// Columns `[a_i^2 (x) ... (x) a_i^d]`, row-major over modes 2..d.
    pub fn khatri_rao_tail(&self) -> Mat<T> {
        khatri_rao(&self.factors[1..])
    }

    /// Sum of the rank-one terms.
    pub fn eval(&self) -> DenseTensor<T> {
        let k = self.khatri_rao_tail();
        let flat = &self.factors[0] * k.transpose();
        DenseTensor::from_mode1(flat.as_ref(), self.shape()).expect("consistent shape")
    }

    /// Checks the factor shapes against `shape`, then evaluates.
    pub fn eval_checked(&self, shape: &[usize]) -> Result<DenseTensor<T>> {
        if self.shape() != shape {
            return Err(Error::ShapeMismatch(format!("decomposition of shape {:?} used for {shape:?}", self.shape())));
        }
        Ok(self.eval())
    }

    /// Unit-norm columns in every mode but the first, with the first nonzero
    /// entry made real and positive; scales move into mode 1.
    pub fn normalize(&mut self) {
        let r = self.rank();
        for mode in 1..self.order() {
            for i in 0..r {
                let col = linalg::column(self.factors[mode].as_ref(), i);
                let norm = linalg::vec_norm(&col);
                if norm == 0.0 {
                    continue;
                }
                let inf = col.iter().map(|x| x.modulus()).fold(0.0, f64::max);
                let lead = col.iter().find(|x| x.modulus() > 1e-10 * inf).copied().unwrap_or(T::one_value());
                let phase = lead / T::from_f64(lead.modulus());
                // column <- column / (norm * phase), mode 1 <- mode 1 * (norm * phase)
                let factor = phase.scale_real(norm);
                for row in 0..self.factors[mode].nrows() {
                    let v = self.factors[mode][(row, i)];
                    self.factors[mode][(row, i)] = v / factor;
                }
                for row in 0..self.factors[0].nrows() {
                    let v = self.factors[0][(row, i)];
                    self.factors[0][(row, i)] = v * factor;
                }
            }
        }
        self.normalized = true;
    }
}

/// Khatri-Rao product with the first matrix's index slowest.
pub fn khatri_rao<T: Scalar>(mats: &[Mat<T>]) -> Mat<T> {
    let r = mats.first().map_or(0, |m| m.ncols());
    let mut acc = Mat::<T>::from_fn(1, r, |_, _| T::one_value());
    for m in mats {
        let rows = acc.nrows() * m.nrows();
        let next = Mat::from_fn(rows, r, |row, c| acc[(row / m.nrows(), c)] * m[(row % m.nrows(), c)]);
        acc = next;
    }
    acc
}

/// `||A - eval(D)||_F / ||A||_F`, with each residual entry accumulated in
/// double-double so that the value stays meaningful near machine precision.
pub fn backward_error<T: Scalar>(a: &DenseTensor<T>, d: &CpDecomposition<T>) -> Result<f64> {
    let norm = a.frobenius_norm();
    if norm == 0.0 {
        return Err(Error::ZeroTensor);
    }
    Ok(cp_residual(a, d)?.frobenius_norm() / norm)
}

/// `A - eval(D)`, each entry accumulated in double-double and rounded once.
pub fn cp_residual<T: Scalar>(a: &DenseTensor<T>, d: &CpDecomposition<T>) -> Result<DenseTensor<T>> {
    if d.shape() != a.shape() {
        return Err(Error::ShapeMismatch(format!("decomposition of shape {:?} used for {:?}", d.shape(), a.shape())));
    }
    let r = d.rank();
    // trailing-mode products, row-major over modes 2..d, r per row
    let mut tail = vec![DdComplex::from_scalar(T::one_value()); r];
    for f in &d.factors[1..] {
        let mut next = Vec::with_capacity(tail.len() * f.nrows());
        for row in tail.chunks(r) {
            for i in 0..f.nrows() {
                next.extend((0..r).map(|t| row[t].mul_scalar(f[(i, t)])));
            }
        }
        tail = next;
    }
    let first = &d.factors[0];
    let cols = tail.len() / r;
    let mut data = Vec::with_capacity(a.len());
    for i in 0..first.nrows() {
        for j in 0..cols {
            let mut acc = DdComplex::from_scalar(a.data[i * cols + j]);
            for t in 0..r {
                acc = acc.sub(tail[j * r + t].mul_scalar(first[(i, t)]));
            }
            data.push(acc.round::<T>());
        }
    }
    Ok(DenseTensor { shape: a.shape.clone(), data })
}

/// Random rank-`r` tensor with i.i.d. standard normal factor entries. Modes
/// are filled in order, each factor row by row.
pub fn random_cpd<T: Scalar>(shape: &[usize], r: usize, seed: u64) -> Result<(DenseTensor<T>, CpDecomposition<T>)> {
    if r == 0 {
        return Err(Error::RankOutOfRange { rank: 0, max: usize::MAX });
    }
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::ShapeMismatch(format!("dimensions must be positive, got {shape:?}")));
    }
    let mut rng = linalg::rng(seed);
    let factors = shape.iter().map(|&dim| gaussian_mat::<T>(dim, r, &mut rng)).collect();
    let cpd = CpDecomposition::new(factors)?;
    Ok((cpd.eval(), cpd))
}

/// `A + 10^e * (||A|| / ||E||) * E` with `E` standard normal from `seed`.
/// `None` means no noise.
pub fn add_noise<T: Scalar>(a: &DenseTensor<T>, e: Option<i32>, seed: u64) -> Result<DenseTensor<T>> {
    let norm = a.frobenius_norm();
    if norm == 0.0 {
        return Err(Error::ZeroTensor);
    }
    let Some(e) = e else {
        return Ok(a.clone());
    };
    let mut rng = linalg::rng(seed);
    let noise = linalg::gaussian_vec::<T>(a.len(), &mut rng);
    let scale = 10f64.powi(e) * norm / linalg::vec_norm(&noise);
    let data = a.data.iter().zip(&noise).map(|(&x, &n)| x + n.scale_real(scale)).collect();
    DenseTensor::new(a.shape.clone(), data)
}

/// Partition of the modes (0-based) into three non-empty groups. The
/// grouped tensor has the modes of `parts[0]`, then `parts[1]`, then
/// `parts[2]`, each group flattened row-major in the listed order.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Grouping {
    pub parts: [Vec<usize>; 3],
}

impl Grouping {
    pub fn new(parts: [Vec<usize>; 3]) -> Self {
        Grouping { parts }
    }

    /// From 1-based mode lists, as printed in experiment logs.
    pub fn from_one_based(parts: [Vec<usize>; 3]) -> Result<Self> {
        let conv = |p: Vec<usize>| -> Result<Vec<usize>> {
            p.into_iter()
                .map(|i| i.checked_sub(1).ok_or_else(|| Error::InvalidGrouping("modes are numbered from 1".into())))
                .collect()
        };
        let [a, b, c] = parts;
        Ok(Grouping { parts: [conv(a)?, conv(b)?, conv(c)?] })
    }

    pub fn identity() -> Self {
        Grouping { parts: [vec![0], vec![1], vec![2]] }
    }

    pub fn validate(&self, order: usize) -> Result<()> {
        let mut seen = vec![false; order];
        for part in &self.parts {
            if part.is_empty() {
                return Err(Error::InvalidGrouping("every group needs at least one mode".into()));
            }
            for &m in part {
                if m >= order {
                    return Err(Error::InvalidGrouping(format!("mode {} out of range for order {order}", m + 1)));
                }
                if std::mem::replace(&mut seen[m], true) {
                    return Err(Error::InvalidGrouping(format!("mode {} appears twice", m + 1)));
                }
            }
        }
        if let Some(m) = seen.iter().position(|&s| !s) {
            return Err(Error::InvalidGrouping(format!("mode {} is not assigned", m + 1)));
        }
        Ok(())
    }

    pub fn grouped_shape(&self, shape: &[usize]) -> [usize; 3] {
        let prod = |p: &Vec<usize>| p.iter().map(|&m| shape[m]).product::<usize>();
        [prod(&self.parts[0]), prod(&self.parts[1]), prod(&self.parts[2])]
    }

    fn axis_order(&self) -> Vec<usize> {
        self.parts.iter().flatten().copied().collect()
    }
}

impl fmt::Display for Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let one_based: Vec<Vec<usize>> = self.parts.iter().map(|p| p.iter().map(|m| m + 1).collect()).collect();
        write!(f, "{one_based:?}")
    }
}

/// Reshapes an order-`d` tensor to order 3 by grouping modes.
pub fn reshape_group<T: Scalar>(a: &DenseTensor<T>, g: &Grouping) -> Result<DenseTensor<T>> {
    g.validate(a.order())?;
    let moved = a.permute_axes(&g.axis_order());
    moved.reshape(g.grouped_shape(a.shape()).to_vec())
}

/// Inverse of [`reshape_group`].
pub fn ungroup<T: Scalar>(t: &DenseTensor<T>, shape: &[usize], g: &Grouping) -> Result<DenseTensor<T>> {
    g.validate(shape.len())?;
    if t.shape() != g.grouped_shape(shape) {
        return Err(Error::ShapeMismatch(format!("{:?} is not the grouped shape of {shape:?}", t.shape())));
    }
    let order = g.axis_order();
    let moved_shape: Vec<usize> = order.iter().map(|&m| shape[m]).collect();
    Ok(t.reshape(moved_shape)?.permute_axes(&inverse_perm(&order)))
}

/// Dimensions after compression for rank `r`: each mode is cut to `r`,
/// except that the middle mode keeps enough room for `m * n >= r`.
pub fn compressed_dims(dims: [usize; 3], r: usize) -> [usize; 3] {
    let l = dims[0].min(r);
    let n1 = dims[2].min(r);
    let mut m1 = dims[1].min(r);
    while m1 < dims[1] && (m1 - 1) * (n1 - 1) < r {
        m1 += 1;
    }
    [l, m1, n1]
}

/// Degree plan for a sorted third-order format after compression.
pub fn plan_for_dims(dims: [usize; 3], r: usize) -> Result<DegreePlan> {
    let [l1, m1, n1] = compressed_dims(dims, r);
    select_degree(m1 - 1, n1 - 1, r, l1 - 1, true)
}

/// Searches all assignments of modes to three non-empty groups and returns
/// the feasible one whose resultant is cheapest. Groups come out sorted by
/// decreasing dimension.
pub fn choose_grouping(shape: &[usize], r: usize) -> Result<Grouping> {
    let d = shape.len();
    if d < 3 {
        return Err(Error::InvalidGrouping(format!("order {d} tensors cannot be grouped into three modes")));
    }
    if d > 16 {
        return Err(Error::InvalidGrouping(format!("order {d} is too large for exhaustive grouping search")));
    }
    let total = 3usize.pow(d as u32);
    let mut best: Option<(f64, Grouping)> = None;
    let mut assign = vec![0usize; d];
    for code in 0..total {
        let mut c = code;
        for a in assign.iter_mut() {
            *a = c % 3;
            c /= 3;
        }
        let mut parts: [Vec<usize>; 3] = Default::default();
        for (mode, &a) in assign.iter().enumerate() {
            parts[a].push(mode);
        }
        if parts.iter().any(|p| p.is_empty()) {
            continue;
        }
        let dim = |p: &Vec<usize>| p.iter().map(|&m| shape[m] as u128).product::<u128>();
        // stable sort keeps the enumeration order among equal dimensions
        parts.sort_by_key(|p| std::cmp::Reverse(dim(p)));
        let dims = [dim(&parts[0]), dim(&parts[1]), dim(&parts[2])];
        let Ok(dims) = dims.map(usize::try_from).into_iter().collect::<std::result::Result<Vec<_>, _>>() else {
            continue;
        };
        if r > crate::bigraded::max_rank(dims[0] - 1, dims[1] - 1, dims[2] - 1) {
            continue;
        }
        let Ok(plan) = plan_for_dims([dims[0], dims[1], dims[2]], r) else {
            continue;
        };
        let cost = grouping_cost(&plan);
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, Grouping { parts }));
        }
    }
    best.map(|(_, g)| g).ok_or_else(|| Error::NoFeasibleGrouping { shape: shape.to_vec(), rank: r })
}

/// `HF_S(d,e)^2 * s * HF_S(d',e')` in floating point.
fn grouping_cost(plan: &DegreePlan) -> f64 {
    (plan.rows as f64) * (plan.rows as f64) * (plan.cols as f64)
}

/// Result of [`st_hosvd_compress`]: `A ~ core x_1 U_1 x_2 U_2 x_3 U_3`.
pub struct Compression<T> {
    pub core: DenseTensor<T>,
    pub factors: [Mat<T>; 3],
}

impl<T: Scalar> Compression<T> {
    pub fn expand(&self) -> DenseTensor<T> {
        let mut t = self.core.clone();
        for (k, u) in self.factors.iter().enumerate() {
            t = t.mode_product(k, u.as_ref());
        }
        t
    }
}

/// Sequentially truncated HOSVD of an order-3 tensor, modes taken in
/// decreasing dimension.
pub fn st_hosvd_compress<T: Scalar>(a: &DenseTensor<T>, targets: [usize; 3]) -> Result<Compression<T>> {
    if a.order() != 3 {
        return Err(Error::ShapeMismatch(format!("ST-HOSVD expects order 3, got {}", a.order())));
    }
    for (&t, &dim) in targets.iter().zip(a.shape()) {
        if t == 0 || t > dim {
            return Err(Error::ShapeMismatch(format!("target rank {t} invalid for mode of size {dim}")));
        }
    }
    let mut order = [0usize, 1, 2];
    order.sort_by_key(|&k| std::cmp::Reverse(a.shape()[k]));
    let mut core = a.clone();
    let mut factors: [Mat<T>; 3] = [Mat::identity(1, 1), Mat::identity(1, 1), Mat::identity(1, 1)];
    for k in order {
        let unf = core.unfold(k);
        let svd = linalg::svd_thin(unf.as_ref())?;
        let keep = targets[k].min(svd.u.ncols());
        let mut u = Mat::<T>::zeros(unf.nrows(), targets[k]);
        u.as_mut().get_mut(.., ..keep).copy_from(svd.u.as_ref().get(.., ..keep));
        if keep < targets[k] {
            // more targets than the unfolding's rank allows; pad with an orthonormal complement
            let full = linalg::svd_full(unf.as_ref())?;
            u.as_mut().get_mut(.., keep..).copy_from(full.u.as_ref().get(.., keep..targets[k]));
        }
        core = core.mode_product(k, linalg::adjoint(u.as_ref()).as_ref());
        factors[k] = u;
    }
    Ok(Compression { core, factors })
}

/// Rank-one factors of `v` reshaped to `shape`, peeled off one mode at a
/// time by the dominant singular triple. All vectors except the first have
/// unit norm; the scale sits in the first.
pub fn rank1_factorization<T: Scalar>(v: &[T], shape: &[usize]) -> Result<Vec<Vec<T>>> {
    if shape.iter().product::<usize>() != v.len() || shape.is_empty() {
        return Err(Error::ShapeMismatch(format!("vector of length {} does not fit {shape:?}", v.len())));
    }
    if v.iter().all(|x| x.modulus() == 0.0) {
        return Err(Error::ZeroTensor);
    }
    let mut out = Vec::with_capacity(shape.len());
    let mut rest: Vec<T> = v.to_vec();
    for (k, &dim) in shape.iter().enumerate() {
        if k + 1 == shape.len() {
            out.push(rest);
            break;
        }
        let cols = rest.len() / dim;
        let mat = Mat::from_fn(dim, cols, |i, j| rest[i * cols + j]);
        let svd = linalg::svd_thin(mat.as_ref())?;
        let u = linalg::column(svd.u.as_ref(), 0);
        let sigma = svd.s[0];
        // mat ~ sigma * u * conj(w)^T, so the remaining factor is sigma * conj(w)
        rest = (0..cols).map(|j| svd.v[(j, 0)].conjugate().scale_real(sigma)).collect();
        out.push(u);
    }
    // move the scale from the last vector to the first
    let last = out.len() - 1;
    if last > 0 {
        let norm = linalg::vec_norm(&out[last]);
        if norm > 0.0 {
            for x in out[last].iter_mut() {
                *x = x.scale_real(1.0 / norm);
            }
            for x in out[0].iter_mut() {
                *x = x.scale_real(norm);
            }
        }
    }
    Ok(out)
}

/// Sine of the angle between two vectors (scale- and phase-invariant).
pub fn projective_distance<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    let na = linalg::vec_norm(a);
    let nb = linalg::vec_norm(b);
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    // norm of the component of b orthogonal to a; accurate for small angles
    let mut dot = T::zero_value();
    for (&x, &y) in a.iter().zip(b) {
        dot += x.conjugate() * y;
    }
    let proj = dot.scale_real(1.0 / (na * na));
    let perp: f64 = a.iter().zip(b).map(|(&x, &y)| (y - x * proj).modulus_sqr()).sum();
    (perp.sqrt() / nb).min(1.0)
}

/// Largest projective distance between matched rank-one terms, over all
/// modes, after greedily pairing terms by smallest distance. Returns 1 when
/// ranks or shapes differ.
pub fn factor_match_error<T: Scalar>(a: &CpDecomposition<T>, b: &CpDecomposition<T>) -> f64 {
    if a.rank() != b.rank() || a.shape() != b.shape() {
        return 1.0;
    }
    let r = a.rank();
    let term_dist = |i: usize, j: usize| -> f64 {
        a.factors
            .iter()
            .zip(&b.factors)
            .map(|(fa, fb)| projective_distance(&linalg::column(fa.as_ref(), i), &linalg::column(fb.as_ref(), j)))
            .fold(0.0, f64::max)
    };
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(r * r);
    for i in 0..r {
        for j in 0..r {
            pairs.push((term_dist(i, j), i, j));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut used_a = vec![false; r];
    let mut used_b = vec![false; r];
    let mut worst: f64 = 0.0;
    for (dist, i, j) in pairs {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            worst = worst.max(dist);
        }
    }
    worst
}

/// Relative distance `||A - B|| / ||A||` between tensors of equal shape.
pub fn relative_distance<T: Scalar>(a: &DenseTensor<T>, b: &DenseTensor<T>) -> f64 {
    let diff: f64 = a.data.iter().zip(&b.data).map(|(&x, &y)| (x - y).modulus_sqr()).sum();
    diff.sqrt() / a.frobenius_norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::c64;

    fn example_tensor() -> DenseTensor<f64> {
        let rows: [[f64; 9]; 4] = [
            [1., 0., 0., 0., 0., 0., 2., 0., 0.],
            [1., 1., 0., 0., 0., 0., 2., 1., 0.],
            [1., 1., 1., 0., 0., 1., 2., 1., 2.],
            [1., 1., 1., 1., 1., 2., 2., 1., 2.],
        ];
        DenseTensor::new(vec![4, 3, 3], rows.iter().flatten().copied().collect()).unwrap()
    }

    fn example_cpd() -> CpDecomposition<f64> {
        let alpha = [[1., 1., 1., 1.], [0., 1., 1., 1.], [0., 0., 1., 1.], [0., 0., 0., 1.]];
        let beta = [[1., 0., 2.], [1., 0., 1.], [1., 1., 2.], [0., 1., 0.]];
        let gamma = [[1., 0., 0.], [0., 1., 0.], [0., 0., 1.], [1., 1., 1.]];
        CpDecomposition::new(vec![
            Mat::from_fn(4, 4, |i, j| alpha[j][i]),
            Mat::from_fn(3, 4, |i, j| beta[j][i]),
            Mat::from_fn(3, 4, |i, j| gamma[j][i]),
        ])
        .unwrap()
    }

    #[test]
    fn example_terms_reproduce_tensor() {
        assert_eq!(example_cpd().eval(), example_tensor());
        assert_eq!(backward_error(&example_tensor(), &example_cpd()).unwrap(), 0.0);
    }

    #[test]
    fn flattening_first_row() {
        let flat = example_tensor().flatten_mode1();
        let row: Vec<f64> = (0..9).map(|j| flat[(0, j)]).collect();
        assert_eq!(row, [1., 0., 0., 0., 0., 0., 2., 0., 0.]);
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(matches!(DenseTensor::new(vec![2, 2], vec![1.0; 3]), Err(Error::ShapeMismatch(_))));
        assert!(matches!(DenseTensor::new(vec![2], vec![1.0, f64::NAN]), Err(Error::NonFinite(1))));
    }

    #[test]
    fn zero_factors_give_unit_error() {
        let cpd = CpDecomposition::new(vec![Mat::<f64>::zeros(4, 2), Mat::zeros(3, 2), Mat::zeros(3, 2)]).unwrap();
        assert_eq!(backward_error(&example_tensor(), &cpd).unwrap(), 1.0);
        assert!(matches!(backward_error(&DenseTensor::<f64>::zeros(vec![4, 3, 3]), &cpd), Err(Error::ZeroTensor)));
    }

    #[test]
    fn all_ones_rank_one() {
        let cpd = CpDecomposition::new(vec![Mat::<f64>::ones(2, 1), Mat::ones(3, 1), Mat::ones(2, 1)]).unwrap();
        assert!(cpd.eval().data().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn fourth_order_grouping_shape() {
        let g = Grouping::from_one_based([vec![4, 6, 7, 8], vec![1, 2, 3], vec![5]]).unwrap();
        assert_eq!(g.grouped_shape(&[7, 7, 7, 7, 6, 6, 5, 5]), [1050, 343, 6]);
        assert_eq!(g.to_string(), "[[4, 6, 7, 8], [1, 2, 3], [5]]");
    }

    #[test]
    fn grouping_validation() {
        assert!(Grouping::new([vec![0], vec![1], vec![]]).validate(2).is_err());
        assert!(Grouping::new([vec![0], vec![1], vec![1]]).validate(3).is_err());
        assert!(Grouping::new([vec![0], vec![1], vec![3]]).validate(3).is_err());
        assert!(Grouping::new([vec![0, 3], vec![1], vec![2]]).validate(4).is_ok());
    }

    #[test]
    fn infeasible_grouping() {
        assert!(matches!(choose_grouping(&[2, 2, 2, 2], 16), Err(Error::NoFeasibleGrouping { .. })));
    }

    #[test]
    fn feasible_grouping_satisfies_rank_condition() {
        for (shape, r) in [(vec![4, 4, 4, 4], 4), (vec![7, 7, 7, 7, 6, 6, 5, 5], 1000), (vec![3, 3, 3, 3, 2], 8)] {
            let g = choose_grouping(&shape, r).unwrap();
            let [l1, m1, n1] = g.grouped_shape(&shape);
            assert!(l1 >= m1 && m1 >= n1);
            assert!(r <= l1 && r <= (m1 - 1) * (n1 - 1), "{shape:?} {g}");
        }
    }

    #[test]
    fn rank1_example_vector() {
        let v: Vec<f64> = [1., 0., 2.].iter().flat_map(|&a| [1., 0., 0.].map(|b| a * b)).collect();
        let parts = rank1_factorization(&v, &[3, 3]).unwrap();
        assert!(projective_distance(&parts[0], &[1., 0., 2.]) < 1e-14);
        assert!(projective_distance(&parts[1], &[1., 0., 0.]) < 1e-14);
        let e1 = [1., 0., 0., 0., 0., 0.];
        let parts = rank1_factorization(&e1, &[2, 3]).unwrap();
        assert!(projective_distance(&parts[0], &[1., 0.]) < 1e-15);
        assert!(projective_distance(&parts[1], &[1., 0., 0.]) < 1e-15);
        assert!(matches!(rank1_factorization(&[0.0; 4], &[2, 2]), Err(Error::ZeroTensor)));
    }

    #[test]
    fn rank1_complex_roundtrip() {
        let (t, _) = random_cpd::<c64>(&[3, 2, 4, 2], 1, 11).unwrap();
        let parts = rank1_factorization(t.data(), t.shape()).unwrap();
        let mats: Vec<Mat<c64>> = parts.iter().map(|p| Mat::from_fn(p.len(), 1, |i, _| p[i])).collect();
        let back = CpDecomposition::new(mats).unwrap().eval();
        assert!(relative_distance(&t, &back) < 1e-12);
    }

    #[test]
    fn normalization_convention() {
        let (t, mut cpd) = random_cpd::<f64>(&[4, 3, 5], 3, 5).unwrap();
        cpd.normalize();
        assert!(cpd.normalized);
        for mode in 1..3 {
            for i in 0..3 {
                let col = linalg::column(cpd.factors[mode].as_ref(), i);
                assert!((linalg::vec_norm(&col) - 1.0).abs() < 1e-12);
                assert!(col[0] > 0.0);
            }
        }
        assert!(backward_error(&t, &cpd).unwrap() < 1e-14);
    }

    #[test]
    fn noise_has_requested_size() {
        let (t, _) = random_cpd::<f64>(&[5, 4, 3], 2, 1).unwrap();
        let noisy = add_noise(&t, Some(-3), 9).unwrap();
        assert!((relative_distance(&t, &noisy) - 1e-3).abs() < 1e-15);
        assert_eq!(add_noise(&t, None, 9).unwrap(), t);
    }

    #[test]
    fn compressed_dims_keep_rank_condition() {
        assert_eq!(compressed_dims([50, 10, 5], 5), [5, 5, 5]);
        assert_eq!(compressed_dims([50, 10, 2], 5), [5, 6, 2]);
        assert_eq!(compressed_dims([50, 10, 5], 30), [30, 10, 5]);
    }
}
