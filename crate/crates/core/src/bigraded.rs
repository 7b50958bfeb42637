//! Bigraded bookkeeping for the Cox ring of P^m x P^n: Hilbert functions,
//! monomial bases, the identifiability rank bound and degree selection.

use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// A bidegree `(d, e)`: degree `d` in the x variables, `e` in the y variables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bidegree {
    pub d: usize,
    pub e: usize,
}

impl Bidegree {
    pub const fn new(d: usize, e: usize) -> Self {
        Bidegree { d, e }
    }

    /// `(d - 1, e - 1)`, the degree of the multipliers in the resultant map.
    pub fn shift(self) -> Bidegree {
        Bidegree::new(self.d - 1, self.e - 1)
    }

    pub fn swapped(self) -> Bidegree {
        Bidegree::new(self.e, self.d)
    }
}

impl fmt::Display for Bidegree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.d, self.e)
    }
}

/// Checked binomial coefficient.
pub fn binomial(n: u128, k: u128) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

fn binomial_big(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// Dimension of the bigraded piece `S_(d,e)`: `C(m+d, d) * C(n+e, e)`.
pub fn hf_s(m: usize, n: usize, deg: Bidegree) -> Result<u128> {
    let a = binomial((m + deg.d) as u128, deg.d as u128).ok_or(Error::Overflow("hf_s"))?;
    let b = binomial((n + deg.e) as u128, deg.e as u128).ok_or(Error::Overflow("hf_s"))?;
    a.checked_mul(b).ok_or(Error::Overflow("hf_s"))
}

/// [`hf_s`] narrowed to `usize` for sizing allocations.
pub fn hf_s_usize(m: usize, n: usize, deg: Bidegree) -> Result<usize> {
    usize::try_from(hf_s(m, n, deg)?).map_err(|_| Error::Overflow("hf_s"))
}

fn hf_s_big(m: usize, n: usize, deg: Bidegree) -> BigUint {
    binomial_big((m + deg.d) as u64, deg.d as u64) * binomial_big((n + deg.e) as u64, deg.e as u64)
}

/// Exponent vectors of a fixed total degree in a fixed number of variables,
/// in lexicographic order with the first variable largest.
#[derive(Clone, Debug)]
pub struct Monomials {
    nvars: usize,
    degree: usize,
    exps: Vec<u32>,
}

impl Monomials {
    pub fn new(nvars: usize, degree: usize) -> Self {
        assert!(nvars >= 1);
        let mut exps = Vec::new();
        let mut cur = vec![0u32; nvars];
        fill_lex(&mut cur, 0, degree, &mut exps);
        Monomials { nvars, degree, exps }
    }

    pub fn len(&self) -> usize {
        self.exps.len() / self.nvars
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn get(&self, i: usize) -> &[u32] {
        &self.exps[i * self.nvars..(i + 1) * self.nvars]
    }

    /// Position of `exps` in the list, computed combinatorially.
    pub fn rank_of(&self, exps: &[u32]) -> usize {
        debug_assert_eq!(exps.len(), self.nvars);
        debug_assert_eq!(exps.iter().map(|&a| a as usize).sum::<usize>(), self.degree);
        let mut rank = 0usize;
        let mut rem = self.degree;
        for (i, &a) in exps.iter().enumerate().take(self.nvars - 1) {
            let a = a as usize;
            let vars_after = self.nvars - i - 1;
            // every vector agreeing so far but with a larger entry here comes first
            for v in a + 1..=rem {
                rank += count_monomials(vars_after, rem - v);
            }
            rem -= a;
        }
        rank
    }
}

fn fill_lex(cur: &mut [u32], pos: usize, rem: usize, out: &mut Vec<u32>) {
    if pos == cur.len() - 1 {
        cur[pos] = rem as u32;
        out.extend_from_slice(cur);
        return;
    }
    for v in (0..=rem).rev() {
        cur[pos] = v as u32;
        fill_lex(cur, pos + 1, rem - v, out);
    }
}

fn count_monomials(nvars: usize, degree: usize) -> usize {
    if nvars == 0 {
        return usize::from(degree == 0);
    }
    binomial((degree + nvars - 1) as u128, (nvars - 1) as u128).expect("monomial count overflow") as usize
}

/// Monomial basis of `S_(d,e)`: x-part major, y-part minor, each in lex order.
#[derive(Clone, Debug)]
pub struct MonomialBasis {
    pub m: usize,
    pub n: usize,
    pub degree: Bidegree,
    x: Monomials,
    y: Monomials,
}

impl MonomialBasis {
    pub fn new(m: usize, n: usize, degree: Bidegree) -> Self {
        MonomialBasis { m, n, degree, x: Monomials::new(m + 1, degree.d), y: Monomials::new(n + 1, degree.e) }
    }

    pub fn len(&self) -> usize {
        self.x.len() * self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x_monomials(&self) -> &Monomials {
        &self.x
    }

    pub fn y_monomials(&self) -> &Monomials {
        &self.y
    }

    /// Exponent vectors `(a, b)` of the monomial at `idx`.
    pub fn exponents(&self, idx: usize) -> (&[u32], &[u32]) {
        let ny = self.y.len();
        (self.x.get(idx / ny), self.y.get(idx % ny))
    }

    pub fn index_of(&self, a: &[u32], b: &[u32]) -> usize {
        self.x.rank_of(a) * self.y.len() + self.y.rank_of(b)
    }

    /// Human-readable label such as `x0^2*y1`.
    pub fn label(&self, idx: usize) -> String {
        let (a, b) = self.exponents(idx);
        let mut parts = Vec::new();
        for (name, exps) in [("x", a), ("y", b)] {
            for (i, &p) in exps.iter().enumerate() {
                match p {
                    0 => {}
                    1 => parts.push(format!("{name}{i}")),
                    p => parts.push(format!("{name}{i}^{p}")),
                }
            }
        }
        if parts.is_empty() {
            "1".to_string()
        } else {
            parts.join("*")
        }
    }

    /// For each monomial `u` of `S_(d',e')` and each variable index `k`,
    /// the index of `x_k * u` in `self` (which must have degree `(d'+1, e')`).
    pub fn x_raise_table(&self, lower: &MonomialBasis) -> Vec<usize> {
        assert_eq!(lower.degree.d + 1, self.degree.d);
        assert_eq!(lower.degree.e, self.degree.e);
        let mut table = Vec::with_capacity(lower.len() * (self.m + 1));
        let mut a = vec![0u32; self.m + 1];
        for idx in 0..lower.len() {
            let (la, lb) = lower.exponents(idx);
            for k in 0..=self.m {
                a.copy_from_slice(la);
                a[k] += 1;
                table.push(self.index_of(&a, lb));
            }
        }
        table
    }
}

/// Where the coefficients of the bilinear forms land in the resultant matrix
/// of degree `(d, e)`.
///
/// Columns are ordered form-major: column `j * shifts + s` holds
/// `u_s * f_j` for the `s`-th monomial `u_s` of degree `(d-1, e-1)`.
/// The coefficient of `x_k y_l` in `f_j` lands on row `row(s, k, l)`.
#[derive(Clone, Debug)]
pub struct ResultantLayout {
    pub m: usize,
    pub n: usize,
    pub degree: Bidegree,
    pub rows: usize,
    pub shifts: usize,
    table: Vec<usize>,
}

impl ResultantLayout {
    pub fn new(m: usize, n: usize, degree: Bidegree) -> Result<Self> {
        if degree.d == 0 || degree.e == 0 {
            return Err(Error::ShapeMismatch(format!("resultant degree {degree} must be at least (1,1)")));
        }
        hf_s_usize(m, n, degree)?;
        let target = MonomialBasis::new(m, n, degree);
        let lower = MonomialBasis::new(m, n, degree.shift());
        let block = (m + 1) * (n + 1);
        let mut table = Vec::with_capacity(lower.len() * block);
        let mut a = vec![0u32; m + 1];
        let mut b = vec![0u32; n + 1];
        for s in 0..lower.len() {
            let (la, lb) = lower.exponents(s);
            let rx: Vec<usize> = (0..=m)
                .map(|k| {
                    a.copy_from_slice(la);
                    a[k] += 1;
                    target.x.rank_of(&a)
                })
                .collect();
            let ry: Vec<usize> = (0..=n)
                .map(|l| {
                    b.copy_from_slice(lb);
                    b[l] += 1;
                    target.y.rank_of(&b)
                })
                .collect();
            for &xr in &rx {
                for &yr in &ry {
                    table.push(xr * target.y.len() + yr);
                }
            }
        }
        Ok(ResultantLayout { m, n, degree, rows: target.len(), shifts: lower.len(), table })
    }

    /// Row of the coefficient of `x_k y_l` in the column block of shift `s`.
    pub fn row(&self, s: usize, k: usize, l: usize) -> usize {
        self.table[s * (self.m + 1) * (self.n + 1) + k * (self.n + 1) + l]
    }

    /// All rows of shift `s`, indexed by `k * (n+1) + l`.
    pub fn rows_of_shift(&self, s: usize) -> &[usize] {
        let block = (self.m + 1) * (self.n + 1);
        &self.table[s * block..(s + 1) * block]
    }

    pub fn cols(&self, forms: usize) -> usize {
        forms * self.shifts
    }
}

/// The identifiability bound on the rank for a given bidegree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RankBound {
    Infinite,
    Finite(BigRational),
}

impl RankBound {
    /// Whether rank `r` lies within the bound.
    pub fn admits(&self, r: usize) -> bool {
        match self {
            RankBound::Infinite => true,
            RankBound::Finite(q) => BigRational::from_integer(BigInt::from(r)) <= *q,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            RankBound::Infinite => f64::INFINITY,
            RankBound::Finite(q) => q.numer().to_f64().unwrap_or(f64::NAN) / q.denom().to_f64().unwrap_or(f64::NAN),
        }
    }

    /// `floor` of the bound, saturated to `usize::MAX`.
    pub fn floor_usize(&self) -> usize {
        match self {
            RankBound::Infinite => usize::MAX,
            RankBound::Finite(q) => q.floor().to_integer().to_usize().unwrap_or(if q.numer().sign() == num_bigint::Sign::Minus {
                0
            } else {
                usize::MAX
            }),
        }
    }
}

impl fmt::Display for RankBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RankBound::Infinite => f.write_str("inf"),
            RankBound::Finite(q) => write!(f, "{q}"),
        }
    }
}

/// `(HF_S(1,1) * HF_S(d',e') - HF_S(d,e)) / (HF_S(d',e') - 1)` as an exact
/// rational; infinite at `(1,1)`. Requires `d, e >= 1`.
pub fn rank_bound(m: usize, n: usize, deg: Bidegree) -> RankBound {
    assert!(deg.d >= 1 && deg.e >= 1, "rank bound needs d, e >= 1");
    let lower = hf_s_big(m, n, deg.shift());
    if lower.is_one() {
        return RankBound::Infinite;
    }
    let top = BigInt::from(hf_s_big(m, n, Bidegree::new(1, 1)) * &lower) - BigInt::from(hf_s_big(m, n, deg));
    RankBound::Finite(BigRational::new(top, BigInt::from(lower) - BigInt::one()))
}

/// How the points are extracted for a chosen degree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SolvePath {
    /// Degree (1,1): a pencil of shifted cokernel blocks.
    Pencil,
    /// Degree above (1,1): a pre-normal form on `S_(d,e)`.
    NormalForm,
    /// Rank one: the dominant singular vectors, no polynomial system.
    RankOne,
}

impl SolvePath {
    pub fn name(self) -> &'static str {
        match self {
            SolvePath::Pencil => "pencil",
            SolvePath::NormalForm => "normalform",
            SolvePath::RankOne => "rank1",
        }
    }
}

/// A degree together with the size of its resultant matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DegreePlan {
    pub degree: Bidegree,
    pub path: SolvePath,
    pub rows: u128,
    pub cols: u128,
}

impl DegreePlan {
    pub fn for_degree(m: usize, n: usize, r: usize, degree: Bidegree) -> Result<Self> {
        let rows = hf_s(m, n, degree)?;
        let forms = ((m + 1) * (n + 1)).checked_sub(r).ok_or(Error::RankOutOfRange { rank: r, max: (m + 1) * (n + 1) })?;
        let cols = hf_s(m, n, degree.shift())?.checked_mul(forms as u128).ok_or(Error::Overflow("resultant size"))?;
        let path = if degree == Bidegree::new(1, 1) { SolvePath::Pencil } else { SolvePath::NormalForm };
        Ok(DegreePlan { degree, path, rows, cols })
    }

    /// Entries of the resultant matrix, saturating.
    pub fn cost(&self) -> u128 {
        self.rows.saturating_mul(self.cols)
    }
}

/// Largest admissible rank for a format with `m >= n`: `min(l+1, m*n)`,
/// raised to `min(l+1, m+1)` when `n = 1` since the pencil still separates
/// `m+1` points there. A format with `n = 0` is a matrix and only rank one
/// is unique.
pub fn max_rank(l: usize, m: usize, n: usize) -> usize {
    if n == 0 {
        return 1;
    }
    (l + 1).min((m * n).max(m + 1))
}

const MAX_DEGREE_SEARCH: usize = 64;

/// Chooses the cheapest degree whose rank bound admits `r`.
///
/// With `r <= m+1` and independent x-parts the pencil at (1,1) is used.
/// Otherwise the smallest `(d,1)` and the smallest `(1,e)` with `d, e >= 2`
/// are compared: lower total degree first, then fewer resultant entries,
/// then `(d,1)`.
pub fn select_degree(m: usize, n: usize, r: usize, l: usize, beta_independent: bool) -> Result<DegreePlan> {
    if n == 0 || m < n {
        return Err(Error::ShapeMismatch(format!("need m >= n >= 1, got m={m}, n={n}")));
    }
    let max = max_rank(l, m, n);
    if r == 0 || r > max {
        return Err(Error::RankOutOfRange { rank: r, max });
    }
    if r <= m + 1 && beta_independent {
        return DegreePlan::for_degree(m, n, r, Bidegree::new(1, 1));
    }
    let search = |make: fn(usize) -> Bidegree| -> Option<DegreePlan> {
        (2..MAX_DEGREE_SEARCH)
            .map(make)
            .find(|&deg| rank_bound(m, n, deg).admits(r))
            .and_then(|deg| DegreePlan::for_degree(m, n, r, deg).ok())
    };
    let by_x = search(|d| Bidegree::new(d, 1));
    let by_y = search(|e| Bidegree::new(1, e));
    match (by_x, by_y) {
        (Some(a), Some(b)) => {
            let key = |p: &DegreePlan| (p.degree.d + p.degree.e, p.cost());
            Ok(if key(&b) < key(&a) { b } else { a })
        }
        (Some(a), None) => Ok(a),
        (None, Some(b)) => Ok(b),
        (None, None) => Err(Error::RankOutOfRange { rank: r, max }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), Some(10));
        assert_eq!(binomial(0, 0), Some(1));
        assert_eq!(binomial(3, 5), Some(0));
        assert_eq!(binomial(200, 100), None);
    }

    #[test]
    fn hf_s_small_values() {
        assert_eq!(hf_s(2, 2, Bidegree::new(1, 1)).unwrap(), 9);
        assert_eq!(hf_s(2, 2, Bidegree::new(2, 1)).unwrap(), 18);
        assert_eq!(hf_s(6, 2, Bidegree::new(3, 1)).unwrap(), 84 * 3);
        assert!(matches!(hf_s(200, 200, Bidegree::new(100, 100)), Err(Error::Overflow(_))));
    }

    #[test]
    fn monomial_order_and_rank() {
        let mons = Monomials::new(3, 2);
        let listed: Vec<Vec<u32>> = (0..mons.len()).map(|i| mons.get(i).to_vec()).collect();
        assert_eq!(
            listed,
            vec![vec![2, 0, 0], vec![1, 1, 0], vec![1, 0, 1], vec![0, 2, 0], vec![0, 1, 1], vec![0, 0, 2]]
        );
        for (i, e) in listed.iter().enumerate() {
            assert_eq!(mons.rank_of(e), i);
        }
    }

    #[test]
    fn basis_labels() {
        let b = MonomialBasis::new(2, 2, Bidegree::new(1, 1));
        let labels: Vec<String> = (0..b.len()).map(|i| b.label(i)).collect();
        assert_eq!(labels, ["x0*y0", "x0*y1", "x0*y2", "x1*y0", "x1*y1", "x1*y2", "x2*y0", "x2*y1", "x2*y2"]);
    }

    #[test]
    fn rank_bound_examples() {
        let q = |a: i64, b: i64| RankBound::Finite(BigRational::new(BigInt::from(a), BigInt::from(b)));
        assert_eq!(rank_bound(6, 2, Bidegree::new(2, 1)), q(21, 2));
        assert_eq!(rank_bound(6, 2, Bidegree::new(3, 1)), q(112, 9));
        assert_eq!(rank_bound(3, 3, Bidegree::new(1, 1)), RankBound::Infinite);
        assert_eq!(rank_bound(2, 2, Bidegree::new(2, 1)), q(9, 2));
    }

    #[test]
    fn layout_rows_are_products() {
        let lay = ResultantLayout::new(2, 1, Bidegree::new(2, 1)).unwrap();
        let target = MonomialBasis::new(2, 1, Bidegree::new(2, 1));
        let lower = MonomialBasis::new(2, 1, Bidegree::new(1, 0));
        for s in 0..lay.shifts {
            let (la, lb) = lower.exponents(s);
            for k in 0..3 {
                for l in 0..2 {
                    let (a, b) = target.exponents(lay.row(s, k, l));
                    let mut want_a = la.to_vec();
                    want_a[k] += 1;
                    let mut want_b = lb.to_vec();
                    want_b[l] += 1;
                    assert_eq!((a.to_vec(), b.to_vec()), (want_a, want_b));
                }
            }
        }
    }

    #[test]
    fn max_rank_cases() {
        assert_eq!(max_rank(20, 4, 3), 12);
        assert_eq!(max_rank(8, 4, 3), 9);
        assert_eq!(max_rank(9, 4, 1), 5);
        assert_eq!(max_rank(3, 4, 1), 4);
        assert_eq!(max_rank(5, 1, 0), 1);
    }

    #[test]
    fn select_degree_cases() {
        assert_eq!(select_degree(6, 2, 12, 11, true).unwrap().degree, Bidegree::new(3, 1));
        assert_eq!(select_degree(4, 3, 4, 5, true).unwrap().path, SolvePath::Pencil);
        assert_eq!(select_degree(2, 2, 4, 3, true).unwrap().degree, Bidegree::new(2, 1));
        assert!(matches!(select_degree(3, 2, 7, 9, true), Err(Error::RankOutOfRange { .. })));
    }
}
