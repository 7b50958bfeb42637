//! Regularity certificates over a prime field.
//!
//! For a configuration of `r` points `(beta_i, gamma_i)` the ideal `J(Z)` is
//! generated by the bilinear forms vanishing on all of them. Its Hilbert
//! function is computed exactly over `Z_p`. The corank over `Z_p`
//! bounds the characteristic-zero corank from above. Every configuration
//! gives at least `r`. So a value of exactly `r` over `Z_p` certifies
//! `HF = r` for generic configurations.

use faer::Mat;
use rand::Rng as _;

use crate::bigraded::{hf_s_usize, rank_bound, Bidegree, ResultantLayout};
use crate::error::{Error, Result};
use crate::linalg;

pub const DEFAULT_PRIME: u32 = 8191;

fn check_prime(p: u32) -> Result<()> {
    let prime = p >= 2 && (2..).take_while(|d| d * d <= p).all(|d| !p.is_multiple_of(d));
    if !prime || p >= 1 << 15 {
        return Err(Error::ShapeMismatch(format!("{p} is not a prime below 2^15")));
    }
    Ok(())
}

/// Dense matrix over `Z_p`, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FpMatrix {
    pub p: u32,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<u32>,
}

impl FpMatrix {
    pub fn zeros(p: u32, rows: usize, cols: usize) -> Self {
        FpMatrix { p, rows, cols, data: vec![0; rows * cols] }
    }

    /// Reduces arbitrary integers modulo `p`.
    pub fn from_i64(p: u32, rows: usize, cols: usize, values: &[i64]) -> Self {
        assert_eq!(values.len(), rows * cols);
        let data = values.iter().map(|&v| v.rem_euclid(p as i64) as u32).collect();
        FpMatrix { p, rows, cols, data }
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: u32) {
        self.data[i * self.cols + j] = v % self.p;
    }
}

/// Table of multiplicative inverses modulo `p` (entry 0 unused).
fn inverse_table(p: u32) -> Vec<u32> {
    let mut inv = vec![0u32; p as usize];
    if p > 1 {
        inv[1] = 1;
    }
    for a in 2..p as usize {
        // inv[a] = -(p / a) * inv[p mod a]
        let q = (p as usize / a) as u64;
        let r = p as usize % a;
        inv[a] = ((p as u64 - q) * inv[r] as u64 % p as u64) as u32;
    }
    inv
}

/// Reduced row echelon form in place; returns the pivot columns.
fn rref(m: &mut FpMatrix, inv: &[u32]) -> Vec<usize> {
    let p = m.p as u64;
    let cols = m.cols;
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..cols {
        if row == m.rows {
            break;
        }
        let Some(piv) = (row..m.rows).find(|&i| m.data[i * cols + col] != 0) else {
            continue;
        };
        if piv != row {
            for j in 0..cols {
                m.data.swap(piv * cols + j, row * cols + j);
            }
        }
        let s = inv[m.data[row * cols + col] as usize] as u64;
        for j in col..cols {
            let v = m.data[row * cols + j] as u64;
            m.data[row * cols + j] = (v * s % p) as u32;
        }
        let (before, rest) = m.data.split_at_mut(row * cols);
        let (pivot_row, after) = rest.split_at_mut(cols);
        let eliminate = |other: &mut [u32]| {
            let f = other[col] as u64;
            if f == 0 {
                return;
            }
            let neg = p - f;
            for j in col..cols {
                other[j] = ((other[j] as u64 + neg * pivot_row[j] as u64) % p) as u32;
            }
        };
        before.chunks_mut(cols).for_each(eliminate);
        after.chunks_mut(cols).for_each(eliminate);
        pivots.push(col);
        row += 1;
    }
    pivots
}

/// Rank over `Z_p` by Gaussian elimination.
pub fn fp_rank(m: &FpMatrix) -> usize {
    // eliminate along the shorter side
    if m.rows <= m.cols {
        echelon_rank(m)
    } else {
        echelon_rank(&transpose(m))
    }
}

/// Forward elimination without back substitution, in `f64`. Entries stay
/// unreduced between pivots: every update adds less than `p^2 < 2^30` and
/// a row receives at most one update per pivot, so all values are exact
/// integers below `2^53` for fewer than `2^23` pivots. An entry is reduced
/// when it is read as a multiplier.
fn echelon_rank(m: &FpMatrix) -> usize {
    let (rows, cols) = (m.rows, m.cols);
    let pf = m.p as f64;
    let reduce = |x: f64| {
        let r = x - pf * (x / pf).floor();
        if r < 0.0 {
            r + pf
        } else if r >= pf {
            r - pf
        } else {
            r
        }
    };
    let inv = inverse_table(m.p);
    let mut a: Vec<f64> = m.data.iter().map(|&v| v as f64).collect();
    let mut rank = 0;
    for col in 0..cols {
        if rank == rows {
            break;
        }
        let mut pivot = None;
        for i in rank..rows {
            let v = reduce(a[i * cols + col]);
            a[i * cols + col] = v;
            if v != 0.0 {
                pivot = Some(i);
                break;
            }
        }
        let Some(piv) = pivot else {
            continue;
        };
        if piv != rank {
            for j in col..cols {
                a.swap(piv * cols + j, rank * cols + j);
            }
        }
        let (head, tail) = a.split_at_mut((rank + 1) * cols);
        let pivot_row = &mut head[rank * cols..];
        let s = inv[pivot_row[col] as usize] as f64;
        for x in pivot_row[col..].iter_mut() {
            *x = reduce(reduce(*x) * s);
        }
        for row in tail.chunks_mut(cols) {
            let f = reduce(row[col]);
            if f == 0.0 {
                row[col] = 0.0;
                continue;
            }
            let neg = pf - f;
            for (x, &y) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                *x += neg * y;
            }
        }
        rank += 1;
    }
    rank
}

fn transpose(m: &FpMatrix) -> FpMatrix {
    let mut t = FpMatrix::zeros(m.p, m.cols, m.rows);
    for i in 0..m.rows {
        for j in 0..m.cols {
            t.data[j * m.rows + i] = m.data[i * m.cols + j];
        }
    }
    t
}

/// Basis of the right kernel, one vector per row of the result.
pub fn fp_kernel(m: &FpMatrix) -> FpMatrix {
    let mut work = m.clone();
    let inv = inverse_table(m.p);
    let pivots = rref(&mut work, &inv);
    let free: Vec<usize> = (0..m.cols).filter(|c| !pivots.contains(c)).collect();
    let mut ker = FpMatrix::zeros(m.p, free.len(), m.cols);
    for (k, &f) in free.iter().enumerate() {
        ker.data[k * m.cols + f] = 1;
        for (row, &pc) in pivots.iter().enumerate() {
            let v = work.data[row * m.cols + f];
            ker.data[k * m.cols + pc] = (m.p - v) % m.p;
        }
    }
    ker
}

/// `r` points in `P^m x P^n` with coordinates in `Z_p`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PointConfigFp {
    pub p: u32,
    pub m: usize,
    pub n: usize,
    /// `(m+1) x r`, row-major.
    pub beta: FpMatrix,
    /// `(n+1) x r`, row-major.
    pub gamma: FpMatrix,
}

impl PointConfigFp {
    /// Uniform coordinates in `Z_p` from a seeded generator.
    pub fn random(p: u32, m: usize, n: usize, r: usize, seed: u64) -> Result<Self> {
        check_prime(p)?;
        let mut rng = linalg::rng(seed);
        let mut draw = |rows: usize| {
            let data = (0..rows * r).map(|_| rng.random_range(0..p)).collect();
            FpMatrix { p, rows, cols: r, data }
        };
        let beta = draw(m + 1);
        let gamma = draw(n + 1);
        Ok(PointConfigFp { p, m, n, beta, gamma })
    }

    pub fn from_points(p: u32, beta: FpMatrix, gamma: FpMatrix) -> Result<Self> {
        check_prime(p)?;
        if beta.cols != gamma.cols || beta.rows == 0 || gamma.rows == 0 {
            return Err(Error::ShapeMismatch("beta and gamma must hold the same number of points".into()));
        }
        Ok(PointConfigFp { p, m: beta.rows - 1, n: gamma.rows - 1, beta, gamma })
    }

    pub fn rank(&self) -> usize {
        self.beta.cols
    }

    /// The `r x (m+1)(n+1)` matrix with rows `beta_i (x) gamma_i`.
    pub fn w_matrix(&self) -> FpMatrix {
        let (m1, n1, r) = (self.m + 1, self.n + 1, self.rank());
        let p = self.p as u64;
        let mut w = FpMatrix::zeros(self.p, r, m1 * n1);
        for i in 0..r {
            for k in 0..m1 {
                for l in 0..n1 {
                    let v = self.beta.get(k, i) as u64 * self.gamma.get(l, i) as u64 % p;
                    w.data[i * m1 * n1 + k * n1 + l] = v as u32;
                }
            }
        }
        w
    }
}

/// `HF_{S/J(Z)}(d,e)` over `Z_p`: `HF_S(d,e)` minus the rank of the
/// resultant matrix built from a kernel basis of the w-matrix.
pub fn hilbert_sj(z: &PointConfigFp, deg: Bidegree) -> Result<usize> {
    let (m, n, r) = (z.m, z.n, z.rank());
    let total = hf_s_usize(m, n, deg)?;
    let w = z.w_matrix();
    let rank_w = fp_rank(&w);
    if rank_w < r {
        return Err(Error::ConfigNotInW { rank: rank_w, expected: r });
    }
    if deg.d == 0 || deg.e == 0 {
        return Ok(total);
    }
    let forms = fp_kernel(&w);
    let layout = ResultantLayout::new(m, n, deg)?;
    let n1 = n + 1;
    let ncols = layout.cols(forms.rows);
    // column (j, s) holds x^a' y^b' f_j for the s-th shift
    let mut res = FpMatrix::zeros(z.p, layout.rows, ncols);
    let mut col = 0;
    for j in 0..forms.rows {
        for s in 0..layout.shifts {
            for k in 0..=m {
                for l in 0..n1 {
                    let v = forms.get(j, k * n1 + l);
                    if v != 0 {
                        res.data[layout.row(s, k, l) * ncols + col] = v;
                    }
                }
            }
            col += 1;
        }
    }
    Ok(total - fp_rank(&res))
}

/// The stacked matrix whose corank is `HF_{S/J(Z)}(2,1)`: for each pair
/// `k < q` of x-coordinates a block row with `Gamma H_q` in column block `k`
/// and `-Gamma H_k` in column block `q`, where `H_q = diag(beta_{iq})`.
pub fn az_matrix(z: &PointConfigFp) -> FpMatrix {
    let (m1, n1, r) = (z.m + 1, z.n + 1, z.rank());
    let p = z.p as u64;
    let pairs = m1 * (m1 - 1) / 2;
    let mut a = FpMatrix::zeros(z.p, pairs * n1, m1 * r);
    let cols = m1 * r;
    let mut block = 0;
    for k in 0..m1 {
        for q in k + 1..m1 {
            for l in 0..n1 {
                let row = block * n1 + l;
                for i in 0..r {
                    let g = z.gamma.get(l, i) as u64;
                    a.data[row * cols + k * r + i] = (g * z.beta.get(q, i) as u64 % p) as u32;
                    a.data[row * cols + q * r + i] = ((p - g * z.beta.get(k, i) as u64 % p) % p) as u32;
                }
            }
            block += 1;
        }
    }
    a
}

pub fn az_corank(z: &PointConfigFp) -> usize {
    let a = az_matrix(z);
    a.cols - fp_rank(&a)
}

/// Real-valued counterpart of [`az_corank`] with a relative singular value
/// cutoff.
pub fn az_corank_real(beta: &Mat<f64>, gamma: &Mat<f64>, tol: f64) -> Result<usize> {
    let (m1, n1, r) = (beta.nrows(), gamma.nrows(), beta.ncols());
    if gamma.ncols() != r {
        return Err(Error::ShapeMismatch("beta and gamma must hold the same number of points".into()));
    }
    let pairs: Vec<(usize, usize)> = (0..m1).flat_map(|k| (k + 1..m1).map(move |q| (k, q))).collect();
    let a = Mat::from_fn(pairs.len() * n1, m1 * r, |row, col| {
        let (k, q) = pairs[row / n1];
        let l = row % n1;
        let (blk, i) = (col / r, col % r);
        if blk == k {
            gamma[(l, i)] * beta[(q, i)]
        } else if blk == q {
            -gamma[(l, i)] * beta[(k, i)]
        } else {
            0.0
        }
    });
    let sv = linalg::singular_values(a.as_ref())?;
    let top = sv.first().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&s| s > tol * top).count();
    Ok(m1 * r - rank)
}

/// Outcome of [`certify_conjecture`] for one `(m, n, d, r)` cell.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Certificate {
    pub m: usize,
    pub n: usize,
    pub d: usize,
    pub r: usize,
    pub p: u32,
    /// Seed of the witness, or of the last trial when none was found.
    pub seed: u64,
    /// Rank of the w-matrix of that configuration.
    pub rank_n: usize,
    /// `HF_{S/J(Z)}(d,1)` of that configuration.
    pub hf: usize,
    pub success: bool,
    pub trials_used: usize,
}

/// Largest rank in the certified range: `floor(min{R(m,n,(d,1)), mn})`.
pub fn auto_rank(m: usize, n: usize, d: usize) -> usize {
    let bound = rank_bound(m, n, Bidegree::new(d, 1));
    let mn = m * n;
    if bound.admits(mn) {
        mn
    } else {
        bound.floor_usize().min(mn)
    }
}

/// Looks for one configuration over `Z_p` with `HF_{S/J(Z)}(d,1) = r`.
/// Trial `t` uses seed `seed + t`. Failure after all trials is
/// inconclusive, not a disproof.
pub fn certify_conjecture(m: usize, n: usize, d: usize, r: usize, p: u32, trials: usize, seed: u64) -> Result<Certificate> {
    check_prime(p)?;
    if m == 0 || n == 0 || d == 0 {
        return Err(Error::ShapeMismatch(format!("need m, n, d >= 1, got ({m},{n},{d})")));
    }
    let max = auto_rank(m, n, d);
    if r == 0 || r > max {
        return Err(Error::RankOutOfRange { rank: r, max });
    }
    let deg = Bidegree::new(d, 1);
    let mut last = Certificate { m, n, d, r, p, seed, rank_n: 0, hf: 0, success: false, trials_used: 0 };
    for t in 0..trials {
        let s = seed.wrapping_add(t as u64);
        let z = PointConfigFp::random(p, m, n, r, s)?;
        let rank_n = fp_rank(&z.w_matrix());
        let hf = if rank_n == r { hilbert_sj(&z, deg)? } else { 0 };
        last = Certificate { m, n, d, r, p, seed: s, rank_n, hf, success: rank_n == r && hf == r, trials_used: t + 1 };
        if last.success {
            break;
        }
    }
    Ok(last)
}
