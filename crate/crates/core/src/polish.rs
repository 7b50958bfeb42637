//! Local optimization of order-3 factors against the tensor they approximate.

use faer::{Mat, Side};
use faer::linalg::solvers::Solve;

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Scalar;
use crate::tensor::{self, CpDecomposition, DenseTensor};
use crate::tolerances::Tolerances;

fn check_shapes<T: Scalar>(a: &DenseTensor<T>, factors: &[Mat<T>; 3]) -> Result<()> {
    let r = factors[0].ncols();
    if a.order() != 3 || (0..3).any(|k| factors[k].nrows() != a.shape()[k] || factors[k].ncols() != r) || r == 0 {
        return Err(Error::ShapeMismatch("polishing needs an order-3 tensor and matching factors".into()));
    }
    Ok(())
}

/// One alternating least-squares sweep over modes 2, 3, 1, each solve
/// refined against an accurately computed residual.
pub fn als_sweep<T: Scalar>(a: &DenseTensor<T>, factors: &[Mat<T>; 3], tol: &Tolerances) -> Result<[Mat<T>; 3]> {
    check_shapes(a, factors)?;
    let mut f = factors.clone();
    for k in [1usize, 2, 0] {
        let others: Vec<Mat<T>> = (0..3).filter(|&q| q != k).map(|q| f[q].clone()).collect();
        let kr = tensor::khatri_rao(&others);
        let rhs = linalg::transpose(a.unfold(k).as_ref());
        let x = linalg::lstsq_refined(kr.as_ref(), rhs.as_ref(), tol.khatri_rao, 1).map_err(|e| Error::RankDeficientKR(e.to_string()))?;
        f[k] = linalg::transpose(x.as_ref());
    }
    Ok(f)
}

/// Number of unknowns the damped Gauss-Newton solver works with.
pub fn parameter_count(shape: [usize; 3], r: usize) -> usize {
    r * (shape[0] + shape[1] + shape[2])
}

#[derive(Clone, Debug)]
pub struct LmOutcome<T> {
    pub factors: [Mat<T>; 3],
    /// `||A - eval||_F / ||A||_F` at `factors`.
    pub error: f64,
    /// Accepted steps.
    pub steps: usize,
}

fn residual<T: Scalar>(a: &DenseTensor<T>, f: &[Mat<T>; 3]) -> Result<DenseTensor<T>> {
    tensor::cp_residual(a, &CpDecomposition::new(f.to_vec())?)
}

fn gram<T: Scalar>(a: &Mat<T>) -> Mat<T> {
    linalg::adjoint(a.as_ref()) * a
}

/// `J^H J` of the map from stacked column-major factors to the tensor.
fn normal_matrix<T: Scalar>(f: &[Mat<T>; 3]) -> Mat<T> {
    let r = f[0].ncols();
    let dims = [f[0].nrows(), f[1].nrows(), f[2].nrows()];
    let off = [0, r * dims[0], r * (dims[0] + dims[1])];
    let grams = [gram(&f[0]), gram(&f[1]), gram(&f[2])];
    let total = r * (dims[0] + dims[1] + dims[2]);
    let mut jhj = Mat::<T>::zeros(total, total);
    for p in 0..3 {
        let (o1, o2) = match p {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for s in 0..r {
            for t in 0..r {
                let g = grams[o1][(s, t)] * grams[o2][(s, t)];
                for i in 0..dims[p] {
                    jhj[(off[p] + s * dims[p] + i, off[p] + t * dims[p] + i)] = g;
                }
            }
        }
        for q in 0..3 {
            if q == p {
                continue;
            }
            let o = 3 - p - q;
            for s in 0..r {
                for t in 0..r {
                    let g = grams[o][(s, t)];
                    for j in 0..dims[q] {
                        let left = f[q][(j, s)].conjugate() * g;
                        for i in 0..dims[p] {
                            jhj[(off[p] + s * dims[p] + i, off[q] + t * dims[q] + j)] = left * f[p][(i, t)];
                        }
                    }
                }
            }
        }
    }
    jhj
}

/// `J^H R`, stacked like the unknowns.
fn gradient<T: Scalar>(res: &DenseTensor<T>, f: &[Mat<T>; 3]) -> Mat<T> {
    let r = f[0].ncols();
    let total: usize = f.iter().map(|m| m.nrows() * r).sum();
    let mut g = Mat::<T>::zeros(total, 1);
    let mut at = 0;
    for p in 0..3 {
        let others: Vec<Mat<T>> = (0..3).filter(|&q| q != p).map(|q| f[q].clone()).collect();
        let kr = tensor::khatri_rao(&others);
        let kr_conj = Mat::from_fn(kr.nrows(), kr.ncols(), |i, j| kr[(i, j)].conjugate());
        let block = res.unfold(p) * kr_conj;
        for s in 0..r {
            for i in 0..f[p].nrows() {
                g[(at, 0)] = block[(i, s)];
                at += 1;
            }
        }
    }
    g
}

fn step<T: Scalar>(f: &[Mat<T>; 3], delta: &Mat<T>) -> [Mat<T>; 3] {
    let mut out = f.clone();
    let mut at = 0;
    for m in out.iter_mut() {
        for s in 0..m.ncols() {
            for i in 0..m.nrows() {
                m[(i, s)] += delta[(at, 0)];
                at += 1;
            }
        }
    }
    out
}

/// Rescales each rank-one term so its three factor columns have equal norm;
/// the damping below assumes comparable scales.
fn balanced<T: Scalar>(factors: &[Mat<T>; 3]) -> [Mat<T>; 3] {
    let mut f = factors.clone();
    for s in 0..f[0].ncols() {
        let norms: Vec<f64> = f.iter().map(|m| linalg::vec_norm(&linalg::column(m.as_ref(), s))).collect();
        if norms.contains(&0.0) {
            continue;
        }
        let mean = norms.iter().product::<f64>().cbrt();
        for (m, norm) in f.iter_mut().zip(&norms) {
            let scale = T::from_f64(mean / norm);
            for i in 0..m.nrows() {
                m[(i, s)] *= scale;
            }
        }
    }
    f
}

/// Damped Gauss-Newton on `||A - [[A1, A2, A3]]||_F`.
///
/// Runs at most `max_steps` accepted steps and stops early once the relative
/// error reaches `target` or a step gains less than one part in a thousand.
/// Residuals are accumulated in double-double, so steps near machine
/// precision still point downhill.
pub fn levenberg_marquardt<T: Scalar>(a: &DenseTensor<T>, factors: &[Mat<T>; 3], max_steps: usize, target: f64) -> Result<LmOutcome<T>> {
    check_shapes(a, factors)?;
    let norm = a.frobenius_norm();
    if norm == 0.0 {
        return Err(Error::ZeroTensor);
    }
    let mut f = balanced(factors);
    let mut res = residual(a, &f)?;
    let mut cost = res.frobenius_norm().powi(2);
    let mut steps = 0;
    let mut jhj = normal_matrix(&f);
    let mut g = gradient(&res, &f);
    let top = (0..jhj.nrows()).map(|i| jhj[(i, i)].real_part()).fold(0.0, f64::max);
    let mut mu = 1e-3 * top;
    let mut nu = 2.0;
    let mut rejections = 0;
    while steps < max_steps && cost.sqrt() / norm > target && rejections < 30 {
        let mut damped = jhj.clone();
        for i in 0..damped.nrows() {
            damped[(i, i)] += T::from_f64(mu);
        }
        let Ok(chol) = damped.as_ref().llt(Side::Lower) else {
            mu *= nu;
            nu *= 2.0;
            rejections += 1;
            continue;
        };
        let delta = chol.solve(g.as_ref());
        let trial = step(&f, &delta);
        let trial_res = residual(a, &trial)?;
        let trial_cost = trial_res.frobenius_norm().powi(2);
        let predicted: f64 = (0..delta.nrows()).map(|i| (delta[(i, 0)].conjugate() * (delta[(i, 0)].scale_real(mu) + g[(i, 0)])).real_part()).sum();
        let rho = (cost - trial_cost) / predicted.max(f64::MIN_POSITIVE);
        if trial_cost < cost && rho > 0.0 {
            let gain = 1.0 - (trial_cost / cost).sqrt();
            (f, res, cost) = (trial, trial_res, trial_cost);
            steps += 1;
            rejections = 0;
            mu *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
            nu = 2.0;
            if gain < 1e-3 {
                break;
            }
            jhj = normal_matrix(&f);
            g = gradient(&res, &f);
        } else {
            mu *= nu;
            nu *= 2.0;
            rejections += 1;
        }
    }
    Ok(LmOutcome { error: cost.sqrt() / norm, factors: f, steps })
}

/// `sqrt(sum_{k > r} sigma_k^2) / ||A||_F` of the mode-1 flattening: no
/// rank-`r` decomposition has a smaller relative backward error.
pub fn flattening_bound<T: Scalar>(a: &DenseTensor<T>, r: usize) -> Result<f64> {
    let norm = a.frobenius_norm();
    if norm == 0.0 {
        return Err(Error::ZeroTensor);
    }
    let sv = linalg::singular_values(a.flatten_mode1().as_ref())?;
    let tail: f64 = sv.iter().skip(r).map(|s| s * s).sum();
    Ok(tail.sqrt() / norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{add_noise, backward_error, random_cpd};
    use faer::c64;

    fn perturbed<T: Scalar>(shape: [usize; 3], r: usize, seed: u64, size: f64) -> (DenseTensor<T>, [Mat<T>; 3]) {
        let (a, cpd) = random_cpd::<T>(&shape, r, seed).unwrap();
        let mut rng = linalg::rng(seed + 1000);
        let f: Vec<Mat<T>> = cpd.factors.iter().map(|m| m + linalg::gaussian_mat::<T>(m.nrows(), r, &mut rng) * faer::Scale(T::from_f64(size))).collect();
        (a, [f[0].clone(), f[1].clone(), f[2].clone()])
    }

    /// Finite-difference check of `J^H J` and `J^H R` on a real instance.
    #[test]
    fn normal_equations_match_finite_differences() {
        let (a, f) = perturbed::<f64>([4, 3, 2], 2, 5, 0.3);
        let res = residual(&a, &f).unwrap();
        let g = gradient(&res, &f);
        let jhj = normal_matrix(&f);
        let n = g.nrows();
        let h = 1e-6;
        let model = |x: &[Mat<f64>; 3]| CpDecomposition::new(x.to_vec()).unwrap().eval().into_data();
        let base = model(&f);
        let mut jac = Mat::<f64>::zeros(base.len(), n);
        for k in 0..n {
            let mut e = Mat::<f64>::zeros(n, 1);
            e[(k, 0)] = h;
            let moved = model(&step(&f, &e));
            for (row, (x, y)) in moved.iter().zip(&base).enumerate() {
                jac[(row, k)] = (x - y) / h;
            }
        }
        let rvec = Mat::from_fn(base.len(), 1, |i, _| res.data()[i]);
        assert!((jac.transpose() * &rvec - &g).norm_max() < 1e-5);
        assert!((jac.transpose() * &jac - &jhj).norm_max() < 1e-5);
    }

    #[test]
    fn converges_from_a_perturbed_start() {
        let (a, f) = perturbed::<f64>([6, 5, 4], 4, 2, 1e-2);
        let out = levenberg_marquardt(&a, &f, 50, 0.0).unwrap();
        assert!(out.error < 1e-13, "{}", out.error);
        let (a, f) = perturbed::<c64>([5, 4, 3], 3, 3, 1e-2);
        let out = levenberg_marquardt(&a, &f, 50, 0.0).unwrap();
        assert!(out.error < 1e-13, "{}", out.error);
    }

    #[test]
    fn stops_at_target() {
        let (a, f) = perturbed::<f64>([6, 5, 4], 4, 2, 1e-2);
        let start = backward_error(&a, &CpDecomposition::new(f.to_vec()).unwrap()).unwrap();
        let out = levenberg_marquardt(&a, &f, 50, start * 0.5).unwrap();
        assert!(out.error <= start * 0.5 && out.steps >= 1);
        let none = levenberg_marquardt(&a, &f, 50, 1.0).unwrap();
        assert_eq!(none.steps, 0);
    }

    #[test]
    fn als_sweep_does_not_move_exact_factors_much() {
        let (a, cpd) = random_cpd::<f64>(&[5, 4, 3], 3, 1).unwrap();
        let f = [cpd.factors[0].clone(), cpd.factors[1].clone(), cpd.factors[2].clone()];
        let out = als_sweep(&a, &f, &Tolerances::default()).unwrap();
        let err = backward_error(&a, &CpDecomposition::new(out.to_vec()).unwrap()).unwrap();
        assert!(err < 1e-15, "{err}");
    }

    #[test]
    fn flattening_bound_is_a_lower_bound() {
        let (a, cpd) = random_cpd::<f64>(&[8, 4, 3], 5, 4).unwrap();
        assert!(flattening_bound(&a, 5).unwrap() < 1e-14);
        let noisy = add_noise(&a, Some(-3), 9).unwrap();
        let bound = flattening_bound(&noisy, 5).unwrap();
        assert!(bound > 1e-5 && bound <= backward_error(&noisy, &cpd).unwrap());
    }

    #[test]
    fn rejects_mismatched_factors() {
        let (a, cpd) = random_cpd::<f64>(&[5, 4, 3], 3, 1).unwrap();
        let f = [cpd.factors[1].clone(), cpd.factors[0].clone(), cpd.factors[2].clone()];
        assert!(matches!(als_sweep(&a, &f, &Tolerances::default()), Err(Error::ShapeMismatch(_))));
        assert!(matches!(levenberg_marquardt(&a, &f, 5, 0.0), Err(Error::ShapeMismatch(_))));
    }
}
