//! Randomized invariants of the pipeline stages.

use cpdhnf::bigraded::{hf_s, rank_bound, select_degree, MonomialBasis, RankBound};
use cpdhnf::linalg::{self, frob, gaussian_vec, singular_values};
use cpdhnf::normalform::{general_family, multiplication_matrices, simultaneous_diagonalize, PreNormalForm};
use cpdhnf::polysys::{build_resultant, kernel_flattening, left_nullspace, BilinearSystem, NullspaceMethod};
use cpdhnf::recovery::{newton_refine, DegreeChoice};
use cpdhnf::regcert::{az_corank, hilbert_sj, PointConfigFp};
use cpdhnf::tensor::{backward_error, factor_match_error, random_cpd, reshape_group, ungroup};
use cpdhnf::{c64, decompose, Bidegree, CpDecomposition, DecomposeOptions, DenseTensor, Grouping, KernelMethod, Tolerances};
use faer::Mat;
use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;
use rand::Rng;

const PRIME: u32 = 8191;

fn same_bits<T: PartialEq + Copy>(a: &Mat<T>, b: &Mat<T>) -> bool {
    a.nrows() == b.nrows() && a.ncols() == b.ncols() && (0..a.ncols()).all(|j| (0..a.nrows()).all(|i| a[(i, j)] == b[(i, j)]))
}

fn monomial_value(a: &[u32], b: &[u32], beta: &[f64], gamma: &[f64]) -> f64 {
    let x: f64 = a.iter().zip(beta).map(|(&p, &v)| v.powi(p as i32)).product();
    let y: f64 = b.iter().zip(gamma).map(|(&p, &v)| v.powi(p as i32)).product();
    x * y
}

/// Kernel system of a random `r x (m+1) x (n+1)` tensor with its points.
fn system_from_points(m: usize, n: usize, r: usize, seed: u64) -> (BilinearSystem<f64>, CpDecomposition<f64>) {
    let (t, cpd) = random_cpd::<f64>(&[r, m + 1, n + 1], r, seed).unwrap();
    let flat = t.flatten_mode1();
    let (sys, _) = kernel_flattening(flat.as_ref(), m, n, r, &Tolerances::default()).unwrap();
    (sys, cpd)
}

fn point(cpd: &CpDecomposition<f64>, i: usize) -> (Vec<f64>, Vec<f64>) {
    (linalg::column(cpd.factors[1].as_ref(), i), linalg::column(cpd.factors[2].as_ref(), i))
}

/// Splits the modes of an order-`d` tensor into three nonempty parts.
fn grouping_from(assign: &[usize]) -> Option<Grouping> {
    let mut parts: [Vec<usize>; 3] = Default::default();
    for (mode, &p) in assign.iter().enumerate() {
        parts[p % 3].push(mode);
    }
    parts.iter().all(|p| !p.is_empty()).then(|| Grouping::new(parts))
}

// ---------------------------------------------------------------- tensors

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn flattening_is_first_factor_times_khatri_rao(l1 in 1usize..6, m1 in 1usize..6, n1 in 1usize..6, r in 1usize..6, seed in 0u64..10_000) {
        let (t, cpd) = random_cpd::<f64>(&[l1, m1, n1], r, seed).unwrap();
        let flat = t.flatten_mode1();
        let [a, b, c] = [&cpd.factors[0], &cpd.factors[1], &cpd.factors[2]];
        for i in 0..l1 {
            for k in 0..m1 {
                for l in 0..n1 {
                    let terms: Vec<f64> = (0..r).map(|s| a[(i, s)] * b[(k, s)] * c[(l, s)]).collect();
                    let want: f64 = terms.iter().sum();
                    let scale: f64 = terms.iter().map(|x| x.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
                    prop_assert!((flat[(i, k * n1 + l)] - want).abs() <= 1e-13 * scale);
                }
            }
        }
    }

    #[test]
    fn grouping_permutes_entries_and_ungroup_inverts(
        shape in prop::collection::vec(1usize..4, 3..6),
        assign in prop::collection::vec(0usize..3, 5),
        seed in 0u64..10_000,
    ) {
        let Some(g) = grouping_from(&assign[..shape.len()]) else { return Ok(()) };
        let mut rng = linalg::rng(seed);
        let len = shape.iter().product();
        let a = DenseTensor::new(shape.clone(), gaussian_vec::<f64>(len, &mut rng)).unwrap();
        let grouped = reshape_group(&a, &g).unwrap();
        prop_assert_eq!(grouped.shape(), &g.grouped_shape(&shape)[..]);
        let mut before: Vec<u64> = a.data().iter().map(|x| x.to_bits()).collect();
        let mut after: Vec<u64> = grouped.data().iter().map(|x| x.to_bits()).collect();
        before.sort_unstable();
        after.sort_unstable();
        prop_assert_eq!(before, after);
        let back = ungroup(&grouped, &shape, &g).unwrap();
        prop_assert!(back.data().iter().zip(a.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn backward_error_ignores_term_rescaling(
        shape in prop::collection::vec(2usize..5, 3..5),
        r in 1usize..4,
        term in 0usize..4,
        lambda in 0.1f64..10.0,
        mu in -10.0f64..-0.1,
        seed in 0u64..10_000,
    ) {
        let (t, cpd) = random_cpd::<f64>(&shape, r, seed).unwrap();
        let (_, other) = random_cpd::<f64>(&shape, r, seed + 1).unwrap();
        let term = term % r;
        let base = backward_error(&t, &other).unwrap();
        let mut scaled = other.clone();
        let last = scaled.factors.len() - 1;
        for i in 0..shape[0] {
            scaled.factors[0][(i, term)] *= lambda;
        }
        for i in 0..shape[1] {
            scaled.factors[1][(i, term)] *= mu;
        }
        for i in 0..shape[last] {
            scaled.factors[last][(i, term)] /= lambda * mu;
        }
        let moved = backward_error(&t, &scaled).unwrap();
        prop_assert!((base - moved).abs() <= 1e-12 * base, "{base} vs {moved}");
        // the same on the exact decomposition stays at rounding level
        let mut exact = cpd.clone();
        for i in 0..shape[1] {
            exact.factors[1][(i, term)] *= mu;
        }
        for i in 0..shape[last] {
            exact.factors[last][(i, term)] /= mu;
        }
        prop_assert!(backward_error(&t, &exact).unwrap() <= 1e-14);
    }

    #[test]
    fn random_cpd_is_reproducible(shape in prop::collection::vec(1usize..5, 2..5), r in 1usize..5, seed in any::<u64>()) {
        let (t1, d1) = random_cpd::<f64>(&shape, r, seed).unwrap();
        let (t2, d2) = random_cpd::<f64>(&shape, r, seed).unwrap();
        prop_assert!(t1.data().iter().zip(t2.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        prop_assert!(d1.factors.iter().zip(&d2.factors).all(|(a, b)| same_bits(a, b)));
        let (z1, _) = random_cpd::<c64>(&shape, r, seed).unwrap();
        let (z2, _) = random_cpd::<c64>(&shape, r, seed).unwrap();
        prop_assert_eq!(z1.data(), z2.data());
    }
}

// ---------------------------------------------------------------- degrees

#[test]
fn monomial_count_is_the_hilbert_function() {
    for m in 1..=8 {
        for n in 1..=8 {
            for d in 1..=6 {
                for e in 0..=3 {
                    let deg = Bidegree::new(d, e);
                    assert_eq!(MonomialBasis::new(m, n, deg).len() as u128, hf_s(m, n, deg).unwrap(), "({m},{n}) at {deg}");
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn monomial_index_inverts_enumeration(m in 0usize..5, n in 0usize..5, d in 0usize..4, e in 0usize..4) {
        let basis = MonomialBasis::new(m, n, Bidegree::new(d, e));
        for idx in 0..basis.len() {
            let (a, b) = basis.exponents(idx);
            prop_assert_eq!(a.iter().sum::<u32>() as usize, d);
            prop_assert_eq!(b.iter().sum::<u32>() as usize, e);
            prop_assert_eq!(basis.index_of(a, b), idx);
        }
    }
}

fn binomial(n: u64, k: u64) -> BigInt {
    (0..k).fold(BigInt::from(1), |acc, i| acc * BigInt::from(n - i) / BigInt::from(i + 1))
}

#[test]
fn rank_bound_matches_closed_form() {
    for m in 1..=10u64 {
        for n in 1..=10u64 {
            for d in 2..=6u64 {
                let c = binomial(m + d - 1, d - 1);
                let second = BigInt::from((m + 1) * (n + 1) * d) - BigInt::from((n + 1) * (m + d));
                let want = BigRational::new(&c * second, (&c - BigInt::from(1)) * BigInt::from(d));
                match rank_bound(m as usize, n as usize, Bidegree::new(d as usize, 1)) {
                    RankBound::Finite(q) => assert_eq!(q, want, "({m},{n},{d})"),
                    RankBound::Infinite => panic!("({m},{n},{d}) infinite"),
                }
            }
        }
    }
}

#[test]
fn selected_degree_is_minimal_and_admissible() {
    for m in 1..=10usize {
        for n in 1..=m {
            for r in 1..=m * n {
                let l = m.max(r);
                let plan = select_degree(m, n, r, l, false).unwrap();
                let deg = plan.degree;
                assert!(rank_bound(m, n, deg).admits(r), "({m},{n}) r={r} got {deg}");
                if deg.e == 1 && deg.d >= 3 {
                    assert!(!rank_bound(m, n, Bidegree::new(deg.d - 1, 1)).admits(r), "({m},{n}) r={r}: {deg} not minimal");
                }
                if deg.d == 1 && deg.e >= 3 {
                    assert!(!rank_bound(m, n, Bidegree::new(1, deg.e - 1)).admits(r), "({m},{n}) r={r}: {deg} not minimal");
                }
                if r <= m + 1 {
                    assert_eq!(select_degree(m, n, r, l, true).unwrap().degree, Bidegree::new(1, 1));
                }
            }
        }
    }
}

// ---------------------------------------------------------------- bilinear systems

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn resultant_columns_vanish_at_the_points(m in 1usize..5, n in 1usize..4, d in 1usize..4, e in 1usize..3, frac in 0.0f64..1.0, seed in 0u64..10_000) {
        let r = 1 + (frac * (m * n) as f64) as usize % (m * n);
        let (sys, cpd) = system_from_points(m, n, r, seed);
        let deg = Bidegree::new(d, e);
        let res = build_resultant(&sys, deg).unwrap();
        let dense = res.to_dense();
        let basis = MonomialBasis::new(m, n, deg);
        prop_assert_eq!(dense.nrows(), basis.len());
        for i in 0..r {
            let (beta, gamma) = point(&cpd, i);
            let vals: Vec<f64> = (0..basis.len()).map(|row| {
                let (a, b) = basis.exponents(row);
                monomial_value(a, b, &beta, &gamma)
            }).collect();
            for c in 0..dense.ncols() {
                let (sum, scale) = (0..dense.nrows())
                    .fold((0.0, 0.0), |(s, t), row| (s + dense[(row, c)] * vals[row], t + (dense[(row, c)] * vals[row]).abs()));
                prop_assert!(sum.abs() <= 1e-12 * scale.max(1e-300), "column {c} at point {i}: {sum:e}");
            }
        }
        // corank at least r
        let sv = singular_values(dense.as_ref()).unwrap();
        let top = sv.iter().copied().fold(0.0, f64::max);
        let rank = sv.iter().filter(|&&s| s > 1e-8 * top).count();
        prop_assert!(dense.nrows() - rank >= r);
    }

    #[test]
    fn jacobian_matches_central_differences(m in 1usize..6, n in 1usize..6, forms in 1usize..7, seed in 0u64..10_000) {
        let mut rng = linalg::rng(seed);
        let fs = (0..forms).map(|_| linalg::gaussian_mat::<f64>(m + 1, n + 1, &mut rng)).collect();
        let sys = BilinearSystem::new(m, n, fs).unwrap();
        let beta = gaussian_vec::<f64>(m + 1, &mut rng);
        let gamma = gaussian_vec::<f64>(n + 1, &mut rng);
        let jac = sys.jacobian(&beta, &gamma);
        let h = 1e-6;
        for v in 0..m + n + 2 {
            let at = |sign: f64| {
                let (mut b, mut g) = (beta.clone(), gamma.clone());
                if v <= m { b[v] += sign * h } else { g[v - m - 1] += sign * h }
                sys.evaluate(&b, &g)
            };
            let (plus, minus) = (at(1.0), at(-1.0));
            for j in 0..forms {
                prop_assert!((jac[(j, v)] - (plus[j] - minus[j]) / (2.0 * h)).abs() <= 1e-6);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn left_null_spaces_agree(m in 2usize..6, n in 1usize..4, frac in 0.0f64..1.0, seed in 0u64..10_000) {
        let n = n.min(m);
        let deg = Bidegree::new(2, 1);
        let top = rank_bound(m, n, deg).floor_usize().min(m * n);
        let r = 1 + (frac * top as f64) as usize % top;
        let (sys, _) = system_from_points(m, n, r, seed);
        let res = build_resultant(&sys, deg).unwrap();
        let dense = res.to_dense();
        let tol = Tolerances::default();
        let mut spans = Vec::new();
        for method in [NullspaceMethod::Svd, NullspaceMethod::Eigs] {
            let cok = left_nullspace(&res, r, method, &tol, &mut linalg::rng(seed)).unwrap();
            let nmat = &cok.n;
            prop_assert!(frob((nmat * &dense).as_ref()) <= 1e-8 * frob(dense.as_ref()));
            let gram = nmat * linalg::adjoint(nmat.as_ref());
            let eye = Mat::<f64>::identity(r, r);
            prop_assert!(frob((&gram - &eye).as_ref()) <= 1e-12, "{method:?}");
            spans.push(linalg::adjoint(nmat.as_ref()) * nmat);
        }
        // projector distance bounds the sine of the largest principal angle
        prop_assert!(frob((&spans[0] - &spans[1]).as_ref()) <= 1e-6);
    }
}

// ---------------------------------------------------------------- normal forms

struct Family {
    matrices: Vec<Mat<f64>>,
    values: Mat<c64>,
    left: Mat<c64>,
    expected: Vec<Vec<f64>>,
    commutation: f64,
}

/// Multiplication family at (2,1) on a system built from known points, with
/// the eigenvalues `x_k / h0` each point should produce.
fn family_at_21(m: usize, n: usize, r: usize, seed: u64) -> Family {
    let deg = Bidegree::new(2, 1);
    let (sys, cpd) = system_from_points(m, n, r, seed);
    let res = build_resultant(&sys, deg).unwrap();
    let tol = Tolerances::default();
    let mut rng = linalg::rng(seed);
    let cok = left_nullspace(&res, r, NullspaceMethod::Svd, &tol, &mut rng).unwrap();
    let pnf = PreNormalForm::new(cok.n, m, n, deg).unwrap();
    let fam = general_family(&pnf, None, None, &mut rng).unwrap();
    let mult = multiplication_matrices(&fam, &tol).unwrap();
    let diag = simultaneous_diagonalize(&mult, &mut rng, &tol).unwrap();
    let lin = MonomialBasis::new(m, n, Bidegree::new(1, 0));
    let expected = (0..r)
        .map(|i| {
            let (beta, gamma) = point(&cpd, i);
            let h0: f64 = (0..lin.len()).map(|s| {
                let (a, b) = lin.exponents(s);
                fam.h0[s] * monomial_value(a, b, &beta, &gamma)
            }).sum();
            beta.iter().map(|b| b / h0).collect()
        })
        .collect();
    Family { commutation: mult.commutation_error(), matrices: mult.matrices, values: diag.values, left: diag.left, expected }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn multiplication_matrices_reveal_the_points(m in 2usize..6, n in 1usize..4, frac in 0.0f64..1.0, seed in 0u64..10_000) {
        let n = n.min(m);
        let top = rank_bound(m, n, Bidegree::new(2, 1)).floor_usize().min(m * n);
        let r = 2.max(1 + (frac * top as f64) as usize % top);
        let f = family_at_21(m, n, r, seed);
        prop_assert!(f.commutation <= 1e-8, "commutation {:e}", f.commutation);
        let scale = f.matrices.iter().map(|mk| frob(mk.as_ref())).fold(0.0, f64::max);

        // every point's coordinate ratios appear as one joint eigenvalue tuple
        for want in &f.expected {
            let best = (0..r)
                .map(|j| (0..=m).map(|k| (f.values[(k, j)] - c64::new(want[k], 0.0)).norm()).fold(0.0, f64::max))
                .fold(f64::INFINITY, f64::min);
            let size = want.iter().map(|x| x.abs()).fold(1.0, f64::max);
            prop_assert!(best <= 1e-8 * size, "eigenvalue mismatch {best:e}");
        }

        // rows of the left eigenvector matrix are eigenvectors of each M_k
        for (k, mk) in f.matrices.iter().enumerate() {
            let mc = linalg::to_c64(mk.as_ref());
            let wm = &f.left * &mc;
            for i in 0..r {
                let lam = f.values[(k, i)];
                let wnorm: f64 = (0..r).map(|c| f.left[(i, c)].norm_sqr()).sum::<f64>().sqrt();
                let cross: f64 = (0..r).map(|c| (wm[(i, c)] - lam * f.left[(i, c)]).norm_sqr()).sum::<f64>().sqrt();
                prop_assert!(cross <= 1e-8 * wnorm * scale, "M_{k}, vector {i}: {cross:e}");
            }
        }
    }

    #[test]
    fn combining_one_shift_selects_its_block(m in 1usize..4, n in 1usize..3, d in 1usize..4, e in 1usize..3, seed in 0u64..1000) {
        let deg = Bidegree::new(d, e);
        let cols = MonomialBasis::new(m, n, deg).len();
        let mut rng = linalg::rng(seed);
        let pnf = PreNormalForm::new(linalg::gaussian_mat::<f64>(3, cols, &mut rng), m, n, deg).unwrap();
        for s in 0..pnf.num_shifts() {
            let mut coeffs = vec![0.0; pnf.num_shifts()];
            coeffs[s] = 1.0;
            prop_assert!(same_bits(&pnf.combine_shifts(&coeffs), &pnf.shifted_by_index(s)));
        }
    }
}

// ---------------------------------------------------------------- recovery

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn newton_never_raises_the_point_residual(m in 1usize..6, n in 1usize..5, frac in 0.0f64..1.0, noise in -14i32..-3, seed in 0u64..10_000) {
        let r = 1 + (frac * (m * n) as f64) as usize % (m * n);
        let (sys, cpd) = system_from_points(m, n, r, seed);
        let mut rng = linalg::rng(seed ^ 0x5eed);
        let tol = Tolerances::default();
        for i in 0..r {
            let (mut beta, mut gamma) = point(&cpd, i);
            for v in beta.iter_mut().chain(gamma.iter_mut()) {
                *v += 10f64.powi(noise) * rng.random_range(-1.0..1.0);
            }
            let out = newton_refine(&sys, &beta, &gamma, 3, &tol).unwrap();
            prop_assert!(out.residual_after <= out.residual_before, "{:e} -> {:e}", out.residual_before, out.residual_after);
        }
    }
}

fn random_case(m1: usize, n1: usize, frac: f64) -> ([usize; 3], usize) {
    let (m, n) = (m1 - 1, n1 - 1);
    let top = rank_bound(m, n, Bidegree::new(2, 1)).floor_usize().min(m * n);
    let r = 1 + (frac * top as f64) as usize % top;
    ([r.max(m1), m1, n1], r)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn decompose_is_deterministic(m1 in 3usize..7, n1 in 2usize..4, frac in 0.0f64..1.0, seed in 0u64..1000) {
        let (shape, r) = random_case(m1, n1.min(m1), frac);
        let (t, _) = random_cpd::<f64>(&shape, r, seed).unwrap();
        let opts = DecomposeOptions { seed, ..Default::default() };
        let a = decompose(&t, r, &opts).unwrap();
        let b = decompose(&t, r, &opts).unwrap();
        prop_assert!(a.cpd.factors.iter().zip(&b.cpd.factors).all(|(x, y)| same_bits(x, y)));
        prop_assert_eq!(a.backward_error.to_bits(), b.backward_error.to_bits());
        let (z, _) = random_cpd::<c64>(&shape, r, seed).unwrap();
        let a = decompose(&z, r, &opts).unwrap();
        let b = decompose(&z, r, &opts).unwrap();
        prop_assert!(a.cpd.factors.iter().zip(&b.cpd.factors).all(|(x, y)| same_bits(x, y)));
    }

    #[test]
    fn other_seeds_give_the_same_factors(m1 in 3usize..7, n1 in 2usize..4, frac in 0.0f64..1.0, seed in 0u64..1000) {
        let (shape, r) = random_case(m1, n1.min(m1), frac);
        let (t, _) = random_cpd::<f64>(&shape, r, seed).unwrap();
        let run = |s: u64| decompose(&t, r, &DecomposeOptions { seed: s, ..Default::default() }).unwrap();
        let (a, b) = (run(seed), run(seed + 7919));
        prop_assert!(factor_match_error(&a.cpd, &b.cpd) <= 1e-8);
    }

    #[test]
    fn pencil_and_general_paths_agree(m1 in 3usize..7, n1 in 3usize..5, frac in 0.0f64..1.0, seed in 0u64..1000) {
        let n1 = n1.min(m1);
        let r = 2 + (frac * (m1 - 1) as f64) as usize % (m1 - 1);
        let shape = [m1 + 1, m1, n1];
        let (t, _) = random_cpd::<f64>(&shape, r, seed).unwrap();
        let cd = cpdhnf::tensor::compressed_dims(shape, r);
        let general = (2..10).map(|d| Bidegree::new(d, 1)).find(|&deg| rank_bound(cd[1] - 1, cd[2] - 1, deg).admits(r)).unwrap();
        let run = |deg: Bidegree| decompose(&t, r, &DecomposeOptions { degree: DegreeChoice::Fixed(deg), seed, ..Default::default() }).unwrap();
        let (a, b) = (run(Bidegree::new(1, 1)), run(general));
        prop_assert!(factor_match_error(&a.cpd, &b.cpd) <= 1e-9);
    }
}

#[test]
fn noiseless_instances_are_recovered_exactly() {
    // (shape, rank): pencil, (2,1) and (3,1) formats
    let formats: [([usize; 3], usize); 3] = [([5, 5, 3], 4), ([6, 4, 3], 6), ([12, 7, 3], 12)];
    for (shape, r) in formats {
        for seed in 0..100u64 {
            for kernel in [KernelMethod::Svd, KernelMethod::Eigs] {
                let (t, truth) = random_cpd::<f64>(&shape, r, seed).unwrap();
                let out = decompose(&t, r, &DecomposeOptions { seed, kernel, ..Default::default() }).unwrap();
                assert!(out.backward_error <= 1e-10, "{shape:?} r={r} seed {seed} {kernel:?}: {:e}", out.backward_error);
                assert!(factor_match_error(&out.cpd, &truth) <= 1e-6, "{shape:?} r={r} seed {seed}");
            }
        }
    }
}

// ---------------------------------------------------------------- certification

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hilbert_function_respects_lower_bounds(m in 1usize..5, n in 1usize..4, d in 1usize..4, e in 1usize..3, frac in 0.0f64..1.0, seed in any::<u64>()) {
        let r = 1 + (frac * (m * n) as f64) as usize % (m * n);
        let z = PointConfigFp::random(PRIME, m, n, r, seed).unwrap();
        let deg = Bidegree::new(d, e);
        let hf = match hilbert_sj(&z, deg) {
            Ok(hf) => hf as i128,
            Err(cpdhnf::Error::ConfigNotInW { .. }) => return Ok(()),
            Err(other) => return Err(TestCaseError::fail(other.to_string())),
        };
        let big = |dd: Bidegree| hf_s(m, n, dd).unwrap() as i128;
        let lower = big(deg.shift());
        let bound = (r as i128).max(big(deg) + r as i128 * lower - big(Bidegree::new(1, 1)) * lower);
        prop_assert!(hf >= bound, "hf {hf} below {bound}");
        if !rank_bound(m, n, deg).admits(r) {
            prop_assert!(hf > r as i128);
        }
    }

    #[test]
    fn az_corank_is_the_hilbert_function_at_21(m in 1usize..6, n in 1usize..4, frac in 0.0f64..1.0, seed in any::<u64>()) {
        let r = 1 + (frac * (m * n) as f64) as usize % (m * n);
        let z = PointConfigFp::random(PRIME, m, n, r, seed).unwrap();
        match hilbert_sj(&z, Bidegree::new(2, 1)) {
            Ok(hf) => prop_assert_eq!(az_corank(&z), hf),
            Err(cpdhnf::Error::ConfigNotInW { .. }) => {}
            Err(other) => return Err(TestCaseError::fail(other.to_string())),
        }
    }
}
