//! Partner factors, Newton refinement, the first factor by least squares,
//! and the end-to-end [`decompose`].

use std::time::Instant;

use faer::{Mat, MatRef};

use crate::bigraded::{select_degree, Bidegree, DegreePlan, SolvePath};
use crate::error::{Error, Result, Stage, StageExt};
use crate::linalg::{self, Rng};
use crate::normalform::{self, PreNormalForm, Reveals};
use crate::polish;
use crate::polysys::{build_resultant, kernel_flattening, left_nullspace, BilinearSystem, NullspaceMethod};
use crate::scalar::Scalar;
use crate::tensor::{self, backward_error, CpDecomposition, DenseTensor, Grouping};
use crate::tolerances::Tolerances;

/// Solution of a partner solve: the kernel vector and its singular value gap.
#[derive(Clone, Debug)]
pub struct PartnerSolution<T> {
    pub vector: Vec<T>,
    /// `sigma_min / sigma_second` of the stacked system.
    pub gap: f64,
    pub warning: Option<String>,
}

/// Given `beta`, the `gamma` with `beta^T F_j gamma = 0` for all `j`: the
/// right singular vector of the smallest singular value of `[beta^T F_j]_j`.
pub fn solve_gamma<T: Scalar>(sys: &BilinearSystem<T>, beta: &[T], tol: &Tolerances) -> Result<PartnerSolution<T>> {
    if sys.num_forms() == 0 {
        return Err(Error::AmbiguousKernel("the system has no forms".into()));
    }
    if beta.len() != sys.m + 1 {
        return Err(Error::ShapeMismatch(format!("point of length {} for {} x-variables", beta.len(), sys.m + 1)));
    }
    if linalg::vec_norm(beta) == 0.0 {
        return Err(Error::AmbiguousKernel("zero point".into()));
    }
    let a = sys.partner_matrix(beta);
    let n1 = sys.n + 1;
    let svd = linalg::svd_full(a.as_ref())?;
    let mut sv = svd.s.clone();
    sv.resize(n1, 0.0);
    let vector = linalg::column(svd.v.as_ref(), n1 - 1);
    if n1 == 1 {
        return Ok(PartnerSolution { vector, gap: 0.0, warning: None });
    }
    let second = sv[n1 - 2];
    let gap = if second > 0.0 { sv[n1 - 1] / second } else { 1.0 };
    if gap > tol.partner_gap_hard {
        return Err(Error::AmbiguousKernel(format!("two smallest singular values {:.3e}, {:.3e}", sv[n1 - 1], second)));
    }
    let warning = (gap > tol.partner_gap).then(|| format!("partner kernel gap {gap:.3e}"));
    Ok(PartnerSolution { vector, gap, warning })
}

/// Given `gamma`, the matching `beta`.
pub fn solve_beta<T: Scalar>(sys: &BilinearSystem<T>, gamma: &[T], tol: &Tolerances) -> Result<PartnerSolution<T>> {
    solve_gamma(&sys.transposed(), gamma, tol)
}

/// `||f(beta, gamma)|| / (||beta|| ||gamma||)`.
pub fn point_residual<T: Scalar>(sys: &BilinearSystem<T>, beta: &[T], gamma: &[T]) -> f64 {
    let f = sys.evaluate(beta, gamma);
    linalg::vec_norm(&f) / (linalg::vec_norm(beta) * linalg::vec_norm(gamma))
}

#[derive(Clone, Debug)]
pub struct Refined<T> {
    pub beta: Vec<T>,
    pub gamma: Vec<T>,
    /// Scale-invariant residual before and after.
    pub residual_before: f64,
    pub residual_after: f64,
    /// Steps that reduced the residual and were kept.
    pub accepted: usize,
}

/// Gauss-Newton on `f_j(beta, gamma) = 0` with a truncated SVD
/// pseudoinverse of rank `m + n`. A step is kept only if it lowers the
/// residual; iteration stops at the first rejected step.
pub fn newton_refine<T: Scalar>(
    sys: &BilinearSystem<T>,
    beta: &[T],
    gamma: &[T],
    iters: usize,
    tol: &Tolerances,
) -> Result<Refined<T>> {
    let (m1, n1) = (sys.m + 1, sys.n + 1);
    if beta.len() != m1 || gamma.len() != n1 {
        return Err(Error::ShapeMismatch("point does not match the system".into()));
    }
    let mut beta = beta.to_vec();
    let mut gamma = gamma.to_vec();
    let start = point_residual(sys, &beta, &gamma);
    let mut current = start;
    let mut accepted = 0;
    for _ in 0..iters {
        let jac = sys.jacobian(&beta, &gamma);
        let svd = linalg::svd_full(jac.as_ref())?;
        let top = svd.s.first().copied().unwrap_or(0.0);
        let rank = sys.m + sys.n;
        let at_rank = svd.s.get(rank - 1).copied().unwrap_or(0.0);
        if top == 0.0 || at_rank < tol.jacobian_rank * top {
            return Err(Error::SingularJacobian(format!("sigma_(m+n) / sigma_1 = {:.3e}", at_rank / top.max(f64::MIN_POSITIVE))));
        }
        if current == 0.0 {
            break;
        }
        let f = sys.evaluate(&beta, &gamma);
        let mut step = vec![T::zero_value(); m1 + n1];
        for i in 0..rank {
            let s = svd.s[i];
            if s < tol.jacobian_cutoff * top {
                break;
            }
            let mut coef = T::zero_value();
            for (j, &fj) in f.iter().enumerate() {
                coef += svd.u[(j, i)].conjugate() * fj;
            }
            coef = coef.scale_real(1.0 / s);
            for (k, st) in step.iter_mut().enumerate() {
                *st -= svd.v[(k, i)] * coef;
            }
        }
        let nb: Vec<T> = beta.iter().zip(&step[..m1]).map(|(&b, &d)| b + d).collect();
        let ng: Vec<T> = gamma.iter().zip(&step[m1..]).map(|(&g, &d)| g + d).collect();
        let next = point_residual(sys, &nb, &ng);
        if !(next < current) {
            break;
        }
        beta = nb;
        gamma = ng;
        current = next;
        accepted += 1;
    }
    Ok(Refined { beta, gamma, residual_before: start, residual_after: current, accepted })
}

/// First factor and the relative residual of the least-squares fit.
#[derive(Clone, Debug)]
pub struct AlphaSolution<T> {
    /// `(l+1) x r`.
    pub alphas: Mat<T>,
    pub residual: f64,
}

/// Solves `K X = A_(1)^T` with `K = [beta_i (x) gamma_i]`.
pub fn solve_alpha<T: Scalar>(flat: MatRef<'_, T>, betas: MatRef<'_, T>, gammas: MatRef<'_, T>, tol: &Tolerances) -> Result<AlphaSolution<T>> {
    let r = betas.ncols();
    if gammas.ncols() != r || flat.ncols() != betas.nrows() * gammas.nrows() {
        return Err(Error::ShapeMismatch("factor sizes do not match the flattening".into()));
    }
    if r > flat.ncols() {
        return Err(Error::RankDeficientKR(format!("{r} terms but only {} columns", flat.ncols())));
    }
    let k = tensor::khatri_rao(&[betas.to_owned(), gammas.to_owned()]);
    let rhs = linalg::transpose(flat);
    let x = linalg::lstsq_refined(k.as_ref(), rhs.as_ref(), tol.khatri_rao, 1).map_err(|e| Error::RankDeficientKR(e.to_string()))?;
    let alphas = linalg::transpose(x.as_ref());
    let fit = &alphas * k.transpose();
    let norm = linalg::frob(flat);
    let residual = if norm > 0.0 { linalg::frob((fit - flat).as_ref()) / norm } else { 0.0 };
    Ok(AlphaSolution { alphas, residual })
}

/// Degree used for the resultant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DegreeChoice {
    #[default]
    Auto,
    Fixed(Bidegree),
}

/// Left null space method for the resultant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum KernelMethod {
    Svd,
    Eigs,
    /// Gram eigensolver for resultants with at least `eigs_threshold`
    /// entries, falling back to the SVD if it fails.
    #[default]
    Auto,
}

impl std::str::FromStr for KernelMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "svd" => Ok(KernelMethod::Svd),
            "eigs" => Ok(KernelMethod::Eigs),
            "auto" => Ok(KernelMethod::Auto),
            other => Err(format!("unknown kernel method `{other}` (expected svd, eigs or auto)")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DecomposeOptions {
    pub degree: DegreeChoice,
    pub kernel: KernelMethod,
    pub newton_iters: usize,
    pub seed: u64,
    pub tolerances: Tolerances,
    /// Mode grouping for order above 3; chosen automatically when `None`.
    pub grouping: Option<Grouping>,
    /// Cap on damped Gauss-Newton steps over the grouped tensor, used when
    /// the backward error is far above the flattening lower bound.
    pub lm_steps: usize,
    /// Alternating least-squares sweeps over the grouped tensor after
    /// recovery. A sweep is kept only when it lowers the backward error.
    pub polish_sweeps: usize,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        DecomposeOptions {
            degree: DegreeChoice::Auto,
            kernel: KernelMethod::Auto,
            newton_iters: 3,
            seed: 0,
            tolerances: Tolerances::default(),
            grouping: None,
            lm_steps: 50,
            polish_sweeps: 1,
        }
    }
}

/// Wall-clock milliseconds per pipeline stage.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StageTimings {
    pub compression: f64,
    pub kernel: f64,
    pub resultant: f64,
    pub cokernel: f64,
    pub multiplication: f64,
    pub diagonalization: f64,
    pub refinement: f64,
    pub recovery: f64,
}

impl StageTimings {
    pub fn entries(&self) -> [(&'static str, f64); 8] {
        [
            ("compression", self.compression),
            ("kernel", self.kernel),
            ("resultant", self.resultant),
            ("cokernel", self.cokernel),
            ("multiplication", self.multiplication),
            ("diagonalization", self.diagonalization),
            ("refinement", self.refinement),
            ("recovery", self.recovery),
        ]
    }

    pub fn total(&self) -> f64 {
        self.entries().iter().map(|(_, t)| t).sum()
    }
}

#[derive(Clone, Debug)]
pub struct Decomposition<T> {
    pub cpd: CpDecomposition<T>,
    pub degree_used: Bidegree,
    pub path: SolvePath,
    /// `None` on the pencil path, which needs no resultant.
    pub kernel_method: Option<NullspaceMethod>,
    pub backward_error: f64,
    /// Backward error of the same pipeline without Newton refinement.
    pub pre_refinement_backward_error: f64,
    /// Backward error right after Newton refinement, before any safeguard
    /// or polishing; `None` when no Newton steps were requested. Equal to
    /// the unrefined error when that is already at the rounding level.
    pub post_refinement_backward_error: Option<f64>,
    /// Largest scale-invariant point residual before and after refinement.
    pub point_residual_before: f64,
    pub point_residual_after: f64,
    pub grouping: Grouping,
    /// Order-3 shape after grouping and sorting, before compression.
    pub grouped_shape: [usize; 3],
    pub compressed_shape: [usize; 3],
    pub commutation_error: f64,
    pub basis_condition: f64,
    /// Relative backward error no rank-`r` decomposition can beat, from the
    /// mode-1 flattening of the grouped tensor.
    pub flattening_bound: f64,
    /// Accepted damped Gauss-Newton steps; 0 when that stage did not run.
    pub lm_steps: usize,
    /// Number of polish sweeps that were kept.
    pub polish_sweeps_kept: usize,
    pub timings: StageTimings,
    pub warnings: Vec<String>,
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Points found by the eigenvalue stage, in compressed coordinates.
struct Points<T> {
    betas: Vec<Vec<T>>,
    gammas: Vec<Vec<T>>,
    degree: Bidegree,
    path: SolvePath,
    kernel_method: Option<NullspaceMethod>,
    commutation_error: f64,
    basis_condition: f64,
}

/// Runs the eigenvalue stage for one degree plan.
#[allow(clippy::too_many_arguments)]
fn find_points<T: Scalar>(
    flat: MatRef<'_, T>,
    sys: &BilinearSystem<T>,
    plan: DegreePlan,
    r: usize,
    opts: &DecomposeOptions,
    rng: &mut Rng,
    timings: &mut StageTimings,
    warnings: &mut Vec<String>,
) -> Result<Points<T>> {
    let tol = &opts.tolerances;
    let (m, n) = (sys.m, sys.n);
    let deg = plan.degree;
    let mut kernel_method = None;
    let family = if plan.path == SolvePath::Pencil {
        let t = Instant::now();
        let fam = normalform::pencil_family(flat, m, n, r, rng).at(Stage::Multiplication)?;
        timings.cokernel += elapsed_ms(t);
        fam
    } else {
        if deg.d == 0 || deg.e == 0 || (deg.d == 1 && deg.e == 1) {
            return Err(Error::ShapeMismatch(format!("no normal-form family at degree {deg}")).at(Stage::DegreeSelection));
        }
        // (1,e) is handled as (e,1) for the system with x and y exchanged
        let swap = deg.d == 1;
        let work = if swap { sys.transposed() } else { sys.clone() };
        let wdeg = if swap { deg.swapped() } else { deg };
        let t = Instant::now();
        let res = build_resultant(&work, wdeg).at(Stage::Resultant)?;
        timings.resultant += elapsed_ms(t);
        let t = Instant::now();
        let entries = res.nrows.saturating_mul(res.ncols);
        let method = match opts.kernel {
            KernelMethod::Svd => NullspaceMethod::Svd,
            KernelMethod::Eigs => NullspaceMethod::Eigs,
            KernelMethod::Auto if entries >= tol.eigs_threshold => NullspaceMethod::Eigs,
            KernelMethod::Auto => NullspaceMethod::Svd,
        };
        let mut cok = left_nullspace(&res, r, method, tol, rng);
        let mut used = method;
        if opts.kernel == KernelMethod::Auto && method == NullspaceMethod::Eigs {
            if let Err(e) = &cok {
                warnings.push(format!("Gram eigensolver failed ({e}); using the SVD"));
                cok = left_nullspace(&res, r, NullspaceMethod::Svd, tol, rng);
                used = NullspaceMethod::Svd;
            }
        }
        let cok = cok.at(Stage::Cokernel)?;
        warnings.extend(cok.warnings.iter().cloned());
        kernel_method = Some(used);
        timings.cokernel += elapsed_ms(t);
        let t = Instant::now();
        let pnf = PreNormalForm::new(cok.n, work.m, work.n, wdeg).at(Stage::Basis)?;
        let mut fam = normalform::general_family(&pnf, None, None, rng).at(Stage::Basis)?;
        if swap {
            fam.reveals = Reveals::Y;
        }
        timings.multiplication += elapsed_ms(t);
        fam
    };
    let t = Instant::now();
    let mult = normalform::multiplication_matrices(&family, tol).at(Stage::Basis)?;
    let commutation_error = mult.commutation_error();
    if commutation_error > tol.commutation {
        warnings.push(format!("multiplication matrices commute only to {commutation_error:.3e}"));
    }
    timings.multiplication += elapsed_ms(t);
    let t = Instant::now();
    let diag = normalform::simultaneous_diagonalize(&mult, rng, tol).at(Stage::Diagonalization)?;
    warnings.extend(diag.warnings.iter().cloned());
    timings.diagonalization += elapsed_ms(t);

    let t = Instant::now();
    let mut betas = Vec::with_capacity(r);
    let mut gammas = Vec::with_capacity(r);
    for i in 0..r {
        let p: Vec<T> = diag.point(i);
        let (beta, gamma) = match mult.reveals {
            Reveals::X => {
                let sol = solve_gamma(sys, &p, tol).at(Stage::PartnerSolve)?;
                warnings.extend(sol.warning);
                (p, sol.vector)
            }
            Reveals::Y => {
                let sol = solve_beta(sys, &p, tol).at(Stage::PartnerSolve)?;
                warnings.extend(sol.warning);
                (sol.vector, p)
            }
        };
        betas.push(beta);
        gammas.push(gamma);
    }
    timings.recovery += elapsed_ms(t);
    Ok(Points {
        betas,
        gammas,
        degree: deg,
        path: plan.path,
        kernel_method,
        commutation_error,
        basis_condition: mult.condition,
    })
}

/// Grouping with the three parts ordered by decreasing dimension.
fn sorted_grouping(shape: &[usize], g: &Grouping) -> Grouping {
    let dim = |p: &Vec<usize>| p.iter().map(|&m| shape[m] as u128).product::<u128>();
    let mut parts = g.parts.clone();
    parts.sort_by_key(|p| std::cmp::Reverse(dim(p)));
    Grouping { parts }
}

/// Factors for the original modes from grouped factors.
fn ungroup_factors<T: Scalar>(shape: &[usize], g: &Grouping, grouped: &[Mat<T>; 3]) -> Result<CpDecomposition<T>> {
    let r = grouped[0].ncols();
    let mut factors: Vec<Option<Mat<T>>> = vec![None; shape.len()];
    for (part, fac) in g.parts.iter().zip(grouped) {
        if part.len() == 1 {
            factors[part[0]] = Some(fac.clone());
            continue;
        }
        let dims: Vec<usize> = part.iter().map(|&q| shape[q]).collect();
        let mut mats: Vec<Mat<T>> = dims.iter().map(|&d| Mat::zeros(d, r)).collect();
        for i in 0..r {
            let col = linalg::column(fac.as_ref(), i);
            let vecs = tensor::rank1_factorization(&col, &dims)?;
            for (mat, v) in mats.iter_mut().zip(vecs) {
                for (row, x) in v.into_iter().enumerate() {
                    mat[(row, i)] = x;
                }
            }
        }
        for (&q, mat) in part.iter().zip(mats) {
            factors[q] = Some(mat);
        }
    }
    CpDecomposition::new(factors.into_iter().map(|f| f.expect("grouping covers every mode")).collect())
}

/// Assembles a normalized decomposition of `a` from points in compressed
/// coordinates.
#[allow(clippy::too_many_arguments)]
fn assemble<T: Scalar>(
    flat: MatRef<'_, T>,
    basis_y: MatRef<'_, T>,
    basis_z: MatRef<'_, T>,
    betas: &[Vec<T>],
    gammas: &[Vec<T>],
    tol: &Tolerances,
) -> Result<[Mat<T>; 3]> {
    let b = basis_y * linalg::from_columns(betas[0].len(), betas);
    let c = basis_z * linalg::from_columns(gammas[0].len(), gammas);
    let alpha = solve_alpha(flat, b.as_ref(), c.as_ref(), tol)?;
    Ok([alpha.alphas, b, c])
}

/// Ungroups order-3 factors and measures them against the original tensor.
fn finish<T: Scalar>(a: &DenseTensor<T>, g: &Grouping, factors: &[Mat<T>; 3]) -> Result<(CpDecomposition<T>, f64)> {
    let mut cpd = ungroup_factors(a.shape(), g, factors)?;
    cpd.normalize();
    let err = backward_error(a, &cpd)?;
    Ok((cpd, err))
}

/// Rank-`r` CP decomposition of `a`.
///
/// Tensors of order above 3 are first grouped into order 3. The grouped
/// modes are sorted by decreasing size and compressed, the points of the
/// flattening kernel are found by an eigenvalue problem, refined by Newton
/// steps, and the first factor follows from a least-squares solve against
/// the uncompressed tensor. Deterministic for a fixed `opts.seed`.
pub fn decompose<T: Scalar>(a: &DenseTensor<T>, r: usize, opts: &DecomposeOptions) -> Result<Decomposition<T>> {
    let tol = &opts.tolerances;
    let mut timings = StageTimings::default();
    let mut warnings = Vec::new();
    let mut rng = linalg::rng(opts.seed);

    let order = a.order();
    if order < 3 {
        return Err(Error::ShapeMismatch(format!("order {order} tensors have no unique rank decomposition")).at(Stage::Input));
    }
    if a.frobenius_norm() == 0.0 {
        return Err(Error::ZeroTensor.at(Stage::Input));
    }
    if r == 0 {
        return Err(Error::RankOutOfRange { rank: 0, max: a.len() }.at(Stage::Input));
    }
    let grouping = match &opts.grouping {
        Some(g) => {
            g.validate(order).at(Stage::Grouping)?;
            g.clone()
        }
        None if order == 3 => Grouping::identity(),
        None => tensor::choose_grouping(a.shape(), r).at(Stage::Grouping)?,
    };
    let grouping = sorted_grouping(a.shape(), &grouping);

    let t = Instant::now();
    let grouped = tensor::reshape_group(a, &grouping).at(Stage::Grouping)?;
    let gshape = [grouped.shape()[0], grouped.shape()[1], grouped.shape()[2]];
    let (l, m, n) = (gshape[0] - 1, gshape[1] - 1, gshape[2] - 1);
    let max = bigraded_max_rank(l, m, n);
    if r > max {
        return Err(Error::RankOutOfRange { rank: r, max }.at(Stage::Input));
    }
    let cdims = if r == 1 { [1, 1, 1] } else { tensor::compressed_dims(gshape, r) };
    let (core, basis) = if cdims == gshape {
        (grouped.clone(), None)
    } else {
        let c = tensor::st_hosvd_compress(&grouped, cdims).at(Stage::Compression)?;
        (c.core, Some(c.factors))
    };
    let full_flat = grouped.flatten_mode1();
    timings.compression = elapsed_ms(t);

    // the dominant singular vectors are the whole answer at rank one
    let (points, sys) = if r == 1 {
        let one = vec![T::one_value()];
        let points = Points {
            betas: vec![one.clone()],
            gammas: vec![one],
            degree: Bidegree::new(0, 0),
            path: SolvePath::RankOne,
            kernel_method: None,
            commutation_error: 0.0,
            basis_condition: 1.0,
        };
        (points, None)
    } else {
        let t = Instant::now();
        let (cm, cn) = (cdims[1] - 1, cdims[2] - 1);
        let core_flat = core.flatten_mode1();
        let (sys, report) = kernel_flattening(core_flat.as_ref(), cm, cn, r, tol).at(Stage::Kernel)?;
        warnings.extend(report.warnings);
        timings.kernel = elapsed_ms(t);

        let plan = match opts.degree {
            DegreeChoice::Auto => select_degree(cm, cn, r, cdims[0] - 1, true).at(Stage::DegreeSelection)?,
            DegreeChoice::Fixed(deg) => {
                let path = if deg == Bidegree::new(1, 1) { SolvePath::Pencil } else { SolvePath::NormalForm };
                DegreePlan { path, ..DegreePlan::for_degree(cm, cn, r, deg).at(Stage::DegreeSelection)? }
            }
        };
        let points = match find_points(core_flat.as_ref(), &sys, plan, r, opts, &mut rng, &mut timings, &mut warnings) {
            Err(e) if plan.path == SolvePath::Pencil && opts.degree == DegreeChoice::Auto && matches!(e.root(), Error::BasisDeficient(_)) => {
                warnings.push(format!("pencil path failed ({e}); using a normal form"));
                let plan = select_degree(cm, cn, r, cdims[0] - 1, false).at(Stage::DegreeSelection)?;
                find_points(core_flat.as_ref(), &sys, plan, r, opts, &mut rng, &mut timings, &mut warnings)?
            }
            other => other?,
        };
        (points, Some(sys))
    };

    let t = Instant::now();
    let ident_y;
    let ident_z;
    let (basis_y, basis_z) = match &basis {
        Some(f) => (f[1].as_ref(), f[2].as_ref()),
        None => {
            ident_y = Mat::<T>::identity(gshape[1], gshape[1]);
            ident_z = Mat::<T>::identity(gshape[2], gshape[2]);
            (ident_y.as_ref(), ident_z.as_ref())
        }
    };
    let pre = assemble(full_flat.as_ref(), basis_y, basis_z, &points.betas, &points.gammas, tol).at(Stage::Recovery)?;
    let (pre_cpd, pre_err) = finish(a, &grouping, &pre).at(Stage::Recovery)?;
    timings.recovery += elapsed_ms(t);

    let t = Instant::now();
    let (mut worst_before, mut worst_after): (f64, f64) = (0.0, 0.0);
    let mut refined = None;
    if let Some(sys) = &sys {
        // below this Newton steps only move rounding errors
        if opts.newton_iters > 0 && pre_err > tol.refine_floor {
            let mut refined_b = Vec::with_capacity(r);
            let mut refined_c = Vec::with_capacity(r);
            for (beta, gamma) in points.betas.iter().zip(&points.gammas) {
                let out = newton_refine(sys, beta, gamma, opts.newton_iters, tol).at(Stage::Refinement)?;
                worst_before = worst_before.max(out.residual_before);
                worst_after = worst_after.max(out.residual_after);
                refined_b.push(out.beta);
                refined_c.push(out.gamma);
            }
            refined = Some((refined_b, refined_c));
        } else {
            for (beta, gamma) in points.betas.iter().zip(&points.gammas) {
                worst_before = worst_before.max(point_residual(sys, beta, gamma));
            }
            worst_after = worst_before;
        }
    }
    timings.refinement = elapsed_ms(t);

    let t = Instant::now();
    let mut post_refinement = (opts.newton_iters > 0).then_some(pre_err);
    let (mut factors, mut cpd, mut backward) = match refined {
        None => (pre, pre_cpd, pre_err),
        Some((refined_b, refined_c)) => {
            let post = assemble(full_flat.as_ref(), basis_y, basis_z, &refined_b, &refined_c, tol).at(Stage::Recovery)?;
            let (post_cpd, post_err) = finish(a, &grouping, &post).at(Stage::Recovery)?;
            post_refinement = Some(post_err);
            if post_err <= pre_err {
                (post, post_cpd, post_err)
            } else {
                warnings.push(format!("refinement raised the backward error from {pre_err:.3e} to {post_err:.3e}; kept the unrefined points"));
                (pre, pre_cpd, pre_err)
            }
        }
    };
    let bound = polish::flattening_bound(&grouped, r).at(Stage::Recovery)?;
    let mut lm_steps = 0;
    if opts.lm_steps > 0 && backward > tol.polish_floor && backward > tol.polish_ratio * bound {
        if polish::parameter_count(gshape, r) > tol.polish_max_params {
            warnings.push(format!("backward error {backward:.3e} is well above the flattening bound {bound:.3e}; too many unknowns to polish"));
        } else if let Ok(out) = polish::levenberg_marquardt(&grouped, &factors, opts.lm_steps, bound) {
            if let Ok((next_cpd, next_err)) = finish(a, &grouping, &out.factors) {
                if next_err < backward {
                    (factors, cpd, backward) = (out.factors, next_cpd, next_err);
                    lm_steps = out.steps;
                }
            }
        }
    }
    let mut polish_sweeps_kept = 0;
    for _ in 0..opts.polish_sweeps {
        let Ok(next) = polish::als_sweep(&grouped, &factors, tol) else { break };
        let Ok((next_cpd, next_err)) = finish(a, &grouping, &next) else { break };
        if !(next_err < backward) {
            break;
        }
        (factors, cpd, backward) = (next, next_cpd, next_err);
        polish_sweeps_kept += 1;
    }
    timings.recovery += elapsed_ms(t);

    Ok(Decomposition {
        cpd,
        degree_used: points.degree,
        path: points.path,
        kernel_method: points.kernel_method,
        backward_error: backward,
        pre_refinement_backward_error: pre_err,
        post_refinement_backward_error: post_refinement,
        point_residual_before: worst_before,
        point_residual_after: worst_after,
        grouping,
        grouped_shape: gshape,
        compressed_shape: cdims,
        commutation_error: points.commutation_error,
        basis_condition: points.basis_condition,
        flattening_bound: bound,
        lm_steps,
        polish_sweeps_kept,
        timings,
        warnings,
    })
}

fn bigraded_max_rank(l: usize, m: usize, n: usize) -> usize {
    crate::bigraded::max_rank(l, m, n)
}
