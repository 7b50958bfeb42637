/// Numerical thresholds used across the pipeline. Ratios are relative.
///
/// Checks come in pairs where noisy input is expected to trip the strict
/// threshold: crossing the strict one adds a warning to the result, crossing
/// the hard one is an error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Smallest allowed `sigma_r / sigma_1` of the flattening.
    pub rank: f64,
    /// Largest clean `sigma_{r+1} / sigma_1` of the flattening.
    pub gap: f64,
    /// Largest `sigma_{r+1} / sigma_r` of the flattening before the rank is rejected.
    pub gap_hard: f64,
    /// Largest clean `||N R||_F / ||R||_F`.
    pub null: f64,
    /// Smallest clean ratio between the (r+1)-th and r-th smallest singular values of R.
    pub separation: f64,
    /// Below this separation the cokernel dimension is rejected.
    pub separation_hard: f64,
    /// Smallest allowed `|T_rr| / |T_11|` in the pivoted QR for the basis choice.
    pub pivot: f64,
    /// Largest clean commutator norm of the multiplication matrices.
    pub commutation: f64,
    /// Off-diagonal residual that triggers a retry of the diagonalization.
    pub diagonalization: f64,
    /// Off-diagonal residual that fails the diagonalization after all retries.
    pub diagonalization_hard: f64,
    /// Reseeded attempts after the first diagonalization.
    pub diagonalization_retries: usize,
    /// Largest clean `sigma_min / sigma_second` when solving for a partner factor.
    pub partner_gap: f64,
    /// Above this ratio the partner factor is ambiguous.
    pub partner_gap_hard: f64,
    /// Pseudoinverse cutoff relative to the largest singular value of the Jacobian.
    pub jacobian_cutoff: f64,
    /// Smallest allowed `sigma_{m+n} / sigma_1` of the Jacobian.
    pub jacobian_rank: f64,
    /// Newton refinement is skipped when the unrefined backward error is
    /// already this small.
    pub refine_floor: f64,
    /// Smallest allowed `|T_rr| / |T_11|` for the Khatri-Rao least-squares system.
    pub khatri_rao: f64,
    /// Convergence tolerance of the iterative Gram eigensolver.
    pub eigs_tol: f64,
    /// Iteration cap of the iterative Gram eigensolver.
    pub eigs_max_iter: usize,
    /// Resultants with at least this many entries use the Gram eigensolver by default.
    pub eigs_threshold: usize,
    /// Damped Gauss-Newton polishing runs when the backward error exceeds
    /// this multiple of the flattening lower bound.
    pub polish_ratio: f64,
    /// No damped Gauss-Newton polishing at or below this backward error.
    pub polish_floor: f64,
    /// Largest number of unknowns for damped Gauss-Newton polishing.
    pub polish_max_params: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rank: 1e-8,
            gap: 1e-6,
            gap_hard: 1e-1,
            null: 1e-8,
            separation: 1e3,
            separation_hard: 10.0,
            pivot: 1e-10,
            commutation: 1e-6,
            diagonalization: 1e-6,
            diagonalization_hard: 1e-2,
            diagonalization_retries: 3,
            partner_gap: 1e-6,
            partner_gap_hard: 0.5,
            jacobian_cutoff: 1e-12,
            jacobian_rank: 1e-13,
            refine_floor: 1e-15,
            khatri_rao: 1e-12,
            eigs_tol: 1e-6,
            eigs_max_iter: 25,
            eigs_threshold: 10_000,
            polish_ratio: 3.0,
            polish_floor: 1e-13,
            polish_max_params: 4000,
        }
    }
}
