//! JSON and CSV records written by the commands.

use cpdhnf::recovery::{Decomposition, StageTimings};
use cpdhnf::regcert::Certificate;
use cpdhnf::{c64, CpDecomposition, Field, Scalar};
use serde::{Deserialize, Serialize};

pub const RESULT_SCHEMA: &str = "cpdhnf-result v1";
pub const CERT_SCHEMA: &str = "cpdhnf-cert v1";
pub const TRUTH_SCHEMA: &str = "cpdhnf-truth v1";

/// Factor matrices, one per mode, each as a list of rows. Complex entries
/// are `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Factors {
    Real(Vec<Vec<Vec<f64>>>),
    Complex(Vec<Vec<Vec<[f64; 2]>>>),
}

impl Factors {
    pub fn real(cpd: &CpDecomposition<f64>) -> Self {
        Factors::Real(rows_of(cpd, |x| x))
    }

    pub fn complex(cpd: &CpDecomposition<c64>) -> Self {
        Factors::Complex(rows_of(cpd, |x| [x.re, x.im]))
    }
}

fn rows_of<T: Scalar, U>(cpd: &CpDecomposition<T>, conv: impl Fn(T) -> U) -> Vec<Vec<Vec<U>>> {
    cpd.factors
        .iter()
        .map(|f| (0..f.nrows()).map(|i| (0..f.ncols()).map(|j| conv(f[(i, j)])).collect()).collect())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingsJson {
    pub compression: f64,
    pub kernel: f64,
    pub resultant: f64,
    pub cokernel: f64,
    pub multiplication: f64,
    pub diagonalization: f64,
    pub refinement: f64,
    pub recovery: f64,
    pub total: f64,
}

impl From<&StageTimings> for TimingsJson {
    fn from(t: &StageTimings) -> Self {
        TimingsJson {
            compression: t.compression,
            kernel: t.kernel,
            resultant: t.resultant,
            cokernel: t.cokernel,
            multiplication: t.multiplication,
            diagonalization: t.diagonalization,
            refinement: t.refinement,
            recovery: t.recovery,
            total: t.total(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultJson {
    pub schema: String,
    pub shape: Vec<usize>,
    pub field: String,
    pub rank: usize,
    pub degree_used: [usize; 2],
    pub path: String,
    pub kernel_method: Option<String>,
    /// 1-based mode groups of the order-3 reshaping.
    pub grouping: Vec<Vec<usize>>,
    pub backward_error: f64,
    pub pre_refinement_backward_error: f64,
    pub stage_timings_ms: TimingsJson,
    pub factors: Factors,
    pub seed: u64,
    pub newton_iters: usize,
    pub warnings: Vec<String>,
}

impl ResultJson {
    pub fn new<T: Scalar>(shape: &[usize], rank: usize, seed: u64, newton_iters: usize, d: &Decomposition<T>, factors: Factors) -> Self {
        ResultJson {
            schema: RESULT_SCHEMA.into(),
            shape: shape.to_vec(),
            field: T::FIELD.name().into(),
            rank,
            degree_used: [d.degree_used.d, d.degree_used.e],
            path: d.path.name().into(),
            kernel_method: d.kernel_method.map(|k| k.name().into()),
            grouping: d.grouping.parts.iter().map(|p| p.iter().map(|q| q + 1).collect()).collect(),
            backward_error: d.backward_error,
            pre_refinement_backward_error: d.pre_refinement_backward_error,
            stage_timings_ms: (&d.timings).into(),
            factors,
            seed,
            newton_iters,
            warnings: d.warnings.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthJson {
    pub schema: String,
    pub shape: Vec<usize>,
    pub field: String,
    pub rank: usize,
    pub seed: u64,
    pub factors: Factors,
}

impl TruthJson {
    pub fn new(shape: &[usize], field: Field, rank: usize, seed: u64, factors: Factors) -> Self {
        TruthJson { schema: TRUTH_SCHEMA.into(), shape: shape.to_vec(), field: field.name().into(), rank, seed, factors }
    }
}

/// One line of `certify` output. Cells that fail their precondition carry
/// `error` and no witness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertJson {
    pub schema: String,
    pub m: usize,
    pub n: usize,
    pub d: usize,
    pub r: usize,
    pub p: u32,
    pub seed: u64,
    #[serde(rename = "rankN")]
    pub rank_n: Option<usize>,
    pub hf: Option<usize>,
    pub success: bool,
    pub trials: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl CertJson {
    pub fn from_certificate(c: &Certificate) -> Self {
        CertJson {
            schema: CERT_SCHEMA.into(),
            m: c.m,
            n: c.n,
            d: c.d,
            r: c.r,
            p: c.p,
            seed: c.seed,
            rank_n: Some(c.rank_n),
            hf: Some(c.hf),
            success: c.success,
            trials: c.trials_used,
            error: None,
        }
    }

    pub fn failure(m: usize, n: usize, d: usize, r: usize, p: u32, seed: u64, error: String) -> Self {
        CertJson { schema: CERT_SCHEMA.into(), m, n, d, r, p, seed, rank_n: None, hf: None, success: false, trials: 0, error: Some(error) }
    }
}

pub const NOISE_HEADER: &str = "e,trial,backward_error,runtime";

/// `e,trial,backward_error,runtime` with runtime in seconds; failed trials
/// have `NaN` for the error.
pub fn noise_row(e: i32, trial: usize, backward_error: Option<f64>, runtime: f64) -> String {
    let err = backward_error.map_or_else(|| "NaN".to_string(), |b| format!("{b:e}"));
    format!("{e},{trial},{err},{runtime:.6}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use cpdhnf::tensor::random_cpd;
    use cpdhnf::{decompose, DecomposeOptions};

    fn round_trip<T: Serialize + for<'de> Deserialize<'de> + PartialEq + std::fmt::Debug>(value: &T) {
        let text = serde_json::to_string_pretty(value).unwrap();
        let back: T = serde_json::from_str(&text).unwrap();
        assert_eq!(&back, value);
    }

    #[test]
    fn results_survive_serialization() {
        let (t, _) = random_cpd::<f64>(&[5, 4, 3], 4, 7).unwrap();
        let d = decompose(&t, 4, &DecomposeOptions::default()).unwrap();
        round_trip(&ResultJson::new(t.shape(), 4, 0, 3, &d, Factors::real(&d.cpd)));

        let (z, truth) = random_cpd::<c64>(&[4, 3, 3], 3, 8).unwrap();
        let d = decompose(&z, 3, &DecomposeOptions::default()).unwrap();
        round_trip(&ResultJson::new(z.shape(), 3, 0, 3, &d, Factors::complex(&d.cpd)));
        round_trip(&TruthJson::new(z.shape(), Field::Complex, 3, 8, Factors::complex(&truth)));
    }

    #[test]
    fn certificates_survive_serialization() {
        let c = cpdhnf::regcert::certify_conjecture(3, 2, 2, 6, 8191, 3, 0).unwrap();
        round_trip(&CertJson::from_certificate(&c));
        let failed = CertJson::failure(6, 2, 2, 12, 8191, 0, "rank above the bound".into());
        round_trip(&failed);
        assert!(!serde_json::to_string(&CertJson::from_certificate(&c)).unwrap().contains("error"));
    }

    #[test]
    fn noise_rows() {
        assert_eq!(noise_row(-6, 2, None, 0.5), "-6,2,NaN,0.500000");
        let row = noise_row(-15, 0, Some(3.25e-16), 0.0);
        assert_eq!(row.split(',').nth(2).unwrap().parse::<f64>().unwrap(), 3.25e-16);
    }
}
