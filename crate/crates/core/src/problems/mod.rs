//! Benchmark problem constructors, synthetic data generators, and CSV
//! ingestion.

mod csv_data;
mod fairness;
mod newsvendor;
mod paramselect;
mod toy;

pub use csv_data::{load_csv_dataset, monomial_exponents, save_matrix_csv, CsvSchema, Dataset};
pub use fairness::{
    build_fairness_lr, gen_fairness_data, scale_features_for_bounds, FairnessLrSpec,
};
pub use newsvendor::{build_newsvendor, gen_newsvendor, newsvendor_loss, NewsvendorSpec};
pub use paramselect::{build_param_select, gen_param_select, ParamSelectSpec};
pub use toy::{build_const_toy, gen_linear_toy};

use rand::Rng;

pub(crate) fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Lower-triangular Cholesky factor with a small diagonal jitter; enough for
/// the modest SPD matrices the generators build.
pub(crate) fn cholesky(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = a.len();
    let mut l = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..=i {
            let mut sum = a[i][j];
            if i == j {
                sum += 1e-12;
            }
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                l[i][j] = sum.max(1e-15).sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    l
}
