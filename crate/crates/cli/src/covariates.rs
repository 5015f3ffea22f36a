//! Regressing observed covariates out of selected columns before estimation.

use lvlingam::{Error, Result, Sample};
use nalgebra::DVector;

/// Relative norm under which a covariate counts as a combination of the earlier ones.
pub const RANK_TOL: f64 = 1e-10;

/// Replaces each target column by its OLS residual on the covariate columns (with intercept,
/// since samples are centered). The output holds the target columns only.
pub fn residualize_covariates(sample: &Sample, covariates: &[usize], targets: &[usize]) -> Result<Sample> {
    let p = sample.p();
    if covariates.iter().chain(targets).any(|&c| c >= p) {
        return Err(Error::InvalidInput("column index out of range".into()));
    }
    if targets.is_empty() {
        return Err(Error::InvalidInput("no target columns".into()));
    }
    let data = sample.data();

    // Orthonormal basis of the covariate span by modified Gram–Schmidt.
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(covariates.len());
    let mut dependent = Vec::new();
    for &c in covariates {
        let original = data.column(c).clone_owned();
        let mut v = original.clone();
        for q in &basis {
            let proj = q.dot(&v);
            v.axpy(-proj, q, 1.0);
        }
        let norm = v.norm();
        if norm <= RANK_TOL * original.norm().max(f64::MIN_POSITIVE) {
            dependent.push(sample.labels()[c].clone());
        } else {
            basis.push(v / norm);
        }
    }
    if !dependent.is_empty() {
        return Err(Error::RankDeficient(dependent));
    }

    let columns: Vec<Vec<f64>> = targets
        .iter()
        .map(|&t| {
            let mut r = data.column(t).clone_owned();
            for q in &basis {
                let proj = q.dot(&r);
                r.axpy(-proj, q, 1.0);
            }
            r.iter().copied().collect()
        })
        .collect();
    let labels = targets.iter().map(|&t| sample.labels()[t].clone()).collect();
    Sample::from_columns(&columns, labels)
}
