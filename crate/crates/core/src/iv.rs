//! Effects of several treatments on one outcome from fewer instruments than treatments.
//!
//! Regressing the instruments out of every treatment and the outcome leaves, per treatment,
//! a two-variable latent confounding problem whose effect polynomial has the causal effect
//! among its roots. The instrument constraints `b_{Y,I} = Σ_i b_{T^i,I}·b_i` then pick one
//! root per treatment, and the chosen tuple is projected onto the constraint set.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use crate::cumulants::{covariance_matrix, CumulantSource};
use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::rootfind::{build_effect_polynomial, real_roots, MAX_LATENTS};

/// Two candidate tuples whose scores differ by less than this are considered tied.
pub const SELECTION_TIE_TOL: f64 = 1e-9;

/// Constraint residual allowed after projection, relative to `1 + ‖c‖`.
pub const CONSTRAINT_TOL: f64 = 1e-10;

/// Largest Cartesian product of candidate roots that is enumerated.
pub const MAX_CANDIDATES: usize = 27;

#[derive(Debug, Clone, PartialEq)]
pub struct IvEstimate {
    /// Estimated effect of each treatment on the outcome, after projection.
    pub effects: Vec<f64>,
    /// Root tuple selected before projection.
    pub selected: Vec<f64>,
    /// `‖W·b − c‖` of the selected tuple.
    pub constraint_residual: f64,
    /// Euclidean distance between `selected` and `effects`.
    pub projection_distance: f64,
    /// Latent count used for each treatment's effect polynomial.
    pub latents: Vec<usize>,
    /// Real roots per treatment.
    pub roots: Vec<Vec<f64>>,
    /// Constraint matrix `W[j][i] = b_{T^i,I^j}` (zero where `I^j` is not used for `T^i`).
    pub constraint_matrix: DMatrix<f64>,
    /// Constraint offsets `c[j] = b_{Y,I^j}`.
    pub constraint_offsets: DVector<f64>,
}

/// `Σ_{target,i|adj} / Σ_{i,i|adj}` from a covariance matrix, with conditional covariances
/// given by the Schur complement.
pub fn regression_adjust(cov: &DMatrix<f64>, target: usize, i: usize, adj: &[usize]) -> Result<f64> {
    let p = cov.nrows();
    if cov.ncols() != p || target >= p || i >= p || adj.iter().any(|&a| a >= p) {
        return Err(Error::InvalidInput("regression indices out of range".into()));
    }
    let (s_ti, s_ii) = if adj.is_empty() {
        (cov[(target, i)], cov[(i, i)])
    } else {
        let m = adj.len();
        let s_cc = DMatrix::from_fn(m, m, |a, b| cov[(adj[a], adj[b])]);
        let s_ci = DVector::from_fn(m, |a, _| cov[(adj[a], i)]);
        let s_ct = DVector::from_fn(m, |a, _| cov[(adj[a], target)]);
        let chol = s_cc.clone().cholesky().ok_or_else(|| {
            Error::IllConditioned("adjustment covariance is not positive definite".into())
        })?;
        let sv = s_cc.singular_values();
        if sv.min() <= 1e-12 * sv.max() {
            return Err(Error::IllConditioned(format!(
                "adjustment covariance has condition number {:.3e}",
                sv.max() / sv.min()
            )));
        }
        let w = chol.solve(&s_ci);
        (cov[(target, i)] - s_ct.dot(&w), cov[(i, i)] - s_ci.dot(&w))
    };
    if s_ii.abs() <= 1e-12 * cov[(i, i)].abs() || s_ii == 0.0 {
        return Err(Error::IllConditioned(
            "regressor has no variance left after adjustment".into(),
        ));
    }
    Ok(s_ti / s_ii)
}

/// Copy of `src` with variable `target` replaced by `target − coef·i`.
pub fn residualize<S: CumulantSource>(src: &S, target: usize, i: usize, coef: f64) -> Result<S> {
    let p = src.dim();
    if target >= p || i >= p {
        return Err(Error::InvalidInput("residualization index out of range".into()));
    }
    let mut map = DMatrix::identity(p, p);
    map[(target, i)] -= coef;
    src.linear_transform(&map)
}

/// Closest point to `b` of `{x : W·x = c}`, via `b − Wᵀ(WWᵀ)⁺(W·b − c)`.
/// Fails when the constraints are inconsistent.
pub fn project_onto_constraints(w: &DMatrix<f64>, c: &DVector<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if w.nrows() != c.len() || w.ncols() != b.len() {
        return Err(Error::InvalidInput("constraint dimensions do not match".into()));
    }
    let gram = w * w.transpose();
    let eps = 1e-12 * gram.norm().max(1e-300);
    let pinv = gram
        .pseudo_inverse(eps)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let projected = b - w.transpose() * (pinv * (w * b - c));
    let residual = (w * &projected - c).norm();
    if residual > CONSTRAINT_TOL * (1.0 + c.norm()) {
        return Err(Error::ConstraintInfeasible(residual));
    }
    Ok(projected)
}

/// Euclidean distance from `b` to `{x : W·x = c}` (least-squares distance if inconsistent).
fn distance_to_constraints(w: &DMatrix<f64>, c: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let gram = w * w.transpose();
    let eps = 1e-12 * gram.norm().max(1e-300);
    match gram.pseudo_inverse(eps) {
        Ok(pinv) => (w.transpose() * (pinv * (w * b - c))).norm(),
        Err(_) => f64::INFINITY,
    }
}

struct Roles<'a> {
    dag: &'a Dag,
    instruments: &'a [usize],
    treatments: &'a [usize],
    outcome: usize,
}

impl Roles<'_> {
    fn column(&self, v: usize) -> Result<usize> {
        self.dag
            .observed_index(v)
            .ok_or_else(|| Error::InvalidInput(format!("node {} is not observed", self.dag.name(v))))
    }

    /// Observed common ancestors of `i` and `target`, as data columns.
    fn adjustment(&self, i: usize, target: usize) -> Result<Vec<usize>> {
        let a = self.dag.ancestors(i)?;
        let b = self.dag.ancestors(target)?;
        a.intersection(&b)
            .filter(|&&v| !self.dag.is_latent(v))
            .map(|&v| self.column(v))
            .collect()
    }

    /// Whether instrument `inst` can be used for treatment `t`: it is a parent of `t`, shares
    /// no latent ancestor with it, and reaches the outcome only through the treatments.
    fn usable(&self, inst: usize, t: usize) -> Result<bool> {
        if !self.dag.parents(t).contains(&inst) {
            return Ok(false);
        }
        let shared = self.dag.ancestors(inst)?;
        if self.dag.ancestors(t)?.intersection(&shared).any(|&v| self.dag.is_latent(v)) {
            return Ok(false);
        }
        let removed: Vec<(usize, usize)> = self.treatments.iter().map(|&t| (t, self.outcome)).collect();
        self.dag
            .without_edges(&removed)
            .d_separated(inst, self.outcome, &BTreeSet::new())
    }

    /// Latent confounders of treatment `t` and the outcome (excluding instruments).
    fn latent_count(&self, t: usize) -> Result<usize> {
        let a = self.dag.ancestors(t)?;
        let b = self.dag.ancestors(self.outcome)?;
        Ok(a.intersection(&b)
            .filter(|&&v| self.dag.is_latent(v) && !self.instruments.contains(&v))
            .count())
    }
}

fn check_roles(roles: &Roles, dim: usize) -> Result<()> {
    if roles.treatments.is_empty() || roles.instruments.is_empty() {
        return Err(Error::InvalidInput("need at least one instrument and one treatment".into()));
    }
    if dim != roles.dag.observed().len() {
        return Err(Error::InvalidInput(format!(
            "source has {dim} variables but the graph has {} observed nodes",
            roles.dag.observed().len()
        )));
    }
    let mut all: Vec<usize> = roles.instruments.to_vec();
    all.extend_from_slice(roles.treatments);
    all.push(roles.outcome);
    let unique: BTreeSet<usize> = all.iter().copied().collect();
    if unique.len() != all.len() {
        return Err(Error::InvalidInput(
            "instruments, treatments and outcome must be distinct".into(),
        ));
    }
    for &v in &all {
        if v >= roles.dag.node_count() {
            return Err(Error::UnknownNode(v));
        }
        roles.column(v)?;
    }
    Ok(())
}

/// Single-instrument estimator. `src` holds the graph's observed variables in observed order;
/// `max_latents` optionally lowers the latent count derived from the graph.
pub fn estimate_iv<S: CumulantSource>(
    src: &S,
    dag: &Dag,
    instrument: usize,
    treatments: &[usize],
    outcome: usize,
    max_latents: Option<usize>,
) -> Result<IvEstimate> {
    if !dag.is_valid_instrument(instrument, treatments, outcome)? {
        return Err(Error::InvalidInstrument(format!(
            "{} is not a valid instrument for the treatments",
            dag.name(instrument)
        )));
    }
    estimate_iv_multi(src, dag, &[instrument], treatments, outcome, max_latents)
}

/// Multi-instrument estimator. Every treatment needs at least one usable instrument; the
/// outcome is residualized on all instruments and each treatment on its usable ones.
pub fn estimate_iv_multi<S: CumulantSource>(
    src: &S,
    dag: &Dag,
    instruments: &[usize],
    treatments: &[usize],
    outcome: usize,
    max_latents: Option<usize>,
) -> Result<IvEstimate> {
    let roles = Roles {
        dag,
        instruments,
        treatments,
        outcome,
    };
    check_roles(&roles, src.dim())?;
    let (s, k) = (instruments.len(), treatments.len());

    let cov = covariance_matrix(src)?;
    let y_col = roles.column(outcome)?;
    let mut w = DMatrix::zeros(s, k);
    let mut c = DVector::zeros(s);
    for (j, &inst) in instruments.iter().enumerate() {
        let i_col = roles.column(inst)?;
        c[j] = regression_adjust(&cov, y_col, i_col, &roles.adjustment(inst, outcome)?)?;
        for (t_idx, &t) in treatments.iter().enumerate() {
            if roles.usable(inst, t)? {
                w[(j, t_idx)] =
                    regression_adjust(&cov, roles.column(t)?, i_col, &roles.adjustment(inst, t)?)?;
            }
        }
    }
    for (t_idx, &t) in treatments.iter().enumerate() {
        if w.column(t_idx).iter().all(|v| *v == 0.0) {
            return Err(Error::InvalidInstrument(format!(
                "no usable instrument for treatment {}",
                dag.name(t)
            )));
        }
    }

    // Variables [T^{I,1}, …, T^{I,k}, Y^I].
    let mut map = DMatrix::zeros(k + 1, src.dim());
    for (t_idx, &t) in treatments.iter().enumerate() {
        map[(t_idx, roles.column(t)?)] = 1.0;
        for (j, &inst) in instruments.iter().enumerate() {
            map[(t_idx, roles.column(inst)?)] -= w[(j, t_idx)];
        }
    }
    map[(k, y_col)] = 1.0;
    for (j, &inst) in instruments.iter().enumerate() {
        map[(k, roles.column(inst)?)] -= c[j];
    }
    let residualized = src.linear_transform(&map)?;

    let mut latents = Vec::with_capacity(k);
    let mut roots = Vec::with_capacity(k);
    for (t_idx, &t) in treatments.iter().enumerate() {
        let derived = roles.latent_count(t)?;
        let l = max_latents.map_or(derived, |m| m.min(derived));
        if l > MAX_LATENTS {
            return Err(Error::Unsupported(format!(
                "treatment {} has {l} latent confounders",
                dag.name(t)
            )));
        }
        let poly = build_effect_polynomial(&residualized, t_idx, k, l)?;
        latents.push(l);
        roots.push(real_roots(&poly)?.roots);
    }
    let candidates: usize = roots.iter().map(Vec::len).product();
    if candidates > MAX_CANDIDATES {
        return Err(Error::Unsupported(format!(
            "{candidates} candidate root tuples (at most {MAX_CANDIDATES})"
        )));
    }

    let score = |b: &DVector<f64>| -> f64 {
        if s == 1 {
            (c[0] - w.row(0).transpose().dot(b)).abs()
        } else {
            distance_to_constraints(&w, &c, b)
        }
    };
    let mut best: Option<(f64, DVector<f64>)> = None;
    for idx in 0..candidates {
        let mut rem = idx;
        let b = DVector::from_fn(k, |t_idx, _| {
            let r = &roots[t_idx];
            let v = r[rem % r.len()];
            rem /= r.len();
            v
        });
        let sc = score(&b);
        if !sc.is_finite() {
            continue;
        }
        let replace = match &best {
            None => true,
            Some((bs, bb)) => {
                if (sc - bs).abs() <= SELECTION_TIE_TOL {
                    b.norm() < bb.norm()
                } else {
                    sc < *bs
                }
            }
        };
        if replace {
            best = Some((sc, b));
        }
    }
    let (_, selected) = best.ok_or(Error::NoValidCandidate)?;
    let effects = project_onto_constraints(&w, &c, &selected)?;
    Ok(IvEstimate {
        constraint_residual: (&w * &selected - &c).norm(),
        projection_distance: (&effects - &selected).norm(),
        effects: effects.iter().copied().collect(),
        selected: selected.iter().copied().collect(),
        latents,
        roots,
        constraint_matrix: w,
        constraint_offsets: c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_adjustment_is_plain_ratio() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 1.5, 1.5, 3.0]);
        assert_eq!(regression_adjust(&cov, 1, 0, &[]).unwrap(), 0.75);
    }

    #[test]
    fn regression_identity() {
        // target = 2·i + e with var(i) = 1.5, var(e) = 0.7
        let cov = DMatrix::from_row_slice(2, 2, &[1.5, 3.0, 3.0, 4.0 * 1.5 + 0.7]);
        assert!((regression_adjust(&cov, 1, 0, &[]).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn singular_adjustment_set() {
        let cov = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 0.5, 0.5, 0.2, //
                0.5, 1.0, 1.0, 0.1, //
                0.5, 1.0, 1.0, 0.1, //
                0.2, 0.1, 0.1, 1.0,
            ],
        );
        assert!(matches!(
            regression_adjust(&cov, 3, 0, &[1, 2]),
            Err(Error::IllConditioned(_))
        ));
    }

    #[test]
    fn projection_fixed_point_and_duplicates() {
        let w = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let c = DVector::from_vec(vec![3.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        assert_eq!(project_onto_constraints(&w, &c, &b).unwrap(), b);

        let start = DVector::from_vec(vec![0.4, -1.0]);
        let single = project_onto_constraints(&w, &c, &start).unwrap();
        let w2 = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let c2 = DVector::from_vec(vec![3.0, 3.0]);
        let double = project_onto_constraints(&w2, &c2, &start).unwrap();
        assert!((single - double).norm() < 1e-14);
    }

    #[test]
    fn inconsistent_constraints() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let c = DVector::from_vec(vec![3.0, 4.0]);
        let b = DVector::from_vec(vec![0.0, 0.0]);
        assert!(matches!(
            project_onto_constraints(&w, &c, &b),
            Err(Error::ConstraintInfeasible(_))
        ));
    }
}
