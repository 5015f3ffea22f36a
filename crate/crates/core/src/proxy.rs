//! Effect of a treatment `T` on an outcome `Y` confounded by latent variables, using an
//! observed proxy `Z` of the confounders.
//!
//! Every estimator takes a cumulant source over exactly three variables ordered `[Z, T, Y]`.

use nalgebra::DMatrix;

use crate::cumulants::{bivariate_cumulant_vector, CumulantSource, CumulantTensor};
use crate::error::{Error, Result};
use crate::rootfind::{
    build_effect_polynomial, build_effect_polynomial_with_zero_root, real_roots,
    solve_exogenous_cumulants,
};

const Z: usize = 0;
const T: usize = 1;
const Y: usize = 2;

/// Relative threshold below which a ratio's numerator and denominator count as zero.
pub const ZERO_RATIO_TOL: f64 = 1e-9;

/// Relative threshold on the denominator of the covariance ratio `q`.
pub const RATIO_DENOM_TOL: f64 = 1e-12;

pub const REFINE_MAX_ITER: usize = 200;
/// Largest single step, relative to `max(1, |b̂|)`.
pub const REFINE_MAX_STEP: f64 = 0.05;
pub const REFINE_STEP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ProxyEstimate {
    pub effect: f64,
    /// Alignment of the `(Z, Y)` sources with the `(Z, T)` sources.
    pub sigma: Vec<usize>,
    /// Alignment of the `(T, Y)` roots with the ratio vector (empty where unused).
    pub eta: Vec<usize>,
    /// Selection residual `|b_{Y,Z} − b_{Y,T}·b_{T,Z}|` of the chosen candidate.
    pub residual: Option<f64>,
    pub roots_zt: Vec<f64>,
    pub roots_zy: Vec<f64>,
    pub roots_ty: Vec<f64>,
    /// Set when the refinement objective was not finite and the initial value was kept.
    pub refinement_fallback: bool,
}

/// Permutation `perm` minimising `Σ_i (a[i] − b[perm[i]])²`; ties go to the
/// lexicographically smallest `perm`.
pub fn match_permutation(a: &[f64], b: &[f64]) -> Result<Vec<usize>> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "cannot match vectors of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() || a.len() > 6 {
        return Err(Error::InvalidInput(format!(
            "matching supports 1..=6 entries, got {}",
            a.len()
        )));
    }
    best_permutation(a, b, 0)
}

/// As [`match_permutation`], but slots `0..skip` of `a` do not contribute to the distance;
/// they receive whatever entries of `b` are left over.
pub fn match_permutation_skipping(a: &[f64], b: &[f64], skip: usize) -> Result<Vec<usize>> {
    if a.len() != b.len() || skip > a.len() {
        return Err(Error::InvalidInput(format!(
            "cannot match vectors of lengths {} and {} skipping {skip}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() || a.len() > 6 {
        return Err(Error::InvalidInput(format!(
            "matching supports 1..=6 entries, got {}",
            a.len()
        )));
    }
    best_permutation(a, b, skip)
}

fn best_permutation(a: &[f64], b: &[f64], skip: usize) -> Result<Vec<usize>> {
    let mut best: Option<(f64, Vec<usize>)> = None;
    for perm in permutations(a.len()) {
        let d: f64 = perm
            .iter()
            .enumerate()
            .skip(skip)
            .map(|(i, &p)| (a[i] - b[p]).powi(2))
            .sum();
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, perm));
        }
    }
    Ok(best.expect("nonempty").1)
}

/// All permutations of `0..m` in lexicographic order.
fn permutations(m: usize) -> Vec<Vec<usize>> {
    fn rec(m: usize, cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == m {
            out.push(cur.clone());
            return;
        }
        for i in 0..m {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(m, cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(m, &mut Vec::new(), &mut vec![false; m], &mut out);
    out
}

fn check_triple<S: CumulantSource + ?Sized>(src: &S) -> Result<()> {
    if src.dim() != 3 {
        return Err(Error::InvalidInput(format!(
            "proxy estimators expect variables [Z, T, Y], got {}",
            src.dim()
        )));
    }
    Ok(())
}

fn check_latents(l: usize) -> Result<()> {
    if !(1..=2).contains(&l) {
        return Err(Error::Unsupported(format!(
            "proxy estimators support 1 or 2 latent confounders, got {l}"
        )));
    }
    Ok(())
}

/// `num / den` with `0/0 = 0` up to the tolerance.
fn ratio(num: f64, den: f64, scale: f64) -> Result<f64> {
    let tol = ZERO_RATIO_TOL * scale;
    if den.abs() < tol {
        if num.abs() < tol {
            return Ok(0.0);
        }
        return Err(Error::Degenerate(format!(
            "ratio {num:.3e} / {den:.3e} has a vanishing denominator"
        )));
    }
    Ok(num / den)
}

fn with_zero(roots: Vec<f64>) -> Vec<f64> {
    std::iter::once(0.0).chain(roots).collect()
}

/// Effect of `T` on `Y` when the proxy `Z` does not cause `T`.
///
/// The sources of `Z` are its own noise (which reaches neither `T` nor `Y` directly) and the
/// `l` latents, so the `(Z, T)` and `(Z, Y)` root sets are `{0} ∪ ratios`. The exogenous
/// cumulants attached to each root align the two pairs; dividing aligned `Y` ratios by `T`
/// ratios reproduces the latent roots of the `(T, Y)` polynomial plus a zero, and the
/// `(T, Y)` root left over for that zero is the effect.
pub fn estimate_proxy_no_edge<S: CumulantSource + ?Sized>(src: &S, l: usize) -> Result<ProxyEstimate> {
    check_triple(src)?;
    check_latents(l)?;
    let zt = with_zero(real_roots(&build_effect_polynomial_with_zero_root(src, Z, T, l)?)?.roots);
    let zy = with_zero(real_roots(&build_effect_polynomial_with_zero_root(src, Z, Y, l)?)?.roots);
    let ty = real_roots(&build_effect_polynomial(src, T, Y, l)?)?.roots;

    let c_t = solve_exogenous_cumulants(&zt, &bivariate_cumulant_vector(src, Z, T, l + 1)?)?;
    let c_y = solve_exogenous_cumulants(&zy, &bivariate_cumulant_vector(src, Z, Y, l + 1)?)?;
    let sigma = match_permutation(&c_t, &c_y)?;

    let scale = zt
        .iter()
        .chain(&zy)
        .fold(1.0f64, |m, v| m.max(v.abs()));
    let ratios = (0..=l)
        .map(|i| ratio(zy[sigma[i]], zt[i], scale))
        .collect::<Result<Vec<_>>>()?;
    // The zero in slot 0 has no counterpart among the (T, Y) roots; only the latent
    // ratios are compared, and the root left over for slot 0 is the effect.
    let eta = match_permutation_skipping(&ratios, &ty, 1)?;
    Ok(ProxyEstimate {
        effect: ty[eta[0]],
        sigma,
        eta,
        residual: None,
        roots_zt: zt,
        roots_zy: zy,
        roots_ty: ty,
        refinement_fallback: false,
    })
}

/// Roots and aligned exogenous cumulants of the `(Z, T)` and `(Z, Y)` pairs when `Z` may
/// cause `T`: one root pair is `(b_{T,Z}, b_{Y,Z})`, the others are latent ratios.
fn aligned_proxy_roots<S: CumulantSource + ?Sized>(
    src: &S,
    l: usize,
) -> Result<(Vec<f64>, Vec<f64>, Vec<usize>)> {
    let zt = real_roots(&build_effect_polynomial(src, Z, T, l)?)?.roots;
    let zy = real_roots(&build_effect_polynomial(src, Z, Y, l)?)?.roots;
    let c_t = solve_exogenous_cumulants(&zt, &bivariate_cumulant_vector(src, Z, T, l + 1)?)?;
    let c_y = solve_exogenous_cumulants(&zy, &bivariate_cumulant_vector(src, Z, Y, l + 1)?)?;
    let sigma = match_permutation(&c_t, &c_y)?;
    Ok((zt, zy, sigma))
}

/// Removes `Z` from `T` and `Y` with the given coefficients: `[Z, T − b₁Z, Y − b₂Z]`.
fn remove_proxy<S: CumulantSource>(src: &S, b_tz: f64, b_yz: f64) -> Result<S> {
    let map = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, -b_tz, 1.0, 0.0, -b_yz, 0.0, 1.0]);
    src.linear_transform(&map)
}

/// Effect of `T` on `Y` when the proxy `Z` may also cause `T`.
///
/// Each aligned root pair `(b₁, b₂)` is tried as `(b_{T,Z}, b_{Y,Z})`: removing `Z` from
/// `T` and `Y` with it gives a no-edge problem, and the candidate whose estimate best
/// satisfies `b₂ = b̂·b₁` (the proxy reaches `Y` only through `T`) wins.
pub fn estimate_proxy_edge<S: CumulantSource>(src: &S, l: usize) -> Result<ProxyEstimate> {
    check_triple(src)?;
    check_latents(l)?;
    let (zt, zy, sigma) = aligned_proxy_roots(src, l)?;
    let mut best: Option<(f64, ProxyEstimate)> = None;
    for i in 0..=l {
        let (b1, b2) = (zt[i], zy[sigma[i]]);
        let Ok(candidate) = remove_proxy(src, b1, b2).and_then(|v| estimate_proxy_no_edge(&v, l))
        else {
            continue;
        };
        let r = (b2 - candidate.effect * b1).abs();
        if !r.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|(br, _)| r < *br) {
            best = Some((r, candidate));
        }
    }
    let (r, inner) = best.ok_or(Error::NoValidCandidate)?;
    Ok(ProxyEstimate {
        effect: inner.effect,
        sigma,
        eta: inner.eta,
        residual: Some(r),
        roots_zt: zt,
        roots_zy: zy,
        roots_ty: inner.roots_ty,
        refinement_fallback: false,
    })
}

/// Second-order pieces of the covariance ratio `q(b) = (c_TY − b·c_ZY)/(c_TT − b·c_ZT)`:
/// removing `b·Z` from `T` with `b` equal to the latent ratio leaves a regressor of `Y`
/// that is independent of the confounder.
#[derive(Debug, Clone, Copy)]
struct CovarianceRatio {
    c_ty: f64,
    c_zy: f64,
    c_tt: f64,
    c_zt: f64,
}

impl CovarianceRatio {
    fn new<S: CumulantSource + ?Sized>(src: &S) -> Result<Self> {
        Ok(Self {
            c_ty: src.cumulant(&[T, Y])?,
            c_zy: src.cumulant(&[Z, Y])?,
            c_tt: src.cumulant(&[T, T])?,
            c_zt: src.cumulant(&[Z, T])?,
        })
    }

    fn eval(&self, b: f64) -> Result<f64> {
        let den = self.c_tt - b * self.c_zt;
        if den.abs() <= RATIO_DENOM_TOL * self.c_tt.abs().max(1e-300) || !den.is_finite() {
            return Err(Error::DegenerateRatio(den));
        }
        Ok((self.c_ty - b * self.c_zy) / den)
    }
}

/// Single-latent shortcut for the edge case: the latent ratio of the `(Z, T)` pair turns
/// the covariance ratio `q` into the effect directly, so no second root extraction is needed.
pub fn estimate_proxy_edge_1lat<S: CumulantSource + ?Sized>(src: &S) -> Result<ProxyEstimate> {
    check_triple(src)?;
    let (zt, zy, sigma) = aligned_proxy_roots(src, 1)?;
    let q = CovarianceRatio::new(src)?;
    let mut best: Option<(f64, f64)> = None;
    let mut last_err = None;
    for (i, other) in [(0usize, 1usize), (1, 0)] {
        let (b1, b2) = (zt[i], zy[sigma[i]]);
        match q.eval(zt[other]) {
            Ok(effect) => {
                let r = (b2 - effect * b1).abs();
                if best.is_none_or(|(br, _)| r < br) {
                    best = Some((r, effect));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let (r, effect) = best.ok_or_else(|| last_err.expect("both candidates failed"))?;
    Ok(ProxyEstimate {
        effect,
        sigma,
        eta: Vec::new(),
        residual: Some(r),
        roots_zt: zt,
        roots_zy: zy,
        roots_ty: Vec::new(),
        refinement_fallback: false,
    })
}

/// Objective of the refinement step. With `V^b = [Z, T, Y − bT]`, the ratio
/// `g(b) = c₁₃₃·c₂₂₃ / (c₁₁₃·c₂₃₃)` equals the latent ratio of `(Z, T)` at the true effect,
/// where `q(g(b)) = b`.
struct RefineObjective {
    third: CumulantTensor,
    q: CovarianceRatio,
    start: f64,
}

impl RefineObjective {
    fn third_of_residual(&self, b: f64, idx: [usize; 3]) -> f64 {
        // Row `Y − bT` of the transform is (0, −b, 1).
        let row = |v: usize| -> [f64; 3] {
            match v {
                Z => [1.0, 0.0, 0.0],
                T => [0.0, 1.0, 0.0],
                _ => [0.0, -b, 1.0],
            }
        };
        let (r0, r1, r2) = (row(idx[0]), row(idx[1]), row(idx[2]));
        let mut total = 0.0;
        for a in 0..3 {
            if r0[a] == 0.0 {
                continue;
            }
            for c in 0..3 {
                if r1[c] == 0.0 {
                    continue;
                }
                for e in 0..3 {
                    if r2[e] != 0.0 {
                        total += r0[a] * r1[c] * r2[e] * self.third.get(&[a, c, e]);
                    }
                }
            }
        }
        total
    }

    fn g(&self, b: f64) -> f64 {
        let c133 = self.third_of_residual(b, [Z, Y, Y]);
        let c223 = self.third_of_residual(b, [T, T, Y]);
        let c113 = self.third_of_residual(b, [Z, Z, Y]);
        let c233 = self.third_of_residual(b, [T, Y, Y]);
        c133 * c223 / (c113 * c233)
    }

    fn eval(&self, b: f64) -> f64 {
        match self.q.eval(self.g(b)) {
            Ok(qb) => (b - qb).powi(2) + (b - self.start).powi(2),
            Err(_) => f64::NAN,
        }
    }
}

/// One-dimensional quasi-Newton minimisation with central-difference gradients and a
/// backtracking line search. Returns `None` if the objective is not finite along the way.
fn quasi_newton_1d(f: impl Fn(f64) -> f64, x0: f64) -> Option<f64> {
    let grad = |x: f64| {
        let h = 1e-6 * x.abs().max(1.0);
        (f(x + h) - f(x - h)) / (2.0 * h)
    };
    let mut x = x0;
    let mut fx = f(x);
    let mut g = grad(x);
    if !fx.is_finite() || !g.is_finite() {
        return None;
    }
    let mut inv_hess = 1.0;
    // Steps are capped so the search stays near the start instead of hopping across poles.
    let max_step = REFINE_MAX_STEP * x0.abs().max(1.0);
    for _ in 0..REFINE_MAX_ITER {
        if g == 0.0 {
            break;
        }
        let dir = (-inv_hess * g).clamp(-max_step, max_step);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = x + step * dir;
            let fc = f(cand);
            if !fc.is_finite() {
                return None;
            }
            if fc <= fx + 1e-4 * step * dir * g {
                accepted = Some((cand, fc));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            break;
        };
        let g_new = grad(x_new);
        if !g_new.is_finite() {
            return None;
        }
        let s = x_new - x;
        let yk = g_new - g;
        x = x_new;
        fx = f_new;
        g = g_new;
        if s.abs() < REFINE_STEP_TOL {
            break;
        }
        if s * yk > 0.0 {
            inv_hess = s / yk;
        }
    }
    Some(x)
}

/// Single-latent edge estimator followed by local minimisation of
/// `h(b) = (b − q(g(b)))² + (b − b̂)²` starting from the shortcut estimate `b̂`.
pub fn estimate_proxy_edge_1lat_refined<S: CumulantSource + ?Sized>(src: &S) -> Result<ProxyEstimate> {
    let mut est = estimate_proxy_edge_1lat(src)?;
    let objective = RefineObjective {
        third: CumulantTensor::from_source(src, 3)?,
        q: CovarianceRatio::new(src)?,
        start: est.effect,
    };
    match quasi_newton_1d(|b| objective.eval(b), est.effect) {
        Some(b) if b.is_finite() => est.effect = b,
        _ => est.refinement_fallback = true,
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutation_swap_and_identity() {
        assert_eq!(match_permutation(&[1.0, 2.0], &[2.0, 1.0]).unwrap(), vec![1, 0]);
        assert_eq!(match_permutation(&[3.0, 1.0, 2.0], &[3.0, 1.0, 2.0]).unwrap(), vec![0, 1, 2]);
        assert!(match_permutation(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn permutation_ties_go_to_lexicographic_first() {
        assert_eq!(match_permutation(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), vec![0, 1]);
    }

    #[test]
    fn permutations_are_lexicographic() {
        let p = permutations(3);
        assert_eq!(p.len(), 6);
        assert_eq!(p[0], vec![0, 1, 2]);
        assert_eq!(p[1], vec![0, 2, 1]);
        assert_eq!(p[5], vec![2, 1, 0]);
    }

    #[test]
    fn zero_over_zero_ratio() {
        assert_eq!(ratio(0.0, 0.0, 1.0).unwrap(), 0.0);
        assert_eq!(ratio(1e-12, -1e-12, 1.0).unwrap(), 0.0);
        assert!(ratio(0.3, 0.0, 1.0).is_err());
        assert_eq!(ratio(1.0, 2.0, 1.0).unwrap(), 0.5);
    }

    #[test]
    fn quasi_newton_finds_quadratic_minimum() {
        let x = quasi_newton_1d(|x| (x - 1.3).powi(2) + 0.5, -4.0).unwrap();
        assert!((x - 1.3).abs() < 1e-7);
        assert!(quasi_newton_1d(|_| f64::NAN, 0.0).is_none());
    }

    #[test]
    fn wrong_dimension_rejected() {
        let s = crate::cumulants::Sample::from_columns(
            &[vec![1.0, 2.0, 0.0, 4.0], vec![0.5, 1.0, 2.0, 1.0]],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        assert!(estimate_proxy_no_edge(&s, 1).is_err());
    }
}
