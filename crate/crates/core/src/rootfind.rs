//! The effect polynomial of a two-variable latent confounding model, its real roots, and
//! the Vandermonde system that recovers exogenous cumulants from those roots.
//!
//! For a pair `(V₁, V₂)` where every exogenous source `h` of `V₁` enters with coefficient
//! `β_h` (scaled to 1) and enters `V₂` with `β_h·r_h`, the joint cumulant with `t` copies of
//! `V₂` is `Σ_h κ_k(h) r_h^t`. Cumulant slices therefore lie in the span of the vectors
//! `(1, r_h, …, r_h^d)`, and the polynomial whose coefficient vector is orthogonal to that
//! span vanishes exactly at the ratios `r_h`. One root is the causal effect of `V₁` on `V₂`,
//! the others are latent confounder ratios.

use nalgebra::{DMatrix, DVector};

use crate::cumulants::{pair_indices, CumulantSource, MAX_ORDER};
use crate::error::{Error, Result};

/// Relative tolerance under which two roots are considered tied.
pub const TIE_TOL: f64 = 1e-4;

/// Imaginary parts below `IMAG_TOL·(1 + ‖coefficients‖∞)` are projected onto the real axis
/// (coefficients are normalised to unit ∞-norm first).
pub const IMAG_TOL: f64 = 1e-6;

/// Largest latent count supported by the cumulant estimators (order 6).
pub const MAX_LATENTS: usize = 2;

/// Highest cumulant order needed for the degree-`l+1` effect polynomial:
/// `k(l) = (l + 2) + ⌈(√(8l + 17) − 3) / 2⌉`.
pub fn cumulant_order_bound(latents: usize) -> usize {
    let l = latents as f64;
    (latents + 2) + (((8.0 * l + 17.0).sqrt() - 3.0) / 2.0).ceil() as usize
}

/// Univariate polynomial in ascending coefficient order.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectPolynomial {
    coefficients: Vec<f64>,
    latent_count: usize,
}

impl EffectPolynomial {
    pub fn new(coefficients: Vec<f64>, latent_count: usize) -> Result<Self> {
        if coefficients.len() < 2 {
            return Err(Error::InvalidInput("polynomial must have degree at least 1".into()));
        }
        let scale = coefficients.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        if !scale.is_finite() {
            return Err(Error::Degenerate("non-finite polynomial coefficient".into()));
        }
        let lead = *coefficients.last().unwrap();
        if scale == 0.0 || lead.abs() <= 1e-12 * scale {
            return Err(Error::Degenerate(format!(
                "vanishing leading coefficient {lead:.3e} (scale {scale:.3e})"
            )));
        }
        Ok(Self {
            coefficients,
            latent_count,
        })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn latent_count(&self) -> usize {
        self.latent_count
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

/// Real roots, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectRoots {
    pub roots: Vec<f64>,
}

/// Coefficients `[constant, linear, quadratic]` of the single-latent effect polynomial,
/// from the pair's order-3 cumulants `c111, c112, c122` and order-4 cumulants
/// `c1112, c1122, c1222` (digits count copies of the first and second variable).
pub fn single_latent_coefficients(c3: [f64; 3], c4: [f64; 3]) -> [f64; 3] {
    let [c111, c112, c122] = c3;
    let [c1112, c1122, c1222] = c4;
    [
        -(c1222 * c112 - c1122 * c122),
        c1222 * c111 - c1112 * c122,
        c1112 * c112 - c1122 * c111,
    ]
}

/// One cumulant slice: order `order`, `fixed_twos` copies of `V₂` in the fixed prefix,
/// entries for `0..=degree` further copies of `V₂`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct SliceRow {
    order: usize,
    fixed_twos: usize,
}

fn slice_row<S: CumulantSource + ?Sized>(
    src: &S,
    i: usize,
    j: usize,
    degree: usize,
    row: SliceRow,
) -> Result<Vec<f64>> {
    (0..=degree)
        .map(|r| src.cumulant(&pair_indices(i, j, row.order, row.fixed_twos + r)))
        .collect()
}

/// Candidate slices for a polynomial of the given degree, in increasing order.
/// With `skip_first_source` the prefix always holds at least one copy of `V₂`, which removes
/// every source of `V₁` that does not reach `V₂` (a known zero root).
fn candidate_rows(degree: usize, max_order: usize, skip_first_source: bool) -> Vec<SliceRow> {
    let min_twos = usize::from(skip_first_source);
    let mut rows = Vec::new();
    for order in (degree + 1)..=max_order {
        let prefix = order - degree - 1;
        for fixed_twos in min_twos..=prefix {
            rows.push(SliceRow { order, fixed_twos });
        }
    }
    rows
}

/// Ratio of the smallest to largest singular value after normalising each row.
fn conditioning_score(rows: &[&Vec<f64>]) -> f64 {
    let ncols = rows[0].len();
    let m = DMatrix::from_fn(rows.len(), ncols, |r, c| {
        let norm = rows[r].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            rows[r][c] / norm
        } else {
            0.0
        }
    });
    let sv = m.singular_values();
    let max = sv.max();
    if max > 0.0 {
        sv.min() / max
    } else {
        0.0
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Coefficients of `det([rows; 1, b, …, b^d])` expanded along the monomial row.
fn determinant_coefficients(rows: &[&Vec<f64>]) -> Vec<f64> {
    let d = rows.len();
    (0..=d)
        .map(|r| {
            let minor = DMatrix::from_fn(d, d, |a, c| rows[a][if c < r { c } else { c + 1 }]);
            let sign = if (d + r) % 2 == 0 { 1.0 } else { -1.0 };
            sign * minor.determinant()
        })
        .collect()
}

/// Determinant construction: stack the candidate slices, keep the `degree` rows whose
/// normalised minor is best conditioned, and expand against the monomial row.
fn polynomial_from_slices<S: CumulantSource + ?Sized>(
    src: &S,
    i: usize,
    j: usize,
    degree: usize,
    max_order: usize,
    skip_first_source: bool,
    latent_count: usize,
) -> Result<EffectPolynomial> {
    if max_order > MAX_ORDER {
        return Err(Error::Unsupported(format!(
            "effect polynomial of degree {degree} needs order-{max_order} cumulants"
        )));
    }
    let layout = candidate_rows(degree, max_order, skip_first_source);
    let rows: Vec<Vec<f64>> = layout
        .iter()
        .map(|&r| slice_row(src, i, j, degree, r))
        .collect::<Result<_>>()?;
    if rows.len() < degree {
        return Err(Error::Unsupported(format!(
            "only {} cumulant slices available for degree {degree}",
            rows.len()
        )));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for subset in combinations(rows.len(), degree) {
        let chosen: Vec<&Vec<f64>> = subset.iter().map(|&s| &rows[s]).collect();
        let score = conditioning_score(&chosen);
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, subset));
        }
    }
    let (_, subset) = best.expect("at least one subset");
    let chosen: Vec<&Vec<f64>> = subset.iter().map(|&s| &rows[s]).collect();
    EffectPolynomial::new(determinant_coefficients(&chosen), latent_count)
}

fn check_pair<S: CumulantSource + ?Sized>(src: &S, i: usize, j: usize) -> Result<()> {
    if i == j || i >= src.dim() || j >= src.dim() {
        return Err(Error::InvalidInput(format!(
            "invalid variable pair ({i}, {j}) for {} variables",
            src.dim()
        )));
    }
    Ok(())
}

/// Degree-`(l+1)` polynomial whose roots are the effect of `V_i` on `V_j` and the `l`
/// latent confounder ratios.
///
/// `l = 0` gives the regression coefficient `c_ij / c_ii`; `l = 1` uses the closed-form
/// order-3/order-4 coefficients; `l = 2` uses the determinant of the best-conditioned
/// minor built from slices of orders `4..=6`.
pub fn build_effect_polynomial<S: CumulantSource + ?Sized>(
    src: &S,
    i: usize,
    j: usize,
    latents: usize,
) -> Result<EffectPolynomial> {
    check_pair(src, i, j)?;
    match latents {
        0 => {
            let c_ii = src.cumulant(&[i, i])?;
            let c_ij = src.cumulant(&[i, j])?;
            EffectPolynomial::new(vec![-c_ij, c_ii], 0)
        }
        1 => {
            let c3 = [
                src.cumulant(&[i, i, i])?,
                src.cumulant(&[i, i, j])?,
                src.cumulant(&[i, j, j])?,
            ];
            let c4 = [
                src.cumulant(&[i, i, i, j])?,
                src.cumulant(&[i, i, j, j])?,
                src.cumulant(&[i, j, j, j])?,
            ];
            EffectPolynomial::new(single_latent_coefficients(c3, c4).to_vec(), 1)
        }
        2 => polynomial_from_slices(src, i, j, 3, cumulant_order_bound(2), false, 2),
        l => Err(Error::Unsupported(format!(
            "{l} latent confounders (at most {MAX_LATENTS} supported)"
        ))),
    }
}

/// Degree-`l` polynomial for a pair in which one source of `V_i` is known not to reach
/// `V_j` (its ratio is zero). Its roots are the `l` remaining nonzero ratios.
pub fn build_effect_polynomial_with_zero_root<S: CumulantSource + ?Sized>(
    src: &S,
    i: usize,
    j: usize,
    latents: usize,
) -> Result<EffectPolynomial> {
    check_pair(src, i, j)?;
    match latents {
        0 => Err(Error::InvalidInput(
            "a pair with a known zero root needs at least one latent".into(),
        )),
        1 => {
            let c_iij = src.cumulant(&[i, i, j])?;
            let c_ijj = src.cumulant(&[i, j, j])?;
            EffectPolynomial::new(vec![-c_ijj, c_iij], 1)
        }
        2 => polynomial_from_slices(src, i, j, 2, cumulant_order_bound(1) + 1, true, 2),
        l => Err(Error::Unsupported(format!(
            "{l} latent confounders (at most {MAX_LATENTS} supported)"
        ))),
    }
}

/// Real parts of the roots nearest the real axis, ascending.
pub fn real_roots(poly: &EffectPolynomial) -> Result<EffectRoots> {
    let scale = poly.coefficients().iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let c: Vec<f64> = poly.coefficients().iter().map(|v| v / scale).collect();
    let tol = IMAG_TOL * 2.0;
    let mut roots = match poly.degree() {
        1 => vec![-c[0] / c[1]],
        2 => {
            let (a, b, k) = (c[2], c[1], c[0]);
            let disc = b * b - 4.0 * a * k;
            if disc >= 0.0 {
                let q = -0.5 * (b + b.signum() * disc.sqrt());
                if q == 0.0 {
                    vec![0.0, 0.0]
                } else {
                    vec![q / a, k / q]
                }
            } else {
                let re = -b / (2.0 * a);
                let im = (-disc).sqrt() / (2.0 * a.abs());
                if im > tol {
                    return Err(Error::NoRealRoot { max_imag: im });
                }
                vec![re, re]
            }
        }
        d => {
            let lead = c[d];
            let mut companion = DMatrix::zeros(d, d);
            for r in 1..d {
                companion[(r, r - 1)] = 1.0;
            }
            for r in 0..d {
                companion[(r, d - 1)] = -c[r] / lead;
            }
            let eig = companion.complex_eigenvalues();
            if eig
                .iter()
                .all(|z| z.im.abs() > tol)
            {
                let max_imag = eig.iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
                return Err(Error::NoRealRoot { max_imag });
            }
            eig.iter().map(|z| z.re).collect()
        }
    };
    if roots.iter().any(|r| !r.is_finite()) {
        return Err(Error::Degenerate("non-finite root".into()));
    }
    roots.sort_by(f64::total_cmp);
    Ok(EffectRoots { roots })
}

/// Vandermonde matrix with rows `[b₁^r … b_m^r]` for `r = 0..k`.
pub fn vandermonde(b: &[f64], k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(k, b.len(), |r, c| b[c].powi(r as i32))
}

/// Solves `M(b, k)·c = rhs` for the exogenous cumulants (square case `k = len(b)`).
pub fn solve_exogenous_cumulants(b: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let m = b.len();
    if m == 0 || rhs.len() != m {
        return Err(Error::InvalidInput(format!(
            "Vandermonde system needs as many equations as roots ({} vs {m})",
            rhs.len()
        )));
    }
    for x in 0..m {
        for y in (x + 1)..m {
            let scale = 1.0f64.max(b[x].abs()).max(b[y].abs());
            if (b[x] - b[y]).abs() < TIE_TOL * scale {
                return Err(Error::NearSingular(format!(
                    "roots {:.6} and {:.6} coincide",
                    b[x], b[y]
                )));
            }
        }
    }
    let mat = vandermonde(b, m);
    let sol = mat
        .lu()
        .solve(&DVector::from_column_slice(rhs))
        .ok_or_else(|| Error::NearSingular("singular Vandermonde matrix".into()))?;
    Ok(sol.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_bound_values() {
        assert_eq!(cumulant_order_bound(0), 3);
        assert_eq!(cumulant_order_bound(1), 4);
        assert_eq!(cumulant_order_bound(2), 6);
    }

    #[test]
    fn factored_quadratic() {
        let p = EffectPolynomial::new(vec![-6.0, 5.0, -1.0], 1).unwrap();
        let r = real_roots(&p).unwrap().roots;
        assert!((r[0] - 2.0).abs() < 1e-14 && (r[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn identity_linear() {
        let p = EffectPolynomial::new(vec![0.0, 1.0], 0).unwrap();
        assert_eq!(real_roots(&p).unwrap().roots, vec![0.0]);
    }

    #[test]
    fn cubic_roots_via_companion() {
        // (b + 1)(b - 0.5)(b - 2) = b³ - 1.5b² - 1.5b + 1
        let p = EffectPolynomial::new(vec![1.0, -1.5, -1.5, 1.0], 2).unwrap();
        let r = real_roots(&p).unwrap().roots;
        for (got, want) in r.iter().zip([-1.0, 0.5, 2.0]) {
            assert!((got - want).abs() < 1e-10);
        }
    }

    #[test]
    fn complex_quadratic_is_an_error() {
        let p = EffectPolynomial::new(vec![1.0, 0.0, 1.0], 1).unwrap();
        assert!(matches!(real_roots(&p), Err(Error::NoRealRoot { .. })));
    }

    #[test]
    fn cubic_with_complex_pair_reports_real_parts() {
        // (b - 1)(b² + 1) = b³ - b² + b - 1
        let p = EffectPolynomial::new(vec![-1.0, 1.0, -1.0, 1.0], 2).unwrap();
        let r = real_roots(&p).unwrap().roots;
        assert_eq!(r.len(), 3);
        assert!(r.iter().filter(|x| x.abs() < 1e-12).count() == 2);
        assert!((r[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vanishing_leading_coefficient() {
        assert!(matches!(
            EffectPolynomial::new(vec![1.0, 2.0, 0.0], 1),
            Err(Error::Degenerate(_))
        ));
        assert!(EffectPolynomial::new(vec![0.0, 0.0], 0).is_err());
    }

    #[test]
    fn vandermonde_hand_solved() {
        assert_eq!(solve_exogenous_cumulants(&[0.0, 2.0], &[3.0, 4.0]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(solve_exogenous_cumulants(&[5.0], &[7.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn vandermonde_errors() {
        assert!(matches!(
            solve_exogenous_cumulants(&[1.0, 1.0 + 1e-6], &[1.0, 1.0]),
            Err(Error::NearSingular(_))
        ));
        assert!(solve_exogenous_cumulants(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn determinant_expansion_reproduces_closed_form() {
        let c3 = [0.7, -1.3, 0.4];
        let c4 = [2.1, 0.9, -0.6];
        // rows: order 3 without prefix, order 4 with one fixed copy of V₂
        let r3 = c3.to_vec();
        let r4 = c4.to_vec();
        let det = determinant_coefficients(&[&r3, &r4]);
        let closed = single_latent_coefficients(c3, c4);
        for (a, b) in det.iter().zip(closed) {
            assert!((a + b).abs() < 1e-12, "{det:?} vs {closed:?}");
        }
    }

    #[test]
    fn candidate_row_layouts() {
        let full = candidate_rows(3, 6, false);
        assert_eq!(full.len(), 6);
        assert_eq!(full[0], SliceRow { order: 4, fixed_twos: 0 });
        let deflated = candidate_rows(2, 5, true);
        assert_eq!(
            deflated,
            vec![
                SliceRow { order: 4, fixed_twos: 1 },
                SliceRow { order: 5, fixed_twos: 1 },
                SliceRow { order: 5, fixed_twos: 2 },
            ]
        );
    }
}
