//! Synthetic lvLiNGAM models: random edge weights, non-Gaussian noises with known
//! cumulants, the mixing matrix from observed variables' exogenous sources, and samples.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::cumulants::{factorial, NoiseCumulants, PopulationCumulants, Sample, MAX_ORDER};
use crate::error::{Error, Result};
use crate::graph::Dag;

/// Range of absolute edge weights; signs are drawn uniformly.
pub const WEIGHT_RANGE: (f64, f64) = (0.5, 0.9);
pub const GAMMA_SHAPE_RANGE: (f64, f64) = (0.1, 1.0);
pub const GAMMA_SCALE_RANGE: (f64, f64) = (0.1, 0.5);
pub const BETA_ALPHA_RANGE: (f64, f64) = (1.5, 2.0);
pub const BETA_BETA_RANGE: (f64, f64) = (2.0, 10.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseFamily {
    Gamma,
    Beta,
}

impl fmt::Display for NoiseFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseFamily::Gamma => "gamma",
            NoiseFamily::Beta => "beta",
        })
    }
}

impl FromStr for NoiseFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gamma" => Ok(NoiseFamily::Gamma),
            "beta" => Ok(NoiseFamily::Beta),
            _ => Err(Error::InvalidInput(format!("unknown noise family '{s}'"))),
        }
    }
}

/// Realised distribution of one exogenous noise. Draws are centered by the analytic mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum NoiseDist {
    Gamma { shape: f64, scale: f64 },
    Beta { alpha: f64, beta: f64 },
    /// Point mass at zero; only useful to pin down sampler plumbing.
    Zero,
}

impl NoiseDist {
    pub fn mean(&self) -> f64 {
        match *self {
            NoiseDist::Gamma { shape, scale } => shape * scale,
            NoiseDist::Beta { alpha, beta } => alpha / (alpha + beta),
            NoiseDist::Zero => 0.0,
        }
    }

    /// Order-`k` cumulant (`k ≥ 2`), unaffected by centering.
    pub fn cumulant(&self, k: usize) -> Result<f64> {
        if !(2..=MAX_ORDER).contains(&k) {
            return Err(Error::UnsupportedOrder(k));
        }
        match *self {
            NoiseDist::Gamma { shape, scale } => Ok(shape * scale.powi(k as i32) * factorial(k - 1)),
            NoiseDist::Beta { alpha, beta } => Ok(beta_cumulants(alpha, beta, k)[k - 1]),
            NoiseDist::Zero => Err(Error::InvalidInput(
                "a point mass has no non-degenerate cumulants".into(),
            )),
        }
    }

    fn sampler(&self) -> Result<Box<dyn Fn(&mut ChaCha8Rng) -> f64>> {
        let mean = self.mean();
        Ok(match *self {
            NoiseDist::Gamma { shape, scale } => {
                let d = rand_distr::Gamma::new(shape, scale)
                    .map_err(|e| Error::InvalidInput(format!("gamma({shape}, {scale}): {e}")))?;
                Box::new(move |rng| d.sample(rng) - mean)
            }
            NoiseDist::Beta { alpha, beta } => {
                let d = rand_distr::Beta::new(alpha, beta)
                    .map_err(|e| Error::InvalidInput(format!("beta({alpha}, {beta}): {e}")))?;
                Box::new(move |rng| d.sample(rng) - mean)
            }
            NoiseDist::Zero => Box::new(|_| 0.0),
        })
    }
}

/// Cumulants `κ_1..κ_order` of Beta(α, β) from the raw moments
/// `E[X^r] = Π_{i<r} (α + i)/(α + β + i)`.
fn beta_cumulants(alpha: f64, beta: f64, order: usize) -> Vec<f64> {
    let mut raw = vec![1.0];
    for r in 0..order {
        let prev = raw[r];
        raw.push(prev * (alpha + r as f64) / (alpha + beta + r as f64));
    }
    let binom = |n: usize, k: usize| factorial(n) / (factorial(k) * factorial(n - k));
    let mut kappa: Vec<f64> = Vec::with_capacity(order);
    for n in 1..=order {
        let mut value = raw[n];
        for m in 1..n {
            value -= binom(n - 1, m - 1) * kappa[m - 1] * raw[n - m];
        }
        kappa.push(value);
    }
    kappa
}

/// Noise distributions indexed by mixing-matrix column (observed nodes first, then latent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub family: Option<NoiseFamily>,
    pub noises: Vec<NoiseDist>,
}

impl NoiseSpec {
    pub fn draw(family: NoiseFamily, count: usize, rng: &mut impl Rng) -> Self {
        let noises = (0..count)
            .map(|_| match family {
                NoiseFamily::Gamma => NoiseDist::Gamma {
                    shape: rng.random_range(GAMMA_SHAPE_RANGE.0..GAMMA_SHAPE_RANGE.1),
                    scale: rng.random_range(GAMMA_SCALE_RANGE.0..GAMMA_SCALE_RANGE.1),
                },
                NoiseFamily::Beta => NoiseDist::Beta {
                    alpha: rng.random_range(BETA_ALPHA_RANGE.0..BETA_ALPHA_RANGE.1),
                    beta: rng.random_range(BETA_BETA_RANGE.0..BETA_BETA_RANGE.1),
                },
            })
            .collect();
        Self {
            family: Some(family),
            noises,
        }
    }
}

/// A DAG with edge weights and noise distributions.
#[derive(Debug, Clone)]
pub struct WeightedModel {
    dag: Dag,
    /// `adjacency[(to, from)]` is the weight of the edge `from → to`.
    adjacency: DMatrix<f64>,
    /// Observed rows × all-noise columns, in the dag's column order.
    mixing: DMatrix<f64>,
    noise: NoiseSpec,
}

impl WeightedModel {
    /// Builds a model from explicit weights. `adjacency[(to, from)]` may be nonzero only on
    /// edges of `dag`; `noise` lists one distribution per mixing-matrix column.
    pub fn from_weights(dag: Dag, adjacency: DMatrix<f64>, noise: NoiseSpec) -> Result<Self> {
        let p = dag.node_count();
        if adjacency.nrows() != p || adjacency.ncols() != p {
            return Err(Error::InvalidInput(format!(
                "adjacency must be {p}×{p}, got {}×{}",
                adjacency.nrows(),
                adjacency.ncols()
            )));
        }
        if noise.noises.len() != p {
            return Err(Error::InvalidInput(format!(
                "{} noise distributions for {p} nodes",
                noise.noises.len()
            )));
        }
        for to in 0..p {
            for from in 0..p {
                if adjacency[(to, from)] != 0.0 && !dag.has_edge(from, to) {
                    return Err(Error::InvalidInput(format!(
                        "weight on non-edge {from} → {to}"
                    )));
                }
            }
        }
        // (I − A)⁻¹ by substitution along a topological order.
        let mut total = DMatrix::<f64>::identity(p, p);
        for &v in &dag.topological_order() {
            for &u in dag.parents(v) {
                let w = adjacency[(v, u)];
                let row_u = total.row(u).clone_owned();
                let mut row_v = total.row_mut(v);
                row_v += row_u * w;
            }
        }
        let observed = dag.observed().to_vec();
        let mixing = DMatrix::from_fn(observed.len(), p, |r, c| {
            total[(observed[r], dag.column_node(c))]
        });
        Ok(Self {
            dag,
            adjacency,
            mixing,
            noise,
        })
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn weight(&self, from: usize, to: usize) -> f64 {
        self.adjacency[(to, from)]
    }

    pub fn mixing(&self) -> &DMatrix<f64> {
        &self.mixing
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    /// Total causal effect of node `from` on observed node `to` (an entry of the mixing matrix).
    pub fn total_effect(&self, from: usize, to: usize) -> Result<f64> {
        let row = self
            .dag
            .observed_index(to)
            .ok_or_else(|| Error::InvalidInput(format!("node {to} is not observed")))?;
        let col = self.dag.column_index(from).ok_or(Error::UnknownNode(from))?;
        Ok(self.mixing[(row, col)])
    }

    /// Per-column factors `s` such that dividing each latent column by `s` makes its first
    /// nonzero entry equal to 1. Observed columns keep factor 1.
    pub fn latent_scales(&self) -> Vec<f64> {
        let po = self.dag.observed().len();
        (0..self.mixing.ncols())
            .map(|c| {
                if c < po {
                    return 1.0;
                }
                self.mixing
                    .column(c)
                    .iter()
                    .copied()
                    .find(|v| *v != 0.0)
                    .unwrap_or(1.0)
            })
            .collect()
    }

    /// Mixing matrix with latent columns rescaled so their first nonzero entry is 1, and the
    /// noise cumulants rescaled to compensate; observed cumulants are unchanged.
    pub fn normalized_mixing(&self, max_order: usize) -> Result<(DMatrix<f64>, NoiseCumulants)> {
        let scales = self.latent_scales();
        let mut mixing = self.mixing.clone();
        for (c, s) in scales.iter().enumerate() {
            mixing.column_mut(c).unscale_mut(*s);
        }
        let noise = self.noise_cumulants(max_order)?.scaled(&scales)?;
        Ok((mixing, noise))
    }

    /// Analytic cumulants of every noise for orders `2..=max_order`.
    pub fn noise_cumulants(&self, max_order: usize) -> Result<NoiseCumulants> {
        if !(2..=MAX_ORDER).contains(&max_order) {
            return Err(Error::UnsupportedOrder(max_order));
        }
        let values = self
            .noise
            .noises
            .iter()
            .map(|d| (2..=max_order).map(|k| d.cumulant(k)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        NoiseCumulants::new(values)
    }

    /// Exact cumulants of the observed variables, in observed order.
    pub fn population(&self, max_order: usize) -> Result<PopulationCumulants> {
        PopulationCumulants::new(self.mixing.clone(), self.noise_cumulants(max_order)?)
    }

    /// Observed node names, in column order.
    pub fn observed_labels(&self) -> Vec<String> {
        self.dag
            .observed()
            .iter()
            .map(|&v| self.dag.name(v).to_string())
            .collect()
    }
}

/// Draws edge weights uniformly from `±[0.5, 0.9]` (edges in lexicographic order) and then
/// one noise distribution per mixing column.
pub fn draw_model(dag: &Dag, family: NoiseFamily, seed: u64) -> Result<WeightedModel> {
    if !dag.is_canonical() {
        return Err(Error::NonCanonical(
            "every latent node needs at least two children and no parents".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = dag.node_count();
    let mut adjacency = DMatrix::zeros(p, p);
    for (from, to) in dag.edges() {
        let magnitude = rng.random_range(WEIGHT_RANGE.0..WEIGHT_RANGE.1);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        adjacency[(to, from)] = sign * magnitude;
    }
    let noise = NoiseSpec::draw(family, p, &mut rng);
    WeightedModel::from_weights(dag.clone(), adjacency, noise)
}

/// `n` i.i.d. observations of the model's observed variables as an `n × p_o` matrix.
pub fn sample_matrix(model: &WeightedModel, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::InvalidInput("sample size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = model.mixing.ncols();
    let mut noise = DMatrix::zeros(n, p);
    for (c, dist) in model.noise.noises.iter().enumerate() {
        let draw = dist.sampler()?;
        for r in 0..n {
            noise[(r, c)] = draw(&mut rng);
        }
    }
    Ok(noise * model.mixing.transpose())
}

/// `n ≥ 2` i.i.d. observations labelled by observed node names.
pub fn sample_data(model: &WeightedModel, n: usize, seed: u64) -> Result<Sample> {
    Sample::new(sample_matrix(model, n, seed)?, model.observed_labels())
}

/// Analytic noise cumulants up to `max_order`.
pub fn population_noise_cumulants(model: &WeightedModel, max_order: usize) -> Result<NoiseCumulants> {
    model.noise_cumulants(max_order)
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed derived from a base seed and a sequence of stream identifiers.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphPreset;

    #[test]
    fn same_seed_same_model() {
        let dag = GraphPreset::G2.dag();
        let a = draw_model(&dag, NoiseFamily::Gamma, 7).unwrap();
        let b = draw_model(&dag, NoiseFamily::Gamma, 7).unwrap();
        assert_eq!(a.adjacency(), b.adjacency());
        assert_eq!(a.noise(), b.noise());
        let c = draw_model(&dag, NoiseFamily::Gamma, 8).unwrap();
        assert_ne!(a.adjacency(), c.adjacency());
    }

    #[test]
    fn weights_lie_in_range_on_edges_only() {
        let dag = GraphPreset::Iv3T2I.dag();
        let m = draw_model(&dag, NoiseFamily::Beta, 3).unwrap();
        for to in 0..dag.node_count() {
            for from in 0..dag.node_count() {
                let w = m.weight(from, to).abs();
                if dag.has_edge(from, to) {
                    assert!((0.5..=0.9).contains(&w));
                } else {
                    assert_eq!(w, 0.0);
                }
            }
        }
    }

    #[test]
    fn edgeless_graph_mixing_is_identity_then_zero() {
        let dag = Dag::new(3, &[], &[0, 1], &[2]).unwrap();
        let noise = NoiseSpec {
            family: None,
            noises: vec![NoiseDist::Gamma { shape: 1.0, scale: 1.0 }; 3],
        };
        let m = WeightedModel::from_weights(dag, DMatrix::zeros(3, 3), noise).unwrap();
        let expected = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(m.mixing(), &expected);
    }

    #[test]
    fn non_canonical_graph_rejected() {
        let dag = Dag::new(3, &[(2, 0)], &[0, 1], &[2]).unwrap();
        assert!(matches!(
            draw_model(&dag, NoiseFamily::Gamma, 0),
            Err(Error::NonCanonical(_))
        ));
    }

    #[test]
    fn g1_effects_are_path_sums() {
        let dag = GraphPreset::G1.dag();
        let m = draw_model(&dag, NoiseFamily::Gamma, 11).unwrap();
        let (z, t, y, l) = (0, 1, 2, 3);
        assert!((m.total_effect(t, y).unwrap() - m.weight(t, y)).abs() < 1e-15);
        let via = m.weight(l, y) + m.weight(t, y) * m.weight(l, t);
        assert!((m.total_effect(l, y).unwrap() - via).abs() < 1e-15);
        assert_eq!(m.total_effect(z, y).unwrap(), 0.0);
    }

    #[test]
    fn zero_noise_gives_zero_row() {
        let dag = GraphPreset::G1.dag();
        let mut m = draw_model(&dag, NoiseFamily::Gamma, 1).unwrap();
        m.noise.noises = vec![NoiseDist::Zero; 4];
        let rows = sample_matrix(&m, 1, 5).unwrap();
        assert_eq!(rows.shape(), (1, 3));
        assert!(rows.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn analytic_noise_cumulants() {
        let exp = NoiseDist::Gamma { shape: 1.0, scale: 1.0 };
        assert_eq!(exp.cumulant(2).unwrap(), 1.0);
        let g = NoiseDist::Gamma { shape: 0.3, scale: 0.4 };
        assert!((g.cumulant(4).unwrap() - 6.0 * 0.3 * 0.4f64.powi(4)).abs() < 1e-15);
        let b = NoiseDist::Beta { alpha: 2.0, beta: 2.0 };
        assert!(b.cumulant(3).unwrap().abs() < 1e-15);
        assert!(b.cumulant(5).unwrap().abs() < 1e-15);
        // Beta(2, 2): variance αβ/((α+β)²(α+β+1)) = 1/20
        assert!((b.cumulant(2).unwrap() - 0.05).abs() < 1e-15);
        assert!(matches!(g.cumulant(7), Err(Error::UnsupportedOrder(7))));
    }

    #[test]
    fn beta_fourth_cumulant_matches_closed_form() {
        let (a, b) = (1.7f64, 4.2f64);
        let s = a + b;
        // excess kurtosis of Beta times variance²
        let var = a * b / (s * s * (s + 1.0));
        let exkurt = 6.0 * ((a - b).powi(2) * (s + 1.0) - a * b * (s + 2.0))
            / (a * b * (s + 2.0) * (s + 3.0));
        let k4 = NoiseDist::Beta { alpha: a, beta: b }.cumulant(4).unwrap();
        assert!((k4 - exkurt * var * var).abs() < 1e-14);
    }

    #[test]
    fn seeds_differ_across_streams() {
        let a = derive_seed(1, &[1000, 0]);
        let b = derive_seed(1, &[1000, 1]);
        let c = derive_seed(1, &[10000, 0]);
        assert!(a != b && a != c && b != c);
        assert_eq!(a, derive_seed(1, &[1000, 0]));
    }
}
