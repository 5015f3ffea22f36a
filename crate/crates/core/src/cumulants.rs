//! Joint cumulants: unbiased sample k-statistics, plug-in estimators for orders 5 and 6,
//! and the exact population cumulants of a linear mixture of independent noises.
//!
//! Every estimator in this crate consumes cumulants through [`CumulantSource`], so the
//! same code runs on a finite sample or on exact population tensors.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Highest cumulant order supported by the estimators.
pub const MAX_ORDER: usize = 6;

/// Anything that can report joint cumulants of its variables.
pub trait CumulantSource {
    /// Number of variables.
    fn dim(&self) -> usize;

    /// Joint cumulant of the variables named by `indices` (order = `indices.len()`).
    fn cumulant(&self, indices: &[usize]) -> Result<f64>;

    /// New source whose variable `r` is `Σ_c map[(r, c)] · variable_c`.
    fn linear_transform(&self, map: &DMatrix<f64>) -> Result<Self>
    where
        Self: Sized;

    /// New source restricted to the listed variables, in that order.
    fn select(&self, columns: &[usize]) -> Result<Self>
    where
        Self: Sized,
    {
        let mut map = DMatrix::zeros(columns.len(), self.dim());
        for (r, &c) in columns.iter().enumerate() {
            if c >= self.dim() {
                return Err(Error::InvalidInput(format!("column {c} out of range")));
            }
            map[(r, c)] = 1.0;
        }
        self.linear_transform(&map)
    }
}

fn check_indices(indices: &[usize], dim: usize) -> Result<()> {
    let k = indices.len();
    if !(2..=MAX_ORDER).contains(&k) {
        return Err(Error::UnsupportedOrder(k));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= dim) {
        return Err(Error::InvalidInput(format!(
            "variable index {bad} out of range for {dim} variables"
        )));
    }
    Ok(())
}

/// An i.i.d. sample, stored column-major and mean-centered on construction.
#[derive(Debug, Clone)]
pub struct Sample {
    data: DMatrix<f64>,
    labels: Vec<String>,
    power_sums: RefCell<HashMap<Vec<usize>, f64>>,
}

impl Sample {
    /// `data` is n×p with one row per observation.
    pub fn new(mut data: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        let (n, p) = data.shape();
        if n < 2 {
            return Err(Error::InvalidInput(format!("sample needs at least 2 rows, got {n}")));
        }
        if p == 0 {
            return Err(Error::InvalidInput("sample has no columns".into()));
        }
        if labels.len() != p {
            return Err(Error::InvalidInput(format!(
                "{} labels for {p} columns",
                labels.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("sample contains non-finite entries".into()));
        }
        for mut col in data.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        Ok(Self {
            data,
            labels,
            power_sums: RefCell::new(HashMap::new()),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<String>) -> Result<Self> {
        let p = labels.len();
        if let Some(r) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::InvalidInput(format!(
                "row of length {} does not match {p} labels",
                r.len()
            )));
        }
        let data = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        Self::new(data, labels)
    }

    pub fn from_columns(columns: &[Vec<f64>], labels: Vec<String>) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidInput("columns have different lengths".into()));
        }
        let data = DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]);
        Self::new(data, labels)
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn p(&self) -> usize {
        self.data.ncols()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Centered data, n×p.
    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn column_by_label(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// `Σ_t Π_{a ∈ key} x_{t,a}` for a sorted multiset `key`, memoized.
    fn power_sum(&self, key: &[usize]) -> f64 {
        if let Some(&v) = self.power_sums.borrow().get(key) {
            return v;
        }
        let n = self.n();
        let mut prod = vec![1.0; n];
        for &a in key {
            let col = self.data.column(a);
            for (p, x) in prod.iter_mut().zip(col.iter()) {
                *p *= x;
            }
        }
        let s: f64 = prod.iter().sum();
        self.power_sums.borrow_mut().insert(key.to_vec(), s);
        s
    }

    fn sub_power_sum(&self, indices: &[usize], positions: &[usize]) -> f64 {
        let mut key: Vec<usize> = positions.iter().map(|&p| indices[p]).collect();
        key.sort_unstable();
        self.power_sum(&key)
    }

    /// Unbiased k-statistic for orders 2–4; plug-in partition estimator for orders 5–6.
    pub fn sample_cumulant(&self, indices: &[usize]) -> Result<f64> {
        check_indices(indices, self.p())?;
        let k = indices.len();
        let n = self.n();
        if n < k {
            return Err(Error::InsufficientSample { n, order: k });
        }
        let nf = n as f64;
        let s = |pos: &[usize]| self.sub_power_sum(indices, pos);
        let value = match k {
            2 => s(&[0, 1]) / (nf - 1.0),
            3 => nf * s(&[0, 1, 2]) / ((nf - 1.0) * (nf - 2.0)),
            4 => {
                let pairs = s(&[0, 1]) * s(&[2, 3]) + s(&[0, 2]) * s(&[1, 3]) + s(&[0, 3]) * s(&[1, 2]);
                (nf * (nf + 1.0) * s(&[0, 1, 2, 3]) - (nf - 1.0) * pairs)
                    / ((nf - 1.0) * (nf - 2.0) * (nf - 3.0))
            }
            _ => cumulant_from_moments(k, |block| s(block) / nf),
        };
        Ok(value)
    }
}

impl CumulantSource for Sample {
    fn dim(&self) -> usize {
        self.p()
    }

    fn cumulant(&self, indices: &[usize]) -> Result<f64> {
        self.sample_cumulant(indices)
    }

    fn linear_transform(&self, map: &DMatrix<f64>) -> Result<Self> {
        if map.ncols() != self.p() {
            return Err(Error::InvalidInput(format!(
                "transform has {} columns for {} variables",
                map.ncols(),
                self.p()
            )));
        }
        let data = &self.data * map.transpose();
        let labels = (0..map.nrows()).map(|r| format!("U{r}")).collect();
        Self::new(data, labels)
    }

    fn select(&self, columns: &[usize]) -> Result<Self> {
        if let Some(&c) = columns.iter().find(|&&c| c >= self.p()) {
            return Err(Error::InvalidInput(format!("column {c} out of range")));
        }
        let data = self.data.select_columns(columns);
        let labels = columns.iter().map(|&c| self.labels[c].clone()).collect();
        Self::new(data, labels)
    }
}

/// Moment-to-cumulant formula for mean-zero variables:
/// `κ = Σ_π (−1)^{|π|−1} (|π|−1)! Π_{B∈π} μ_B`, summing over set partitions of the
/// `order` positions without singleton blocks. `moment` receives the positions of a block.
pub fn cumulant_from_moments(order: usize, mut moment: impl FnMut(&[usize]) -> f64) -> f64 {
    let mut total = 0.0;
    for partition in set_partitions(order) {
        if partition.iter().any(|b| b.len() == 1) {
            continue;
        }
        let m = partition.len();
        let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
        let coeff = sign * factorial(m - 1);
        let prod: f64 = partition.iter().map(|b| moment(b)).product();
        total += coeff * prod;
    }
    total
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// All set partitions of `{0, .., n-1}` (restricted growth strings).
pub fn set_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    fn rec(i: usize, n: usize, blocks: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if i == n {
            out.push(blocks.clone());
            return;
        }
        for b in 0..blocks.len() {
            blocks[b].push(i);
            rec(i + 1, n, blocks, out);
            blocks[b].pop();
        }
        blocks.push(vec![i]);
        rec(i + 1, n, blocks, out);
        blocks.pop();
    }
    let mut out = Vec::new();
    rec(0, n, &mut Vec::new(), &mut out);
    out
}

/// Diagonal exogenous cumulants `c^k(N)_{j..j}` for orders `2..=max_order`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCumulants {
    values: Vec<Vec<f64>>,
}

impl NoiseCumulants {
    /// `values[j][k - 2]` is the order-`k` cumulant of noise `j`.
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self> {
        let len = values.first().map_or(0, Vec::len);
        if len == 0 || values.iter().any(|v| v.len() != len) {
            return Err(Error::InvalidInput(
                "noise cumulants must list the same orders for every noise".into(),
            ));
        }
        if let Some(j) = values.iter().position(|v| !(v[0] > 0.0)) {
            return Err(Error::InvalidInput(format!("noise {j} has non-positive variance")));
        }
        Ok(Self { values })
    }

    pub fn noise_count(&self) -> usize {
        self.values.len()
    }

    pub fn max_order(&self) -> usize {
        self.values[0].len() + 1
    }

    pub fn get(&self, noise: usize, order: usize) -> Result<f64> {
        if order < 2 || order > self.max_order() {
            return Err(Error::UnsupportedOrder(order));
        }
        self.values
            .get(noise)
            .map(|v| v[order - 2])
            .ok_or_else(|| Error::InvalidInput(format!("noise {noise} out of range")))
    }

    /// Cumulants of `s_j · N_j`.
    pub fn scaled(&self, scales: &[f64]) -> Result<Self> {
        if scales.len() != self.noise_count() {
            return Err(Error::InvalidInput("one scale per noise required".into()));
        }
        let values = self
            .values
            .iter()
            .zip(scales)
            .map(|(v, s)| {
                v.iter()
                    .enumerate()
                    .map(|(i, c)| c * s.powi(i as i32 + 2))
                    .collect()
            })
            .collect();
        Self::new(values)
    }
}

/// Exact cumulants of `V = B'·N` for independent noises `N` (multilinearity of cumulants).
#[derive(Debug, Clone)]
pub struct PopulationCumulants {
    mixing: DMatrix<f64>,
    noise: NoiseCumulants,
}

impl PopulationCumulants {
    pub fn new(mixing: DMatrix<f64>, noise: NoiseCumulants) -> Result<Self> {
        if mixing.ncols() != noise.noise_count() {
            return Err(Error::InvalidInput(format!(
                "mixing matrix has {} columns but {} noise cumulant vectors were given",
                mixing.ncols(),
                noise.noise_count()
            )));
        }
        Ok(Self { mixing, noise })
    }

    pub fn mixing(&self) -> &DMatrix<f64> {
        &self.mixing
    }

    pub fn noise(&self) -> &NoiseCumulants {
        &self.noise
    }
}

impl CumulantSource for PopulationCumulants {
    fn dim(&self) -> usize {
        self.mixing.nrows()
    }

    fn cumulant(&self, indices: &[usize]) -> Result<f64> {
        check_indices(indices, self.dim())?;
        let k = indices.len();
        let mut total = 0.0;
        for j in 0..self.mixing.ncols() {
            let weight: f64 = indices.iter().map(|&i| self.mixing[(i, j)]).product();
            if weight != 0.0 {
                total += self.noise.get(j, k)? * weight;
            }
        }
        Ok(total)
    }

    fn linear_transform(&self, map: &DMatrix<f64>) -> Result<Self> {
        if map.ncols() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "transform has {} columns for {} variables",
                map.ncols(),
                self.dim()
            )));
        }
        Self::new(map * &self.mixing, self.noise.clone())
    }
}

/// Symmetric order-k tensor stored once per sorted index multiset.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulantTensor {
    order: usize,
    dim: usize,
    values: BTreeMap<Vec<usize>, f64>,
}

impl CumulantTensor {
    pub fn from_source<S: CumulantSource + ?Sized>(src: &S, order: usize) -> Result<Self> {
        let dim = src.dim();
        let mut values = BTreeMap::new();
        for key in multisets(dim, order) {
            let v = src.cumulant(&key)?;
            values.insert(key, v);
        }
        Ok(Self { order, dim, values })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Entry at any permutation of `indices`.
    pub fn get(&self, indices: &[usize]) -> f64 {
        assert_eq!(indices.len(), self.order, "index length must equal tensor order");
        let mut key = indices.to_vec();
        key.sort_unstable();
        self.values[&key]
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Vec<usize>, &f64)> {
        self.values.iter()
    }
}

/// Order-k tensor of `B'·N`: entry `(i₁..i_k) = Σ_j c^k(N)_j · b'_{i₁,j} ⋯ b'_{i_k,j}`.
pub fn population_cumulant_tensor(
    mixing: &DMatrix<f64>,
    noise: &NoiseCumulants,
    order: usize,
) -> Result<CumulantTensor> {
    let pop = PopulationCumulants::new(mixing.clone(), noise.clone())?;
    CumulantTensor::from_source(&pop, order)
}

/// Non-decreasing index sequences of length `order` over `0..dim`.
pub fn multisets(dim: usize, order: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, dim: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for i in start..dim {
            cur.push(i);
            rec(i, dim, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, dim, order, &mut Vec::new(), &mut out);
    out
}

/// Index multiset with `k - twos` copies of `i` followed by `twos` copies of `j`.
pub(crate) fn pair_indices(i: usize, j: usize, k: usize, twos: usize) -> Vec<usize> {
    let mut idx = vec![i; k - twos];
    idx.extend(std::iter::repeat_n(j, twos));
    idx
}

/// `[c^k_{i..i}, c^k_{i..i,j}, …, c^k_{i,j..j}]`: the `k` joint cumulants of the pair
/// with the count of `j` running from 0 to `k − 1`.
pub fn bivariate_cumulant_vector<S: CumulantSource + ?Sized>(
    src: &S,
    i: usize,
    j: usize,
    k: usize,
) -> Result<Vec<f64>> {
    if i == j {
        return Err(Error::InvalidInput("pair must consist of two distinct variables".into()));
    }
    if i >= src.dim() || j >= src.dim() {
        return Err(Error::InvalidInput("pair index out of range".into()));
    }
    (0..k).map(|twos| src.cumulant(&pair_indices(i, j, k, twos))).collect()
}

/// Order-2 cumulant matrix of all variables.
pub fn covariance_matrix<S: CumulantSource + ?Sized>(src: &S) -> Result<DMatrix<f64>> {
    let p = src.dim();
    let mut cov = DMatrix::zeros(p, p);
    for a in 0..p {
        for b in a..p {
            let v = src.cumulant(&[a, b])?;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    Ok(cov)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(cols: &[Vec<f64>]) -> Sample {
        let labels = (0..cols.len()).map(|i| format!("c{i}")).collect();
        Sample::from_columns(cols, labels).unwrap()
    }

    #[test]
    fn unbiased_variance_small_example() {
        let s = sample(&[vec![1.0, -1.0, 1.0, -1.0]]);
        assert!((s.sample_cumulant(&[0, 0]).unwrap() - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn symmetric_sample_has_zero_third_cumulant() {
        let s = sample(&[vec![0.0, 1.0, 2.0]]);
        assert!(s.sample_cumulant(&[0, 0, 0]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn order_and_size_errors() {
        let s = sample(&[vec![0.0, 1.0, 2.0]]);
        assert!(matches!(s.sample_cumulant(&[0]), Err(Error::UnsupportedOrder(1))));
        assert!(matches!(s.sample_cumulant(&[0; 7]), Err(Error::UnsupportedOrder(7))));
        assert!(matches!(
            s.sample_cumulant(&[0; 4]),
            Err(Error::InsufficientSample { n: 3, order: 4 })
        ));
        assert!(s.sample_cumulant(&[0, 3]).is_err());
    }

    #[test]
    fn rejects_bad_samples() {
        assert!(Sample::from_columns(&[vec![1.0]], vec!["a".into()]).is_err());
        assert!(Sample::from_columns(&[vec![1.0, f64::NAN]], vec!["a".into()]).is_err());
        assert!(Sample::from_columns(&[vec![1.0, 2.0]], vec![]).is_err());
    }

    #[test]
    fn set_partition_counts_are_bell_numbers() {
        let bell = [1, 1, 2, 5, 15, 52, 203];
        for (n, &b) in bell.iter().enumerate() {
            assert_eq!(set_partitions(n).len(), b);
        }
    }

    #[test]
    fn identity_mixing_gives_diagonal_tensor() {
        let noise = NoiseCumulants::new(vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let t = population_cumulant_tensor(&DMatrix::identity(2, 2), &noise, 3).unwrap();
        assert_eq!(t.get(&[0, 0, 0]), 2.0);
        assert_eq!(t.get(&[1, 1, 1]), 5.0);
        assert_eq!(t.get(&[0, 1, 0]), 0.0);
        assert_eq!(t.get(&[1, 1, 0]), 0.0);
    }

    #[test]
    fn row_scaling_is_multilinear() {
        let noise = NoiseCumulants::new(vec![vec![1.0, 0.7, 2.0], vec![0.5, -1.1, 3.0]]).unwrap();
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, -0.3, 2.0]);
        let mut scaled = b.clone();
        scaled.row_mut(1).scale_mut(1.7);
        let t = population_cumulant_tensor(&b, &noise, 4).unwrap();
        let u = population_cumulant_tensor(&scaled, &noise, 4).unwrap();
        for (key, v) in t.entries() {
            let m = key.iter().filter(|&&i| i == 1).count() as i32;
            assert!((u.get(key) - v * 1.7f64.powi(m)).abs() < 1e-12);
        }
    }

    #[test]
    fn population_dimension_mismatch() {
        let noise = NoiseCumulants::new(vec![vec![1.0]]).unwrap();
        assert!(PopulationCumulants::new(DMatrix::identity(2, 2), noise.clone()).is_err());
        let pop = PopulationCumulants::new(DMatrix::identity(1, 1), noise).unwrap();
        assert!(matches!(pop.cumulant(&[0, 0, 0]), Err(Error::UnsupportedOrder(3))));
    }

    #[test]
    fn bivariate_vector_simple_cases() {
        let noise = NoiseCumulants::new(vec![vec![2.0], vec![3.0]]).unwrap();
        let indep = PopulationCumulants::new(DMatrix::identity(2, 2), noise.clone()).unwrap();
        assert_eq!(bivariate_cumulant_vector(&indep, 0, 1, 2).unwrap(), vec![2.0, 0.0]);

        let doubled = PopulationCumulants::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 0.0]),
            noise,
        )
        .unwrap();
        assert_eq!(bivariate_cumulant_vector(&doubled, 0, 1, 2).unwrap(), vec![2.0, 4.0]);
        assert!(bivariate_cumulant_vector(&doubled, 0, 0, 2).is_err());
    }

    #[test]
    fn sample_linear_transform_matches_direct_columns() {
        let x = vec![0.3, -1.2, 2.5, 0.1, 0.9, -0.4];
        let y = vec![1.0, 0.5, -0.7, 2.2, -1.3, 0.0];
        let s = sample(&[x.clone(), y.clone()]);
        let map = DMatrix::from_row_slice(1, 2, &[2.0, -3.0]);
        let t = s.linear_transform(&map).unwrap();
        let direct = sample(&[x.iter().zip(&y).map(|(a, b)| 2.0 * a - 3.0 * b).collect()]);
        for k in 2..=4 {
            let idx = vec![0; k];
            let a = t.sample_cumulant(&idx).unwrap();
            let b = direct.sample_cumulant(&idx).unwrap();
            assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()), "order {k}");
        }
    }
}
