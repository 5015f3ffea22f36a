use lvlingam::cumulants::{population_cumulant_tensor, CumulantTensor};
use lvlingam::synth::{draw_model, sample_data, NoiseFamily};
use lvlingam::{CumulantSource, GraphPreset, NoiseCumulants, PopulationCumulants};
use nalgebra::DMatrix;

/// Discrete distribution as (value, probability) pairs.
type Discrete = Vec<(f64, f64)>;

/// Every partition of `0..n` into blocks.
fn partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in partitions(n - 1) {
        for b in 0..p.len() {
            let mut q = p.clone();
            q[b].push(n - 1);
            out.push(q);
        }
        let mut q = p;
        q.push(vec![n - 1]);
        out.push(q);
    }
    out
}

fn factorial(k: usize) -> f64 {
    (1..=k).product::<usize>() as f64
}

/// Joint cumulant from exact raw moments over an enumerated support.
fn joint_cumulant(support: &[(Vec<f64>, f64)], idx: &[usize]) -> f64 {
    let moment = |block: &[usize]| -> f64 {
        support
            .iter()
            .map(|(x, p)| p * block.iter().map(|&b| x[idx[b]]).product::<f64>())
            .sum()
    };
    partitions(idx.len())
        .iter()
        .map(|p| {
            let sign = if p.len() % 2 == 1 { 1.0 } else { -1.0 };
            sign * factorial(p.len() - 1) * p.iter().map(|b| moment(b)).product::<f64>()
        })
        .sum()
}

/// Support of `X = B·N` for independent discrete noises.
fn mixed_support(mixing: &DMatrix<f64>, noises: &[Discrete]) -> Vec<(Vec<f64>, f64)> {
    let mut out = vec![(vec![0.0; mixing.nrows()], 1.0)];
    for (k, dist) in noises.iter().enumerate() {
        out = out
            .into_iter()
            .flat_map(|(x, p)| {
                dist.iter().map(move |&(v, q)| {
                    let y: Vec<f64> = x.iter().enumerate().map(|(r, xr)| xr + mixing[(r, k)] * v).collect();
                    (y, p * q)
                })
            })
            .collect();
    }
    out
}

fn noise_table(noises: &[Discrete], max_order: usize) -> NoiseCumulants {
    let values = noises
        .iter()
        .map(|d| {
            let support: Vec<(Vec<f64>, f64)> = d.iter().map(|&(v, p)| (vec![v], p)).collect();
            (2..=max_order).map(|k| joint_cumulant(&support, &vec![0; k])).collect()
        })
        .collect();
    NoiseCumulants::new(values).unwrap()
}

#[test]
fn population_tensor_matches_enumerated_moments() {
    let noises: Vec<Discrete> = vec![
        vec![(0.0, 0.7), (1.0, 0.3)],
        vec![(-1.0, 0.5), (0.0, 0.2), (3.0, 0.3)],
        vec![(2.0, 0.1), (-0.5, 0.9)],
    ];
    let mixing = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.8, 0.6, 1.0, -0.7, 0.3, 0.5, 1.2]);
    let support = mixed_support(&mixing, &noises);
    let pop = PopulationCumulants::new(mixing, noise_table(&noises, 6)).unwrap();
    for order in 2..=6 {
        let tensor = CumulantTensor::from_source(&pop, order).unwrap();
        for (idx, value) in tensor.entries() {
            let oracle = joint_cumulant(&support, idx);
            assert!(
                (value - oracle).abs() < 1e-10 * (1.0 + oracle.abs()),
                "order {order} {idx:?}: {value} vs {oracle}"
            );
        }
    }
}

#[test]
fn free_function_tensor_agrees_with_source() {
    let m = draw_model(&GraphPreset::G2.dag(), NoiseFamily::Beta, 4).unwrap();
    let pop = m.population(5).unwrap();
    let t = population_cumulant_tensor(pop.mixing(), pop.noise(), 5).unwrap();
    for (idx, v) in t.entries() {
        assert_eq!(*v, pop.cumulant(idx).unwrap());
    }
}

#[test]
fn sample_cumulants_approach_population() {
    let m = draw_model(&GraphPreset::G1.dag(), NoiseFamily::Beta, 2).unwrap();
    let pop = m.population(4).unwrap();
    let sample = sample_data(&m, 400_000, 9).unwrap();
    for order in 2..=4 {
        let exact = CumulantTensor::from_source(&pop, order).unwrap();
        let scale = exact.entries().fold(0.0f64, |a, (_, v)| a.max(v.abs()));
        for (idx, v) in exact.entries() {
            let est = sample.cumulant(idx).unwrap();
            assert!((est - v).abs() < 0.05 * scale, "order {order} {idx:?}: {est} vs {v}");
        }
    }
}
