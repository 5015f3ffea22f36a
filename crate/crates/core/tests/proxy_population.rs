use lvlingam::proxy::{
    estimate_proxy_edge, estimate_proxy_edge_1lat, estimate_proxy_edge_1lat_refined,
    estimate_proxy_no_edge, match_permutation,
};
use lvlingam::synth::{draw_model, NoiseFamily};
use lvlingam::{CumulantSource, GraphPreset, PopulationCumulants, WeightedModel};
use nalgebra::DMatrix;

const TOL: f64 = 1e-6;

fn population(model: &WeightedModel) -> PopulationCumulants {
    model.population(6).unwrap()
}

fn truth(model: &WeightedModel) -> f64 {
    model.total_effect(1, 2).unwrap()
}

#[test]
fn brute_force_permutation_example() {
    // Sorting b into the slots of a: slot 0 ← b[1], slot 1 ← b[2], slot 2 ← b[0].
    let a = [0.0, 5.0, 9.0];
    let b = [9.1, 0.2, 4.8];
    let perm = match_permutation(&a, &b).unwrap();
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let dist = |p: &[usize]| -> f64 { (0..3).map(|i| (a[i] - b[p[i]]).powi(2)).sum() };
    let best = perms
        .iter()
        .min_by(|x, y| dist(&x[..]).total_cmp(&dist(&y[..])))
        .unwrap();
    assert_eq!(perm, best.to_vec());
    assert_eq!(perm, vec![1, 2, 0]);
}

#[test]
fn no_edge_single_latent_population() {
    for family in [NoiseFamily::Gamma, NoiseFamily::Beta] {
        for seed in 0..50 {
            let m = draw_model(&GraphPreset::G1.dag(), family, seed).unwrap();
            let est = estimate_proxy_no_edge(&population(&m), 1).unwrap();
            assert!((est.effect - truth(&m)).abs() < TOL, "{family} seed {seed}: {est:?}");
        }
    }
}

#[test]
fn no_edge_two_latents_population() {
    for seed in 0..50 {
        let m = draw_model(&GraphPreset::G2.dag(), NoiseFamily::Gamma, seed).unwrap();
        let est = estimate_proxy_no_edge(&population(&m), 2).unwrap();
        assert!((est.effect - truth(&m)).abs() < TOL, "seed {seed}: {est:?}");
    }
}

#[test]
fn edge_estimators_population() {
    for seed in 0..50 {
        let m = draw_model(&GraphPreset::G3.dag(), NoiseFamily::Gamma, seed).unwrap();
        let pop = population(&m);
        let t = truth(&m);
        let edge = estimate_proxy_edge(&pop, 1).unwrap();
        let single = estimate_proxy_edge_1lat(&pop).unwrap();
        let refined = estimate_proxy_edge_1lat_refined(&pop).unwrap();
        assert!((edge.effect - t).abs() < TOL, "seed {seed}: {edge:?}");
        assert!((single.effect - t).abs() < 1e-8, "seed {seed}: {single:?}");
        assert!((refined.effect - t).abs() < TOL, "seed {seed}: {refined:?}");
        assert!(single.residual.unwrap() < 1e-10);
    }
}

#[test]
fn edge_two_latents_population() {
    for seed in 0..50 {
        let m = draw_model(&GraphPreset::Proxy2LatEdge.dag(), NoiseFamily::Gamma, seed).unwrap();
        let est = estimate_proxy_edge(&population(&m), 2).unwrap();
        assert!((est.effect - truth(&m)).abs() < TOL, "seed {seed}: {est:?}");
    }
}

#[test]
fn covariance_ratio_at_latent_ratio_is_the_effect() {
    let m = draw_model(&GraphPreset::G3.dag(), NoiseFamily::Gamma, 4).unwrap();
    let pop = population(&m);
    let ratio = m.total_effect(3, 1).unwrap() / m.total_effect(3, 0).unwrap();
    let c = |i: usize, j: usize| pop.cumulant(&[i, j]).unwrap();
    let q = (c(1, 2) - ratio * c(0, 2)) / (c(1, 1) - ratio * c(0, 1));
    assert!((q - truth(&m)).abs() < 1e-12);
}

#[test]
fn g1_data_through_edge_shortcut_has_small_residual() {
    let m = draw_model(&GraphPreset::G1.dag(), NoiseFamily::Gamma, 9).unwrap();
    let est = estimate_proxy_edge_1lat(&population(&m)).unwrap();
    assert!((est.effect - truth(&m)).abs() < 1e-8);
    assert!(est.residual.unwrap() < 1e-10);
}

#[test]
fn scale_equivariance() {
    let m = draw_model(&GraphPreset::G1.dag(), NoiseFamily::Gamma, 21).unwrap();
    let pop = population(&m);
    let base = estimate_proxy_no_edge(&pop, 1).unwrap().effect;
    let scale = |st: f64, sy: f64| {
        let map = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, st, sy]));
        estimate_proxy_no_edge(&pop.linear_transform(&map).unwrap(), 1).unwrap().effect
    };
    assert!((scale(2.5, 2.5) - base).abs() < 1e-8);
    assert!((scale(0.5, 3.0) - base * 6.0).abs() < 1e-8);
}
