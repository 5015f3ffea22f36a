use lvlingam::cumulants::covariance_matrix;
use lvlingam::iv::{estimate_iv, estimate_iv_multi, regression_adjust, residualize};
use lvlingam::synth::{draw_model, NoiseFamily};
use lvlingam::{CumulantSource, GraphPreset, Roles};

fn roles(preset: GraphPreset) -> (Vec<usize>, Vec<usize>, usize) {
    match preset.roles() {
        Roles::Iv {
            instruments,
            treatments,
            outcome,
        } => (instruments, treatments, outcome),
        _ => unreachable!(),
    }
}

#[test]
fn single_instrument_population() {
    let dag = GraphPreset::Iv2T1I.dag();
    let (inst, treat, y) = roles(GraphPreset::Iv2T1I);
    for seed in 0..50 {
        let m = draw_model(&dag, NoiseFamily::Gamma, seed).unwrap();
        let pop = m.population(4).unwrap();
        let est = estimate_iv(&pop, &dag, inst[0], &treat, y, None).unwrap();
        for (t, e) in treat.iter().zip(&est.effects) {
            let truth = m.total_effect(*t, y).unwrap();
            assert!((e - truth).abs() < 1e-6, "seed {seed}: {est:?}");
        }
    }
}

#[test]
fn multi_instrument_population() {
    let dag = GraphPreset::Iv3T2I.dag();
    let (inst, treat, y) = roles(GraphPreset::Iv3T2I);
    for seed in 0..50 {
        let m = draw_model(&dag, NoiseFamily::Gamma, seed).unwrap();
        let pop = m.population(6).unwrap();
        let est = estimate_iv_multi(&pop, &dag, &inst, &treat, y, None).unwrap();
        assert_eq!(est.latents, vec![2, 1, 1]);
        for (t, e) in treat.iter().zip(&est.effects) {
            let truth = m.total_effect(*t, y).unwrap();
            assert!((e - truth).abs() < 1e-6, "seed {seed}: {est:?}");
        }
    }
}

#[test]
fn single_instrument_through_multi_is_identical() {
    let dag = GraphPreset::Iv2T1I.dag();
    let (inst, treat, y) = roles(GraphPreset::Iv2T1I);
    let m = draw_model(&dag, NoiseFamily::Beta, 3).unwrap();
    let pop = m.population(4).unwrap();
    let a = estimate_iv(&pop, &dag, inst[0], &treat, y, None).unwrap();
    let b = estimate_iv_multi(&pop, &dag, &inst, &treat, y, None).unwrap();
    assert_eq!(a, b);
}

#[test]
fn adjustment_recovers_instrument_effects() {
    let dag = GraphPreset::Iv2T1I.dag();
    let m = draw_model(&dag, NoiseFamily::Gamma, 12).unwrap();
    let pop = m.population(2).unwrap();
    let cov = covariance_matrix(&pop).unwrap();
    // I=0 T1=1 T2=2 Y=3; no observed confounding of I, so the adjustment set is empty.
    let b_t1 = regression_adjust(&cov, 1, 0, &[]).unwrap();
    let b_y = regression_adjust(&cov, 3, 0, &[]).unwrap();
    assert!((b_t1 - m.weight(0, 1)).abs() < 1e-12);
    let path_sum = m.weight(0, 1) * m.weight(1, 3) + m.weight(0, 2) * m.weight(2, 3);
    assert!((b_y - path_sum).abs() < 1e-12);

    let res = residualize(&pop, 3, 0, b_y).unwrap();
    assert!(res.cumulant(&[3, 0]).unwrap().abs() < 1e-12);
}

#[test]
fn adjustment_with_observed_confounders() {
    // I1=0 I2=1 X1=2 X2=3 T1=4: X1 and X2 are parents of I1 and of T1 (X2 through I1 only).
    let dag = GraphPreset::Iv3T2I.dag();
    let m = draw_model(&dag, NoiseFamily::Gamma, 2).unwrap();
    let cov = covariance_matrix(&m.population(2).unwrap()).unwrap();
    let direct = regression_adjust(&cov, 4, 0, &[2, 3]).unwrap();
    assert!((direct - m.weight(0, 4)).abs() < 1e-12);
    let naive = regression_adjust(&cov, 4, 0, &[]).unwrap();
    assert!((naive - m.weight(0, 4)).abs() > 1e-6);
}

#[test]
fn invalid_instrument_rejected() {
    let dag = GraphPreset::G3.dag();
    let m = draw_model(&dag, NoiseFamily::Gamma, 0).unwrap();
    let pop = m.population(4).unwrap();
    assert!(matches!(
        estimate_iv(&pop, &dag, 0, &[1], 2, None),
        Err(lvlingam::Error::InvalidInstrument(_))
    ));
}
