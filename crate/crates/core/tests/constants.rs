use scaffold_core::config::RunConfig;
use scaffold_core::stimulus::{
    gamma_oct, RateTable, BONE_LIMIT, CARTILAGE_LIMIT, RESORPTION_LIMIT, STIMULUS_SCALE,
};
use scaffold_core::tensor::IsotropicMaterial;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0)
}

#[test]
fn default_config_echoes_model_constants() {
    let cfg = RunConfig::from_toml(&RunConfig::default().to_toml()).unwrap();
    assert_eq!(cfg.simulation.dt, 1.0);
    assert_eq!(cfg.simulation.days, 140.0);
    assert!(close(1.0 - cfg.simulation.initial_density, 0.79));
    assert_eq!(cfg.simulation.k_mig, 6e-4);
    assert_eq!((cfg.optimization.lower, cfg.optimization.upper), (0.1, 0.99));
    assert_eq!(cfg.loads.axial, 14.7);
    assert_eq!(cfg.loads.tangential, [1.8, 1.8]);
    assert_eq!(cfg.domain.defect_length, 5.0);
    assert_eq!(cfg.domain.radius, 1.0);

    let m = &cfg.materials;
    assert_eq!(m.scaffold, IsotropicMaterial { youngs_modulus: 350.0, poisson_ratio: 0.33 });
    assert_eq!(m.bone, IsotropicMaterial { youngs_modulus: 5000.0, poisson_ratio: 0.3 });
    assert_eq!(m.fixator, IsotropicMaterial { youngs_modulus: 3800.0, poisson_ratio: 0.3 });
    assert_eq!(m.nail, IsotropicMaterial { youngs_modulus: 111_000.0, poisson_ratio: 0.33 });

    let model = cfg.model().unwrap();
    assert_eq!((model.dt, model.days), (1.0, 140.0));
    assert_eq!(model.law.k_mig, 6e-4);
    assert_eq!(model.load, cfg.loads);
    assert_eq!(cfg.tabulation_spec().metadata.k_mig, 6e-4);
    let design = cfg.initial_design(&model);
    assert!(design.density.iter().all(|&r| close(r, 0.21)));
}

#[test]
fn stimulus_scale_and_thresholds() {
    assert_eq!(STIMULUS_SCALE, 0.0375);
    assert_eq!((RESORPTION_LIMIT, BONE_LIMIT, CARTILAGE_LIMIT), (0.01, 3.0, 5.0));
    // Uniaxial strain e: 3 tr(e²) - tr(e)² = 2 e².
    let e = 1e-3;
    let expect = 2.0 / (3.0 * 0.0375) * (2.0f64).sqrt() * e;
    assert!(close(gamma_oct(&[e, 0.0, 0.0, 0.0, 0.0, 0.0]), expect));
}

#[test]
fn rate_coefficients() {
    let r = RateTable::default();
    assert_eq!(r.proliferation, [0.6, 0.55, 0.2, 0.3]);
    assert!(close(r.differentiation, -(0.7f64).ln()));
    let apo = [0.95f64, 0.95, 0.9, 0.84].map(|q| -q.ln());
    for i in 0..4 {
        assert!(close(r.apoptosis[i], apo[i]));
    }
}

/// Rates from the discrete mechano-regulation rules:
/// `S ≤ 0.01` resorption, `(0.01, 3]` bone, `(3, 5]` cartilage, `> 5`
/// fibrous tissue. Returns proliferation, differentiation into
/// fib/cho/ost and apoptosis.
fn discrete_rates(s: f64) -> ([f64; 4], [f64; 3], [f64; 4]) {
    let active = s > 0.01;
    let fib = s > 5.0;
    let cho = s > 3.0 && s <= 5.0;
    let ost = active && s <= 3.0;
    let act = [active, fib, cho, ost].map(|b| if b { 1.0 } else { 0.0 });
    let prolif = [0.6, 0.55, 0.2, 0.3];
    let apo = [0.95f64, 0.95, 0.9, 0.84].map(|q| -q.ln());
    let kdiff = -(0.7f64).ln() * act[0];
    (
        [0, 1, 2, 3].map(|i| prolif[i] * act[i]),
        [kdiff * act[1], kdiff * act[2], kdiff * act[3]],
        [0, 1, 2, 3].map(|i| apo[i] * (1.0 - act[i])),
    )
}

#[test]
fn sharp_activations_reproduce_discrete_rules() {
    let table = RateTable::with_sharpness(400.0);
    for s in [0.0, 0.005, 0.02, 2.0, 4.0, 6.0] {
        let rates = table.rates(&table.channels(s));
        let (p, d, a) = discrete_rates(s);
        for i in 0..4 {
            assert!((rates.proliferation[i] - p[i]).abs() < 1e-9, "S = {s}: proliferation {i}");
            assert!((rates.apoptosis[i] - a[i]).abs() < 1e-9, "S = {s}: apoptosis {i}");
        }
        for i in 0..3 {
            assert!((rates.differentiation[i] - d[i]).abs() < 1e-9, "S = {s}: differentiation {i}");
        }
    }
}

#[test]
fn differentiation_shares_sum_to_progenitor_loss() {
    let table = RateTable::default();
    for s in [0.02, 0.5, 2.9, 3.1, 4.0, 5.2, 8.0] {
        let rates = table.rates(&table.channels(s));
        let total: f64 = rates.differentiation.iter().sum();
        let sigma = table.channels(s)[0];
        assert!((total - table.differentiation * sigma).abs() < 1e-9, "S = {s}");
    }
}
