use nalgebra::{Matrix3, Matrix6};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scaffold_core::coefficients::CoefficientSource;
use scaffold_core::macroscale::hex::HexBasis;
use scaffold_core::macroscale::{
    reaction, CellState, DomainConfig, FixatorConfig, LoadCase, MacroDomain, MacroModel, Materials, Mode, Region,
    ScaffoldDesign, StepFields,
};
use scaffold_core::stimulus::{RateTable, CHANNELS};

fn coarse_config() -> DomainConfig {
    DomainConfig { defect_elements: 6, bone_elements: 4, cross_elements: [8, 8], ..Default::default() }
}

fn coarse_model(days: f64) -> MacroModel {
    let domain = MacroDomain::cylinder(&coarse_config()).unwrap();
    MacroModel::new(domain, Materials::default(), LoadCase::default(), 1.0, days).unwrap()
}

fn solve(model: &MacroModel, rho: f64, bone: f64) -> Vec<f64> {
    let n = model.defect_elements();
    let stiffness = model.element_stiffness(&model.law, &vec![rho; n], &vec![bone; n]);
    model.solve_elasticity(&stiffness, None).unwrap().displacement
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Straight row of elements along `x` with one element in cross-section.
fn bar_domain(labels: Vec<Region>, h: f64, width: f64) -> MacroDomain {
    let lines = [(0..=labels.len()).map(|i| i as f64 * h).collect(), vec![0.0, width], vec![0.0, width]];
    MacroDomain::from_labels(lines, labels.into_iter().map(Some).collect(), false).unwrap()
}

fn fields_at(model: &MacroModel, rho: f64, stimulus: f64, rates: &RateTable) -> StepFields {
    let n = model.defect_elements();
    let ch = rates.channels(stimulus);
    let mut response = [0.0; CHANNELS + 1];
    response[..CHANNELS].copy_from_slice(&ch);
    response[CHANNELS] = stimulus;
    StepFields { occupied: vec![rho; n], bone: vec![0.0; n], strain: vec![[0.0; 6]; n], response: vec![response; n] }
}

#[test]
fn zero_traction_gives_zero_displacement() {
    let model = coarse_model(0.0).with_load(LoadCase { axial: 0.0, tangential: [0.0, 0.0] });
    let u = solve(&model, 0.21, 0.0);
    assert!(u.iter().all(|&x| x == 0.0));
    assert_eq!(model.compliance(&u), 0.0);
}

#[test]
fn displacement_is_linear_and_compliance_quadratic_in_the_load() {
    let model = coarse_model(0.0);
    let u1 = solve(&model, 0.21, 0.0);
    let doubled = model.clone().with_load(LoadCase::default().scaled(2.0));
    let u2 = solve(&doubled, 0.21, 0.0);
    let err = u1.iter().zip(&u2).map(|(a, b)| (2.0 * a - b).abs()).fold(0.0, f64::max);
    assert!(err <= 1e-6 * max_abs(&u2), "linearity error {err}");
    let (c1, c2) = (model.compliance(&u1), doubled.compliance(&u2));
    assert!(c1 > 0.0);
    assert!((c2 / c1 - 4.0).abs() < 1e-6, "ratio {}", c2 / c1);
}

#[test]
fn compliance_equals_strain_energy() {
    let model = coarse_model(0.0);
    let n = model.defect_elements();
    let stiffness = model.element_stiffness(&model.law, &vec![0.3; n], &vec![0.1; n]);
    let u = model.solve_elasticity(&stiffness, None).unwrap().displacement;
    // element energies from the bilinear form, independent of the assembly
    let mut energy = 0.0;
    for (e, el) in model.domain.elements.iter().enumerate() {
        let c = stiffness[e];
        let ue = model.element_displacement(e, &u);
        let b = model.domain.bases[el.basis].elastic_bilinear(&ue, &ue);
        energy += (0..6).flat_map(|i| (0..6).map(move |j| (i, j))).map(|(i, j)| c[(i, j)] * b[i][j]).sum::<f64>();
    }
    assert_eq!(stiffness[model.domain.defect.elements[0]], model.law.stiffness(0.3, 0.1));
    let work = model.compliance(&u);
    assert!((energy - work).abs() < 1e-6 * work, "energy {energy}, work {work}");
}

#[test]
fn denser_scaffold_lowers_compliance() {
    let model = coarse_model(0.0);
    let base = model.compliance(&solve(&model, 0.21, 0.0));
    let denser = model.compliance(&solve(&model, 0.21 * 1.1, 0.0));
    assert!(denser < base, "{denser} >= {base}");
}

#[test]
fn bone_filled_defect_matches_rod_estimate() {
    let cfg = DomainConfig { fixator: FixatorConfig { enabled: false, ..Default::default() }, ..coarse_config() };
    let domain = MacroDomain::cylinder(&cfg).unwrap();
    let load = LoadCase { axial: 14.7, tangential: [0.0, 0.0] };
    let model = MacroModel::new(domain, Materials::default(), load, 1.0, 0.0).unwrap();
    let u = solve(&model, 0.0, 1.0);

    // areas of the masked cross-sections in the first bone slab and the defect
    let d = &model.domain;
    let slab_area = |x: f64, region: Region| -> f64 {
        d.elements
            .iter()
            .enumerate()
            .filter(|(e, el)| el.region == region && {
                let c = d.element_center(*e);
                (c[0] - x).abs() < 1e-9
            })
            .map(|(_, el)| d.bases[el.basis].size[1] * d.bases[el.basis].size[2])
            .sum()
    };
    let x_bone = d.element_center(0)[0];
    let x_defect = d.element_center(d.defect.elements[0])[0];
    let (ac, am) = (slab_area(x_bone, Region::Cortical), slab_area(x_bone, Region::Marrow));
    let ad = slab_area(x_defect, Region::Defect);
    let (eb, em) = (model.materials.bone.youngs_modulus, model.materials.marrow.youngs_modulus);
    let estimate = 14.7 * (2.0 * cfg.bone_length / (eb * ac + em * am) + cfg.defect_length / (eb * ad));

    let (mut num, mut den) = (0.0, 0.0);
    for face in &d.loaded {
        let ux: f64 = face.nodes.iter().map(|&v| u[3 * v]).sum::<f64>() / 4.0;
        num += face.area * ux;
        den += face.area;
    }
    let measured = -num / den;
    let rel = (measured - estimate).abs() / estimate;
    assert!(rel < 0.10, "end shortening {measured:.4e} vs rod estimate {estimate:.4e} ({:.1}%)", 100.0 * rel);
}

#[test]
fn zero_horizon_keeps_the_initial_state() {
    let model = coarse_model(0.0);
    let design = ScaffoldDesign::uniform(model.defect_elements(), 0.21, 0.0);
    let traj = model.simulate(&design, Mode::N, &model.law).unwrap();
    assert_eq!(traj.steps(), 0);
    assert_eq!(traj.states.len(), 1);
    let d = &model.domain.defect;
    let s = &traj.states[0];
    for v in 0..d.nodes.len() {
        let expect = [
            if d.progenitor_source[v] { 0.3 } else { 0.0 },
            0.0,
            0.0,
            if d.osteoblast_source[v] { 1.0 } else { 0.0 },
        ];
        assert_eq!(s.at(v), expect);
    }
}

#[test]
fn empty_defect_without_sources_stays_empty() {
    let domain = bar_domain(vec![Region::Marrow, Region::Fixator, Region::Defect, Region::Defect, Region::Defect], 0.25, 0.25);
    assert!(domain.defect.progenitor_source.iter().chain(&domain.defect.osteoblast_source).all(|&s| !s));
    let model = MacroModel::new(domain, Materials::default(), LoadCase::default(), 1.0, 5.0).unwrap();
    let design = ScaffoldDesign::uniform(model.defect_elements(), 0.3, 0.0);
    let traj = model.simulate(&design, Mode::N, &model.law).unwrap();
    for s in &traj.states {
        assert!(s.fields.iter().flatten().all(|&c| c == 0.0));
    }
}

#[test]
fn no_bone_source_and_no_load_keeps_bone_out() {
    let domain = bar_domain(vec![Region::Marrow, Region::Defect, Region::Defect, Region::Defect], 0.25, 0.25);
    let model = MacroModel::new(domain, Materials::default(), LoadCase { axial: 0.0, tangential: [0.0, 0.0] }, 1.0, 10.0)
        .unwrap();
    let design = ScaffoldDesign::uniform(model.defect_elements(), 0.3, 0.0);
    let traj = model.simulate(&design, Mode::N, &model.law).unwrap();
    let ost = traj.final_state().fields[3].iter().fold(0.0, |m: f64, &c| m.max(c));
    assert!(ost < 1e-12, "osteoblasts appeared: {ost}");
    assert!(traj.final_state().fields[0].iter().any(|&c| c > 0.0));
}

#[test]
fn sources_persist_and_fields_stay_in_unit_box() {
    let model = coarse_model(6.0);
    let design = ScaffoldDesign::uniform(model.defect_elements(), 0.21, 0.0);
    let traj = model.simulate(&design, Mode::N, &model.law).unwrap();
    let d = &model.domain.defect;
    for s in &traj.states {
        assert!(s.fields.iter().flatten().all(|&c| (0.0..=1.0).contains(&c)));
        for v in 0..d.nodes.len() {
            if d.progenitor_source[v] {
                assert_eq!(s.fields[0][v], 0.3);
            }
            if d.osteoblast_source[v] {
                assert_eq!(s.fields[3][v], 1.0);
            }
        }
    }
    assert!(traj.max_total <= 1.0 + 1e-6, "max total {}", traj.max_total);
}

/// Fine-grid Crank-Nicolson solution of the 1-D heat equation with a fixed
/// value at `x = 0` and an insulated far end, sampled at `x`.
fn diffusion_reference(length: f64, d: f64, days: f64, source: f64, x: &[f64]) -> Vec<f64> {
    let m = 2000;
    let h = length / m as f64;
    let steps = 4000;
    let dt = days / steps as f64;
    let r = d * dt / (h * h);
    let mut c = vec![0.0; m + 1];
    c[0] = source;
    for _ in 0..steps {
        let n = m + 1;
        let mut rhs = vec![0.0; n];
        rhs[0] = source;
        for i in 1..n {
            let left = c[i - 1];
            let right = if i + 1 < n { c[i + 1] } else { c[i - 1] };
            rhs[i] = c[i] + 0.5 * r * (left - 2.0 * c[i] + right);
        }
        // Thomas algorithm
        let (mut a, mut b, mut cc) = (vec![-0.5 * r; n], vec![1.0 + r; n], vec![-0.5 * r; n]);
        a[0] = 0.0;
        b[0] = 1.0;
        cc[0] = 0.0;
        a[n - 1] = -r;
        for i in 1..n {
            let w = a[i] / b[i - 1];
            b[i] -= w * cc[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        c[n - 1] = rhs[n - 1] / b[n - 1];
        for i in (0..n - 1).rev() {
            c[i] = (rhs[i] - cc[i] * c[i + 1]) / b[i];
        }
    }
    x.iter()
        .map(|&p| {
            let s = p / h;
            let i = (s.floor() as usize).min(m - 1);
            let t = s - i as f64;
            (1.0 - t) * c[i] + t * c[i + 1]
        })
        .collect()
}

#[test]
fn pure_diffusion_matches_one_dimensional_profile() {
    let h = 0.01;
    let count = 30;
    let mut labels = vec![Region::Marrow];
    labels.extend(std::iter::repeat_n(Region::Defect, count));
    let domain = bar_domain(labels, h, 0.02);
    let days = 5.0;
    let dt = 0.05;
    let mut model = MacroModel::new(domain, Materials::default(), LoadCase::default(), dt, days).unwrap();
    model.rates = RateTable::inert();
    model.solver.transport_tol = 1e-12;
    let rho = 0.21;
    let design = ScaffoldDesign::uniform(model.defect_elements(), rho, 0.0);
    let traj = model.simulate(&design, Mode::N, &model.law).unwrap();
    let d_coef = model.law.k_mig * (1.0 - rho);

    let d = &model.domain.defect;
    let x: Vec<f64> = d.nodes.iter().map(|&v| model.domain.node_coords[v][0] - h).collect();
    let reference = diffusion_reference(count as f64 * h, d_coef, days, 0.3, &x);
    let pro = &traj.final_state().fields[0];
    let err = pro.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 3e-3, "max deviation {err}");

    // monotone decay away from the source
    let mut by_x: Vec<(f64, f64)> = x.iter().copied().zip(pro.iter().copied()).collect();
    by_x.sort_by(|a, b| a.0.total_cmp(&b.0));
    assert!(by_x.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-12));
}

fn reaction_oracle(rates: &RateTable, c: [f64; 4], s: f64, r: f64) -> [f64; 4] {
    // written out from the rate table: proliferation p_i a_i, apoptosis
    // q_i (1 - a_i), differentiation k_d m_j a_0
    let ch = rates.channels(s);
    let a = [ch[0], ch[1], ch[2], ch[3]];
    let p = [0.6, 0.55, 0.2, 0.3];
    let q = [-(0.95f64).ln(), -(0.95f64).ln(), -(0.9f64).ln(), -(0.84f64).ln()];
    let kd = -(0.7f64).ln();
    let diff = [kd * ch[4], kd * ch[5], kd * ch[6]];
    let free = 1.0 - c.iter().sum::<f64>() / (1.0 - r);
    let own = |i: usize| p[i] * a[i] * c[i] * free - q[i] * (1.0 - a[i]) * c[i];
    [
        own(0) - (diff[0] + diff[1] + diff[2]) * c[0],
        own(1) + diff[0] * c[0],
        own(2) + diff[1] * c[0],
        own(3) + diff[2] * c[0],
    ]
}

fn rk4(rates: &RateTable, mut c: [f64; 4], s: f64, r: f64, t: f64, steps: usize) -> [f64; 4] {
    let h = t / steps as f64;
    let add = |c: [f64; 4], k: [f64; 4], w: f64| std::array::from_fn(|i| c[i] + w * k[i]);
    for _ in 0..steps {
        let k1 = reaction_oracle(rates, c, s, r);
        let k2 = reaction_oracle(rates, add(c, k1, 0.5 * h), s, r);
        let k3 = reaction_oracle(rates, add(c, k2, 0.5 * h), s, r);
        let k4 = reaction_oracle(rates, add(c, k3, h), s, r);
        c = std::array::from_fn(|i| c[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
    c
}

#[test]
fn held_stimulus_follows_scalar_ode() {
    let domain = bar_domain(vec![Region::Marrow, Region::Fixator, Region::Defect], 0.1, 0.1);
    let dt = 0.02;
    let model = MacroModel::new(domain, Materials::default(), LoadCase::default(), dt, 10.0 * dt).unwrap();
    let rho = 0.21;
    let s = 2.0;
    let fields = fields_at(&model, rho, s, &model.rates);
    let zero = vec![Matrix3::zeros(); model.defect_elements()];
    let nodes = model.domain.defect.nodes.len();
    let mut state = CellState::zeros(nodes);
    state.fields[0] = vec![0.3; nodes];
    for _ in 0..10 {
        state = model.step_cells(&state, &fields, &zero).unwrap().1;
    }
    let oracle = rk4(&model.rates, [0.3, 0.0, 0.0, 0.0], s, rho, 10.0 * dt, 1000);
    for i in 0..4 {
        for v in 0..nodes {
            assert!((state.fields[i][v] - oracle[i]).abs() < 1e-3, "species {i}: {} vs {}", state.fields[i][v], oracle[i]);
        }
    }
    assert!(oracle[3] > 0.0);
    // the library reaction agrees with the written-out oracle
    let lib = reaction(&model.rates, &[0.2, 0.05, 0.03, 0.1], &model.rates.channels(s), rho);
    let ora = reaction_oracle(&model.rates, [0.2, 0.05, 0.03, 0.1], s, rho);
    for i in 0..4 {
        assert!((lib[i] - ora[i]).abs() < 1e-14);
    }
}

#[test]
fn migration_conserves_mass_without_reactions() {
    // a marrow slab clamps the distal face; the fixator slab keeps it away
    // from the defect so no source node exists
    let mut labels = vec![Region::Marrow; 9];
    labels.extend(vec![Region::Fixator; 9]);
    labels.extend(vec![Region::Defect; 4 * 3 * 3]);
    let lines = [vec![0.0, 0.1, 0.2, 0.3, 0.45, 0.5, 0.7], vec![0.0, 0.1, 0.2, 0.35], vec![0.0, 0.15, 0.2, 0.3]];
    let domain = MacroDomain::from_labels(lines, labels.into_iter().map(Some).collect(), false).unwrap();
    let mut model = MacroModel::new(domain, Materials::default(), LoadCase::default(), 1.0, 1.0).unwrap();
    model.rates = RateTable::inert();
    model.solver.transport_tol = 1e-13;
    let n = model.defect_elements();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let occupied: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..0.6)).collect();
    let bone = vec![0.0; n];
    let diffusivity: Vec<Matrix3<f64>> = occupied
        .iter()
        .map(|&r| model.law.diffusivity(r, 0.0) * 50.0)
        .collect();
    let nodes = model.domain.defect.nodes.len();
    let mut state = CellState::zeros(nodes);
    for f in &mut state.fields {
        for c in f.iter_mut() {
            *c = rng.gen_range(0.05..0.2);
        }
    }
    let fields = StepFields {
        occupied: occupied.clone(),
        bone,
        strain: vec![[0.0; 6]; n],
        response: vec![[0.0; CHANNELS + 1]; n],
    };
    let d = &model.domain.defect;
    for _ in 0..5 {
        let next = model.step_cells(&state, &fields, &diffusivity).unwrap().1;
        for i in 0..4 {
            let (before, after) = (state.integral(d, i), next.integral(d, i));
            assert!((before - after).abs() <= 1e-8 * before, "species {i}: {before} -> {after}");
        }
        assert_ne!(next.fields[0], state.fields[0]);
        state = next;
    }
}

#[test]
fn tabulated_modes_collapse_to_mode_n_with_the_mixture_source() {
    let model = coarse_model(4.0);
    let design = ScaffoldDesign::uniform(model.defect_elements(), 0.21, 0.005);
    let reference = model.simulate(&design, Mode::N, &model.law).unwrap();
    for mode in [Mode::Ed, Mode::Eds] {
        let traj = model.simulate(&design, mode, &model.law).unwrap();
        for (a, b) in reference.states.iter().zip(&traj.states) {
            for i in 0..4 {
                let diff = a.fields[i].iter().zip(&b.fields[i]).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                assert!(diff < 1e-6, "{mode:?} species {i}: {diff}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn element_bilinear_form_is_symmetric(
        size in proptest::array::uniform3(0.05f64..2.0),
        u in proptest::array::uniform24(-1.0f64..1.0),
        v in proptest::array::uniform24(-1.0f64..1.0),
        e in 1.0f64..1000.0,
        nu in 0.0f64..0.45,
    ) {
        let basis = HexBasis::new(size);
        let c: Matrix6<f64> = scaffold_core::tensor::IsotropicMaterial::new(e, nu).unwrap().voigt();
        let form = |a: &[f64; 24], b: &[f64; 24]| {
            let m = basis.elastic_bilinear(a, b);
            (0..6).flat_map(|i| (0..6).map(move |j| (i, j))).map(|(i, j)| c[(i, j)] * m[i][j]).sum::<f64>()
        };
        let (uv, vu) = (form(&u, &v), form(&v, &u));
        prop_assert!((uv - vu).abs() <= 1e-10 * (1.0 + uv.abs()));
        prop_assert!(form(&u, &u) >= -1e-10);
    }

    #[test]
    fn one_step_stays_in_unit_box(
        seed in any::<u64>(),
        s in 0.0f64..8.0,
        rho in 0.1f64..0.99,
    ) {
        let model = bar_domain_model();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nodes = model.domain.defect.nodes.len();
        let mut state = CellState::zeros(nodes);
        for f in &mut state.fields {
            for c in f.iter_mut() {
                *c = rng.gen_range(0.0..0.25);
            }
        }
        let fields = fields_at(&model, rho, s, &model.rates);
        let diffusivity: Vec<Matrix3<f64>> = vec![model.law.diffusivity(rho, 0.0); model.defect_elements()];
        let next = model.step_cells(&state, &fields, &diffusivity).unwrap().1;
        prop_assert!(next.fields.iter().flatten().all(|&c| (0.0..=1.0).contains(&c)));
    }
}

fn bar_domain_model() -> MacroModel {
    let domain = bar_domain(vec![Region::Marrow, Region::Defect, Region::Defect, Region::Cortical], 0.2, 0.2);
    MacroModel::new(domain, Materials::default(), LoadCase::default(), 1.0, 1.0).unwrap()
}
