#![allow(clippy::needless_range_loop)]

use std::sync::Arc;

use algebromech::algebroid::{lie_algebra, StructureTensor};
use algebromech::catalog::{self, build_morphism, Params};
use algebromech::dynamics::{integrate, Method, PontryaginState, State};
use algebromech::lagrangian::LagrangianModel;
use algebromech::reduction::{
    check_morphism, hp_reduce_compare, reduce_compare, AlgebroidMorphism, CompareSettings, Verdict,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dv(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

fn random_initial(name: &str, rng: &mut ChaCha8Rng) -> State {
    match name {
        "cyclic_oscillator" => State::from_slices(
            0.0,
            &[rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0)],
            &[rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0)],
        ),
        _ => State::from_slices(
            0.0,
            &[
                rng.random_range(-3.0..3.0),
                rng.random_range(1.2..1.9),
                rng.random_range(-3.0..3.0),
            ],
            &[
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.3..0.3),
            ],
        ),
    }
}

#[test]
fn reduction_commutes_and_converges_at_fourth_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for (name, system) in [
        ("cyclic_quotient", "cyclic_oscillator"),
        ("rigid_body_quotient", "rigid_body_chart"),
    ] {
        let mb = build_morphism(name, system, &Params::new()).unwrap();
        for _ in 0..5 {
            let s0 = random_initial(system, &mut rng);
            let dev = |dt: f64| {
                reduce_compare(
                    &mb.source.lagrangian,
                    &mb.target.lagrangian,
                    &mb.morphism,
                    &s0,
                    1.0,
                    dt,
                    &CompareSettings::default(),
                )
                .unwrap()
                .max_deviation
            };
            let (coarse, fine) = (dev(0.05), dev(0.025));
            // C dt^4 + floor, with C calibrated on the coarse run
            let c = coarse / 0.05f64.powi(4);
            assert!(
                fine <= c * 0.025f64.powi(4) * 0.2 + 1e-8,
                "{name}: {coarse:e} -> {fine:e}"
            );
            if fine > 1e-11 {
                let ratio = coarse / fine;
                assert!((10.0..24.0).contains(&ratio), "{name}: ratio {ratio}");
            }
        }
    }
}

#[test]
fn cyclic_quotient_conserves_the_reduced_momentum() {
    let mb = build_morphism("cyclic_quotient", "cyclic_oscillator", &Params::new()).unwrap();
    let t0 = mb.morphism.push_state(&mb.source.initial).unwrap();
    let traj = integrate(&mb.target.lagrangian, &t0, 10.0, 1e-3, Method::Rk4).unwrap();
    let v0 = t0.xi[1];
    assert!(traj.states.iter().all(|s| (s.xi[1] - v0).abs() <= 1e-10));
}

#[test]
fn hp_and_elp_reduction_deviations_are_comparable() {
    let mb = build_morphism("rigid_body_quotient", "rigid_body_chart", &Params::new()).unwrap();
    let s0 = mb.source.initial.clone();
    let p0 = mb.source.lagrangian.grad_xi(&s0.q, &s0.xi).unwrap();
    let settings = CompareSettings::default();
    let (src, tgt) = (&mb.source.lagrangian, &mb.target.lagrangian);
    let elp = reduce_compare(src, tgt, &mb.morphism, &s0, 1.0, 0.02, &settings).unwrap();
    let hp0 = PontryaginState::new(0.0, s0.q.clone(), s0.xi.clone(), p0);
    let hp = hp_reduce_compare(src, tgt, &mb.morphism, &hp0, 1.0, 0.02, &settings).unwrap();
    let ratio = hp.max_deviation / elp.max_deviation;
    assert!(
        (0.1..10.0).contains(&ratio),
        "hp {:e} vs elp {:e}",
        hp.max_deviation,
        elp.max_deviation
    );
    assert!(hp.source.constraint_max.unwrap() <= 1e-10);
}

#[test]
fn catalog_morphisms_are_anchor_compatible() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for m in catalog::list_morphisms() {
        let system = if m.source == "any" { "wong_abelian" } else { m.source };
        let mb = build_morphism(m.name, system, &Params::new()).unwrap();
        let pts: Vec<_> = (0..100).map(|_| mb.source.algebroid.sample_point(&mut rng)).collect();
        let check = check_morphism(&mb.morphism, &pts).unwrap();
        assert!(check.anchor_compat <= 1e-12, "{}", m.name);
    }
}

#[test]
fn non_bracket_compatible_map_is_flagged() {
    // identity fiber map from so(3) to the abelian algebra R^3: anchors agree trivially and the
    // rigid body Lagrangian is invariant, but the flows differ
    let so3 = Arc::new(lie_algebra(StructureTensor::so3()).unwrap());
    let abelian = Arc::new(lie_algebra(StructureTensor::zeros(3)).unwrap());
    let ell = |w: &DVector<f64>| 0.5 * (w[0] * w[0] + 2.0 * w[1] * w[1] + 3.0 * w[2] * w[2]);
    let src = LagrangianModel::builder("so3 body", Arc::clone(&so3), move |_, w| ell(w)).build();
    let tgt = LagrangianModel::builder("abelian body", Arc::clone(&abelian), move |_, w| ell(w)).build();
    let mor = AlgebroidMorphism::new(
        "forget bracket",
        so3,
        abelian,
        |_| DVector::zeros(0),
        |_| DMatrix::identity(3, 3),
    )
    .with_base_jacobian(|_| DMatrix::zeros(0, 0))
    .fiberwise_invertible(true);
    let s0 = State::from_slices(0.0, &[], &[1.0, 1.0, 1.0]);
    let r = reduce_compare(&src, &tgt, &mor, &s0, 1.0, 1e-2, &CompareSettings::default()).unwrap();
    assert!(r.invariance <= 1e-12 && r.anchor_compat == 0.0);
    assert!(r.max_deviation > 0.1);
    assert_eq!(r.verdict(1e-6), Verdict::BracketSuspect);
}

#[test]
fn singular_fiber_map_cannot_push_momenta() {
    let so3 = Arc::new(lie_algebra(StructureTensor::so3()).unwrap());
    let mor = AlgebroidMorphism::new(
        "rank one",
        Arc::clone(&so3),
        so3,
        |_| DVector::zeros(0),
        |_| DMatrix::from_element(3, 3, 1.0),
    );
    let s = PontryaginState::new(0.0, dv(&[]), dv(&[1.0, 0.0, 0.0]), dv(&[1.0, 0.0, 0.0]));
    assert!(mor.push_pontryagin(&s).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn nonabelian_wong_conserves_energy_and_charge_norm(
        x in prop::collection::vec(-0.5f64..0.5, 2),
        v in prop::collection::vec(-1.0f64..1.0, 5),
    ) {
        let b = catalog::build("wong_so3", &Params::new()).unwrap();
        let traj = integrate(&b.lagrangian, &State::from_slices(0.0, &x, &v), 2.0, 1e-3, Method::Rk4).unwrap();
        let d = algebromech::dynamics::diagnostics(&b.lagrangian, &traj, &b.invariants).unwrap();
        prop_assert!(d.energy_max_abs_drift <= 1e-9, "{}", d.energy_max_abs_drift);
        let charge = d.invariant("charge_norm_squared").unwrap();
        prop_assert!(charge.max_abs_drift <= 1e-9, "{}", charge.max_abs_drift);
    }
}
