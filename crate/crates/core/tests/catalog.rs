#![allow(clippy::needless_range_loop)]

use algebromech::catalog::{self, build, build_morphism, entry, list, list_morphisms, Params};
use algebromech::Error;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn params(kv: &[(&str, f64)]) -> Params {
    kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

#[test]
fn catalog_has_the_reference_systems() {
    let names: Vec<_> = list().iter().map(|e| e.name).collect();
    assert!(names.len() >= 6);
    for n in [
        "harmonic_oscillator",
        "rigid_body",
        "cyclic_oscillator",
        "wong_abelian",
        "wong_so3",
        "central_force_routh",
    ] {
        assert!(names.contains(&n), "{n}");
    }
    assert!(list_morphisms().len() >= 2);
}

#[test]
fn every_entry_builds_with_declared_dimensions() {
    for e in list() {
        let b = build(e.name, &Params::new()).unwrap();
        assert_eq!((b.algebroid.base_dim(), b.algebroid.fiber_dim()), e.dims, "{}", e.name);
        assert_eq!(b.initial.q.len(), e.dims.0);
        assert_eq!(b.initial.xi.len(), e.dims.1);
        assert_eq!(b.routhian.is_some(), e.routhian);
        assert_eq!(b.params.len(), e.params.len());
    }
}

#[test]
fn unknown_names_and_parameters_are_input_errors() {
    assert!(matches!(build("pendulum", &Params::new()), Err(Error::Input(_))));
    assert!(matches!(entry("pendulum"), Err(Error::Input(_))));
    assert!(matches!(
        build("rigid_body", &params(&[("I4", 1.0)])),
        Err(Error::Input(_))
    ));
    assert!(build("rigid_body", &params(&[("I1", -1.0)])).is_err());
    assert!(build("harmonic_oscillator", &params(&[("k", f64::NAN)])).is_err());
    assert!(build_morphism("cyclic_quotient", "rigid_body", &Params::new()).is_err());
}

#[test]
fn rigid_body_reduced_lagrangian_is_half_inertia_quadratic() {
    let b = build("rigid_body", &params(&[("I1", 2.0), ("I2", 5.0), ("I3", 7.0)])).unwrap();
    let w = DVector::from_vec(vec![0.3, -1.0, 0.5]);
    let expected = 0.5 * (2.0 * 0.09 + 5.0 * 1.0 + 7.0 * 0.25);
    let l = b.lagrangian.value(&DVector::zeros(0), &w).unwrap();
    assert!((l - expected).abs() < 1e-15);
    let m = b.lagrangian.mass_matrix(&DVector::zeros(0), &w).unwrap().matrix;
    assert!((m[(1, 1)] - 5.0).abs() < 1e-12 && m[(0, 1)].abs() < 1e-12);
}

#[test]
fn wong_abelian_bracket_closes_on_the_field() {
    let b = build("wong_abelian", &params(&[("B", 1.5)])).unwrap();
    let c = b.algebroid.structure_eval(&DVector::from_vec(vec![0.2, 0.9])).unwrap();
    assert!((c.get(2, 0, 1) + 1.5).abs() < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let r = b.algebroid.sample_structure_identities(&mut rng, 100, 1e-4).unwrap();
    assert!(r.max() <= 1e-12, "{r:?}");
}

#[test]
fn rigid_chart_kinematics_invert_the_default_state() {
    let b = build("rigid_body_chart", &Params::new()).unwrap();
    let k = catalog::euler_kinematic_matrix(&b.initial.q);
    let w = k * nalgebra::Vector3::new(b.initial.xi[0], b.initial.xi[1], b.initial.xi[2]);
    assert!((w - nalgebra::Vector3::new(1.0, 1.0, 1.0)).amax() < 1e-14, "{w}");
    let r = catalog::euler_rotation(&b.initial.q);
    assert!((r.transpose() * r - nalgebra::Matrix3::identity()).amax() < 1e-14);
}
