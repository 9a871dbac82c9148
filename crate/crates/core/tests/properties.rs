use ndarray::Array2;
use proptest::prelude::*;

use zermelo::closedloop::{exact_fidelity, ghz_pair_basis, LoopConfig};
use zermelo::magnus::{f_integral, kappa_closed_form};
use zermelo::model::assemble_total_hamiltonian;
use zermelo::operator::gates::{hadamard, toffoli};
use zermelo::propagate::{ordered_exp, zermelo_propagator, zermelo_propagator_right, SlicingPlan};
use zermelo::rng::random_hermitian;
use zermelo::synthesize::{
    distance, protocol_unitary, Protocol, ProtocolKind, Segment, SynthesisProblem,
};
use zermelo::{
    matrix_exp, scenarios, tensor, BathSpec, Environment, LocalSystem, Operator, Rng, SystemSpec,
    C64,
};

fn herm(dim: usize, seed: u64) -> Operator {
    random_hermitian(dim, &mut Rng::new(seed))
}

fn integral(dim: usize, seed: u64) -> Operator {
    let mut rng = Rng::new(seed);
    let a = Array2::from_shape_fn((dim, dim), |_| {
        C64::new(
            rng.uniform(-50.0, 50.0).round(),
            rng.uniform(-50.0, 50.0).round(),
        )
    });
    Operator::from_array(a).unwrap()
}

fn unitary(dim: usize, seed: u64) -> Operator {
    matrix_exp(&herm(dim, seed).scale_re(4.0), C64::new(0.0, -1.0)).unwrap()
}

fn random_bath(seed: u64, n: usize, omega: f64) -> BathSpec {
    let mut rng = Rng::new(seed);
    let a = BathSpec::random_coupling(n, 3, 0.7, &mut rng);
    BathSpec::new(omega, vec![1, 2, 3], a, 1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tensor_is_associative(sa in any::<u64>(), sb in any::<u64>(), sc in any::<u64>()) {
        // Exact when every product is representable.
        let (a, b, c) = (integral(2, sa), integral(3, sb), integral(2, sc));
        prop_assert_eq!(tensor(&a, &tensor(&b, &c)), tensor(&tensor(&a, &b), &c));
        // Otherwise the two groupings round differently in the last place.
        let (a, b, c) = (herm(2, sa), herm(3, sb), herm(2, sc));
        let d = &tensor(&a, &tensor(&b, &c)) - &tensor(&tensor(&a, &b), &c);
        prop_assert!(d.max_abs() <= 4.0 * f64::EPSILON);
    }

    #[test]
    fn exponential_group_law(seed in any::<u64>(), t in -10.0..10.0f64, s in -10.0..10.0f64) {
        let h = herm(4, seed);
        let lhs = matrix_exp(&h, C64::new(0.0, -t)).unwrap().dot(&matrix_exp(&h, C64::new(0.0, -s)).unwrap());
        let rhs = matrix_exp(&h, C64::new(0.0, -(t + s))).unwrap();
        prop_assert!((&lhs - &rhs).max_abs() < 1e-10);
        prop_assert!(rhs.is_unitary(1e-10));
    }

    #[test]
    fn hs_norm_is_multiplicative_and_unitarily_invariant(sa in any::<u64>(), sb in any::<u64>()) {
        let (a, b) = (herm(3, sa).scale_re(1.7), herm(2, sb));
        let lhs = tensor(&a, &b).hs_norm();
        prop_assert!((lhs - a.hs_norm() * b.hs_norm()).abs() < 1e-12 * lhs.max(1.0));
        let (u, v) = (unitary(3, sa ^ 1), unitary(3, sb ^ 2));
        prop_assert!((u.dot(&a).dot(&v).hs_norm() - a.hs_norm()).abs() < 1e-12);
    }

    #[test]
    fn embedded_couplings_commute(seed in any::<u64>()) {
        let exact = SystemSpec::new(
            (0..3)
                .map(|j| {
                    let a = integral(2, seed ^ j);
                    LocalSystem::new(Operator::identity(2), &a + &a.adjoint()).unwrap()
                })
                .collect(),
        )
        .unwrap();
        let sys = SystemSpec::random_qubits(3, &mut Rng::new(seed));
        for j in 0..3 {
            for k in (0..3).filter(|&k| k != j) {
                let c = exact.embedded_coupling(j).commutator(&exact.embedded_coupling(k));
                prop_assert_eq!(c.max_abs(), 0.0);
                let c = sys.embedded_coupling(j).commutator(&sys.embedded_coupling(k));
                prop_assert!(c.max_abs() <= 2.0 * f64::EPSILON);
            }
        }
    }

    #[test]
    fn total_hamiltonian_is_linear_in_each_strength(seed in any::<u64>(), a in 0.0..3.0f64, b in 0.0..3.0f64) {
        let (sys, bath) = scenarios::refactorization(seed);
        let env = Environment::Bosonic(bath.with_cutoff(2));
        let h = |m0: f64| assemble_total_hamiltonian(&sys, &env, &[m0, 0.4]).unwrap();
        let mix = &h(a).scale_re(0.25) + &h(b).scale_re(0.75);
        prop_assert!((&mix - &h(0.25 * a + 0.75 * b)).max_abs() < 1e-12);
    }

    #[test]
    fn kappa_is_symmetric_and_scales(seed in any::<u64>(), c in 0.1..3.0f64, w in 0.3..4.0f64) {
        let bath = random_bath(seed, 3, w);
        let k = kappa_closed_form(&bath).unwrap();
        prop_assert!(k.is_symmetric(0.0));
        let scaled_a = BathSpec::new(w, bath.harmonics.clone(), bath.coupling.mapv(|z| z * c), 1).unwrap();
        let scaled_w = BathSpec::new(c * w, bath.harmonics.clone(), bath.coupling.clone(), 1).unwrap();
        let ka = kappa_closed_form(&scaled_a).unwrap();
        let kw = kappa_closed_form(&scaled_w).unwrap();
        for j in 0..3 {
            for l in 0..3 {
                let base = k.get(j, l);
                prop_assert!((ka.get(j, l) - c * c * base).abs() < 1e-12 * (1.0 + base.abs()));
                prop_assert!((kw.get(j, l) - base / c).abs() < 1e-12 * (1.0 + base.abs()));
            }
        }
    }

    #[test]
    fn f_integral_is_hermitian(seed in any::<u64>(), t in 0.01..20.0f64) {
        let bath = random_bath(seed, 2, 1.3).with_cutoff(3);
        for j in 0..2 {
            prop_assert!(f_integral(&bath, j, t).unwrap().is_hermitian(1e-12));
        }
    }

    #[test]
    fn zermelo_factorizations_agree(seed in any::<u64>(), t in 0.0..5.0f64) {
        let h0 = herm(4, seed);
        let hc = herm(4, seed ^ 7);
        let l = zermelo_propagator(&h0, &hc, t).unwrap();
        let r = zermelo_propagator_right(&h0, &hc, t).unwrap();
        prop_assert!((&l - &r).max_abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn ordered_exponential_is_unitary(seed in any::<u64>(), steps in 1usize..200) {
        let (a, b) = (herm(4, seed), herm(4, seed ^ 3));
        let plan = SlicingPlan::new(2.0, steps).unwrap();
        let u = ordered_exp(|t| &a + &b.scale_re(t.sin()), &plan).unwrap();
        prop_assert!(u.is_unitary(1e-9));
    }

    #[test]
    fn protocols_are_unitary_and_phase_blind(seed in any::<u64>(), phi in -3.2..3.2f64) {
        let (sys, bath) = scenarios::three_qubit_synthesis(seed, false);
        let k = kappa_closed_form(&bath).unwrap();
        let p = SynthesisProblem::new(sys, k, toffoli(), 8, ProtocolKind::Synchronous).unwrap();
        let mut rng = Rng::new(seed ^ 11);
        let segments = (0..4)
            .map(|_| Segment { tau: rng.uniform(0.0, 3.0), mu: vec![rng.uniform(0.0, 2.0); 3] })
            .collect();
        let u = protocol_unitary(&p, &Protocol { kind: ProtocolKind::Synchronous, segments }).unwrap();
        prop_assert!(u.is_unitary(1e-9));
        let rotated = u.scale(C64::from_polar(1.0, phi));
        let d0 = distance(&u, &toffoli(), true).unwrap();
        let d1 = distance(&rotated, &toffoli(), true).unwrap();
        prop_assert!((d0 - d1).abs() < 1e-12);
    }

    #[test]
    fn exact_fidelity_is_a_probability(seed in any::<u64>(), dfs in any::<bool>()) {
        let (sys, env) = scenarios::closed_loop(seed);
        let (target, sub) = if dfs { (hadamard(), Some(ghz_pair_basis(3))) } else { (toffoli(), None) };
        let c = LoopConfig::new(sys, env, target, sub);
        let f = exact_fidelity(&unitary(24, seed), &c).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
    }

    #[test]
    fn masked_kappa_respects_zeros(seed in any::<u64>()) {
        let bath = random_bath(seed, 3, 1.0);
        let mut mask = Array2::from_elem((3, 3), true);
        mask[[0, 2]] = false;
        mask[[2, 0]] = false;
        let k = kappa_closed_form(&bath).unwrap().masked(&mask).unwrap();
        prop_assert_eq!(k.get(0, 2), 0.0);
        prop_assert_eq!(k.get(2, 0), 0.0);
        prop_assert!(k.is_symmetric(0.0));
    }
}
