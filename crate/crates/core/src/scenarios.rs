//! Seeded builders for the standard experiment setups. The bundled CLI spec
//! files are generated from these, and the acceptance suite uses them
//! directly.

use ndarray::Array2;

use crate::model::{BathSpec, LocalSystem, RandomEnvironmentSpec, SystemSpec};
use crate::operator::C64;
use crate::rng::{random_hermitian, Rng};

/// Bath frequency of the refactorization setups.
pub const REFACTORIZATION_OMEGA: f64 = 5.0;
/// Largest coupling magnitude `|A_jl|` of the refactorization setups.
pub const REFACTORIZATION_MAX_COUPLING: f64 = 0.5;
pub const REFACTORIZATION_CUTOFF: usize = 6;

/// Two random qubits sharing modes `l = 1, 2` at `ω = 5`, cutoff 6.
pub fn refactorization(seed: u64) -> (SystemSpec, BathSpec) {
    let mut rng = Rng::new(seed);
    let sys = SystemSpec::random_qubits(2, &mut rng);
    let a = BathSpec::random_coupling(2, 2, REFACTORIZATION_MAX_COUPLING, &mut rng);
    let bath = BathSpec::new(REFACTORIZATION_OMEGA, vec![1, 2], a, REFACTORIZATION_CUTOFF)
        .expect("valid bath");
    (sys, bath)
}

/// Three qubits on a three-mode bath (`ω = 1`, harmonics 1..3) with complex
/// Gaussian couplings of scale 0.5. With `identical`, every qubit has the same
/// wind, the same coupling operator and the same row of `A`.
pub fn three_qubit_synthesis(seed: u64, identical: bool) -> (SystemSpec, BathSpec) {
    let mut rng = Rng::new(seed);
    let (sys, a) = if identical {
        let sys = SystemSpec::identical_random_qubits(3, &mut rng);
        let row: Vec<C64> = (0..3).map(|_| rng.complex_normal() * 0.5).collect();
        (sys, Array2::from_shape_fn((3, 3), |(_, l)| row[l]))
    } else {
        let sys = SystemSpec::random_qubits(3, &mut rng);
        (
            sys,
            Array2::from_shape_fn((3, 3), |_| rng.complex_normal() * 0.5),
        )
    };
    // Synthesis only needs κ; a one-photon cutoff keeps spec files small.
    let bath = BathSpec::new(1.0, vec![1, 2, 3], a, 1).expect("valid bath");
    (sys, bath)
}

/// Two-system bath for the κ cross-checks: `ω ~ U(0.5, 3)`, harmonics 1..3,
/// couplings of magnitude at most 0.5, cutoff 4. Draws from `rng` so callers
/// can keep using it afterwards.
pub fn kappa_bath(rng: &mut Rng) -> BathSpec {
    let omega = rng.uniform(0.5, 3.0);
    let a = BathSpec::random_coupling(2, 3, 0.5, rng);
    BathSpec::new(omega, vec![1, 2, 3], a, 4).expect("valid bath")
}

/// Three random qubits and a hidden three-level environment in the
/// maximally mixed state.
pub fn closed_loop(seed: u64) -> (SystemSpec, RandomEnvironmentSpec) {
    let mut rng = Rng::new(seed);
    let sys = SystemSpec::random_qubits(3, &mut rng);
    let env = RandomEnvironmentSpec::random(3, 3, &mut rng);
    (sys, env)
}

/// Single qubit with arbitrary operators; convenience for small examples.
pub fn random_qubit(rng: &mut Rng) -> LocalSystem {
    LocalSystem {
        h: random_hermitian(2, rng),
        s: random_hermitian(2, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builders_are_deterministic() {
        let (s1, b1) = refactorization(3);
        let (s2, b2) = refactorization(3);
        assert_eq!(b1.coupling, b2.coupling);
        assert_eq!(s1.systems()[1].h, s2.systems()[1].h);
        assert!(b1
            .coupling
            .iter()
            .all(|z| z.norm() <= REFACTORIZATION_MAX_COUPLING));
    }

    #[test]
    fn identical_setup_has_equal_rows() {
        let (sys, bath) = three_qubit_synthesis(1, true);
        for j in 1..3 {
            assert_eq!(sys.systems()[j].h, sys.systems()[0].h);
            assert_eq!(bath.coupling.row(j), bath.coupling.row(0));
        }
        let (sys, _) = three_qubit_synthesis(1, false);
        assert_ne!(sys.systems()[1].h, sys.systems()[0].h);
    }
}
