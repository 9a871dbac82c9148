//! Second-order Magnus machinery for a linearly coupled bosonic bath.
//!
//! Because `[B_j(t1), B_k(t2)]` is a c-number, the Magnus series of the
//! interaction-picture propagator stops after two terms:
//!
//! `H_eff(t) = Σ_j μ_j S_j ⊗ F_j(t) + Σ_jk μ_j μ_k κ_jk(t) S_j S_k`
//!
//! with `F_j(t) = (1/t)∫₀ᵗ B_j(τ)dτ` and
//! `κ_jk(t) = (1/t)∫₀ᵗdt1∫₀^{t1}dt2 Im Σ_l A_jl A_kl* e^{-iω_l(t1-t2)}`.

use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Result};
use crate::model::{BathSpec, Environment, SystemSpec};
use crate::operator::{tensor, Operator, C64, I, ZERO};

/// Absolute error target for the κ double integral.
pub const KAPPA_QUADRATURE_TOL: f64 = 1e-10;

/// Symmetric matrix of bath-induced pairwise couplings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaMatrix {
    pub entries: Array2<f64>,
    /// Bath frequency the matrix was computed for (0 when synthetic).
    pub omega: f64,
}

impl KappaMatrix {
    pub fn new(entries: Array2<f64>, omega: f64) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(invalid("kappa matrix must be square"));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(invalid("kappa entries must be finite"));
        }
        let k = Self { entries, omega };
        if !k.is_symmetric(1e-12) {
            return Err(invalid("kappa matrix must be symmetric"));
        }
        Ok(k)
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            entries: Array2::zeros((n, n)),
            omega: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.entries[[j, k]]
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.n();
        (0..n).all(|j| (0..n).all(|k| (self.entries[[j, k]] - self.entries[[k, j]]).abs() <= tol))
    }

    /// Entries outside the allowed topology are set to zero.
    pub fn masked(&self, mask: &Array2<bool>) -> Result<Self> {
        check_dim(self.n(), mask.nrows())?;
        check_dim(self.n(), mask.ncols())?;
        let mut entries = self.entries.clone();
        for ((j, k), v) in entries.indexed_iter_mut() {
            if !mask[[j, k]] {
                *v = 0.0;
            }
        }
        Ok(Self {
            entries,
            omega: self.omega,
        })
    }

    /// `κ_jk μ_j μ_k`.
    pub fn scaled_by(&self, mu: &[f64]) -> Result<Self> {
        check_dim(self.n(), mu.len())?;
        let entries = Array2::from_shape_fn((self.n(), self.n()), |(j, k)| {
            self.entries[[j, k]] * mu[j] * mu[k]
        });
        Ok(Self {
            entries,
            omega: self.omega,
        })
    }

    /// `j,k,kappa` rows, one per entry.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("j,k,kappa\n");
        for ((j, k), x) in self.entries.indexed_iter() {
            out.push_str(&format!("{j},{k},{x:e}\n"));
        }
        out
    }
}

/// `κ = Re(A Ω A†)` with `Ω_ll = -1/(l ω)`.
pub fn kappa_closed_form(bath: &BathSpec) -> Result<KappaMatrix> {
    bath.validate()?;
    let n = bath.n_systems();
    let mut entries = Array2::zeros((n, n));
    for j in 0..n {
        for k in 0..n {
            let mut acc = 0.0;
            for l in 0..bath.n_modes() {
                let z = bath.coupling[[j, l]] * bath.coupling[[k, l]].conj();
                acc -= z.re / bath.mode_frequency(l);
            }
            entries[[j, k]] = acc;
        }
    }
    // Re(z) and Re(z*) agree exactly, so the result is symmetric bit for bit.
    Ok(KappaMatrix {
        entries,
        omega: bath.omega,
    })
}

/// Romberg integration of a smooth integrand on `[a, b]`.
///
/// `min_intervals` forces enough initial resolution that oscillatory
/// integrands are not aliased into a false early convergence.
pub fn romberg(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, min_intervals: usize) -> f64 {
    const MAX_LEVELS: usize = 22;
    let h0 = b - a;
    if h0 == 0.0 {
        return 0.0;
    }
    let mut prev: Vec<f64> = vec![0.5 * h0 * (f(a) + f(b))];
    let mut intervals = 1usize;
    for level in 1..MAX_LEVELS {
        let h = h0 / (2 * intervals) as f64;
        let mid: f64 = (0..intervals).map(|i| f(a + (2 * i + 1) as f64 * h)).sum();
        intervals *= 2;
        let mut row = Vec::with_capacity(level + 1);
        row.push(0.5 * prev[0] + h * mid);
        let mut factor = 1.0;
        for m in 1..=level {
            factor *= 4.0;
            let r = row[m - 1] + (row[m - 1] - prev[m - 1]) / (factor - 1.0);
            row.push(r);
        }
        let converged = (row[level] - prev[level - 1]).abs() <= tol;
        prev = row;
        if converged && intervals >= min_intervals {
            break;
        }
    }
    *prev.last().expect("at least one level")
}

/// Scalar kernel `Im Σ_l A_jl A_kl* e^{-iω_l s}`; the commutator is `2i` times this.
fn kernel(bath: &BathSpec, j: usize, k: usize, s: f64) -> f64 {
    bath.commutator_kernel(j, k, s, 0.0).im / 2.0
}

fn oscillation_intervals(bath: &BathSpec, t: f64) -> usize {
    let fastest = (0..bath.n_modes())
        .map(|l| bath.mode_frequency(l))
        .fold(0.0, f64::max);
    let periods = fastest * t / (2.0 * PI);
    (16.0 * periods.max(1.0)).ceil() as usize
}

/// `κ_jk(t)` by nested adaptive quadrature of the analytic c-number kernel.
pub fn kappa_quadrature(bath: &BathSpec, j: usize, k: usize, t: f64) -> Result<f64> {
    bath.validate()?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid("kappa quadrature needs t > 0"));
    }
    if j >= bath.n_systems() || k >= bath.n_systems() {
        return Err(invalid("system index out of range"));
    }
    let n_min = oscillation_intervals(bath, t);
    // Error budget: the outer integral is divided by t afterwards.
    let outer_tol = 0.1 * KAPPA_QUADRATURE_TOL * t;
    let inner_tol = 0.01 * KAPPA_QUADRATURE_TOL;
    let inner = |t1: f64| {
        let n_in = ((n_min as f64) * t1 / t).ceil().max(2.0) as usize;
        romberg(|t2| kernel(bath, j, k, t1 - t2), 0.0, t1, inner_tol, n_in)
    };
    Ok(romberg(inner, 0.0, t, outer_tol, n_min) / t)
}

/// Full `κ(t)` matrix by quadrature. Off the refactorization grid the matrix
/// need not be symmetric; only its symmetric part enters `H_eff`.
pub fn kappa_quadrature_matrix(bath: &BathSpec, t: f64) -> Result<Array2<f64>> {
    let n = bath.n_systems();
    let mut out = Array2::zeros((n, n));
    for j in 0..n {
        for k in 0..n {
            out[[j, k]] = kappa_quadrature(bath, j, k, t)?;
        }
    }
    Ok(out)
}

/// `F_j(t) = (1/t)∫₀ᵗ B_j(τ)dτ`, integrated analytically per mode.
pub fn f_integral(bath: &BathSpec, j: usize, t: f64) -> Result<Operator> {
    bath.validate()?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid("F integral needs t > 0"));
    }
    if j >= bath.n_systems() {
        return Err(invalid("system index out of range"));
    }
    let mut out = Operator::zeros(bath.dim());
    for l in 0..bath.n_modes() {
        let w = bath.mode_frequency(l);
        let phase = (C64::new(1.0, 0.0) - (-I * w * t).exp()) / (I * w);
        let c = bath.coupling[[j, l]] * phase / t;
        if c == ZERO {
            continue;
        }
        let b = bath.annihilation(l);
        out += &b.scale(c);
        out += &b.adjoint().scale(c.conj());
    }
    Ok(out)
}

/// `[Δt, 2Δt, …, m_max Δt]` with `Δt = 2π/ω`.
pub fn refactorization_times(bath: &BathSpec, m_max: usize) -> Vec<f64> {
    let dt = 2.0 * PI / bath.omega;
    (1..=m_max).map(|m| m as f64 * dt).collect()
}

/// Ground-state energy `ω/2` of the fundamental oscillator.
pub fn ground_state_energy(bath: &BathSpec) -> f64 {
    bath.omega / 2.0
}

/// `t_min = π/E₀`.
pub fn speed_limit(bath: &BathSpec) -> f64 {
    speed_limit_at(bath.omega)
}

/// Speed limit of a bath with frequency `omega`.
pub fn speed_limit_at(omega: f64) -> f64 {
    PI / (omega / 2.0)
}

/// `H_eff(t)` on the joint register.
pub fn effective_hamiltonian(
    sys: &SystemSpec,
    env: &Environment,
    mu: &[f64],
    t: f64,
) -> Result<Operator> {
    let bath = env.as_bosonic()?;
    check_dim(sys.len(), bath.n_systems())?;
    check_dim(sys.len(), mu.len())?;
    let kappa = kappa_quadrature_matrix(bath, t)?;
    let mut out = Operator::zeros(sys.dim() * bath.dim());
    for j in 0..sys.len() {
        if mu[j] != 0.0 {
            out += &tensor(&sys.embedded_coupling(j), &f_integral(bath, j, t)?).scale_re(mu[j]);
        }
    }
    let scaled = Array2::from_shape_fn(kappa.dim(), |(j, k)| kappa[[j, k]] * mu[j] * mu[k]);
    let pair = sys.pairwise_coupling(&scaled)?;
    out += &tensor(&pair, &Operator::identity(bath.dim()));
    Ok(out.hermitian_part())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LocalSystem;
    use crate::operator::gates::{sigma_x, sigma_z};
    use crate::rng::Rng;

    fn random_bath(seed: u64, cutoff: usize) -> BathSpec {
        let mut rng = Rng::new(seed);
        let a = BathSpec::random_coupling(2, 2, 0.5, &mut rng);
        BathSpec::new(1.7, vec![1, 2], a, cutoff).unwrap()
    }

    #[test]
    fn romberg_polynomial_and_trig() {
        let v = romberg(|x| x * x, 0.0, 3.0, 1e-13, 1);
        assert!((v - 9.0).abs() < 1e-12);
        let v = romberg(f64::sin, 0.0, PI, 1e-13, 4);
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn romberg_does_not_alias_on_nodes() {
        // sin(8x) vanishes at every node of a coarse grid on [0, π].
        let v = romberg(|x| (8.0 * x).sin().powi(2), 0.0, PI, 1e-12, 64);
        assert!((v - PI / 2.0).abs() < 1e-10);
    }

    #[test]
    fn zero_coupling_gives_zero_kappa() {
        let bath = BathSpec::new(1.0, vec![1], Array2::zeros((3, 1)), 2).unwrap();
        assert_eq!(
            kappa_closed_form(&bath).unwrap().entries,
            Array2::<f64>::zeros((3, 3))
        );
    }

    #[test]
    fn single_real_mode_closed_form() {
        let g = [0.3, -0.2];
        let a = Array2::from_shape_fn((2, 1), |(j, _)| C64::new(g[j], 0.0));
        let bath = BathSpec::new(2.5, vec![1], a, 2).unwrap();
        let k = kappa_closed_form(&bath).unwrap();
        for j in 0..2 {
            for m in 0..2 {
                assert!((k.get(j, m) + g[j] * g[m] / 2.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn quadrature_matches_hand_integration_off_grid() {
        // Single real mode: κ(t) = -g²(t/ω - sin(ωt)/ω²)/t.
        let g = 0.4;
        let w = 1.3;
        let a = Array2::from_elem((1, 1), C64::new(g, 0.0));
        let bath = BathSpec::new(w, vec![1], a, 2).unwrap();
        for &t in &[0.2, 1.0, 3.3, 2.0 * PI / w] {
            let want = -g * g * (t / w - (w * t).sin() / (w * w)) / t;
            assert!((kappa_quadrature(&bath, 0, 0, t).unwrap() - want).abs() < 1e-10);
        }
    }

    #[test]
    fn quadrature_vanishes_as_t_shrinks() {
        let bath = random_bath(3, 2);
        let k = kappa_quadrature(&bath, 0, 1, 1e-6).unwrap();
        assert!(k.abs() < 1e-6);
        assert!(kappa_quadrature(&bath, 0, 1, 0.0).is_err());
    }

    #[test]
    fn quadrature_matches_closed_form_on_grid() {
        let bath = random_bath(4, 2);
        let closed = kappa_closed_form(&bath).unwrap();
        for t in refactorization_times(&bath, 3) {
            let q = kappa_quadrature_matrix(&bath, t).unwrap();
            for j in 0..2 {
                for k in 0..2 {
                    assert!((q[[j, k]] - closed.get(j, k)).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn f_integral_vanishes_on_grid() {
        let bath = random_bath(5, 3);
        for t in refactorization_times(&bath, 2) {
            for j in 0..2 {
                assert!(f_integral(&bath, j, t).unwrap().max_abs() < 1e-10);
            }
        }
        let off = f_integral(&bath, 0, 0.4).unwrap();
        assert!(off.is_hermitian(1e-14));
        assert!(off.max_abs() > 1e-3);
    }

    #[test]
    fn speed_limit_is_first_refactorization_time() {
        for &w in &[0.5, 1.0, 2.0, 3.0] {
            let bath = BathSpec::new(w, vec![1], Array2::zeros((1, 1)), 1).unwrap();
            assert_eq!(speed_limit(&bath), refactorization_times(&bath, 1)[0]);
        }
        let bath = BathSpec::new(2.0, vec![1], Array2::zeros((1, 1)), 1).unwrap();
        assert_eq!(speed_limit(&bath), PI);
    }

    #[test]
    fn effective_hamiltonian_on_grid_is_pairwise() {
        let mut rng = Rng::new(6);
        let sys = SystemSpec::random_qubits(2, &mut rng);
        let bath = random_bath(7, 2);
        let mu = [0.8, 1.2];
        let env = Environment::Bosonic(bath.clone());
        let t = refactorization_times(&bath, 1)[0];
        let h = effective_hamiltonian(&sys, &env, &mu, t).unwrap();
        let k = kappa_closed_form(&bath).unwrap().scaled_by(&mu).unwrap();
        let want = tensor(
            &sys.pairwise_coupling(&k.entries).unwrap(),
            &Operator::identity(bath.dim()),
        );
        assert!((&h - &want).max_abs() < 1e-8);
    }

    #[test]
    fn effective_hamiltonian_zero_mu() {
        let sys = SystemSpec::new(vec![LocalSystem::new(sigma_z(), sigma_x()).unwrap()]).unwrap();
        let a = Array2::from_elem((1, 1), C64::new(0.2, 0.1));
        let env = Environment::Bosonic(BathSpec::new(1.0, vec![1], a, 2).unwrap());
        assert!(
            effective_hamiltonian(&sys, &env, &[0.0], 0.7)
                .unwrap()
                .max_abs()
                < 1e-15
        );
    }
}
