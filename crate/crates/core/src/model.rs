//! Physical setup: local systems, the shared environment, and assembly of
//! every Hamiltonian that acts on the joint register.
//!
//! Register ordering is always system 1 ⊗ … ⊗ system N ⊗ environment. A
//! bosonic bath is itself a tensor product of truncated Fock spaces, one slot
//! per mode, in the order the harmonics are listed.

use ndarray::Array2;

use crate::error::{check_dim, invalid, Error, Result};
use crate::operator::{embed_local, matrix_exp, tensor, Operator, C64, I, ZERO};
use crate::rng::{random_hermitian, Rng};

/// Hermiticity tolerance for user-supplied operators.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// One local system: its wind `h` and its bath coupling operator `s`.
#[derive(Clone, Debug)]
pub struct LocalSystem {
    pub h: Operator,
    pub s: Operator,
}

impl LocalSystem {
    pub fn new(h: Operator, s: Operator) -> Result<Self> {
        check_dim(h.dim(), s.dim())?;
        if !h.is_hermitian(HERMITIAN_TOL) || !s.is_hermitian(HERMITIAN_TOL) {
            return Err(invalid("local wind and coupling must be Hermitian"));
        }
        Ok(Self { h, s })
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    /// Coupling operator navigated in the local wind:
    /// `e^{-i h t} s e^{+i h t}`.
    pub fn navigated_coupling(&self, t: f64) -> Operator {
        let u = matrix_exp(&self.h, C64::new(0.0, -t)).expect("finite Hermitian");
        u.dot(&self.s).dot(&u.adjoint())
    }
}

#[derive(Clone, Debug)]
pub struct SystemSpec {
    systems: Vec<LocalSystem>,
}

impl SystemSpec {
    pub fn new(systems: Vec<LocalSystem>) -> Result<Self> {
        if systems.is_empty() {
            return Err(invalid("at least one system is required"));
        }
        Ok(Self { systems })
    }

    /// `n` systems with independent GUE winds and couplings.
    pub fn random_qubits(n: usize, rng: &mut Rng) -> Self {
        let systems = (0..n)
            .map(|_| LocalSystem {
                h: random_hermitian(2, rng),
                s: random_hermitian(2, rng),
            })
            .collect();
        Self { systems }
    }

    /// `n` copies of one randomly drawn qubit (identical winds and couplings).
    pub fn identical_random_qubits(n: usize, rng: &mut Rng) -> Self {
        let proto = LocalSystem {
            h: random_hermitian(2, rng),
            s: random_hermitian(2, rng),
        };
        Self {
            systems: vec![proto; n],
        }
    }

    pub fn len(&self) -> usize {
        self.systems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.systems.is_empty()
    }

    pub fn systems(&self) -> &[LocalSystem] {
        &self.systems
    }

    pub fn dims(&self) -> Vec<usize> {
        self.systems.iter().map(LocalSystem::dim).collect()
    }

    pub fn dim(&self) -> usize {
        self.dims().iter().product()
    }

    pub fn embedded_wind(&self, j: usize) -> Operator {
        embed_local(&self.systems[j].h, j, &self.dims()).expect("valid slot")
    }

    pub fn embedded_coupling(&self, j: usize) -> Operator {
        embed_local(&self.systems[j].s, j, &self.dims()).expect("valid slot")
    }

    pub fn embedded_navigated_coupling(&self, j: usize, t: f64) -> Operator {
        embed_local(&self.systems[j].navigated_coupling(t), j, &self.dims()).expect("valid slot")
    }

    /// `Σ_j H_j` on the system register.
    pub fn system_hamiltonian(&self) -> Operator {
        let mut h = Operator::zeros(self.dim());
        for j in 0..self.len() {
            h += &self.embedded_wind(j);
        }
        h
    }

    /// `Σ_{jk} S_j κ_jk S_k` on the system register.
    pub fn pairwise_coupling(&self, kappa: &Array2<f64>) -> Result<Operator> {
        check_dim(self.len(), kappa.nrows())?;
        check_dim(self.len(), kappa.ncols())?;
        let s: Vec<Operator> = (0..self.len()).map(|j| self.embedded_coupling(j)).collect();
        let mut out = Operator::zeros(self.dim());
        for j in 0..self.len() {
            for k in 0..self.len() {
                let w = kappa[[j, k]];
                if w != 0.0 {
                    out += &s[j].dot(&s[k]).scale_re(w);
                }
            }
        }
        Ok(out)
    }
}

/// Bath of bosonic modes at harmonics `l·ω`, coupled linearly through `A`.
#[derive(Clone, Debug)]
pub struct BathSpec {
    pub omega: f64,
    pub harmonics: Vec<u32>,
    /// `N × L`; row `j` couples system `j`, column `l` couples mode `l`.
    pub coupling: Array2<C64>,
    pub fock_cutoff: usize,
}

impl BathSpec {
    pub fn new(
        omega: f64,
        harmonics: Vec<u32>,
        coupling: Array2<C64>,
        fock_cutoff: usize,
    ) -> Result<Self> {
        let bath = Self {
            omega,
            harmonics,
            coupling,
            fock_cutoff,
        };
        bath.validate()?;
        Ok(bath)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(invalid("bath frequency must be positive"));
        }
        if self.harmonics.is_empty() {
            return Err(invalid("bath needs at least one mode"));
        }
        if self.harmonics.contains(&0) {
            return Err(invalid("harmonic indices must be >= 1"));
        }
        let mut sorted = self.harmonics.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.harmonics.len() {
            return Err(invalid("harmonic indices must be distinct"));
        }
        check_dim(self.harmonics.len(), self.coupling.ncols())?;
        if self.fock_cutoff == 0 {
            return Err(invalid("Fock cutoff must be positive"));
        }
        Ok(())
    }

    /// Copy with a different Fock cutoff.
    pub fn with_cutoff(&self, fock_cutoff: usize) -> Self {
        Self {
            fock_cutoff,
            ..self.clone()
        }
    }

    pub fn n_systems(&self) -> usize {
        self.coupling.nrows()
    }

    pub fn n_modes(&self) -> usize {
        self.harmonics.len()
    }

    pub fn mode_dim(&self) -> usize {
        self.fock_cutoff + 1
    }

    pub fn dim(&self) -> usize {
        self.mode_dim().pow(self.n_modes() as u32)
    }

    pub fn mode_frequency(&self, l: usize) -> f64 {
        self.harmonics[l] as f64 * self.omega
    }

    fn mode_dims(&self) -> Vec<usize> {
        vec![self.mode_dim(); self.n_modes()]
    }

    /// Truncated annihilation operator of mode `l`, embedded in the bath.
    pub fn annihilation(&self, l: usize) -> Operator {
        let d = self.mode_dim();
        let mut b = Operator::zeros(d);
        for n in 1..d {
            b.set(n - 1, n, C64::new((n as f64).sqrt(), 0.0));
        }
        embed_local(&b, l, &self.mode_dims()).expect("valid mode")
    }

    /// `Σ_l ω_l b_l† b_l`, diagonal in the Fock basis.
    pub fn hamiltonian(&self) -> Operator {
        let diag: Vec<C64> = (0..self.dim())
            .map(|idx| {
                let occ = self.occupations(idx);
                let e: f64 = occ
                    .iter()
                    .enumerate()
                    .map(|(l, &n)| self.mode_frequency(l) * n as f64)
                    .sum();
                C64::new(e, 0.0)
            })
            .collect();
        Operator::diagonal(&diag)
    }

    /// Occupation numbers of bath basis state `idx` (first mode slowest).
    pub fn occupations(&self, mut idx: usize) -> Vec<usize> {
        let d = self.mode_dim();
        let mut occ = vec![0; self.n_modes()];
        for l in (0..self.n_modes()).rev() {
            occ[l] = idx % d;
            idx /= d;
        }
        occ
    }

    /// Bath basis indices whose every mode holds at most `max_occupation`.
    pub fn low_occupation_indices(&self, max_occupation: usize) -> Vec<usize> {
        (0..self.dim())
            .filter(|&i| self.occupations(i).iter().all(|&n| n <= max_occupation))
            .collect()
    }

    /// `B_j(t) = Σ_l A_jl e^{-iω_l t} b_l + h.c.`; `t = 0` gives `B_j`.
    pub fn heisenberg_coupling(&self, j: usize, t: f64) -> Operator {
        let mut out = Operator::zeros(self.dim());
        for l in 0..self.n_modes() {
            let a = self.coupling[[j, l]] * (-I * self.mode_frequency(l) * t).exp();
            if a == ZERO {
                continue;
            }
            let b = self.annihilation(l);
            out += &b.scale(a);
            out += &b.adjoint().scale(a.conj());
        }
        out
    }

    pub fn coupling_operator(&self, j: usize) -> Operator {
        self.heisenberg_coupling(j, 0.0)
    }

    /// c-number `[B_j(t1), B_k(t2)] = 2i Im Σ_l A_jl A_kl* e^{-iω_l (t1 - t2)}`.
    pub fn commutator_kernel(&self, j: usize, k: usize, t1: f64, t2: f64) -> C64 {
        let im: f64 = (0..self.n_modes())
            .map(|l| {
                let z = self.coupling[[j, l]]
                    * self.coupling[[k, l]].conj()
                    * (-I * self.mode_frequency(l) * (t1 - t2)).exp();
                z.im
            })
            .sum();
        C64::new(0.0, 2.0 * im)
    }

    /// Random coupling matrix with `|A_jl| ≤ max_abs` (uniform magnitude and phase).
    pub fn random_coupling(
        n_systems: usize,
        n_modes: usize,
        max_abs: f64,
        rng: &mut Rng,
    ) -> Array2<C64> {
        Array2::from_shape_fn((n_systems, n_modes), |_| {
            let r = rng.uniform(0.0, max_abs);
            let phi = rng.uniform(0.0, 2.0 * std::f64::consts::PI);
            C64::from_polar(r, phi)
        })
    }
}

/// A finite environment with randomly drawn Hamiltonian and coupling operators.
#[derive(Clone, Debug)]
pub struct RandomEnvironmentSpec {
    pub h_env: Operator,
    pub b_ops: Vec<Operator>,
    pub rho_env: Operator,
}

impl RandomEnvironmentSpec {
    pub fn new(h_env: Operator, b_ops: Vec<Operator>, rho_env: Operator) -> Result<Self> {
        let d = h_env.dim();
        if !h_env.is_hermitian(HERMITIAN_TOL) {
            return Err(invalid("environment Hamiltonian must be Hermitian"));
        }
        for b in &b_ops {
            check_dim(d, b.dim())?;
            if !b.is_hermitian(HERMITIAN_TOL) {
                return Err(invalid("environment coupling operators must be Hermitian"));
            }
        }
        check_dim(d, rho_env.dim())?;
        if !rho_env.is_hermitian(HERMITIAN_TOL) || (rho_env.trace() - 1.0).norm() > 1e-12 {
            return Err(invalid(
                "environment state must be Hermitian with unit trace",
            ));
        }
        if min_eigenvalue_lower_bound(&rho_env) < -1e-12 {
            return Err(invalid("environment state must be positive semidefinite"));
        }
        Ok(Self {
            h_env,
            b_ops,
            rho_env,
        })
    }

    /// GUE Hamiltonian and couplings, maximally mixed state.
    pub fn random(dim: usize, n_systems: usize, rng: &mut Rng) -> Self {
        let h_env = random_hermitian(dim, rng);
        let b_ops = (0..n_systems).map(|_| random_hermitian(dim, rng)).collect();
        let rho_env = Operator::identity(dim).scale_re(1.0 / dim as f64);
        Self {
            h_env,
            b_ops,
            rho_env,
        }
    }

    pub fn dim(&self) -> usize {
        self.h_env.dim()
    }

    /// Same environment with every coupling operator replaced by zero.
    pub fn decoupled(&self) -> Self {
        Self {
            b_ops: vec![Operator::zeros(self.dim()); self.b_ops.len()],
            ..self.clone()
        }
    }
}

// Cholesky-style test: returns a negative number iff the matrix is not PSD
// (up to a tiny diagonal shift).
fn min_eigenvalue_lower_bound(a: &Operator) -> f64 {
    let n = a.dim();
    let shift = 1e-12;
    let mut l = Array2::<C64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a.get(i, j);
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]].conj();
            }
            if i == j {
                let d = sum.re + shift;
                if d < 0.0 {
                    return d;
                }
                l[[i, i]] = C64::new(d.sqrt(), 0.0);
            } else if l[[j, j]].re > 0.0 {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    0.0
}

#[derive(Clone, Debug)]
pub enum Environment {
    Bosonic(BathSpec),
    Random(RandomEnvironmentSpec),
}

impl Environment {
    pub fn dim(&self) -> usize {
        match self {
            Environment::Bosonic(b) => b.dim(),
            Environment::Random(r) => r.dim(),
        }
    }

    pub fn n_couplings(&self) -> usize {
        match self {
            Environment::Bosonic(b) => b.n_systems(),
            Environment::Random(r) => r.b_ops.len(),
        }
    }

    pub fn hamiltonian(&self) -> Operator {
        match self {
            Environment::Bosonic(b) => b.hamiltonian(),
            Environment::Random(r) => r.h_env.clone(),
        }
    }

    pub fn coupling_operator(&self, j: usize) -> Operator {
        match self {
            Environment::Bosonic(b) => b.coupling_operator(j),
            Environment::Random(r) => r.b_ops[j].clone(),
        }
    }

    pub fn as_bosonic(&self) -> Result<&BathSpec> {
        match self {
            Environment::Bosonic(b) => Ok(b),
            Environment::Random(_) => Err(Error::Unsupported(
                "operation requires a bosonic bath; random environments have no c-number commutator"
                    .into(),
            )),
        }
    }
}

fn check_controls(sys: &SystemSpec, env: &Environment, mu: &[f64]) -> Result<()> {
    check_dim(sys.len(), mu.len())?;
    check_dim(sys.len(), env.n_couplings())?;
    if mu.iter().any(|&m| !(m >= 0.0 && m.is_finite())) {
        return Err(invalid("coupling strengths must be finite and nonnegative"));
    }
    Ok(())
}

/// `Σ_j H_j ⊗ I + I ⊗ H_env + Σ_j μ_j S_j ⊗ B_j` on the joint register.
pub fn assemble_total_hamiltonian(
    sys: &SystemSpec,
    env: &Environment,
    mu: &[f64],
) -> Result<Operator> {
    check_controls(sys, env, mu)?;
    let de = env.dim();
    let mut h = tensor(&sys.system_hamiltonian(), &Operator::identity(de));
    h += &tensor(&Operator::identity(sys.dim()), &env.hamiltonian());
    for (j, &m) in mu.iter().enumerate() {
        if m != 0.0 {
            h += &tensor(&sys.embedded_coupling(j), &env.coupling_operator(j)).scale_re(m);
        }
    }
    Ok(h)
}

/// Navigated control `H_C(t) = H_env + Σ_j μ_j S_j(t) ⊗ B_j`, with the
/// environment operators left untouched.
pub fn zermelo_control_at(
    sys: &SystemSpec,
    env: &Environment,
    mu: &[f64],
    t: f64,
) -> Result<Operator> {
    check_controls(sys, env, mu)?;
    let mut h = tensor(&Operator::identity(sys.dim()), &env.hamiltonian());
    for (j, &m) in mu.iter().enumerate() {
        if m != 0.0 {
            let s_t = sys.embedded_navigated_coupling(j, t);
            h += &tensor(&s_t, &env.coupling_operator(j)).scale_re(m);
        }
    }
    Ok(h)
}

/// Full navigated Hamiltonian `H_S + H_C(t)`.
pub fn zermelo_hamiltonian_at(
    sys: &SystemSpec,
    env: &Environment,
    mu: &[f64],
    t: f64,
) -> Result<Operator> {
    let hc = zermelo_control_at(sys, env, mu, t)?;
    Ok(&tensor(&sys.system_hamiltonian(), &Operator::identity(env.dim())) + &hc)
}

/// Interaction-picture bath coupling `B_j(t)`.
pub fn bath_operator_heisenberg(env: &Environment, j: usize, t: f64) -> Result<Operator> {
    let bath = env.as_bosonic()?;
    if j >= bath.n_systems() {
        return Err(invalid(format!("no coupling row {j}")));
    }
    Ok(bath.heisenberg_coupling(j, t))
}
