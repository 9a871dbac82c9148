//! Propagators: the sliced time-ordered exponential used as the reference
//! oracle, the exact two-exponential Zermelo solution, the disentangling
//! identity, and the refactorization residual at `t_m = mΔt`.

use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Result};
use crate::magnus::{
    effective_hamiltonian, kappa_closed_form, kappa_quadrature_matrix, refactorization_times,
};
use crate::model::{zermelo_control_at, BathSpec, Environment, SystemSpec};
use crate::operator::{embed_local, matrix_exp, tensor, Operator, C64, ONE, ZERO};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SliceScheme {
    #[default]
    MidpointProduct,
}

/// Uniform slicing of `[t_start, t_final]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlicingPlan {
    pub t_start: f64,
    pub t_final: f64,
    pub steps: usize,
    pub scheme: SliceScheme,
}

impl SlicingPlan {
    pub fn new(t_final: f64, steps: usize) -> Result<Self> {
        Self::between(0.0, t_final, steps)
    }

    pub fn between(t_start: f64, t_final: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(invalid("slicing needs at least one step"));
        }
        if !(t_start.is_finite() && t_final.is_finite()) {
            return Err(invalid("slicing interval must be finite"));
        }
        Ok(Self {
            t_start,
            t_final,
            steps,
            scheme: SliceScheme::MidpointProduct,
        })
    }

    pub fn delta(&self) -> f64 {
        (self.t_final - self.t_start) / self.steps as f64
    }

    /// Midpoint of slice `k` (0-based).
    pub fn midpoint(&self, k: usize) -> f64 {
        self.t_start + (k as f64 + 0.5) * self.delta()
    }
}

/// `Π_k exp(-iδ H(t_k))` over slice midpoints, latest slice leftmost.
pub fn ordered_exp(h_of_t: impl Fn(f64) -> Operator, plan: &SlicingPlan) -> Result<Operator> {
    let mut u: Option<Operator> = None;
    let delta = plan.delta();
    for k in 0..plan.steps {
        let h = h_of_t(plan.midpoint(k));
        let f = matrix_exp(&h, C64::new(0.0, -delta))?;
        u = Some(match u {
            None => f,
            Some(prev) => {
                check_dim(prev.dim(), f.dim())?;
                f.dot(&prev)
            }
        });
    }
    Ok(u.expect("steps >= 1"))
}

/// Same product applied to a block of column vectors.
pub fn ordered_exp_block(
    h_of_t: impl Fn(f64) -> Operator,
    plan: &SlicingPlan,
    block: &Array2<C64>,
) -> Result<Array2<C64>> {
    let delta = plan.delta();
    let mut out = block.clone();
    for k in 0..plan.steps {
        let h = h_of_t(plan.midpoint(k));
        check_dim(out.nrows(), h.dim())?;
        out = crate::operator::exp_apply(&h, C64::new(0.0, -delta), &out)?;
    }
    Ok(out)
}

/// Time-dependent generator `H(t) = Σ_i c_i(t) T_i` with fixed terms `T_i`.
///
/// Terms are stored on the union of their sparsity patterns, so each slice
/// only rebuilds a value vector.
#[derive(Clone, Debug)]
pub struct LinearGenerator {
    dim: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    term_values: Vec<Vec<C64>>,
}

impl LinearGenerator {
    pub fn new(terms: &[Operator]) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| invalid("generator needs at least one term"))?;
        let dim = first.dim();
        for t in terms {
            check_dim(dim, t.dim())?;
        }
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        for r in 0..dim {
            for c in 0..dim {
                if terms.iter().any(|t| t.get(r, c) != ZERO) {
                    indices.push(c);
                }
            }
            indptr.push(indices.len());
        }
        let term_values = terms
            .iter()
            .map(|t| {
                let mut v = Vec::with_capacity(indices.len());
                for r in 0..dim {
                    for &c in &indices[indptr[r]..indptr[r + 1]] {
                        v.push(t.get(r, c));
                    }
                }
                v
            })
            .collect();
        Ok(Self {
            dim,
            indptr,
            indices,
            term_values,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_terms(&self) -> usize {
        self.term_values.len()
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    fn combine(&self, coeffs: &[C64]) -> Result<Vec<C64>> {
        check_dim(self.n_terms(), coeffs.len())?;
        let mut vals = vec![ZERO; self.nnz()];
        for (c, tv) in coeffs.iter().zip(&self.term_values) {
            if *c == ZERO {
                continue;
            }
            for (v, t) in vals.iter_mut().zip(tv) {
                *v += c * t;
            }
        }
        Ok(vals)
    }

    /// Dense `Σ_i c_i T_i`.
    pub fn evaluate(&self, coeffs: &[C64]) -> Result<Operator> {
        let vals = self.combine(coeffs)?;
        let mut out = Operator::zeros(self.dim);
        for r in 0..self.dim {
            for p in self.indptr[r]..self.indptr[r + 1] {
                out.set(r, self.indices[p], vals[p]);
            }
        }
        Ok(out)
    }

    fn apply(&self, vals: &[C64], x: &Array2<C64>, y: &mut Array2<C64>) {
        y.fill(ZERO);
        let ncols = x.ncols();
        for r in 0..self.dim {
            let mut yr = y.row_mut(r);
            for p in self.indptr[r]..self.indptr[r + 1] {
                let v = vals[p];
                let xr = x.row(self.indices[p]);
                for c in 0..ncols {
                    yr[c] += v * xr[c];
                }
            }
        }
    }

    fn inf_norm(&self, vals: &[C64]) -> f64 {
        (0..self.dim)
            .map(|r| {
                vals[self.indptr[r]..self.indptr[r + 1]]
                    .iter()
                    .map(|z| z.norm())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    fn exp_apply(&self, vals: &[C64], scale: C64, block: &Array2<C64>) -> Array2<C64> {
        let norm = self.inf_norm(vals) * scale.norm();
        let substeps = norm.ceil().max(1.0) as usize;
        let h = scale / substeps as f64;
        let mut x = block.clone();
        let mut term = Array2::zeros(block.raw_dim());
        let mut next = Array2::zeros(block.raw_dim());
        for _ in 0..substeps {
            term.assign(&x);
            for k in 1..=60 {
                self.apply(vals, &term, &mut next);
                let f = h / k as f64;
                next.mapv_inplace(|z| z * f);
                std::mem::swap(&mut term, &mut next);
                x += &term;
                let t_max = term.iter().map(|z| z.norm()).fold(0.0, f64::max);
                let x_max = x.iter().map(|z| z.norm()).fold(0.0, f64::max);
                if t_max <= 1e-17 * x_max {
                    break;
                }
            }
        }
        x
    }

    /// Midpoint-product propagation of `block` with coefficients `coeffs(t)`.
    pub fn ordered_exp_block(
        &self,
        coeffs: impl Fn(f64) -> Vec<C64>,
        plan: &SlicingPlan,
        block: &Array2<C64>,
    ) -> Result<Array2<C64>> {
        check_dim(self.dim, block.nrows())?;
        let scale = C64::new(0.0, -plan.delta());
        let mut out = block.clone();
        for k in 0..plan.steps {
            let vals = self.combine(&coeffs(plan.midpoint(k)))?;
            out = self.exp_apply(&vals, scale, &out);
        }
        Ok(out)
    }
}

/// `e^{-i h0 t} e^{-i hc0 t}`, the exact solution for `H(t) = h0 + e^{-ih0t} hc0 e^{ih0t}`.
pub fn zermelo_propagator(h0: &Operator, hc0: &Operator, t: f64) -> Result<Operator> {
    check_dim(h0.dim(), hc0.dim())?;
    let left = matrix_exp(h0, C64::new(0.0, -t))?.dot(&matrix_exp(hc0, C64::new(0.0, -t))?);
    debug_assert!({
        let right = zermelo_propagator_right(h0, hc0, t)?;
        let scale = 1.0 + t.abs() * (h0.one_norm() + hc0.one_norm());
        (&left - &right).hs_norm() <= 1e-9 * scale
    });
    Ok(left)
}

/// Right-factored form `e^{-i H_C(t) t} e^{-i h0 t}` with `H_C(t) = e^{-ih0t} hc0 e^{ih0t}`.
pub fn zermelo_propagator_right(h0: &Operator, hc0: &Operator, t: f64) -> Result<Operator> {
    check_dim(h0.dim(), hc0.dim())?;
    let u0 = matrix_exp(h0, C64::new(0.0, -t))?;
    let hc_t = u0.dot(hc0).dot(&u0.adjoint()).hermitian_part();
    Ok(matrix_exp(&hc_t, C64::new(0.0, -t))?.dot(&u0))
}

/// Residuals of both disentangled forms against the direct ordered exponential.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisentangleResidual {
    /// `U_1(t,0) T e^{-i∫ U_1(0,τ) H_2 U_1(τ,0)}` vs direct.
    pub at_origin: f64,
    /// Form with the auxiliary time `t3` vs direct.
    pub shifted: f64,
}

impl DisentangleResidual {
    pub fn max(&self) -> f64 {
        self.at_origin.max(self.shifted)
    }
}

/// Evaluates both sides of the disentangling identity on `[0, t]` with
/// `steps` slices. `U_1` is sampled on a half-step grid so that interaction
/// generators at slice midpoints carry no extra first-order error.
pub fn disentangle_check(
    h1_of_t: impl Fn(f64) -> Operator,
    h2_of_t: impl Fn(f64) -> Operator,
    t: f64,
    t3: f64,
    steps: usize,
) -> Result<DisentangleResidual> {
    let plan = SlicingPlan::new(t, steps)?;
    let direct = ordered_exp(|tau| &h1_of_t(tau) + &h2_of_t(tau), &plan)?;

    // U_1(τ, 0) at every half-step node.
    let fine = SlicingPlan::new(t, 2 * steps)?;
    let dim = direct.dim();
    let mut nodes = vec![Operator::identity(dim)];
    for k in 0..fine.steps {
        let f = matrix_exp(&h1_of_t(fine.midpoint(k)), C64::new(0.0, -fine.delta()))?;
        let next = f.dot(nodes.last().expect("nonempty"));
        nodes.push(next);
    }
    let u1_t = nodes.last().expect("nonempty").clone();
    let u1_mid = |k: usize| &nodes[2 * k + 1];

    let t3_steps = ((steps as f64) * (t3 / t).abs()).ceil().max(1.0) as usize;
    let u1_t3 = ordered_exp(&h1_of_t, &SlicingPlan::new(t3, t3_steps)?)?;

    let interaction = |anchor: &Operator| -> Result<Operator> {
        let mut w = Operator::identity(dim);
        for k in 0..steps {
            // U_1(anchor, τ) = anchor · U_1(τ,0)†.
            let v = anchor.dot(&u1_mid(k).adjoint());
            let g = v
                .dot(&h2_of_t(plan.midpoint(k)))
                .dot(&v.adjoint())
                .hermitian_part();
            w = matrix_exp(&g, C64::new(0.0, -plan.delta()))?.dot(&w);
        }
        Ok(w)
    };

    let at_origin = u1_t.dot(&interaction(&Operator::identity(dim))?);
    let u1_t_t3 = u1_t.dot(&u1_t3.adjoint());
    let shifted = u1_t_t3.dot(&interaction(&u1_t3)?).dot(&u1_t3);
    Ok(DisentangleResidual {
        at_origin: (&at_origin - &direct).hs_norm(),
        shifted: (&shifted - &direct).hs_norm(),
    })
}

/// Numerical settings for the refactorization checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefactorizationConfig {
    /// Midpoint slices per bath period `Δt`.
    pub slices_per_period: usize,
    /// Probe inputs are all system states times bath states with every mode
    /// occupation at most this value.
    pub probe_occupation: usize,
    /// Residual acceptance bound.
    pub residual_tol: f64,
    /// Relative change allowed when the Fock cutoff is raised by two.
    pub convergence_tol: f64,
    pub check_convergence: bool,
}

impl Default for RefactorizationConfig {
    fn default() -> Self {
        Self {
            slices_per_period: 10_000,
            probe_occupation: 0,
            residual_tol: 1e-5,
            convergence_tol: 1e-6,
            check_convergence: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefactorizationReport {
    pub m: usize,
    pub t_m: f64,
    /// Hilbert–Schmidt residual on the probe block.
    pub residual: f64,
    /// `residual / sqrt(probe columns)`.
    pub residual_normalized: f64,
    /// Same comparison with the exact two-exponential propagator in place of slicing.
    pub truncation_floor: f64,
    pub slicing_steps: usize,
    pub fock_cutoff: usize,
    pub probe_columns: usize,
    /// Relative change of the probe block when the cutoff is raised by two.
    pub fock_change: Option<f64>,
    pub converged: bool,
}

fn check_bosonic<'a>(sys: &SystemSpec, env: &'a Environment, mu: &[f64]) -> Result<&'a BathSpec> {
    let bath = env.as_bosonic()?;
    check_dim(sys.len(), bath.n_systems())?;
    check_dim(sys.len(), mu.len())?;
    if mu.iter().any(|&m| !(m >= 0.0 && m.is_finite())) {
        return Err(invalid("coupling strengths must be finite and nonnegative"));
    }
    Ok(bath)
}

/// Column indices of the probe block in the joint register.
pub fn probe_indices(sys: &SystemSpec, bath: &BathSpec, probe_occupation: usize) -> Vec<usize> {
    let low = bath.low_occupation_indices(probe_occupation);
    let db = bath.dim();
    (0..sys.dim())
        .flat_map(|s| low.iter().map(move |&b| s * db + b))
        .collect()
}

fn probe_block(dim: usize, cols: &[usize]) -> Array2<C64> {
    let mut block = Array2::zeros((dim, cols.len()));
    for (c, &i) in cols.iter().enumerate() {
        block[[i, c]] = ONE;
    }
    block
}

fn select_columns(u: &Operator, cols: &[usize]) -> Array2<C64> {
    u.as_array().select(Axis(1), cols)
}

fn block_distance(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Sparse generator for the navigated Hamiltonian `H_S + H_C(t)`: one static
/// term plus one term per matrix unit of every local coupling.
fn navigated_generator<'a>(
    sys: &'a SystemSpec,
    bath: &BathSpec,
    mu: &[f64],
) -> Result<(LinearGenerator, impl Fn(f64) -> Vec<C64> + 'a)> {
    let db = bath.dim();
    let mut terms = vec![
        &tensor(&sys.system_hamiltonian(), &Operator::identity(db))
            + &tensor(&Operator::identity(sys.dim()), &bath.hamiltonian()),
    ];
    let dims = sys.dims();
    for (j, local) in sys.systems().iter().enumerate() {
        let d = local.dim();
        let b = bath.coupling_operator(j);
        for a in 0..d {
            for c in 0..d {
                let mut unit = Operator::zeros(d);
                unit.set(a, c, ONE);
                terms.push(tensor(&embed_local(&unit, j, &dims)?, &b));
            }
        }
    }
    let gen = LinearGenerator::new(&terms)?;
    let mu = mu.to_vec();
    let coeffs = move |t: f64| {
        let mut c = vec![ONE];
        for (j, local) in sys.systems().iter().enumerate() {
            let s_t = local.navigated_coupling(t);
            let d = local.dim();
            for a in 0..d {
                for b in 0..d {
                    c.push(s_t.get(a, b) * mu[j]);
                }
            }
        }
        c
    };
    Ok((gen, coeffs))
}

/// Sliced propagation of the probe columns under the navigated Hamiltonian.
pub fn navigated_probe_evolution(
    sys: &SystemSpec,
    bath: &BathSpec,
    mu: &[f64],
    t: f64,
    steps: usize,
    cols: &[usize],
) -> Result<Array2<C64>> {
    let (gen, coeffs) = navigated_generator(sys, bath, mu)?;
    let plan = SlicingPlan::new(t, steps)?;
    gen.ordered_exp_block(coeffs, &plan, &probe_block(gen.dim(), cols))
}

/// Exact two-exponential propagation of the probe columns on the truncated space.
pub fn exact_probe_evolution(
    sys: &SystemSpec,
    bath: &BathSpec,
    mu: &[f64],
    t: f64,
    cols: &[usize],
) -> Result<Array2<C64>> {
    let env = Environment::Bosonic(bath.clone());
    let h0 = tensor(&sys.system_hamiltonian(), &Operator::identity(bath.dim()));
    let hc0 = zermelo_control_at(sys, &env, mu, 0.0)?;
    let u = zermelo_propagator(&h0, &hc0, t)?;
    Ok(select_columns(&u, cols))
}

/// `e^{-itH_S} e^{-it S·κ·S} ⊗ e^{-itH_B}` applied to the probe columns.
fn factorized_probe(
    sys: &SystemSpec,
    bath: &BathSpec,
    mu: &[f64],
    t: f64,
    cols: &[usize],
) -> Result<Array2<C64>> {
    let kappa = kappa_closed_form(bath)?.scaled_by(mu)?;
    let u_sys = matrix_exp(&sys.system_hamiltonian(), C64::new(0.0, -t))?.dot(&matrix_exp(
        &sys.pairwise_coupling(&kappa.entries)?,
        C64::new(0.0, -t),
    )?);
    let db = bath.dim();
    let hb = bath.hamiltonian();
    let mut out = Array2::zeros((sys.dim() * db, cols.len()));
    for (c, &i) in cols.iter().enumerate() {
        let (s_in, b) = (i / db, i % db);
        let phase = C64::new(0.0, -t * hb.get(b, b).re).exp();
        for s_out in 0..sys.dim() {
            out[[s_out * db + b, c]] = u_sys.get(s_out, s_in) * phase;
        }
    }
    Ok(out)
}

/// Hilbert–Schmidt distance between the sliced navigated propagator and the
/// analytic factorization at `t_m`, on the default probe block.
pub fn refactorization_residual(
    sys: &SystemSpec,
    env: &Environment,
    mu: &[f64],
    m: usize,
) -> Result<f64> {
    let cfg = RefactorizationConfig {
        check_convergence: false,
        ..Default::default()
    };
    Ok(refactorization_report(sys, env, mu, m, &cfg)?.residual)
}

/// Residual at `t_m` for several slice counts (floor computed once).
pub fn refactorization_ladder(
    sys: &SystemSpec,
    env: &Environment,
    mu: &[f64],
    m: usize,
    steps: &[usize],
    probe_occupation: usize,
) -> Result<Vec<f64>> {
    let bath = check_bosonic(sys, env, mu)?;
    if m == 0 {
        return Err(invalid("m must be at least 1"));
    }
    let t = refactorization_times(bath, m)[m - 1];
    let cols = probe_indices(sys, bath, probe_occupation);
    let analytic = factorized_probe(sys, bath, mu, t, &cols)?;
    steps
        .iter()
        .map(|&n| {
            Ok(block_distance(
                &navigated_probe_evolution(sys, bath, mu, t, n, &cols)?,
                &analytic,
            ))
        })
        .collect()
}

pub fn refactorization_report(
    sys: &SystemSpec,
    env: &Environment,
    mu: &[f64],
    m: usize,
    cfg: &RefactorizationConfig,
) -> Result<RefactorizationReport> {
    let bath = check_bosonic(sys, env, mu)?;
    if m == 0 {
        return Err(invalid("m must be at least 1"));
    }
    if cfg.slices_per_period == 0 {
        return Err(invalid("slices_per_period must be positive"));
    }
    let t = refactorization_times(bath, m)[m - 1];
    let steps = m * cfg.slices_per_period;
    let cols = probe_indices(sys, bath, cfg.probe_occupation);
    let analytic = factorized_probe(sys, bath, mu, t, &cols)?;
    let numeric = navigated_probe_evolution(sys, bath, mu, t, steps, &cols)?;
    let residual = block_distance(&numeric, &analytic);
    let exact = exact_probe_evolution(sys, bath, mu, t, &cols)?;
    let truncation_floor = block_distance(&exact, &analytic);
    let fock_change = if cfg.check_convergence {
        Some(fock_convergence(sys, bath, mu, t, cfg.probe_occupation)?)
    } else {
        None
    };
    let converged =
        residual < cfg.residual_tol && fock_change.is_none_or(|c| c < cfg.convergence_tol);
    Ok(RefactorizationReport {
        m,
        t_m: t,
        residual,
        residual_normalized: residual / (cols.len() as f64).sqrt(),
        truncation_floor,
        slicing_steps: steps,
        fock_cutoff: bath.fock_cutoff,
        probe_columns: cols.len(),
        fock_change,
        converged,
    })
}

/// Relative change of the exactly propagated probe block when the Fock
/// cutoff is raised from `n_max` to `n_max + 2`.
pub fn fock_convergence(
    sys: &SystemSpec,
    bath: &BathSpec,
    mu: &[f64],
    t: f64,
    probe_occupation: usize,
) -> Result<f64> {
    let big = bath.with_cutoff(bath.fock_cutoff + 2);
    let small_cols = probe_indices(sys, bath, probe_occupation);
    let big_cols = probe_indices(sys, &big, probe_occupation);
    let small = exact_probe_evolution(sys, bath, mu, t, &small_cols)?;
    let large = exact_probe_evolution(sys, &big, mu, t, &big_cols)?;
    // Map small-space rows into the large space by occupation numbers.
    let (dbs, dbl) = (bath.dim(), big.dim());
    let dl = big.mode_dim();
    let row_map: Vec<usize> = (0..sys.dim() * dbs)
        .map(|i| {
            let (s, b) = (i / dbs, i % dbs);
            let occ = bath.occupations(b);
            let bl = occ.iter().fold(0, |acc, &n| acc * dl + n);
            s * dbl + bl
        })
        .collect();
    let mut embedded = Array2::zeros(large.raw_dim());
    for (r, &rl) in row_map.iter().enumerate() {
        embedded.slice_mut(s![rl, ..]).assign(&small.row(r));
    }
    let norm = small.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    Ok(block_distance(&embedded, &large) / norm)
}

/// Which analytic form is compared off the refactorization grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OffGridForm {
    /// `e^{-itH_S} e^{-itH_B} e^{-itH_eff(t)}` with the `S ⊗ F` term.
    WithF,
    /// Pairwise term only: `e^{-itH_S} e^{-itH_B} e^{-it Σ κ(t) S S}`.
    PairwiseOnly,
}

/// Residual of the analytic decomposition at an arbitrary time `t`.
pub fn offgrid_residual(
    sys: &SystemSpec,
    env: &Environment,
    mu: &[f64],
    t: f64,
    form: OffGridForm,
    cfg: &RefactorizationConfig,
) -> Result<f64> {
    let bath = check_bosonic(sys, env, mu)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid("time must be positive"));
    }
    let period = refactorization_times(bath, 1)[0];
    let steps = ((cfg.slices_per_period as f64) * t / period)
        .ceil()
        .max(1.0) as usize;
    let cols = probe_indices(sys, bath, cfg.probe_occupation);
    let numeric = navigated_probe_evolution(sys, bath, mu, t, steps, &cols)?;
    let db = bath.dim();
    let h_eff = match form {
        OffGridForm::WithF => effective_hamiltonian(sys, env, mu, t)?,
        OffGridForm::PairwiseOnly => {
            let k = kappa_quadrature_matrix(bath, t)?;
            let scaled = Array2::from_shape_fn(k.dim(), |(j, l)| k[[j, l]] * mu[j] * mu[l]);
            tensor(&sys.pairwise_coupling(&scaled)?, &Operator::identity(db)).hermitian_part()
        }
    };
    let free = tensor(
        &matrix_exp(&sys.system_hamiltonian(), C64::new(0.0, -t))?,
        &matrix_exp(&bath.hamiltonian(), C64::new(0.0, -t))?,
    );
    let analytic = free.dot(&matrix_exp(&h_eff, C64::new(0.0, -t))?);
    Ok(block_distance(&numeric, &select_columns(&analytic, &cols)))
}
