//! Measurement-only fidelity ascent against an unknown finite environment.
//!
//! Subsets of the systems touch the environment in a fixed asynchronous
//! cycle for equal periods `tau`; the only controls are the contact strengths,
//! one per step. The fidelity is the average of `Tr(ρ_out (Π ⊗ I))` over Haar
//! inputs, either sampled or computed exactly.
//!
//! For a fixed input the fidelity is a sum of squared moduli of entries of
//! `L U R`, with `L` built from the expected outputs and `R` from the inputs
//! tensored with eigenvectors of the environment state. Writing
//! `U = S_k G_k P_k` makes every finite-difference probe of step `k` cost one
//! small exponential and two thin products.

use std::cell::{Cell, RefCell};

use ndarray::{s, Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Result};
use crate::model::{RandomEnvironmentSpec, SystemSpec};
use crate::operator::{matrix_exp, partial_trace_second, tensor, HermitianSpectrum, Operator, C64};
use crate::optim::{minimize, DescentConfig};
use crate::rng::{is_orthonormal, random_haar_state, Rng};
use crate::synthesize::contact_cycle;

#[derive(Clone, Debug)]
pub struct LoopConfig {
    pub sys: SystemSpec,
    pub env: RandomEnvironmentSpec,
    /// Unitary on the system, or on the span of `subspace` when it is set
    /// (expressed in that basis).
    pub target: Operator,
    pub subspace: Option<Vec<Array1<C64>>>,
    pub n_steps: usize,
    pub tau: f64,
    pub samples_per_estimate: usize,
    pub iterations: usize,
    /// Ascend on the exact Haar average instead of sampled estimates.
    pub idealized: bool,
    /// Relative central-difference step in the square-root controls.
    pub fd_step: f64,
    pub step_cap: f64,
    /// Curvature pairs kept in idealized mode; sampled mode uses plain ascent.
    pub memory: usize,
    /// Initial strengths are drawn uniformly from this range.
    pub mu_init: (f64, f64),
}

impl LoopConfig {
    pub fn new(
        sys: SystemSpec,
        env: RandomEnvironmentSpec,
        target: Operator,
        subspace: Option<Vec<Array1<C64>>>,
    ) -> Self {
        Self {
            sys,
            env,
            target,
            subspace,
            n_steps: 576,
            tau: 0.1,
            samples_per_estimate: 1000,
            iterations: 50,
            idealized: true,
            fd_step: 1e-5,
            step_cap: 0.5,
            memory: 10,
            mu_init: (0.0, 1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.sys.dim();
        if self.env.b_ops.len() != self.sys.len() {
            return Err(invalid(format!(
                "environment has {} coupling operators for {} systems",
                self.env.b_ops.len(),
                self.sys.len()
            )));
        }
        if let Some(basis) = &self.subspace {
            if basis.is_empty() || basis.iter().any(|v| v.len() != d) {
                return Err(invalid(
                    "subspace basis vectors must be nonempty and match the system dimension",
                ));
            }
            if !is_orthonormal(basis, 1e-12) {
                return Err(invalid("subspace basis must be orthonormal"));
            }
        }
        check_dim(self.logical_dim(), self.target.dim())?;
        if !self.target.is_unitary(1e-10) {
            return Err(invalid("target must be unitary"));
        }
        if self.n_steps == 0 || !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(invalid("n_steps and tau must be positive"));
        }
        if self.samples_per_estimate < 2 {
            return Err(invalid("at least two samples per estimate are required"));
        }
        if !(self.fd_step > 0.0 && self.step_cap > 0.0) {
            return Err(invalid("fd_step and step_cap must be positive"));
        }
        let (lo, hi) = self.mu_init;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return Err(invalid("mu_init must satisfy 0 <= lo <= hi"));
        }
        Ok(())
    }

    /// Dimension of the space the fidelity is averaged over.
    pub fn logical_dim(&self) -> usize {
        self.subspace.as_ref().map_or(self.sys.dim(), Vec::len)
    }

    /// Input isometry `V` (columns span the averaged space).
    fn input_isometry(&self) -> Array2<C64> {
        match &self.subspace {
            Some(basis) => {
                let mut v = Array2::zeros((self.sys.dim(), basis.len()));
                for (i, b) in basis.iter().enumerate() {
                    v.column_mut(i).assign(b);
                }
                v
            }
            None => Array2::eye(self.sys.dim()),
        }
    }

    /// Expected-output isometry `W = V U_F`.
    fn output_isometry(&self) -> Array2<C64> {
        self.input_isometry().dot(self.target.as_array())
    }
}

/// Product of per-step exponentials of `H_S + H_env + Σ_j μ_j S_j ⊗ B_j`,
/// later steps leftmost.
pub fn evolve_open(
    env: &RandomEnvironmentSpec,
    sys: &SystemSpec,
    controls: &[Vec<f64>],
    tau: f64,
) -> Result<Operator> {
    let gen = OpenGenerator::new(env, sys)?;
    let mut u = Operator::identity(gen.h0.dim());
    for mu in controls {
        if mu.len() != sys.len() {
            return Err(invalid(format!(
                "control vector has {} entries for {} systems",
                mu.len(),
                sys.len()
            )));
        }
        let mut h = gen.h0.clone();
        for (j, &m) in mu.iter().enumerate() {
            if m != 0.0 {
                h = &h + &gen.couplings[j].scale_re(m);
            }
        }
        u = matrix_exp(&h, C64::new(0.0, -tau))?.dot(&u);
    }
    Ok(u)
}

struct OpenGenerator {
    h0: Operator,
    couplings: Vec<Operator>,
}

impl OpenGenerator {
    fn new(env: &RandomEnvironmentSpec, sys: &SystemSpec) -> Result<Self> {
        if env.b_ops.len() != sys.len() {
            return Err(invalid(
                "one environment coupling operator per system is required",
            ));
        }
        let de = env.dim();
        let h0 = &tensor(&sys.system_hamiltonian(), &Operator::identity(de))
            + &tensor(&Operator::identity(sys.dim()), &env.h_env);
        let couplings = (0..sys.len())
            .map(|j| tensor(&sys.embedded_coupling(j), &env.b_ops[j]))
            .collect();
        Ok(Self { h0, couplings })
    }
}

/// Exact Haar-average fidelity from the induced system channel, built by
/// tracing out the environment for every `|v_i⟩⟨v_j|` of the averaged space:
/// `F = [Tr Ẽ(I) + Σ_ij ⟨i|Ẽ(|i⟩⟨j|)|j⟩] / (k(k+1))`.
pub fn exact_fidelity(u_full: &Operator, config: &LoopConfig) -> Result<f64> {
    config.validate()?;
    let (ds, de) = (config.sys.dim(), config.env.dim());
    check_dim(ds * de, u_full.dim())?;
    let v = config.input_isometry();
    let w = config.output_isometry();
    let k = v.ncols();
    let u_adj = u_full.adjoint();
    let mut diag_sum = C64::new(0.0, 0.0);
    let mut id_sum = C64::new(0.0, 0.0);
    for i in 0..k {
        for j in 0..k {
            let vi = Operator::from_array(outer(&v.column(i).to_owned(), &v.column(j).to_owned()))?;
            let rho = tensor(&vi, &config.env.rho_env);
            let out = partial_trace_second(&u_full.dot(&rho).dot(&u_adj), ds, de)?;
            let wi = w.column(i).to_owned();
            let wj = w.column(j).to_owned();
            diag_sum += inner(&wi, &out.apply(&wj));
            if i == j {
                for m in 0..k {
                    let wm = w.column(m).to_owned();
                    id_sum += inner(&wm, &out.apply(&wm));
                }
            }
        }
    }
    Ok(((id_sum + diag_sum).re / (k * (k + 1)) as f64).clamp(0.0, 1.0))
}

fn outer(a: &Array1<C64>, b: &Array1<C64>) -> Array2<C64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j].conj())
}

fn inner(a: &Array1<C64>, b: &Array1<C64>) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Haar-random inputs in the averaged space; sample `s` uses `rng.substream(s)`.
pub fn sample_inputs(config: &LoopConfig, count: usize, rng: &Rng) -> Vec<Array1<C64>> {
    let v = config.input_isometry();
    sample_coefficients(config.logical_dim(), count, rng)
        .iter()
        .map(|c| v.dot(c))
        .collect()
}

fn sample_coefficients(k: usize, count: usize, rng: &Rng) -> Vec<Array1<C64>> {
    (0..count)
        .into_par_iter()
        .map(|s| random_haar_state(k, &mut rng.substream(s as u64)))
        .collect()
}

/// Monte-Carlo fidelity: mean and standard error of `Tr(ρ_out (Π ⊗ I))` over
/// `samples_per_estimate` Haar inputs.
pub fn fidelity_estimate(u_full: &Operator, config: &LoopConfig, rng: &Rng) -> Result<(f64, f64)> {
    config.validate()?;
    check_dim(config.sys.dim() * config.env.dim(), u_full.dim())?;
    let obj = Objective::sampled(config, rng)?;
    let a = u_full.as_array().dot(&obj.r);
    Ok(obj.stats(&obj.l, &a))
}

/// The fidelity as a function of the full unitary, in bilinear form.
struct Objective {
    /// Rows: conjugated expected outputs tensored with environment basis vectors.
    l: Array2<C64>,
    /// Columns: inputs tensored with environment eigenvectors.
    r: Array2<C64>,
    weights: Vec<f64>,
    d_env: usize,
    kind: ObjectiveKind,
}

enum ObjectiveKind {
    /// Haar average over a `k`-dimensional space.
    Exact { k: usize },
    /// One block per sampled input.
    Sampled { n: usize },
}

impl Objective {
    fn env_eigen(config: &LoopConfig) -> Result<(Vec<f64>, Array2<C64>)> {
        let spec = HermitianSpectrum::new(&config.env.rho_env)?;
        let keep: Vec<usize> = (0..spec.eigenvalues.len())
            .filter(|&b| spec.eigenvalues[b] > 1e-15)
            .collect();
        let vecs = Array2::from_shape_fn((config.env.dim(), keep.len()), |(i, c)| {
            spec.eigenvectors.get(i, keep[c])
        });
        Ok((keep.iter().map(|&b| spec.eigenvalues[b]).collect(), vecs))
    }

    /// Rows `(block, a)` hold `(w_block ⊗ e_a)†`; columns `(block, b)` hold
    /// `v_block ⊗ φ_b`.
    fn build(
        outputs: &Array2<C64>,
        inputs: &Array2<C64>,
        phis: &Array2<C64>,
        d_env: usize,
    ) -> (Array2<C64>, Array2<C64>) {
        let ds = outputs.nrows();
        let blocks = outputs.ncols();
        let nb = phis.ncols();
        let big = ds * d_env;
        let mut l = Array2::zeros((blocks * d_env, big));
        let mut r = Array2::zeros((big, blocks * nb));
        for m in 0..blocks {
            for a in 0..d_env {
                for i in 0..ds {
                    l[[m * d_env + a, i * d_env + a]] = outputs[[i, m]].conj();
                }
            }
            for b in 0..nb {
                for i in 0..ds {
                    for e in 0..d_env {
                        r[[i * d_env + e, m * nb + b]] = inputs[[i, m]] * phis[[e, b]];
                    }
                }
            }
        }
        (l, r)
    }

    fn exact(config: &LoopConfig) -> Result<Self> {
        let (weights, phis) = Self::env_eigen(config)?;
        let d_env = config.env.dim();
        let (l, r) = Self::build(
            &config.output_isometry(),
            &config.input_isometry(),
            &phis,
            d_env,
        );
        Ok(Self {
            l,
            r,
            weights,
            d_env,
            kind: ObjectiveKind::Exact {
                k: config.logical_dim(),
            },
        })
    }

    fn sampled(config: &LoopConfig, rng: &Rng) -> Result<Self> {
        let (weights, phis) = Self::env_eigen(config)?;
        let d_env = config.env.dim();
        let n = config.samples_per_estimate;
        let coeffs = sample_coefficients(config.logical_dim(), n, rng);
        let mut c = Array2::zeros((config.logical_dim(), n));
        for (s, v) in coeffs.iter().enumerate() {
            c.column_mut(s).assign(v);
        }
        let inputs = config.input_isometry().dot(&c);
        let outputs = config.output_isometry().dot(&c);
        let (l, r) = Self::build(&outputs, &inputs, &phis, d_env);
        Ok(Self {
            l,
            r,
            weights,
            d_env,
            kind: ObjectiveKind::Sampled { n },
        })
    }

    /// Mean fidelity and its standard error given `lp = L S` and `a = G P R`.
    fn stats(&self, lp: &Array2<C64>, a: &Array2<C64>) -> (f64, f64) {
        let nb = self.weights.len();
        match self.kind {
            ObjectiveKind::Exact { k } => {
                // Rows (m, a), columns (i, b); L_ab has entries M[(m,a),(i,b)].
                let m = lp.dot(a);
                let mut total = 0.0;
                for (b, &p) in self.weights.iter().enumerate() {
                    for ea in 0..self.d_env {
                        let mut tr = C64::new(0.0, 0.0);
                        let mut frob = 0.0;
                        for row in 0..k {
                            for col in 0..k {
                                let z = m[[row * self.d_env + ea, col * nb + b]];
                                frob += z.norm_sqr();
                                if row == col {
                                    tr += z;
                                }
                            }
                        }
                        total += p * (frob + tr.norm_sqr());
                    }
                }
                ((total / (k * (k + 1)) as f64).clamp(0.0, 1.0), 0.0)
            }
            ObjectiveKind::Sampled { n } => {
                let vals: Vec<f64> = (0..n)
                    .map(|sidx| {
                        let rows = lp.slice(s![sidx * self.d_env..(sidx + 1) * self.d_env, ..]);
                        let cols = a.slice(s![.., sidx * nb..(sidx + 1) * nb]);
                        let blk = rows.dot(&cols);
                        blk.indexed_iter()
                            .map(|((_, b), z)| self.weights[b] * z.norm_sqr())
                            .sum()
                    })
                    .collect();
                let mean = vals.iter().sum::<f64>() / n as f64;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                (mean, (var / n as f64).sqrt())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopTraceRow {
    pub iteration: usize,
    pub fidelity: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopReport {
    pub idealized: bool,
    pub n_steps: usize,
    pub tau: f64,
    pub initial_fidelity: f64,
    pub final_fidelity: f64,
    /// Per-step strength vectors of the final iterate.
    pub controls: Vec<Vec<f64>>,
    pub trace: Vec<LoopTraceRow>,
}

impl LoopReport {
    /// `iteration,F,stderr` rows.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,F,stderr\n");
        for r in &self.trace {
            out.push_str(&format!(
                "{},{:e},{:e}\n",
                r.iteration, r.fidelity, r.stderr
            ));
        }
        out
    }
}

struct Ascent<'a> {
    config: &'a LoopConfig,
    h0: Operator,
    /// Coupling of each step's contact subset; `None` for the empty subset.
    step_coupling: Vec<Option<Operator>>,
}

impl<'a> Ascent<'a> {
    fn new(config: &'a LoopConfig) -> Result<Self> {
        let gen = OpenGenerator::new(&config.env, &config.sys)?;
        let cycle = contact_cycle(config.sys.len());
        let per_subset: Vec<Option<Operator>> = cycle
            .iter()
            .map(|sub| {
                sub.iter()
                    .map(|&j| gen.couplings[j].clone())
                    .reduce(|acc, c| &acc + &c)
            })
            .collect();
        let step_coupling = (0..config.n_steps)
            .map(|k| per_subset[k % cycle.len()].clone())
            .collect();
        Ok(Self {
            config,
            h0: gen.h0,
            step_coupling,
        })
    }

    fn step(&self, k: usize, y: f64) -> Operator {
        let h = match &self.step_coupling[k] {
            Some(c) => &self.h0 + &c.scale_re(y * y),
            None => self.h0.clone(),
        };
        matrix_exp(&h, C64::new(0.0, -self.config.tau)).expect("finite step generator")
    }

    fn controls(&self, y: &[f64]) -> Vec<Vec<f64>> {
        let cycle = contact_cycle(self.config.sys.len());
        (0..self.config.n_steps)
            .map(|k| {
                let sub = &cycle[k % cycle.len()];
                (0..self.config.sys.len())
                    .map(|j| if sub.contains(&j) { y[k] * y[k] } else { 0.0 })
                    .collect()
            })
            .collect()
    }

    fn unitary(&self, y: &[f64]) -> Operator {
        let steps: Vec<Operator> = (0..y.len())
            .into_par_iter()
            .map(|k| self.step(k, y[k]))
            .collect();
        steps
            .iter()
            .fold(Operator::identity(self.h0.dim()), |u, g| g.dot(&u))
    }

    fn value(&self, obj: &Objective, y: &[f64]) -> (f64, f64) {
        let u = self.unitary(y);
        obj.stats(&obj.l, &u.as_array().dot(&obj.r))
    }

    fn value_and_gradient(&self, obj: &Objective, y: &[f64]) -> ((f64, f64), Vec<f64>) {
        let n = y.len();
        let steps: Vec<Operator> = (0..n).into_par_iter().map(|k| self.step(k, y[k])).collect();
        // pr[k] = P_k R with P_k = G_{k-1} … G_0.
        let mut pr = Vec::with_capacity(n + 1);
        pr.push(obj.r.clone());
        for g in &steps {
            let next = g.as_array().dot(pr.last().expect("nonempty"));
            pr.push(next);
        }
        // ls[k] = L S_k with S_k = G_{n-1} … G_{k+1}.
        let mut ls = vec![obj.l.clone(); n + 1];
        for k in (0..n).rev() {
            ls[k] = ls[k + 1].dot(steps[k].as_array());
        }
        let value = obj.stats(&obj.l, &pr[n]);
        let grad = (0..n)
            .into_par_iter()
            .map(|k| {
                if self.step_coupling[k].is_none() {
                    return 0.0;
                }
                let h = self.config.fd_step * y[k].abs().max(1.0);
                let at = |yk: f64| {
                    obj.stats(&ls[k + 1], &self.step(k, yk).as_array().dot(&pr[k]))
                        .0
                };
                (at(y[k] + h) - at(y[k] - h)) / (2.0 * h)
            })
            .collect();
        (value, grad)
    }
}

/// Finite-difference ascent of the fidelity over the per-step strengths.
///
/// Initial strengths come from `rng.substream(0)`; the estimate of iteration
/// `i` draws from `rng.substream(1 + i)`. In idealized mode the trace holds
/// the best fidelity so far and is non-decreasing.
pub fn closed_loop_ascent(config: &LoopConfig, rng: &Rng) -> Result<LoopReport> {
    config.validate()?;
    let ascent = Ascent::new(config)?;
    let mut init = rng.substream(0);
    let y0: Vec<f64> = (0..config.n_steps)
        .map(|_| init.uniform(config.mu_init.0, config.mu_init.1).sqrt())
        .collect();
    let exact = if config.idealized {
        Some(Objective::exact(config)?)
    } else {
        None
    };
    // Sampled objectives are rebuilt per draw; cache the latest one.
    let cache: RefCell<Option<(usize, Objective)>> = RefCell::new(None);
    let with_obj = |it: usize, f: &mut dyn FnMut(&Objective)| {
        if let Some(obj) = &exact {
            f(obj);
            return;
        }
        let mut slot = cache.borrow_mut();
        if slot.as_ref().map(|(i, _)| *i) != Some(it) {
            let obj = Objective::sampled(config, &rng.substream(1 + it as u64))
                .expect("validated configuration");
            *slot = Some((it, obj));
        }
        f(&slot.as_ref().expect("filled").1);
    };
    let last_stderr = Cell::new(0.0);
    let cfg = DescentConfig {
        max_iters: config.iterations,
        target: f64::NEG_INFINITY,
        step_cap: config.step_cap,
        max_halvings: 20,
        memory: if config.idealized { config.memory } else { 0 },
        fresh_draws: !config.idealized,
    };
    let mut trace = Vec::with_capacity(config.iterations + 1);
    let out = minimize(
        y0,
        &cfg,
        |it, y| {
            let mut v = 0.0;
            with_obj(it, &mut |obj| v = 1.0 - ascent.value(obj, y).0);
            v
        },
        |it, y| {
            let mut res = (0.0, Vec::new());
            with_obj(it, &mut |obj| {
                let ((f, se), g) = ascent.value_and_gradient(obj, y);
                last_stderr.set(se);
                res = (1.0 - f, g.into_iter().map(|v| -v).collect());
            });
            res
        },
        |iteration, v| {
            trace.push(LoopTraceRow {
                iteration,
                fidelity: 1.0 - v,
                stderr: last_stderr.get(),
            })
        },
        false,
    );
    Ok(LoopReport {
        idealized: config.idealized,
        n_steps: config.n_steps,
        tau: config.tau,
        initial_fidelity: trace.first().map_or(0.0, |r| r.fidelity),
        final_fidelity: 1.0 - out.value,
        controls: ascent.controls(&out.x),
        trace,
    })
}

/// Orthonormal basis of `span{|0…0⟩, |1…1⟩}` on `n` qubits.
pub fn ghz_pair_basis(n_qubits: usize) -> Vec<Array1<C64>> {
    let d = 1usize << n_qubits;
    let mut a = Array1::zeros(d);
    let mut b = Array1::zeros(d);
    a[0] = C64::new(1.0, 0.0);
    b[d - 1] = C64::new(1.0, 0.0);
    vec![a, b]
}
