//! Gate synthesis by concatenated Zermelo segments.
//!
//! After refactorization each segment acts on the systems alone as
//! `e^{-iτ_k B} e^{-iα_k A_k}` with `B = Σ_j H_j` (unit Hilbert–Schmidt norm)
//! and `A_k = Σ_jj' S_j μ_j μ_j' κ_jj' S_j'`. Segment `k+1` multiplies from the
//! left. Durations and strengths are fitted to a target by minimizing the
//! squared operator distance.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Result};
use crate::magnus::KappaMatrix;
use crate::model::SystemSpec;
use crate::operator::{matrix_exp, HermitianSpectrum, Operator, C64};
use crate::optim::{minimize, DescentConfig};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    /// Every system in contact in every segment, one shared strength.
    Synchronous,
    /// Repeated cycles over all contact subsets, ordered by size then index.
    Asynchronous,
    /// User-supplied repeating list of contact subsets.
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub tau: f64,
    pub mu: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub kind: ProtocolKind,
    pub segments: Vec<Segment>,
}

impl Protocol {
    pub fn n_factors(&self) -> usize {
        2 * self.segments.len()
    }

    /// Checks the structural invariants of `kind`.
    pub fn validate(&self, n_systems: usize) -> Result<()> {
        for (k, seg) in self.segments.iter().enumerate() {
            check_dim(n_systems, seg.mu.len())?;
            if !(seg.tau >= 0.0 && seg.tau.is_finite()) {
                return Err(invalid(format!(
                    "segment {k}: duration must be finite and nonnegative"
                )));
            }
            if seg.mu.iter().any(|&m| !(m >= 0.0 && m.is_finite())) {
                return Err(invalid(format!(
                    "segment {k}: strengths must be finite and nonnegative"
                )));
            }
            let shared = |subset: &[usize]| {
                let first = subset.first().map(|&j| seg.mu[j]);
                (0..n_systems).all(|j| {
                    if subset.contains(&j) {
                        Some(seg.mu[j]) == first
                    } else {
                        seg.mu[j] == 0.0
                    }
                })
            };
            let ok = match self.kind {
                ProtocolKind::Synchronous => shared(&(0..n_systems).collect::<Vec<_>>()),
                ProtocolKind::Asynchronous => {
                    let cycle = contact_cycle(n_systems);
                    shared(&cycle[k % cycle.len()])
                }
                ProtocolKind::Custom => true,
            };
            if !ok {
                return Err(invalid(format!(
                    "segment {k} violates the {:?} contact pattern",
                    self.kind
                )));
            }
        }
        Ok(())
    }
}

/// All subsets of `0..n`, by size then lexicographically: for three systems
/// `∅, {1}, {2}, {3}, {1,2}, {1,3}, {2,3}, {1,2,3}` (1-based).
pub fn contact_cycle(n: usize) -> Vec<Vec<usize>> {
    let mut subsets: Vec<Vec<usize>> = (0u32..(1 << n))
        .map(|mask| (0..n).filter(|&j| mask & (1 << j) != 0).collect())
        .collect();
    subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    subsets
}

/// How the per-segment coupling scale depends on the segment duration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum KappaConvention {
    /// `κ^(k) = μ μ κ`; the coupling exponent is `τ_k A_k`.
    #[default]
    Fixed,
    /// `κ^(k) = μ μ (τ_k/τ_ref) κ`; the coupling exponent is `(τ_k²/τ_ref) A_k`.
    ProportionalToDuration { reference_tau: f64 },
}

impl KappaConvention {
    fn alpha(&self, tau: f64) -> f64 {
        match *self {
            KappaConvention::Fixed => tau,
            KappaConvention::ProportionalToDuration { reference_tau } => tau * tau / reference_tau,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthesisProblem {
    pub sys: SystemSpec,
    pub kappa: KappaMatrix,
    pub target: Operator,
    pub topology_mask: Array2<bool>,
    pub n_factors: usize,
    pub phase_invariant: bool,
    pub kind: ProtocolKind,
    pub custom_schedule: Vec<Vec<usize>>,
    pub convention: KappaConvention,
}

impl SynthesisProblem {
    /// Full topology, phase-invariant distance, fixed κ convention.
    pub fn new(
        sys: SystemSpec,
        kappa: KappaMatrix,
        target: Operator,
        n_factors: usize,
        kind: ProtocolKind,
    ) -> Result<Self> {
        let n = sys.len();
        let problem = Self {
            topology_mask: Array2::from_elem((n, n), true),
            sys,
            kappa,
            target,
            n_factors,
            phase_invariant: true,
            kind,
            custom_schedule: Vec::new(),
            convention: KappaConvention::Fixed,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn with_mask(mut self, mask: Array2<bool>) -> Result<Self> {
        self.topology_mask = mask;
        self.validate()?;
        Ok(self)
    }

    pub fn with_phase_invariant(mut self, phase_invariant: bool) -> Self {
        self.phase_invariant = phase_invariant;
        self
    }

    pub fn with_convention(mut self, convention: KappaConvention) -> Result<Self> {
        self.convention = convention;
        self.validate()?;
        Ok(self)
    }

    pub fn with_schedule(mut self, schedule: Vec<Vec<usize>>) -> Result<Self> {
        self.kind = ProtocolKind::Custom;
        self.custom_schedule = schedule;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.sys.len();
        check_dim(n, self.kappa.n())?;
        check_dim(n, self.topology_mask.nrows())?;
        check_dim(n, self.topology_mask.ncols())?;
        check_dim(self.sys.dim(), self.target.dim())?;
        if self.n_factors == 0 || !self.n_factors.is_multiple_of(2) {
            return Err(invalid("n_factors must be a positive even number"));
        }
        if !self.target.is_unitary(1e-10) {
            return Err(invalid("target must be unitary"));
        }
        for j in 0..n {
            for k in 0..n {
                if self.topology_mask[[j, k]] != self.topology_mask[[k, j]] {
                    return Err(invalid("topology mask must be symmetric"));
                }
            }
        }
        if let KappaConvention::ProportionalToDuration { reference_tau } = self.convention {
            if !(reference_tau > 0.0 && reference_tau.is_finite()) {
                return Err(invalid("reference duration must be positive"));
            }
        }
        if self.kind == ProtocolKind::Custom {
            if self.custom_schedule.is_empty() {
                return Err(invalid("custom protocol needs a nonempty contact schedule"));
            }
            if self.custom_schedule.iter().flatten().any(|&j| j >= n) {
                return Err(invalid("contact schedule names an unknown system"));
            }
        }
        if self.sys.system_hamiltonian().hs_norm() == 0.0 {
            return Err(invalid("winds must not all vanish"));
        }
        Ok(())
    }

    pub fn segments(&self) -> usize {
        self.n_factors / 2
    }

    pub fn masked_kappa(&self) -> KappaMatrix {
        self.kappa
            .masked(&self.topology_mask)
            .expect("validated shape")
    }

    /// `‖Σ_j H_j‖`. Protocol durations are measured in units of its inverse.
    pub fn time_scale(&self) -> f64 {
        self.sys.system_hamiltonian().hs_norm()
    }

    /// `B = Σ_j H_j / ‖Σ_j H_j‖`.
    pub fn wind(&self) -> Operator {
        self.sys
            .system_hamiltonian()
            .scale_re(1.0 / self.time_scale())
    }

    /// `Σ_jk S_j μ_j μ_k κ_jk S_k / ‖Σ_j H_j‖` with the topology mask applied.
    pub fn coupling_for(&self, mu: &[f64]) -> Result<Operator> {
        let k = self.masked_kappa().scaled_by(mu)?;
        Ok(self
            .sys
            .pairwise_coupling(&k.entries)?
            .hermitian_part()
            .scale_re(1.0 / self.time_scale()))
    }

    /// Contact subset of segment `k` (0-based).
    pub fn contact_subset(&self, k: usize) -> Vec<usize> {
        match self.kind {
            ProtocolKind::Synchronous => (0..self.sys.len()).collect(),
            ProtocolKind::Asynchronous => {
                let cycle = contact_cycle(self.sys.len());
                cycle[k % cycle.len()].clone()
            }
            ProtocolKind::Custom => self.custom_schedule[k % self.custom_schedule.len()].clone(),
        }
    }

    fn mu_vector(&self, k: usize, strength: f64) -> Vec<f64> {
        let mut mu = vec![0.0; self.sys.len()];
        for j in self.contact_subset(k) {
            mu[j] = strength;
        }
        mu
    }

    /// Maps unconstrained parameters `[x_1..x_K, y_1..y_K]` to a protocol with
    /// `τ_k = x_k²` and `μ^(k) = y_k²`.
    pub fn protocol_from_params(&self, params: &[f64]) -> Result<Protocol> {
        let n = self.segments();
        check_dim(2 * n, params.len())?;
        let segments = (0..n)
            .map(|k| Segment {
                tau: params[k] * params[k],
                mu: self.mu_vector(k, params[n + k] * params[n + k]),
            })
            .collect();
        Ok(Protocol {
            kind: self.kind,
            segments,
        })
    }
}

/// `Π_k e^{-iτ_k B} e^{-iα_k A_k}`, later segments leftmost.
pub fn protocol_unitary(problem: &SynthesisProblem, protocol: &Protocol) -> Result<Operator> {
    protocol.validate(problem.sys.len())?;
    let b = problem.wind();
    let mut u = Operator::identity(problem.sys.dim());
    for seg in &protocol.segments {
        let a = problem.coupling_for(&seg.mu)?;
        if a.hs_norm() > 0.0 {
            let alpha = problem.convention.alpha(seg.tau);
            u = matrix_exp(&a, C64::new(0.0, -alpha))?.dot(&u);
        }
        u = matrix_exp(&b, C64::new(0.0, -seg.tau))?.dot(&u);
    }
    Ok(u)
}

/// Squared Hilbert–Schmidt distance `2d - 2 Re Tr(u† v)`; with
/// `phase_invariant` the real part is replaced by the modulus.
pub fn distance(u: &Operator, target: &Operator, phase_invariant: bool) -> Result<f64> {
    check_dim(target.dim(), u.dim())?;
    let overlap = u.hs_inner(target);
    Ok(distance_from_overlap(overlap, u.dim(), phase_invariant))
}

fn distance_from_overlap(overlap: C64, dim: usize, phase_invariant: bool) -> f64 {
    let d = dim as f64;
    let v = if phase_invariant {
        2.0 * d - 2.0 * overlap.norm()
    } else {
        2.0 * d - 2.0 * overlap.re
    };
    v.max(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    pub restarts: usize,
    /// Relative central-difference step in the unconstrained parameters.
    pub fd_step: f64,
    /// Largest parameter change allowed on the first trial of a line search.
    pub step_cap: f64,
    pub max_halvings: usize,
    /// Curvature pairs kept for the quasi-Newton direction.
    pub memory: usize,
    pub tol_d: f64,
    pub tau_init: (f64, f64),
    pub mu_init: (f64, f64),
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 3000,
            restarts: 10,
            fd_step: 1e-5,
            step_cap: 0.5,
            max_halvings: 20,
            memory: 20,
            tol_d: 1e-3,
            tau_init: (1.0, 10.0),
            mu_init: (0.0, 3.0),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(invalid("at least one restart is required"));
        }
        if !(self.fd_step > 0.0 && self.step_cap > 0.0 && self.tol_d >= 0.0) {
            return Err(invalid(
                "fd_step and step_cap must be positive, tol_d nonnegative",
            ));
        }
        let ok = |(lo, hi): (f64, f64)| lo >= 0.0 && hi >= lo && hi.is_finite();
        if !ok(self.tau_init) || !ok(self.mu_init) {
            return Err(invalid("initialization ranges must satisfy 0 <= lo <= hi"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub restart: usize,
    pub iteration: usize,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub protocol: Protocol,
    pub distance: f64,
    pub converged: bool,
    pub best_restart: usize,
    pub restarts_run: usize,
    pub iterations: usize,
    pub n_factors: usize,
    pub phase_invariant: bool,
    pub trace: Vec<TraceRow>,
}

impl SynthesisReport {
    /// `restart,iteration,D` rows.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("restart,iteration,D\n");
        for r in &self.trace {
            out.push_str(&format!("{},{},{:e}\n", r.restart, r.iteration, r.distance));
        }
        out
    }
}

/// Fast evaluation of `D(params)` and its finite-difference gradient.
struct Evaluator<'a> {
    problem: &'a SynthesisProblem,
    wind: HermitianSpectrum,
    coupling: Vec<Option<HermitianSpectrum>>,
    target_adj: Operator,
}

impl<'a> Evaluator<'a> {
    fn new(problem: &'a SynthesisProblem) -> Result<Self> {
        let wind = HermitianSpectrum::new(&problem.wind())?;
        let coupling = (0..problem.segments())
            .map(|k| {
                let a = problem.coupling_for(&problem.mu_vector(k, 1.0))?;
                if a.hs_norm() == 0.0 {
                    Ok(None)
                } else {
                    HermitianSpectrum::new(&a).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            problem,
            wind,
            coupling,
            target_adj: problem.target.adjoint(),
        })
    }

    fn segment(&self, k: usize, x: f64, y: f64) -> Operator {
        let tau = x * x;
        let mu2 = (y * y) * (y * y);
        let b = self.wind.exp_i(tau);
        match &self.coupling[k] {
            Some(a) => b.dot(&a.exp_i(self.problem.convention.alpha(tau) * mu2)),
            None => b,
        }
    }

    fn dist(&self, overlap: C64) -> f64 {
        distance_from_overlap(
            overlap,
            self.problem.sys.dim(),
            self.problem.phase_invariant,
        )
    }

    fn value(&self, p: &[f64]) -> f64 {
        let n = self.problem.segments();
        let mut u = Operator::identity(self.problem.sys.dim());
        for k in 0..n {
            u = self.segment(k, p[k], p[n + k]).dot(&u);
        }
        // Tr(T† U) is the conjugate of Tr(U† T); both distances only use Re and |·|.
        let z = self.target_adj.dot(&u).trace();
        let v = self.dist(z);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    }

    fn value_and_gradient(&self, p: &[f64], fd_step: f64) -> (f64, Vec<f64>) {
        let n = self.problem.segments();
        let d = self.problem.sys.dim();
        let g: Vec<Operator> = (0..n).map(|k| self.segment(k, p[k], p[n + k])).collect();
        let mut prefix = vec![Operator::identity(d)];
        for gk in &g {
            let next = gk.dot(prefix.last().expect("nonempty"));
            prefix.push(next);
        }
        let mut suffix = vec![Operator::identity(d); n + 1];
        for k in (0..n).rev() {
            suffix[k] = suffix[k + 1].dot(&g[k]);
        }
        let value = self.dist(self.target_adj.dot(&prefix[n]).trace());
        // D depends on G_k through Tr(M_k G_k) with M_k = P_k T† S_{k+1}.
        let parts: Vec<(f64, f64)> = (0..n)
            .into_par_iter()
            .map(|k| {
                let m = prefix[k].dot(&self.target_adj).dot(&suffix[k + 1]);
                let at = |x: f64, y: f64| self.dist(m.dot(&self.segment(k, x, y)).trace());
                let (x, y) = (p[k], p[n + k]);
                let hx = fd_step * x.abs().max(1.0);
                let hy = fd_step * y.abs().max(1.0);
                let gx = (at(x + hx, y) - at(x - hx, y)) / (2.0 * hx);
                let gy = if self.coupling[k].is_some() {
                    (at(x, y + hy) - at(x, y - hy)) / (2.0 * hy)
                } else {
                    0.0
                };
                (gx, gy)
            })
            .collect();
        let mut grad = vec![0.0; 2 * n];
        for (k, (gx, gy)) in parts.into_iter().enumerate() {
            grad[k] = gx;
            grad[n + k] = gy;
        }
        (value, grad)
    }
}

struct RestartOutcome {
    params: Vec<f64>,
    distance: f64,
    iterations: usize,
    trace: Vec<TraceRow>,
}

fn descend(eval: &Evaluator, p: Vec<f64>, opt: &OptimizerConfig, restart: usize) -> RestartOutcome {
    let cfg = DescentConfig {
        max_iters: opt.max_iters,
        target: opt.tol_d,
        step_cap: opt.step_cap,
        max_halvings: opt.max_halvings,
        memory: opt.memory,
        fresh_draws: false,
    };
    let mut trace = Vec::new();
    let out = minimize(
        p,
        &cfg,
        |_, x| eval.value(x),
        |_, x| eval.value_and_gradient(x, opt.fd_step),
        |iteration, distance| {
            trace.push(TraceRow {
                restart,
                iteration,
                distance,
            })
        },
        true,
    );
    RestartOutcome {
        params: out.x,
        distance: out.value,
        iterations: out.iterations,
        trace,
    }
}

fn initial_params(problem: &SynthesisProblem, opt: &OptimizerConfig, rng: &mut Rng) -> Vec<f64> {
    let n = problem.segments();
    let mut p = Vec::with_capacity(2 * n);
    for _ in 0..n {
        p.push(rng.uniform(opt.tau_init.0, opt.tau_init.1).sqrt());
    }
    for _ in 0..n {
        p.push(rng.uniform(opt.mu_init.0, opt.mu_init.1).sqrt());
    }
    p
}

/// Multi-start fit of segment durations and strengths to the target.
///
/// Restart `r` draws its initial point from `rng.substream(r)`. Restarts run
/// in parallel batches; the search stops after the first batch containing a
/// success, and the report keeps restarts up to the first success only, so
/// the result does not depend on the thread count.
pub fn synthesize(
    problem: &SynthesisProblem,
    opt: &OptimizerConfig,
    rng: &Rng,
) -> Result<SynthesisReport> {
    problem.validate()?;
    opt.validate()?;
    let eval = Evaluator::new(problem)?;
    let batch = rayon::current_num_threads().max(1);
    let mut outcomes: Vec<RestartOutcome> = Vec::new();
    let mut start = 0;
    while start < opt.restarts {
        let end = (start + batch).min(opt.restarts);
        let mut done: Vec<RestartOutcome> = (start..end)
            .into_par_iter()
            .map(|r| {
                let mut sub = rng.substream(r as u64);
                let p0 = initial_params(problem, opt, &mut sub);
                descend(&eval, p0, opt, r)
            })
            .collect();
        outcomes.append(&mut done);
        if let Some(first) = outcomes.iter().position(|o| o.distance <= opt.tol_d) {
            outcomes.truncate(first + 1);
            break;
        }
        start = end;
    }
    let best_restart = outcomes
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.distance.total_cmp(&b.1.distance).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .expect("at least one restart");
    let best = &outcomes[best_restart];
    let protocol = problem.protocol_from_params(&best.params)?;
    Ok(SynthesisReport {
        distance: best.distance,
        converged: best.distance <= opt.tol_d,
        best_restart,
        restarts_run: outcomes.len(),
        iterations: best.iterations,
        n_factors: problem.n_factors,
        phase_invariant: problem.phase_invariant,
        trace: outcomes
            .iter()
            .flat_map(|o| o.trace.iter().copied())
            .collect(),
        protocol,
    })
}
