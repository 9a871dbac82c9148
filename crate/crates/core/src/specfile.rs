//! JSON experiment descriptions.
//!
//! Complex matrices are lists of rows; an entry is either a real number or a
//! `[re, im]` pair. Output always uses pairs.
//!
//! ```json
//! {
//!   "systems": [{"h": [[1, 0], [0, -1]], "s": [[0, 1], [1, 0]]}],
//!   "bath": {"omega": 5.0, "harmonics": [1, 2], "A": [[[0.1, 0.2], 0.3]], "fock_cutoff": 6}
//! }
//! ```

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::magnus::KappaMatrix;
use crate::model::{BathSpec, LocalSystem, RandomEnvironmentSpec, SystemSpec};
use crate::operator::{Operator, C64};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

impl Entry {
    fn value(self) -> C64 {
        match self {
            Entry::Real(x) => C64::new(x, 0.0),
            Entry::Complex([re, im]) => C64::new(re, im),
        }
    }
}

impl From<C64> for Entry {
    fn from(z: C64) -> Self {
        Entry::Complex([z.re, z.im])
    }
}

pub type MatrixJson = Vec<Vec<Entry>>;

pub fn matrix_from_json(rows: &MatrixJson) -> Result<Array2<C64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(invalid(
            "matrix must be a nonempty list of equal-length rows",
        ));
    }
    let out = Array2::from_shape_fn((nrows, ncols), |(i, j)| rows[i][j].value());
    if out.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(invalid("matrix entries must be finite"));
    }
    Ok(out)
}

pub fn operator_from_json(rows: &MatrixJson) -> Result<Operator> {
    Operator::from_array(matrix_from_json(rows)?)
}

pub fn matrix_to_json(m: &Array2<C64>) -> MatrixJson {
    m.rows()
        .into_iter()
        .map(|r| r.iter().map(|&z| Entry::from(z)).collect())
        .collect()
}

/// `false` entries force the corresponding coupling to zero.
pub fn mask_from_rows(rows: &[Vec<bool>]) -> Result<Array2<bool>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(invalid("mask must be a nonempty square list of rows"));
    }
    Ok(Array2::from_shape_fn((n, n), |(j, k)| rows[j][k]))
}

pub fn kappa_from_rows(rows: &[Vec<f64>]) -> Result<KappaMatrix> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(invalid("kappa must be a nonempty square list of rows"));
    }
    KappaMatrix::new(Array2::from_shape_fn((n, n), |(j, k)| rows[j][k]), 0.0)
}

pub fn kappa_to_rows(k: &KappaMatrix) -> Vec<Vec<f64>> {
    k.entries.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Basis vectors, one per list.
pub fn basis_from_json(vectors: &[Vec<Entry>]) -> Result<Vec<Array1<C64>>> {
    if vectors.is_empty()
        || vectors
            .iter()
            .any(|v| v.is_empty() || v.len() != vectors[0].len())
    {
        return Err(invalid(
            "subspace basis must be a nonempty list of equal-length vectors",
        ));
    }
    Ok(vectors
        .iter()
        .map(|v| v.iter().map(|e| e.value()).collect())
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemJson {
    pub h: MatrixJson,
    pub s: MatrixJson,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathJson {
    pub omega: f64,
    pub harmonics: Vec<u32>,
    #[serde(rename = "A")]
    pub a: MatrixJson,
    pub fock_cutoff: usize,
}

/// Environment drawn by [`RandomEnvironmentSpec::random`] from `Rng::new(seed)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomEnvJson {
    pub dim: usize,
    pub seed: u64,
}

/// Finite environment given explicitly: Hamiltonian, one coupling operator
/// per system and the initial state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentJson {
    pub h: MatrixJson,
    pub b: Vec<MatrixJson>,
    pub rho: MatrixJson,
}

/// A named gate or an explicit matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetJson {
    Name(String),
    Matrix(MatrixJson),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefactorizationJson {
    pub m: Option<usize>,
    pub slices_per_period: Option<usize>,
    pub probe_occupation: Option<usize>,
    pub residual_tol: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisJson {
    pub target: Option<TargetJson>,
    /// `sync` or `async`.
    pub protocol: Option<String>,
    pub n_factors: Option<usize>,
    pub restarts: Option<usize>,
    /// `mask[j][k] = false` forces `κ_jk = 0`.
    pub mask: Option<Vec<Vec<bool>>>,
    pub phase_invariant: Option<bool>,
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    /// Use this κ instead of the bath's.
    pub kappa: Option<Vec<Vec<f64>>>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosedLoopJson {
    pub target: Option<TargetJson>,
    /// `none`, `ghz2`, or a list of basis vectors.
    pub subspace: Option<SubspaceJson>,
    pub steps: Option<usize>,
    pub tau: Option<f64>,
    pub iters: Option<usize>,
    /// `exact` or a sample count.
    pub samples: Option<SamplesJson>,
    /// Replace every environment coupling operator by zero.
    pub decoupled: Option<bool>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SubspaceJson {
    Name(String),
    Basis(Vec<Vec<Entry>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SamplesJson {
    Count(usize),
    Mode(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub systems: Vec<SystemJson>,
    /// Coupling strengths for refactorization runs; all ones when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bath: Option<BathJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_env: Option<RandomEnvJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environment: Option<EnvironmentJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refactorization: Option<RefactorizationJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthesis: Option<SynthesisJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_loop: Option<ClosedLoopJson>,
}

impl SpecFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self =
            serde_json::from_str(text).map_err(|e| invalid(format!("spec file: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec files serialize")
    }

    /// Spec with explicit systems and, optionally, a bath.
    pub fn from_parts(sys: &SystemSpec, bath: Option<&BathSpec>) -> Self {
        Self {
            systems: sys
                .systems()
                .iter()
                .map(|l| SystemJson {
                    h: matrix_to_json(l.h.as_array()),
                    s: matrix_to_json(l.s.as_array()),
                })
                .collect(),
            mu: None,
            bath: bath.map(|b| BathJson {
                omega: b.omega,
                harmonics: b.harmonics.clone(),
                a: matrix_to_json(&b.coupling),
                fock_cutoff: b.fock_cutoff,
            }),
            random_env: None,
            environment: None,
            refactorization: None,
            synthesis: None,
            closed_loop: None,
        }
    }

    /// Checks everything that does not depend on the subcommand.
    pub fn validate(&self) -> Result<()> {
        let sys = self.system()?;
        if let Some(mu) = &self.mu {
            if mu.len() != sys.len() || mu.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
                return Err(invalid(
                    "mu must list one finite nonnegative strength per system",
                ));
            }
        }
        if let Some(b) = self.bath()? {
            if b.n_systems() != sys.len() {
                return Err(invalid(format!(
                    "bath coupling has {} rows for {} systems",
                    b.n_systems(),
                    sys.len()
                )));
            }
        }
        if let Some(r) = &self.random_env {
            if r.dim == 0 {
                return Err(invalid("random_env.dim must be positive"));
            }
        }
        if self.random_env.is_some() && self.environment.is_some() {
            return Err(invalid("give either random_env or environment, not both"));
        }
        if let Some(env) = self.environment()? {
            if env.b_ops.len() != sys.len() {
                return Err(invalid(format!(
                    "environment has {} coupling operators for {} systems",
                    env.b_ops.len(),
                    sys.len()
                )));
            }
        }
        Ok(())
    }

    pub fn system(&self) -> Result<SystemSpec> {
        let systems = self
            .systems
            .iter()
            .map(|s| LocalSystem::new(operator_from_json(&s.h)?, operator_from_json(&s.s)?))
            .collect::<Result<Vec<_>>>()?;
        SystemSpec::new(systems)
    }

    pub fn mu(&self) -> Vec<f64> {
        self.mu
            .clone()
            .unwrap_or_else(|| vec![1.0; self.systems.len()])
    }

    pub fn bath(&self) -> Result<Option<BathSpec>> {
        self.bath
            .as_ref()
            .map(|b| {
                BathSpec::new(
                    b.omega,
                    b.harmonics.clone(),
                    matrix_from_json(&b.a)?,
                    b.fock_cutoff,
                )
            })
            .transpose()
    }

    pub fn require_bath(&self) -> Result<BathSpec> {
        self.bath()?
            .ok_or_else(|| invalid("spec file has no bath section"))
    }

    /// The finite environment, from either the explicit or the seeded form.
    pub fn environment(&self) -> Result<Option<RandomEnvironmentSpec>> {
        if let Some(e) = &self.environment {
            let b =
                e.b.iter()
                    .map(operator_from_json)
                    .collect::<Result<Vec<_>>>()?;
            return RandomEnvironmentSpec::new(
                operator_from_json(&e.h)?,
                b,
                operator_from_json(&e.rho)?,
            )
            .map(Some);
        }
        Ok(self.random_env.as_ref().map(|r| {
            RandomEnvironmentSpec::random(r.dim, self.systems.len(), &mut Rng::new(r.seed))
        }))
    }

    pub fn with_environment(mut self, env: &RandomEnvironmentSpec) -> Self {
        self.random_env = None;
        self.environment = Some(EnvironmentJson {
            h: matrix_to_json(env.h_env.as_array()),
            b: env
                .b_ops
                .iter()
                .map(|b| matrix_to_json(b.as_array()))
                .collect(),
            rho: matrix_to_json(env.rho_env.as_array()),
        });
        self
    }
}
