//! Seeded random sources and random operator/state generators.
//!
//! Every parallel task draws from its own substream derived from the parent
//! seed and a task index, so results do not depend on scheduling.

use ndarray::{Array1, Array2};
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::operator::{Operator, C64};

#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator for task `index`; depends only on this
    /// generator's seed and stream, never on how much it has been used.
    pub fn substream(&self, index: u64) -> Rng {
        let stream = splitmix(self.stream ^ splitmix(index.wrapping_add(1)));
        Self::with_stream(self.seed, stream)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.inner.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn complex_normal(&mut self) -> C64 {
        C64::new(self.normal(), self.normal())
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// GUE sample normalized to unit Hilbert–Schmidt norm. Exactly Hermitian.
pub fn random_hermitian(dim: usize, rng: &mut Rng) -> Operator {
    let mut a = Array2::<C64>::zeros((dim, dim));
    for i in 0..dim {
        a[[i, i]] = C64::new(rng.normal(), 0.0);
        for j in (i + 1)..dim {
            let z = rng.complex_normal() * std::f64::consts::FRAC_1_SQRT_2;
            a[[i, j]] = z;
            a[[j, i]] = z.conj();
        }
    }
    let op = Operator::from_array(a).expect("dim >= 1");
    let norm = op.hs_norm();
    op.scale_re(1.0 / norm)
}

/// Haar-random pure state (normalized complex Gaussian vector).
pub fn random_haar_state(dim: usize, rng: &mut Rng) -> Array1<C64> {
    let v: Array1<C64> = (0..dim).map(|_| rng.complex_normal()).collect();
    normalize(v)
}

/// Haar-random state inside `span(basis)`; the basis must be orthonormal.
pub fn random_haar_state_in_subspace(basis: &[Array1<C64>], rng: &mut Rng) -> Result<Array1<C64>> {
    let first = basis
        .first()
        .ok_or_else(|| invalid("subspace basis must not be empty"))?;
    let coeffs = random_haar_state(basis.len(), rng);
    let mut out = Array1::zeros(first.len());
    for (c, b) in coeffs.iter().zip(basis) {
        out.scaled_add(*c, b);
    }
    Ok(out)
}

fn normalize(v: Array1<C64>) -> Array1<C64> {
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.mapv(|z| z / n)
}

/// True when the vectors are pairwise orthogonal and unit-length within `tol`.
pub fn is_orthonormal(basis: &[Array1<C64>], tol: f64) -> bool {
    basis.iter().enumerate().all(|(i, a)| {
        basis.iter().enumerate().all(|(j, b)| {
            let ip: C64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            (ip - want).norm() <= tol
        })
    })
}
