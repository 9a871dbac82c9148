//! Dense complex operators.
//!
//! [`Operator`] is the single carrier for Hamiltonians, unitaries and density
//! matrices. Storage is a square row-major `Array2<Complex64>`; all tensor
//! products use the convention that the left factor varies slowest.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use num_complex::Complex64;

use crate::error::{check_dim, invalid, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Square dense complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator(Array2<C64>);

impl Operator {
    pub fn zeros(dim: usize) -> Self {
        Self(Array2::zeros((dim, dim)))
    }

    pub fn identity(dim: usize) -> Self {
        Self(Array2::eye(dim))
    }

    /// Wraps a square array; rejects non-square or empty input.
    pub fn from_array(a: Array2<C64>) -> Result<Self> {
        let (r, c) = a.dim();
        if r == 0 {
            return Err(invalid("operator must have positive dimension"));
        }
        check_dim(r, c)?;
        Ok(Self(a))
    }

    /// Builds an operator from rows; every row must have `rows.len()` entries.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let dim = rows.len();
        let mut a = Array2::zeros((dim, dim));
        for (i, row) in rows.iter().enumerate() {
            check_dim(dim, row.len())?;
            for (j, &v) in row.iter().enumerate() {
                a[[i, j]] = v;
            }
        }
        Self::from_array(a)
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| C64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn diagonal(diag: &[C64]) -> Self {
        let mut a = Array2::zeros((diag.len(), diag.len()));
        for (i, &d) in diag.iter().enumerate() {
            a[[i, i]] = d;
        }
        Self(a)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_array(&self) -> &Array2<C64> {
        &self.0
    }

    pub fn view(&self) -> ArrayView2<'_, C64> {
        self.0.view()
    }

    pub fn into_array(self) -> Array2<C64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[[i, j]]
    }

    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.0[[i, j]] = v;
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.t().mapv(|z| z.conj()))
    }

    pub fn dot(&self, other: &Operator) -> Self {
        Self(self.0.dot(&other.0))
    }

    pub fn apply(&self, v: &Array1<C64>) -> Array1<C64> {
        self.0.dot(v)
    }

    pub fn scale(&self, c: C64) -> Self {
        Self(&self.0 * c)
    }

    pub fn scale_re(&self, c: f64) -> Self {
        Self(&self.0 * C64::new(c, 0.0))
    }

    pub fn trace(&self) -> C64 {
        self.0.diag().sum()
    }

    /// `[self, other]`
    pub fn commutator(&self, other: &Operator) -> Self {
        Self(self.0.dot(&other.0) - other.0.dot(&self.0))
    }

    /// `Tr(self† other)`
    pub fn hs_inner(&self, other: &Operator) -> C64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn hs_norm(&self) -> f64 {
        hs_norm(self)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn one_norm(&self) -> f64 {
        one_norm(&self.0.view())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let n = self.dim();
        (0..n).all(|i| (i..n).all(|j| (self.0[[i, j]] - self.0[[j, i]].conj()).norm() <= tol))
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        let prod = self.adjoint().dot(self);
        (&prod - &Operator::identity(self.dim())).max_abs() <= tol
    }

    /// Hermitian part `(A + A†)/2`, used to remove rounding asymmetry.
    pub fn hermitian_part(&self) -> Self {
        Self((&self.0 + &self.0.t().mapv(|z| z.conj())) * C64::new(0.5, 0.0))
    }

    pub fn kron(&self, other: &Operator) -> Self {
        tensor(self, other)
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator(&self.0 + &rhs.0)
    }
}

impl Add for Operator {
    type Output = Operator;
    fn add(self, rhs: Operator) -> Operator {
        Operator(self.0 + rhs.0)
    }
}

impl AddAssign<&Operator> for Operator {
    fn add_assign(&mut self, rhs: &Operator) {
        self.0 += &rhs.0;
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator(&self.0 - &rhs.0)
    }
}

impl Sub for Operator {
    type Output = Operator;
    fn sub(self, rhs: Operator) -> Operator {
        Operator(self.0 - rhs.0)
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.dot(rhs)
    }
}

impl Mul for Operator {
    type Output = Operator;
    fn mul(self, rhs: Operator) -> Operator {
        self.dot(&rhs)
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        Operator(-&self.0)
    }
}

/// Kronecker product `a ⊗ b`; entry `(i*db + k, j*db + m) = a[i,j] * b[k,m]`.
pub fn tensor(a: &Operator, b: &Operator) -> Operator {
    let (da, db) = (a.dim(), b.dim());
    let mut out = Array2::zeros((da * db, da * db));
    for i in 0..da {
        for j in 0..da {
            let aij = a.0[[i, j]];
            if aij == ZERO {
                continue;
            }
            out.slice_mut(s![i * db..(i + 1) * db, j * db..(j + 1) * db])
                .assign(&(&b.0 * aij));
        }
    }
    Operator(out)
}

/// Tensor product of a list of factors, left to right.
pub fn tensor_all<'a>(factors: impl IntoIterator<Item = &'a Operator>) -> Operator {
    factors
        .into_iter()
        .fold(Operator::identity(1), |acc, f| tensor(&acc, f))
}

/// Embeds `op` at position `slot` of a register with local dimensions `dims`.
pub fn embed_local(op: &Operator, slot: usize, dims: &[usize]) -> Result<Operator> {
    if slot >= dims.len() {
        return Err(invalid(format!(
            "slot {slot} out of range for {} subsystems",
            dims.len()
        )));
    }
    check_dim(dims[slot], op.dim())?;
    let left: usize = dims[..slot].iter().product();
    let right: usize = dims[slot + 1..].iter().product();
    Ok(tensor(
        &tensor(&Operator::identity(left), op),
        &Operator::identity(right),
    ))
}

/// Partial trace over the second factor of a `d1*d2` operator.
pub fn partial_trace_second(op: &Operator, d1: usize, d2: usize) -> Result<Operator> {
    check_dim(d1 * d2, op.dim())?;
    let mut out = Array2::zeros((d1, d1));
    for i in 0..d1 {
        for j in 0..d1 {
            let mut acc = ZERO;
            for k in 0..d2 {
                acc += op.0[[i * d2 + k, j * d2 + k]];
            }
            out[[i, j]] = acc;
        }
    }
    Ok(Operator(out))
}

/// Hilbert–Schmidt (Frobenius) norm `sqrt(Tr(a† a))`.
pub fn hs_norm(a: &Operator) -> f64 {
    a.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub(crate) fn one_norm(a: &ArrayView2<C64>) -> f64 {
    a.axis_iter(Axis(1))
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// Largest 1-norms for which the degree-m approximant reaches unit roundoff.
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA13: f64 = 5.371920351148152;

/// `exp(scale * h)` by scaling and squaring with diagonal Padé approximants.
pub fn matrix_exp(h: &Operator, scale: C64) -> Result<Operator> {
    if !h.is_finite() || !(scale.re.is_finite() && scale.im.is_finite()) {
        return Err(invalid("matrix_exp: non-finite input"));
    }
    let a = &h.0 * scale;
    Ok(Operator(expm_array(a)))
}

fn expm_array(a: Array2<C64>) -> Array2<C64> {
    let n = a.nrows();
    let norm = one_norm(&a.view());
    if norm == 0.0 {
        return Array2::eye(n);
    }
    for &(m, theta) in &THETA {
        if norm <= theta {
            let coeffs: &[f64] = match m {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            return pade_low(&a, coeffs);
        }
    }
    let squarings = ((norm / THETA13).log2().ceil()).max(0.0) as i32;
    let scaled = &a * C64::new(2f64.powi(-squarings), 0.0);
    let mut r = pade13(&scaled);
    for _ in 0..squarings {
        r = r.dot(&r);
    }
    r
}

fn pade_low(a: &Array2<C64>, b: &[f64]) -> Array2<C64> {
    let n = a.nrows();
    let eye = Array2::<C64>::eye(n);
    let a2 = a.dot(a);
    let mut u_inner = &eye * C64::new(b[1], 0.0);
    let mut v = &eye * C64::new(b[0], 0.0);
    let mut pow = eye.clone();
    let m = b.len() - 1;
    for k in 1..=(m / 2) {
        pow = pow.dot(&a2);
        v = v + &pow * C64::new(b[2 * k], 0.0);
        u_inner = u_inner + &pow * C64::new(b[2 * k + 1], 0.0);
    }
    let u = a.dot(&u_inner);
    solve(&(&v - &u), &(&v + &u))
}

fn pade13(a: &Array2<C64>) -> Array2<C64> {
    let b = PADE13;
    let c = |x: f64| C64::new(x, 0.0);
    let n = a.nrows();
    let eye = Array2::<C64>::eye(n);
    let a2 = a.dot(a);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);
    let u_hi = &a6 * c(b[13]) + &a4 * c(b[11]) + &a2 * c(b[9]);
    let u_inner = a6.dot(&u_hi) + &a6 * c(b[7]) + &a4 * c(b[5]) + &a2 * c(b[3]) + &eye * c(b[1]);
    let u = a.dot(&u_inner);
    let v_hi = &a6 * c(b[12]) + &a4 * c(b[10]) + &a2 * c(b[8]);
    let v = a6.dot(&v_hi) + &a6 * c(b[6]) + &a4 * c(b[4]) + &a2 * c(b[2]) + &eye * c(b[0]);
    solve(&(&v - &u), &(&v + &u))
}

/// Solves `a x = b` by LU with partial pivoting.
fn solve(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let n = a.nrows();
    let mut lu = a.clone();
    let mut x = b.clone();
    for k in 0..n {
        let mut p = k;
        let mut best = lu[[k, k]].norm();
        for r in (k + 1)..n {
            let v = lu[[r, k]].norm();
            if v > best {
                best = v;
                p = r;
            }
        }
        if p != k {
            for c in 0..n {
                lu.swap([k, c], [p, c]);
            }
            for c in 0..x.ncols() {
                x.swap([k, c], [p, c]);
            }
        }
        let pivot = lu[[k, k]];
        for r in (k + 1)..n {
            let f = lu[[r, k]] / pivot;
            if f == ZERO {
                continue;
            }
            lu[[r, k]] = f;
            for c in (k + 1)..n {
                let t = lu[[k, c]];
                lu[[r, c]] -= f * t;
            }
            for c in 0..x.ncols() {
                let t = x[[k, c]];
                x[[r, c]] -= f * t;
            }
        }
    }
    for k in (0..n).rev() {
        let pivot = lu[[k, k]];
        for c in 0..x.ncols() {
            let mut acc = x[[k, c]];
            for j in (k + 1)..n {
                acc -= lu[[k, j]] * x[[j, c]];
            }
            x[[k, c]] = acc / pivot;
        }
    }
    x
}

/// Action `exp(scale * h) · block` without forming the exponential.
///
/// Truncated Taylor series on sub-steps of 1-norm at most one; each series
/// is summed until the next term falls below double-precision resolution.
pub fn exp_apply(h: &Operator, scale: C64, block: &Array2<C64>) -> Result<Array2<C64>> {
    check_dim(h.dim(), block.nrows())?;
    if !h.is_finite() {
        return Err(invalid("exp_apply: non-finite input"));
    }
    let norm = h.one_norm() * scale.norm();
    let substeps = norm.ceil().max(1.0) as usize;
    let step = scale / substeps as f64;
    let mut x = block.clone();
    for _ in 0..substeps {
        let mut term = x.clone();
        let mut acc = x.clone();
        for k in 1..=60 {
            term = h.0.dot(&term) * (step / k as f64);
            acc += &term;
            let tn = term.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let an = acc.iter().map(|z| z.norm()).fold(0.0, f64::max);
            if tn <= 1e-17 * an.max(1.0) {
                break;
            }
        }
        x = acc;
    }
    Ok(x)
}

/// Spectral decomposition `h = V diag(w) V†` of a Hermitian operator, kept
/// around to evaluate `exp(-i c h)` for many real `c` cheaply.
#[derive(Clone, Debug)]
pub struct HermitianSpectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Operator,
}

impl HermitianSpectrum {
    pub fn new(h: &Operator) -> Result<Self> {
        if !h.is_finite() {
            return Err(invalid("eigendecomposition: non-finite input"));
        }
        if !h.is_hermitian(1e-10 * h.max_abs().max(1.0)) {
            return Err(invalid("eigendecomposition: operator is not Hermitian"));
        }
        let n = h.dim();
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| h.0[[i, j]]);
        let eig = nalgebra::linalg::SymmetricEigen::new(m);
        let vecs = Array2::from_shape_fn((n, n), |(i, j)| eig.eigenvectors[(i, j)]);
        Ok(Self {
            eigenvalues: eig.eigenvalues.iter().copied().collect(),
            eigenvectors: Operator(vecs),
        })
    }

    /// `exp(-i c h)`.
    pub fn exp_i(&self, c: f64) -> Operator {
        let v = &self.eigenvectors.0;
        let phases: Vec<C64> = self
            .eigenvalues
            .iter()
            .map(|w| C64::new(0.0, -c * w).exp())
            .collect();
        let mut scaled = v.clone();
        for (mut col, p) in scaled.columns_mut().into_iter().zip(&phases) {
            col.mapv_inplace(|z| z * p);
        }
        Operator(scaled.dot(&v.t().mapv(|z| z.conj())))
    }
}

/// Pauli and standard gate matrices.
pub mod gates {
    use super::*;

    pub fn sigma_x() -> Operator {
        Operator::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap()
    }

    pub fn sigma_y() -> Operator {
        Operator::from_rows(&[vec![ZERO, -I], vec![I, ZERO]]).unwrap()
    }

    pub fn sigma_z() -> Operator {
        Operator::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]]).unwrap()
    }

    pub fn hadamard() -> Operator {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Operator::from_real_rows(&[&[h, h], &[h, -h]]).unwrap()
    }

    /// Permutation unitary of `n_qubits` qubits, qubit 1 most significant.
    pub fn from_bit_map(n_qubits: usize, f: impl Fn(usize) -> usize) -> Operator {
        let d = 1 << n_qubits;
        let mut u = Operator::zeros(d);
        for i in 0..d {
            u.set(f(i), i, ONE);
        }
        u
    }

    /// CNOT with the given 0-based control and target among `n_qubits`.
    pub fn cnot(n_qubits: usize, control: usize, target: usize) -> Operator {
        let bit = |q: usize| 1 << (n_qubits - 1 - q);
        from_bit_map(n_qubits, |i| {
            if i & bit(control) != 0 {
                i ^ bit(target)
            } else {
                i
            }
        })
    }

    /// Three-qubit Toffoli: flips qubit 3 when qubits 1 and 2 are set.
    pub fn toffoli() -> Operator {
        from_bit_map(3, |i| if i & 0b110 == 0b110 { i ^ 1 } else { i })
    }
}
