//! Dense pure states, density matrices and operators for small registers.
//!
//! Qubit 0 is the least-significant bit of the amplitude index everywhere in the crate.
//! Rotations follow `Rz(t) = exp(i t Z / 2)` and `Rx(t) = H Rz(t) H = exp(i t X / 2)`.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex64;

pub const MAX_SV_QUBITS: usize = 12;
pub const MAX_DM_QUBITS: usize = 6;

const UNITARITY_TOL: f64 = 1e-8;

pub type Mat2 = [[C64; 2]; 2];
pub type Mat4 = [[C64; 4]; 4];

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[derive(Clone, Debug, PartialEq)]
pub enum Gate {
    I,
    X,
    Y,
    Z,
    H,
    S,
    Sdg,
    Rz(f64),
    Rx(f64),
    /// Symmetric controlled-phase.
    CZ,
    /// `qubits[0]` controls, `qubits[1]` is the target.
    CX,
    U1(Mat2),
    /// Local basis index is `bit(qubits[0]) + 2 * bit(qubits[1])`.
    U2(Box<Mat4>),
}

impl Gate {
    pub fn arity(&self) -> usize {
        match self {
            Gate::CZ | Gate::CX | Gate::U2(_) => 2,
            _ => 1,
        }
    }

    pub fn matrix1(&self) -> Option<Mat2> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Some(match self {
            Gate::I => [[ONE, ZERO], [ZERO, ONE]],
            Gate::X => [[ZERO, ONE], [ONE, ZERO]],
            Gate::Y => [[ZERO, c(0.0, -1.0)], [c(0.0, 1.0), ZERO]],
            Gate::Z => [[ONE, ZERO], [ZERO, -ONE]],
            Gate::H => [[c(h, 0.0), c(h, 0.0)], [c(h, 0.0), c(-h, 0.0)]],
            Gate::S => [[ONE, ZERO], [ZERO, c(0.0, 1.0)]],
            Gate::Sdg => [[ONE, ZERO], [ZERO, c(0.0, -1.0)]],
            Gate::Rz(t) => [
                [C64::from_polar(1.0, t / 2.0), ZERO],
                [ZERO, C64::from_polar(1.0, -t / 2.0)],
            ],
            Gate::Rx(t) => {
                let (s, co) = (t / 2.0).sin_cos();
                [[c(co, 0.0), c(0.0, s)], [c(0.0, s), c(co, 0.0)]]
            }
            Gate::U1(m) => *m,
            _ => return None,
        })
    }

    pub fn matrix2(&self) -> Option<Mat4> {
        let mut m = [[ZERO; 4]; 4];
        match self {
            Gate::CZ => {
                for i in 0..4 {
                    m[i][i] = if i == 3 { -ONE } else { ONE };
                }
            }
            Gate::CX => {
                // control = local bit 0, target = local bit 1
                m[0][0] = ONE;
                m[2][2] = ONE;
                m[3][1] = ONE;
                m[1][3] = ONE;
            }
            Gate::U2(b) => m = **b,
            _ => return None,
        }
        Some(m)
    }

    fn check_unitary(&self) -> Result<()> {
        let drift = match self {
            Gate::U1(m) => unitarity_drift(&m.iter().map(|r| r.to_vec()).collect::<Vec<_>>()),
            Gate::U2(m) => unitarity_drift(&m.iter().map(|r| r.to_vec()).collect::<Vec<_>>()),
            _ => 0.0,
        };
        if drift > UNITARITY_TOL {
            return Err(Error::invalid(format!("gate matrix is not unitary (drift {drift:.3e})")));
        }
        Ok(())
    }
}

fn unitarity_drift(m: &[Vec<C64>]) -> f64 {
    let d = m.len();
    let mut worst: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let mut acc = ZERO;
            for k in 0..d {
                acc += m[k][i].conj() * m[k][j];
            }
            let target = if i == j { ONE } else { ZERO };
            worst = worst.max((acc - target).norm());
        }
    }
    worst
}

fn check_qubits(n: usize, gate: &Gate, qubits: &[usize]) -> Result<()> {
    if qubits.len() != gate.arity() {
        return Err(Error::invalid(format!(
            "gate {:?} needs {} qubits, got {}",
            gate,
            gate.arity(),
            qubits.len()
        )));
    }
    for (i, &q) in qubits.iter().enumerate() {
        if q >= n {
            return Err(Error::invalid(format!("qubit {q} out of range for {n}-qubit register")));
        }
        if qubits[..i].contains(&q) {
            return Err(Error::invalid(format!("duplicate qubit {q}")));
        }
    }
    Ok(())
}

// ---- raw kernels over a 2^N vector --------------------------------------------------

pub(crate) fn kernel_1q(v: &mut [C64], q: usize, m: &Mat2) {
    let bit = 1usize << q;
    let diag = m[0][1] == ZERO && m[1][0] == ZERO;
    if diag {
        let (a, d) = (m[0][0], m[1][1]);
        for (i, x) in v.iter_mut().enumerate() {
            *x *= if i & bit == 0 { a } else { d };
        }
        return;
    }
    let len = v.len();
    let mut base = 0;
    while base < len {
        for i in base..base + bit {
            let (x0, x1) = (v[i], v[i | bit]);
            v[i] = m[0][0] * x0 + m[0][1] * x1;
            v[i | bit] = m[1][0] * x0 + m[1][1] * x1;
        }
        base += bit << 1;
    }
}

pub(crate) fn kernel_2q(v: &mut [C64], q0: usize, q1: usize, m: &Mat4) {
    let (b0, b1) = (1usize << q0, 1usize << q1);
    for i in 0..v.len() {
        if i & (b0 | b1) != 0 {
            continue;
        }
        let idx = [i, i | b0, i | b1, i | b0 | b1];
        let x = [v[idx[0]], v[idx[1]], v[idx[2]], v[idx[3]]];
        for r in 0..4 {
            v[idx[r]] = m[r][0] * x[0] + m[r][1] * x[1] + m[r][2] * x[2] + m[r][3] * x[3];
        }
    }
}

fn kernel_cz(v: &mut [C64], q0: usize, q1: usize) {
    let mask = (1usize << q0) | (1usize << q1);
    for (i, x) in v.iter_mut().enumerate() {
        if i & mask == mask {
            *x = -*x;
        }
    }
}

fn kernel_cx(v: &mut [C64], ctrl: usize, tgt: usize) {
    let (bc, bt) = (1usize << ctrl, 1usize << tgt);
    for i in 0..v.len() {
        if i & bc != 0 && i & bt == 0 {
            v.swap(i, i | bt);
        }
    }
}

/// Apply a gate to `qubits` of a raw 2^N vector; `conj` uses the complex-conjugate matrix.
pub(crate) fn kernel_gate(v: &mut [C64], gate: &Gate, qubits: &[usize], conj: bool) {
    match gate {
        Gate::I => {}
        Gate::CZ => kernel_cz(v, qubits[0], qubits[1]),
        Gate::CX => kernel_cx(v, qubits[0], qubits[1]),
        g if g.arity() == 1 => {
            let mut m = g.matrix1().expect("one-qubit matrix");
            if conj {
                for row in m.iter_mut() {
                    for x in row.iter_mut() {
                        *x = x.conj();
                    }
                }
            }
            kernel_1q(v, qubits[0], &m);
        }
        g => {
            let mut m = g.matrix2().expect("two-qubit matrix");
            if conj {
                for row in m.iter_mut() {
                    for x in row.iter_mut() {
                        *x = x.conj();
                    }
                }
            }
            kernel_2q(v, qubits[0], qubits[1], &m);
        }
    }
}

// ---- pure states ---------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<C64>,
}

impl StateVector {
    /// |0...0> on `n` qubits.
    pub fn new(n: usize) -> Result<Self> {
        Self::basis(n, 0)
    }

    pub fn basis(n: usize, index: usize) -> Result<Self> {
        if n > MAX_SV_QUBITS {
            return Err(Error::capacity(format!("state vector of {n} qubits exceeds cap {MAX_SV_QUBITS}")));
        }
        if index >= 1 << n {
            return Err(Error::invalid(format!("basis index {index} out of range")));
        }
        let mut amps = vec![ZERO; 1 << n];
        amps[index] = ONE;
        Ok(StateVector { n, amps })
    }

    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        let len = amps.len();
        if !len.is_power_of_two() {
            return Err(Error::invalid("amplitude count is not a power of two"));
        }
        let n = len.trailing_zeros() as usize;
        if n > MAX_SV_QUBITS {
            return Err(Error::capacity(format!("state vector of {n} qubits exceeds cap {MAX_SV_QUBITS}")));
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::invalid(format!("amplitudes not normalized (norm^2 = {norm})")));
        }
        Ok(StateVector { n, amps })
    }

    /// Haar-random pure state (normalized complex Gaussian vector).
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        let mut s = Self::new(n)?;
        for a in s.amps.iter_mut() {
            *a = c(rng.sample(StandardNormal), rng.sample(StandardNormal));
        }
        s.normalize();
        Ok(s)
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn normalize(&mut self) {
        let k = 1.0 / self.norm_sqr().sqrt();
        for a in self.amps.iter_mut() {
            *a *= k;
        }
    }

    pub fn apply(&mut self, gate: &Gate, qubits: &[usize]) -> Result<()> {
        check_qubits(self.n, gate, qubits)?;
        gate.check_unitary()?;
        kernel_gate(&mut self.amps, gate, qubits, false);
        debug_assert!((self.norm_sqr() - 1.0).abs() < 1e-10);
        Ok(())
    }

    /// Apply X^x Z^z (Z first) on qubit q.
    pub fn apply_pauli(&mut self, q: usize, x: bool, z: bool) -> Result<()> {
        if z {
            self.apply(&Gate::Z, &[q])?;
        }
        if x {
            self.apply(&Gate::X, &[q])?;
        }
        Ok(())
    }

    /// <self|other>
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn prob_one(&self, q: usize) -> f64 {
        let bit = 1usize << q;
        self.amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & bit != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// Project qubit `q` onto `outcome`, renormalize, and return the branch probability.
    pub fn project(&mut self, q: usize, outcome: bool) -> Result<f64> {
        if q >= self.n {
            return Err(Error::invalid(format!("qubit {q} out of range")));
        }
        let bit = 1usize << q;
        let p = if outcome { self.prob_one(q) } else { 1.0 - self.prob_one(q) };
        if p < 1e-15 {
            return Err(Error::invalid("projection onto a zero-probability branch"));
        }
        for (i, a) in self.amps.iter_mut().enumerate() {
            if ((i & bit) != 0) != outcome {
                *a = ZERO;
            }
        }
        self.normalize();
        Ok(p)
    }

    /// Sample a computational-basis measurement of qubit `q` and collapse.
    pub fn measure<R: Rng + ?Sized>(&mut self, q: usize, rng: &mut R) -> Result<bool> {
        let outcome = rng.gen::<f64>() < self.prob_one(q);
        self.project(q, outcome)?;
        Ok(outcome)
    }

    /// Distance to `other` minimized over a global phase.
    pub fn phase_distance(&self, other: &StateVector) -> f64 {
        phase_aligned_distance(&self.amps, &other.amps)
    }
}

/// min over phi of || a - e^{i phi} b ||, evaluated entrywise to avoid cancellation.
fn phase_aligned_distance(a: &[C64], b: &[C64]) -> f64 {
    let overlap: C64 = b.iter().zip(a).map(|(x, y)| x.conj() * y).sum();
    let ph = if overlap.norm() > 0.0 { overlap / overlap.norm() } else { ONE };
    a.iter().zip(b).map(|(x, y)| (x - ph * y).norm_sqr()).sum::<f64>().sqrt()
}

// ---- density matrices ----------------------------------------------------------------

/// Row-major 2^n x 2^n matrix. Viewed as a 2n-qubit vector, column bits are the low n
/// bits and row bits the high n bits, so U rho U^dag is U on the row bits and conj(U) on
/// the column bits.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    n: usize,
    data: Vec<C64>,
}

impl DensityMatrix {
    fn alloc(n: usize) -> Result<Self> {
        if n > MAX_DM_QUBITS {
            return Err(Error::capacity(format!("density matrix of {n} qubits exceeds cap {MAX_DM_QUBITS}")));
        }
        Ok(DensityMatrix { n, data: vec![ZERO; 1 << (2 * n)] })
    }

    pub fn zero_state(n: usize) -> Result<Self> {
        let mut d = Self::alloc(n)?;
        d.data[0] = ONE;
        Ok(d)
    }

    pub fn maximally_mixed(n: usize) -> Result<Self> {
        let mut d = Self::alloc(n)?;
        let dim = 1 << n;
        for i in 0..dim {
            d.data[i * dim + i] = c(1.0 / dim as f64, 0.0);
        }
        Ok(d)
    }

    pub fn from_state(s: &StateVector) -> Result<Self> {
        let mut d = Self::alloc(s.n)?;
        let dim = 1 << s.n;
        for r in 0..dim {
            for col in 0..dim {
                d.data[r * dim + col] = s.amps[r] * s.amps[col].conj();
            }
        }
        Ok(d)
    }

    /// Build from a row-major matrix, validating the density-matrix invariants.
    pub fn from_matrix(n: usize, data: Vec<C64>) -> Result<Self> {
        let mut d = Self::alloc(n)?;
        if data.len() != d.data.len() {
            return Err(Error::invalid("matrix size does not match qubit count"));
        }
        d.data = data;
        d.validate(1e-10)?;
        Ok(d)
    }

    /// Row-major matrix taken as is (branch operators need not have unit trace).
    pub fn from_raw(n: usize, data: Vec<C64>) -> Result<Self> {
        let mut d = Self::alloc(n)?;
        if data.len() != d.data.len() {
            return Err(Error::invalid("matrix size does not match qubit count"));
        }
        d.data = data;
        Ok(d)
    }

    /// Unnormalized zero matrix; a scratch accumulator for mixtures.
    pub fn zeros(n: usize) -> Result<Self> {
        Self::alloc(n)
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.data[row * self.dim() + col]
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|i| self.get(i, i)).sum()
    }

    pub fn purity(&self) -> f64 {
        self.data.iter().map(|x| x.norm_sqr()).sum()
    }

    /// self += w * other
    pub fn add_scaled(&mut self, other: &DensityMatrix, w: f64) -> Result<()> {
        if other.n != self.n {
            return Err(Error::invalid("dimension mismatch"));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * w;
        }
        Ok(())
    }

    pub fn scale(&mut self, w: f64) {
        for a in self.data.iter_mut() {
            *a *= w;
        }
    }

    pub fn apply(&mut self, gate: &Gate, qubits: &[usize]) -> Result<()> {
        check_qubits(self.n, gate, qubits)?;
        gate.check_unitary()?;
        self.apply_unchecked(gate, qubits);
        Ok(())
    }

    pub(crate) fn apply_unchecked(&mut self, gate: &Gate, qubits: &[usize]) {
        let rows: Vec<usize> = qubits.iter().map(|q| q + self.n).collect();
        kernel_gate(&mut self.data, gate, &rows, false);
        kernel_gate(&mut self.data, gate, qubits, true);
    }

    fn apply_pauli_index(&mut self, q: usize, p: u8) {
        match p {
            1 => self.apply_unchecked(&Gate::X, &[q]),
            2 => self.apply_unchecked(&Gate::Y, &[q]),
            3 => self.apply_unchecked(&Gate::Z, &[q]),
            _ => {}
        }
    }

    /// rho -> (1 - eps) rho + eps / (4^k - 1) * sum_{P != I} P rho P over the k listed qubits.
    pub fn apply_depolarizing(&mut self, qubits: &[usize], eps: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&eps) || eps.is_nan() {
            return Err(Error::invalid(format!("depolarizing probability {eps} outside [0,1]")));
        }
        if qubits.is_empty() || qubits.len() > 2 {
            return Err(Error::invalid("depolarizing acts on 1 or 2 qubits"));
        }
        let g = if qubits.len() == 1 { Gate::I } else { Gate::CZ };
        check_qubits(self.n, &g, qubits)?;
        if eps == 0.0 {
            return Ok(());
        }
        let k = qubits.len();
        let terms = (1usize << (2 * k)) - 1;
        let mut acc = self.clone();
        acc.scale(1.0 - eps);
        for code in 1..=terms {
            let mut branch = self.clone();
            for (i, &q) in qubits.iter().enumerate() {
                branch.apply_pauli_index(q, ((code >> (2 * i)) & 3) as u8);
            }
            acc.add_scaled(&branch, eps / terms as f64)?;
        }
        *self = acc;
        debug_assert!((self.trace().re - 1.0).abs() < 1e-10);
        Ok(())
    }

    /// Full Z-dephasing (rho + Z rho Z) / 2 mixed in with weight `w`.
    pub fn apply_dephasing(&mut self, q: usize, w: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::invalid(format!("dephasing weight {w} outside [0,1]")));
        }
        check_qubits(self.n, &Gate::Z, &[q])?;
        let (rb, cb) = (1usize << (q + self.n), 1usize << q);
        for (i, x) in self.data.iter_mut().enumerate() {
            if ((i & rb) != 0) != ((i & cb) != 0) {
                *x *= 1.0 - w;
            }
        }
        Ok(())
    }

    /// Keep the listed qubits (output qubit i is `keep[i]`) and trace out the rest.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityMatrix> {
        if keep.is_empty() {
            return Err(Error::invalid("partial trace needs a non-empty keep list"));
        }
        for (i, &q) in keep.iter().enumerate() {
            if q >= self.n || keep[..i].contains(&q) {
                return Err(Error::invalid(format!("bad keep qubit {q}")));
            }
        }
        let traced: Vec<usize> = (0..self.n).filter(|q| !keep.contains(q)).collect();
        let k = keep.len();
        let mut out = DensityMatrix::alloc(k)?;
        let kd = 1 << k;
        let spread = |small: usize, qs: &[usize]| -> usize {
            qs.iter().enumerate().fold(0, |acc, (i, &q)| acc | (((small >> i) & 1) << q))
        };
        for r in 0..kd {
            let rf = spread(r, keep);
            for col in 0..kd {
                let cf = spread(col, keep);
                let mut acc = ZERO;
                for t in 0..(1usize << traced.len()) {
                    let tf = spread(t, &traced);
                    acc += self.get(rf | tf, cf | tf);
                }
                out.data[r * kd + col] = acc;
            }
        }
        Ok(out)
    }

    pub fn to_dmatrix(&self) -> DMatrix<C64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |r, col| self.get(r, col))
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigen(&self.to_dmatrix()).0
    }

    /// Hermiticity, unit trace and positivity.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let d = self.dim();
        for r in 0..d {
            for col in 0..r {
                if (self.get(r, col) - self.get(col, r).conj()).norm() > tol {
                    return Err(Error::invalid("density matrix is not Hermitian"));
                }
            }
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
            return Err(Error::invalid(format!("density matrix trace {tr} != 1")));
        }
        if self.eigenvalues().iter().any(|&l| l < -1e-9) {
            return Err(Error::invalid("density matrix has a negative eigenvalue"));
        }
        Ok(())
    }

    /// <psi| rho |psi>
    pub fn expectation_pure(&self, psi: &StateVector) -> Result<f64> {
        if psi.n != self.n {
            return Err(Error::invalid("dimension mismatch"));
        }
        let d = self.dim();
        let mut acc = ZERO;
        for r in 0..d {
            let mut row = ZERO;
            for col in 0..d {
                row += self.get(r, col) * psi.amps[col];
            }
            acc += psi.amps[r].conj() * row;
        }
        Ok(acc.re)
    }
}

/// Eigen-decomposition of a Hermitian matrix: (eigenvalues, eigenvectors as columns).
fn hermitian_eigen(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let herm = (m + m.adjoint()) * c(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

/// Eigenvalues at round-off level would otherwise leak through the square root.
fn clamp_eig(l: f64) -> f64 {
    if l < 1e-13 {
        0.0
    } else {
        l
    }
}

fn psd_sqrt(m: &DMatrix<C64>) -> DMatrix<C64> {
    let (vals, vecs) = hermitian_eigen(m);
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        vals.len(),
        vals.iter().map(|&l| c(clamp_eig(l).sqrt(), 0.0)),
    ));
    &vecs * d * vecs.adjoint()
}

/// Uhlmann fidelity (tr sqrt(sqrt(a) b sqrt(a)))^2, clamped to [0, 1].
pub fn fidelity(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.n != b.n {
        return Err(Error::invalid("dimension mismatch"));
    }
    let sa = psd_sqrt(&a.to_dmatrix());
    let inner = &sa * b.to_dmatrix() * &sa;
    let (vals, _) = hermitian_eigen(&inner);
    let f: f64 = vals.iter().map(|&l| clamp_eig(l).sqrt()).sum();
    Ok((f * f).clamp(0.0, 1.0))
}

/// Half the trace norm of a - b. Works for unnormalized (branch) operators too.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.n != b.n {
        return Err(Error::invalid("dimension mismatch"));
    }
    let diff = a.to_dmatrix() - b.to_dmatrix();
    let (vals, _) = hermitian_eigen(&diff);
    Ok(0.5 * vals.iter().map(|l| l.abs()).sum::<f64>())
}

// ---- operators -----------------------------------------------------------------------

/// Square operator on n qubits, stored column-major so each column is a state image.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    n: usize,
    data: Vec<C64>,
}

impl Operator {
    pub fn identity(n: usize) -> Result<Self> {
        if n > MAX_SV_QUBITS / 2 + 2 {
            return Err(Error::capacity(format!("operator on {n} qubits exceeds cap")));
        }
        let dim = 1 << n;
        let mut data = vec![ZERO; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = ONE;
        }
        Ok(Operator { n, data })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> C64) -> Result<Self> {
        let mut op = Self::identity(n)?;
        let dim = 1 << n;
        for col in 0..dim {
            for r in 0..dim {
                op.data[col * dim + r] = f(r, col);
            }
        }
        Ok(op)
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.data[col * self.dim() + row]
    }

    /// Left-multiply by a gate: self <- G self.
    pub fn apply(&mut self, gate: &Gate, qubits: &[usize]) -> Result<()> {
        check_qubits(self.n, gate, qubits)?;
        gate.check_unitary()?;
        kernel_gate(&mut self.data, gate, qubits, false);
        Ok(())
    }

    pub(crate) fn apply_unchecked(&mut self, gate: &Gate, qubits: &[usize]) {
        kernel_gate(&mut self.data, gate, qubits, false);
    }

    /// Left-multiply by cos(t) I + i sin(t) P for a Pauli string given as (x, z) masks.
    pub fn apply_pauli_rotation(&mut self, xmask: usize, zmask: usize, t: f64) {
        let dim = self.dim();
        let (s, co) = t.sin_cos();
        let ny = (xmask & zmask).count_ones();
        // P|j> = i^ny (-1)^{popcount(j & z)} |j ^ x>, Y = iXZ
        let iy = match ny % 4 {
            0 => ONE,
            1 => c(0.0, 1.0),
            2 => -ONE,
            _ => c(0.0, -1.0),
        };
        let mut col = vec![ZERO; dim];
        for k in 0..dim {
            let slice = &mut self.data[k * dim..(k + 1) * dim];
            col.copy_from_slice(slice);
            for j in 0..dim {
                let sign = if (j & zmask).count_ones() % 2 == 0 { ONE } else { -ONE };
                let pj = iy * sign * col[j];
                let target = j ^ xmask;
                slice[target] += c(0.0, s) * pj;
            }
            for j in 0..dim {
                slice[j] -= col[j] * (1.0 - co);
            }
        }
    }

    pub fn mul(&self, rhs: &Operator) -> Result<Operator> {
        if self.n != rhs.n {
            return Err(Error::invalid("dimension mismatch"));
        }
        let dim = self.dim();
        let a = DMatrix::from_column_slice(dim, dim, &self.data);
        let b = DMatrix::from_column_slice(dim, dim, &rhs.data);
        let p = a * b;
        Ok(Operator { n: self.n, data: p.as_slice().to_vec() })
    }

    pub fn adjoint(&self) -> Operator {
        let dim = self.dim();
        Operator::from_fn(self.n, |r, col| self.get(col, r).conj()).unwrap_or_else(|_| {
            unreachable!("dimension {dim} already validated")
        })
    }

    /// Tr(self^dag other)
    pub fn trace_inner(&self, other: &Operator) -> C64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum()
    }

    /// Frobenius distance minimized over a global phase.
    pub fn phase_distance(&self, other: &Operator) -> f64 {
        phase_aligned_distance(&self.data, &other.data)
    }

    pub fn apply_to_state(&self, s: &StateVector) -> Result<StateVector> {
        if s.n != self.n {
            return Err(Error::invalid("dimension mismatch"));
        }
        let dim = self.dim();
        let mut out = vec![ZERO; dim];
        for (col, a) in s.amps.iter().enumerate() {
            for r in 0..dim {
                out[r] += self.data[col * dim + r] * a;
            }
        }
        Ok(StateVector { n: s.n, amps: out })
    }

    pub fn to_dmatrix(&self) -> DMatrix<C64> {
        let dim = self.dim();
        DMatrix::from_column_slice(dim, dim, &self.data)
    }

    pub fn from_dmatrix(m: &DMatrix<C64>) -> Result<Self> {
        if !m.is_square() || !m.nrows().is_power_of_two() {
            return Err(Error::invalid("operator must be square with power-of-two dimension"));
        }
        let n = m.nrows().trailing_zeros() as usize;
        Operator::from_fn(n, |r, col| m[(r, col)])
    }

    /// Multiply by a global phase.
    pub fn scale_phase(&mut self, phase: f64) {
        let p = C64::from_polar(1.0, phase);
        for x in self.data.iter_mut() {
            *x *= p;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
        a.kronecker(b)
    }

    fn dm2(m: &Mat2) -> DMatrix<C64> {
        DMatrix::from_fn(2, 2, |r, col| m[r][col])
    }

    /// Independent oracle: the full 2^n matrix of a gate built from Kronecker products.
    /// Kronecker ordering puts the highest qubit leftmost.
    fn explicit(n: usize, gate: &Gate, qubits: &[usize]) -> DMatrix<C64> {
        let id = DMatrix::<C64>::identity(2, 2);
        if gate.arity() == 1 {
            let g = dm2(&gate.matrix1().unwrap());
            let mut m = DMatrix::<C64>::identity(1, 1);
            for q in (0..n).rev() {
                m = kron(&m, if q == qubits[0] { &g } else { &id });
            }
            return m;
        }
        // sum over local basis projectors: G = sum_{a,b} G[a][b] |a><b| split across qubits
        let g = gate.matrix2().unwrap();
        let dim = 1 << n;
        let mut out = DMatrix::<C64>::zeros(dim, dim);
        for a in 0..4 {
            for b in 0..4 {
                if g[a][b] == ZERO {
                    continue;
                }
                let mut m = DMatrix::<C64>::identity(1, 1);
                for q in (0..n).rev() {
                    let factor = if q == qubits[0] {
                        DMatrix::from_fn(2, 2, |r, col| if r == a & 1 && col == b & 1 { ONE } else { ZERO })
                    } else if q == qubits[1] {
                        DMatrix::from_fn(2, 2, |r, col| if r == a >> 1 && col == b >> 1 { ONE } else { ZERO })
                    } else {
                        id.clone()
                    };
                    m = kron(&m, &factor);
                }
                out += m * g[a][b];
            }
        }
        out
    }

    fn all_gates() -> Vec<Gate> {
        vec![
            Gate::I,
            Gate::X,
            Gate::Y,
            Gate::Z,
            Gate::H,
            Gate::S,
            Gate::Sdg,
            Gate::Rz(0.37),
            Gate::Rx(-1.1),
            Gate::CZ,
            Gate::CX,
        ]
    }

    #[test]
    fn hadamard_on_zero() {
        let mut s = StateVector::new(1).unwrap();
        s.apply(&Gate::H, &[0]).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s.amplitudes()[0] - c(h, 0.0)).norm() < 1e-15);
        assert!((s.amplitudes()[1] - c(h, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn rz_zero_is_identity() {
        let mut r = rng::stream(1, &[]);
        let s0 = StateVector::random(3, &mut r).unwrap();
        let mut s = s0.clone();
        s.apply(&Gate::Rz(0.0), &[1]).unwrap();
        assert_eq!(s, s0);
    }

    #[test]
    fn blind_two_qubit_sequence_matches_matrix_product() {
        let mut s = StateVector::new(2).unwrap();
        s.apply(&Gate::H, &[0]).unwrap();
        s.apply(&Gate::H, &[1]).unwrap();
        let plus = s.clone();
        let seq: Vec<(Gate, Vec<usize>)> = vec![
            (Gate::CZ, vec![0, 1]),
            (Gate::H, vec![0]),
            (Gate::Rz(std::f64::consts::FRAC_PI_2), vec![0]),
            (Gate::H, vec![0]),
            (Gate::CZ, vec![0, 1]),
        ];
        let mut m = DMatrix::<C64>::identity(4, 4);
        for (g, q) in &seq {
            s.apply(g, q).unwrap();
            m = explicit(2, g, q) * m;
        }
        let v = m * nalgebra::DVector::from_column_slice(plus.amplitudes());
        for i in 0..4 {
            assert!((v[i] - s.amplitudes()[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn gates_match_tensor_construction_on_small_registers() {
        let mut r = rng::stream(2, &[]);
        for n in 1..=3 {
            for g in all_gates() {
                let placements: Vec<Vec<usize>> = if g.arity() == 1 {
                    (0..n).map(|q| vec![q]).collect()
                } else {
                    (0..n)
                        .flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| vec![a, b]))
                        .collect()
                };
                for qs in placements {
                    let s0 = StateVector::random(n, &mut r).unwrap();
                    let mut s = s0.clone();
                    s.apply(&g, &qs).unwrap();
                    let v = explicit(n, &g, &qs) * nalgebra::DVector::from_column_slice(s0.amplitudes());
                    for i in 0..(1 << n) {
                        assert!((v[i] - s.amplitudes()[i]).norm() < 1e-12, "{g:?} on {qs:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn apply_rejects_bad_input() {
        let mut s = StateVector::new(2).unwrap();
        assert!(s.apply(&Gate::H, &[2]).is_err());
        assert!(s.apply(&Gate::CZ, &[1, 1]).is_err());
        let bad = [[ONE, ONE], [ZERO, ONE]];
        assert!(s.apply(&Gate::U1(bad), &[0]).is_err());
        assert!(matches!(StateVector::new(13), Err(Error::Capacity(_))));
        assert!(matches!(DensityMatrix::zero_state(7), Err(Error::Capacity(_))));
    }

    #[test]
    fn depolarizing_special_points() {
        let mut rho = DensityMatrix::zero_state(1).unwrap();
        rho.apply_depolarizing(&[0], 0.75).unwrap();
        // hand-evaluated Kraus sum: 1/4 |0><0| + 1/4 (X|0><0|X + Y..Y + Z..Z) = I/2
        assert!((rho.get(0, 0) - c(0.5, 0.0)).norm() < 1e-12);
        assert!((rho.get(1, 1) - c(0.5, 0.0)).norm() < 1e-12);
        assert!(rho.get(0, 1).norm() < 1e-12);

        let mut r = rng::stream(3, &[]);
        let psi = StateVector::random(2, &mut r).unwrap();
        let mut rho = DensityMatrix::from_state(&psi).unwrap();
        rho.apply_depolarizing(&[0, 1], 15.0 / 16.0).unwrap();
        let mm = DensityMatrix::maximally_mixed(2).unwrap();
        assert!(trace_distance(&rho, &mm).unwrap() < 1e-12);

        let rho0 = DensityMatrix::from_state(&psi).unwrap();
        let mut same = rho0.clone();
        same.apply_depolarizing(&[1], 0.0).unwrap();
        assert_eq!(same, rho0);
        assert!(same.apply_depolarizing(&[1], 1.5).is_err());
    }

    #[test]
    fn depolarizing_matches_partial_trace_form() {
        // single-qubit identity: sum over all four Paulis of P rho P = 2 I (x) tr_q rho
        let mut r = rng::stream(4, &[]);
        let psi = StateVector::random(3, &mut r).unwrap();
        let rho = DensityMatrix::from_state(&psi).unwrap();
        let eps = 0.3;
        let mut a = rho.clone();
        a.apply_depolarizing(&[1], eps).unwrap();
        let reduced = rho.partial_trace(&[0, 2]).unwrap();
        for row in 0..8 {
            for col in 0..8 {
                let same_q1 = (row >> 1) & 1 == (col >> 1) & 1;
                let red = if same_q1 {
                    let rr = (row & 1) | ((row >> 2) << 1);
                    let cc = (col & 1) | ((col >> 2) << 1);
                    reduced.get(rr, cc) * 0.5
                } else {
                    ZERO
                };
                let expect = rho.get(row, col) * (1.0 - 4.0 * eps / 3.0) + red * (4.0 * eps / 3.0);
                assert!((a.get(row, col) - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn fidelity_cases() {
        let z0 = DensityMatrix::zero_state(1).unwrap();
        let z1 = DensityMatrix::from_state(&StateVector::basis(1, 1).unwrap()).unwrap();
        assert!((fidelity(&z0, &z0).unwrap() - 1.0).abs() < 1e-9);
        assert!(fidelity(&z0, &z1).unwrap() < 1e-9);
        let mut r = rng::stream(5, &[]);
        for n in 1..=4 {
            let psi = StateVector::random(n, &mut r).unwrap();
            let pure = DensityMatrix::from_state(&psi).unwrap();
            let mm = DensityMatrix::maximally_mixed(n).unwrap();
            let f = fidelity(&mm, &pure).unwrap();
            assert!((f - 1.0 / (1 << n) as f64).abs() < 1e-9);
        }
        assert!(fidelity(&z0, &DensityMatrix::zero_state(2).unwrap()).is_err());
    }

    #[test]
    fn partial_trace_cases() {
        let mut r = rng::stream(6, &[]);
        let psi = StateVector::random(2, &mut r).unwrap();
        let rho = DensityMatrix::from_state(&psi).unwrap();
        assert_eq!(rho.partial_trace(&[0, 1]).unwrap(), rho);
        assert!(rho.partial_trace(&[]).is_err());

        let mut bell = StateVector::new(2).unwrap();
        bell.apply(&Gate::H, &[0]).unwrap();
        bell.apply(&Gate::CX, &[0, 1]).unwrap();
        let half = DensityMatrix::from_state(&bell).unwrap().partial_trace(&[0]).unwrap();
        assert!(trace_distance(&half, &DensityMatrix::maximally_mixed(1).unwrap()).unwrap() < 1e-12);

        // |01> with qubit 0 = 1? index 0b10 means qubit1=1, qubit0=0
        let s = StateVector::basis(2, 0b10).unwrap();
        let red = DensityMatrix::from_state(&s).unwrap().partial_trace(&[0]).unwrap();
        assert!((red.get(0, 0) - ONE).norm() < 1e-15);
        assert!(red.get(1, 1).norm() < 1e-15);
    }

    #[test]
    fn pauli_rotation_matches_gate_form() {
        // exp(i t Z) on qubit 1 is Rz(2t)
        let mut a = Operator::identity(2).unwrap();
        a.apply_pauli_rotation(0, 0b10, 0.4);
        let mut b = Operator::identity(2).unwrap();
        b.apply(&Gate::Rz(0.8), &[1]).unwrap();
        assert!(a.phase_distance(&b) < 1e-12);
        // exp(i t X0 Y1) against exponentiating the explicit matrix
        let mut a = Operator::identity(2).unwrap();
        a.apply_pauli_rotation(0b11, 0b10, 0.3);
        let p = explicit(2, &Gate::X, &[0]) * explicit(2, &Gate::Y, &[1]);
        let expect = DMatrix::<C64>::identity(4, 4) * c(0.3f64.cos(), 0.0) + p * c(0.0, 0.3f64.sin());
        let e = Operator::from_dmatrix(&expect).unwrap();
        assert!(a.phase_distance(&e) < 1e-12);
    }

    fn random_dm(n: usize, seed: u64) -> DensityMatrix {
        let mut r = rng::stream(seed, &[n as u64]);
        let mut acc = DensityMatrix::zeros(n).unwrap();
        let ws: Vec<f64> = (0..3).map(|_| r.gen::<f64>()).collect();
        let tot: f64 = ws.iter().sum();
        for w in ws {
            let psi = StateVector::random(n, &mut r).unwrap();
            acc.add_scaled(&DensityMatrix::from_state(&psi).unwrap(), w / tot).unwrap();
        }
        acc
    }

    proptest! {
        #[test]
        fn channels_preserve_trace_and_validity(seed in 0u64..1000, eps in 0.0f64..=1.0, two in any::<bool>()) {
            let mut rho = random_dm(3, seed);
            let qs: &[usize] = if two { &[0, 2] } else { &[1] };
            rho.apply_depolarizing(qs, eps).unwrap();
            rho.apply(&Gate::H, &[0]).unwrap();
            rho.apply(&Gate::CX, &[2, 1]).unwrap();
            prop_assert!(rho.validate(1e-10).is_ok());
        }

        #[test]
        fn depolarizing_is_linear(seed in 0u64..1000, eps in 0.0f64..=1.0, w in 0.0f64..=1.0) {
            let a = random_dm(2, seed);
            let b = random_dm(2, seed + 5000);
            let mut mix = a.clone();
            mix.scale(w);
            mix.add_scaled(&b, 1.0 - w).unwrap();
            mix.apply_depolarizing(&[0, 1], eps).unwrap();
            let (mut a2, mut b2) = (a, b);
            a2.apply_depolarizing(&[0, 1], eps).unwrap();
            b2.apply_depolarizing(&[0, 1], eps).unwrap();
            a2.scale(w);
            a2.add_scaled(&b2, 1.0 - w).unwrap();
            for (x, y) in mix.entries().iter().zip(a2.entries()) {
                prop_assert!((x - y).norm() < 1e-10);
            }
        }

        #[test]
        fn unitaries_preserve_norm(seed in 0u64..1000, q in 0usize..4, t in -6.3f64..6.3) {
            let mut r = rng::stream(seed, &[]);
            let mut s = StateVector::random(4, &mut r).unwrap();
            s.apply(&Gate::Rx(t), &[q]).unwrap();
            s.apply(&Gate::CZ, &[q, (q + 1) % 4]).unwrap();
            prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-10);
        }

        #[test]
        fn fidelity_is_symmetric(seed in 0u64..500) {
            let a = random_dm(2, seed);
            let b = random_dm(2, seed + 777);
            let f1 = fidelity(&a, &b).unwrap();
            let f2 = fidelity(&b, &a).unwrap();
            prop_assert!((f1 - f2).abs() < 1e-9);
            prop_assert!((-1e-9..=1.0 + 1e-9).contains(&f1));
        }
    }
}
