//! Pauli byproduct frame `X^a Z^b` per qubit and the adaptive angle chooser.

use crate::error::{Error, Result};
use crate::statevec::Gate;
use std::f64::consts::FRAC_PI_2;

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct PauliFrame {
    a: Vec<bool>,
    b: Vec<bool>,
}

/// How a measurement outcome feeds back into the frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeasurementKind {
    /// Photon measured by the client: the delegated rotation picks up `Z^s`.
    PhotonZ,
    /// Gate-teleportation outcome: the output picks up `X^s`.
    Teleport,
}

/// Quarter turns of a rotation angle, or `None` when it is not a multiple of pi/2.
fn quarter_turns(t: f64) -> Option<i64> {
    let k = t / FRAC_PI_2;
    let r = k.round();
    if (k - r).abs() < 1e-9 {
        Some((r as i64).rem_euclid(4))
    } else {
        None
    }
}

impl PauliFrame {
    pub fn new(n: usize) -> Self {
        PauliFrame { a: vec![false; n], b: vec![false; n] }
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// (a, b) of qubit q.
    pub fn get(&self, q: usize) -> (bool, bool) {
        (self.a[q], self.b[q])
    }

    pub fn set(&mut self, q: usize, a: bool, b: bool) {
        self.a[q] = a;
        self.b[q] = b;
    }

    pub fn is_identity(&self) -> bool {
        self.a.iter().chain(&self.b).all(|&x| !x)
    }

    fn check(&self, qubits: &[usize], arity: usize) -> Result<()> {
        if qubits.len() != arity {
            return Err(Error::invalid(format!("expected {arity} qubits, got {}", qubits.len())));
        }
        if qubits.iter().any(|&q| q >= self.len()) {
            return Err(Error::invalid("qubit out of range"));
        }
        if arity == 2 && qubits[0] == qubits[1] {
            return Err(Error::invalid("two-qubit gate on a single qubit"));
        }
        Ok(())
    }

    /// Replace the frame P by C P C^dag (sign dropped).
    pub fn conjugate(&mut self, gate: &Gate, qubits: &[usize]) -> Result<()> {
        self.check(qubits, gate.arity())?;
        match gate {
            Gate::I | Gate::X | Gate::Y | Gate::Z => {}
            Gate::H => {
                let q = qubits[0];
                std::mem::swap(&mut self.a[q], &mut self.b[q]);
            }
            Gate::S | Gate::Sdg => {
                let q = qubits[0];
                self.b[q] ^= self.a[q];
            }
            Gate::Rz(t) => match quarter_turns(*t) {
                Some(k) if k % 2 == 1 => {
                    let q = qubits[0];
                    self.b[q] ^= self.a[q];
                }
                Some(_) => {}
                None => return Err(Error::invalid(format!("Rz({t}) is not Clifford"))),
            },
            Gate::Rx(t) => match quarter_turns(*t) {
                Some(k) if k % 2 == 1 => {
                    let q = qubits[0];
                    self.a[q] ^= self.b[q];
                }
                Some(_) => {}
                None => return Err(Error::invalid(format!("Rx({t}) is not Clifford"))),
            },
            Gate::CZ => {
                let (p, q) = (qubits[0], qubits[1]);
                self.b[p] ^= self.a[q];
                self.b[q] ^= self.a[p];
            }
            Gate::CX => {
                let (ctl, tgt) = (qubits[0], qubits[1]);
                self.a[tgt] ^= self.a[ctl];
                self.b[ctl] ^= self.b[tgt];
            }
            Gate::U1(_) | Gate::U2(_) => {
                return Err(Error::invalid("explicit matrices are not tracked by the frame"))
            }
        }
        Ok(())
    }

    pub fn absorb_measurement(&mut self, q: usize, s: bool, kind: MeasurementKind) {
        match kind {
            MeasurementKind::PhotonZ => self.b[q] ^= s,
            MeasurementKind::Teleport => self.a[q] ^= s,
        }
    }
}

/// Three-stage chooser for `Rz(gamma) Rx(beta) Rz(alpha)` executed as
/// `B(t3) . H B(t2) H . B(t1)` on a qubit carrying the frame `X^a Z^b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptiveRotation {
    pub a: bool,
    pub b: bool,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

fn sign(bit: bool) -> f64 {
    if bit {
        -1.0
    } else {
        1.0
    }
}

impl AdaptiveRotation {
    pub fn new(frame: (bool, bool), euler: (f64, f64, f64)) -> Self {
        AdaptiveRotation { a: frame.0, b: frame.1, alpha: euler.0, beta: euler.1, gamma: euler.2 }
    }

    pub fn theta1(&self) -> f64 {
        sign(self.a) * self.alpha
    }

    pub fn theta2(&self, s1: bool) -> f64 {
        sign(s1 ^ self.b) * self.beta
    }

    pub fn theta3(&self, s2: bool) -> f64 {
        sign(s2 ^ self.a) * self.gamma
    }

    /// Frame left on the qubit after all three outcomes are in.
    pub fn final_frame(&self, s1: bool, s2: bool, s3: bool) -> (bool, bool) {
        (s2 ^ self.a, s1 ^ s3 ^ self.b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::statevec::{Operator, StateVector};
    use proptest::prelude::*;
    use rand::Rng;

    fn pauli_op(n: usize, f: &PauliFrame) -> Operator {
        let mut op = Operator::identity(n).unwrap();
        for q in 0..n {
            let (a, b) = f.get(q);
            if b {
                op.apply(&Gate::Z, &[q]).unwrap();
            }
            if a {
                op.apply(&Gate::X, &[q]).unwrap();
            }
        }
        op
    }

    #[test]
    fn hadamard_swaps_bits() {
        for (a, b) in [(false, false), (true, false), (false, true), (true, true)] {
            let mut f = PauliFrame::new(1);
            f.set(0, a, b);
            f.conjugate(&Gate::H, &[0]).unwrap();
            assert_eq!(f.get(0), (b, a));
        }
    }

    #[test]
    fn identity_and_fresh_frame() {
        let mut f = PauliFrame::new(3);
        assert!(f.is_identity());
        f.set(1, true, true);
        let g = f.clone();
        f.conjugate(&Gate::I, &[1]).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn cx_copies_x_to_target() {
        let mut f = PauliFrame::new(2);
        f.set(0, true, false);
        f.conjugate(&Gate::CX, &[0, 1]).unwrap();
        assert_eq!(f.get(0), (true, false));
        assert_eq!(f.get(1), (true, false));

        // statevec: CX X_0 |psi> == X_0 X_1 CX |psi>
        let mut r = rng::stream(11, &[]);
        for _ in 0..5 {
            let psi = StateVector::random(2, &mut r).unwrap();
            let mut lhs = psi.clone();
            lhs.apply(&Gate::X, &[0]).unwrap();
            lhs.apply(&Gate::CX, &[0, 1]).unwrap();
            let mut rhs = psi;
            rhs.apply(&Gate::CX, &[0, 1]).unwrap();
            rhs.apply(&Gate::X, &[0]).unwrap();
            rhs.apply(&Gate::X, &[1]).unwrap();
            assert!(lhs.phase_distance(&rhs) < 1e-12);
        }
    }

    #[test]
    fn non_clifford_rejected() {
        let mut f = PauliFrame::new(1);
        assert!(f.conjugate(&Gate::Rz(0.3), &[0]).is_err());
        assert!(f.conjugate(&Gate::Rz(FRAC_PI_2), &[0]).is_ok());
    }

    #[test]
    fn measurement_absorption() {
        let mut f = PauliFrame::new(1);
        f.absorb_measurement(0, false, MeasurementKind::PhotonZ);
        assert!(f.is_identity());
        f.absorb_measurement(0, true, MeasurementKind::PhotonZ);
        assert_eq!(f.get(0), (false, true));
        f.absorb_measurement(0, true, MeasurementKind::PhotonZ);
        assert!(f.is_identity());
        f.absorb_measurement(0, true, MeasurementKind::Teleport);
        assert_eq!(f.get(0), (true, false));
    }

    #[test]
    fn adaptive_angles_basic() {
        let r = AdaptiveRotation::new((false, false), (0.1, 0.2, 0.3));
        assert_eq!((r.theta1(), r.theta2(false), r.theta3(false)), (0.1, 0.2, 0.3));
        let r = AdaptiveRotation::new((true, false), (0.1, 0.2, 0.3));
        assert_eq!(r.theta1(), -0.1);
    }

    #[test]
    fn adaptive_sequence_reproduces_euler_rotation() {
        let mut rg = rng::stream(12, &[]);
        for _ in 0..4 {
            let euler: (f64, f64, f64) = (rg.gen_range(-3.0..3.0), rg.gen_range(-3.0..3.0), rg.gen_range(-3.0..3.0));
            let mut target = Operator::identity(1).unwrap();
            target.apply(&Gate::Rz(euler.0), &[0]).unwrap();
            target.apply(&Gate::Rx(euler.1), &[0]).unwrap();
            target.apply(&Gate::Rz(euler.2), &[0]).unwrap();
            for code in 0..32u32 {
                let bit = |k: u32| (code >> k) & 1 == 1;
                let (a, b, s1, s2, s3) = (bit(0), bit(1), bit(2), bit(3), bit(4));
                let ad = AdaptiveRotation::new((a, b), euler);
                let mut f = PauliFrame::new(1);
                f.set(0, a, b);
                let mut u = pauli_op(1, &f);
                let bgate = |u: &mut Operator, t: f64, s: bool| {
                    u.apply(&Gate::Rz(t), &[0]).unwrap();
                    if s {
                        u.apply(&Gate::Z, &[0]).unwrap();
                    }
                };
                bgate(&mut u, ad.theta1(), s1);
                u.apply(&Gate::H, &[0]).unwrap();
                bgate(&mut u, ad.theta2(s1), s2);
                u.apply(&Gate::H, &[0]).unwrap();
                bgate(&mut u, ad.theta3(s2), s3);
                let (fa, fb) = ad.final_frame(s1, s2, s3);
                let mut pf = PauliFrame::new(1);
                pf.set(0, fa, fb);
                let expect = pauli_op(1, &pf).mul(&target).unwrap();
                assert!(u.phase_distance(&expect) < 1e-10, "code {code}");
            }
        }
    }

    fn clifford_word(seed: u64, n: usize, len: usize) -> Vec<(Gate, Vec<usize>)> {
        let mut r = rng::stream(seed, &[n as u64]);
        (0..len)
            .map(|_| {
                let q = r.gen_range(0..n);
                let p = (q + 1 + r.gen_range(0..n - 1)) % n;
                match r.gen_range(0..7) {
                    0 => (Gate::H, vec![q]),
                    1 => (Gate::S, vec![q]),
                    2 => (Gate::Sdg, vec![q]),
                    3 => (Gate::CZ, vec![q, p]),
                    4 => (Gate::CX, vec![q, p]),
                    5 => (Gate::X, vec![q]),
                    _ => (Gate::Rx(FRAC_PI_2), vec![q]),
                }
            })
            .collect()
    }

    proptest! {
        #[test]
        fn frame_matches_operator_conjugation(seed in 0u64..2000, bits in 0u32..64) {
            let n = 3;
            let word = clifford_word(seed, n, 6);
            let mut f = PauliFrame::new(n);
            for q in 0..n {
                f.set(q, (bits >> (2 * q)) & 1 == 1, (bits >> (2 * q + 1)) & 1 == 1);
            }
            let p = pauli_op(n, &f);
            let mut c = Operator::identity(n).unwrap();
            for (g, qs) in &word {
                c.apply(g, qs).unwrap();
                f.conjugate(g, qs).unwrap();
            }
            let lhs = c.mul(&p).unwrap().mul(&c.adjoint()).unwrap();
            let rhs = pauli_op(n, &f);
            prop_assert!(lhs.phase_distance(&rhs) < 1e-9);
        }

        #[test]
        fn conjugation_is_a_group_action(s1 in 0u64..1000, s2 in 0u64..1000, bits in 0u32..64) {
            let n = 3;
            let (w1, w2) = (clifford_word(s1, n, 3), clifford_word(s2 + 10_000, n, 3));
            let mut f = PauliFrame::new(n);
            for q in 0..n {
                f.set(q, (bits >> (2 * q)) & 1 == 1, (bits >> (2 * q + 1)) & 1 == 1);
            }
            let mut seq = f.clone();
            for (g, qs) in &w1 { seq.conjugate(g, qs).unwrap(); }
            for (g, qs) in &w2 { seq.conjugate(g, qs).unwrap(); }
            let mut composed = f;
            for (g, qs) in w1.iter().chain(&w2) { composed.conjugate(g, qs).unwrap(); }
            prop_assert_eq!(seq, composed);
        }

        #[test]
        fn self_inverse_cliffords_restore_frame(seed in 0u64..1000, bits in 0u32..16) {
            let mut f = PauliFrame::new(2);
            f.set(0, bits & 1 == 1, bits & 2 == 2);
            f.set(1, bits & 4 == 4, bits & 8 == 8);
            let g = [Gate::H, Gate::CZ, Gate::CX][(seed % 3) as usize].clone();
            let qs: Vec<usize> = if g.arity() == 1 { vec![(seed % 2) as usize] } else { vec![0, 1] };
            let before = f.clone();
            f.conjugate(&g, &qs).unwrap();
            f.conjugate(&g, &qs).unwrap();
            prop_assert_eq!(f, before);
        }
    }
}
