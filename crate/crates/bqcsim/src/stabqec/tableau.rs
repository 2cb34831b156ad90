//! Signed Pauli products and a CHP stabilizer tableau.

use crate::error::{Error, Result};
use rand::Rng;
use std::fmt;

/// Clifford gates understood by the tableau and the frame simulator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Clifford {
    H(usize),
    S(usize),
    Sdg(usize),
    X(usize),
    Y(usize),
    Z(usize),
    Cx(usize, usize),
    Cz(usize, usize),
}

impl Clifford {
    pub fn qubits(&self) -> ([usize; 2], usize) {
        use Clifford::*;
        match *self {
            H(q) | S(q) | Sdg(q) | X(q) | Y(q) | Z(q) => ([q, q], 1),
            Cx(a, b) | Cz(a, b) => ([a, b], 2),
        }
    }
}

/// `i^phase * prod_q X_q^{x_q} Z_q^{z_q}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SignedPauli {
    pub x: Vec<bool>,
    pub z: Vec<bool>,
    pub phase: u8,
}

impl SignedPauli {
    pub fn identity(n: usize) -> Self {
        SignedPauli { x: vec![false; n], z: vec![false; n], phase: 0 }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Hermitian Pauli with letter-wise support, e.g. `from_letters("XZZXI", false)`.
    pub fn from_letters(s: &str, negative: bool) -> Result<Self> {
        let n = s.chars().count();
        let mut p = SignedPauli::identity(n);
        let mut ys = 0u8;
        for (q, ch) in s.chars().enumerate() {
            match ch {
                'I' | '_' => {}
                'X' => p.x[q] = true,
                'Z' => p.z[q] = true,
                'Y' => {
                    p.x[q] = true;
                    p.z[q] = true;
                    ys += 1;
                }
                _ => return Err(Error::invalid(format!("bad Pauli letter {ch:?}"))),
            }
        }
        // Y = i X Z, so a Hermitian product carries i^{#Y}.
        p.phase = (ys + if negative { 2 } else { 0 }) % 4;
        Ok(p)
    }

    pub fn single(n: usize, q: usize, x: bool, z: bool) -> Self {
        let mut p = SignedPauli::identity(n);
        p.x[q] = x;
        p.z[q] = z;
        if x && z {
            p.phase = 1;
        }
        p
    }

    fn y_count(&self) -> u8 {
        (self.x.iter().zip(&self.z).filter(|(a, b)| **a && **b).count() % 4) as u8
    }

    /// Sign of a Hermitian product: `Some(false)` for +, `Some(true)` for -, `None` if not Hermitian.
    pub fn sign(&self) -> Option<bool> {
        match (self.phase + 4 - self.y_count()) % 4 {
            0 => Some(false),
            2 => Some(true),
            _ => None,
        }
    }

    pub fn letters(&self) -> String {
        self.x
            .iter()
            .zip(&self.z)
            .map(|(&x, &z)| match (x, z) {
                (false, false) => 'I',
                (true, false) => 'X',
                (false, true) => 'Z',
                (true, true) => 'Y',
            })
            .collect()
    }

    pub fn commutes(&self, other: &SignedPauli) -> bool {
        let mut acc = false;
        for q in 0..self.len() {
            acc ^= (self.x[q] & other.z[q]) ^ (self.z[q] & other.x[q]);
        }
        !acc
    }

    /// `self * other`.
    pub fn mul(&self, other: &SignedPauli) -> SignedPauli {
        let n = self.len();
        let mut out = SignedPauli::identity(n);
        let mut ph = self.phase as u32 + other.phase as u32;
        for q in 0..n {
            if self.z[q] && other.x[q] {
                ph += 2;
            }
            out.x[q] = self.x[q] ^ other.x[q];
            out.z[q] = self.z[q] ^ other.z[q];
        }
        out.phase = (ph % 4) as u8;
        out
    }

    /// In-place `C P C^dag`.
    pub fn conjugate(&mut self, g: Clifford) {
        let (qs, k) = g.qubits();
        let mut acc = Local::default();
        for (slot, &q) in qs[..k].iter().enumerate() {
            if self.x[q] {
                acc = acc.mul(&image(g, slot, true));
            }
            if self.z[q] {
                acc = acc.mul(&image(g, slot, false));
            }
        }
        for (slot, &q) in qs[..k].iter().enumerate() {
            self.x[q] = acc.x[slot];
            self.z[q] = acc.z[slot];
        }
        self.phase = (self.phase + acc.phase) % 4;
    }
}

impl fmt::Display for SignedPauli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sign() {
            Some(false) => write!(f, "+{}", self.letters()),
            Some(true) => write!(f, "-{}", self.letters()),
            None => write!(f, "i^{}*{}", self.phase, self.letters()),
        }
    }
}

/// Pauli on the (at most two) qubits of a gate, slot-indexed.
#[derive(Clone, Copy, Default)]
struct Local {
    x: [bool; 2],
    z: [bool; 2],
    phase: u8,
}

impl Local {
    fn new(x: [bool; 2], z: [bool; 2], phase: u8) -> Self {
        Local { x, z, phase }
    }
    fn mul(&self, o: &Local) -> Local {
        let mut ph = self.phase + o.phase;
        let mut out = Local::default();
        for s in 0..2 {
            if self.z[s] && o.x[s] {
                ph += 2;
            }
            out.x[s] = self.x[s] ^ o.x[s];
            out.z[s] = self.z[s] ^ o.z[s];
        }
        out.phase = ph % 4;
        out
    }
}

/// Image of X (`is_x`) or Z on gate slot `slot` under conjugation by `g`.
fn image(g: Clifford, slot: usize, is_x: bool) -> Local {
    use Clifford::*;
    let f = false;
    let t = true;
    match (g, is_x) {
        (H(_), true) => Local::new([f, f], [t, f], 0),
        (H(_), false) => Local::new([t, f], [f, f], 0),
        // S X S^dag = Y = i X Z
        (S(_), true) => Local::new([t, f], [t, f], 1),
        (Sdg(_), true) => Local::new([t, f], [t, f], 3),
        (S(_) | Sdg(_), false) => Local::new([f, f], [t, f], 0),
        (X(_), true) => Local::new([t, f], [f, f], 0),
        (X(_), false) => Local::new([f, f], [t, f], 2),
        (Z(_), true) => Local::new([t, f], [f, f], 2),
        (Z(_), false) => Local::new([f, f], [t, f], 0),
        (Y(_), true) => Local::new([t, f], [f, f], 2),
        (Y(_), false) => Local::new([f, f], [t, f], 2),
        (Cx(..), true) => {
            if slot == 0 {
                Local::new([t, t], [f, f], 0)
            } else {
                Local::new([f, t], [f, f], 0)
            }
        }
        (Cx(..), false) => {
            if slot == 0 {
                Local::new([f, f], [t, f], 0)
            } else {
                Local::new([f, f], [t, t], 0)
            }
        }
        (Cz(..), true) => {
            if slot == 0 {
                Local::new([t, f], [f, t], 0)
            } else {
                // X_b -> Z_a X_b = X_b Z_a as operators on distinct qubits
                Local::new([f, t], [t, f], 0)
            }
        }
        (Cz(..), false) => {
            let mut z = [f, f];
            z[slot] = t;
            Local::new([f, f], z, 0)
        }
    }
}

/// Aaronson-Gottesman tableau: rows `0..n` destabilizers, `n..2n` stabilizers.
#[derive(Clone, Debug)]
pub struct Tableau {
    n: usize,
    rows: Vec<SignedPauli>,
}

impl Tableau {
    /// `|0...0>`.
    pub fn new(n: usize) -> Self {
        let mut rows = Vec::with_capacity(2 * n);
        for q in 0..n {
            rows.push(SignedPauli::single(n, q, true, false));
        }
        for q in 0..n {
            rows.push(SignedPauli::single(n, q, false, true));
        }
        Tableau { n, rows }
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn stabilizers(&self) -> &[SignedPauli] {
        &self.rows[self.n..]
    }

    pub fn apply(&mut self, g: Clifford) {
        for r in &mut self.rows {
            r.conjugate(g);
        }
    }

    pub fn apply_all(&mut self, gates: &[Clifford]) {
        for &g in gates {
            self.apply(g);
        }
    }

    /// Symplectic sanity: stabilizers commute, each destabilizer anticommutes only with its partner,
    /// all rows Hermitian.
    pub fn check(&self) -> Result<()> {
        let n = self.n;
        for i in 0..2 * n {
            if self.rows[i].sign().is_none() {
                return Err(Error::invalid(format!("row {i} is not Hermitian")));
            }
            for j in (i + 1)..2 * n {
                let anti = !self.rows[i].commutes(&self.rows[j]);
                let expect = j == i + n;
                if anti != expect {
                    return Err(Error::invalid(format!("rows {i},{j} violate symplectic form")));
                }
            }
        }
        Ok(())
    }

    /// Measure Z on `q`. Returns (outcome, deterministic).
    pub fn measure<R: Rng + ?Sized>(&mut self, q: usize, rng: &mut R) -> (bool, bool) {
        let n = self.n;
        if let Some(p) = (n..2 * n).find(|&i| self.rows[i].x[q]) {
            for i in 0..2 * n {
                if i != p && self.rows[i].x[q] {
                    self.rows[i] = self.rows[i].mul(&self.rows[p]);
                }
            }
            self.rows[p - n] = self.rows[p].clone();
            let outcome: bool = rng.gen();
            let mut z = SignedPauli::single(n, q, false, true);
            if outcome {
                z.phase = 2;
            }
            self.rows[p] = z;
            (outcome, false)
        } else {
            let z = SignedPauli::single(n, q, false, true);
            (self.peek(&z).expect("Z_q must be in the stabilizer group"), true)
        }
    }

    /// Measure and reset to |0>.
    pub fn reset<R: Rng + ?Sized>(&mut self, q: usize, rng: &mut R) {
        let (m, _) = self.measure(q, rng);
        if m {
            self.apply(Clifford::X(q));
        }
    }

    /// If +/-P stabilizes the state, return its sign (`false` = +1 eigenstate).
    pub fn peek(&self, p: &SignedPauli) -> Option<bool> {
        let n = self.n;
        if self.rows[n..].iter().any(|s| !s.commutes(p)) {
            return None;
        }
        let mut acc = SignedPauli::identity(n);
        for i in 0..n {
            if !self.rows[i].commutes(p) {
                acc = acc.mul(&self.rows[i + n]);
            }
        }
        if acc.x != p.x || acc.z != p.z {
            return None;
        }
        // acc = s * P with s = +/-1
        let s = (acc.phase + 4 - p.phase) % 4;
        match s {
            0 => Some(p.sign()?),
            2 => Some(!p.sign()?),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statevec::{Gate, StateVector};
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn to_gate(g: Clifford) -> (Gate, Vec<usize>) {
        use Clifford::*;
        match g {
            H(q) => (Gate::H, vec![q]),
            S(q) => (Gate::S, vec![q]),
            Sdg(q) => (Gate::Sdg, vec![q]),
            X(q) => (Gate::X, vec![q]),
            Y(q) => (Gate::Y, vec![q]),
            Z(q) => (Gate::Z, vec![q]),
            Cx(a, b) => (Gate::CX, vec![a, b]),
            Cz(a, b) => (Gate::CZ, vec![a, b]),
        }
    }

    fn apply_pauli_sv(p: &SignedPauli, s: &StateVector) -> StateVector {
        // i^phase X^x Z^z acting on s: apply Z's first, then X's.
        let mut out = s.clone();
        for q in 0..p.len() {
            if p.z[q] {
                out.apply(&Gate::Z, &[q]).unwrap();
            }
        }
        for q in 0..p.len() {
            if p.x[q] {
                out.apply(&Gate::X, &[q]).unwrap();
            }
        }
        let ph = crate::statevec::C64::new(0.0, 1.0).powi(p.phase as i32);
        StateVector::from_amplitudes(out.amplitudes().iter().map(|a| a * ph).collect()).unwrap()
    }

    fn arb_gate(n: usize) -> impl Strategy<Value = Clifford> {
        (0..8usize, 0..n, 0..n).prop_filter_map("distinct", move |(k, a, b)| {
            use Clifford::*;
            Some(match k {
                0 => H(a),
                1 => S(a),
                2 => Sdg(a),
                3 => X(a),
                4 => Y(a),
                5 => Z(a),
                6 if a != b => Cx(a, b),
                7 if a != b => Cz(a, b),
                _ => return None,
            })
        })
    }

    #[test]
    fn letters_round_trip_and_sign() {
        let p = SignedPauli::from_letters("XYZI", true).unwrap();
        assert_eq!(p.letters(), "XYZI");
        assert_eq!(p.sign(), Some(true));
        assert_eq!(format!("{p}"), "-XYZI");
    }

    #[test]
    fn bell_state_stabilizers() {
        let mut t = Tableau::new(2);
        t.apply(Clifford::H(0));
        t.apply(Clifford::Cx(0, 1));
        t.check().unwrap();
        assert_eq!(t.peek(&SignedPauli::from_letters("XX", false).unwrap()), Some(false));
        assert_eq!(t.peek(&SignedPauli::from_letters("ZZ", false).unwrap()), Some(false));
        assert_eq!(t.peek(&SignedPauli::from_letters("YY", false).unwrap()), Some(true));
        assert_eq!(t.peek(&SignedPauli::from_letters("ZI", false).unwrap()), None);
    }

    #[test]
    fn measurement_collapses_and_repeats() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut t = Tableau::new(3);
        t.apply(Clifford::H(0));
        t.apply(Clifford::Cx(0, 1));
        t.apply(Clifford::Cx(1, 2));
        let (m0, det0) = t.measure(0, &mut rng);
        assert!(!det0);
        for q in 1..3 {
            let (m, det) = t.measure(q, &mut rng);
            assert!(det);
            assert_eq!(m, m0);
        }
        t.check().unwrap();
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        // Conjugation rule checked against dense matrices: C P C^dag |psi> == C P |phi> with |phi> = C^dag |psi>.
        #[test]
        fn conjugation_matches_statevector(gates in prop::collection::vec(arb_gate(3), 1..8), xs in 0u8..8, zs in 0u8..8, seed in 0u64..1000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut p = SignedPauli::identity(3);
            for q in 0..3 {
                p.x[q] = xs >> q & 1 == 1;
                p.z[q] = zs >> q & 1 == 1;
            }
            let psi = StateVector::random(3, &mut rng).unwrap();
            // lhs: U P |psi>
            let mut lhs = apply_pauli_sv(&p, &psi);
            for &g in &gates {
                let (gg, qs) = to_gate(g);
                lhs.apply(&gg, &qs).unwrap();
            }
            // rhs: (U P U^dag) U |psi>
            let mut q = p.clone();
            let mut upsi = psi.clone();
            for &g in &gates {
                q.conjugate(g);
                let (gg, qs) = to_gate(g);
                upsi.apply(&gg, &qs).unwrap();
            }
            let rhs = apply_pauli_sv(&q, &upsi);
            let d: f64 = lhs.amplitudes().iter().zip(rhs.amplitudes()).map(|(a, b)| (a - b).norm_sqr()).sum();
            prop_assert!(d < 1e-20, "distance {d}");
        }

        #[test]
        fn tableau_stays_symplectic(gates in prop::collection::vec(arb_gate(4), 1..30), meas in prop::collection::vec(0usize..4, 0..4)) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
            let mut t = Tableau::new(4);
            for &g in &gates { t.apply(g); }
            for &q in &meas { t.measure(q, &mut rng); }
            prop_assert!(t.check().is_ok());
        }
    }
}
