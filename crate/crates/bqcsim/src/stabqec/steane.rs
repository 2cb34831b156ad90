//! Blind transversal S, H and CX on the [[7,1,3]] Steane code.
//!
//! Each construction is a fixed list of local Cliffords with delegated Z rotations in
//! between. A branch fixes the hidden angles; the induced logical action is read off by
//! conjugating the logical Paulis and reducing the images modulo the stabilizer group.

use super::builder::{blind_cx_ops, CodeNoise};
use super::circuit::Op;
use super::tableau::{Clifford, SignedPauli};
use crate::error::{Error, Result};
use crate::statevec::{Gate, StateVector};
use serde::{Deserialize, Serialize};

const HAMMING: [[u8; 7]; 3] = [[0, 0, 0, 1, 1, 1, 1], [0, 1, 1, 0, 0, 1, 1], [1, 0, 1, 0, 1, 0, 1]];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SteaneGate {
    S,
    H,
    Cx,
}

impl std::str::FromStr for SteaneGate {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s" => Ok(SteaneGate::S),
            "h" => Ok(SteaneGate::H),
            "cx" | "cnot" => Ok(SteaneGate::Cx),
            _ => Err(Error::invalid(format!("unknown Steane gate {s:?}"))),
        }
    }
}

/// Stabilizer generators of `blocks` Steane blocks on `7 * blocks` qubits.
pub fn stabilizers(blocks: usize) -> Vec<SignedPauli> {
    let n = 7 * blocks;
    let mut out = Vec::new();
    for b in 0..blocks {
        for x_type in [true, false] {
            for row in HAMMING {
                let mut p = SignedPauli::identity(n);
                for (q, &bit) in row.iter().enumerate() {
                    if bit == 1 {
                        if x_type {
                            p.x[7 * b + q] = true;
                        } else {
                            p.z[7 * b + q] = true;
                        }
                    }
                }
                out.push(p);
            }
        }
    }
    out
}

/// Transversal logical X (x = true) or Z of block `b`.
pub fn logical(blocks: usize, b: usize, x: bool) -> SignedPauli {
    let mut p = SignedPauli::identity(7 * blocks);
    for q in 7 * b..7 * b + 7 {
        if x {
            p.x[q] = true;
        } else {
            p.z[q] = true;
        }
    }
    p
}

fn bits(p: &SignedPauli) -> Vec<bool> {
    p.x.iter().chain(&p.z).copied().collect()
}

/// Write `target` as a product of `gens` (up to phase); returns the chosen subset.
fn solve_gf2(gens: &[SignedPauli], target: &SignedPauli) -> Option<Vec<usize>> {
    let m = gens.len();
    let cols = 2 * target.len();
    // rows: generator bit vectors augmented with an identity tag to recover the subset
    let mut rows: Vec<(Vec<bool>, Vec<bool>)> = gens
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let mut tag = vec![false; m];
            tag[i] = true;
            (bits(g), tag)
        })
        .collect();
    let mut t = (bits(target), vec![false; m]);
    let mut pivot_row = 0;
    for col in 0..cols {
        let Some(p) = (pivot_row..m).find(|&r| rows[r].0[col]) else { continue };
        rows.swap(pivot_row, p);
        let pr = rows[pivot_row].clone();
        for r in 0..m {
            if r != pivot_row && rows[r].0[col] {
                xor_into(&mut rows[r], &pr);
            }
        }
        if t.0[col] {
            xor_into(&mut t, &pr);
        }
        pivot_row += 1;
    }
    if t.0.iter().any(|&b| b) {
        return None;
    }
    Some((0..m).filter(|&i| t.1[i]).collect())
}

fn xor_into(a: &mut (Vec<bool>, Vec<bool>), b: &(Vec<bool>, Vec<bool>)) {
    for (x, y) in a.0.iter_mut().zip(&b.0) {
        *x ^= y;
    }
    for (x, y) in a.1.iter_mut().zip(&b.1) {
        *x ^= y;
    }
}

/// Logical action of `p` on the code space: the logical Pauli (per block letter) and sign,
/// or `None` if `p` does not preserve the code space.
pub fn logical_class(p: &SignedPauli, blocks: usize) -> Option<(String, bool)> {
    let stabs = stabilizers(blocks);
    if stabs.iter().any(|s| !s.commutes(p)) {
        return None;
    }
    for code in 0..(1usize << (2 * blocks)) {
        let mut l = SignedPauli::identity(7 * blocks);
        let mut name = String::new();
        for b in 0..blocks {
            let (x, z) = (code >> (2 * b) & 1 == 1, code >> (2 * b + 1) & 1 == 1);
            if x {
                l = l.mul(&logical(blocks, b, true));
            }
            if z {
                l = l.mul(&logical(blocks, b, false));
            }
            name.push(match (x, z) {
                (false, false) => 'I',
                (true, false) => 'X',
                (false, true) => 'Z',
                (true, true) => 'Y',
            });
        }
        // make l Hermitian (XZ = -iY)
        for b in 0..blocks {
            if code >> (2 * b) & 3 == 3 {
                l.phase = (l.phase + 1) % 4;
            }
        }
        let q = p.mul(&l);
        let Some(subset) = solve_gf2(&stabs, &q) else { continue };
        let mut prod = SignedPauli::identity(7 * blocks);
        for i in subset {
            prod = prod.mul(&stabs[i]);
        }
        // q = sigma * prod, and p = q l acts as sigma * l on the code space
        let rel = (q.phase + 4 - prod.phase) % 4;
        return match rel {
            0 => Some((name, false)),
            2 => Some((name, true)),
            _ => None,
        };
    }
    None
}

/// Gate list of a construction for one branch of hidden angles. Angles are indices into
/// `{0, pi/2, pi, 3pi/2}`, with `Rz(pi/2) ~ Sdg` and `Rz(3pi/2) ~ S`.
pub fn construction(gate: SteaneGate, angles: &[u8]) -> Result<Vec<Clifford>> {
    let rz = |q: usize, a: u8| -> Vec<Clifford> {
        match a % 4 {
            0 => vec![],
            1 => vec![Clifford::Sdg(q)],
            2 => vec![Clifford::Z(q)],
            _ => vec![Clifford::S(q)],
        }
    };
    let need = match gate {
        SteaneGate::S => 7,
        SteaneGate::H => 21,
        SteaneGate::Cx => 21,
    };
    if angles.len() != need {
        return Err(Error::invalid(format!("{gate:?} construction takes {need} angles, got {}", angles.len())));
    }
    let mut out = Vec::new();
    match gate {
        SteaneGate::S => {
            for q in 0..7 {
                out.extend(rz(q, angles[q]));
            }
        }
        SteaneGate::H => {
            for q in 0..7 {
                let a = &angles[3 * q..3 * q + 3];
                out.extend(rz(q, a[0]));
                out.push(Clifford::H(q));
                out.extend(rz(q, a[1]));
                out.push(Clifford::H(q));
                out.extend(rz(q, a[2]));
            }
        }
        SteaneGate::Cx => {
            // blind_cx_ops places rotations at: Sdg on t, S on c, S on t (between H's)
            let noise = CodeNoise { eps_comm: 0.0, eps_loc: 0.0 };
            for q in 0..7 {
                let a = &angles[3 * q..3 * q + 3];
                let mut k = 0;
                for op in blind_cx_ops(q, 7 + q, noise, true) {
                    let Op::Gate(g) = op else { continue };
                    match g {
                        Clifford::Sdg(t) | Clifford::S(t) => {
                            out.extend(rz(t, a[k]));
                            k += 1;
                        }
                        _ => out.push(g),
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Hidden angles of the two branches of each construction: (identity, target gate).
pub fn branches(gate: SteaneGate) -> [(String, Vec<u8>); 2] {
    match gate {
        SteaneGate::S => [("identity".into(), vec![0; 7]), ("s".into(), vec![1; 7])],
        SteaneGate::H => [("identity".into(), vec![0; 21]), ("h".into(), vec![1; 21])],
        SteaneGate::Cx => [("identity".into(), vec![0; 21]), ("cx".into(), [1, 3, 3].repeat(7))],
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogicalImage {
    pub input: String,
    pub output: String,
    pub negative: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchResult {
    pub name: String,
    pub angles: Vec<u8>,
    pub images: Vec<LogicalImage>,
    /// Whether the images match the expected logical action (identity or the target gate).
    pub matches: bool,
    /// Statevector cross-check (S and H only): distance to the expected logical state.
    pub statevec_distance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteaneReport {
    pub gate: SteaneGate,
    pub branches: Vec<BranchResult>,
}

impl SteaneReport {
    pub fn all_match(&self) -> bool {
        self.branches.iter().all(|b| b.matches && b.statevec_distance.map_or(true, |d| d < 1e-9))
    }
}

fn image(p: &SignedPauli, gates: &[Clifford]) -> SignedPauli {
    let mut p = p.clone();
    for &g in gates {
        p.conjugate(g);
    }
    p
}

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

/// Logical |0> of one Steane block as a 7-qubit state.
fn logical_zero() -> Result<StateVector> {
    let mut amps = vec![crate::statevec::c(0.0, 0.0); 128];
    // |0_L> is the uniform superposition over the X-stabilizer group applied to |0000000>
    for code in 0..8usize {
        let mut idx = 0usize;
        for (r, row) in HAMMING.iter().enumerate() {
            if code >> r & 1 == 1 {
                for (q, &b) in row.iter().enumerate() {
                    if b == 1 {
                        idx ^= 1 << q;
                    }
                }
            }
        }
        amps[idx] = crate::statevec::c(1.0, 0.0);
    }
    StateVector::from_amplitudes(amps.iter().map(|a| a / 8f64.sqrt()).collect())
}

fn apply_all(s: &mut StateVector, gates: &[Clifford]) -> Result<()> {
    for &g in gates {
        let (gate, qs) = to_gate(g);
        s.apply(&gate, &qs)?;
    }
    Ok(())
}

/// Apply a logical single-qubit gate expressed through transversal physical gates.
fn logical_state(a: f64, b: (f64, f64), logical_ops: &[Clifford]) -> Result<StateVector> {
    let zero = logical_zero()?;
    let mut one = zero.clone();
    for q in 0..7 {
        one.apply(&Gate::X, &[q])?;
    }
    let amps: Vec<_> = zero
        .amplitudes()
        .iter()
        .zip(one.amplitudes())
        .map(|(z, o)| z * a + o * crate::statevec::c(b.0, b.1))
        .collect();
    let mut s = StateVector::from_amplitudes(amps)?;
    apply_all(&mut s, logical_ops)?;
    Ok(s)
}

pub fn steane_blind_gates(gate: SteaneGate) -> Result<SteaneReport> {
    let blocks = if gate == SteaneGate::Cx { 2 } else { 1 };
    let mut inputs = Vec::new();
    for b in 0..blocks {
        inputs.push((format!("X{b}"), logical(blocks, b, true)));
        inputs.push((format!("Z{b}"), logical(blocks, b, false)));
    }
    let mut out = Vec::new();
    for (bi, (name, angles)) in branches(gate).into_iter().enumerate() {
        let gates = construction(gate, &angles)?;
        let mut images = Vec::new();
        for (label, p) in &inputs {
            let img = image(p, &gates);
            let (output, negative) = logical_class(&img, blocks)
                .ok_or_else(|| Error::invalid(format!("{gate:?}/{name}: image of {label} leaves the code space")))?;
            images.push(LogicalImage { input: label.clone(), output, negative });
        }
        let got: Vec<(&str, bool)> = images.iter().map(|i| (i.output.as_str(), i.negative)).collect();
        let matches = if bi == 0 {
            let want: Vec<&str> = match gate {
                SteaneGate::Cx => vec!["XI", "ZI", "IX", "IZ"],
                _ => vec!["X", "Z"],
            };
            got.iter().map(|g| g.0).eq(want.iter().copied()) && got.iter().all(|g| !g.1)
        } else {
            match gate {
                // X -> +-Y, Z -> +Z
                SteaneGate::S => got[0].0 == "Y" && got[1] == ("Z", false),
                SteaneGate::H => got[0] == ("Z", false) && got[1] == ("X", false),
                SteaneGate::Cx => got == vec![("XX", false), ("ZI", false), ("IX", false), ("ZZ", false)],
            }
        };
        // statevector: the construction on a random logical state vs the transversal logical gate
        let statevec_distance = match gate {
            SteaneGate::Cx => None,
            _ => {
                let (a, b) = (0.6, (0.48, 0.64));
                let mut phys = logical_state(a, b, &[])?;
                apply_all(&mut phys, &gates)?;
                let ideal: Vec<Clifford> = match (gate, bi) {
                    (_, 0) => vec![],
                    (SteaneGate::S, _) => (0..7).map(Clifford::Sdg).collect(),
                    _ => (0..7).map(Clifford::H).collect(),
                };
                let want = logical_state(a, b, &ideal)?;
                Some(phys.phase_distance(&want))
            }
        };
        out.push(BranchResult { name, angles, images, matches, statevec_distance });
    }
    Ok(SteaneReport { gate, branches: out })
}
