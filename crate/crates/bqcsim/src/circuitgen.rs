//! Circuit families: partially hidden bricklayer, Pauli rotations, Trotter products and
//! the seven-slot brickwork cell.

use crate::blindgate::AngleSet;
use crate::error::{Error, Result};
use crate::rng;
use crate::statevec::{DensityMatrix, Gate, Operator, StateVector};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

pub const IR_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateKind {
    /// Delegated rotation `Z^s Rz(2 pi p / 2^c)`.
    BTheta,
    /// Server-side `Rz(2 pi p / 2^c)` with a revealed angle.
    LocalRotation,
    LocalClifford,
    #[serde(rename = "local_2q")]
    Local2Q,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    Blind,
    Revealed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CliffordOp {
    H,
    S,
    Sdg,
    X,
    Y,
    Z,
    Cz,
    /// `qubits[0]` controls.
    Cx,
    /// Revealed entangling brick `CZ H1 Rz(p) H1 CZ`, qubit 1 = `qubits[0]`.
    Uc,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateEntry {
    pub kind: GateKind,
    pub qubits: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub op: Option<CliffordOp>,
    pub tag: Tag,
}

impl GateEntry {
    pub fn btheta(q: usize, p: u64) -> Self {
        GateEntry { kind: GateKind::BTheta, qubits: vec![q], p: Some(p), op: None, tag: Tag::Blind }
    }

    pub fn rotation(q: usize, p: u64) -> Self {
        GateEntry { kind: GateKind::LocalRotation, qubits: vec![q], p: Some(p), op: None, tag: Tag::Revealed }
    }

    pub fn clifford(op: CliffordOp, q: usize) -> Self {
        GateEntry { kind: GateKind::LocalClifford, qubits: vec![q], p: None, op: Some(op), tag: Tag::Revealed }
    }

    pub fn two(op: CliffordOp, a: usize, b: usize, p: Option<u64>) -> Self {
        GateEntry { kind: GateKind::Local2Q, qubits: vec![a, b], p, op: Some(op), tag: Tag::Revealed }
    }

    pub fn is_blind(&self) -> bool {
        self.tag == Tag::Blind
    }

    /// Statevector gates for this entry; `s` is the frame bit of a delegated rotation.
    pub fn expand(&self, angles: &AngleSet, s: bool) -> Vec<(Gate, Vec<usize>)> {
        let q = &self.qubits;
        let rz = |p: Option<u64>| Gate::Rz(angles.angle(p.unwrap_or(0)));
        match (self.kind, self.op) {
            (GateKind::BTheta, _) => {
                let mut v = vec![(rz(self.p), vec![q[0]])];
                if s {
                    v.push((Gate::Z, vec![q[0]]));
                }
                v
            }
            (GateKind::LocalRotation, _) => vec![(rz(self.p), vec![q[0]])],
            (_, Some(CliffordOp::Uc)) => vec![
                (Gate::CZ, q.clone()),
                (Gate::H, vec![q[0]]),
                (rz(self.p), vec![q[0]]),
                (Gate::H, vec![q[0]]),
                (Gate::CZ, q.clone()),
            ],
            (_, Some(op)) => {
                let g = match op {
                    CliffordOp::H => Gate::H,
                    CliffordOp::S => Gate::S,
                    CliffordOp::Sdg => Gate::Sdg,
                    CliffordOp::X => Gate::X,
                    CliffordOp::Y => Gate::Y,
                    CliffordOp::Z => Gate::Z,
                    CliffordOp::Cz => Gate::CZ,
                    CliffordOp::Cx => Gate::CX,
                    CliffordOp::Uc => unreachable!(),
                };
                vec![(g, q.clone())]
            }
            (_, None) => vec![],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitIR {
    pub version: u32,
    pub family: String,
    pub n_qubits: usize,
    pub r_h: Option<f64>,
    pub c: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    pub seed: Option<u64>,
    pub gates: Vec<GateEntry>,
}

impl CircuitIR {
    pub fn new(family: &str, n_qubits: usize, c: u32) -> Self {
        CircuitIR {
            version: IR_VERSION,
            family: family.to_string(),
            n_qubits,
            r_h: None,
            c,
            depth: None,
            seed: None,
            gates: vec![],
        }
    }

    pub fn angles(&self) -> Result<AngleSet> {
        AngleSet::new(self.c)
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.angles()?;
        for (i, g) in self.gates.iter().enumerate() {
            let want = match g.kind {
                GateKind::Local2Q => 2,
                _ => 1,
            };
            if g.qubits.len() != want || g.qubits.iter().any(|&q| q >= self.n_qubits) {
                return Err(Error::invalid(format!("gate {i}: bad operands {:?}", g.qubits)));
            }
            if want == 2 && g.qubits[0] == g.qubits[1] {
                return Err(Error::invalid(format!("gate {i}: repeated operand")));
            }
            if g.is_blind() != (g.kind == GateKind::BTheta) {
                return Err(Error::invalid(format!("gate {i}: blind tag only on delegated rotations")));
            }
            if let Some(p) = g.p {
                if p >= a.size() {
                    return Err(Error::invalid(format!("gate {i}: angle index {p} outside set")));
                }
            }
            let needs_p = matches!(g.kind, GateKind::BTheta | GateKind::LocalRotation) || g.op == Some(CliffordOp::Uc);
            if needs_p && g.p.is_none() {
                return Err(Error::invalid(format!("gate {i}: missing angle index")));
            }
            if matches!(g.kind, GateKind::LocalClifford | GateKind::Local2Q) && g.op.is_none() {
                return Err(Error::invalid(format!("gate {i}: missing Clifford label")));
            }
        }
        Ok(())
    }

    pub fn blind_count(&self) -> usize {
        self.gates.iter().filter(|g| g.is_blind()).count()
    }

    pub fn blind_angles(&self) -> Vec<u64> {
        self.gates.iter().filter(|g| g.is_blind()).map(|g| g.p.unwrap_or(0)).collect()
    }

    /// Same structure with the blind angles replaced in order.
    pub fn with_blind_angles(&self, ps: &[u64]) -> Result<CircuitIR> {
        if ps.len() != self.blind_count() {
            return Err(Error::invalid("angle list length differs from blind-gate count"));
        }
        let mut out = self.clone();
        let mut it = ps.iter();
        for g in out.gates.iter_mut().filter(|g| g.is_blind()) {
            g.p = it.next().copied();
        }
        out.validate()?;
        Ok(out)
    }

    /// True when both circuits reveal the same structure to the server.
    pub fn same_revealed_structure(&self, other: &CircuitIR) -> bool {
        self.n_qubits == other.n_qubits
            && self.c == other.c
            && self.gates.len() == other.gates.len()
            && self.gates.iter().zip(&other.gates).all(|(a, b)| {
                a.kind == b.kind && a.qubits == b.qubits && a.op == b.op && a.tag == b.tag && (a.is_blind() || a.p == b.p)
            })
    }

    /// Each entry expanded to statevector gates, with `s[k]` for the k-th blind entry.
    pub fn expand(&self, s: &[bool]) -> Result<Vec<(Gate, Vec<usize>)>> {
        let a = self.angles()?;
        let mut k = 0;
        let mut out = vec![];
        for g in &self.gates {
            let bit = if g.is_blind() {
                k += 1;
                s.get(k - 1).copied().unwrap_or(false)
            } else {
                false
            };
            out.extend(g.expand(&a, bit));
        }
        Ok(out)
    }

    pub fn unitary(&self, s: &[bool]) -> Result<Operator> {
        let mut u = Operator::identity(self.n_qubits)?;
        for (g, q) in self.expand(s)? {
            u.apply(&g, &q)?;
        }
        Ok(u)
    }

    pub fn apply_to_state(&self, st: &mut StateVector, s: &[bool]) -> Result<()> {
        for (g, q) in self.expand(s)? {
            st.apply(&g, &q)?;
        }
        Ok(())
    }

    pub fn apply_to_density(&self, rho: &mut DensityMatrix, s: &[bool]) -> Result<()> {
        for (g, q) in self.expand(s)? {
            rho.apply(&g, &q)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: CircuitIR = serde_json::from_str(text)?;
        if c.version != IR_VERSION {
            return Err(Error::invalid(format!("unsupported circuit version {}", c.version)));
        }
        c.validate()?;
        Ok(c)
    }
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5 + 1e-12).floor().max(0.0) as usize
}

/// Pairs touched by entangling bricks in layer `i`.
pub fn brick_pairs(n: usize, layer: usize) -> Vec<(usize, usize)> {
    let start = layer % 2;
    (start..n.saturating_sub(1)).step_by(2).map(|q| (q, q + 1)).collect()
}

fn push_1q_brick<R: Rng>(gates: &mut Vec<GateEntry>, q: usize, blind: bool, size: u64, r: &mut R) {
    for k in 0..3 {
        if k > 0 {
            gates.push(GateEntry::clifford(CliffordOp::H, q));
        }
        let p = r.gen_range(0..size);
        gates.push(if blind { GateEntry::btheta(q, p) } else { GateEntry::rotation(q, p) });
    }
}

fn push_2q_brick<R: Rng>(gates: &mut Vec<GateEntry>, a: usize, b: usize, blind: bool, size: u64, r: &mut R) {
    let p = r.gen_range(0..size);
    if blind {
        gates.push(GateEntry::two(CliffordOp::Cz, a, b, None));
        gates.push(GateEntry::clifford(CliffordOp::H, a));
        gates.push(GateEntry::btheta(a, p));
        gates.push(GateEntry::clifford(CliffordOp::H, a));
        gates.push(GateEntry::two(CliffordOp::Cz, a, b, None));
    } else {
        gates.push(GateEntry::two(CliffordOp::Uc, a, b, Some(p)));
    }
}

/// Brick layout: each layer is a universal single-qubit brick on every qubit followed by
/// entangling bricks on alternating neighbour pairs. `round(R_h * bricks)` bricks are
/// blind; the single-qubit stratum gets `round(R_h * n1)` of them so the delegated-gate
/// count tracks `R_h` as well.
pub fn build_bricklayer(n: usize, layers: usize, r_h: f64, c: u32, seed: u64) -> Result<CircuitIR> {
    if n < 2 {
        return Err(Error::invalid("bricklayer needs at least 2 qubits"));
    }
    if layers == 0 {
        return Err(Error::invalid("bricklayer needs at least 1 layer"));
    }
    if !(0.0..=1.0).contains(&r_h) {
        return Err(Error::invalid(format!("R_h = {r_h} outside [0,1]")));
    }
    let a = AngleSet::new(c)?;
    let mut r = rng::stream(seed, &[0xB41C]);
    let n1 = n * layers;
    let n2: usize = (0..layers).map(|i| brick_pairs(n, i).len()).sum();
    let total = round_half_up(r_h * (n1 + n2) as f64);
    let k1 = round_half_up(r_h * n1 as f64).min(n1).min(total);
    let k2 = (total - k1).min(n2);
    let mut blind1 = vec![false; n1];
    for i in sample(&mut r, n1, k1) {
        blind1[i] = true;
    }
    let mut blind2 = vec![false; n2];
    for i in sample(&mut r, n2, k2) {
        blind2[i] = true;
    }
    let mut circ = CircuitIR::new("bricklayer", n, c);
    circ.r_h = Some(r_h);
    circ.depth = Some(layers);
    circ.seed = Some(seed);
    let (mut i1, mut i2) = (0, 0);
    for layer in 0..layers {
        for q in 0..n {
            push_1q_brick(&mut circ.gates, q, blind1[i1], a.size(), &mut r);
            i1 += 1;
        }
        for (p, q) in brick_pairs(n, layer) {
            push_2q_brick(&mut circ.gates, p, q, blind2[i2], a.size(), &mut r);
            i2 += 1;
        }
    }
    circ.validate()?;
    Ok(circ)
}

// ---- Pauli strings -----------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

/// Letter `i` acts on qubit `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PauliString {
    pub letters: Vec<Pauli>,
    pub coeff: f64,
}

impl PauliString {
    pub fn new(letters: Vec<Pauli>, coeff: f64) -> Self {
        PauliString { letters, coeff }
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.letters.iter().all(|&l| l == Pauli::I)
    }

    /// (x mask, z mask) with Y contributing to both.
    pub fn masks(&self) -> (usize, usize) {
        let (mut x, mut z) = (0, 0);
        for (q, l) in self.letters.iter().enumerate() {
            match l {
                Pauli::X => x |= 1 << q,
                Pauli::Z => z |= 1 << q,
                Pauli::Y => {
                    x |= 1 << q;
                    z |= 1 << q
                }
                Pauli::I => {}
            }
        }
        (x, z)
    }

    /// Uniformly random non-identity string.
    pub fn random<R: Rng + ?Sized>(n: usize, r: &mut R) -> Self {
        loop {
            let letters: Vec<Pauli> =
                (0..n).map(|_| [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z][r.gen_range(0..4)]).collect();
            let p = PauliString::new(letters, 1.0);
            if !p.is_identity() {
                return p;
            }
        }
    }
}

impl FromStr for PauliString {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let letters = s
            .chars()
            .map(|ch| match ch.to_ascii_uppercase() {
                'I' => Ok(Pauli::I),
                'X' => Ok(Pauli::X),
                'Y' => Ok(Pauli::Y),
                'Z' => Ok(Pauli::Z),
                o => Err(Error::invalid(format!("bad Pauli letter {o:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PauliString::new(letters, 1.0))
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.letters {
            write!(f, "{l:?}")?;
        }
        Ok(())
    }
}

fn push_pauli_rotation(gates: &mut Vec<GateEntry>, p: &PauliString, angle: u64) -> Result<()> {
    if p.is_identity() {
        return Err(Error::invalid("identity Pauli string has no rotation"));
    }
    let active: Vec<usize> = (0..p.len()).filter(|&q| p.letters[q] != Pauli::I).collect();
    for &q in &active {
        match p.letters[q] {
            Pauli::X => gates.push(GateEntry::clifford(CliffordOp::H, q)),
            Pauli::Y => {
                gates.push(GateEntry::clifford(CliffordOp::Sdg, q));
                gates.push(GateEntry::clifford(CliffordOp::H, q));
            }
            _ => {}
        }
    }
    for w in active.windows(2) {
        gates.push(GateEntry::two(CliffordOp::Cx, w[0], w[1], None));
    }
    gates.push(GateEntry::btheta(*active.last().unwrap(), angle));
    for w in active.windows(2).rev() {
        gates.push(GateEntry::two(CliffordOp::Cx, w[0], w[1], None));
    }
    for &q in &active {
        match p.letters[q] {
            Pauli::X => gates.push(GateEntry::clifford(CliffordOp::H, q)),
            Pauli::Y => {
                gates.push(GateEntry::clifford(CliffordOp::H, q));
                gates.push(GateEntry::clifford(CliffordOp::S, q));
            }
            _ => {}
        }
    }
    Ok(())
}

/// `exp(i theta/2 P)` as basis change, parity ladder, one delegated rotation, and undo.
pub fn build_pauli_rotation(p: &PauliString, angle: u64, c: u32) -> Result<CircuitIR> {
    let mut circ = CircuitIR::new("pauli_rotation", p.len(), c);
    push_pauli_rotation(&mut circ.gates, p, angle)?;
    circ.validate()?;
    Ok(circ)
}

/// Random Pauli-rotation circuit: `layers` rotations about strings drawn once from
/// `structure_seed`, with uniformly random angles from `seed`.
pub fn build_random_pauli_rotations(n: usize, layers: usize, c: u32, structure_seed: u64, seed: u64) -> Result<CircuitIR> {
    let a = AngleSet::new(c)?;
    let mut rs = rng::stream(structure_seed, &[0x9A01]);
    let mut ra = rng::stream(seed, &[0x9A02]);
    let mut circ = CircuitIR::new("pauli_rotations", n, c);
    circ.depth = Some(layers);
    circ.seed = Some(seed);
    for _ in 0..layers {
        let p = PauliString::random(n, &mut rs);
        push_pauli_rotation(&mut circ.gates, &p, ra.gen_range(0..a.size()))?;
    }
    Ok(circ)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrotterCircuit {
    pub circuit: CircuitIR,
    /// Largest |theta_j - grid member| over all terms.
    pub max_rounding_error: f64,
}

/// First-order product of `exp(-i h_j P_j t / n)` in list order, repeated n times.
pub fn build_trotter(terms: &[PauliString], t: f64, n_trotter: usize, c: u32) -> Result<TrotterCircuit> {
    if terms.is_empty() {
        return Err(Error::invalid("empty Hamiltonian"));
    }
    if n_trotter == 0 {
        return Err(Error::invalid("need at least one Trotter step"));
    }
    let n = terms[0].len();
    if terms.iter().any(|p| p.len() != n) {
        return Err(Error::invalid("terms act on different register sizes"));
    }
    let a = AngleSet::new(c)?;
    let mut worst: f64 = 0.0;
    let ps: Vec<u64> = terms
        .iter()
        .map(|p| {
            let (idx, err) = a.nearest(-2.0 * p.coeff * t / n_trotter as f64);
            worst = worst.max(err);
            idx
        })
        .collect();
    let mut circ = CircuitIR::new("trotter", n, c);
    circ.depth = Some(n_trotter);
    for _ in 0..n_trotter {
        for (p, &idx) in terms.iter().zip(&ps) {
            push_pauli_rotation(&mut circ.gates, p, idx)?;
        }
    }
    circ.validate()?;
    Ok(TrotterCircuit { circuit: circ, max_rounding_error: worst })
}

// ---- seven-slot brickwork cell -----------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellMode {
    /// delta = 0: the two wires never interact.
    #[serde(rename = "two-1q")]
    TwoSingle,
    Cnot,
}

/// Angle indices for slots (alpha, alpha', beta, beta', gamma, gamma', delta).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellAngles(pub [u64; 7]);

/// Time order on wires 0 and 1:
/// `a,a' | H H | b,b' | H H | CZ | g,g' | H H | d(0) | H H | CZ`.
pub fn brickwork_cell_with(angles: CellAngles, c: u32) -> Result<CircuitIR> {
    let [al, al2, be, be2, ga, ga2, de] = angles.0;
    let hh = |g: &mut Vec<GateEntry>| {
        g.push(GateEntry::clifford(CliffordOp::H, 0));
        g.push(GateEntry::clifford(CliffordOp::H, 1));
    };
    let mut circ = CircuitIR::new("brickwork_cell", 2, c);
    let g = &mut circ.gates;
    g.push(GateEntry::btheta(0, al));
    g.push(GateEntry::btheta(1, al2));
    hh(g);
    g.push(GateEntry::btheta(0, be));
    g.push(GateEntry::btheta(1, be2));
    hh(g);
    g.push(GateEntry::two(CliffordOp::Cz, 0, 1, None));
    g.push(GateEntry::btheta(0, ga));
    g.push(GateEntry::btheta(1, ga2));
    hh(g);
    g.push(GateEntry::btheta(0, de));
    hh(g);
    g.push(GateEntry::two(CliffordOp::Cz, 0, 1, None));
    circ.validate()?;
    Ok(circ)
}

/// Preset angles: `two-1q` zeroes every slot; `cnot` sets beta = gamma' = pi/2 and
/// delta = -pi/2 with the rest zero.
pub fn cell_preset(mode: CellMode, c: u32) -> Result<CellAngles> {
    let a = AngleSet::new(c)?;
    Ok(match mode {
        CellMode::TwoSingle => CellAngles([0; 7]),
        CellMode::Cnot => {
            let q = a.index_of(FRAC_PI_2).ok_or_else(|| Error::invalid("cnot cell needs c >= 2"))?;
            CellAngles([0, 0, q, 0, 0, q, a.neg(q)])
        }
    })
}

pub fn build_brickwork_cell(mode: CellMode, c: u32) -> Result<CircuitIR> {
    brickwork_cell_with(cell_preset(mode, c)?, c)
}

/// The 24 single-qubit Cliffords (modulo phase) as 2x2 operators.
pub fn single_qubit_cliffords() -> Vec<Operator> {
    let mut found: Vec<Operator> = vec![Operator::identity(1).unwrap()];
    let mut frontier = found.clone();
    while !frontier.is_empty() {
        let mut next = vec![];
        for u in &frontier {
            for g in [Gate::H, Gate::S] {
                let mut v = u.clone();
                v.apply_unchecked(&g, &[0]);
                if found.iter().all(|w| w.phase_distance(&v) > 1e-9) {
                    found.push(v.clone());
                    next.push(v);
                }
            }
        }
        frontier = next;
    }
    found
}

fn kron2(a: &Operator, b: &Operator) -> Operator {
    // qubit 0 <- a, qubit 1 <- b
    Operator::from_fn(2, |r, col| a.get(r & 1, col & 1) * b.get(r >> 1, col >> 1)).unwrap()
}

/// Residual of the best local factorization of a two-qubit operator (0 iff it is A (x) B).
pub fn local_residual(u: &Operator) -> f64 {
    use nalgebra::DMatrix;
    // realignment: R[(r0,c0),(r1,c1)] = U[(r0 + 2 r1),(c0 + 2 c1)]
    let m = DMatrix::from_fn(4, 4, |i, j| {
        let (r0, c0) = (i & 1, i >> 1);
        let (r1, c1) = (j & 1, j >> 1);
        u.get(r0 + 2 * r1, c0 + 2 * c1)
    });
    let sv = m.singular_values();
    let mut v: Vec<f64> = sv.iter().copied().collect();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v[1..].iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// min over single-qubit Cliffords D of the distance of `u D^dag CX` from a local operator;
/// zero iff `u = A CX D` for some local A.
pub fn cx_equivalence_distance(u: &Operator) -> f64 {
    let cl = single_qubit_cliffords();
    let mut cx = Operator::identity(2).unwrap();
    cx.apply_unchecked(&Gate::CX, &[0, 1]);
    let mut best = f64::INFINITY;
    for d0 in &cl {
        for d1 in &cl {
            let d = kron2(d0, d1);
            let w = u.mul(&d.adjoint()).unwrap().mul(&cx).unwrap();
            best = best.min(local_residual(&w));
        }
    }
    best
}
