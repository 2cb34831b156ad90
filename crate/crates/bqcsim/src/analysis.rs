//! Blindness verification, the fidelity/efficiency/unitary-count trade-off, and
//! frame-potential expressibility estimates.

use crate::blindgate::{expected_photons_memory, mean_attempts, AngleSet, ErrorModel};
use crate::circuitgen::{
    brickwork_cell_with, build_bricklayer, build_random_pauli_rotations, CellAngles, CircuitIR, CliffordOp, GateEntry, GateKind,
};
use crate::error::{Error, Result};
use crate::pauliframe::AdaptiveRotation;
use crate::rng;
use crate::statevec::{c, trace_distance, DensityMatrix, Gate, Operator, StateVector, C64, MAX_SV_QUBITS};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const BLIND_TOL: f64 = 1e-9;
/// Explicit branch enumeration is capped at this many delegated rotations.
pub const MAX_ENUM_BLIND: usize = 14;

// ---- blindness ---------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Sum over every assignment of the hidden frame bits.
    Enumerate,
    /// Average each delegated rotation's frame bit as soon as it is produced.
    Sequential,
    /// Negative control: frame bits fixed to zero.
    Unaveraged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlindnessReport {
    pub distance: f64,
    pub branches: usize,
    pub inputs: usize,
    pub mode: Averaging,
}

impl BlindnessReport {
    pub fn is_blind(&self) -> bool {
        self.distance < BLIND_TOL
    }
}

/// |0..0>, |+..+> and one Haar-ish random pure state.
pub fn probe_states(n: usize, seed: u64) -> Result<Vec<DensityMatrix>> {
    let zero = StateVector::new(n)?;
    let mut plus = StateVector::new(n)?;
    for q in 0..n {
        plus.apply(&Gate::H, &[q])?;
    }
    let mut r = rng::stream(seed, &[0xB11D]);
    let rand = StateVector::random(n, &mut r)?;
    [zero, plus, rand].iter().map(DensityMatrix::from_state).collect()
}

fn dephase_z(rho: &mut DensityMatrix, q: usize) -> Result<()> {
    let mut z = rho.clone();
    z.apply(&Gate::Z, &[q])?;
    rho.scale(0.5);
    rho.add_scaled(&z, 0.5)
}

/// State held by the server after the circuit, averaged over frame bits it never sees.
pub fn server_state(circ: &CircuitIR, rho0: &DensityMatrix, mode: Averaging) -> Result<DensityMatrix> {
    match mode {
        Averaging::Enumerate => {
            let nb = circ.blind_count();
            if nb > MAX_ENUM_BLIND {
                return Err(Error::capacity(format!("{nb} delegated rotations exceed enumeration cap {MAX_ENUM_BLIND}")));
            }
            let mut acc = DensityMatrix::zeros(rho0.n_qubits())?;
            let w = 1.0 / (1u64 << nb) as f64;
            for code in 0..1usize << nb {
                let s: Vec<bool> = (0..nb).map(|k| (code >> k) & 1 == 1).collect();
                let mut rho = rho0.clone();
                circ.apply_to_density(&mut rho, &s)?;
                acc.add_scaled(&rho, w)?;
            }
            Ok(acc)
        }
        Averaging::Sequential => {
            let a = circ.angles()?;
            let mut rho = rho0.clone();
            for g in &circ.gates {
                for (gate, q) in g.expand(&a, false) {
                    rho.apply(&gate, &q)?;
                }
                if g.is_blind() {
                    dephase_z(&mut rho, g.qubits[0])?;
                }
            }
            Ok(rho)
        }
        Averaging::Unaveraged => {
            let mut rho = rho0.clone();
            circ.apply_to_density(&mut rho, &[])?;
            Ok(rho)
        }
    }
}

/// Largest trace distance between the server's views of two programs that share every
/// revealed field and differ only in delegated angles.
pub fn verify_blindness(a: &CircuitIR, b: &CircuitIR, mode: Averaging, seed: u64) -> Result<BlindnessReport> {
    if !a.same_revealed_structure(b) {
        return Err(Error::invalid("circuits differ in revealed structure and are not comparable"));
    }
    let probes = probe_states(a.n_qubits, seed)?;
    let mut d: f64 = 0.0;
    for rho in &probes {
        d = d.max(trace_distance(&server_state(a, rho, mode)?, &server_state(b, rho, mode)?)?);
    }
    let branches = if mode == Averaging::Enumerate { 1 << a.blind_count() } else { 1 };
    Ok(BlindnessReport { distance: d, branches, inputs: probes.len(), mode })
}

/// Server view of the three-rotation universal gate with adaptive angles, for a qubit
/// that arrives carrying frame (a, b).
pub fn adaptive_rotation_server_state(
    frame: (bool, bool),
    euler: (f64, f64, f64),
    rho0: &DensityMatrix,
    mode: Averaging,
) -> Result<DensityMatrix> {
    let rule = AdaptiveRotation::new(frame, euler);
    let mut start = rho0.clone();
    if frame.0 {
        start.apply(&Gate::X, &[0])?;
    }
    if frame.1 {
        start.apply(&Gate::Z, &[0])?;
    }
    let codes: Vec<u32> = match mode {
        Averaging::Unaveraged => vec![0],
        _ => (0..8).collect(),
    };
    let mut acc = DensityMatrix::zeros(1)?;
    for &code in &codes {
        let s = [(code & 1) == 1, (code & 2) == 2, (code & 4) == 4];
        let mut rho = start.clone();
        let steps = [rule.theta1(), rule.theta2(s[0]), rule.theta3(s[1])];
        for (k, th) in steps.iter().enumerate() {
            if k > 0 {
                rho.apply(&Gate::H, &[0])?;
            }
            rho.apply(&Gate::Rz(*th), &[0])?;
            if s[k] {
                rho.apply(&Gate::Z, &[0])?;
            }
        }
        acc.add_scaled(&rho, 1.0 / codes.len() as f64)?;
    }
    Ok(acc)
}

/// Blindness of the adaptive universal rotation over all incoming frames; `Sequential` is
/// treated as `Enumerate` because later angles depend on earlier outcomes.
pub fn verify_adaptive_rotation(
    e1: (f64, f64, f64),
    e2: (f64, f64, f64),
    mode: Averaging,
    seed: u64,
) -> Result<BlindnessReport> {
    let probes = probe_states(1, seed)?;
    let mut d: f64 = 0.0;
    for frame in [(false, false), (false, true), (true, false), (true, true)] {
        for rho in &probes {
            let x = adaptive_rotation_server_state(frame, e1, rho, mode)?;
            let y = adaptive_rotation_server_state(frame, e2, rho, mode)?;
            d = d.max(trace_distance(&x, &y)?);
        }
    }
    let branches = if mode == Averaging::Unaveraged { 1 } else { 8 };
    let mode = if mode == Averaging::Sequential { Averaging::Enumerate } else { mode };
    Ok(BlindnessReport { distance: d, branches, inputs: probes.len() * 4, mode })
}

/// Unnormalized computation-qubit state for each revealed teleport-outcome sequence of
/// the loss-tolerant rotation protocol with target index `p`.
pub fn protocol_branch_states(
    angles: &AngleSet,
    p: u64,
    rho0: &DensityMatrix,
    mode: Averaging,
) -> Result<Vec<(Vec<bool>, DensityMatrix)>> {
    if rho0.n_qubits() != 1 {
        return Err(Error::invalid("protocol check acts on one computation qubit"));
    }
    let depth = angles.c() as usize;
    let mut seqs: Vec<Vec<bool>> = (1..=depth).map(|k| (0..k).map(|i| i + 1 < k).collect()).collect();
    seqs.push(vec![true; depth]);
    let rho_in = DMatrix::from_fn(2, 2, |r, col| rho0.get(r, col));
    let mut out = vec![];
    for seq in seqs {
        let mut rho = rho_in.clone();
        for (k, &m) in seq.iter().enumerate() {
            let phi = angles.angle(angles.reduce((p as i128) << k));
            // communication qubit (|0> + (-1)^s e^{-i phi}|1>)/sqrt2
            let ss: &[bool] = if mode == Averaging::Unaveraged { &[false] } else { &[false, true] };
            let mut comm = DMatrix::<C64>::zeros(2, 2);
            for &s in ss {
                let sign = if s { -1.0 } else { 1.0 };
                let v = [c(1.0 / 2f64.sqrt(), 0.0), C64::from_polar(sign / 2f64.sqrt(), -phi)];
                for i in 0..2 {
                    for j in 0..2 {
                        comm[(i, j)] += v[i] * v[j].conj() / ss.len() as f64;
                    }
                }
            }
            // index = comp + 2 comm; CX with comp controlling comm
            let joint = DMatrix::from_fn(4, 4, |r, col| rho[(r & 1, col & 1)] * comm[(r >> 1, col >> 1)]);
            let perm = |i: usize| if i & 1 == 1 { i ^ 2 } else { i };
            let after = DMatrix::from_fn(4, 4, |r, col| joint[(perm(r), perm(col))]);
            let mb = usize::from(m) * 2;
            rho = DMatrix::from_fn(2, 2, |r, col| after[(r + mb, col + mb)]);
        }
        let data: Vec<C64> = (0..4).map(|i| rho[(i / 2, i % 2)]).collect();
        out.push((seq, DensityMatrix::from_raw(1, data)?));
    }
    Ok(out)
}

/// Max over revealed outcome sequences of the distance between branch states for two
/// target angles.
pub fn verify_protocol_blindness(c: u32, p1: u64, p2: u64, mode: Averaging, seed: u64) -> Result<BlindnessReport> {
    let a = AngleSet::new(c)?;
    let probes = probe_states(1, seed)?;
    let mut d: f64 = 0.0;
    let mut branches = 0;
    for rho in &probes {
        let x = protocol_branch_states(&a, p1, rho, mode)?;
        let y = protocol_branch_states(&a, p2, rho, mode)?;
        branches = x.len();
        for ((_, bx), (_, by)) in x.iter().zip(&y) {
            d = d.max(trace_distance(bx, by)?);
        }
    }
    Ok(BlindnessReport { distance: d, branches, inputs: probes.len(), mode })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlindnessCheck {
    pub name: String,
    /// Frame-averaged distance between two different secret angle choices.
    pub blind: BlindnessReport,
    /// Same comparison with the frame bits fixed.
    pub control: BlindnessReport,
}

impl BlindnessCheck {
    pub fn passes(&self, control_min: f64) -> bool {
        self.blind.is_blind() && self.control.distance > control_min
    }
}

fn uc_brick(p: u64, c: u32) -> CircuitIR {
    let mut circ = CircuitIR::new("uc_blind", 2, c);
    circ.gates = vec![
        GateEntry::two(CliffordOp::Cz, 0, 1, None),
        GateEntry::clifford(CliffordOp::H, 0),
        GateEntry::btheta(0, p),
        GateEntry::clifford(CliffordOp::H, 0),
        GateEntry::two(CliffordOp::Cz, 0, 1, None),
    ];
    circ
}

/// The adaptive single-qubit rotation over all frames and outcomes, the blind two-qubit
/// brick, the seven-slot cell, and every branch of the loss-tolerant rotation.
pub fn blindness_suite(seed: u64) -> Result<Vec<BlindnessCheck>> {
    let mut r = rng::stream(seed, &[0xB11D]);
    let mut out = Vec::new();
    let e = |r: &mut rng::Rng| (r.gen_range(-PI..PI), r.gen_range(0.0..PI), r.gen_range(-PI..PI));
    let (e1, e2) = (e(&mut r), e(&mut r));
    out.push(BlindnessCheck {
        name: "adaptive_1q".into(),
        blind: verify_adaptive_rotation(e1, e2, Averaging::Enumerate, seed)?,
        control: verify_adaptive_rotation((0.0, 0.0, 0.0), (PI, PI / 2.0, 0.0), Averaging::Unaveraged, seed)?,
    });
    let c = 3;
    let (p1, p2) = (r.gen_range(0..8), r.gen_range(0..8));
    out.push(BlindnessCheck {
        name: "blind_2q".into(),
        blind: verify_blindness(&uc_brick(p1, c), &uc_brick(p2, c), Averaging::Enumerate, seed)?,
        control: verify_blindness(&uc_brick(0, c), &uc_brick(4, c), Averaging::Unaveraged, seed)?,
    });
    let x: [u64; 7] = std::array::from_fn(|_| r.gen_range(0..8));
    let y: [u64; 7] = std::array::from_fn(|_| r.gen_range(0..8));
    let cell = |a| brickwork_cell_with(CellAngles(a), c);
    out.push(BlindnessCheck {
        name: "brickwork_cell".into(),
        blind: verify_blindness(&cell(x)?, &cell(y)?, Averaging::Enumerate, seed)?,
        control: verify_blindness(&cell([0; 7])?, &cell([4, 0, 0, 0, 0, 0, 0])?, Averaging::Unaveraged, seed)?,
    });
    let (q1, q2) = (r.gen_range(0..8), r.gen_range(0..8));
    out.push(BlindnessCheck {
        name: "loss_tolerant_rotation".into(),
        blind: verify_protocol_blindness(c, q1, q2, Averaging::Enumerate, seed)?,
        control: verify_protocol_blindness(c, 0, 4, Averaging::Unaveraged, seed)?,
    });
    Ok(out)
}

// ---- fidelity / efficiency trade-off -------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Exact density-matrix propagation (n <= 6).
    Exact,
    /// One sampled Pauli per channel per shot, pure-state overlap (n <= 10).
    Trajectory,
    /// Exact when it fits, trajectories otherwise.
    Auto,
}

pub const MAX_TRAJECTORY_QUBITS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffConfig {
    pub n: usize,
    pub depth: usize,
    pub r_h: Vec<f64>,
    pub model: ErrorModel,
    pub shots: usize,
    pub seed: u64,
    pub mode: NoiseMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub r_h: f64,
    pub fidelity: f64,
    pub fidelity_stderr: f64,
    pub efficiency: f64,
    pub log2_unitaries: f64,
    /// Closed form `(f_blind/f_local)^(N R_h) f_local^N` over N bricks.
    pub lower_bound: f64,
    /// Product of `1 - eps` over every channel actually placed.
    pub count_bound: f64,
    pub n_blind: usize,
    pub shots: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffReport {
    pub n: usize,
    pub depth: usize,
    pub mode: NoiseMode,
    pub model: ErrorModel,
    pub points: Vec<TradeoffPoint>,
}

pub const TRADEOFF_CSV_HEADER: &str = "r_h,fidelity,fidelity_stderr,efficiency,log2_unitaries,lower_bound,shots,seed";

impl TradeoffReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(TRADEOFF_CSV_HEADER);
        s.push('\n');
        for p in &self.points {
            s.push_str(&format!(
                "{},{:.10},{:.10},{:.10e},{},{:.10e},{},{}\n",
                p.r_h, p.fidelity, p.fidelity_stderr, p.efficiency, p.log2_unitaries, p.lower_bound, p.shots, p.seed
            ));
        }
        s
    }
}

/// Where noise channels go: after each delegated rotation and after each entangling gate.
fn is_two_qubit_noisy(g: &crate::circuitgen::GateEntry) -> bool {
    g.kind == GateKind::Local2Q && matches!(g.op, Some(CliffordOp::Cz | CliffordOp::Cx | CliffordOp::Uc))
}

fn channel_counts(circ: &CircuitIR) -> (usize, usize) {
    let b = circ.blind_count();
    let l = circ.gates.iter().filter(|g| is_two_qubit_noisy(g)).count();
    (b, l)
}

fn sample_pauli_on<R: Rng>(st: &mut StateVector, qubits: &[usize], r: &mut R) -> Result<()> {
    let terms = (1usize << (2 * qubits.len())) - 1;
    let code = r.gen_range(1..=terms);
    for (i, &q) in qubits.iter().enumerate() {
        let p = (code >> (2 * i)) & 3;
        // 1 = X, 2 = Y, 3 = Z
        st.apply_pauli(q, p == 1 || p == 2, p == 2 || p == 3)?;
    }
    Ok(())
}

fn tradeoff_shot(circ: &CircuitIR, eps_b: f64, eps_l: f64, mode: NoiseMode, shot_seed: u64) -> Result<f64> {
    let n = circ.n_qubits;
    let a = circ.angles()?;
    let mut ideal = StateVector::new(n)?;
    circ.apply_to_state(&mut ideal, &[])?;
    match mode {
        NoiseMode::Exact => {
            let mut rho = DensityMatrix::zero_state(n)?;
            for g in &circ.gates {
                for (gate, q) in g.expand(&a, false) {
                    rho.apply(&gate, &q)?;
                }
                if g.is_blind() {
                    rho.apply_depolarizing(&g.qubits, eps_b)?;
                } else if is_two_qubit_noisy(g) {
                    rho.apply_depolarizing(&g.qubits, eps_l)?;
                }
            }
            rho.expectation_pure(&ideal)
        }
        _ => {
            let mut r = rng::stream(shot_seed, &[0x7AAC]);
            let mut st = StateVector::new(n)?;
            for g in &circ.gates {
                for (gate, q) in g.expand(&a, false) {
                    st.apply(&gate, &q)?;
                }
                let eps = if g.is_blind() {
                    eps_b
                } else if is_two_qubit_noisy(g) {
                    eps_l
                } else {
                    continue;
                };
                if r.gen::<f64>() < eps {
                    sample_pauli_on(&mut st, &g.qubits, &mut r)?;
                }
            }
            Ok(ideal.inner(&st).norm_sqr())
        }
    }
}

pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Closed-form bound with `f_blind = f_comm^(7/3) f_CZ^(2/3)` and `f_local = f_CZ`.
pub fn scaling_lower_bound(n_bricks: usize, r_h: f64, f_comm: f64, f_cz: f64) -> f64 {
    let f_blind = f_comm.powf(7.0 / 3.0) * f_cz.powf(2.0 / 3.0);
    let f_local = f_cz;
    (f_blind / f_local).powf(n_bricks as f64 * r_h) * f_local.powi(n_bricks as i32)
}

pub fn tradeoff_sweep(cfg: &TradeoffConfig) -> Result<TradeoffReport> {
    cfg.model.validate()?;
    if cfg.shots < 2 {
        return Err(Error::invalid("need at least 2 shots for a standard error"));
    }
    let mode = match cfg.mode {
        NoiseMode::Auto if cfg.n <= crate::statevec::MAX_DM_QUBITS => NoiseMode::Exact,
        NoiseMode::Auto => NoiseMode::Trajectory,
        m => m,
    };
    if mode == NoiseMode::Exact && cfg.n > crate::statevec::MAX_DM_QUBITS {
        return Err(Error::capacity(format!("exact mode supports n <= {}", crate::statevec::MAX_DM_QUBITS)));
    }
    if cfg.n > MAX_TRAJECTORY_QUBITS {
        return Err(Error::capacity(format!("trade-off sweeps support n <= {MAX_TRAJECTORY_QUBITS}")));
    }
    let m = &cfg.model;
    let eps_b = (mean_attempts(m.c) * m.eps_comm).min(1.0);
    let mut points = vec![];
    for (ip, &r_h) in cfg.r_h.iter().enumerate() {
        let template = build_bricklayer(cfg.n, cfg.depth, r_h, m.c, cfg.seed)?;
        let (n_blind, n_loc) = channel_counts(&template);
        let fids: Vec<f64> = (0..cfg.shots)
            .into_par_iter()
            .map(|shot| {
                let s = rng::derive(cfg.seed, &[ip as u64, shot as u64]);
                let circ = build_bricklayer(cfg.n, cfg.depth, r_h, m.c, s)?;
                tradeoff_shot(&circ, eps_b, m.eps_loc, mode, s)
            })
            .collect::<Result<_>>()?;
        let (f, se) = mean_stderr(&fids);
        let efficiency = if n_blind == 0 {
            1.0
        } else {
            1.0 / expected_photons_memory(n_blind as u64, m.eta, m.c)?
        };
        let n1 = cfg.n * cfg.depth;
        let n2: usize = (0..cfg.depth).map(|i| crate::circuitgen::brick_pairs(cfg.n, i).len()).sum();
        points.push(TradeoffPoint {
            r_h,
            fidelity: f,
            fidelity_stderr: se,
            efficiency,
            log2_unitaries: (m.c as usize * n_blind) as f64,
            lower_bound: scaling_lower_bound(n1 + n2, r_h, 1.0 - eps_b, 1.0 - m.eps_loc),
            count_bound: (1.0 - eps_b).powi(n_blind as i32) * (1.0 - m.eps_loc).powi(n_loc as i32),
            n_blind,
            shots: cfg.shots,
            seed: cfg.seed,
        });
    }
    Ok(TradeoffReport { n: cfg.n, depth: cfg.depth, mode, model: cfg.model.clone(), points })
}

// ---- frame potentials ------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleDistribution {
    Discrete,
    Continuous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum Ensemble {
    /// Fully blind bricklayer.
    Bricklayer,
    /// Angle-blind Pauli rotations about strings fixed by `structure_seed`.
    PauliRotations { structure_seed: u64 },
    /// Dense Haar sampler; reference ensemble.
    Haar,
    /// A single fixed unitary.
    Fixed,
}

impl Ensemble {
    pub fn name(&self) -> &'static str {
        match self {
            Ensemble::Bricklayer => "bricklayer",
            Ensemble::PauliRotations { .. } => "pauli_rotations",
            Ensemble::Haar => "haar",
            Ensemble::Fixed => "fixed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FramePotentialConfig {
    pub ensemble: Ensemble,
    pub n: usize,
    pub depth: usize,
    pub k: u32,
    pub samples: usize,
    pub seed: u64,
    pub c: u32,
    pub angles: AngleDistribution,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FramePotentialEstimate {
    pub family: String,
    pub k: u32,
    pub n_qubits: usize,
    pub depth: usize,
    pub blind_gates: usize,
    pub samples: usize,
    pub mean: f64,
    pub stderr: f64,
    /// `hdim^k sqrt(F - k!)`, zero when the estimate sits at or below the Haar value.
    pub delta_eps: f64,
    pub delta_eps_stderr: f64,
}

pub const MIN_FP_SAMPLES: usize = 1000;
pub const MAX_FP_QUBITS: usize = 8;

fn factorial(k: u32) -> f64 {
    (1..=k).map(|x| x as f64).product()
}

enum Step {
    Fixed(Gate, Vec<usize>),
    Blind(usize),
}

fn compile(circ: &CircuitIR) -> Result<Vec<Step>> {
    let a = circ.angles()?;
    let mut out = vec![];
    for g in &circ.gates {
        if g.is_blind() {
            out.push(Step::Blind(g.qubits[0]));
        } else {
            out.extend(g.expand(&a, false).into_iter().map(|(gt, q)| Step::Fixed(gt, q)));
        }
    }
    Ok(out)
}

/// Dense Haar unitary via QR of a complex Gaussian matrix with the R-diagonal phases removed.
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, r: &mut R) -> Result<Operator> {
    let dim = 1usize << n;
    let z = DMatrix::from_fn(dim, dim, |_, _| {
        let re: f64 = r.sample(StandardNormal);
        let im: f64 = r.sample(StandardNormal);
        c(re, im)
    });
    let qr = z.qr();
    let (mut q, rr) = (qr.q(), qr.r());
    for j in 0..dim {
        let d = rr[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { c(1.0, 0.0) };
        for i in 0..dim {
            q[(i, j)] *= ph;
        }
    }
    Operator::from_dmatrix(&q)
}

fn ensemble_template(cfg: &FramePotentialConfig) -> Result<Option<CircuitIR>> {
    Ok(match cfg.ensemble {
        Ensemble::Bricklayer => Some(build_bricklayer(cfg.n, cfg.depth, 1.0, cfg.c, cfg.seed)?),
        Ensemble::PauliRotations { structure_seed } => {
            Some(build_random_pauli_rotations(cfg.n, cfg.depth, cfg.c, structure_seed, cfg.seed)?)
        }
        Ensemble::Haar | Ensemble::Fixed => None,
    })
}

fn sample_unitary(cfg: &FramePotentialConfig, steps: &[Step], angles: &AngleSet, idx: usize) -> Result<Operator> {
    let mut r = rng::stream(cfg.seed, &[0xF9A3, idx as u64]);
    match cfg.ensemble {
        Ensemble::Haar => haar_unitary(cfg.n, &mut r),
        Ensemble::Fixed => Operator::identity(cfg.n),
        _ => {
            let mut u = Operator::identity(cfg.n)?;
            for s in steps {
                match s {
                    Step::Fixed(g, q) => u.apply_unchecked(g, q),
                    Step::Blind(q) => {
                        let th = match cfg.angles {
                            AngleDistribution::Discrete => angles.angle(r.gen_range(0..angles.size())),
                            AngleDistribution::Continuous => r.gen_range(0.0..2.0 * PI),
                        };
                        u.apply_unchecked(&Gate::Rz(th), &[*q]);
                    }
                }
            }
            Ok(u)
        }
    }
}

/// U-statistic over all unordered pairs of `samples` independent draws, with a
/// leave-one-draw-out jackknife standard error.
pub fn pair_statistic(us: &[Operator], k: u32) -> (f64, f64) {
    let m = us.len();
    let mut row = vec![0.0f64; m];
    const CHUNK: usize = 32;
    for start in (0..m).step_by(CHUNK) {
        let end = (start + CHUNK).min(m);
        let blocks: Vec<Vec<f64>> = (start..end)
            .into_par_iter()
            .map(|i| (i + 1..m).map(|j| us[i].trace_inner(&us[j]).norm_sqr().powi(k as i32)).collect())
            .collect();
        for (off, xs) in blocks.into_iter().enumerate() {
            let i = start + off;
            for (t, x) in xs.into_iter().enumerate() {
                row[i] += x;
                row[i + 1 + t] += x;
            }
        }
    }
    let total: f64 = row.iter().sum::<f64>() / 2.0;
    let pairs = (m * (m - 1) / 2) as f64;
    let mean = total / pairs;
    let loo_pairs = ((m - 1) * (m - 2) / 2) as f64;
    let loo: Vec<f64> = row.iter().map(|r| (total - r) / loo_pairs).collect();
    let lbar = loo.iter().sum::<f64>() / m as f64;
    let var = (m as f64 - 1.0) / m as f64 * loo.iter().map(|x| (x - lbar) * (x - lbar)).sum::<f64>();
    (mean, var.sqrt())
}

pub fn delta_eps(f: f64, stderr: f64, n: usize, k: u32) -> (f64, f64) {
    let hdim = (1u64 << n) as f64;
    let excess = f - factorial(k);
    if excess <= 0.0 {
        return (0.0, hdim.powi(k as i32) * stderr.sqrt());
    }
    let d = hdim.powi(k as i32) * excess.sqrt();
    (d, hdim.powi(k as i32) * stderr / (2.0 * excess.sqrt()))
}

pub fn frame_potential(cfg: &FramePotentialConfig) -> Result<FramePotentialEstimate> {
    if !(1..=3).contains(&cfg.k) {
        return Err(Error::invalid(format!("k = {} not in 1..=3", cfg.k)));
    }
    if cfg.samples < MIN_FP_SAMPLES {
        return Err(Error::invalid(format!("need at least {MIN_FP_SAMPLES} samples")));
    }
    if cfg.n > MAX_FP_QUBITS || cfg.n > MAX_SV_QUBITS {
        return Err(Error::capacity(format!("frame potentials support n <= {MAX_FP_QUBITS}")));
    }
    let angles = AngleSet::new(cfg.c)?;
    let template = ensemble_template(cfg)?;
    let steps = match &template {
        Some(t) => compile(t)?,
        None => vec![],
    };
    let blind_gates = template.as_ref().map(|t| t.blind_count()).unwrap_or(0);
    let us: Vec<Operator> =
        (0..cfg.samples).into_par_iter().map(|i| sample_unitary(cfg, &steps, &angles, i)).collect::<Result<_>>()?;
    let (mean, stderr) = pair_statistic(&us, cfg.k);
    let (d, ds) = delta_eps(mean, stderr, cfg.n, cfg.k);
    Ok(FramePotentialEstimate {
        family: cfg.ensemble.name().to_string(),
        k: cfg.k,
        n_qubits: cfg.n,
        depth: cfg.depth,
        blind_gates,
        samples: cfg.samples,
        mean,
        stderr,
        delta_eps: d,
        delta_eps_stderr: ds,
    })
}

// ---- decay fits and equal-expressibility matching -----------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    /// Depth or blind-gate count.
    pub x: f64,
    pub delta: f64,
    pub stderr: f64,
}

impl DecayPoint {
    pub fn from_estimate(e: &FramePotentialEstimate) -> Self {
        DecayPoint { x: e.blind_gates as f64, delta: e.delta_eps, stderr: e.delta_eps_stderr }
    }

    /// Above the noise floor when Δε exceeds twice its standard error.
    pub fn resolved(&self) -> bool {
        self.delta > 0.0 && self.delta > 2.0 * self.stderr
    }

    fn log_sigma(&self) -> f64 {
        self.stderr / self.delta
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub a: f64,
    pub c: f64,
    pub a_stderr: f64,
    pub c_stderr: f64,
    /// sqrt(chi^2 / dof) in log space.
    pub residual: f64,
    pub points_used: usize,
}

struct Wls {
    b0: f64,
    b1: f64,
    var_b0: f64,
    var_b1: f64,
    chi2: f64,
}

fn wls(xs: &[f64], ys: &[f64], sig: &[f64]) -> Wls {
    let floor = sig.iter().copied().filter(|s| *s > 0.0).fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = sig
        .iter()
        .map(|s| {
            let s = if *s > 0.0 {
                *s
            } else if floor.is_finite() {
                floor
            } else {
                1.0
            };
            1.0 / (s * s)
        })
        .collect();
    let sw: f64 = w.iter().sum();
    let sx: f64 = w.iter().zip(xs).map(|(w, x)| w * x).sum();
    let sy: f64 = w.iter().zip(ys).map(|(w, y)| w * y).sum();
    let sxx: f64 = w.iter().zip(xs).map(|(w, x)| w * x * x).sum();
    let sxy: f64 = w.iter().zip(xs.iter().zip(ys)).map(|(w, (x, y))| w * x * y).sum();
    let det = sw * sxx - sx * sx;
    let b1 = (sw * sxy - sx * sy) / det;
    let b0 = (sy - b1 * sx) / sw;
    let chi2: f64 = w.iter().zip(xs.iter().zip(ys)).map(|(w, (x, y))| w * (y - b0 - b1 * x).powi(2)).sum();
    let dof = xs.len().saturating_sub(2).max(1) as f64;
    // inflate by the Birge ratio when the scatter exceeds the quoted errors
    let scale = (chi2 / dof).max(1.0);
    Wls { b0, b1, var_b0: sxx / det * scale, var_b1: sw / det * scale, chi2 }
}

/// Fit `delta = A exp(-x / C)` by weighted least squares on ln(delta).
pub fn fit_decay(points: &[DecayPoint]) -> Result<DecayFit> {
    let good: Vec<&DecayPoint> = points.iter().filter(|p| p.resolved()).collect();
    if good.is_empty() {
        return Err(Error::invalid("every point sits at the frame-potential noise floor"));
    }
    if good.len() < 4 {
        return Err(Error::invalid(format!("need 4 resolved points, have {}", good.len())));
    }
    let xs: Vec<f64> = good.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = good.iter().map(|p| p.delta.ln()).collect();
    let ss: Vec<f64> = good.iter().map(|p| p.log_sigma()).collect();
    let f = wls(&xs, &ys, &ss);
    if f.b1 >= 0.0 {
        return Err(Error::invalid("fitted decay is not decreasing"));
    }
    let a = f.b0.exp();
    let c = -1.0 / f.b1;
    let dof = (good.len() - 2) as f64;
    Ok(DecayFit {
        a,
        c,
        a_stderr: a * f.var_b0.sqrt(),
        c_stderr: c * c * f.var_b1.sqrt(),
        residual: (f.chi2 / dof).sqrt(),
        points_used: good.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub gates_a: f64,
    pub gates_b: f64,
    pub gates_b_stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchedPair>,
    /// d(gates_b) / d(gates_a) at equal Δε.
    pub slope: f64,
    pub slope_stderr: f64,
    pub intercept: f64,
    pub slope_ci95: (f64, f64),
}

/// For each resolved point of family A, the B gate count with the same Δε (log-linear
/// interpolation between bracketing B points), then a weighted line through the pairs.
pub fn match_expressibility(a: &[DecayPoint], b: &[DecayPoint]) -> Result<MatchResult> {
    let mut bs: Vec<&DecayPoint> = b.iter().filter(|p| p.resolved()).collect();
    bs.sort_by(|p, q| p.x.partial_cmp(&q.x).unwrap());
    let mut pairs = vec![];
    for pa in a.iter().filter(|p| p.resolved()) {
        let ya = pa.delta.ln();
        for w in bs.windows(2) {
            let (y1, y2) = (w[0].delta.ln(), w[1].delta.ln());
            if (y1 - ya) * (y2 - ya) <= 0.0 && y1 != y2 {
                let t = (ya - y1) / (y2 - y1);
                let gx = w[0].x + t * (w[1].x - w[0].x);
                let dxdy = ((w[1].x - w[0].x) / (y2 - y1)).abs();
                let var = pa.log_sigma().powi(2)
                    + ((1.0 - t) * w[0].log_sigma()).powi(2)
                    + (t * w[1].log_sigma()).powi(2);
                pairs.push(MatchedPair { gates_a: pa.x, gates_b: gx, gates_b_stderr: dxdy * var.sqrt() });
                break;
            }
        }
    }
    if pairs.len() < 2 {
        return Err(Error::invalid("families do not overlap in Δε"));
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.gates_a).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.gates_b).collect();
    let ss: Vec<f64> = pairs.iter().map(|p| p.gates_b_stderr).collect();
    let f = wls(&xs, &ys, &ss);
    let se = f.var_b1.sqrt();
    Ok(MatchResult {
        pairs,
        slope: f.b1,
        slope_stderr: se,
        intercept: f.b0,
        slope_ci95: (f.b1 - 1.96 * se, f.b1 + 1.96 * se),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairingConfig {
    pub n: usize,
    /// Bricklayer depths (family A).
    pub depths_a: Vec<usize>,
    /// Pauli-rotation counts (family B).
    pub depths_b: Vec<usize>,
    pub k: u32,
    pub samples: usize,
    pub c: u32,
    pub seed: u64,
    pub structure_seed: u64,
    pub angles: AngleDistribution,
}

impl Default for PairingConfig {
    fn default() -> Self {
        PairingConfig {
            n: 4,
            depths_a: (1..=8).collect(),
            depths_b: (2..=40).step_by(2).collect(),
            k: 2,
            samples: 2000,
            c: 3,
            seed: 1,
            structure_seed: 7,
            angles: AngleDistribution::Discrete,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairingReport {
    pub config: PairingConfig,
    pub bricklayer: Vec<FramePotentialEstimate>,
    pub pauli_rotations: Vec<FramePotentialEstimate>,
    pub fit_a: Option<DecayFit>,
    pub fit_b: Option<DecayFit>,
    pub matched: MatchResult,
}

pub const EXPRESS_CSV_HEADER: &str = "family,n_qubits,depth,blind_gates,samples,k,fp_mean,fp_stderr,delta_eps,delta_eps_stderr";

impl PairingReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(EXPRESS_CSV_HEADER);
        s.push('\n');
        for e in self.bricklayer.iter().chain(&self.pauli_rotations) {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                e.family, e.n_qubits, e.depth, e.blind_gates, e.samples, e.k, e.mean, e.stderr, e.delta_eps, e.delta_eps_stderr
            ));
        }
        s
    }
}

/// Frame potentials of both families over their depth grids, decay fits, and the
/// equal-expressibility line `gates_B(gates_A)`.
pub fn expressibility_pairing(cfg: &PairingConfig) -> Result<PairingReport> {
    let run = |ensemble: Ensemble, depths: &[usize], tag: u64| -> Result<Vec<FramePotentialEstimate>> {
        depths
            .iter()
            .map(|&depth| {
                frame_potential(&FramePotentialConfig {
                    ensemble,
                    n: cfg.n,
                    depth,
                    k: cfg.k,
                    samples: cfg.samples,
                    seed: rng::derive(cfg.seed, &[tag, depth as u64]),
                    c: cfg.c,
                    angles: cfg.angles,
                })
            })
            .collect()
    };
    let a = run(Ensemble::Bricklayer, &cfg.depths_a, 0xA)?;
    let b = run(Ensemble::PauliRotations { structure_seed: cfg.structure_seed }, &cfg.depths_b, 0xB)?;
    let pa: Vec<DecayPoint> = a.iter().map(DecayPoint::from_estimate).collect();
    let pb: Vec<DecayPoint> = b.iter().map(DecayPoint::from_estimate).collect();
    let matched = match_expressibility(&pa, &pb)?;
    Ok(PairingReport {
        config: cfg.clone(),
        fit_a: fit_decay(&pa).ok(),
        fit_b: fit_decay(&pb).ok(),
        bricklayer: a,
        pauli_rotations: b,
        matched,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuitgen::{
        build_brickwork_cell, build_pauli_rotation, build_trotter, brickwork_cell_with, CellAngles, CellMode, GateEntry,
        PauliString,
    };
    use rand::Rng;

    fn uc_circuit(p: u64, c: u32) -> CircuitIR {
        let mut circ = CircuitIR::new("uc", 2, c);
        circ.gates = vec![
            GateEntry::two(CliffordOp::Cz, 0, 1, None),
            GateEntry::clifford(CliffordOp::H, 0),
            GateEntry::btheta(0, p),
            GateEntry::clifford(CliffordOp::H, 0),
            GateEntry::two(CliffordOp::Cz, 0, 1, None),
        ];
        circ
    }

    #[test]
    fn identical_angles_zero_distance() {
        let c = build_bricklayer(2, 1, 1.0, 3, 4).unwrap();
        let r = verify_blindness(&c, &c, Averaging::Unaveraged, 1).unwrap();
        assert_eq!(r.distance, 0.0);
    }

    #[test]
    fn two_qubit_gate_blind_and_control() {
        // pi/3 is not on the c = 3 grid; use c = 6 where 2 pi / 64 * 64/6 is not exact either,
        // so compare the grid points nearest phi and phi + pi/3
        let a = AngleSet::new(6).unwrap();
        let (p1, _) = a.nearest(0.7);
        let (p2, _) = a.nearest(0.7 + PI / 3.0);
        let r = verify_blindness(&uc_circuit(p1, 6), &uc_circuit(p2, 6), Averaging::Enumerate, 2).unwrap();
        assert!(r.distance < 1e-10, "{}", r.distance);
        let q = a.index_of(PI).unwrap();
        let ctrl = verify_blindness(&uc_circuit(0, 6), &uc_circuit(q, 6), Averaging::Unaveraged, 2).unwrap();
        assert!(ctrl.distance > 0.1, "{}", ctrl.distance);
    }

    #[test]
    fn enumerate_and_sequential_agree() {
        let c1 = build_brickwork_cell(CellMode::Cnot, 3).unwrap();
        let rho = &probe_states(2, 9).unwrap()[2];
        let x = server_state(&c1, rho, Averaging::Enumerate).unwrap();
        let y = server_state(&c1, rho, Averaging::Sequential).unwrap();
        assert!(trace_distance(&x, &y).unwrap() < 1e-12);
    }

    #[test]
    fn cell_blind_for_random_angles() {
        let mut r = rng::stream(5, &[]);
        for _ in 0..5 {
            let x: [u64; 7] = std::array::from_fn(|_| r.gen_range(0..8));
            let y: [u64; 7] = std::array::from_fn(|_| r.gen_range(0..8));
            let a = brickwork_cell_with(CellAngles(x), 3).unwrap();
            let b = brickwork_cell_with(CellAngles(y), 3).unwrap();
            let rep = verify_blindness(&a, &b, Averaging::Enumerate, 3).unwrap();
            assert_eq!(rep.branches, 128);
            assert!(rep.is_blind());
        }
    }

    #[test]
    fn every_family_is_blind_for_random_pairs() {
        let mut r = rng::stream(6, &[]);
        let brick = build_bricklayer(3, 2, 1.0, 3, 8).unwrap();
        let pr = build_pauli_rotation(&"XYZ".parse::<PauliString>().unwrap(), 3, 3).unwrap();
        let terms = vec!["ZZI".parse::<PauliString>().unwrap(), "IXX".parse::<PauliString>().unwrap()];
        let tr = build_trotter(&terms, 0.4, 2, 3).unwrap().circuit;
        for base in [brick, pr, tr] {
            for _ in 0..20 {
                let nb = base.blind_count();
                let pa: Vec<u64> = (0..nb).map(|_| r.gen_range(0..8)).collect();
                let pb: Vec<u64> = (0..nb).map(|_| r.gen_range(0..8)).collect();
                let rep = verify_blindness(
                    &base.with_blind_angles(&pa).unwrap(),
                    &base.with_blind_angles(&pb).unwrap(),
                    Averaging::Sequential,
                    7,
                )
                .unwrap();
                assert!(rep.is_blind(), "{} {}", base.family, rep.distance);
            }
        }
    }

    #[test]
    fn structure_mismatch_rejected() {
        let a = build_bricklayer(3, 2, 0.5, 3, 1).unwrap();
        let b = build_bricklayer(3, 2, 0.5, 3, 2).unwrap();
        assert!(verify_blindness(&a, &b, Averaging::Sequential, 0).is_err());
    }

    #[test]
    fn adaptive_rotation_blind_all_frames() {
        let rep = verify_adaptive_rotation((0.3, 1.1, -2.0), (2.9, -0.4, 0.7), Averaging::Enumerate, 1).unwrap();
        assert_eq!(rep.branches, 8);
        assert!(rep.is_blind(), "{}", rep.distance);
        let ctrl = verify_adaptive_rotation((0.0, 0.0, 0.0), (PI, PI / 2.0, 0.0), Averaging::Unaveraged, 1).unwrap();
        assert!(ctrl.distance > 0.1);
    }

    #[test]
    fn suite_passes() {
        for seed in 0..3 {
            for chk in blindness_suite(seed).unwrap() {
                assert!(chk.passes(0.05), "{chk:?}");
            }
        }
    }

    #[test]
    fn protocol_branches_blind() {
        for c in 1..=4 {
            let size = 1u64 << c;
            for p1 in 0..size {
                for p2 in 0..size {
                    let rep = verify_protocol_blindness(c, p1, p2, Averaging::Enumerate, 4).unwrap();
                    assert_eq!(rep.branches, c as usize + 1);
                    assert!(rep.is_blind());
                }
            }
        }
        let ctrl = verify_protocol_blindness(3, 0, 4, Averaging::Unaveraged, 4).unwrap();
        assert!(ctrl.distance > 0.05, "{}", ctrl.distance);
    }

    #[test]
    fn protocol_branch_weights_sum_to_one() {
        let a = AngleSet::new(3).unwrap();
        let rho = &probe_states(1, 3).unwrap()[2];
        let br = protocol_branch_states(&a, 5, rho, Averaging::Enumerate).unwrap();
        let tot: f64 = br.iter().map(|(_, r)| r.trace().re).sum();
        assert!((tot - 1.0).abs() < 1e-12);
        // m = 0 on the first attempt with probability 1/2
        assert!((br[0].1.trace().re - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tradeoff_zero_hiding_and_noiseless() {
        let cfg = TradeoffConfig {
            n: 3,
            depth: 2,
            r_h: vec![0.0, 1.0],
            model: ErrorModel { eps_comm: 0.0, eps_loc: 0.0, ..ErrorModel::default() },
            shots: 4,
            seed: 1,
            mode: NoiseMode::Exact,
        };
        let rep = tradeoff_sweep(&cfg).unwrap();
        for p in &rep.points {
            assert!((p.fidelity - 1.0).abs() < 1e-10);
        }
        assert_eq!(rep.points[0].efficiency, 1.0);
        assert_eq!(rep.points[0].log2_unitaries, 0.0);
        assert!(rep.points[1].efficiency < 1.0);
        assert!(rep.to_csv().starts_with(TRADEOFF_CSV_HEADER));
    }

    #[test]
    fn trajectory_matches_exact() {
        let model = ErrorModel { eps_comm: 0.05, eps_loc: 0.02, ..ErrorModel::default() };
        let mk = |mode, shots| TradeoffConfig { n: 3, depth: 3, r_h: vec![0.5], model: model.clone(), shots, seed: 2, mode };
        let ex = tradeoff_sweep(&mk(NoiseMode::Exact, 40)).unwrap().points[0].clone();
        let tr = tradeoff_sweep(&mk(NoiseMode::Trajectory, 4000)).unwrap().points[0].clone();
        let tol = 4.0 * (ex.fidelity_stderr.powi(2) + tr.fidelity_stderr.powi(2)).sqrt() + 0.01;
        assert!((ex.fidelity - tr.fidelity).abs() < tol, "{} vs {}", ex.fidelity, tr.fidelity);
        assert!(ex.fidelity >= ex.count_bound - 1e-12);
    }

    #[test]
    fn tradeoff_rejects_bad_input() {
        let mut cfg = TradeoffConfig {
            n: 3,
            depth: 1,
            r_h: vec![0.5],
            model: ErrorModel::default(),
            shots: 1,
            seed: 0,
            mode: NoiseMode::Exact,
        };
        assert!(tradeoff_sweep(&cfg).is_err());
        cfg.shots = 10;
        cfg.n = 7;
        assert!(matches!(tradeoff_sweep(&cfg), Err(Error::Capacity(_))));
    }

    #[test]
    fn fixed_ensemble_frame_potential() {
        let cfg = FramePotentialConfig {
            ensemble: Ensemble::Fixed,
            n: 2,
            depth: 0,
            k: 2,
            samples: 1000,
            seed: 0,
            c: 3,
            angles: AngleDistribution::Discrete,
        };
        let e = frame_potential(&cfg).unwrap();
        assert!((e.mean - 256.0).abs() < 1e-9);
        assert!(e.stderr < 1e-9);
        let mut bad = cfg.clone();
        bad.samples = 10;
        assert!(frame_potential(&bad).is_err());
    }

    #[test]
    fn haar_frame_potential_is_k_factorial() {
        for k in [1, 2] {
            let cfg = FramePotentialConfig {
                ensemble: Ensemble::Haar,
                n: 3,
                depth: 0,
                k,
                samples: 1000,
                seed: 11,
                c: 3,
                angles: AngleDistribution::Discrete,
            };
            let e = frame_potential(&cfg).unwrap();
            let target = factorial(k);
            assert!((e.mean - target).abs() < 3.0 * e.stderr + 1e-9, "k={k}: {} ± {}", e.mean, e.stderr);
        }
    }

    #[test]
    fn haar_sampler_is_unitary() {
        let mut r = rng::stream(1, &[]);
        let u = haar_unitary(3, &mut r).unwrap();
        let id = Operator::identity(3).unwrap();
        assert!(u.adjoint().mul(&u).unwrap().phase_distance(&id) < 1e-10);
    }

    #[test]
    fn global_phase_leaves_estimate_unchanged() {
        let mut r = rng::stream(2, &[]);
        let us: Vec<Operator> = (0..40).map(|_| haar_unitary(2, &mut r).unwrap()).collect();
        let vs: Vec<Operator> = us
            .iter()
            .map(|u| {
                let mut v = u.clone();
                v.scale_phase(r.gen_range(0.0..2.0 * PI));
                v
            })
            .collect();
        let (a, sa) = pair_statistic(&us, 2);
        let (b, sb) = pair_statistic(&vs, 2);
        assert!((a - b).abs() < 1e-10 * a.max(1.0));
        assert!((sa - sb).abs() < 1e-9);
    }

    #[test]
    fn jackknife_matches_brute_force() {
        let mut r = rng::stream(3, &[]);
        let us: Vec<Operator> = (0..9).map(|_| haar_unitary(1, &mut r).unwrap()).collect();
        let (mean, se) = pair_statistic(&us, 1);
        let x = |i: usize, j: usize| us[i].trace_inner(&us[j]).norm_sqr();
        let mut all = vec![];
        for i in 0..9 {
            for j in i + 1..9 {
                all.push(x(i, j));
            }
        }
        assert!((mean - all.iter().sum::<f64>() / all.len() as f64).abs() < 1e-12);
        let loo: Vec<f64> = (0..9)
            .map(|d| {
                let mut v = vec![];
                for i in 0..9 {
                    for j in i + 1..9 {
                        if i != d && j != d {
                            v.push(x(i, j));
                        }
                    }
                }
                v.iter().sum::<f64>() / v.len() as f64
            })
            .collect();
        let lb = loo.iter().sum::<f64>() / 9.0;
        let var = 8.0 / 9.0 * loo.iter().map(|v| (v - lb).powi(2)).sum::<f64>();
        assert!((se - var.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn fit_recovers_synthetic_decay() {
        let pts: Vec<DecayPoint> = (0..8)
            .map(|i| {
                let x = i as f64 * 2.0;
                DecayPoint { x, delta: 3.0 * (-x / 5.0).exp(), stderr: 0.0 }
            })
            .collect();
        let f = fit_decay(&pts).unwrap();
        assert!((f.a - 3.0).abs() < 0.03);
        assert!((f.c - 5.0).abs() < 0.05);
        assert!(fit_decay(&pts[..3]).is_err());
        let flat: Vec<DecayPoint> = pts.iter().map(|p| DecayPoint { delta: 0.0, ..*p }).collect();
        assert!(fit_decay(&flat).is_err());
    }

    #[test]
    fn matching_synthetic_families() {
        let fam = |a: f64, c: f64, xs: &[f64]| -> Vec<DecayPoint> {
            xs.iter().map(|&x| DecayPoint { x, delta: a * (-x / c).exp(), stderr: 0.01 * a * (-x / c).exp() }).collect()
        };
        let xs: Vec<f64> = (0..12).map(|i| i as f64 * 3.0).collect();
        let a = fam(100.0, 8.0, &xs);
        let same = match_expressibility(&a, &a).unwrap();
        assert!((same.slope - 1.0).abs() < 1e-9);
        let xs_b: Vec<f64> = (0..24).map(|i| i as f64 * 1.0).collect();
        let b = fam(100.0, 4.0, &xs_b);
        let m = match_expressibility(&a, &b).unwrap();
        // C_A = 2 C_B: B needs half as many gates
        assert!((m.slope - 0.5).abs() < 0.02, "{}", m.slope);
        let far = fam(1e-6, 4.0, &xs_b);
        assert!(match_expressibility(&a, &far).is_err());
    }
}
