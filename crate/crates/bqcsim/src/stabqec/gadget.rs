//! Blind gate teleportation of a T gate through a server-held magic state.
//!
//! The magic block (`|m> = T|+>`) controls a blind transversal CX onto the data block, the
//! data block is read out in Z, and outcome `m` is corrected by `S^m X^m` on the magic block,
//! with the S part delegated. Two delegated transversal operations in total.

use super::builder::{LogicalOp, LogicalProgram, SeMode};
use super::logical::{decoder_for, run_programs, FailureRule, GateMix, LogicalRunConfig};
use super::surface::Basis;
use crate::analysis::{verify_blindness, Averaging, BlindnessReport};
use crate::blindgate::ErrorModel;
use crate::circuitgen::{CircuitIR, CliffordOp, GateEntry};
use crate::error::{Error, Result};
use crate::rng;
use crate::statevec::{c, Gate, Operator, StateVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;

/// Angle resolution used for the unencoded gadget (angles in units of pi/2).
pub const GADGET_C: u32 = 2;

/// Unencoded gadget on qubits 0 (magic) and 1 (data). `cx` selects the blind CX branch,
/// `s_corr` the delegated S correction.
pub fn gadget_ir(cx: bool, s_corr: bool) -> CircuitIR {
    let (mid, corr) = if cx { (1, 3) } else { (0, 0) };
    let mut ir = CircuitIR::new("t_teleport", 2, GADGET_C);
    ir.gates = vec![
        GateEntry::two(CliffordOp::Cz, 0, 1, None),
        GateEntry::clifford(CliffordOp::H, 1),
        GateEntry::btheta(1, mid),
        GateEntry::clifford(CliffordOp::H, 1),
        GateEntry::two(CliffordOp::Cz, 0, 1, None),
        GateEntry::btheta(0, corr),
        GateEntry::clifford(CliffordOp::H, 1),
        GateEntry::btheta(1, corr),
        GateEntry::clifford(CliffordOp::H, 1),
        // Rz(3 pi / 2) ~ S
        GateEntry::btheta(0, if s_corr { 3 } else { 0 }),
    ];
    ir
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchCheck {
    /// Largest distance from `P T |psi>` over outcomes, frame bits and inputs, minimized
    /// over the tracked Pauli `P`.
    pub max_distance: f64,
    pub branches: usize,
}

fn t_gate() -> Gate {
    let e = c(FRAC_1_SQRT_2, FRAC_1_SQRT_2);
    Gate::U1([[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), e]])
}

/// Pauli `(x0, z0, x1, z1)` with `U = P * CX(0 -> 1)` for the CX part under frame bits `s`.
fn cx_frame(cx_part: &CircuitIR, s: &[bool]) -> Result<(bool, bool, bool, bool)> {
    let u = cx_part.unitary(s)?;
    for code in 0..16u8 {
        let bit = |k: u8| code >> k & 1 == 1;
        let mut cand = Operator::identity(2)?;
        cand.apply(&Gate::CX, &[0, 1])?;
        for (q, x, z) in [(0, bit(0), bit(1)), (1, bit(2), bit(3))] {
            if x {
                cand.apply(&Gate::X, &[q])?;
            }
            if z {
                cand.apply(&Gate::Z, &[q])?;
            }
        }
        if u.phase_distance(&cand) < 1e-9 {
            return Ok((bit(0), bit(1), bit(2), bit(3)));
        }
    }
    Err(Error::invalid("CX branch is not a Pauli-framed CX"))
}

/// Run the unencoded gadget on random inputs over both outcomes and all frame bits. The
/// client reads the outcome through the data qubit's X frame before choosing the correction.
pub fn gadget_statevec_check(seed: u64) -> Result<BranchCheck> {
    let mut r = rng::stream(seed, &[0x7467]);
    let mut worst: f64 = 0.0;
    let mut branches = 0;
    let mut cx_part = gadget_ir(true, false);
    cx_part.gates.pop();
    let nb = cx_part.blind_count();
    for _ in 0..3 {
        let psi = StateVector::random(1, &mut r)?;
        let mut want = psi.clone();
        want.apply(&t_gate(), &[0])?;
        for code in 0..1usize << nb {
            let s: Vec<bool> = (0..nb).map(|k| code >> k & 1 == 1).collect();
            let (_, _, x1, _) = cx_frame(&cx_part, &s)?;
            for m_raw in [false, true] {
                // |m> on qubit 0, psi on qubit 1
                let a = psi.amplitudes();
                let e = c(FRAC_1_SQRT_2, FRAC_1_SQRT_2);
                let h = FRAC_1_SQRT_2;
                let mut st = StateVector::from_amplitudes(vec![a[0] * h, a[0] * h * e, a[1] * h, a[1] * h * e])?;
                cx_part.apply_to_state(&mut st, &s)?;
                if st.project(1, m_raw).is_err() {
                    continue;
                }
                let m = m_raw ^ x1;
                if m {
                    st.apply(&Gate::X, &[0])?;
                }
                for s_tail in [false, true] {
                    let mut out = st.clone();
                    let mut tail = CircuitIR::new("t_teleport_tail", 2, GADGET_C);
                    tail.gates.push(GateEntry::btheta(0, if m { 3 } else { 0 }));
                    tail.apply_to_state(&mut out, &[s_tail])?;
                    let amps = out.amplitudes();
                    let idx = if m_raw { 2 } else { 0 };
                    let q = StateVector::from_amplitudes(vec![amps[idx], amps[idx + 1]])?;
                    let mut best = f64::INFINITY;
                    for (x, z) in [(false, false), (true, false), (false, true), (true, true)] {
                        let mut p = want.clone();
                        p.apply_pauli(0, x, z)?;
                        best = best.min(q.phase_distance(&p));
                    }
                    worst = worst.max(best);
                    branches += 1;
                }
            }
        }
    }
    Ok(BranchCheck { max_distance: worst, branches })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GadgetConfig {
    pub d: usize,
    pub model: ErrorModel,
    pub se_mode: SeMode,
    pub n_rounds: usize,
    pub shots: u64,
    pub seed: u64,
}

impl Default for GadgetConfig {
    fn default() -> Self {
        GadgetConfig {
            d: 3,
            model: ErrorModel { eps_comm: 0.005, eps_loc: 0.0, ..ErrorModel::default() },
            se_mode: SeMode::Local,
            n_rounds: 1,
            shots: 10_000,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GadgetReport {
    pub d: usize,
    pub shots: u64,
    pub failures: u64,
    pub p_l: f64,
    pub stderr: f64,
    /// Same two blind transversal gates with both blocks kept to the end.
    pub reference_p_l: f64,
    pub reference_stderr: f64,
    pub blindness: BlindnessReport,
    pub branch_check: BranchCheck,
}

fn program(retire_data: bool) -> LogicalProgram {
    let mut p = LogicalProgram::new(
        2,
        vec![
            vec![LogicalOp::Cx { control: 0, target: 1, blind: true }],
            vec![LogicalOp::OneQ { block: 0, blind: true }],
        ],
        1,
    );
    if retire_data {
        p.retire[1] = Some(0);
    }
    p
}

pub fn magic_teleport_gadget(cfg: &GadgetConfig) -> Result<GadgetReport> {
    if cfg.shots == 0 {
        return Err(Error::invalid("shots must be positive"));
    }
    let run_cfg = LogicalRunConfig {
        n_qubits: 2,
        n_layers: 2,
        n_rounds: cfg.n_rounds,
        d: cfg.d,
        r_h: 1.0,
        model: cfg.model.clone(),
        se_mode: cfg.se_mode,
        seed: cfg.seed,
        gates: GateMix::Full,
        decoder: Default::default(),
    };
    run_cfg.validate()?;
    let dec = decoder_for(&run_cfg)?;
    let rounds = cfg.n_rounds;
    let with_rounds = move |mut p: LogicalProgram| {
        p.rounds_per_layer = rounds;
        p
    };
    // the teleported output is wrong when the magic block's error and the misread outcome differ
    let g = run_programs(&dec, Basis::Z, cfg.shots, cfg.seed, 0x4741, &FailureRule::Parity(vec![0, 1]), |_| {
        with_rounds(program(true))
    })?;
    let r = run_programs(&dec, Basis::Z, cfg.shots, cfg.seed, 0x5245, &FailureRule::Parity(vec![0, 1]), |_| {
        with_rounds(program(false))
    })?;
    let (p_l, stderr) = g.rate();
    let (reference_p_l, reference_stderr) = r.rate();
    let blindness = verify_blindness(&gadget_ir(true, true), &gadget_ir(false, false), Averaging::Enumerate, cfg.seed)?;
    Ok(GadgetReport {
        d: cfg.d,
        shots: g.shots,
        failures: g.failures,
        p_l,
        stderr,
        reference_p_l,
        reference_stderr,
        blindness,
        branch_check: gadget_statevec_check(cfg.seed)?,
    })
}
