//! Physical circuits for programs of transversal logical gates on surface-code blocks.

use super::circuit::{Circuit, Detector, Op};
use super::surface::{Basis, SurfaceCode};
use super::tableau::Clifford;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// How stabilizer extraction entangling gates are run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeMode {
    /// The server runs extraction CX gates itself.
    Local,
    /// Every extraction CX goes through a delegated rotation.
    Blind,
}

impl std::str::FromStr for SeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local" => Ok(SeMode::Local),
            "blind" => Ok(SeMode::Blind),
            _ => Err(Error::invalid(format!("unknown SE mode {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum LogicalOp {
    /// Transversal single-qubit gate; blind means one delegated rotation per data qubit.
    OneQ { block: usize, blind: bool },
    /// Transversal CX between blocks.
    Cx { control: usize, target: usize, blind: bool },
    /// Depolarizing noise of strength `p` on every data qubit (decoder templates only).
    DataNoise { block: usize, p: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogicalProgram {
    pub n_blocks: usize,
    pub layers: Vec<Vec<LogicalOp>>,
    /// Extraction rounds after each layer.
    pub rounds_per_layer: usize,
    /// Block `b` is read out after the extraction rounds of layer `retire[b]`; `None` = at the end.
    pub retire: Vec<Option<usize>>,
}

impl LogicalProgram {
    pub fn new(n_blocks: usize, layers: Vec<Vec<LogicalOp>>, rounds_per_layer: usize) -> Self {
        LogicalProgram { n_blocks, layers, rounds_per_layer, retire: vec![None; n_blocks] }
    }

    /// Index of the extraction round that follows layer `l`.
    pub fn round_after_layer(&self, l: usize) -> usize {
        1 + l * self.rounds_per_layer
    }

    /// Number of extraction rounds block `b` goes through (round 0 included).
    pub fn block_rounds(&self, b: usize) -> usize {
        let layers = match self.retire[b] {
            Some(l) => l + 1,
            None => self.layers.len(),
        };
        1 + layers * self.rounds_per_layer
    }

    fn active(&self, b: usize, layer: usize) -> bool {
        self.retire[b].map_or(true, |r| layer <= r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_blocks == 0 || self.rounds_per_layer == 0 {
            return Err(Error::invalid("program needs at least one block and one round per layer"));
        }
        if self.retire.len() != self.n_blocks {
            return Err(Error::invalid("retire list length differs from block count"));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let mut used = vec![false; self.n_blocks];
            for op in layer {
                let blocks: Vec<usize> = match *op {
                    LogicalOp::OneQ { block, .. } | LogicalOp::DataNoise { block, .. } => vec![block],
                    LogicalOp::Cx { control, target, .. } => {
                        if control == target {
                            return Err(Error::invalid("CX control equals target"));
                        }
                        vec![control, target]
                    }
                };
                for b in blocks {
                    if b >= self.n_blocks {
                        return Err(Error::invalid(format!("block {b} out of range")));
                    }
                    if !self.active(b, l) {
                        return Err(Error::invalid(format!("block {b} used after readout")));
                    }
                    if matches!(op, LogicalOp::Cx { .. }) {
                        if used[b] {
                            return Err(Error::invalid(format!("block {b} in two CX gates of layer {l}")));
                        }
                        used[b] = true;
                    }
                }
            }
        }
        Ok(())
    }

    /// Count of logical gates (1Q + CX) and how many of them are blind.
    pub fn gate_counts(&self) -> (usize, usize) {
        let mut total = 0;
        let mut blind = 0;
        for op in self.layers.iter().flatten() {
            match *op {
                LogicalOp::OneQ { blind: b, .. } | LogicalOp::Cx { blind: b, .. } => {
                    total += 1;
                    blind += b as usize;
                }
                LogicalOp::DataNoise { .. } => {}
            }
        }
        (total, blind)
    }
}

/// Noise strengths seen by the builder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodeNoise {
    pub eps_comm: f64,
    pub eps_loc: f64,
}

/// CX from `c` to `t` through one delegated rotation, followed by local corrections.
/// `hidden` adds the two correction rotations as delegated (noisy) gates as well.
pub fn blind_cx_ops(c: usize, t: usize, noise: CodeNoise, hidden: bool) -> Vec<Op> {
    use Clifford::*;
    let mut ops = vec![
        Op::Gate(Cz(c, t)),
        Op::Dep2(c, t, noise.eps_loc),
        Op::Gate(H(t)),
        Op::Gate(Sdg(t)),
        Op::Dep1(t, noise.eps_comm),
        Op::Gate(H(t)),
        Op::Gate(Cz(c, t)),
        Op::Dep2(c, t, noise.eps_loc),
        Op::Gate(S(c)),
    ];
    if hidden {
        ops.push(Op::Dep1(c, noise.eps_comm));
    }
    ops.extend([Op::Gate(H(t)), Op::Gate(S(t))]);
    if hidden {
        ops.push(Op::Dep1(t, noise.eps_comm));
    }
    ops.push(Op::Gate(H(t)));
    ops
}

/// Where a block's qubits and detectors live.
#[derive(Clone, Debug)]
pub struct BlockLayout {
    pub data_offset: usize,
    pub anc_offset: usize,
    /// Detector indices of this block: `first_detector + round * n_stabs + stab`.
    pub first_detector: usize,
    pub n_stabs: usize,
    /// Extraction rounds, round 0 included; the final readout has index `rounds`.
    pub rounds: usize,
    /// Rounds whose detectors include a partner term (the block was a CX target just before).
    pub partner_rounds: Vec<usize>,
}

impl BlockLayout {
    pub fn n_nodes(&self) -> usize {
        (self.rounds + 1) * self.n_stabs
    }
}

/// Logical CX positions for frame propagation: applied just before extraction round `round`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CxEvent {
    pub round: usize,
    pub control: usize,
    pub target: usize,
}

#[derive(Clone, Debug)]
pub struct BuiltCircuit {
    pub circuit: Circuit,
    pub code: SurfaceCode,
    pub basis: Basis,
    pub blocks: Vec<BlockLayout>,
    pub cx_events: Vec<CxEvent>,
}

pub fn build_circuit(
    code: &SurfaceCode,
    prog: &LogicalProgram,
    noise: CodeNoise,
    se: SeMode,
    basis: Basis,
) -> Result<BuiltCircuit> {
    prog.validate()?;
    let has_cx = prog.layers.iter().flatten().any(|o| matches!(o, LogicalOp::Cx { .. }));
    if has_cx && basis == Basis::X {
        return Err(Error::invalid("X-basis programs support memory and 1Q layers only"));
    }
    let nd = code.n_data();
    let ns = code.n_stabilizers();
    let per_block = nd + ns;
    let dec = code.of_kind(basis);
    let x_anc: Vec<usize> = code.of_kind(Basis::X);

    let mut circ = Circuit { n_qubits: prog.n_blocks * per_block, ..Default::default() };
    let mut blocks: Vec<BlockLayout> = (0..prog.n_blocks)
        .map(|b| BlockLayout {
            data_offset: b * per_block,
            anc_offset: b * per_block + nd,
            first_detector: 0,
            n_stabs: dec.len(),
            rounds: prog.block_rounds(b),
            partner_rounds: Vec::new(),
        })
        .collect();
    // detectors are allocated block-contiguously
    let mut acc = 0;
    for bl in &mut blocks {
        bl.first_detector = acc;
        acc += bl.n_nodes();
    }
    let mut dets: Vec<Option<Detector>> = vec![None; acc];
    // last[b][k] = record of the most recent measurement of stabilizer k in block b
    let mut last: Vec<Vec<usize>> = vec![vec![usize::MAX; ns]; prog.n_blocks];
    // control-block records captured at a CX, consumed by the target's next round
    let mut partner: Vec<Option<Vec<usize>>> = vec![None; prog.n_blocks];
    let mut cx_events = Vec::new();

    // preparation (noiseless)
    for bl in &blocks {
        for q in 0..nd {
            circ.push(Op::Reset(bl.data_offset + q));
            if basis == Basis::X {
                circ.push(Op::Gate(Clifford::H(bl.data_offset + q)));
            }
        }
    }

    let se_round = |circ: &mut Circuit,
                    b: usize,
                    round: usize,
                    bl: &BlockLayout,
                    last: &mut Vec<Vec<usize>>,
                    partner: &mut Vec<Option<Vec<usize>>>,
                    dets: &mut Vec<Option<Detector>>| {
        for k in 0..ns {
            circ.push(Op::Reset(bl.anc_offset + k));
        }
        for &k in &x_anc {
            circ.push(Op::Gate(Clifford::H(bl.anc_offset + k)));
        }
        for step in 0..4 {
            for (k, p) in code.plaquettes.iter().enumerate() {
                let Some(q) = p.schedule()[step] else { continue };
                let (c, t) = match p.kind {
                    Basis::Z => (bl.data_offset + q, bl.anc_offset + k),
                    Basis::X => (bl.anc_offset + k, bl.data_offset + q),
                };
                match se {
                    SeMode::Local => {
                        circ.push(Op::Gate(Clifford::Cx(c, t)));
                        circ.push(Op::Dep2(c, t, noise.eps_loc));
                    }
                    SeMode::Blind => {
                        for op in blind_cx_ops(c, t, noise, false) {
                            circ.push(op);
                        }
                    }
                }
            }
        }
        for &k in &x_anc {
            circ.push(Op::Gate(Clifford::H(bl.anc_offset + k)));
        }
        let prev = last[b].clone();
        for k in 0..ns {
            let r = circ.next_record();
            circ.push(Op::Measure(bl.anc_offset + k));
            last[b][k] = r;
        }
        let part = partner[b].take();
        for (i, &k) in dec.iter().enumerate() {
            let mut records = vec![last[b][k]];
            if round > 0 {
                records.push(prev[k]);
            }
            if let Some(a) = &part {
                records.push(a[k]);
            }
            dets[bl.first_detector + round * bl.n_stabs + i] = Some(Detector { records, block: b, stab: i, round });
        }
    };

    let readout = |circ: &mut Circuit, b: usize, bl: &BlockLayout, last: &Vec<Vec<usize>>, dets: &mut Vec<Option<Detector>>| {
        let mut rec = vec![0usize; nd];
        for q in 0..nd {
            if basis == Basis::X {
                circ.push(Op::Gate(Clifford::H(bl.data_offset + q)));
            }
            rec[q] = circ.next_record();
            circ.push(Op::Measure(bl.data_offset + q));
        }
        for (i, &k) in dec.iter().enumerate() {
            let mut records: Vec<usize> = code.plaquettes[k].support().iter().map(|&q| rec[q]).collect();
            records.push(last[b][k]);
            dets[bl.first_detector + bl.rounds * bl.n_stabs + i] =
                Some(Detector { records, block: b, stab: i, round: bl.rounds });
        }
        code.logical_support(basis).iter().map(|&q| rec[q]).collect::<Vec<_>>()
    };

    let mut observables = vec![Vec::new(); prog.n_blocks];
    for b in 0..prog.n_blocks {
        se_round(&mut circ, b, 0, &blocks[b], &mut last, &mut partner, &mut dets);
    }
    for (l, layer) in prog.layers.iter().enumerate() {
        let first = prog.round_after_layer(l);
        for op in layer {
            match *op {
                LogicalOp::OneQ { block, blind } => {
                    if blind {
                        for q in 0..nd {
                            circ.push(Op::Dep1(blocks[block].data_offset + q, noise.eps_comm));
                        }
                    }
                }
                LogicalOp::DataNoise { block, p } => {
                    for q in 0..nd {
                        circ.push(Op::Dep1(blocks[block].data_offset + q, p));
                    }
                }
                LogicalOp::Cx { control, target, blind } => {
                    for q in 0..nd {
                        let c = blocks[control].data_offset + q;
                        let t = blocks[target].data_offset + q;
                        if blind {
                            for op in blind_cx_ops(c, t, noise, true) {
                                circ.push(op);
                            }
                        } else {
                            circ.push(Op::Gate(Clifford::Cx(c, t)));
                            circ.push(Op::Dep2(c, t, noise.eps_loc));
                        }
                    }
                    partner[target] = Some(last[control].clone());
                    blocks[target].partner_rounds.push(first);
                    cx_events.push(CxEvent { round: first, control, target });
                }
            }
        }
        for r in 0..prog.rounds_per_layer {
            for b in 0..prog.n_blocks {
                if prog.active(b, l) {
                    se_round(&mut circ, b, first + r, &blocks[b], &mut last, &mut partner, &mut dets);
                }
            }
        }
        for b in 0..prog.n_blocks {
            if prog.retire[b] == Some(l) {
                observables[b] = readout(&mut circ, b, &blocks[b], &last, &mut dets);
            }
        }
    }
    for b in 0..prog.n_blocks {
        if prog.retire[b].is_none() {
            observables[b] = readout(&mut circ, b, &blocks[b], &last, &mut dets);
        }
    }
    circ.detectors = dets.into_iter().map(|d| d.expect("every detector slot is filled")).collect();
    circ.observables = observables;
    Ok(BuiltCircuit { circuit: circ, code: code.clone(), basis, blocks, cx_events })
}
