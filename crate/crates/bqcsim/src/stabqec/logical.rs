//! Monte Carlo logical error rates of random transversal circuits.

use super::builder::{build_circuit, BuiltCircuit, CodeNoise, LogicalOp, LogicalProgram, SeMode};
use super::circuit::{FrameSim, ShotOutcome};
use super::decoder::{BlockCorrection, BlockDem, MatchingDecoder, MleTable};
use super::surface::{Basis, SurfaceCode};
use crate::blindgate::ErrorModel;
use crate::error::{Error, Result};
use crate::rng;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::Arc;

/// Which logical gates the random layers contain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMix {
    /// A 1Q gate on every block plus a random perfect matching of CX pairs.
    #[default]
    Full,
    /// 1Q gates only; blocks never interact.
    SingleQubit,
    /// No gates, extraction rounds only.
    Memory,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderKind {
    #[default]
    Matching,
    /// Exact maximum likelihood; single-block programs with small detector volume only.
    Mle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogicalRunConfig {
    pub n_qubits: usize,
    pub n_layers: usize,
    /// Extraction rounds after each layer.
    pub n_rounds: usize,
    pub d: usize,
    /// Probability that a logical gate is delegated blindly. Overrides `model.r_h`.
    pub r_h: f64,
    pub model: ErrorModel,
    pub se_mode: SeMode,
    pub seed: u64,
    #[serde(default)]
    pub gates: GateMix,
    #[serde(default)]
    pub decoder: DecoderKind,
}

impl Default for LogicalRunConfig {
    fn default() -> Self {
        LogicalRunConfig {
            n_qubits: 2,
            n_layers: 10,
            n_rounds: 1,
            d: 3,
            r_h: 1.0,
            model: ErrorModel { eps_comm: 0.01, eps_loc: 0.0, ..ErrorModel::default() },
            se_mode: SeMode::Local,
            seed: 1,
            gates: GateMix::Full,
            decoder: DecoderKind::Matching,
        }
    }
}

impl LogicalRunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.n_qubits == 0 || self.n_layers == 0 || self.n_rounds == 0 {
            return Err(Error::invalid("n_qubits, n_layers and n_rounds must be positive"));
        }
        if !(0.0..=1.0).contains(&self.r_h) {
            return Err(Error::invalid(format!("r_h = {} outside [0,1]", self.r_h)));
        }
        if !matches!(self.d, 3 | 5 | 7) {
            return Err(Error::capacity(format!("d = {} (supported: 3, 5, 7)", self.d)));
        }
        let cap = if self.d <= 5 { 4 } else { 2 };
        if self.n_qubits > cap {
            return Err(Error::capacity(format!("{} logical qubits at d = {} (max {cap})", self.n_qubits, self.d)));
        }
        if self.decoder == DecoderKind::Mle && (self.n_qubits > 1 && self.gates == GateMix::Full) {
            return Err(Error::invalid("MLE decoding needs independent blocks (no CX)"));
        }
        Ok(())
    }

    pub fn noise(&self) -> CodeNoise {
        CodeNoise { eps_comm: self.model.eps_comm, eps_loc: self.model.eps_loc }
    }

    /// CX pairs per layer.
    pub fn cx_per_layer(&self) -> usize {
        match self.gates {
            GateMix::Full => self.n_qubits / 2,
            _ => 0,
        }
    }

    /// Logical gates per layer (N_gpl).
    pub fn gates_per_layer(&self) -> usize {
        match self.gates {
            GateMix::Memory => 0,
            _ => self.n_qubits + self.cx_per_layer(),
        }
    }
}

/// Draw one random layered program.
pub fn random_program<R: Rng + ?Sized>(cfg: &LogicalRunConfig, rng: &mut R) -> LogicalProgram {
    let n = cfg.n_qubits;
    let mut layers = Vec::with_capacity(cfg.n_layers);
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..cfg.n_layers {
        let mut layer = Vec::new();
        if cfg.gates != GateMix::Memory {
            for b in 0..n {
                layer.push(LogicalOp::OneQ { block: b, blind: rng.gen::<f64>() < cfg.r_h });
            }
        }
        if cfg.gates == GateMix::Full {
            order.shuffle(rng);
            for pair in order.chunks_exact(2) {
                layer.push(LogicalOp::Cx { control: pair[0], target: pair[1], blind: rng.gen::<f64>() < cfg.r_h });
            }
        }
        layers.push(layer);
    }
    LogicalProgram::new(n, layers, cfg.n_rounds)
}

/// Per-qubit depolarizing strength used for the gate layers of decoder templates: matches the
/// mean X-flip rate a data qubit picks up from one layer of logical gates.
pub fn template_layer_noise(cfg: &LogicalRunConfig) -> f64 {
    let (ec, el, rh) = (cfg.model.eps_comm, cfg.model.eps_loc, cfg.r_h);
    if cfg.gates == GateMix::Memory {
        return 0.0;
    }
    let f_cx = 2.0 * cfg.cx_per_layer() as f64 / cfg.n_qubits as f64;
    let p_x = rh * 2.0 / 3.0 * ec + f_cx * (rh * (16.0 / 15.0 * el + ec) + (1.0 - rh) * 8.0 / 15.0 * el);
    (1.5 * p_x).min(0.75)
}

/// Decodes every block of a program and propagates inferred logical flips through the CX gates.
#[derive(Clone)]
pub struct ProgramDecoder {
    code: SurfaceCode,
    noise: CodeNoise,
    se: SeMode,
    basis: Basis,
    layer_noise: f64,
    rounds_per_layer: usize,
    kind: DecoderKind,
    /// Keyed by the block's number of extraction rounds.
    dems: HashMap<usize, Arc<BlockDem>>,
    matchers: HashMap<usize, MatchingDecoder>,
    tables: HashMap<usize, Arc<MleTable>>,
}

impl ProgramDecoder {
    pub fn new(
        code: SurfaceCode,
        noise: CodeNoise,
        se: SeMode,
        basis: Basis,
        layer_noise: f64,
        rounds_per_layer: usize,
        kind: DecoderKind,
    ) -> Self {
        ProgramDecoder {
            code,
            noise,
            se,
            basis,
            layer_noise,
            rounds_per_layer,
            kind,
            dems: HashMap::new(),
            matchers: HashMap::new(),
            tables: HashMap::new(),
        }
    }

    /// Template detector error model for a block with `rounds` extraction rounds.
    pub fn dem(&mut self, rounds: usize) -> Result<Arc<BlockDem>> {
        if let Some(d) = self.dems.get(&rounds) {
            return Ok(d.clone());
        }
        let layers = (rounds - 1) / self.rounds_per_layer;
        let prog = LogicalProgram::new(
            1,
            vec![vec![LogicalOp::DataNoise { block: 0, p: self.layer_noise }]; layers],
            self.rounds_per_layer,
        );
        let built = build_circuit(&self.code, &prog, self.noise, self.se, self.basis)?;
        let dem = Arc::new(BlockDem::from_template(&built)?);
        self.dems.insert(rounds, dem.clone());
        Ok(dem)
    }

    /// Build every decoder the program will need (so clones share the work).
    pub fn prepare(&mut self, built: &BuiltCircuit) -> Result<()> {
        for bl in &built.blocks {
            let dem = self.dem(bl.rounds)?;
            match self.kind {
                DecoderKind::Matching => {
                    if !self.matchers.contains_key(&bl.rounds) {
                        self.matchers.insert(bl.rounds, MatchingDecoder::new(&dem));
                    }
                }
                DecoderKind::Mle => {
                    if !self.tables.contains_key(&bl.rounds) {
                        self.tables.insert(bl.rounds, Arc::new(MleTable::new(&dem)?));
                    }
                }
            }
        }
        if self.kind == DecoderKind::Mle && !built.cx_events.is_empty() {
            return Err(Error::invalid("MLE decoding needs independent blocks (no CX)"));
        }
        Ok(())
    }

    /// Predicted observable flip of every block.
    ///
    /// A target block's detectors right after a CX include the control's previous syndrome,
    /// so control errors found in that round would show up in the target as lone defects.
    /// Blocks are decoded, those defects are cancelled using the control's matching, and the
    /// affected blocks are decoded again until nothing changes.
    pub fn decode(&mut self, built: &BuiltCircuit, shot: &ShotOutcome) -> Result<Vec<bool>> {
        self.prepare(built)?;
        let n = built.blocks.len();
        let raw: Vec<Vec<bool>> = built
            .blocks
            .iter()
            .map(|bl| shot.detectors[bl.first_detector..bl.first_detector + bl.n_nodes()].to_vec())
            .collect();
        let defects = |v: &[bool]| (0..v.len()).filter(|&i| v[i]).collect::<Vec<usize>>();
        if self.kind == DecoderKind::Mle {
            return Ok((0..n).map(|b| self.tables[&built.blocks[b].rounds].decode(&defects(&raw[b]))).collect());
        }
        let mut adjusted = raw.clone();
        let mut corr: Vec<BlockCorrection> = vec![BlockCorrection::default(); n];
        let mut dirty = vec![true; n];
        for _ in 0..=n.max(1) * 2 {
            for b in 0..n {
                if dirty[b] {
                    let m = self.matchers.get_mut(&built.blocks[b].rounds).expect("prepared");
                    corr[b] = m.decode(&defects(&adjusted[b]));
                }
            }
            let mut next = raw.clone();
            for e in &built.cx_events {
                let m = &self.matchers[&built.blocks[e.control].rounds];
                let ns = built.blocks[e.control].n_stabs;
                for &i in &corr[e.control].matched {
                    let edge = &m.edges()[i];
                    let Some(bn) = edge.b else { continue };
                    let (ra, rb) = (edge.a / ns, bn / ns);
                    // an error seen in the control between rounds r-1 and r, before the CX
                    let upper = match (ra + 1 == e.round && rb == e.round, rb + 1 == e.round && ra == e.round) {
                        (true, _) => bn,
                        (_, true) => edge.a,
                        _ => continue,
                    };
                    next[e.target][upper] ^= true;
                }
            }
            for b in 0..n {
                dirty[b] = next[b] != adjusted[b];
            }
            if !dirty.iter().any(|&d| d) {
                break;
            }
            adjusted = next;
        }
        // sweep rounds: CX gates before round r act first, then errors first seen at round r
        let mut flips: Vec<(usize, usize)> =
            (0..n).flat_map(|b| corr[b].flip_rounds.iter().map(move |&r| (r, b))).collect();
        flips.sort_unstable();
        let mut events = built.cx_events.clone();
        events.sort_by_key(|e| e.round);
        let mut pred = vec![false; n];
        let (mut fi, mut ei) = (0, 0);
        while fi < flips.len() || ei < events.len() {
            let next_e = events.get(ei).map_or(usize::MAX, |e| e.round);
            let next_f = flips.get(fi).map_or(usize::MAX, |f| f.0);
            if next_e <= next_f {
                let e = events[ei];
                pred[e.target] ^= pred[e.control];
                ei += 1;
            } else {
                pred[flips[fi].1] ^= true;
                fi += 1;
            }
        }
        Ok(pred)
    }
}

/// How a shot's per-block observable errors combine into a failure.
#[derive(Clone, Debug, PartialEq)]
pub enum FailureRule {
    AnyBlock,
    /// Failure when the parity of the residual errors on these blocks is odd.
    Parity(Vec<usize>),
}

impl FailureRule {
    fn failed(&self, actual: &[bool], pred: &[bool]) -> bool {
        match self {
            FailureRule::AnyBlock => actual.iter().zip(pred).any(|(a, p)| a != p),
            FailureRule::Parity(bs) => bs.iter().fold(false, |acc, &b| acc ^ actual[b] ^ pred[b]),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Tally {
    pub shots: u64,
    pub failures: u64,
    pub gates: u64,
    pub blind_gates: u64,
    pub layers: u64,
}

impl Tally {
    fn merge(mut self, o: Tally) -> Tally {
        self.shots += o.shots;
        self.failures += o.failures;
        self.gates += o.gates;
        self.blind_gates += o.blind_gates;
        self.layers += o.layers;
        self
    }

    pub fn rate(&self) -> (f64, f64) {
        if self.shots == 0 {
            return (0.0, 0.0);
        }
        let p = self.failures as f64 / self.shots as f64;
        (p, (p * (1.0 - p) / self.shots as f64).sqrt())
    }
}

/// Shots run against one drawn program before a fresh one is drawn.
pub const SHOTS_PER_PROGRAM: u64 = 16;

/// Sample `shots` runs of programs produced by `make_program`, batch by batch in parallel.
/// Batch `i` uses the random stream `(seed, tag, i)`, so results do not depend on threading.
pub fn run_programs<F>(
    decoder: &ProgramDecoder,
    basis: Basis,
    shots: u64,
    seed: u64,
    tag: u64,
    rule: &FailureRule,
    make_program: F,
) -> Result<Tally>
where
    F: Fn(&mut rng::Rng) -> LogicalProgram + Sync,
{
    let batches = shots.div_ceil(SHOTS_PER_PROGRAM);
    // warm the template cache once so workers clone it
    let mut warm = decoder.clone();
    {
        let mut r = rng::stream(seed, &[tag, 0]);
        let prog = make_program(&mut r);
        let built = build_circuit(&warm.code.clone(), &prog, warm.noise, warm.se, basis)?;
        warm.prepare(&built)?;
    }
    (0..batches)
        .into_par_iter()
        .map_init(
            || (warm.clone(), FrameSim::default()),
            |(dec, frame), i| -> Result<Tally> {
                let mut r = rng::stream(seed, &[tag, i]);
                let prog = make_program(&mut r);
                let built = build_circuit(&dec.code, &prog, dec.noise, dec.se, basis)?;
                let (g, bg) = prog.gate_counts();
                let n = SHOTS_PER_PROGRAM.min(shots - i * SHOTS_PER_PROGRAM);
                let mut t = Tally { shots: n, layers: prog.layers.len() as u64, gates: g as u64, blind_gates: bg as u64, failures: 0 };
                for _ in 0..n {
                    let out = built.circuit.sample(&mut r, frame);
                    let pred = dec.decode(&built, &out)?;
                    t.failures += rule.failed(&out.observables, &pred) as u64;
                }
                Ok(t)
            },
        )
        .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogicalRunResult {
    pub shots: u64,
    pub failures: u64,
    pub p_l: f64,
    pub stderr: f64,
    /// Realized logical gates per layer, averaged over drawn programs.
    pub gates_per_layer: f64,
    /// Realized fraction of blind logical gates.
    pub blind_fraction: f64,
    /// Template mechanisms that flip more than two detectors (dropped by matching).
    pub hyperedges: usize,
}

pub fn decoder_for(cfg: &LogicalRunConfig) -> Result<ProgramDecoder> {
    let code = SurfaceCode::new(cfg.d)?;
    Ok(ProgramDecoder::new(
        code,
        cfg.noise(),
        cfg.se_mode,
        Basis::Z,
        template_layer_noise(cfg),
        cfg.n_rounds,
        cfg.decoder,
    ))
}

pub fn run_logical_circuit(cfg: &LogicalRunConfig, shots: u64) -> Result<LogicalRunResult> {
    cfg.validate()?;
    if shots == 0 {
        return Err(Error::invalid("shots must be positive"));
    }
    let mut dec = decoder_for(cfg)?;
    let full_rounds = 1 + cfg.n_layers * cfg.n_rounds;
    let hyperedges = dec.dem(full_rounds)?.hyperedges;
    let t = run_programs(&dec, Basis::Z, shots, cfg.seed, 0x4c4f_4749, &FailureRule::AnyBlock, |r| {
        random_program(cfg, r)
    })?;
    let (p_l, stderr) = t.rate();
    Ok(LogicalRunResult {
        shots: t.shots,
        failures: t.failures,
        p_l,
        stderr,
        gates_per_layer: t.gates as f64 / t.layers.max(1) as f64,
        blind_fraction: if t.gates == 0 { 0.0 } else { t.blind_gates as f64 / t.gates as f64 },
        hyperedges,
    })
}
