//! Exhaustive single-fault injection: every Pauli at every noise location, decoded in turn.

use super::builder::{build_circuit, BuiltCircuit, CodeNoise, LogicalOp, LogicalProgram, SeMode};
use super::circuit::{Fault, Op};
use super::logical::{DecoderKind, ProgramDecoder};
use super::surface::{Basis, SurfaceCode};
use crate::error::Result;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Every weight-one Pauli fault of `built`, one noise location at a time.
pub fn single_faults(built: &BuiltCircuit) -> Vec<Vec<Fault>> {
    let mut out = Vec::new();
    for i in built.circuit.noise_locations() {
        let qs: Vec<usize> = match built.circuit.ops[i] {
            Op::Dep1(q, _) => vec![q],
            Op::Dep2(a, b, _) => vec![a, b],
            _ => continue,
        };
        for k in 1..1u8 << (2 * qs.len()) {
            let mut v = Vec::new();
            for (j, &q) in qs.iter().enumerate() {
                let (x, z) = (k >> (2 * j) & 1 == 1, k >> (2 * j + 1) & 1 == 1);
                if x || z {
                    v.push(Fault { after: Some(i), qubit: q, x, z });
                }
            }
            out.push(v);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultCase {
    pub name: String,
    pub se_mode: SeMode,
    pub basis: Basis,
    pub decoder: DecoderKind,
    pub faults: usize,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultReport {
    pub d: usize,
    pub se_rounds: usize,
    pub cases: Vec<FaultCase>,
}

impl FaultReport {
    pub fn faults(&self) -> usize {
        self.cases.iter().map(|c| c.faults).sum()
    }

    pub fn failures(&self) -> usize {
        self.cases.iter().map(|c| c.failures).sum()
    }
}

fn programs(rounds_per_layer: usize) -> Vec<(&'static str, LogicalProgram)> {
    let one = |blind| vec![vec![LogicalOp::OneQ { block: 0, blind }]];
    let cx = |blind| vec![vec![LogicalOp::Cx { control: 0, target: 1, blind }]];
    vec![
        ("memory", LogicalProgram::new(1, vec![vec![]], rounds_per_layer)),
        ("blind_1q", LogicalProgram::new(1, one(true), rounds_per_layer)),
        ("local_cx", LogicalProgram::new(2, cx(false), rounds_per_layer)),
        ("blind_cx", LogicalProgram::new(2, cx(true), rounds_per_layer)),
    ]
}

/// Inject every single fault into one-layer programs on a distance-`d` code with
/// `1 + rounds_per_layer` extraction rounds. MLE runs only on single-block programs at d = 3.
pub fn exhaustive_single_faults(d: usize, rounds_per_layer: usize) -> Result<FaultReport> {
    let code = SurfaceCode::new(d)?;
    let noise = CodeNoise { eps_comm: 0.01, eps_loc: 0.01 };
    let mut cases = Vec::new();
    for se in [SeMode::Local, SeMode::Blind] {
        for basis in [Basis::Z, Basis::X] {
            for (name, prog) in programs(rounds_per_layer) {
                // transversal CX runs are Z-basis only
                if basis == Basis::X && prog.n_blocks > 1 {
                    continue;
                }
                let built = build_circuit(&code, &prog, noise, se, basis)?;
                let faults = single_faults(&built);
                let mut kinds = vec![DecoderKind::Matching];
                if prog.n_blocks == 1 && d == 3 {
                    kinds.push(DecoderKind::Mle);
                }
                for kind in kinds {
                    let dec = ProgramDecoder::new(code.clone(), noise, se, basis, 0.02, rounds_per_layer, kind);
                    let failures = faults
                        .par_iter()
                        .map_init(
                            || dec.clone(),
                            |dec, f| -> Result<usize> {
                                let out = built.circuit.inject(f);
                                Ok((dec.decode(&built, &out)? != out.observables) as usize)
                            },
                        )
                        .try_reduce(|| 0, |a, b| Ok(a + b))?;
                    cases.push(FaultCase { name: name.into(), se_mode: se, basis, decoder: kind, faults: faults.len(), failures });
                }
            }
        }
    }
    Ok(FaultReport { d, se_rounds: 1 + rounds_per_layer, cases })
}
