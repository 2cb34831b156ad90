//! Flat Clifford-plus-Pauli-noise circuits, a Pauli-frame sampler and a tableau reference run.

use super::tableau::{Clifford, Tableau};
use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Op {
    /// Reset to |0>.
    Reset(usize),
    Gate(Clifford),
    /// Z-basis measurement; appends one record.
    Measure(usize),
    /// Single-qubit depolarizing: each of X, Y, Z with probability p/3.
    Dep1(usize, f64),
    /// Two-qubit depolarizing: each of the 15 non-identity Paulis with probability p/15.
    Dep2(usize, usize, f64),
}

impl Op {
    pub fn is_noise(&self) -> bool {
        matches!(self, Op::Dep1(..) | Op::Dep2(..))
    }
}

#[derive(Clone, Debug)]
pub struct Detector {
    pub records: Vec<usize>,
    pub block: usize,
    /// Index of the stabilizer among the decoded-type stabilizers of the block.
    pub stab: usize,
    /// Extraction round; the final data readout has round = number of extraction rounds.
    pub round: usize,
}

#[derive(Clone, Debug, Default)]
pub struct Circuit {
    pub n_qubits: usize,
    pub ops: Vec<Op>,
    pub n_records: usize,
    pub detectors: Vec<Detector>,
    /// One observable per block: parity of the listed records.
    pub observables: Vec<Vec<usize>>,
}

/// A Pauli applied right after op `after` (or before everything if `after` is `None`).
#[derive(Clone, Debug, PartialEq)]
pub struct Fault {
    pub after: Option<usize>,
    pub qubit: usize,
    pub x: bool,
    pub z: bool,
}

/// Detector and observable flips of one shot.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ShotOutcome {
    pub detectors: Vec<bool>,
    pub observables: Vec<bool>,
}

impl Circuit {
    pub fn push(&mut self, op: Op) {
        if let Op::Measure(_) = op {
            self.n_records += 1;
        }
        self.ops.push(op);
    }

    /// Record index that the next measurement will produce.
    pub fn next_record(&self) -> usize {
        self.n_records
    }

    pub fn noise_locations(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.ops.len()).filter(|&i| self.ops[i].is_noise())
    }

    pub fn outcome_from_records(&self, rec: &[bool]) -> ShotOutcome {
        let par = |rs: &[usize]| rs.iter().fold(false, |a, &r| a ^ rec[r]);
        ShotOutcome {
            detectors: self.detectors.iter().map(|d| par(&d.records)).collect(),
            observables: self.observables.iter().map(|o| par(o)).collect(),
        }
    }

    /// Sample one shot of record flips relative to the noiseless reference.
    pub fn sample_records<R: Rng + ?Sized>(&self, rng: &mut R, frame: &mut FrameSim) -> Vec<bool> {
        frame.reset(self.n_qubits);
        let mut rec = Vec::with_capacity(self.n_records);
        for op in &self.ops {
            match *op {
                Op::Dep1(q, p) => {
                    if p > 0.0 && rng.gen::<f64>() < p {
                        let k = rng.gen_range(1..4u8);
                        frame.x[q] ^= k & 1 == 1;
                        frame.z[q] ^= k & 2 == 2;
                    }
                }
                Op::Dep2(a, b, p) => {
                    if p > 0.0 && rng.gen::<f64>() < p {
                        let k = rng.gen_range(1..16u8);
                        frame.x[a] ^= k & 1 == 1;
                        frame.z[a] ^= k & 2 == 2;
                        frame.x[b] ^= k & 4 == 4;
                        frame.z[b] ^= k & 8 == 8;
                    }
                }
                _ => frame.step(op, &mut rec),
            }
        }
        rec
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, frame: &mut FrameSim) -> ShotOutcome {
        let rec = self.sample_records(rng, frame);
        self.outcome_from_records(&rec)
    }

    /// Noiseless propagation of explicit faults; noise ops are ignored.
    pub fn inject_records(&self, faults: &[Fault], frame: &mut FrameSim) -> Vec<bool> {
        frame.reset(self.n_qubits);
        let mut rec = Vec::with_capacity(self.n_records);
        let apply = |frame: &mut FrameSim, at: Option<usize>| {
            for f in faults.iter().filter(|f| f.after == at) {
                frame.x[f.qubit] ^= f.x;
                frame.z[f.qubit] ^= f.z;
            }
        };
        apply(frame, None);
        for (i, op) in self.ops.iter().enumerate() {
            if !op.is_noise() {
                frame.step(op, &mut rec);
            }
            apply(frame, Some(i));
        }
        rec
    }

    pub fn inject(&self, faults: &[Fault]) -> ShotOutcome {
        let mut frame = FrameSim::default();
        let rec = self.inject_records(faults, &mut frame);
        self.outcome_from_records(&rec)
    }

    /// Records flipped by a single Pauli fault placed after op `after`, propagating only forward.
    pub fn fault_records(&self, after: usize, qubit: usize, x: bool, z: bool, frame: &mut FrameSim) -> Vec<usize> {
        frame.reset(self.n_qubits);
        frame.x[qubit] = x;
        frame.z[qubit] = z;
        let mut rec_idx = self.ops[..=after].iter().filter(|o| matches!(o, Op::Measure(_))).count();
        let mut flipped = Vec::new();
        let mut scratch = Vec::new();
        for op in &self.ops[after + 1..] {
            if op.is_noise() {
                continue;
            }
            scratch.clear();
            frame.step(op, &mut scratch);
            if let Some(&b) = scratch.first() {
                if b {
                    flipped.push(rec_idx);
                }
                rec_idx += 1;
            }
        }
        flipped
    }

    /// Noiseless execution on a stabilizer tableau with Pauli faults inserted; returns raw
    /// measurement outcomes. Used as an independent oracle for the frame simulator.
    pub fn run_tableau<R: Rng + ?Sized>(&self, faults: &[Fault], rng: &mut R) -> Vec<bool> {
        let mut t = Tableau::new(self.n_qubits);
        let mut rec = Vec::with_capacity(self.n_records);
        let apply = |t: &mut Tableau, at: Option<usize>| {
            for f in faults.iter().filter(|f| f.after == at) {
                if f.x {
                    t.apply(Clifford::X(f.qubit));
                }
                if f.z {
                    t.apply(Clifford::Z(f.qubit));
                }
            }
        };
        apply(&mut t, None);
        for (i, op) in self.ops.iter().enumerate() {
            match *op {
                Op::Reset(q) => t.reset(q, rng),
                Op::Gate(g) => t.apply(g),
                Op::Measure(q) => rec.push(t.measure(q, rng).0),
                _ => {}
            }
            apply(&mut t, Some(i));
        }
        rec
    }
}

/// Pauli frame over all qubits; a bit set means that Pauli differs from the reference run.
#[derive(Clone, Debug, Default)]
pub struct FrameSim {
    pub x: Vec<bool>,
    pub z: Vec<bool>,
}

impl FrameSim {
    fn reset(&mut self, n: usize) {
        self.x.clear();
        self.x.resize(n, false);
        self.z.clear();
        self.z.resize(n, false);
    }

    #[inline]
    fn step(&mut self, op: &Op, rec: &mut Vec<bool>) {
        match *op {
            Op::Reset(q) => {
                self.x[q] = false;
                self.z[q] = false;
            }
            Op::Measure(q) => {
                rec.push(self.x[q]);
                // the post-measurement state is a Z eigenstate, Z components are irrelevant
                self.z[q] = false;
            }
            Op::Gate(g) => match g {
                Clifford::H(q) => std::mem::swap(&mut self.x[q], &mut self.z[q]),
                Clifford::S(q) | Clifford::Sdg(q) => self.z[q] ^= self.x[q],
                Clifford::X(_) | Clifford::Y(_) | Clifford::Z(_) => {}
                Clifford::Cx(c, t) => {
                    self.x[t] ^= self.x[c];
                    self.z[c] ^= self.z[t];
                }
                Clifford::Cz(a, b) => {
                    self.z[a] ^= self.x[b];
                    self.z[b] ^= self.x[a];
                }
            },
            Op::Dep1(..) | Op::Dep2(..) => {}
        }
    }
}
