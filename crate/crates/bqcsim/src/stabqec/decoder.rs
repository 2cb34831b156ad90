//! Detector error models, a matching decoder and an exact small-volume MLE decoder.

use super::builder::BuiltCircuit;
use super::circuit::{FrameSim, Op};
use crate::error::{Error, Result};
use fusion_blossom::mwpm_solver::{PrimalDualSolver, SolverSerial};
use fusion_blossom::util::{SolverInitializer, SyndromePattern};
use std::collections::HashMap;
use std::fmt::Write as _;

/// A fault class: the detectors it flips (block-local node ids, sorted) and the observable flip.
#[derive(Clone, Debug, PartialEq)]
pub struct Mechanism {
    pub dets: Vec<usize>,
    pub obs: bool,
    pub p: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeKind {
    Bulk,
    Boundary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemEdge {
    pub a: usize,
    /// `None` for edges into the boundary.
    pub b: Option<usize>,
    pub p: f64,
    pub obs: bool,
    /// Earliest round touched; used to place inferred errors relative to logical CX gates.
    pub r_min: usize,
    pub kind: EdgeKind,
}

/// Detector error model of one block, decoded-type detectors only.
#[derive(Clone, Debug)]
pub struct BlockDem {
    pub n_stabs: usize,
    pub rounds: usize,
    pub mechanisms: Vec<Mechanism>,
    pub edges: Vec<DemEdge>,
    /// Mechanisms flipping more than two detectors (not representable as graph edges).
    pub hyperedges: usize,
    /// Mechanisms with no detector but a logical flip.
    pub undetectable: usize,
    /// Detector pairs reached by mechanisms with different observable effects.
    pub conflicts: usize,
}

fn combine(p: f64, q: f64) -> f64 {
    p * (1.0 - q) + q * (1.0 - p)
}

impl BlockDem {
    pub fn n_nodes(&self) -> usize {
        (self.rounds + 1) * self.n_stabs
    }

    pub fn round_of(&self, node: usize) -> usize {
        node / self.n_stabs
    }

    /// Enumerate every single fault of a one-block template circuit.
    pub fn from_template(built: &BuiltCircuit) -> Result<Self> {
        if built.blocks.len() != 1 {
            return Err(Error::invalid("templates must contain exactly one block"));
        }
        let c = &built.circuit;
        let bl = &built.blocks[0];
        let mut rec_dets: Vec<Vec<usize>> = vec![Vec::new(); c.n_records];
        for (i, d) in c.detectors.iter().enumerate() {
            for &r in &d.records {
                rec_dets[r].push(i - bl.first_detector);
            }
        }
        let mut obs_rec = vec![false; c.n_records];
        for &r in &c.observables[0] {
            obs_rec[r] ^= true;
        }
        let effect = |recs: Vec<usize>| -> (Vec<usize>, bool) {
            let mut dets: Vec<usize> = Vec::new();
            let mut obs = false;
            for r in recs {
                obs ^= obs_rec[r];
                for &d in &rec_dets[r] {
                    if let Some(pos) = dets.iter().position(|&x| x == d) {
                        dets.swap_remove(pos);
                    } else {
                        dets.push(d);
                    }
                }
            }
            dets.sort_unstable();
            (dets, obs)
        };
        let xor = |a: &(Vec<usize>, bool), b: &(Vec<usize>, bool)| -> (Vec<usize>, bool) {
            let mut out: Vec<usize> = a.0.iter().filter(|d| !b.0.contains(d)).copied().collect();
            out.extend(b.0.iter().filter(|d| !a.0.contains(d)));
            out.sort_unstable();
            (out, a.1 ^ b.1)
        };
        let mut acc: HashMap<(Vec<usize>, bool), f64> = HashMap::new();
        let mut add = |e: (Vec<usize>, bool), p: f64| {
            if e.0.is_empty() && !e.1 {
                return;
            }
            let slot = acc.entry(e).or_insert(0.0);
            *slot = combine(*slot, p);
        };
        let mut frame = FrameSim::default();
        for i in c.noise_locations() {
            match c.ops[i] {
                Op::Dep1(q, p) => {
                    let ex = effect(c.fault_records(i, q, true, false, &mut frame));
                    let ez = effect(c.fault_records(i, q, false, true, &mut frame));
                    let ey = xor(&ex, &ez);
                    for e in [ex, ez, ey] {
                        add(e, p / 3.0);
                    }
                }
                Op::Dep2(a, b, p) => {
                    let basis = [
                        effect(c.fault_records(i, a, true, false, &mut frame)),
                        effect(c.fault_records(i, a, false, true, &mut frame)),
                        effect(c.fault_records(i, b, true, false, &mut frame)),
                        effect(c.fault_records(i, b, false, true, &mut frame)),
                    ];
                    for k in 1..16usize {
                        let mut e = (Vec::new(), false);
                        for (bit, be) in basis.iter().enumerate() {
                            if k >> bit & 1 == 1 {
                                e = xor(&e, be);
                            }
                        }
                        add(e, p / 15.0);
                    }
                }
                _ => unreachable!(),
            }
        }
        let mut mechanisms: Vec<Mechanism> =
            acc.into_iter().map(|((dets, obs), p)| Mechanism { dets, obs, p }).collect();
        mechanisms.sort_by(|a, b| a.dets.cmp(&b.dets).then(a.obs.cmp(&b.obs)));
        Ok(Self::from_mechanisms(bl.n_stabs, bl.rounds, mechanisms))
    }

    pub fn from_mechanisms(n_stabs: usize, rounds: usize, mechanisms: Vec<Mechanism>) -> Self {
        let mut dem = BlockDem {
            n_stabs,
            rounds,
            mechanisms: Vec::new(),
            edges: Vec::new(),
            hyperedges: 0,
            undetectable: 0,
            conflicts: 0,
        };
        // (a, b) -> probabilities for obs = false / true
        let mut pairs: HashMap<(usize, Option<usize>), [f64; 2]> = HashMap::new();
        for m in &mechanisms {
            let key = match m.dets.len() {
                0 => {
                    dem.undetectable += 1;
                    continue;
                }
                1 => (m.dets[0], None),
                2 => (m.dets[0], Some(m.dets[1])),
                _ => {
                    dem.hyperedges += 1;
                    continue;
                }
            };
            let slot = pairs.entry(key).or_insert([0.0, 0.0]);
            slot[m.obs as usize] = combine(slot[m.obs as usize], m.p);
        }
        let mut keys: Vec<_> = pairs.keys().copied().collect();
        keys.sort();
        for key in keys {
            let [p0, p1] = pairs[&key];
            if p0 > 0.0 && p1 > 0.0 {
                dem.conflicts += 1;
            }
            let (a, b) = key;
            let r_min = dem.round_of(a).min(b.map_or(usize::MAX, |b| dem.round_of(b)));
            dem.edges.push(DemEdge {
                a,
                b,
                p: combine(p0, p1),
                // ties and zero-probability structure edges keep obs = false
                obs: p1 > p0,
                r_min,
                kind: if b.is_some() { EdgeKind::Bulk } else { EdgeKind::Boundary },
            });
        }
        dem.mechanisms = mechanisms;
        dem
    }

    /// Text adjacency export, one edge per line.
    pub fn to_adjacency(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# bqcsim detector graph v1");
        let _ = writeln!(s, "# node = round * stabs + stab; boundary = -1");
        let _ = writeln!(s, "nodes {} stabs {} rounds {}", self.n_nodes(), self.n_stabs, self.rounds + 1);
        for e in &self.edges {
            let b = e.b.map_or(-1, |b| b as i64);
            let _ = writeln!(s, "edge {} {} {:.6e} {} {}", e.a, b, e.p, e.obs as u8, e.r_min);
        }
        s
    }
}

const WEIGHT_SCALE: f64 = 1000.0;
const P_FLOOR: f64 = 1e-12;

fn weight(p: f64) -> isize {
    let p = p.clamp(P_FLOOR, 0.5 - 1e-9);
    let w = (WEIGHT_SCALE * ((1.0 - p) / p).ln()).round() as isize;
    // fusion-blossom wants even weights
    (2 * (w / 2)).max(2)
}

/// Result of decoding one block.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BlockCorrection {
    /// Net observable flip of the matched edges.
    pub obs_flip: bool,
    /// `r_min` of every matched edge that flips the observable.
    pub flip_rounds: Vec<usize>,
    /// Indices of the matched edges (see [`MatchingDecoder::edges`]).
    pub matched: Vec<usize>,
}

/// Minimum-weight perfect matching on a block's detector graph.
pub struct MatchingDecoder {
    initializer: SolverInitializer,
    solver: SolverSerial,
    edges: Vec<DemEdge>,
    n_nodes: usize,
}

impl Clone for MatchingDecoder {
    fn clone(&self) -> Self {
        MatchingDecoder {
            initializer: self.initializer.clone(),
            solver: SolverSerial::new(&self.initializer),
            edges: self.edges.clone(),
            n_nodes: self.n_nodes,
        }
    }
}

impl MatchingDecoder {
    pub fn new(dem: &BlockDem) -> Self {
        let n = dem.n_nodes();
        let boundary = n;
        let weighted: Vec<_> = dem
            .edges
            .iter()
            .map(|e| (e.a as _, e.b.unwrap_or(boundary) as _, weight(e.p) as _))
            .collect();
        let initializer = SolverInitializer::new((n + 1) as _, weighted, vec![boundary as _]);
        let solver = SolverSerial::new(&initializer);
        MatchingDecoder { initializer, solver, edges: dem.edges.clone(), n_nodes: n }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn edges(&self) -> &[DemEdge] {
        &self.edges
    }

    /// Decode block-local defects.
    pub fn decode(&mut self, defects: &[usize]) -> BlockCorrection {
        if defects.is_empty() {
            return BlockCorrection::default();
        }
        let pattern = SyndromePattern::new(defects.iter().map(|&d| d as _).collect(), vec![]);
        self.solver.solve(&pattern);
        let sub = self.solver.subgraph();
        self.solver.clear();
        let mut out = BlockCorrection::default();
        for e in sub {
            let i = e as usize;
            out.matched.push(i);
            if self.edges[i].obs {
                out.obs_flip ^= true;
                out.flip_rounds.push(self.edges[i].r_min);
            }
        }
        out
    }
}

/// Exact maximum-likelihood decoder over a small detector error model.
///
/// `P(s, l)` for every syndrome `s` and observable flip `l` is the inverse Walsh-Hadamard
/// transform of `prod_j (1 - 2 p_j [u . col_j odd])`; the table stores `argmax_l P(s, l)`.
#[derive(Clone, Debug)]
pub struct MleTable {
    n_dets: usize,
    best: Vec<bool>,
    /// Probability mass of the chosen class, normalized per syndrome.
    confidence: Vec<f64>,
}

pub const MAX_MLE_BITS: usize = 22;

impl MleTable {
    pub fn new(dem: &BlockDem) -> Result<Self> {
        let m = dem.n_nodes();
        let bits = m + 1;
        if bits > MAX_MLE_BITS {
            return Err(Error::capacity(format!("MLE table needs 2^{bits} entries (max 2^{MAX_MLE_BITS})")));
        }
        let size = 1usize << bits;
        let cols: Vec<(usize, f64)> = dem
            .mechanisms
            .iter()
            .map(|mech| {
                let mut mask = 0usize;
                for &d in &mech.dets {
                    mask |= 1 << d;
                }
                if mech.obs {
                    mask |= 1 << m;
                }
                (mask, mech.p)
            })
            .collect();
        let mut f = vec![1.0f64; size];
        for (u, fu) in f.iter_mut().enumerate() {
            for &(mask, p) in &cols {
                if (u & mask).count_ones() & 1 == 1 {
                    *fu *= 1.0 - 2.0 * p;
                }
            }
        }
        // in-place fast Walsh-Hadamard transform
        let mut h = 1;
        while h < size {
            for i in (0..size).step_by(2 * h) {
                for j in i..i + h {
                    let (a, b) = (f[j], f[j + h]);
                    f[j] = a + b;
                    f[j + h] = a - b;
                }
            }
            h *= 2;
        }
        let half = 1usize << m;
        let mut best = vec![false; half];
        let mut confidence = vec![0.5; half];
        for s in 0..half {
            let p0 = f[s].max(0.0);
            let p1 = f[s | half].max(0.0);
            best[s] = p1 > p0;
            if p0 + p1 > 0.0 {
                confidence[s] = p0.max(p1) / (p0 + p1);
            }
        }
        Ok(MleTable { n_dets: m, best, confidence })
    }

    pub fn decode(&self, defects: &[usize]) -> bool {
        self.best[self.syndrome(defects)]
    }

    pub fn confidence(&self, defects: &[usize]) -> f64 {
        self.confidence[self.syndrome(defects)]
    }

    fn syndrome(&self, defects: &[usize]) -> usize {
        defects.iter().fold(0usize, |s, &d| {
            debug_assert!(d < self.n_dets);
            s ^ (1 << d)
        })
    }
}
