//! Rotated surface-code layout.
//!
//! Data qubit `(r, c)` has index `r * d + c`. Plaquette `(r, c)` for `r, c in -1..d` touches the
//! data qubits at its four corners that lie on the lattice. X plaquettes have `r + c` even.
//! Weight-2 X plaquettes sit on the top and bottom edges, weight-2 Z plaquettes on the left
//! and right edges. Logical Z is a row, logical X a column.

use super::tableau::SignedPauli;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub const MIN_DISTANCE: usize = 3;
pub const MAX_DISTANCE: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    X,
    Z,
}

impl Basis {
    pub fn other(self) -> Basis {
        match self {
            Basis::X => Basis::Z,
            Basis::Z => Basis::X,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Plaquette {
    pub kind: Basis,
    pub row: i32,
    pub col: i32,
    /// Corners in NW, NE, SW, SE order; `None` off the lattice.
    pub corners: [Option<usize>; 4],
}

impl Plaquette {
    pub fn support(&self) -> Vec<usize> {
        self.corners.iter().flatten().copied().collect()
    }

    /// Data qubits in the order the extraction circuit touches them.
    pub fn schedule(&self) -> [Option<usize>; 4] {
        let [nw, ne, sw, se] = self.corners;
        match self.kind {
            Basis::X => [nw, ne, sw, se],
            Basis::Z => [nw, sw, ne, se],
        }
    }
}

#[derive(Clone, Debug)]
pub struct SurfaceCode {
    pub d: usize,
    pub plaquettes: Vec<Plaquette>,
}

impl SurfaceCode {
    pub fn new(d: usize) -> Result<Self> {
        if d % 2 == 0 || d < 1 {
            return Err(Error::invalid(format!("distance must be odd, got {d}")));
        }
        if d > MAX_DISTANCE {
            return Err(Error::capacity(format!("distance {d} > {MAX_DISTANCE}")));
        }
        let di = d as i32;
        let mut plaquettes = Vec::new();
        for r in -1..di {
            for c in -1..di {
                let kind = if (r + c).rem_euclid(2) == 0 { Basis::X } else { Basis::Z };
                let row_edge = r == -1 || r == di - 1;
                let col_edge = c == -1 || c == di - 1;
                let keep = match (row_edge, col_edge) {
                    (false, false) => true,
                    (true, false) => kind == Basis::X,
                    (false, true) => kind == Basis::Z,
                    (true, true) => false,
                };
                if !keep {
                    continue;
                }
                let at = |rr: i32, cc: i32| {
                    (rr >= 0 && rr < di && cc >= 0 && cc < di).then(|| (rr * di + cc) as usize)
                };
                plaquettes.push(Plaquette {
                    kind,
                    row: r,
                    col: c,
                    corners: [at(r, c), at(r, c + 1), at(r + 1, c), at(r + 1, c + 1)],
                });
            }
        }
        Ok(SurfaceCode { d, plaquettes })
    }

    pub fn n_data(&self) -> usize {
        self.d * self.d
    }

    pub fn n_stabilizers(&self) -> usize {
        self.plaquettes.len()
    }

    /// Indices into `plaquettes` of the given type.
    pub fn of_kind(&self, kind: Basis) -> Vec<usize> {
        (0..self.plaquettes.len()).filter(|&i| self.plaquettes[i].kind == kind).collect()
    }

    /// Support of the logical operator of type `kind` (Z: row 0, X: column 0).
    pub fn logical_support(&self, kind: Basis) -> Vec<usize> {
        let d = self.d;
        match kind {
            Basis::Z => (0..d).collect(),
            Basis::X => (0..d).map(|r| r * d).collect(),
        }
    }

    fn pauli_on(&self, support: &[usize], kind: Basis) -> SignedPauli {
        let mut p = SignedPauli::identity(self.n_data());
        for &q in support {
            match kind {
                Basis::X => p.x[q] = true,
                Basis::Z => p.z[q] = true,
            }
        }
        p
    }

    pub fn stabilizer_pauli(&self, i: usize) -> SignedPauli {
        let p = &self.plaquettes[i];
        self.pauli_on(&p.support(), p.kind)
    }

    pub fn logical_pauli(&self, kind: Basis) -> SignedPauli {
        self.pauli_on(&self.logical_support(kind), kind)
    }

    /// Counts, commutation and logical weights. Errors describe the first violation.
    pub fn self_test(&self) -> Result<()> {
        let d = self.d;
        let n = self.n_stabilizers();
        if n != d * d - 1 {
            return Err(Error::invalid(format!("{n} stabilizers, expected {}", d * d - 1)));
        }
        for kind in [Basis::X, Basis::Z] {
            if self.of_kind(kind).len() != (d * d - 1) / 2 {
                return Err(Error::invalid(format!("unbalanced {kind:?} stabilizers")));
            }
        }
        let stabs: Vec<_> = (0..n).map(|i| self.stabilizer_pauli(i)).collect();
        for i in 0..n {
            let w = self.plaquettes[i].support().len();
            if w != 2 && w != 4 {
                return Err(Error::invalid(format!("plaquette {i} has weight {w}")));
            }
            for j in i + 1..n {
                if !stabs[i].commutes(&stabs[j]) {
                    return Err(Error::invalid(format!("stabilizers {i},{j} anticommute")));
                }
            }
        }
        let lx = self.logical_pauli(Basis::X);
        let lz = self.logical_pauli(Basis::Z);
        for (name, l) in [("X", &lx), ("Z", &lz)] {
            if let Some(i) = stabs.iter().position(|s| !s.commutes(l)) {
                return Err(Error::invalid(format!("logical {name} anticommutes with stabilizer {i}")));
            }
            let w = l.x.iter().zip(&l.z).filter(|(a, b)| **a || **b).count();
            if w != d {
                return Err(Error::invalid(format!("logical {name} has weight {w}")));
            }
        }
        if lx.commutes(&lz) {
            return Err(Error::invalid("logical X and Z commute"));
        }
        // independence: rank over GF(2) of the stabilizer rows
        let rank = gf2_rank(stabs.iter().map(|s| s.x.iter().chain(&s.z).copied().collect()).collect());
        if rank != n {
            return Err(Error::invalid(format!("stabilizer rank {rank} < {n}")));
        }
        Ok(())
    }
}

pub(crate) fn gf2_rank(mut rows: Vec<Vec<bool>>) -> usize {
    let mut rank = 0;
    let cols = rows.first().map_or(0, |r| r.len());
    for col in 0..cols {
        let Some(p) = (rank..rows.len()).find(|&i| rows[i][col]) else { continue };
        rows.swap(rank, p);
        for i in 0..rows.len() {
            if i != rank && rows[i][col] {
                let pivot = rows[rank].clone();
                for (a, b) in rows[i].iter_mut().zip(pivot) {
                    *a ^= b;
                }
            }
        }
        rank += 1;
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layouts_pass_self_test() {
        for d in (3..=MAX_DISTANCE).step_by(2) {
            let code = SurfaceCode::new(d).unwrap();
            code.self_test().unwrap();
            assert_eq!(code.n_data(), d * d);
            assert_eq!(code.n_stabilizers(), d * d - 1);
        }
    }

    #[test]
    fn rejects_even_and_oversized() {
        assert!(matches!(SurfaceCode::new(4), Err(Error::Invalid(_))));
        assert!(matches!(SurfaceCode::new(11), Err(Error::Capacity(_))));
    }

    #[test]
    fn boundary_types() {
        let code = SurfaceCode::new(5).unwrap();
        for p in &code.plaquettes {
            if p.support().len() == 2 {
                let top_bottom = p.row == -1 || p.row == 4;
                assert_eq!(p.kind == Basis::X, top_bottom);
            }
        }
    }
}
