//! Conversions between circuit-, round- and gate-level logical error rates.
//!
//! A circuit of `n_layers * n_rounds` rounds on `n_q` logical qubits saturates at
//! `p_max = 1 - 2^-n_q`. Treating each round as an independent depolarizing step of strength
//! `p_round / p_max` on the logical register gives
//! `p_L = p_max * (1 - (1 - p_round / p_max)^(n_layers * n_rounds))`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgebraConfig {
    pub n_q: usize,
    pub n_layers: usize,
    pub n_rounds: usize,
    /// Logical gates per layer.
    pub n_gpl: f64,
    pub r_h: f64,
}

impl AlgebraConfig {
    fn validate(&self) -> Result<()> {
        if self.n_q == 0 || self.n_layers == 0 || self.n_rounds == 0 {
            return Err(Error::invalid("n_q, n_layers and n_rounds must be positive"));
        }
        if !(self.n_gpl > 0.0) {
            return Err(Error::invalid("n_gpl must be positive"));
        }
        if !(0.0..=1.0).contains(&self.r_h) {
            return Err(Error::invalid(format!("r_h = {} outside [0,1]", self.r_h)));
        }
        Ok(())
    }

    fn steps(&self) -> f64 {
        (self.n_layers * self.n_rounds) as f64
    }
}

pub fn p_max(n_q: usize) -> f64 {
    1.0 - 0.5f64.powi(n_q as i32)
}

fn check(p: f64, hi: f64, what: &str) -> Result<()> {
    if !(0.0..=hi).contains(&p) {
        return Err(Error::invalid(format!("{what} = {p} outside [0, {hi}]")));
    }
    Ok(())
}

/// Exact per-round error from a circuit error rate.
pub fn round_from_circuit(p_l: f64, cfg: &AlgebraConfig) -> Result<f64> {
    cfg.validate()?;
    let pm = p_max(cfg.n_q);
    check(p_l, pm, "p_L")?;
    Ok(pm * -(((1.0 - p_l / pm).ln() / cfg.steps()).exp_m1()))
}

pub fn round_from_circuit_approx(p_l: f64, cfg: &AlgebraConfig) -> f64 {
    p_l / cfg.steps()
}

pub fn circuit_from_round(p_round: f64, cfg: &AlgebraConfig) -> Result<f64> {
    cfg.validate()?;
    let pm = p_max(cfg.n_q);
    check(p_round, pm, "p_round")?;
    Ok(pm * -((cfg.steps() * (-p_round / pm).ln_1p()).exp_m1()))
}

/// `1 - (1 - p)^(1/k)`.
fn split(p: f64, k: f64) -> f64 {
    -((-p).ln_1p() / k).exp_m1()
}

/// `1 - (1 - p)^k`.
fn join(p: f64, k: f64) -> f64 {
    -((-p).ln_1p() * k).exp_m1()
}

pub fn gate_from_round(p_round: f64, n_gpl: f64) -> Result<f64> {
    check(p_round, 1.0, "p_round")?;
    Ok(split(p_round, n_gpl))
}

pub fn round_from_gate(p_gate: f64, n_gpl: f64) -> Result<f64> {
    check(p_gate, 1.0, "p_gate")?;
    Ok(join(p_gate, n_gpl))
}

/// Error per blind gate when only the `r_h` fraction of gates contributes.
pub fn blind_gate_from_round(p_round: f64, n_gpl: f64, r_h: f64) -> Result<f64> {
    check(p_round, 1.0, "p_round")?;
    if !(r_h > 0.0) {
        return Err(Error::invalid("r_h must be positive for a per-blind-gate rate"));
    }
    Ok(split(p_round, n_gpl * r_h))
}

pub fn round_from_blind_gate(p_blind: f64, n_gpl: f64, r_h: f64) -> Result<f64> {
    check(p_blind, 1.0, "p_blind_gate")?;
    if !(r_h > 0.0) {
        return Err(Error::invalid("r_h must be positive for a per-blind-gate rate"));
    }
    Ok(join(p_blind, n_gpl * r_h))
}

/// Exact circuit fidelity `1 - p_L` for a gate error rate.
pub fn fidelity_exact(p_gate: f64, cfg: &AlgebraConfig) -> Result<f64> {
    let p_round = round_from_gate(p_gate, cfg.n_gpl)?;
    Ok(1.0 - circuit_from_round(p_round.min(p_max(cfg.n_q)), cfg)?)
}

pub fn fidelity_approx(p_gate: f64, n_total: f64) -> f64 {
    ((-p_gate).ln_1p() * n_total).exp()
}

/// Gates executable before fidelity drops to `f`; `None` when unbounded (`p_gate = 0`).
pub fn max_gates(f: f64, p_gate: f64) -> Result<Option<f64>> {
    if !(f > 0.0 && f <= 1.0) {
        return Err(Error::invalid(format!("fidelity {f} outside (0, 1]")));
    }
    check(p_gate, 1.0, "p_gate")?;
    if p_gate == 0.0 {
        return Ok(None);
    }
    Ok(Some(f.ln() / (-p_gate).ln_1p()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "p")]
pub enum AlgebraInput {
    Circuit(f64),
    Gate(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgebraReport {
    pub config: AlgebraConfig,
    pub p_l: f64,
    pub p_max: f64,
    pub p_round: f64,
    pub p_round_approx: f64,
    pub p_gate: f64,
    pub p_blind_gate: Option<f64>,
    pub fidelity: f64,
    /// Gate budget at fidelity 1/2; `None` = unbounded.
    pub n_total_half: Option<f64>,
}

pub fn logical_error_algebra(input: AlgebraInput, cfg: &AlgebraConfig) -> Result<AlgebraReport> {
    cfg.validate()?;
    let (p_l, p_round, p_gate) = match input {
        AlgebraInput::Circuit(p_l) => {
            let r = round_from_circuit(p_l, cfg)?;
            (p_l, r, gate_from_round(r, cfg.n_gpl)?)
        }
        AlgebraInput::Gate(g) => {
            let r = round_from_gate(g, cfg.n_gpl)?;
            let pm = p_max(cfg.n_q);
            if r > pm {
                return Err(Error::invalid(format!("p_round = {r} exceeds p_max = {pm}")));
            }
            (circuit_from_round(r, cfg)?, r, g)
        }
    };
    Ok(AlgebraReport {
        config: *cfg,
        p_l,
        p_max: p_max(cfg.n_q),
        p_round,
        p_round_approx: round_from_circuit_approx(p_l, cfg),
        p_gate,
        p_blind_gate: if cfg.r_h > 0.0 { Some(blind_gate_from_round(p_round, cfg.n_gpl, cfg.r_h)?) } else { None },
        fidelity: 1.0 - p_l,
        n_total_half: max_gates(0.5, p_gate)?,
    })
}
