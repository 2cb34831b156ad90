//! The loss-tolerant delegated rotation `B = Z^s Rz(theta)`.
//!
//! Each attempt: the server emits a photon entangled with a communication qubit, the
//! client measures it at angle `2^j theta` (or it is lost), the server teleports the
//! rotation onto the computation qubit and reports `m`. `m = 1` leaves `Rz(-2^j theta)`
//! behind, which the next attempt at twice the angle undoes. Angles live on the grid
//! `2 pi p / 2^c`, so after `c` attempts the accumulated rotation is exact regardless.

use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

pub const MAX_RESOLUTION: u32 = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AngleSet {
    c: u32,
}

impl AngleSet {
    pub fn new(c: u32) -> Result<Self> {
        if c == 0 || c > MAX_RESOLUTION {
            return Err(Error::invalid(format!("angle resolution c = {c} outside 1..={MAX_RESOLUTION}")));
        }
        Ok(AngleSet { c })
    }

    pub fn c(&self) -> u32 {
        self.c
    }

    pub fn size(&self) -> u64 {
        1u64 << self.c
    }

    pub fn reduce(&self, p: i128) -> u64 {
        p.rem_euclid(self.size() as i128) as u64
    }

    pub fn angle(&self, p: u64) -> f64 {
        TAU * (p % self.size()) as f64 / self.size() as f64
    }

    pub fn double(&self, p: u64) -> u64 {
        self.reduce(2 * p as i128)
    }

    pub fn neg(&self, p: u64) -> u64 {
        self.reduce(-(p as i128))
    }

    /// Nearest grid member to `theta` and the absolute rounding error.
    pub fn nearest(&self, theta: f64) -> (u64, f64) {
        let x = theta / TAU * self.size() as f64;
        let p = self.reduce(x.round() as i128);
        let back = self.angle(p);
        let err = (theta - back).rem_euclid(TAU);
        (p, err.min(TAU - err))
    }

    /// Index of `theta` when it lies exactly on the grid.
    pub fn index_of(&self, theta: f64) -> Option<u64> {
        let (p, err) = self.nearest(theta);
        (err < 1e-9).then_some(p)
    }

    /// Whether the set contains a pi/4 rotation (needed for universality).
    pub fn is_universal(&self) -> bool {
        self.c >= 3
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ErrorModel {
    /// Depolarizing probability attached to each delegated rotation.
    pub eps_comm: f64,
    /// Two-qubit depolarizing probability attached to each local entangling gate.
    pub eps_loc: f64,
    /// Per-photon success probability.
    pub eta: f64,
    /// Dark-count probability per detection window.
    pub p_dark: f64,
    /// Fraction of hideable gates that are run blind.
    pub r_h: f64,
    pub c: u32,
}

impl Default for ErrorModel {
    fn default() -> Self {
        ErrorModel { eps_comm: 0.05, eps_loc: 0.005, eta: 0.8, p_dark: 0.0, r_h: 1.0, c: 3 }
    }
}

impl ErrorModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eps_comm", self.eps_comm),
            ("eps_loc", self.eps_loc),
            ("eta", self.eta),
            ("p_dark", self.p_dark),
            ("r_h", self.r_h),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} = {v} outside [0,1]")));
            }
        }
        AngleSet::new(self.c)?;
        Ok(())
    }

    /// Non-local fraction eps_comm / (eps_comm + eps_loc); 0 when both vanish.
    pub fn lambda(&self) -> f64 {
        let tot = self.eps_comm + self.eps_loc;
        if tot == 0.0 {
            0.0
        } else {
            self.eps_comm / tot
        }
    }

    pub fn angles(&self) -> Result<AngleSet> {
        AngleSet::new(self.c)
    }
}

/// Mean number of successful photon measurements per delegated rotation.
pub fn mean_attempts(c: u32) -> f64 {
    2.0 - 2f64.powi(1 - c as i32)
}

// ---- protocol state machine ------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    AwaitingPhoton,
    AwaitingClick,
    AwaitingTeleport,
    Done,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Event {
    PhotonSent,
    Lost,
    Click,
    Teleport { m: bool },
}

/// Public protocol state shared by both parties; holds no secrets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BGateProtocol {
    pub c: u32,
    pub iteration: u32,
    pub phase: Phase,
    pub photons_sent: u64,
    pub photons_measured: u64,
}

impl BGateProtocol {
    pub fn new(c: u32) -> Result<Self> {
        AngleSet::new(c)?;
        Ok(BGateProtocol { c, iteration: 0, phase: Phase::AwaitingPhoton, photons_sent: 0, photons_measured: 0 })
    }

    pub fn apply(&mut self, ev: Event) -> Result<Phase> {
        self.phase = match (self.phase, ev) {
            (Phase::AwaitingPhoton, Event::PhotonSent) => {
                self.photons_sent += 1;
                Phase::AwaitingClick
            }
            (Phase::AwaitingClick, Event::Lost) => Phase::AwaitingPhoton,
            (Phase::AwaitingClick, Event::Click) => {
                self.photons_measured += 1;
                Phase::AwaitingTeleport
            }
            (Phase::AwaitingTeleport, Event::Teleport { m }) => {
                if !m || self.iteration + 1 == self.c {
                    Phase::Done
                } else {
                    self.iteration += 1;
                    Phase::AwaitingPhoton
                }
            }
            (ph, ev) => return Err(Error::Protocol(format!("event {ev:?} not allowed in phase {ph:?}"))),
        };
        debug_assert!(self.iteration < self.c);
        Ok(self.phase)
    }
}

/// What the client's detector reports for one photon window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Detection {
    Lost,
    Click { s: bool, dark: bool },
}

/// Photon arrives with probability eta; otherwise a dark click fires with p_dark.
pub fn sample_detection<R: Rng + ?Sized>(model: &ErrorModel, rng: &mut R) -> Detection {
    if rng.gen::<f64>() < model.eta {
        Detection::Click { s: rng.gen(), dark: false }
    } else if model.p_dark > 0.0 && rng.gen::<f64>() < model.p_dark {
        Detection::Click { s: rng.gen(), dark: true }
    } else {
        Detection::Lost
    }
}

/// Client-side session: the protocol plus the secret angle and accumulated outcomes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BGateSession {
    pub proto: BGateProtocol,
    angles: AngleSet,
    target: u64,
    s: bool,
    implemented: u64,
    dark_clicks: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BGateOutcome {
    pub target: u64,
    pub implemented: u64,
    pub s: bool,
    pub photons_sent: u64,
    pub photons_measured: u64,
    pub iterations: u32,
    pub dark_clicks: u32,
}

impl BGateSession {
    pub fn new(target: u64, angles: AngleSet) -> Result<Self> {
        if target >= angles.size() {
            return Err(Error::invalid(format!("angle index {target} outside the {}-bit set", angles.c())));
        }
        Ok(BGateSession {
            proto: BGateProtocol::new(angles.c())?,
            angles,
            target,
            s: false,
            implemented: 0,
            dark_clicks: 0,
        })
    }

    /// Index of the angle the client measures at in the current attempt: 2^j p.
    pub fn measurement_index(&self) -> u64 {
        self.angles.reduce((self.target as i128) << self.proto.iteration)
    }

    pub fn photon_sent(&mut self) -> Result<()> {
        self.proto.apply(Event::PhotonSent).map(|_| ())
    }

    pub fn detection(&mut self, d: Detection) -> Result<()> {
        match d {
            Detection::Lost => self.proto.apply(Event::Lost)?,
            Detection::Click { s, dark } => {
                self.s ^= s;
                self.dark_clicks += dark as u32;
                self.proto.apply(Event::Click)?
            }
        };
        Ok(())
    }

    pub fn teleport(&mut self, m: bool) -> Result<Phase> {
        let phi = self.measurement_index() as i128;
        let step = if m { -phi } else { phi };
        self.implemented = self.angles.reduce(self.implemented as i128 + step);
        let ph = self.proto.apply(Event::Teleport { m })?;
        if ph == Phase::Done && self.dark_clicks == 0 {
            debug_assert_eq!(self.implemented, self.target);
        }
        Ok(ph)
    }

    pub fn is_done(&self) -> bool {
        self.proto.phase == Phase::Done
    }

    pub fn outcome(&self) -> BGateOutcome {
        BGateOutcome {
            target: self.target,
            implemented: self.implemented,
            s: self.s,
            photons_sent: self.proto.photons_sent,
            photons_measured: self.proto.photons_measured,
            iterations: self.proto.iteration + 1,
            dark_clicks: self.dark_clicks,
        }
    }
}

/// Run one delegated rotation in-process. The client stream drives loss, dark counts and
/// photon outcomes; the server stream drives the teleportation outcomes.
pub fn run_b_gate<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    target: u64,
    model: &ErrorModel,
    client_rng: &mut R1,
    server_rng: &mut R2,
) -> Result<BGateOutcome> {
    if model.eta <= 0.0 {
        return Err(Error::invalid("eta = 0: the protocol would never terminate"));
    }
    let mut sess = BGateSession::new(target, model.angles()?)?;
    loop {
        sess.photon_sent()?;
        let det = sample_detection(model, client_rng);
        sess.detection(det)?;
        if let Detection::Click { .. } = det {
            let m: bool = server_rng.gen();
            if sess.teleport(m)? == Phase::Done {
                return Ok(sess.outcome());
            }
        }
    }
}

// ---- photon budgets ----------------------------------------------------------------

/// Photons needed for N delegated rotations when the server has quantum memory.
pub fn expected_photons_memory(n_gates: u64, eta: f64, c: u32) -> Result<f64> {
    if eta <= 0.0 || eta > 1.0 {
        return Err(Error::invalid(format!("eta = {eta} outside (0,1]")));
    }
    Ok(n_gates as f64 * mean_attempts(c) / eta)
}

/// Mean length of a failed run of N sequential photons, from its defining sum.
pub fn n_fail(n: u64, eta: f64) -> f64 {
    let norm = 1.0 - eta.powi(n as i32);
    let sum: f64 = (1..=n).map(|k| eta.powi(k as i32 - 1) * (1.0 - eta) * k as f64).sum();
    sum / norm
}

/// Closed form of the defining sum.
pub fn n_fail_closed(n: u64, eta: f64) -> f64 {
    let en = eta.powi(n as i32);
    1.0 / (1.0 - eta) - n as f64 * en / (1.0 - en)
}

/// Photons needed when any loss forces a full restart (no memory): the solution of
/// N_g = eta^N N + (1 - eta^N)(N_g + N_fail).
pub fn expected_photons_memoryless(n: u64, eta: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("memoryless budget needs N >= 1"));
    }
    if eta <= 0.0 || eta >= 1.0 {
        return Err(Error::invalid(format!("eta = {eta} must lie strictly inside (0,1)")));
    }
    let en = eta.powi(n as i32);
    Ok(n as f64 + (1.0 - en) / en * n_fail(n, eta))
}

/// One memoryless run: photons emitted until N consecutive successes.
pub fn simulate_memoryless<R: Rng + ?Sized>(n: u64, eta: f64, rng: &mut R) -> u64 {
    let mut total = 0;
    loop {
        let mut k = 0;
        while k < n {
            total += 1;
            if rng.gen::<f64>() >= eta {
                break;
            }
            k += 1;
        }
        if k == n {
            return total;
        }
    }
}

pub fn circuit_efficiency(n_gamma: f64) -> Result<f64> {
    if n_gamma <= 0.0 {
        return Err(Error::invalid("photon count must be positive"));
    }
    Ok(1.0 / n_gamma)
}
