//! Threshold sweeps over distance and noise strength, and gate-level scaling checks.

use super::algebra::{gate_from_round, round_from_circuit, AlgebraConfig};
use super::builder::SeMode;
use super::logical::{run_logical_circuit, GateMix, LogicalRunConfig};
use crate::blindgate::ErrorModel;
use crate::error::{Error, Result};
use crate::rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// A ray through the (eps_comm, eps_loc) plane: `eps_comm = lambda * x`, `eps_loc = (1 - lambda) * x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub distances: Vec<usize>,
    /// Non-local fractions to sweep; 1 is the eps_comm axis, 0 the eps_loc axis.
    pub lambdas: Vec<f64>,
    /// Values of `x = eps_comm + eps_loc`, increasing.
    pub grid: Vec<f64>,
    pub r_h: f64,
    pub se_mode: SeMode,
    pub n_qubits: usize,
    pub n_layers: usize,
    pub n_rounds: usize,
    #[serde(default)]
    pub gates: GateMix,
    pub shots: u64,
    pub seed: u64,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
}

fn default_bootstrap() -> usize {
    500
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            distances: vec![3, 5],
            lambdas: vec![1.0],
            grid: vec![0.02, 0.03, 0.04, 0.05, 0.06],
            r_h: 1.0,
            se_mode: SeMode::Local,
            n_qubits: 2,
            n_layers: 4,
            n_rounds: 1,
            gates: GateMix::Full,
            shots: 10_000,
            seed: 1,
            bootstrap: 500,
        }
    }
}

impl ThresholdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.distances.len() < 2 {
            return Err(Error::invalid("threshold sweeps need at least two distances"));
        }
        if self.grid.len() < 2 || self.grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("grid must hold at least two increasing values"));
        }
        if self.lambdas.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(Error::invalid("lambda outside [0,1]"));
        }
        if self.grid.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::invalid("grid value outside [0,1]"));
        }
        if self.shots == 0 {
            return Err(Error::invalid("shots must be positive"));
        }
        Ok(())
    }

    fn run_config(&self, d: usize, lambda: f64, x: f64, seed: u64) -> LogicalRunConfig {
        LogicalRunConfig {
            n_qubits: self.n_qubits,
            n_layers: self.n_layers,
            n_rounds: self.n_rounds,
            d,
            r_h: self.r_h,
            model: ErrorModel { eps_comm: lambda * x, eps_loc: (1.0 - lambda) * x, r_h: self.r_h, ..ErrorModel::default() },
            se_mode: self.se_mode,
            seed,
            gates: self.gates,
            decoder: Default::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub d: usize,
    pub lambda: f64,
    pub x: f64,
    pub eps_loc: f64,
    pub eps_comm: f64,
    pub r_h: f64,
    pub se_mode: SeMode,
    pub shots: u64,
    pub failures: u64,
    pub p_l: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub lambda: f64,
    pub d_small: usize,
    pub d_large: usize,
    /// Crossing in `x`; `None` when the curves do not cross inside the grid.
    pub x: Option<f64>,
    pub eps_comm: Option<f64>,
    pub eps_loc: Option<f64>,
    /// 95% bootstrap interval of `x`.
    pub ci: Option<(f64, f64)>,
    /// Fraction of bootstrap replicas with a crossing.
    pub bootstrap_hit_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub config: ThresholdConfig,
    pub points: Vec<SweepPoint>,
    pub crossings: Vec<Crossing>,
}

/// First upward crossing of `large - small` through zero, by linear interpolation.
pub fn find_crossing(grid: &[f64], small: &[f64], large: &[f64]) -> Option<f64> {
    let diff: Vec<f64> = large.iter().zip(small).map(|(a, b)| a - b).collect();
    for i in 0..grid.len().saturating_sub(1) {
        let (a, b) = (diff[i], diff[i + 1]);
        if a < 0.0 && b >= 0.0 {
            return Some(grid[i] + (grid[i + 1] - grid[i]) * (-a) / (b - a));
        }
    }
    None
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Crossing with a parametric bootstrap over the binomial counts.
pub fn crossing_with_ci(
    grid: &[f64],
    small: &[(u64, u64)],
    large: &[(u64, u64)],
    replicas: usize,
    seed: u64,
) -> (Option<f64>, Option<(f64, f64)>, f64) {
    let rate = |v: &[(u64, u64)]| v.iter().map(|&(f, n)| f as f64 / n as f64).collect::<Vec<_>>();
    let x = find_crossing(grid, &rate(small), &rate(large));
    if replicas == 0 {
        return (x, None, 0.0);
    }
    let mut r = rng::stream(seed, &[0x424f_4f54]);
    let resample = |v: &[(u64, u64)], r: &mut rng::Rng| -> Vec<f64> {
        v.iter()
            .map(|&(f, n)| {
                let p = f as f64 / n as f64;
                Binomial::new(n, p).map_or(f, |b| b.sample(r)) as f64 / n as f64
            })
            .collect()
    };
    let mut xs = Vec::new();
    for _ in 0..replicas {
        let s = resample(small, &mut r);
        let l = resample(large, &mut r);
        if let Some(x) = find_crossing(grid, &s, &l) {
            xs.push(x);
        }
    }
    let hit = xs.len() as f64 / replicas as f64;
    if xs.len() < 2 {
        return (x, None, hit);
    }
    xs.sort_by(|a, b| a.total_cmp(b));
    (x, Some((percentile(&xs, 0.025), percentile(&xs, 0.975))), hit)
}

pub fn threshold_sweep(cfg: &ThresholdConfig) -> Result<ThresholdReport> {
    cfg.validate()?;
    let mut points = Vec::new();
    let mut crossings = Vec::new();
    let mut distances = cfg.distances.clone();
    distances.sort_unstable();
    for (li, &lambda) in cfg.lambdas.iter().enumerate() {
        let mut counts: Vec<Vec<(u64, u64)>> = Vec::new();
        for &d in &distances {
            let mut row = Vec::new();
            for (gi, &x) in cfg.grid.iter().enumerate() {
                let seed = rng::derive(cfg.seed, &[li as u64, d as u64, gi as u64]);
                let rc = cfg.run_config(d, lambda, x, seed);
                let r = run_logical_circuit(&rc, cfg.shots)?;
                row.push((r.failures, r.shots));
                points.push(SweepPoint {
                    d,
                    lambda,
                    x,
                    eps_loc: rc.model.eps_loc,
                    eps_comm: rc.model.eps_comm,
                    r_h: cfg.r_h,
                    se_mode: cfg.se_mode,
                    shots: r.shots,
                    failures: r.failures,
                    p_l: r.p_l,
                    stderr: r.stderr,
                });
            }
            counts.push(row);
        }
        for w in 0..distances.len() - 1 {
            let seed = rng::derive(cfg.seed, &[0x4349, li as u64, w as u64]);
            let (x, ci, hit) = crossing_with_ci(&cfg.grid, &counts[w], &counts[w + 1], cfg.bootstrap, seed);
            crossings.push(Crossing {
                lambda,
                d_small: distances[w],
                d_large: distances[w + 1],
                x,
                eps_comm: x.map(|x| lambda * x),
                eps_loc: x.map(|x| (1.0 - lambda) * x),
                ci,
                bootstrap_hit_rate: hit,
            });
        }
    }
    Ok(ThresholdReport { config: cfg.clone(), points, crossings })
}

impl ThresholdReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("d,eps_loc,eps_comm,r_h,se_mode,shots,p_l,stderr\n");
        for p in &self.points {
            let mode = match p.se_mode {
                SeMode::Local => "local",
                SeMode::Blind => "blind",
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                p.d, p.eps_loc, p.eps_comm, p.r_h, mode, p.shots, p.p_l, p.stderr
            );
        }
        s
    }

    /// The threshold boundary: one sample per swept direction and distance pair.
    pub fn boundary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "r_h": self.config.r_h,
            "se_mode": self.config.se_mode,
            "boundary": self.crossings,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub base: LogicalRunConfig,
    pub layer_counts: Vec<usize>,
    pub qubit_counts: Vec<usize>,
    /// Values of `eps_comm + eps_loc`.
    pub eps: Vec<f64>,
    /// Non-local fraction of the noise.
    pub lambda: f64,
    pub shots: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub n_qubits: usize,
    pub n_layers: usize,
    pub eps: f64,
    pub p_l: f64,
    pub p_l_stderr: f64,
    pub p_gate: f64,
    pub p_gate_stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub points: Vec<ScalingPoint>,
    /// Largest pairwise |difference| / combined stderr between layer counts at a fixed point.
    pub max_z: f64,
    pub consistent: bool,
    /// Weighted least-squares slope of p_gate against eps, with its standard error.
    pub slope: Option<(f64, f64)>,
}

fn p_gate_of(p_l: f64, cfg: &AlgebraConfig) -> Result<f64> {
    gate_from_round(round_from_circuit(p_l.min(super::algebra::p_max(cfg.n_q) * (1.0 - 1e-12)), cfg)?, cfg.n_gpl)
}

/// Weighted least-squares line through `(x, y, sigma)`; returns slope and its standard error.
pub fn weighted_slope(pts: &[(f64, f64, f64)]) -> Option<(f64, f64)> {
    let pts: Vec<_> = pts.iter().filter(|p| p.2 > 0.0).collect();
    if pts.len() < 2 {
        return None;
    }
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &&(x, y, s) in &pts {
        let w = 1.0 / (s * s);
        sw += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
    }
    let det = sw * sxx - sx * sx;
    if det <= 0.0 {
        return None;
    }
    Some(((sw * sxy - sx * sy) / det, (sw / det).sqrt()))
}

pub fn validate_gate_scaling(cfg: &ScalingConfig) -> Result<ScalingReport> {
    if cfg.layer_counts.len() < 2 {
        return Err(Error::invalid("need at least two layer counts"));
    }
    let mut points = Vec::new();
    for &nq in &cfg.qubit_counts {
        for (ei, &eps) in cfg.eps.iter().enumerate() {
            for &nl in &cfg.layer_counts {
                let mut rc = cfg.base.clone();
                rc.n_qubits = nq;
                rc.n_layers = nl;
                rc.model.eps_comm = cfg.lambda * eps;
                rc.model.eps_loc = (1.0 - cfg.lambda) * eps;
                rc.seed = rng::derive(cfg.base.seed, &[nq as u64, ei as u64, nl as u64]);
                let r = run_logical_circuit(&rc, cfg.shots)?;
                let ac = AlgebraConfig {
                    n_q: nq,
                    n_layers: nl,
                    n_rounds: rc.n_rounds,
                    n_gpl: rc.gates_per_layer().max(1) as f64,
                    r_h: rc.r_h,
                };
                let p_gate = p_gate_of(r.p_l, &ac)?;
                // delta method with a central difference
                let h = (r.stderr * 1e-3).max(1e-9);
                let lo = (r.p_l - h).max(0.0);
                let hi = r.p_l + h;
                let deriv = (p_gate_of(hi, &ac)? - p_gate_of(lo, &ac)?) / (hi - lo);
                points.push(ScalingPoint {
                    n_qubits: nq,
                    n_layers: nl,
                    eps,
                    p_l: r.p_l,
                    p_l_stderr: r.stderr,
                    p_gate,
                    p_gate_stderr: deriv.abs() * r.stderr,
                });
            }
        }
    }
    let mut max_z: f64 = 0.0;
    for a in &points {
        for b in &points {
            if a.n_qubits == b.n_qubits && a.eps == b.eps && a.n_layers < b.n_layers {
                let s = (a.p_gate_stderr.powi(2) + b.p_gate_stderr.powi(2)).sqrt();
                let z = if s > 0.0 { (a.p_gate - b.p_gate).abs() / s } else if a.p_gate == b.p_gate { 0.0 } else { f64::INFINITY };
                max_z = max_z.max(z);
            }
        }
    }
    let slope = weighted_slope(&points.iter().map(|p| (p.eps, p.p_gate, p.p_gate_stderr)).collect::<Vec<_>>());
    Ok(ScalingReport { points, max_z, consistent: max_z <= 3.0, slope })
}
