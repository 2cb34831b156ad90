//! Closed-form resource and timing model: dark-count errors, operating distance and
//! protocol duration.

use crate::blindgate::{mean_attempts, ErrorModel};
use crate::error::{Error, Result};
use crate::statevec::DensityMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Speed of light in fibre, m/s.
pub const C_FIBER: f64 = 2.0e8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformProfile {
    pub name: String,
    /// Seconds per photon emission attempt.
    pub tau_gen: f64,
    /// Seconds per local gate layer.
    pub tau_local: f64,
    /// Communication-qubit reinitialisation before each attempt, seconds.
    pub tau_init: f64,
    /// Shuttling time between zones (0 if none), seconds.
    pub tau_motion: f64,
    pub n_comm: u64,
    pub n_ch: u64,
    pub eta0: f64,
    /// Length over which the link loses a factor 10, km.
    pub attenuation_km: f64,
    pub distance_km: f64,
    /// Blind gates executed between frame synchronisations.
    pub batch: u64,
    #[serde(default = "default_c_fiber")]
    pub c_fiber: f64,
}

fn default_c_fiber() -> f64 {
    C_FIBER
}

impl PlatformProfile {
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "siv" => Ok(PlatformProfile {
                name: "siv".into(),
                tau_gen: 5e-9,
                tau_local: 20e-9,
                tau_init: 40e-9,
                tau_motion: 0.0,
                n_comm: 3000,
                n_ch: 10,
                eta0: 0.885,
                attenuation_km: 50.0,
                distance_km: 2.0,
                batch: 1000,
                c_fiber: C_FIBER,
            }),
            "neutral-atom" => Ok(PlatformProfile {
                name: "neutral-atom".into(),
                tau_gen: 100e-9,
                tau_local: 1e-3,
                tau_init: 0.0,
                tau_motion: 0.5e-3,
                n_comm: 100_000,
                n_ch: 1,
                eta0: 0.855,
                attenuation_km: 50.0,
                distance_km: 10.0,
                batch: 1000,
                c_fiber: C_FIBER,
            }),
            other => Err(Error::Config(format!("unknown platform preset {other:?}"))),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let p: PlatformProfile = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let p: PlatformProfile = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (k, v) in [
            ("tau_gen", self.tau_gen),
            ("tau_local", self.tau_local),
            ("tau_init", self.tau_init),
            ("tau_motion", self.tau_motion),
            ("eta0", self.eta0),
            ("attenuation_km", self.attenuation_km),
            ("distance_km", self.distance_km),
            ("c_fiber", self.c_fiber),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{k} = {v} must be finite and non-negative")));
            }
        }
        if self.n_comm == 0 || self.n_ch == 0 || self.batch == 0 {
            return Err(Error::Config("n_comm, n_ch and batch must be at least 1".into()));
        }
        if self.eta0 > 1.0 || self.eta0 == 0.0 {
            return Err(Error::Config(format!("eta0 = {} outside (0,1]", self.eta0)));
        }
        if self.attenuation_km == 0.0 || self.c_fiber == 0.0 {
            return Err(Error::Config("attenuation length and fibre speed must be positive".into()));
        }
        Ok(())
    }

    /// Link efficiency `eta0 10^(-L / attenuation)`.
    pub fn eta(&self) -> f64 {
        link_eta(self.eta0, self.attenuation_km, self.distance_km)
    }

    /// Round trip `2 L / c_fiber`.
    pub fn tau_comm(&self) -> f64 {
        2.0 * self.distance_km * 1e3 / self.c_fiber
    }
}

pub fn link_eta(eta0: f64, attenuation_km: f64, l_km: f64) -> f64 {
    eta0 * 10f64.powf(-l_km / attenuation_km)
}

// ---- dark counts -----------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DarkCountModel {
    pub p_dark: f64,
    pub eta: f64,
    pub eps_comm: f64,
}

impl DarkCountModel {
    pub fn validate(&self) -> Result<()> {
        for (k, v) in [("p_dark", self.p_dark), ("eta", self.eta), ("eps_comm", self.eps_comm)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{k} = {v} outside [0,1]")));
            }
        }
        if self.p_dark + self.eta == 0.0 {
            return Err(Error::invalid("p_dark and eta both zero: no click ever happens"));
        }
        Ok(())
    }

    /// Weight of the dark (fully dephasing) branch among clicks.
    pub fn dark_fraction(&self) -> f64 {
        self.p_dark / (self.p_dark + self.eta)
    }
}

impl From<&ErrorModel> for DarkCountModel {
    fn from(m: &ErrorModel) -> Self {
        DarkCountModel { p_dark: m.p_dark, eta: m.eta, eps_comm: m.eps_comm }
    }
}

pub fn effective_click_error(m: &DarkCountModel) -> Result<f64> {
    m.validate()?;
    let w = m.dark_fraction();
    Ok(w + m.eps_comm * (1.0 - w))
}

/// Mixture of full Z dephasing (dark click) and depolarizing with `eps_comm` (real click).
pub fn dark_count_channel(rho: &DensityMatrix, q: usize, m: &DarkCountModel) -> Result<DensityMatrix> {
    m.validate()?;
    let w = m.dark_fraction();
    let mut dark = rho.clone();
    dark.apply_dephasing(q, 1.0)?;
    let mut real = rho.clone();
    real.apply_depolarizing(&[q], m.eps_comm)?;
    let mut out = DensityMatrix::zeros(rho.n_qubits())?;
    out.add_scaled(&dark, w)?;
    out.add_scaled(&real, 1.0 - w)?;
    Ok(out)
}

/// Largest distance with `p_dark / (p_dark + eta(L)) < p_thresh`, by bisection to 0.1 km.
/// `None` when dark counts never reach the threshold (p_dark = 0).
pub fn max_distance(p_thresh: f64, p_dark: f64, eta0: f64, attenuation_km: f64) -> Result<Option<f64>> {
    if !(p_thresh > 0.0 && p_thresh < 1.0) {
        return Err(Error::invalid(format!("p_thresh = {p_thresh} outside (0,1)")));
    }
    if p_dark < 0.0 || eta0 <= 0.0 || attenuation_km <= 0.0 {
        return Err(Error::invalid("p_dark, eta0 and attenuation must be positive"));
    }
    if p_dark == 0.0 {
        return Ok(None);
    }
    let err = |l: f64| p_dark / (p_dark + link_eta(eta0, attenuation_km, l));
    if err(0.0) >= p_thresh {
        return Err(Error::invalid("threshold already violated at zero distance"));
    }
    let (mut lo, mut hi) = (0.0, attenuation_km);
    while err(hi) < p_thresh {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 0.1 {
        let mid = 0.5 * (lo + hi);
        if err(mid) < p_thresh {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

// ---- timing ------------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bottleneck {
    Generation,
    Latency,
    Local,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DurationBreakdown {
    pub total: f64,
    pub attempts: f64,
    /// Photon generation time if it were the only limit.
    pub generation: f64,
    /// Round-trip-limited time if latency were the only limit.
    pub latency: f64,
    /// Time spent on delegated gates, max(generation, latency).
    pub blind: f64,
    pub local: f64,
    pub sync: f64,
    pub dominant: Bottleneck,
}

/// Expected photon attempts for `gates` delegated rotations at link efficiency `eta`.
pub fn expected_attempts(gates: u64, eta: f64, c: u32) -> Result<f64> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::invalid(format!("eta = {eta} outside (0,1]")));
    }
    Ok(gates as f64 * mean_attempts(c) / eta)
}

/// Exact sampling of the attempts: each gate runs geometric teleport iterations capped at
/// c, and each iteration waits a geometric number of photons for a click.
pub fn sample_attempts<R: Rng + ?Sized>(gates: u64, eta: f64, c: u32, r: &mut R) -> Result<u64> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::invalid(format!("eta = {eta} outside (0,1]")));
    }
    let mut tot = 0;
    for _ in 0..gates {
        for it in 0..c {
            loop {
                tot += 1;
                if r.gen::<f64>() < eta {
                    break;
                }
            }
            if it + 1 == c || r.gen::<bool>() {
                break;
            }
        }
    }
    Ok(tot)
}

/// Fluid model: attempts are spread over `A / N_comm` communication rounds, each taking
/// the longer of sequential generation `tau_att N_comm / N_ch` and the round trip (or
/// shuttling time), so blind time = max(A tau_att / N_ch, A / N_comm * tau_round).
/// Each batch boundary after the first adds one round trip for the frame sync.
pub fn computation_duration(
    blind_gates: u64,
    local_layers: u64,
    p: &PlatformProfile,
    model: &ErrorModel,
) -> Result<DurationBreakdown> {
    p.validate()?;
    let local = local_layers as f64 * p.tau_local;
    if blind_gates == 0 {
        return Ok(DurationBreakdown {
            total: local,
            attempts: 0.0,
            generation: 0.0,
            latency: 0.0,
            blind: 0.0,
            local,
            sync: 0.0,
            dominant: Bottleneck::Local,
        });
    }
    let a = expected_attempts(blind_gates, p.eta(), model.c)?;
    let tau_att = p.tau_gen + p.tau_init;
    let tau_round = p.tau_comm().max(p.tau_motion);
    let generation = a * tau_att / p.n_ch as f64;
    let latency = a / p.n_comm as f64 * tau_round;
    let blind = generation.max(latency);
    let batches = blind_gates.div_ceil(p.batch);
    let sync = (batches - 1) as f64 * p.tau_comm();
    let dominant = if local >= blind {
        Bottleneck::Local
    } else if generation >= latency {
        Bottleneck::Generation
    } else {
        Bottleneck::Latency
    };
    Ok(DurationBreakdown { total: blind + local + sync, attempts: a, generation, latency, blind, local, sync, dominant })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::statevec::{Gate, StateVector};
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn click_error_cases() {
        let m = DarkCountModel { p_dark: 0.0, eta: 0.7, eps_comm: 0.03 };
        assert_eq!(effective_click_error(&m).unwrap(), 0.03);
        let m = DarkCountModel { p_dark: 2e-7, eta: 0.885, eps_comm: 0.0 };
        let p = effective_click_error(&m).unwrap();
        assert!((p - 2e-7 / (2e-7 + 0.885)).abs() < 1e-20);
        assert!((p - 2.2599e-7).abs() < 1e-11);
        let m = DarkCountModel { p_dark: 0.3, eta: 0.3, eps_comm: 0.0 };
        assert!((effective_click_error(&m).unwrap() - 0.5).abs() < 1e-15);
        assert!(effective_click_error(&DarkCountModel { p_dark: 0.0, eta: 0.0, eps_comm: 0.1 }).is_err());
    }

    #[test]
    fn max_distance_matches_closed_form() {
        // eta* = p_dark (1 - p) / p, L = 50 log10(eta0 / eta*)
        for (p, want) in [(0.10, 284.0), (0.04, 263.0)] {
            let l = max_distance(p, 2e-7, 0.885, 50.0).unwrap().unwrap();
            let eta_star = 2e-7 * (1.0 - p) / p;
            let exact = 50.0 * (0.885 / eta_star).log10();
            assert!((l - exact).abs() < 0.1, "{l} vs {exact}");
            assert!((l - want).abs() < 1.0, "{l}");
        }
        assert_eq!(max_distance(0.1, 0.0, 0.885, 50.0).unwrap(), None);
        assert!(max_distance(1e-8, 2e-7, 0.885, 50.0).is_err());
    }

    #[test]
    fn dark_channel_limits() {
        let mut r = rng::stream(1, &[]);
        let psi = StateVector::random(2, &mut r).unwrap();
        let rho = DensityMatrix::from_state(&psi).unwrap();
        let id = DarkCountModel { p_dark: 0.0, eta: 0.9, eps_comm: 0.0 };
        let out = dark_count_channel(&rho, 1, &id).unwrap();
        assert!(crate::statevec::trace_distance(&out, &rho).unwrap() < 1e-14);
        let full = DarkCountModel { p_dark: 1e-6, eta: 0.0, eps_comm: 0.2 };
        let out = dark_count_channel(&rho, 0, &full).unwrap();
        for r_ in 0..4 {
            for c_ in 0..4 {
                if (r_ & 1) != (c_ & 1) {
                    assert_eq!(out.get(r_, c_).norm(), 0.0);
                }
            }
        }
        assert!((out.trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dephasing_absorbs_prior_rotation() {
        let mut r = rng::stream(2, &[]);
        for _ in 0..10 {
            let psi = StateVector::random(1, &mut r).unwrap();
            let rho = DensityMatrix::from_state(&psi).unwrap();
            let phi = r.gen_range(-10.0..10.0);
            let mut a = rho.clone();
            a.apply(&Gate::Rz(phi), &[0]).unwrap();
            a.apply_dephasing(0, 1.0).unwrap();
            let mut b = rho.clone();
            b.apply_dephasing(0, 1.0).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    assert!((a.get(i, j) - b.get(i, j)).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn presets_and_config_loading() {
        let siv = PlatformProfile::preset("siv").unwrap();
        assert_eq!(siv.tau_local, 20e-9);
        let na = PlatformProfile::preset("neutral-atom").unwrap();
        assert_eq!(na.tau_motion, 0.5e-3);
        assert!(PlatformProfile::preset("trapped-ion").is_err());
        let text = toml::to_string(&siv).unwrap();
        assert_eq!(PlatformProfile::from_toml_str(&text).unwrap(), siv);
        let js = serde_json::to_string(&na).unwrap();
        assert_eq!(PlatformProfile::from_json_str(&js).unwrap(), na);
        let bad = text.replace("batch", "batchsize");
        assert!(matches!(PlatformProfile::from_toml_str(&bad), Err(Error::Config(_))));
        // shuttling dominates the round below c tau_motion / 2 = 50 km at c_fiber = 2e8
        let mut p = na.clone();
        p.distance_km = 40.0;
        assert!(p.tau_comm() < p.tau_motion);
    }

    #[test]
    fn duration_examples() {
        let m = ErrorModel::default();
        let p = PlatformProfile::preset("siv").unwrap();
        let d = computation_duration(0, 7, &p, &m).unwrap();
        assert_eq!(d.total, 7.0 * p.tau_local);
        // generation-limited floor
        let mut q = p.clone();
        q.n_comm = 1 << 40;
        q.distance_km = 0.0;
        let d = computation_duration(10_000, 5, &q, &m).unwrap();
        let floor = d.attempts * (q.tau_gen + q.tau_init) / q.n_ch as f64 + 5.0 * q.tau_local;
        assert!((d.total - floor).abs() < 1e-15);
        assert_eq!(d.dominant, Bottleneck::Generation);
        // latency-limited: doubling N_comm halves the blind portion
        let mut r = p.clone();
        r.n_comm = 10;
        r.distance_km = 20.0;
        let a = computation_duration(1000, 0, &r, &m).unwrap();
        r.n_comm = 20;
        let b = computation_duration(1000, 0, &r, &m).unwrap();
        assert_eq!(a.dominant, Bottleneck::Latency);
        assert!((a.blind / b.blind - 2.0).abs() < 0.02);
    }

    #[test]
    fn sampled_attempts_match_expectation() {
        let mut r = rng::stream(3, &[]);
        let n = 20_000;
        let s = sample_attempts(n, 0.5, 3, &mut r).unwrap() as f64;
        let e = expected_attempts(n, 0.5, 3).unwrap();
        assert!((s - e).abs() / e < 0.02, "{s} vs {e}");
    }

    fn arb_profile() -> impl Strategy<Value = PlatformProfile> {
        (1e-9..1e-6f64, 1e-9..1e-3f64, 0.0..1e-6f64, 0.0..1e-3f64, 1u64..5000, 1u64..20, 0.1..1.0f64, 0.0..100.0f64, 1u64..2000)
            .prop_map(|(g, l, i, m, nc, nch, e, dist, b)| PlatformProfile {
                name: "arb".into(),
                tau_gen: g,
                tau_local: l,
                tau_init: i,
                tau_motion: m,
                n_comm: nc,
                n_ch: nch,
                eta0: e,
                attenuation_km: 50.0,
                distance_km: dist,
                batch: b,
                c_fiber: C_FIBER,
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn duration_monotone(p in arb_profile(), gates in 1u64..100_000, layers in 0u64..1000) {
            let m = ErrorModel::default();
            let base = computation_duration(gates, layers, &p, &m).unwrap().total;
            let mut q = p.clone();
            q.n_comm *= 2;
            prop_assert!(computation_duration(gates, layers, &q, &m).unwrap().total <= base * (1.0 + 1e-12));
            let mut q = p.clone();
            q.n_ch += 1;
            prop_assert!(computation_duration(gates, layers, &q, &m).unwrap().total <= base * (1.0 + 1e-12));
            let mut q = p.clone();
            q.distance_km += 1.0;
            prop_assert!(computation_duration(gates, layers, &q, &m).unwrap().total >= base * (1.0 - 1e-12));
            prop_assert!(computation_duration(gates + 1, layers, &p, &m).unwrap().total >= base * (1.0 - 1e-12));
        }

        #[test]
        fn click_error_monotone(pd in 0.0..0.1f64, eta in 0.01..1.0f64, eps in 0.0..0.5f64, dp in 1e-6..0.1f64) {
            let a = effective_click_error(&DarkCountModel { p_dark: pd, eta, eps_comm: eps }).unwrap();
            let b = effective_click_error(&DarkCountModel { p_dark: pd + dp, eta, eps_comm: eps }).unwrap();
            prop_assert!(b >= a);
            let c = effective_click_error(&DarkCountModel { p_dark: pd, eta: (eta * 1.1).min(1.0), eps_comm: eps }).unwrap();
            prop_assert!(c <= a + 1e-15);
        }

        #[test]
        fn max_distance_monotone(p1 in 0.01..0.5f64, dp in 0.001..0.4f64) {
            let a = max_distance(p1, 2e-7, 0.885, 50.0).unwrap().unwrap();
            let b = max_distance(p1 + dp, 2e-7, 0.885, 50.0).unwrap().unwrap();
            prop_assert!(b >= a - 0.1);
        }
    }
}
