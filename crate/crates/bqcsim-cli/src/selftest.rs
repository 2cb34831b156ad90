//! Quick invariant suite: every check is cheap enough to run on each build.

use crate::artifact::Meta;
use crate::commands::Ctx;
use bqcsim::analysis::blindness_suite;
use bqcsim::blindgate::{self, ErrorModel};
use bqcsim::netlink::{self, ClientOptions, NetProgram, Server, ServerOptions};
use bqcsim::resmodel::max_distance;
use bqcsim::stabqec::algebra::{self, AlgebraConfig};
use bqcsim::stabqec::gadget::gadget_statevec_check;
use bqcsim::stabqec::{exhaustive_single_faults, steane_blind_gates, SteaneGate};
use bqcsim::{rng, Error, Result};
use serde::Serialize;

#[derive(Serialize)]
struct Check {
    name: String,
    passed: bool,
    detail: String,
}

fn check(out: &mut Vec<Check>, name: &str, f: impl FnOnce() -> Result<(bool, String)>) {
    let (passed, detail) = match f() {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    println!("{} {name}: {detail}", if passed { "ok  " } else { "FAIL" });
    out.push(Check { name: name.into(), passed, detail });
}

fn attempts(c: u32, trials: u64, seed: u64) -> Result<(bool, String)> {
    let m = ErrorModel { c, eta: 1.0, ..ErrorModel::default() };
    let (mut cr, mut sr) = (rng::stream(seed, &[1, c as u64]), rng::stream(seed, &[2, c as u64]));
    let (mut s1, mut s2) = (0.0, 0.0);
    for k in 0..trials {
        let x = blindgate::run_b_gate(k % (1 << c), &m, &mut cr, &mut sr)?.photons_measured as f64;
        s1 += x;
        s2 += x * x;
    }
    let n = trials as f64;
    let mean = s1 / n;
    let se = ((s2 / n - mean * mean).max(0.0) / n).sqrt();
    let want = blindgate::mean_attempts(c);
    Ok(((mean - want).abs() <= 4.0 * se.max(1e-12), format!("mean {mean:.4} vs {want:.4} (se {se:.4})")))
}

fn loopback(seed: u64) -> Result<(bool, String)> {
    let model = ErrorModel { eta: 0.6, ..ErrorModel::default() };
    let server = Server::bind("127.0.0.1:0")?;
    let addr = server.local_addr()?;
    let m = model.clone();
    let n = 5u64;
    let h = std::thread::spawn(move || -> Result<Vec<netlink::ServerReport>> {
        (0..n).map(|_| server.serve_one(&m, &ServerOptions { seed, ..Default::default() })).collect()
    });
    let mut ok = true;
    for k in 0..n {
        let p = NetProgram::random(1 + k as usize % 3, 10, model.c, seed + k)?;
        let c = netlink::run_client(addr, &p, &model, &ClientOptions { seed: seed ^ 0xC, session: k, ..Default::default() })?;
        let want = netlink::simulate_in_process(&p, &model, seed ^ 0xC, seed, k)?;
        ok &= c.outcomes == want.outcomes && c.photons_sent == want.photons_sent && c.audit.clean();
        netlink::check_pairing(&c.transcript)?;
    }
    let servers = h.join().map_err(|_| Error::Protocol("server thread panicked".into()))??;
    for s in &servers {
        netlink::check_pairing(&s.transcript)?;
    }
    Ok((ok, format!("{n} sessions over loopback match the in-process run")))
}

pub fn run(ctx: &Ctx) -> Result<()> {
    let seed = ctx.seed;
    let trials = ctx.shots.unwrap_or(20_000);
    let mut out = Vec::new();
    for c in 1..=4 {
        check(&mut out, &format!("b_gate_measurements_c{c}"), || attempts(c, trials, seed));
    }
    check(&mut out, "n_fail_closed_form", || {
        let worst = [(2, 0.9), (4, 0.9), (4, 0.5), (6, 0.3)]
            .iter()
            .map(|&(n, eta)| (blindgate::n_fail(n, eta) / blindgate::n_fail_closed(n, eta) - 1.0).abs())
            .fold(0.0, f64::max);
        Ok((worst < 1e-9, format!("max relative gap {worst:.1e}")))
    });
    check(&mut out, "blindness_suite", || {
        let s = blindness_suite(seed)?;
        let worst = s.iter().map(|c| c.blind.distance).fold(0.0, f64::max);
        Ok((s.iter().all(|c| c.passes(0.05)), format!("{} constructions, worst averaged distance {worst:.1e}", s.len())))
    });
    for (name, g) in [("steane_s", SteaneGate::S), ("steane_h", SteaneGate::H), ("steane_cx", SteaneGate::Cx)] {
        check(&mut out, name, || {
            let r = steane_blind_gates(g)?;
            Ok((r.all_match(), format!("{} branches", r.branches.len())))
        });
    }
    check(&mut out, "t_gadget_branches", || {
        let r = gadget_statevec_check(seed)?;
        Ok((r.max_distance < 1e-10, format!("{} branches, max distance {:.1e}", r.branches, r.max_distance)))
    });
    check(&mut out, "single_faults_d3", || {
        let r = exhaustive_single_faults(3, 1)?;
        Ok((r.failures() == 0, format!("{} faults, {} failures", r.faults(), r.failures())))
    });
    check(&mut out, "algebra_round_trip", || {
        let cfg = AlgebraConfig { n_q: 4, n_layers: 10, n_rounds: 1, n_gpl: 6.0, r_h: 0.5 };
        let r = algebra::round_from_circuit(0.1, &cfg)?;
        let back = algebra::circuit_from_round(r, &cfg)?;
        let n = algebra::max_gates(0.5, 1e-4)?.unwrap_or(f64::NAN);
        Ok(((back - 0.1).abs() < 1e-12 && (n - 6931.0).abs() < 1.0, format!("round trip {:.1e}, N(0.5, 1e-4) = {n:.1}", (back - 0.1).abs())))
    });
    check(&mut out, "dark_count_distance", || {
        let l = max_distance(0.10, 2e-7, 0.885, 50.0)?.unwrap_or(f64::NAN);
        Ok(((l - 280.0).abs() <= 10.0, format!("{l:.1} km")))
    });
    check(&mut out, "netlink_loopback", || loopback(seed));
    let passed = out.iter().filter(|c| c.passed).count();
    let failed = out.len() - passed;
    println!("invariants: {passed} passed, {failed} failed");
    let eff = serde_json::json!({ "trials": trials });
    let meta = Meta::new("selftest", seed, &eff)?;
    let path = ctx.sink.json("selftest.json", &meta, &eff, &out)?;
    println!("wrote {}", path.display());
    if failed > 0 {
        return Err(Error::Protocol(format!("{failed} invariant checks failed")));
    }
    Ok(())
}
