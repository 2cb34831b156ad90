use bqcsim::blindgate::{mean_attempts, ErrorModel};
use bqcsim::circuitgen::{CircuitIR, CliffordOp, GateEntry};
use bqcsim::netlink::*;
use std::net::SocketAddr;
use std::thread::{self, JoinHandle};
use std::time::Duration;

fn model(c: u32, eta: f64) -> ErrorModel {
    ErrorModel { c, eta, ..ErrorModel::default() }
}

/// Server thread answering `n` sessions in a row.
fn spawn_server(m: &ErrorModel, seed: u64, n: usize) -> (SocketAddr, JoinHandle<Vec<ServerReport>>) {
    let server = Server::bind("127.0.0.1:0").unwrap();
    let addr = server.local_addr().unwrap();
    let m = m.clone();
    let h = thread::spawn(move || {
        (0..n).map(|_| server.serve_one(&m, &ServerOptions { seed, ..Default::default() }).unwrap()).collect()
    });
    (addr, h)
}

fn client(addr: SocketAddr, p: &NetProgram, m: &ErrorModel, seed: u64, session: u64) -> ClientReport {
    run_client(addr, p, m, &ClientOptions { seed, session, ..Default::default() }).unwrap()
}

#[test]
fn hundred_random_programs_match_in_process() {
    let m = model(3, 0.7);
    let (addr, h) = spawn_server(&m, 99, 100);
    let mut clients = Vec::new();
    let mut progs = Vec::new();
    for k in 0..100u64 {
        let p = NetProgram::random(1 + (k % 4) as usize, 4 + (k % 17) as usize, 3, k).unwrap();
        clients.push(client(addr, &p, &m, 1000 + k, k));
        progs.push(p);
    }
    let servers = h.join().unwrap();
    for (k, ((p, c), s)) in progs.iter().zip(&clients).zip(&servers).enumerate() {
        let r = simulate_in_process(p, &m, 1000 + k as u64, 99, k as u64).unwrap();
        assert_eq!(c.outcomes, r.outcomes, "program {k}");
        assert_eq!(c.gates, r.gates, "program {k}");
        assert_eq!((s.photons_sent, s.photons_measured), (r.photons_sent, r.photons_measured));
        assert_eq!(s.state_digest, r.state_digest, "program {k}");
        check_pairing(&s.transcript).unwrap();
        check_pairing(&c.transcript).unwrap();
        assert!(c.audit.clean(), "{:?}", c.audit);
    }
}

#[test]
fn blind_pi_over_4_statistics() {
    // H, Rz(pi/4), H on |0>: P(0) = cos^2(pi/8)
    let mut ir = CircuitIR::new("x_meas", 1, 3);
    ir.gates = vec![GateEntry::clifford(CliffordOp::H, 0), GateEntry::btheta(0, 1), GateEntry::clifford(CliffordOp::H, 0)];
    let p = NetProgram { circuit: ir, measure: vec![0] };
    let m = model(3, 0.8);
    let n = 10_000;
    let (addr, h) = spawn_server(&m, 5, n);
    let zeros = (0..n as u64).filter(|&k| !client(addr, &p, &m, 6, k).outcomes[0]).count();
    h.join().unwrap();
    let want = (std::f64::consts::PI / 8.0).cos().powi(2);
    let sigma = (want * (1.0 - want) / n as f64).sqrt();
    let got = zeros as f64 / n as f64;
    assert!((got - want).abs() < 3.0 * sigma, "{got} vs {want}");
}

#[test]
fn photons_per_gate_follow_loss() {
    let c = 3;
    let mut ir = CircuitIR::new("many", 1, c);
    for k in 0..1000 {
        ir.gates.push(GateEntry::btheta(0, k % 8));
    }
    let p = NetProgram { circuit: ir, measure: vec![] };
    let m = model(c, 0.5);
    let (addr, h) = spawn_server(&m, 3, 1);
    let r = client(addr, &p, &m, 4, 0);
    h.join().unwrap();
    let per_gate = r.photons_sent as f64 / 1000.0;
    let want = mean_attempts(c) / 0.5;
    assert!((per_gate / want - 1.0).abs() < 0.05, "{per_gate} vs {want}");
}

fn kinds_for(angle: u64, seed: u64, session: u64, addr: SocketAddr, m: &ErrorModel) -> (Vec<String>, u64) {
    let mut ir = CircuitIR::new("secret", 2, 3);
    ir.gates = vec![
        GateEntry::clifford(CliffordOp::H, 0),
        GateEntry::btheta(0, angle),
        GateEntry::two(CliffordOp::Cz, 0, 1, None),
        GateEntry::btheta(1, (angle * 3) % 8),
    ];
    let c = client(addr, &NetProgram { circuit: ir, measure: vec![] }, m, seed, session);
    (kind_sequence(&c.transcript), c.photons_sent)
}

#[test]
fn server_view_does_not_depend_on_angles() {
    let m = model(3, 0.6);
    let (same, ind) = (200u64, 500u64);
    let (addr, h) = spawn_server(&m, 8, 2 * (same + ind) as usize);
    // same seeds: identical message-kind sequences
    for k in 0..same {
        assert_eq!(kinds_for(1, k, k, addr, &m).0, kinds_for(6, k, k, addr, &m).0);
    }
    // independent seeds: two-sample chi-square on photons per session
    let mut hist = [[0f64; 12]; 2];
    for k in 0..ind {
        let (_, a) = kinds_for(1, 10_000 + k, k, addr, &m);
        let (_, b) = kinds_for(6, 20_000 + k, k, addr, &m);
        hist[0][(a as usize).min(11)] += 1.0;
        hist[1][(b as usize).min(11)] += 1.0;
    }
    h.join().unwrap();
    let (ta, tb): (f64, f64) = (hist[0].iter().sum(), hist[1].iter().sum());
    let mut chi = 0.0;
    let mut dof = 0.0;
    for i in 0..12 {
        let tot = hist[0][i] + hist[1][i];
        if tot < 5.0 {
            continue;
        }
        for (j, t) in [ta, tb].into_iter().enumerate() {
            let e = tot * t / (ta + tb);
            chi += (hist[j][i] - e).powi(2) / e;
        }
        dof += 1.0;
    }
    dof -= 1.0;
    // Wilson-Hilferty upper 0.1% point
    let z = ((chi / dof).cbrt() - (1.0 - 2.0 / (9.0 * dof))) / (2.0 / (9.0 * dof)).sqrt();
    assert!(z < 3.09, "chi2 = {chi} on {dof} dof");
}

#[test]
fn rtt_bounds_gate_latency() {
    let rtt = Duration::from_millis(4);
    let mut ir = CircuitIR::new("slow", 1, 3);
    for k in 0..5 {
        ir.gates.push(GateEntry::btheta(0, k + 1));
    }
    let p = NetProgram { circuit: ir, measure: vec![] };
    let m = model(3, 0.9);
    let (addr, h) = spawn_server(&m, 1, 1);
    let r = run_client(addr, &p, &m, &ClientOptions { seed: 2, rtt, ..Default::default() }).unwrap();
    h.join().unwrap();
    let iterations: u64 = r.gates.iter().map(|g| g.iterations as u64).sum();
    assert!(r.elapsed_us >= rtt.as_micros() as u64 * iterations);
}

fn golden_program() -> NetProgram {
    let mut ir = CircuitIR::new("golden", 2, 3);
    ir.gates = vec![
        GateEntry::clifford(CliffordOp::H, 0),
        GateEntry::btheta(0, 3),
        GateEntry::two(CliffordOp::Cx, 0, 1, None),
        GateEntry::rotation(1, 2),
        GateEntry::btheta(1, 5),
        GateEntry::clifford(CliffordOp::H, 1),
    ];
    NetProgram { circuit: ir, measure: vec![0, 1] }
}

#[test]
fn golden_transcript() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/session_c3.ndjson");
    let m = model(3, 0.7);
    let (addr, h) = spawn_server(&m, 11, 1);
    let c = client(addr, &golden_program(), &m, 12, 42);
    let s = h.join().unwrap().pop().unwrap();
    let lines: Vec<&str> = s.transcript.iter().map(|e| e.line.as_str()).collect();
    let text = lines.join("\n") + "\n";
    if std::env::var("BQCSIM_BLESS").is_ok() {
        std::fs::write(path, &text).unwrap();
    }
    assert_eq!(text, std::fs::read_to_string(path).unwrap());
    let cl: Vec<&str> = c.transcript.iter().map(|e| e.line.as_str()).collect();
    assert_eq!(cl, lines);
    for l in lines {
        let env: Envelope = serde_json::from_str(l).unwrap();
        assert_eq!(serde_json::to_string(&env).unwrap(), l);
    }
}
