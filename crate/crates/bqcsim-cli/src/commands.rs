//! One handler per subcommand. Each resolves its effective configuration (flag, then
//! config file, then default), runs the library operation and writes its artifacts.

use crate::artifact::{rows_to_csv, Meta, Sink};
use crate::config::RunConfig;
use crate::{Axis, Global};
use bqcsim::analysis::{self, AngleDistribution, Averaging, NoiseMode, PairingConfig, TradeoffConfig};
use bqcsim::blindgate::ErrorModel;
use bqcsim::circuitgen::CircuitIR;
use bqcsim::netlink::{self, ClientOptions, NetProgram, Server, ServerOptions};
use bqcsim::resmodel::{self, DarkCountModel, PlatformProfile};
use bqcsim::stabqec::algebra::{logical_error_algebra, max_gates, AlgebraConfig, AlgebraInput};
use bqcsim::stabqec::{self, DecoderKind, GateMix, LogicalRunConfig, SeMode, ThresholdConfig};
use bqcsim::{rng, Error, Result};
use clap::Args;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::Duration;

pub struct Ctx {
    pub shots: Option<u64>,
    pub seed: u64,
    pub sink: Sink,
    pub file: RunConfig,
}

impl Ctx {
    pub fn new(g: &Global, file: RunConfig) -> Result<Self> {
        let out = g.out.clone().or_else(|| file.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
        Ok(Ctx {
            shots: g.shots.or(file.shots),
            seed: g.seed.or(file.seed).unwrap_or(1),
            sink: Sink::new(&out)?,
            file,
        })
    }

    fn shots_or(&self, default: u64) -> Result<u64> {
        match self.shots.unwrap_or(default) {
            0 => Err(Error::Config("--shots must be positive".into())),
            s => Ok(s),
        }
    }

    fn model(&self) -> ErrorModel {
        self.file.model.clone().unwrap_or_default()
    }
}

fn say(path: &Path) {
    println!("wrote {}", path.display());
}

fn pick<T: Clone>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

// ---- tradeoff ----------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct TradeoffArgs {
    #[arg(long)]
    pub qubits: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    /// Hiding fractions to sweep.
    #[arg(long, value_delimiter = ',')]
    pub rh: Option<Vec<f64>>,
    #[arg(long, value_parser = parse_noise_mode)]
    pub mode: Option<NoiseMode>,
}

fn parse_noise_mode(s: &str) -> std::result::Result<NoiseMode, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown mode {s:?} (exact, trajectory, auto)"))
}

/// Columns: r_h, fidelity, fidelity_stderr, efficiency, log2_unitaries, lower_bound, shots, seed.
pub fn tradeoff(ctx: &Ctx, a: TradeoffArgs) -> Result<()> {
    let sec = ctx.file.tradeoff.clone().unwrap_or_default();
    let cfg = TradeoffConfig {
        n: pick(a.qubits, sec.n, 8),
        depth: pick(a.depth, sec.depth, 12),
        r_h: pick(a.rh, sec.r_h, vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]),
        model: ctx.model(),
        shots: ctx.shots_or(500)? as usize,
        seed: ctx.seed,
        mode: pick(a.mode, sec.mode, NoiseMode::Auto),
    };
    let rep = analysis::tradeoff_sweep(&cfg)?;
    let meta = Meta::new("tradeoff", ctx.seed, &cfg)?;
    say(&ctx.sink.csv("tradeoff.csv", &meta, &rep.to_csv())?);
    say(&ctx.sink.json("tradeoff.json", &meta, &cfg, &rep)?);
    Ok(())
}

// ---- express -----------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct ExpressArgs {
    #[arg(long)]
    pub qubits: Option<usize>,
    /// Bricklayer depths.
    #[arg(long, value_delimiter = ',')]
    pub depths_a: Option<Vec<usize>>,
    /// Pauli-rotation counts.
    #[arg(long, value_delimiter = ',')]
    pub depths_b: Option<Vec<usize>>,
    #[arg(long)]
    pub k: Option<u32>,
    #[arg(long)]
    pub c: Option<u32>,
    #[arg(long)]
    pub continuous: bool,
}

/// `--shots` is the number of sampled unitaries per depth point.
pub fn express(ctx: &Ctx, a: ExpressArgs) -> Result<()> {
    let sec = ctx.file.express.clone().unwrap_or_default();
    let d = PairingConfig::default();
    let cfg = PairingConfig {
        n: pick(a.qubits, sec.n, d.n),
        depths_a: pick(a.depths_a, sec.depths_a, d.depths_a),
        depths_b: pick(a.depths_b, sec.depths_b, d.depths_b),
        k: pick(a.k, sec.k, d.k),
        samples: ctx.shots_or(d.samples as u64)? as usize,
        c: pick(a.c, sec.c, d.c),
        seed: ctx.seed,
        structure_seed: sec.structure_seed.unwrap_or(d.structure_seed),
        angles: if a.continuous { AngleDistribution::Continuous } else { sec.angles.unwrap_or(d.angles) },
    };
    let rep = analysis::expressibility_pairing(&cfg)?;
    let meta = Meta::new("express", ctx.seed, &cfg)?;
    say(&ctx.sink.csv("express.csv", &meta, &rep.to_csv())?);
    say(&ctx.sink.json("express.json", &meta, &cfg, &rep)?);
    println!("pairing slope {:.4} ± {:.4} over {} pairs", rep.matched.slope, rep.matched.slope_stderr, rep.matched.pairs.len());
    Ok(())
}

// ---- qec-run -----------------------------------------------------------------------------

fn parse_json_enum<T: serde::de::DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|e| e.to_string())
}

#[derive(Args, Debug)]
pub struct QecRunArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub qubits: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub rh: Option<f64>,
    #[arg(long, value_parser = |s: &str| s.parse::<SeMode>().map_err(|e| e.to_string()))]
    pub se_mode: Option<SeMode>,
    /// full, single_qubit or memory.
    #[arg(long, value_parser = parse_json_enum::<GateMix>)]
    pub gates: Option<GateMix>,
    /// matching or mle.
    #[arg(long, value_parser = parse_json_enum::<DecoderKind>)]
    pub decoder: Option<DecoderKind>,
    #[arg(long)]
    pub eps_comm: Option<f64>,
    #[arg(long)]
    pub eps_loc: Option<f64>,
}

#[derive(Serialize)]
struct QecRunEffective<'a> {
    run: &'a LogicalRunConfig,
    shots: u64,
}

pub fn qec_run(ctx: &Ctx, a: QecRunArgs) -> Result<()> {
    let sec = ctx.file.qec.clone().unwrap_or_default();
    let d = LogicalRunConfig::default();
    let mut model = ctx.file.model.clone().unwrap_or(d.model.clone());
    if let Some(e) = a.eps_comm {
        model.eps_comm = e;
    }
    if let Some(e) = a.eps_loc {
        model.eps_loc = e;
    }
    model.validate().map_err(|e| Error::Config(e.to_string()))?;
    let r_h = pick(a.rh, sec.r_h, d.r_h);
    model.r_h = r_h;
    let cfg = LogicalRunConfig {
        n_qubits: pick(a.qubits, sec.n_qubits, d.n_qubits),
        n_layers: pick(a.layers, sec.n_layers, d.n_layers),
        n_rounds: pick(a.rounds, sec.n_rounds, d.n_rounds),
        d: pick(a.d, sec.d, d.d),
        r_h,
        model,
        se_mode: pick(a.se_mode, sec.se_mode, d.se_mode),
        seed: ctx.seed,
        gates: pick(a.gates, sec.gates, d.gates),
        decoder: pick(a.decoder, sec.decoder, d.decoder),
    };
    let shots = ctx.shots_or(10_000)?;
    let res = stabqec::run_logical_circuit(&cfg, shots)?;
    let eff = QecRunEffective { run: &cfg, shots };
    let meta = Meta::new("qec-run", ctx.seed, &eff)?;
    say(&ctx.sink.json("qec_run.json", &meta, &eff, &res)?);
    println!("p_L = {:.5} ± {:.5} ({} / {} shots)", res.p_l, res.stderr, res.failures, res.shots);
    Ok(())
}

// ---- qec-threshold -----------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct ThresholdArgs {
    /// Noise direction: eps_comm only, eps_loc only, or both axis intercepts.
    #[arg(long, value_enum)]
    pub axis: Option<Axis>,
    #[arg(long)]
    pub rh: Option<f64>,
    /// Code distances, smallest first.
    #[arg(long = "d", value_delimiter = ',')]
    pub distances: Option<Vec<usize>>,
    /// Values of eps_comm + eps_loc.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[arg(long, value_parser = |s: &str| s.parse::<SeMode>().map_err(|e| e.to_string()))]
    pub se_mode: Option<SeMode>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub qubits: Option<usize>,
    #[arg(long)]
    pub bootstrap: Option<usize>,
}

fn default_grid(lambdas: &[f64], r_h: f64, se: SeMode) -> Vec<f64> {
    let comm_only = lambdas.iter().all(|&l| l == 1.0);
    match (comm_only, se) {
        (true, SeMode::Local) if r_h < 0.5 => vec![0.06, 0.08, 0.10, 0.12, 0.14],
        (true, SeMode::Local) => vec![0.02, 0.03, 0.04, 0.05, 0.06],
        (false, SeMode::Local) => vec![0.006, 0.009, 0.012, 0.015, 0.018],
        (_, SeMode::Blind) => vec![0.004, 0.007, 0.010, 0.013, 0.016, 0.020],
    }
}

/// CSV columns: d, eps_loc, eps_comm, r_h, se_mode, shots, p_l, stderr.
pub fn qec_threshold(ctx: &Ctx, a: ThresholdArgs) -> Result<()> {
    let sec = ctx.file.threshold.clone().unwrap_or_default();
    let d = ThresholdConfig::default();
    let lambdas = match a.axis {
        Some(Axis::Comm) => vec![1.0],
        Some(Axis::Loc) => vec![0.0],
        Some(Axis::Both) => vec![1.0, 0.0],
        None => sec.lambdas.unwrap_or(d.lambdas),
    };
    let r_h = pick(a.rh, sec.r_h, d.r_h);
    let se_mode = pick(a.se_mode, sec.se_mode, d.se_mode);
    let grid = a.grid.or(sec.grid).unwrap_or_else(|| default_grid(&lambdas, r_h, se_mode));
    let cfg = ThresholdConfig {
        distances: pick(a.distances, sec.distances, d.distances),
        lambdas,
        grid,
        r_h,
        se_mode,
        n_qubits: pick(a.qubits, sec.n_qubits, d.n_qubits),
        n_layers: pick(a.layers, sec.n_layers, d.n_layers),
        n_rounds: sec.n_rounds.unwrap_or(d.n_rounds),
        gates: sec.gates.unwrap_or(d.gates),
        shots: ctx.shots_or(d.shots)?,
        seed: ctx.seed,
        bootstrap: pick(a.bootstrap, sec.bootstrap, d.bootstrap),
    };
    let rep = stabqec::threshold_sweep(&cfg)?;
    let meta = Meta::new("qec-threshold", ctx.seed, &cfg)?;
    say(&ctx.sink.csv("threshold.csv", &meta, &rep.to_csv())?);
    say(&ctx.sink.json("threshold.json", &meta, &cfg, &rep.boundary_json())?);
    for c in &rep.crossings {
        match c.x {
            Some(x) => println!("lambda {} d{}/d{}: crossing at {:.4}", c.lambda, c.d_small, c.d_large, x),
            None => println!("lambda {} d{}/d{}: no crossing in grid", c.lambda, c.d_small, c.d_large),
        }
    }
    Ok(())
}

// ---- gate-ceiling ------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct CeilingArgs {
    /// Circuit-level logical error rate.
    #[arg(long, conflicts_with = "p_gate")]
    pub p_circuit: Option<f64>,
    /// Per-logical-gate error rate.
    #[arg(long)]
    pub p_gate: Option<f64>,
    #[arg(long)]
    pub n_q: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Logical gates per layer; defaults to 1.5 n_q (a 1Q gate per block plus n_q/2 CX).
    #[arg(long)]
    pub n_gpl: Option<f64>,
    #[arg(long)]
    pub rh: Option<f64>,
    /// Target fidelity for the gate budget.
    #[arg(long)]
    pub fidelity: Option<f64>,
}

#[derive(Serialize)]
struct CeilingEffective {
    input: AlgebraInput,
    algebra: AlgebraConfig,
    fidelity: f64,
}

#[derive(Serialize)]
struct CeilingResult {
    algebra: stabqec::algebra::AlgebraReport,
    /// Gates executable before the fidelity target; `null` means unbounded.
    n_total: Option<f64>,
}

pub fn gate_ceiling(ctx: &Ctx, a: CeilingArgs) -> Result<()> {
    let sec = ctx.file.ceiling.clone().unwrap_or_default();
    let input = match (a.p_circuit, a.p_gate) {
        (Some(p), _) => AlgebraInput::Circuit(p),
        (None, Some(g)) => AlgebraInput::Gate(g),
        (None, None) => match (sec.p_circuit, sec.p_gate) {
            (Some(_), Some(_)) => return Err(Error::Config("set only one of ceiling.p_circuit and ceiling.p_gate".into())),
            (Some(p), None) => AlgebraInput::Circuit(p),
            (None, Some(g)) => AlgebraInput::Gate(g),
            (None, None) => AlgebraInput::Circuit(0.1),
        },
    };
    let n_q = pick(a.n_q, sec.n_q, 4);
    let algebra = AlgebraConfig {
        n_q,
        n_layers: pick(a.layers, sec.n_layers, 10),
        n_rounds: pick(a.rounds, sec.n_rounds, 1),
        n_gpl: pick(a.n_gpl, sec.n_gpl, 1.5 * n_q as f64),
        r_h: pick(a.rh, sec.r_h, 1.0),
    };
    let eff = CeilingEffective { input, algebra, fidelity: pick(a.fidelity, sec.fidelity, 0.5) };
    let rep = logical_error_algebra(input, &algebra)?;
    let res = CeilingResult { n_total: max_gates(eff.fidelity, rep.p_gate)?, algebra: rep };
    let meta = Meta::new("gate-ceiling", ctx.seed, &eff)?;
    say(&ctx.sink.json("gate_ceiling.json", &meta, &eff, &res)?);
    println!(
        "p_round {:.6e}, p_gate {:.6e}, gates to F={}: {}",
        res.algebra.p_round,
        res.algebra.p_gate,
        eff.fidelity,
        res.n_total.map_or("unbounded".to_string(), |n| format!("{n:.1}"))
    );
    Ok(())
}

// ---- timing ------------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct TimingArgs {
    /// Preset name (siv, neutral-atom) or a TOML/JSON profile file.
    #[arg(long)]
    pub platform: Option<String>,
    #[arg(long)]
    pub blind_gates: Option<u64>,
    #[arg(long)]
    pub local_layers: Option<u64>,
    #[arg(long)]
    pub distance_km: Option<f64>,
}

fn load_platform(spec: &str) -> Result<PlatformProfile> {
    let path = Path::new(spec);
    if !path.exists() {
        return PlatformProfile::preset(spec);
    }
    let text = std::fs::read_to_string(path)?;
    if path.extension().and_then(|e| e.to_str()) == Some("json") {
        PlatformProfile::from_json_str(&text)
    } else {
        PlatformProfile::from_toml_str(&text)
    }
}

#[derive(Serialize)]
struct TimingEffective {
    platform: PlatformProfile,
    model: ErrorModel,
    blind_gates: u64,
    local_layers: u64,
    sampled_gates: u64,
}

#[derive(Serialize)]
struct TimingResult {
    eta: f64,
    duration: resmodel::DurationBreakdown,
    expected_attempts_per_gate: f64,
    /// Exact per-gate attempt sampling over `sampled_gates` gates.
    sampled_attempts_per_gate: f64,
}

/// `--shots` is the number of gates whose photon attempts are sampled exactly.
pub fn timing(ctx: &Ctx, a: TimingArgs) -> Result<()> {
    let sec = ctx.file.timing.clone().unwrap_or_default();
    let mut platform = match (a.platform, &ctx.file.platform) {
        (Some(s), _) => load_platform(&s)?,
        (None, Some(p)) => p.resolve()?,
        (None, None) => PlatformProfile::preset("siv")?,
    };
    if let Some(l) = a.distance_km {
        platform.distance_km = l;
    }
    platform.validate()?;
    let eff = TimingEffective {
        platform,
        model: ctx.model(),
        blind_gates: pick(a.blind_gates, sec.blind_gates, 1_000_000),
        local_layers: pick(a.local_layers, sec.local_layers, 1000),
        sampled_gates: ctx.shots_or(10_000)?,
    };
    let duration = resmodel::computation_duration(eff.blind_gates, eff.local_layers, &eff.platform, &eff.model)?;
    let eta = eff.platform.eta();
    let mut r = rng::stream(ctx.seed, &[0x71]);
    let sampled = resmodel::sample_attempts(eff.sampled_gates, eta, eff.model.c, &mut r)?;
    let res = TimingResult {
        eta,
        duration,
        expected_attempts_per_gate: resmodel::expected_attempts(1, eta, eff.model.c)?,
        sampled_attempts_per_gate: sampled as f64 / eff.sampled_gates as f64,
    };
    let meta = Meta::new("timing", ctx.seed, &eff)?;
    say(&ctx.sink.json("timing.json", &meta, &eff, &res)?);
    println!("total {:.6e} s, dominated by {:?}", res.duration.total, res.duration.dominant);
    Ok(())
}

// ---- darkcount ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct DarkCountArgs {
    #[arg(long)]
    pub p_thresh: Option<f64>,
    #[arg(long)]
    pub p_dark: Option<f64>,
    #[arg(long)]
    pub eta0: Option<f64>,
    #[arg(long)]
    pub attenuation_km: Option<f64>,
    /// Distances for the CSV table, km.
    #[arg(long, value_delimiter = ',')]
    pub distances: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct DarkEffective {
    p_thresh: f64,
    p_dark: f64,
    eta0: f64,
    attenuation_km: f64,
    eps_comm: f64,
    distances_km: Vec<f64>,
}

#[derive(Serialize)]
struct DarkRow {
    distance_km: f64,
    eta: f64,
    dark_fraction: f64,
    effective_error: f64,
}

#[derive(Serialize)]
struct DarkResult {
    max_distance_km: Option<f64>,
    rows: Vec<DarkRow>,
}

/// CSV columns: distance_km, eta, dark_fraction, effective_error.
pub fn darkcount(ctx: &Ctx, a: DarkCountArgs) -> Result<()> {
    let sec = ctx.file.darkcount.clone().unwrap_or_default();
    let model = ctx.file.model.clone();
    let eff = DarkEffective {
        p_thresh: pick(a.p_thresh, sec.p_thresh, 0.10),
        p_dark: pick(a.p_dark, sec.p_dark, 2e-7),
        eta0: pick(a.eta0, sec.eta0, 0.885),
        attenuation_km: pick(a.attenuation_km, sec.attenuation_km, 50.0),
        eps_comm: model.map_or(0.0, |m| m.eps_comm),
        distances_km: pick(a.distances, sec.distances_km, (0..=20).map(|k| 20.0 * k as f64).collect()),
    };
    let mut rows = Vec::new();
    for &l in &eff.distances_km {
        let eta = resmodel::link_eta(eff.eta0, eff.attenuation_km, l);
        let m = DarkCountModel { p_dark: eff.p_dark, eta, eps_comm: eff.eps_comm };
        rows.push(DarkRow { distance_km: l, eta, dark_fraction: m.dark_fraction(), effective_error: resmodel::effective_click_error(&m)? });
    }
    let res = DarkResult { max_distance_km: resmodel::max_distance(eff.p_thresh, eff.p_dark, eff.eta0, eff.attenuation_km)?, rows };
    let meta = Meta::new("darkcount", ctx.seed, &eff)?;
    say(&ctx.sink.csv("darkcount.csv", &meta, &rows_to_csv(&res.rows)?)?);
    say(&ctx.sink.json("darkcount.json", &meta, &eff, &res)?);
    match res.max_distance_km {
        Some(l) => println!("max distance {l:.1} km"),
        None => println!("max distance unbounded (no dark counts)"),
    }
    Ok(())
}

// ---- verify-blindness --------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct BlindnessArgs {
    /// Circuit IR (JSON) to compare against `--b`; both must share their revealed structure.
    #[arg(long, requires = "b")]
    pub a: Option<PathBuf>,
    #[arg(long, requires = "a")]
    pub b: Option<PathBuf>,
}

#[derive(Serialize)]
struct BlindnessResult {
    suite: Vec<analysis::BlindnessCheck>,
    pair: Option<analysis::BlindnessReport>,
    passed: bool,
}

pub fn verify_blindness(ctx: &Ctx, a: BlindnessArgs) -> Result<()> {
    let suite = analysis::blindness_suite(ctx.seed)?;
    let pair = match (&a.a, &a.b) {
        (Some(pa), Some(pb)) => {
            let ca = CircuitIR::from_json(&std::fs::read_to_string(pa)?)?;
            let cb = CircuitIR::from_json(&std::fs::read_to_string(pb)?)?;
            Some(analysis::verify_blindness(&ca, &cb, Averaging::Enumerate, ctx.seed)?)
        }
        _ => None,
    };
    let passed = suite.iter().all(|c| c.passes(0.05)) && pair.as_ref().map_or(true, |p| p.is_blind());
    for c in &suite {
        println!("{:<24} blind {:.2e}  control {:.3}", c.name, c.blind.distance, c.control.distance);
    }
    if let Some(p) = &pair {
        println!("{:<24} blind {:.2e}", "input pair", p.distance);
    }
    let eff = serde_json::json!({ "a": a.a, "b": a.b });
    let res = BlindnessResult { suite, pair, passed };
    let meta = Meta::new("verify-blindness", ctx.seed, &eff)?;
    say(&ctx.sink.json("blindness.json", &meta, &eff, &res)?);
    if !passed {
        return Err(Error::Protocol("blindness check failed".into()));
    }
    Ok(())
}

// ---- serve / client ----------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long)]
    pub bind: Option<String>,
    /// NDJSON transcript; session k writes `<stem>.<k>.ndjson` when several are served.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
}

fn numbered(path: &Option<PathBuf>, k: u64, many: bool) -> Option<PathBuf> {
    let p = path.as_ref()?;
    if !many {
        return Some(p.clone());
    }
    let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("transcript");
    Some(p.with_file_name(format!("{stem}.{k}.ndjson")))
}

#[derive(Serialize)]
struct ServeSummary {
    session: u64,
    photons_sent: u64,
    photons_measured: u64,
    state_digest: String,
    transcript_hash: String,
}

/// `--shots` is the number of sessions to serve before exiting.
pub fn serve(ctx: &Ctx, a: ServeArgs) -> Result<()> {
    let net = ctx.file.net.clone().unwrap_or_default();
    let bind = pick(a.bind, net.bind, "127.0.0.1:7878".into());
    let transcript = a.transcript.or(net.transcript);
    let sessions = ctx.shots_or(1)?;
    let model = ctx.model();
    let server = Server::bind(bind.as_str())?;
    println!("listening on {}", server.local_addr()?);
    let mut out = Vec::new();
    for k in 0..sessions {
        let opts = ServerOptions { seed: ctx.seed, transcript: numbered(&transcript, k, sessions > 1), timeout: None };
        let r = server.serve_one(&model, &opts)?;
        println!("session {} done: {} photons, {} measured", r.session, r.photons_sent, r.photons_measured);
        out.push(ServeSummary {
            session: r.session,
            photons_sent: r.photons_sent,
            photons_measured: r.photons_measured,
            state_digest: r.state_digest,
            transcript_hash: r.transcript_hash,
        });
    }
    let eff = serde_json::json!({ "bind": bind, "model": model, "sessions": sessions });
    let meta = Meta::new("serve", ctx.seed, &eff)?;
    say(&ctx.sink.json("serve.json", &meta, &eff, &out)?);
    Ok(())
}

#[derive(Args, Debug)]
pub struct ClientArgs {
    #[arg(long)]
    pub connect: Option<String>,
    /// Program JSON `{circuit, measure}`; omit to draw a random program.
    #[arg(long)]
    pub program: Option<PathBuf>,
    /// Qubits of the random program.
    #[arg(long, default_value_t = 3)]
    pub qubits: usize,
    /// Gate entries of the random program.
    #[arg(long, default_value_t = 12)]
    pub gates: usize,
    /// First session id.
    #[arg(long)]
    pub session: Option<u64>,
    /// Artificial round trip before each click, milliseconds.
    #[arg(long, default_value_t = 0)]
    pub rtt_ms: u64,
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    /// Server seed, when known, to replay each session in process and compare.
    #[arg(long)]
    pub server_seed: Option<u64>,
}

#[derive(Serialize)]
struct ClientSummary {
    session: u64,
    outcomes: Vec<bool>,
    photons_sent: u64,
    photons_measured: u64,
    transcript_hash: String,
    audit: netlink::Audit,
    /// Whether the in-process reference loop reproduces the outcomes and photon counts.
    matches_in_process: Option<bool>,
}

/// `--shots` is the number of consecutive sessions.
pub fn client(ctx: &Ctx, a: ClientArgs) -> Result<()> {
    let net = ctx.file.net.clone().unwrap_or_default();
    let addr = pick(a.connect, net.connect, "127.0.0.1:7878".into());
    let program = match a.program.or(net.program) {
        Some(p) => serde_json::from_str::<NetProgram>(&std::fs::read_to_string(&p)?).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        None => NetProgram::random(a.qubits, a.gates, ctx.model().c, ctx.seed)?,
    };
    program.validate()?;
    let sessions = ctx.shots_or(1)?;
    let first = pick(a.session, net.session, 0);
    let transcript = a.transcript.or(net.transcript);
    let model = ctx.model();
    let mut out = Vec::new();
    for k in 0..sessions {
        let session = first + k;
        let opts = ClientOptions {
            seed: ctx.seed,
            session,
            timeout: None,
            rtt: Duration::from_millis(a.rtt_ms),
            transcript: numbered(&transcript, session, sessions > 1),
        };
        let r = netlink::run_client(addr.as_str(), &program, &model, &opts)?;
        netlink::check_pairing(&r.transcript)?;
        let matches_in_process = match a.server_seed {
            Some(ss) => {
                let want = netlink::simulate_in_process(&program, &model, ctx.seed, ss, session)?;
                Some(want.outcomes == r.outcomes && want.photons_sent == r.photons_sent && want.photons_measured == r.photons_measured)
            }
            None => None,
        };
        println!("session {session}: outcomes {:?}, {} photons", r.outcomes.iter().map(|&b| b as u8).collect::<Vec<_>>(), r.photons_sent);
        out.push(ClientSummary {
            session,
            outcomes: r.outcomes,
            photons_sent: r.photons_sent,
            photons_measured: r.photons_measured,
            transcript_hash: r.transcript_hash,
            audit: r.audit,
            matches_in_process,
        });
    }
    let eff = serde_json::json!({ "connect": addr, "program": program, "model": model, "sessions": sessions, "first_session": first });
    let meta = Meta::new("client", ctx.seed, &eff)?;
    say(&ctx.sink.json("client.json", &meta, &eff, &out)?);
    if out.iter().any(|s| s.matches_in_process == Some(false)) {
        return Err(Error::Protocol("session diverged from the in-process reference".into()));
    }
    if out.iter().any(|s| !s.audit.clean()) {
        return Err(Error::Protocol("client transcript leaked secret material".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PlatformSection;

    #[test]
    fn default_grids_bracket_expected_crossings() {
        assert!(default_grid(&[1.0], 1.0, SeMode::Local).contains(&0.04));
        assert!(default_grid(&[1.0], 0.05, SeMode::Local).contains(&0.10));
        assert!(default_grid(&[0.0], 1.0, SeMode::Local).contains(&0.012));
        assert_eq!(default_grid(&[1.0, 0.0], 1.0, SeMode::Blind)[0], 0.004);
    }

    #[test]
    fn numbered_transcripts() {
        let p = Some(PathBuf::from("/tmp/t.ndjson"));
        assert_eq!(numbered(&p, 3, true).unwrap(), PathBuf::from("/tmp/t.3.ndjson"));
        assert_eq!(numbered(&p, 3, false), p);
        assert_eq!(numbered(&None, 3, true), None);
    }

    #[test]
    fn platform_presets_resolve() {
        assert_eq!(load_platform("siv").unwrap().name, "siv");
        assert!(load_platform("nonexistent-platform").is_err());
        let sec = PlatformSection::Preset { preset: "neutral-atom".into(), distance_km: None };
        assert_eq!(sec.resolve().unwrap().n_ch, 1);
    }
}
