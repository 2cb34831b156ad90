//! Run configuration documents. Every section is optional; command-line flags win over the
//! file, and the file wins over built-in defaults. Unknown keys are rejected.

use bqcsim::analysis::{AngleDistribution, NoiseMode};
use bqcsim::blindgate::ErrorModel;
use bqcsim::resmodel::PlatformProfile;
use bqcsim::stabqec::{DecoderKind, GateMix, SeMode};
use bqcsim::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub shots: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub model: Option<ErrorModel>,
    pub platform: Option<PlatformSection>,
    pub tradeoff: Option<TradeoffSection>,
    pub express: Option<ExpressSection>,
    pub qec: Option<QecSection>,
    pub threshold: Option<ThresholdSection>,
    pub ceiling: Option<CeilingSection>,
    pub timing: Option<TimingSection>,
    pub darkcount: Option<DarkCountSection>,
    pub net: Option<NetSection>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlatformSection {
    Preset {
        preset: String,
        #[serde(default)]
        distance_km: Option<f64>,
    },
    Full(PlatformProfile),
}

impl PlatformSection {
    pub fn resolve(&self) -> Result<PlatformProfile> {
        match self {
            PlatformSection::Preset { preset, distance_km } => {
                let mut p = PlatformProfile::preset(preset)?;
                if let Some(l) = distance_km {
                    p.distance_km = *l;
                }
                p.validate()?;
                Ok(p)
            }
            PlatformSection::Full(p) => {
                p.validate()?;
                Ok(p.clone())
            }
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TradeoffSection {
    pub n: Option<usize>,
    pub depth: Option<usize>,
    pub r_h: Option<Vec<f64>>,
    pub mode: Option<NoiseMode>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpressSection {
    pub n: Option<usize>,
    pub depths_a: Option<Vec<usize>>,
    pub depths_b: Option<Vec<usize>>,
    pub k: Option<u32>,
    pub c: Option<u32>,
    pub structure_seed: Option<u64>,
    pub angles: Option<AngleDistribution>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QecSection {
    pub d: Option<usize>,
    pub n_qubits: Option<usize>,
    pub n_layers: Option<usize>,
    pub n_rounds: Option<usize>,
    pub r_h: Option<f64>,
    pub se_mode: Option<SeMode>,
    pub gates: Option<GateMix>,
    pub decoder: Option<DecoderKind>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSection {
    pub distances: Option<Vec<usize>>,
    pub lambdas: Option<Vec<f64>>,
    pub grid: Option<Vec<f64>>,
    pub r_h: Option<f64>,
    pub se_mode: Option<SeMode>,
    pub n_qubits: Option<usize>,
    pub n_layers: Option<usize>,
    pub n_rounds: Option<usize>,
    pub gates: Option<GateMix>,
    pub bootstrap: Option<usize>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CeilingSection {
    pub p_circuit: Option<f64>,
    pub p_gate: Option<f64>,
    pub n_q: Option<usize>,
    pub n_layers: Option<usize>,
    pub n_rounds: Option<usize>,
    pub n_gpl: Option<f64>,
    pub r_h: Option<f64>,
    pub fidelity: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingSection {
    pub blind_gates: Option<u64>,
    pub local_layers: Option<u64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DarkCountSection {
    pub p_thresh: Option<f64>,
    pub p_dark: Option<f64>,
    pub eta0: Option<f64>,
    pub attenuation_km: Option<f64>,
    pub distances_km: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSection {
    pub bind: Option<String>,
    pub connect: Option<String>,
    pub program: Option<PathBuf>,
    pub transcript: Option<PathBuf>,
    pub session: Option<u64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.extension().and_then(|e| e.to_str()) == Some("json"))
    }

    pub fn parse(text: &str, json: bool) -> Result<Self> {
        let cfg: RunConfig = if json {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        };
        if let Some(m) = &cfg.model {
            m.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        if let Some(p) = &cfg.platform {
            p.resolve().map_err(|e| Error::Config(e.to_string()))?;
        }
        if cfg.jobs == Some(0) {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        Ok(cfg)
    }
}
