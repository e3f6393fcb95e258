//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimators::{McSettings, Observable};
use crate::noise::NoiseModel;
use crate::quantum::{FrequencyUnits, HamiltonianParams, IntegratorSettings, LindbladParams, SweepProfile};
use crate::training::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every stage derives its streams from it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub hamiltonian: HamiltonianSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub generate: GenerateSection,
    #[serde(default)]
    pub lindblad: LindbladSection,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub models: ModelsSection,
    #[serde(default)]
    pub evaluate: EvaluateSection,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HamiltonianSection {
    pub n_sites: usize,
    pub v_nn: f64,
    /// Rabi frequency used in ground-state mode, MHz.
    pub omega: f64,
    pub interaction_cutoff: Option<usize>,
}

impl Default for HamiltonianSection {
    fn default() -> Self {
        HamiltonianSection {
            n_sites: 8,
            v_nn: 30.0,
            omega: 2.0,
            interaction_cutoff: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub total_time: f64,
    pub omega_peak: f64,
    pub delta_start: f64,
    pub delta_end: f64,
    pub checkpoints: usize,
    /// Explicit checkpoint times, overriding the even spacing.
    pub times: Option<Vec<f64>>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            total_time: 3.4,
            omega_peak: 2.0,
            delta_start: -10.0,
            delta_end: 10.0,
            checkpoints: 15,
            times: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerateMode {
    /// Ground states at the detuning of each checkpoint and fixed Rabi frequency.
    #[default]
    Ground,
    /// Disorder-averaged open-system evolution along the sweep.
    Lindblad,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSection {
    pub mode: GenerateMode,
    /// Ground-state mode only: explicit detunings instead of the sweep values.
    pub deltas: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LindbladSection {
    pub gamma_rg: f64,
    pub gamma_gg: f64,
    pub doppler_rms: f64,
    pub n_disorder: usize,
    pub steps: usize,
    pub pure_refine: usize,
    pub units: FrequencyUnits,
}

impl Default for LindbladSection {
    fn default() -> Self {
        let lp = LindbladParams::experimental();
        let is = IntegratorSettings::default();
        LindbladSection {
            gamma_rg: lp.gamma_rg,
            gamma_gg: lp.gamma_gg,
            doppler_rms: lp.doppler_rms,
            n_disorder: lp.n_disorder,
            steps: is.steps,
            pure_refine: is.pure_refine,
            units: is.units,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub n_samples: usize,
    /// Write dataset bodies as `.txt.gz`.
    pub gzip: bool,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            n_samples: 3000,
            gzip: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub p10: f64,
    pub p01: f64,
    /// Per-site rates; accepted only when uniform.
    pub p10_sites: Option<Vec<f64>>,
    pub p01_sites: Option<Vec<f64>>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        let nm = NoiseModel::experimental();
        NoiseSection {
            p10: nm.p10,
            p01: nm.p01,
            p10_sites: None,
            p01_sites: None,
        }
    }
}

/// Which models `train` fits at every checkpoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Two-layer RBM on the noise-free record.
    Clean,
    /// Two-layer RBM on the corrupted record.
    TwoLayer,
    /// Noise-layer RBM on the corrupted record.
    ThreeLayer,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Clean => "clean",
            Variant::TwoLayer => "two_layer",
            Variant::ThreeLayer => "three_layer",
        }
    }

    pub fn id(self) -> u64 {
        self as u64
    }

    pub fn uses_noisy_data(self) -> bool {
        self != Variant::Clean
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsSection {
    pub variants: Vec<Variant>,
}

impl Default for ModelsSection {
    fn default() -> Self {
        ModelsSection {
            variants: vec![Variant::Clean, Variant::TwoLayer, Variant::ThreeLayer],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub n_mc: usize,
    pub mc: McSettings,
    /// Observables to estimate; empty means the standard set
    /// (`zz_avg(1)`, `x_avg`, `xx_c` and `i2` at every bond).
    pub observables: Vec<Observable>,
    /// Bonds for the standard set; empty means all.
    pub bonds: Vec<usize>,
    /// Also report exact-enumeration values.
    pub exact: bool,
    /// Evaluate the frequency-table baseline next to each RBM.
    pub fd: bool,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection {
            n_mc: 100_000,
            mc: McSettings::default(),
            observables: Vec::new(),
            bonds: Vec::new(),
            exact: true,
            fd: true,
        }
    }
}

fn config_err(location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        location: location.into(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let location = match e.span() {
                Some(span) => {
                    let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
                    format!("{origin}:{line}")
                }
                None => origin.to_string(),
            };
            config_err(location, e.message().to_string())
        })?;
        cfg.validate(origin)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self, origin: &str) -> Result<()> {
        let at = |key: &str| format!("{origin}: {key}");
        let wrap = |key: &str, r: Result<()>| r.map_err(|e| config_err(at(key), e.to_string()));
        wrap("hamiltonian", self.hamiltonian_params(0.0).validate())?;
        wrap("sweep", self.sweep_profile().and_then(|s| s.validate()))?;
        wrap("lindblad", self.lindblad_params().validate())?;
        if self.lindblad.steps == 0 || self.lindblad.pure_refine == 0 {
            return Err(config_err(at("lindblad.steps"), "steps and pure_refine must be positive"));
        }
        if self.dataset.n_samples == 0 {
            return Err(config_err(at("dataset.n_samples"), "must be at least 1"));
        }
        wrap("noise", self.noise_model().map(|_| ()))?;
        wrap("train", self.train.validate())?;
        if self.train.noise.is_some() {
            return Err(config_err(at("train.noise"), "noise rates belong in the [noise] section"));
        }
        if self.train.seed != 0 {
            return Err(config_err(at("train.seed"), "training seeds derive from the top-level seed"));
        }
        if self.models.variants.is_empty() {
            return Err(config_err(at("models.variants"), "at least one model variant is needed"));
        }
        if self.evaluate.n_mc == 0 {
            return Err(config_err(at("evaluate.n_mc"), "must be at least 1"));
        }
        let n = self.hamiltonian.n_sites;
        if let Some(b) = self.evaluate.bonds.iter().find(|&&b| b == 0 || b >= n) {
            return Err(config_err(at("evaluate.bonds"), format!("bond {b} must lie in 1..{n}")));
        }
        if self.generate.mode == GenerateMode::Ground {
            if let Some(d) = &self.generate.deltas {
                if d.is_empty() || d.iter().any(|x| !x.is_finite()) {
                    return Err(config_err(at("generate.deltas"), "needs finite detunings"));
                }
            }
        } else if self.generate.deltas.is_some() {
            return Err(config_err(at("generate.deltas"), "only used in ground-state mode"));
        }
        Ok(())
    }

    /// Hamiltonian at detuning `delta` with the configured Rabi frequency.
    pub fn hamiltonian_params(&self, delta: f64) -> HamiltonianParams {
        let h = &self.hamiltonian;
        HamiltonianParams {
            n_sites: h.n_sites,
            v_nn: h.v_nn,
            omega: h.omega,
            delta,
            interaction_cutoff: h.interaction_cutoff,
        }
    }

    pub fn sweep_profile(&self) -> Result<SweepProfile> {
        let s = &self.sweep;
        let mut p = SweepProfile::trapezoid(s.total_time, s.omega_peak, s.delta_start, s.delta_end, s.checkpoints);
        if let Some(t) = &s.times {
            p.checkpoints = t.clone();
        }
        p.validate()?;
        Ok(p)
    }

    pub fn lindblad_params(&self) -> LindbladParams {
        LindbladParams {
            gamma_rg: self.lindblad.gamma_rg,
            gamma_gg: self.lindblad.gamma_gg,
            doppler_rms: self.lindblad.doppler_rms,
            n_disorder: self.lindblad.n_disorder,
        }
    }

    pub fn integrator(&self) -> IntegratorSettings {
        IntegratorSettings {
            steps: self.lindblad.steps,
            pure_refine: self.lindblad.pure_refine,
            units: self.lindblad.units,
            ..IntegratorSettings::default()
        }
    }

    pub fn noise_model(&self) -> Result<NoiseModel> {
        let ns = &self.noise;
        let uniform = |v: &Option<Vec<f64>>, scalar: f64, name: &str| -> Result<f64> {
            match v {
                None => Ok(scalar),
                Some(v) => {
                    if v.len() != self.hamiltonian.n_sites {
                        return Err(Error::argument(format!("{name} needs one rate per site")));
                    }
                    if v.iter().any(|&r| r != v[0]) {
                        return Err(Error::argument(format!("{name}: only uniform rates are supported")));
                    }
                    Ok(v[0])
                }
            }
        };
        NoiseModel::new(uniform(&ns.p10_sites, ns.p10, "p10_sites")?, uniform(&ns.p01_sites, ns.p01, "p01_sites")?)
    }

    /// SHA-256 of the canonical JSON form, excluding the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Observables evaluated for every model.
    pub fn observables(&self) -> Vec<Observable> {
        if !self.evaluate.observables.is_empty() {
            return self.evaluate.observables.clone();
        }
        let n = self.hamiltonian.n_sites;
        let bonds: Vec<usize> = if self.evaluate.bonds.is_empty() {
            (1..n).collect()
        } else {
            self.evaluate.bonds.clone()
        };
        let mut v = vec![Observable::ZzAvg { distance: 1 }, Observable::XAvg];
        v.extend(bonds.iter().map(|&b| Observable::XxConnected { bond: b - 1 }));
        v.extend(bonds.iter().map(|&b| Observable::MutualInformation { bond: b }));
        v
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::from_toml("", "<default>").expect("defaults are valid")
    }
}
