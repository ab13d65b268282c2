//! Experiment configuration in interface units (mm, deg, Hz, µT, nT).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use smol_core::model::{DampingLaw, MagnetSpec, OscillatorParams, SensorArray};
use smol_core::signal::{default_gradient, FilterChain, NoiseModel, NoiseTrace};
use smol_core::solver::{FitContext, SolverConfig};

use crate::campaigns::Campaign;
use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceConfig {
    pub f_res_hz: f64,
    pub theta_max_deg: f64,
    pub eta_per_s: f64,
    pub damping: DampingLaw,
    pub phi_deg: f64,
    pub l0_mm: f64,
    pub remanence_t: f64,
    /// Magnet volume; ignored when `cube_side_mm` is given.
    pub volume_mm3: f64,
    pub cube_side_mm: Option<f64>,
    /// Whether θ_max and η come from a calibration (always true for synthetic devices).
    pub calibrated: bool,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        let o = OscillatorParams::default();
        let m = MagnetSpec::default();
        Self {
            f_res_hz: o.f_res,
            theta_max_deg: o.theta_max.to_degrees(),
            eta_per_s: o.eta,
            damping: o.damping,
            phi_deg: 0.0,
            l0_mm: o.l0 * 1e3,
            remanence_t: m.remanence,
            volume_mm3: m.volume * 1e9,
            cube_side_mm: None,
            calibrated: true,
        }
    }
}

impl DeviceConfig {
    pub fn oscillator(&self) -> Result<OscillatorParams> {
        let p = OscillatorParams {
            f_res: self.f_res_hz,
            theta_max: self.theta_max_deg.to_radians(),
            eta: self.eta_per_s,
            phi: self.phi_deg.to_radians(),
            l0: self.l0_mm * 1e-3,
            damping: self.damping,
        };
        p.validate()
            .map_err(|e| LabError::field("device", e.to_string()))?;
        Ok(p)
    }

    pub fn magnet(&self) -> Result<MagnetSpec> {
        let volume = match self.cube_side_mm {
            Some(a) => (a * 1e-3).powi(3),
            None => self.volume_mm3 * 1e-9,
        };
        MagnetSpec::new(self.remanence_t, volume)
            .map_err(|e| LabError::field("device", e.to_string()))
    }

    pub fn from_params(o: &OscillatorParams, m: &MagnetSpec) -> Self {
        Self {
            f_res_hz: o.f_res,
            theta_max_deg: o.theta_max.to_degrees(),
            eta_per_s: o.eta,
            damping: o.damping,
            phi_deg: o.phi.to_degrees(),
            l0_mm: o.l0 * 1e3,
            remanence_t: m.remanence,
            volume_mm3: m.volume * 1e9,
            cube_side_mm: None,
            calibrated: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayConfig {
    /// JSON layout file; the built-in 3×3 grid when absent.
    pub layout: Option<PathBuf>,
}

impl ArrayConfig {
    pub fn load(&self, base: &Path) -> Result<SensorArray> {
        match &self.layout {
            None => Ok(SensorArray::default()),
            Some(p) => {
                let path = resolve(base, p);
                if !path.exists() {
                    return Err(LabError::field(
                        "array.layout",
                        format!("sensor layout file {} not found", path.display()),
                    ));
                }
                Ok(SensorArray::load(&path)?)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoisePreset {
    /// Mains amplitude calibrated to the reference raw SNR.
    #[default]
    Default,
    None,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub preset: NoisePreset,
    /// Overrides the calibrated mains amplitude.
    pub mains_nt: Option<f64>,
    pub white_nt: Option<f64>,
    /// Per-sensor common-mode gain offsets.
    pub gradient: Option<Vec<f64>>,
    /// Recorded common-mode noise (CSV: time_s then one column per direction).
    pub trace: Option<PathBuf>,
}

impl NoiseConfig {
    pub fn model(&self, array: &SensorArray, base: &Path) -> Result<NoiseModel> {
        let mut nm = match self.preset {
            NoisePreset::Default => NoiseModel {
                gradient: default_gradient(array),
                ..Default::default()
            },
            NoisePreset::None => NoiseModel::silent(),
        };
        if let Some(m) = self.mains_nt {
            let white = nm.white_sigma;
            nm = NoiseModel::with_mains(m * 1e-9, white, nm.gradient.clone());
        }
        if let Some(w) = self.white_nt {
            nm.white_sigma = w * 1e-9;
        }
        if let Some(g) = &self.gradient {
            nm.gradient = g.clone();
        }
        if let Some(p) = &self.trace {
            let path = resolve(base, p);
            nm.trace = Some(NoiseTrace::load(&path)?);
        }
        nm.validate()
            .map_err(|e| LabError::field("noise", e.to_string()))?;
        Ok(nm)
    }
}

pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn default_seed() -> u64 {
    1
}

fn default_repeats() -> usize {
    20
}

/// A campaign file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub scenario: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub device: DeviceConfig,
    #[serde(default)]
    pub array: ArrayConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub filter: FilterChain,
    #[serde(default)]
    pub solver: SolverConfig,
    pub campaign: Campaign,
}

impl ExperimentConfig {
    pub fn new(campaign: Campaign) -> Self {
        Self {
            scenario: String::new(),
            seed: default_seed(),
            repeats: default_repeats(),
            device: DeviceConfig::default(),
            array: ArrayConfig::default(),
            noise: NoiseConfig::default(),
            filter: FilterChain::default(),
            solver: SolverConfig::default(),
            campaign,
        }
    }

    /// Parses TOML or JSON depending on the extension (JSON for `.json`).
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let cfg: Self = if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"))
        {
            serde_json::from_str(text).map_err(|e| LabError::Config {
                path: path.display().to_string(),
                message: e.to_string(),
            })?
        } else {
            toml::from_str(text).map_err(|e| LabError::Config {
                path: path.display().to_string(),
                message: e.to_string(),
            })?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(LabError::field("repeats", "must be at least 1"));
        }
        self.device.oscillator()?;
        self.device.magnet()?;
        self.solver
            .validate()
            .map_err(|e| LabError::field("solver", e.to_string()))?;
        self.campaign.validate()
    }

    /// Resolves files relative to `base` and builds the simulation environment.
    pub fn environment(&self, base: &Path) -> Result<Environment> {
        let setup = Setup {
            device: self.device.clone(),
            array: self.array.clone(),
            noise: self.noise.clone(),
            filter: self.filter,
            solver: self.solver.clone(),
        };
        setup.environment(self.seed, self.repeats, base)
    }
}

/// The hardware and processing sections of a config, without a campaign.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Setup {
    pub device: DeviceConfig,
    pub array: ArrayConfig,
    pub noise: NoiseConfig,
    pub filter: FilterChain,
    pub solver: SolverConfig,
}

impl Setup {
    pub fn environment(&self, seed: u64, repeats: usize, base: &Path) -> Result<Environment> {
        self.solver
            .validate()
            .map_err(|e| LabError::field("solver", e.to_string()))?;
        let array = self.array.load(base)?;
        let noise = self.noise.model(&array, base)?;
        Ok(Environment {
            ctx: FitContext::new(
                self.device.oscillator()?,
                self.device.magnet()?,
                array,
                self.filter,
            ),
            noise,
            solver: self.solver.clone(),
            seed,
            repeats,
            base_dir: base.to_path_buf(),
        })
    }
}

/// Device, sensors, noise and solver settings shared by all trials of a campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub ctx: FitContext,
    pub noise: NoiseModel,
    pub solver: SolverConfig,
    pub seed: u64,
    pub repeats: usize,
    /// Directory that relative file names in the campaign resolve against.
    pub base_dir: PathBuf,
}

impl Environment {
    pub fn reference(seed: u64, repeats: usize) -> Self {
        let array = SensorArray::default();
        let noise = NoiseModel {
            gradient: default_gradient(&array),
            ..Default::default()
        };
        Self {
            ctx: FitContext::new(
                OscillatorParams::default(),
                MagnetSpec::default(),
                array,
                FilterChain::default(),
            ),
            noise,
            solver: SolverConfig::default(),
            seed,
            repeats,
            base_dir: PathBuf::from("."),
        }
    }

    pub fn noiseless(mut self) -> Self {
        self.noise = NoiseModel::silent();
        self
    }
}
