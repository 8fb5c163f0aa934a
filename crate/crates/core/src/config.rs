//! Run configuration: JSON documents with embedded presets, overridable
//! field by field. Unknown keys are rejected so that typos fail loudly
//! before any computation starts.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rates::{
    derive_rates, AtomEnsembleParams, ModelRates, NetworkGeometry, Preset, LAMBDA_CS_D2,
};
use crate::response::{Normalization, Port};

fn default_points() -> usize {
    600
}

fn default_sweep_min() -> f64 {
    -30.0
}

fn default_sweep_max() -> f64 {
    30.0
}

/// Detuning sweep section.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_sweep_min")]
    pub min: f64,
    #[serde(default = "default_sweep_max")]
    pub max: f64,
    #[serde(default = "default_points")]
    pub points: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            min: default_sweep_min(),
            max: default_sweep_max(),
            points: default_points(),
        }
    }
}

fn default_amplitude() -> f64 {
    1.0
}

/// Drive section: port plus either a direct amplitude (2π·MHz) or an
/// optical power (W) converted through the saturation normalization.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig {
    pub port: Port,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default)]
    pub power_w: Option<f64>,
}

impl Default for DriveConfig {
    fn default() -> Self {
        Self {
            port: Port::A,
            amplitude: default_amplitude(),
            power_w: None,
        }
    }
}

fn default_normalization() -> Normalization {
    Normalization::Flux
}

/// Output section.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub csv: Option<String>,
    #[serde(default = "default_normalization")]
    pub normalization: Normalization,
    #[serde(default)]
    pub plot_script: bool,
}

fn default_solver_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_solver_tol")]
    pub tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: default_solver_tol(),
        }
    }
}

/// Atom section: either effective couplings or full saturation data.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomsConfig {
    #[serde(default)]
    pub g_eff: Option<[f64; 2]>,
    #[serde(default)]
    pub n_sat: Option<[f64; 2]>,
    #[serde(default)]
    pub n_eff: Option<[f64; 2]>,
    #[serde(default)]
    pub empty: bool,
}

/// Top-level run configuration.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Embedded preset name (`fig2` or `fig3`); inline sections override
    /// its fields.
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub geometry: Option<NetworkGeometry>,
    /// Complete rate set taking precedence over preset/geometry-derived
    /// rates; the re-ingestion target for `derive-rates` output.
    #[serde(default)]
    pub rates_override: Option<ModelRates>,
    #[serde(default)]
    pub atoms: Option<AtomsConfig>,
    #[serde(default)]
    pub v_scaling: Option<f64>,
    #[serde(default)]
    pub gamma_par: Option<f64>,
    #[serde(default)]
    pub gamma_las: Option<f64>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub drive: Option<DriveConfig>,
    #[serde(default)]
    pub output: Option<OutputConfig>,
    #[serde(default)]
    pub solver: Option<SolverConfig>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    fn preset(&self) -> Result<Option<Preset>> {
        self.preset
            .as_deref()
            .map(|s| s.parse::<Preset>())
            .transpose()
    }

    /// Resolves the effective model rates: explicit override, else inline
    /// geometry, else preset table values — then applies v-scaling.
    pub fn resolve_rates(&self) -> Result<ModelRates> {
        let preset = self.preset()?;
        let base = if let Some(r) = &self.rates_override {
            r.validate()?;
            r.clone()
        } else if let Some(g) = &self.geometry {
            let gamma_par = self.gamma_par.unwrap_or(5.2);
            let gamma_las = self.gamma_las.unwrap_or(0.36);
            derive_rates(g, gamma_par, gamma_las)?
        } else if let Some(p) = preset {
            p.rates()
        } else {
            return Err(Error::Config(
                "no rate source: provide preset, geometry, or rates_override".into(),
            ));
        };
        let scaling = self
            .v_scaling
            .or_else(|| preset.map(|p| p.v_scaling()))
            .unwrap_or(1.0);
        base.with_v_scaling(scaling)
    }

    /// Resolves the atomic ensembles, defaulting to the preset loading.
    pub fn resolve_atoms(&self, rates: &ModelRates) -> Result<AtomEnsembleParams> {
        let preset = self.preset()?;
        if let Some(a) = &self.atoms {
            if a.empty {
                if a.g_eff.is_some() || a.n_sat.is_some() || a.n_eff.is_some() {
                    return Err(Error::Config(
                        "atoms.empty conflicts with explicit atom parameters".into(),
                    ));
                }
                return Ok(AtomEnsembleParams::empty());
            }
            if let (Some(ns), Some(ne)) = (a.n_sat, a.n_eff) {
                let atoms = AtomEnsembleParams::from_saturation(ns[0], ne[0], ns[1], ne[1], rates)?;
                atoms.validate(rates)?;
                return Ok(atoms);
            }
            if let Some(g) = a.g_eff {
                let atoms = AtomEnsembleParams::from_g_eff(g[0], g[1]);
                atoms.validate(rates)?;
                return Ok(atoms);
            }
            return Err(Error::Config(
                "atoms section needs g_eff, n_sat + n_eff, or empty".into(),
            ));
        }
        match preset {
            Some(p) => Ok(p.atoms()),
            None => Err(Error::Config("no atom source: provide atoms or preset".into())),
        }
    }

    pub fn sweep(&self) -> SweepConfig {
        self.sweep.clone().unwrap_or_default()
    }

    pub fn drive(&self) -> DriveConfig {
        self.drive.clone().unwrap_or_default()
    }

    pub fn output(&self) -> OutputConfig {
        self.output.clone().unwrap_or_default()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda.unwrap_or(LAMBDA_CS_D2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_round_trip() {
        let cfg = RunConfig::from_json(r#"{"preset": "fig2"}"#).unwrap();
        let rates = cfg.resolve_rates().unwrap();
        let expect = Preset::Fig2.rates().with_v_scaling(1.075).unwrap();
        assert_eq!(rates.v1, expect.v1);
        let atoms = cfg.resolve_atoms(&rates).unwrap();
        assert_eq!(atoms.g_eff_1, 5.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            RunConfig::from_json(r#"{"preset": "fig2", "bogus": 1}"#),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            RunConfig::from_json(r#"{"sweep": {"min": -10, "maximum": 10}}"#),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn rates_override_takes_precedence() {
        let mut r = Preset::Fig3.rates();
        r.v1 = 3.21;
        let json = format!(
            r#"{{"preset": "fig2", "rates_override": {}, "v_scaling": 1.0}}"#,
            serde_json::to_string(&r).unwrap()
        );
        let cfg = RunConfig::from_json(&json).unwrap();
        assert_eq!(cfg.resolve_rates().unwrap().v1, 3.21);
    }

    #[test]
    fn inline_geometry_derives_rates() {
        let cfg = RunConfig::from_json(
            r#"{"geometry": {"l1": 0.92, "l2": 1.40, "lf": 1.38,
                 "r1": 0.85, "r2": 0.57, "r3": 0.72, "r4": 0.85,
                 "alpha1": 0.02, "alpha2": 0.02, "alphaf": 0.02},
                "v_scaling": 1.0}"#,
        )
        .unwrap();
        let rates = cfg.resolve_rates().unwrap();
        assert!(rates.v1 > 0.0 && rates.kappa_1l > 0.0);
    }

    #[test]
    fn invalid_geometry_reports_field() {
        let cfg = RunConfig::from_json(
            r#"{"geometry": {"l1": 0.92, "l2": 1.40, "lf": 1.38,
                 "r1": 0.85, "r2": 1.2, "r3": 0.72, "r4": 0.85,
                 "alpha1": 0.0, "alpha2": 0.0, "alphaf": 0.0}}"#,
        )
        .unwrap();
        let err = cfg.resolve_rates().unwrap_err();
        assert!(err.to_string().contains("r2"), "{err}");
    }

    #[test]
    fn empty_atoms() {
        let cfg = RunConfig::from_json(r#"{"preset": "fig2", "atoms": {"empty": true}}"#).unwrap();
        let rates = cfg.resolve_rates().unwrap();
        let atoms = cfg.resolve_atoms(&rates).unwrap();
        assert_eq!(atoms.g_eff_1, 0.0);
        assert_eq!(atoms.g_eff_2, 0.0);
    }

    #[test]
    fn saturation_atoms_from_config() {
        let cfg = RunConfig::from_json(
            r#"{"preset": "fig3", "atoms": {"n_sat": [40, 20], "n_eff": [370, 250]}}"#,
        )
        .unwrap();
        let rates = cfg.resolve_rates().unwrap();
        let atoms = cfg.resolve_atoms(&rates).unwrap();
        assert!((atoms.g_eff_1 - 6.0).abs() < 0.3);
        assert!((atoms.g_eff_2 - 7.0).abs() < 0.3);
    }
}
