//! Physical network geometry and the model-level rates derived from it.
//!
//! Every rate is an angular frequency expressed in units of 2π·MHz (the
//! numeric value equals the linear frequency in MHz). SI conversion happens
//! only where photon energies enter (see [`crate::saturation::power_to_yb`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vacuum speed of light, m/s.
pub const C0: f64 = 2.997_924_58e8;

/// Planck constant, J·s (2019 SI exact value).
pub const H_PLANCK: f64 = 6.626_070_15e-34;

/// Cs D2 wavelength, m. Geometry default.
pub const LAMBDA_CS_D2: f64 = 852.3e-9;

/// Standard single-mode fiber group index near 852 nm. Geometry default.
pub const N_FIBER_DEFAULT: f64 = 1.467;

fn default_bs_tap() -> f64 {
    0.01
}
fn default_n_fiber() -> f64 {
    N_FIBER_DEFAULT
}
fn default_lambda() -> f64 {
    LAMBDA_CS_D2
}

/// Physical description of the three-cavity network: lengths, mirror
/// reflectances, single-pass losses, beamsplitter tap.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkGeometry {
    /// Cavity 1 length, m.
    pub l1: f64,
    /// Cavity 2 length, m.
    pub l2: f64,
    /// Link-fiber length, m.
    pub lf: f64,
    /// Mirror intensity reflectances, in [0,1). Mirrors 1..4 in series:
    /// 1 and 2 bound cavity 1, 3 and 4 bound cavity 2.
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r4: f64,
    /// Single-pass intensity loss fractions, in [0,1).
    #[serde(default)]
    pub alpha1: f64,
    #[serde(default)]
    pub alpha2: f64,
    #[serde(default)]
    pub alphaf: f64,
    /// Beamsplitter tap fraction (99/1 beamsplitter: 0.01).
    #[serde(default = "default_bs_tap")]
    pub bs_tap: f64,
    /// Fiber group index.
    #[serde(default = "default_n_fiber")]
    pub n_fiber: f64,
    /// Vacuum wavelength, m.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
}

impl NetworkGeometry {
    pub fn validate(&self) -> Result<()> {
        let lengths = [("l1", self.l1), ("l2", self.l2), ("lf", self.lf)];
        for (name, l) in lengths {
            if !(l > 0.0) {
                return Err(Error::InvalidGeometry(format!("{name} must be > 0, got {l}")));
            }
        }
        let fracs = [
            ("r1", self.r1),
            ("r2", self.r2),
            ("r3", self.r3),
            ("r4", self.r4),
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("alphaf", self.alphaf),
            ("bs_tap", self.bs_tap),
        ];
        for (name, x) in fracs {
            if !(0.0..1.0).contains(&x) {
                return Err(Error::InvalidGeometry(format!(
                    "{name} must be in [0,1), got {x}"
                )));
            }
        }
        if !(self.n_fiber >= 1.0) {
            return Err(Error::InvalidGeometry(format!(
                "n_fiber must be >= 1, got {}",
                self.n_fiber
            )));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "lambda must be > 0, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    /// Speed of light in the fiber, m/s.
    pub fn c_fiber(&self) -> f64 {
        C0 / self.n_fiber
    }

    /// Free spectral range of the link fiber, 2π·MHz.
    pub fn fsr_fiber(&self) -> f64 {
        rad_per_s_to_2pi_mhz(std::f64::consts::PI * self.c_fiber() / self.lf)
    }
}

/// rad/s → 2π·MHz.
pub fn rad_per_s_to_2pi_mhz(x: f64) -> f64 {
    x / (2.0 * std::f64::consts::PI * 1e6)
}

/// 2π·MHz → rad/s.
pub fn two_pi_mhz_to_rad_per_s(x: f64) -> f64 {
    x * 2.0 * std::f64::consts::PI * 1e6
}

/// All model-level field decay and coupling rates, 2π·MHz.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRates {
    /// Cavity 1 decay through mirror 1 (port A side).
    pub kappa_1l: f64,
    /// Cavity 1 decay through mirror 2 (fiber side; sets v1).
    pub kappa_1r: f64,
    /// Cavity 2 decay through mirror 3 (fiber side; sets v2).
    pub kappa_2l: f64,
    /// Cavity 2 decay through mirror 4 (port B side).
    pub kappa_2r: f64,
    pub kappa_1loss: f64,
    pub kappa_2loss: f64,
    /// Fiber decay through the beamsplitter tap (port C).
    pub kappa_b_bs: f64,
    pub kappa_b_loss: f64,
    /// Cavity-fiber coupling rates.
    pub v1: f64,
    pub v2: f64,
    /// Atomic free-space decay γ∥.
    pub gamma_par: f64,
    /// Laser linewidth (HWHM) γ_las.
    pub gamma_las: f64,
}

impl ModelRates {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("kappa_1l", self.kappa_1l),
            ("kappa_1r", self.kappa_1r),
            ("kappa_2l", self.kappa_2l),
            ("kappa_2r", self.kappa_2r),
            ("kappa_1loss", self.kappa_1loss),
            ("kappa_2loss", self.kappa_2loss),
            ("kappa_b_bs", self.kappa_b_bs),
            ("kappa_b_loss", self.kappa_b_loss),
            ("v1", self.v1),
            ("v2", self.v2),
            ("gamma_par", self.gamma_par),
            ("gamma_las", self.gamma_las),
        ];
        for (name, x) in all {
            if !(x >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {x}")));
            }
        }
        Ok(())
    }

    /// Total cavity-1 field decay κ₁ = κ₁l + κ₁,loss + γ_las.
    pub fn kappa_1(&self) -> f64 {
        self.kappa_1l + self.kappa_1loss + self.gamma_las
    }

    /// Total cavity-2 field decay κ₂ = κ₂r + κ₂,loss + γ_las.
    pub fn kappa_2(&self) -> f64 {
        self.kappa_2r + self.kappa_2loss + self.gamma_las
    }

    /// Total fiber field decay κ_b = κ_b,bs + κ_b,loss + γ_las.
    pub fn kappa_b(&self) -> f64 {
        self.kappa_b_bs + self.kappa_b_loss + self.gamma_las
    }

    /// Transverse atomic decay γ⊥ = γ∥/2 + γ_las.
    pub fn gamma_perp(&self) -> f64 {
        self.gamma_par / 2.0 + self.gamma_las
    }

    /// Returns a copy with v1, v2 multiplied by `factor`; everything else
    /// unchanged. Used to apply the paper-level single-mode corrections
    /// (1.075 / 1.055).
    pub fn with_v_scaling(&self, factor: f64) -> Result<ModelRates> {
        if !(factor > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "v scaling factor must be > 0, got {factor}"
            )));
        }
        let mut out = self.clone();
        out.v1 *= factor;
        out.v2 *= factor;
        Ok(out)
    }

    /// Flat key-value view, for the `derive-rates` CLI output and the
    /// `rates_override` config round-trip.
    pub fn to_flat_map(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("kappa_1l", self.kappa_1l),
            ("kappa_1r", self.kappa_1r),
            ("kappa_2l", self.kappa_2l),
            ("kappa_2r", self.kappa_2r),
            ("kappa_1loss", self.kappa_1loss),
            ("kappa_2loss", self.kappa_2loss),
            ("kappa_b_bs", self.kappa_b_bs),
            ("kappa_b_loss", self.kappa_b_loss),
            ("v1", self.v1),
            ("v2", self.v2),
            ("gamma_par", self.gamma_par),
            ("gamma_las", self.gamma_las),
            ("kappa_1", self.kappa_1()),
            ("kappa_2", self.kappa_2()),
            ("kappa_b", self.kappa_b()),
            ("gamma_perp", self.gamma_perp()),
        ]
    }
}

/// Atomic-ensemble parameters: collective couplings and saturation scales.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomEnsembleParams {
    /// Effective collective couplings g_eff = g₀·√N_eff, 2π·MHz.
    pub g_eff_1: f64,
    pub g_eff_2: f64,
    /// Maximum single-atom couplings, 2π·MHz.
    #[serde(default)]
    pub g0_1: Option<f64>,
    #[serde(default)]
    pub g0_2: Option<f64>,
    /// Effective atom numbers.
    #[serde(default)]
    pub n_eff_1: Option<f64>,
    #[serde(default)]
    pub n_eff_2: Option<f64>,
    /// Saturation photon numbers n_sat = γ⊥γ∥/(4g₀²).
    #[serde(default)]
    pub n_sat_1: Option<f64>,
    #[serde(default)]
    pub n_sat_2: Option<f64>,
}

impl AtomEnsembleParams {
    /// Empty cavities (no atoms coupled).
    pub fn empty() -> Self {
        Self::from_g_eff(0.0, 0.0)
    }

    pub fn from_g_eff(g_eff_1: f64, g_eff_2: f64) -> Self {
        AtomEnsembleParams {
            g_eff_1,
            g_eff_2,
            g0_1: None,
            g0_2: None,
            n_eff_1: None,
            n_eff_2: None,
            n_sat_1: None,
            n_sat_2: None,
        }
    }

    /// Builds the full parameter set from saturation photon numbers and
    /// effective atom numbers, deriving g₀ from n_sat = γ⊥γ∥/(4g₀²) and
    /// g_eff = g₀√N_eff.
    pub fn from_saturation(
        n_sat_1: f64,
        n_eff_1: f64,
        n_sat_2: f64,
        n_eff_2: f64,
        rates: &ModelRates,
    ) -> Result<Self> {
        for (name, x) in [
            ("n_sat_1", n_sat_1),
            ("n_eff_1", n_eff_1),
            ("n_sat_2", n_sat_2),
            ("n_eff_2", n_eff_2),
        ] {
            if !(x > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {x}")));
            }
        }
        let gp = rates.gamma_perp();
        let g0_1 = (gp * rates.gamma_par / (4.0 * n_sat_1)).sqrt();
        let g0_2 = (gp * rates.gamma_par / (4.0 * n_sat_2)).sqrt();
        Ok(AtomEnsembleParams {
            g_eff_1: g0_1 * n_eff_1.sqrt(),
            g_eff_2: g0_2 * n_eff_2.sqrt(),
            g0_1: Some(g0_1),
            g0_2: Some(g0_2),
            n_eff_1: Some(n_eff_1),
            n_eff_2: Some(n_eff_2),
            n_sat_1: Some(n_sat_1),
            n_sat_2: Some(n_sat_2),
        })
    }

    pub fn validate(&self, rates: &ModelRates) -> Result<()> {
        let opt = |x: Option<f64>| x.unwrap_or(0.0);
        for (name, x) in [
            ("g_eff_1", self.g_eff_1),
            ("g_eff_2", self.g_eff_2),
            ("g0_1", opt(self.g0_1)),
            ("g0_2", opt(self.g0_2)),
            ("n_eff_1", opt(self.n_eff_1)),
            ("n_eff_2", opt(self.n_eff_2)),
            ("n_sat_1", opt(self.n_sat_1)),
            ("n_sat_2", opt(self.n_sat_2)),
        ] {
            if !(x >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {x}")));
            }
        }
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
        for (g0, n_eff, g_eff, side) in [
            (self.g0_1, self.n_eff_1, self.g_eff_1, 1),
            (self.g0_2, self.n_eff_2, self.g_eff_2, 2),
        ] {
            if let (Some(g0), Some(n)) = (g0, n_eff) {
                if rel(g_eff, g0 * n.sqrt()) > 1e-12 {
                    return Err(Error::InvalidParameter(format!(
                        "g_eff_{side} inconsistent with g0*sqrt(N_eff)"
                    )));
                }
            }
        }
        let gp = rates.gamma_perp();
        for (g0, n_sat, side) in [(self.g0_1, self.n_sat_1, 1), (self.g0_2, self.n_sat_2, 2)] {
            if let (Some(g0), Some(ns)) = (g0, n_sat) {
                if g0 > 0.0 && rel(ns, gp * rates.gamma_par / (4.0 * g0 * g0)) > 1e-12 {
                    return Err(Error::InvalidParameter(format!(
                        "n_sat_{side} inconsistent with gamma_perp*gamma_par/(4 g0^2)"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Derives all model rates from the physical geometry.
///
/// κ_mirror = cT/(4L), v_i = (c/2)·√(T/(L_i·L_f)), κ_loss = −(c/2L)·ln(1−α),
/// κ_b,bs = −(c/2L_f)·ln(1−tap); all converted to 2π·MHz.
pub fn derive_rates(geometry: &NetworkGeometry, gamma_par: f64, gamma_las: f64) -> Result<ModelRates> {
    geometry.validate()?;
    if !(gamma_par >= 0.0) || !(gamma_las >= 0.0) {
        return Err(Error::InvalidParameter(
            "gamma_par and gamma_las must be >= 0".into(),
        ));
    }
    let c = geometry.c_fiber();
    let (t1, t2, t3, t4) = (
        1.0 - geometry.r1,
        1.0 - geometry.r2,
        1.0 - geometry.r3,
        1.0 - geometry.r4,
    );
    let conv = rad_per_s_to_2pi_mhz;
    Ok(ModelRates {
        kappa_1l: conv(c * t1 / (4.0 * geometry.l1)),
        kappa_1r: conv(c * t2 / (4.0 * geometry.l1)),
        kappa_2l: conv(c * t3 / (4.0 * geometry.l2)),
        kappa_2r: conv(c * t4 / (4.0 * geometry.l2)),
        kappa_1loss: conv(-(c / (2.0 * geometry.l1)) * (1.0 - geometry.alpha1).ln()),
        kappa_2loss: conv(-(c / (2.0 * geometry.l2)) * (1.0 - geometry.alpha2).ln()),
        kappa_b_bs: conv(-(c / (2.0 * geometry.lf)) * (1.0 - geometry.bs_tap).ln()),
        kappa_b_loss: conv(-(c / (2.0 * geometry.lf)) * (1.0 - geometry.alphaf).ln()),
        v1: conv((c / 2.0) * (t2 / (geometry.l1 * geometry.lf)).sqrt()),
        v2: conv((c / 2.0) * (t3 / (geometry.l2 * geometry.lf)).sqrt()),
        gamma_par,
        gamma_las,
    })
}

/// Named parameter presets for the two experimental conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Fig2,
    Fig3,
}

impl std::str::FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fig2" => Ok(Preset::Fig2),
            "fig3" => Ok(Preset::Fig3),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }
}

impl Preset {
    /// The caption geometry for this condition. Losses are not part of the
    /// captions; the tabulated loss rates in [`Preset::rates`] are
    /// authoritative and the geometry carries α = 0.
    pub fn geometry(self) -> NetworkGeometry {
        let (l1, lf, l2, r) = match self {
            Preset::Fig2 => (0.92, 1.40, 1.38, [0.85, 0.57, 0.72, 0.85]),
            Preset::Fig3 => (0.92, 1.80, 1.38, [0.80, 0.65, 0.80, 0.85]),
        };
        NetworkGeometry {
            l1,
            l2,
            lf,
            r1: r[0],
            r2: r[1],
            r3: r[2],
            r4: r[3],
            alpha1: 0.0,
            alpha2: 0.0,
            alphaf: 0.0,
            bs_tap: 0.01,
            n_fiber: N_FIBER_DEFAULT,
            lambda: LAMBDA_CS_D2,
        }
    }

    /// Tabulated model rates, verbatim (not re-derived from geometry).
    pub fn rates(self) -> ModelRates {
        match self {
            Preset::Fig2 => ModelRates {
                kappa_1loss: 0.36,
                kappa_2loss: 0.24,
                kappa_b_loss: 0.24,
                kappa_b_bs: 0.12,
                kappa_1l: 1.33,
                kappa_1r: 3.82,
                kappa_2l: 1.66,
                kappa_2r: 0.89,
                v1: 9.45,
                v2: 6.23,
                gamma_par: 5.2,
                gamma_las: 0.36,
            },
            Preset::Fig3 => ModelRates {
                kappa_1loss: 0.36,
                kappa_2loss: 0.24,
                kappa_b_loss: 0.18,
                kappa_b_bs: 0.091,
                kappa_1l: 1.78,
                kappa_1r: 3.11,
                kappa_2l: 1.18,
                kappa_2r: 0.89,
                v1: 7.52,
                v2: 4.64,
                gamma_par: 5.2,
                gamma_las: 0.36,
            },
        }
    }

    /// The single-mode correction factor for the cavity-fiber couplings
    /// fitted for this condition.
    pub fn v_scaling(self) -> f64 {
        match self {
            Preset::Fig2 => 1.075,
            Preset::Fig3 => 1.055,
        }
    }

    /// Effective couplings used for the atoms-in-both-cavities spectra.
    pub fn atoms(self) -> AtomEnsembleParams {
        match self {
            Preset::Fig2 => AtomEnsembleParams::from_g_eff(5.0, 5.0),
            Preset::Fig3 => AtomEnsembleParams::from_g_eff(6.0, 7.0),
        }
    }

    /// Fig. 3 condition with the measured saturation parameters
    /// {n_sat, N_eff} = {40, 370} (cavity 1) and {20, 250} (cavity 2).
    /// Only defined for `Fig3`; for `Fig2` no saturation data exists and
    /// this falls back to the linear atom parameters.
    pub fn saturation_atoms(self, rates: &ModelRates) -> Result<AtomEnsembleParams> {
        match self {
            Preset::Fig3 => AtomEnsembleParams::from_saturation(40.0, 370.0, 20.0, 250.0, rates),
            Preset::Fig2 => Ok(self.atoms()),
        }
    }
}
