//! Nonlinear saturation of the cavity dark mode.
//!
//! At higher drive powers the two-level ensembles saturate and the
//! atom-mediated dark-mode transmission window closes. The model works
//! with normalized amplitudes X₁, X₂, X_b (intracavity fields in units of
//! the respective saturation scales) and a normalized drive y_b. Each
//! cavity equation carries a saturable atomic polarizability — the
//! bracket term below, the closed-form average of the per-atom response
//! over the coupling distribution w(θ) = A + (1−A)cos²θ set by the
//! standing-wave and transverse mode geometry.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rates::{AtomEnsembleParams, ModelRates, C0, H_PLANCK};

/// Default geometry factor for the inhomogeneous coupling average.
pub const A_GEOM_DEFAULT: f64 = 0.17;

/// Parameters of the saturable two-ensemble network, in the normalized
/// units of the nonlinear steady-state equations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SaturationParams {
    /// Cooperativities C_j = N_eff,j g₀,j²/(κ_j γ⊥).
    pub coop_1: f64,
    pub coop_2: f64,
    /// Saturation photon numbers n_sat,j = γ⊥γ∥/(4 g₀,j²).
    pub n_sat_1: f64,
    pub n_sat_2: f64,
    /// Geometry parameter of the coupling distribution, in (0, 1).
    pub a_geom: f64,
    /// Normalized detunings of the common drive: Δ/κ₁, Δ/κ₂, Δ/κ_b, Δ/γ⊥.
    pub delta_1: f64,
    pub delta_2: f64,
    pub delta_b: f64,
    pub delta_a: f64,
}

impl SaturationParams {
    /// Builds the saturation parameters for a resonant drive from ensemble
    /// data and rates. Requires the per-atom quantities (n_sat, N_eff) to
    /// be present on `atoms`.
    pub fn from_network(rates: &ModelRates, atoms: &AtomEnsembleParams) -> Result<Self> {
        let gp = rates.gamma_perp();
        let missing = || Error::InvalidParameter("missing per-atom saturation data".into());
        let n1 = atoms.n_sat_1.ok_or_else(missing)?;
        let n2 = atoms.n_sat_2.ok_or_else(missing)?;
        let ne1 = atoms.n_eff_1.ok_or_else(missing)?;
        let ne2 = atoms.n_eff_2.ok_or_else(missing)?;
        let g01 = (gp * rates.gamma_par / (4.0 * n1)).sqrt();
        let g02 = (gp * rates.gamma_par / (4.0 * n2)).sqrt();
        Ok(Self {
            coop_1: ne1 * g01 * g01 / (rates.kappa_1() * gp),
            coop_2: ne2 * g02 * g02 / (rates.kappa_2() * gp),
            n_sat_1: n1,
            n_sat_2: n2,
            a_geom: A_GEOM_DEFAULT,
            delta_1: 0.0,
            delta_2: 0.0,
            delta_b: 0.0,
            delta_a: 0.0,
        })
    }

    /// The same parameters with the drive detuned by `delta` (2π·MHz) from
    /// the common resonance.
    pub fn with_detuning(&self, rates: &ModelRates, delta: f64) -> Self {
        Self {
            delta_1: delta / rates.kappa_1(),
            delta_2: delta / rates.kappa_2(),
            delta_b: delta / rates.kappa_b(),
            delta_a: delta / rates.gamma_perp(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.coop_1 >= 0.0) || !(self.coop_2 >= 0.0) {
            return Err(Error::InvalidParameter("cooperativities must be >= 0".into()));
        }
        if !(self.n_sat_1 > 0.0) || !(self.n_sat_2 > 0.0) {
            return Err(Error::InvalidParameter(
                "saturation photon numbers must be > 0".into(),
            ));
        }
        if !(self.a_geom > 0.0 && self.a_geom < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "a_geom must lie in (0, 1), got {}",
                self.a_geom
            )));
        }
        for (name, d) in [
            ("delta_1", self.delta_1),
            ("delta_2", self.delta_2),
            ("delta_b", self.delta_b),
            ("delta_a", self.delta_a),
        ] {
            if !d.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} is not finite")));
            }
        }
        Ok(())
    }
}

/// Self-consistent saturated steady state at one drive strength.
#[derive(Debug, Clone, Serialize)]
pub struct SaturationState {
    /// Normalized drive amplitude.
    pub y_b: f64,
    /// Normalized intracavity amplitudes.
    pub x1: Complex64,
    pub x2: Complex64,
    pub xb: Complex64,
    pub converged: bool,
    /// Final Newton residual (max-norm over the six real equations).
    pub residual: f64,
    pub iterations: usize,
    /// Set when the continuation detected a fold (|X_b| decreasing while
    /// the drive grew); the returned state is the branch continued from
    /// low power.
    pub bistable_flag: bool,
}

/// The saturable atomic polarizability entering a cavity equation:
///
///   B(X; Δ̃, C, A) = (1 − iΔ̃) · (2C/(1+A)) · (1/|X|²) ·
///       [ 1 − (1+Δ̃²) / √((1+Δ̃²+A|X|²)(1+Δ̃²+|X|²)) ],
///
/// the closed-form average of (2C/(1+A))·(1−iΔ̃)·w/(1+Δ̃²+w|X|²) over the
/// distribution w(θ) = A + (1−A)cos²θ. Continuous at X → 0 where it tends
/// to C(1 − iΔ̃)/(1 + Δ̃²), and → 0 as |X| → ∞ (fully saturated atoms).
pub fn bracket_term(x_abs2: f64, delta_a: f64, coop: f64, a_geom: f64) -> Complex64 {
    let d2 = 1.0 + delta_a * delta_a;
    let pref = Complex64::new(1.0, -delta_a) * (2.0 * coop / (1.0 + a_geom));
    // Switch to the series for small |X|² to avoid catastrophic
    // cancellation: 1 - d/√((d+Au)(d+u)) = d·[(1+A)u/(2d) + O(u²)] with
    // u = |X|²/d.
    if x_abs2 < 1e-5 * d2 {
        let u = x_abs2 / d2;
        let series = (1.0 + a_geom) / 2.0
            - u * (3.0 * a_geom * a_geom + 2.0 * a_geom + 3.0) / 8.0;
        return pref * series / d2;
    }
    let root = ((d2 + a_geom * x_abs2) * (d2 + x_abs2)).sqrt();
    pref * (1.0 - d2 / root) / x_abs2
}

/// Residual of the six-real-dimensional fixed-point system for the drive
/// applied to the link fiber (port C):
///
///   0 = X₁[(1 + iΔ/κ₁) + B(X₁)] + i(v₁/κ₁)(n₂/n₁)^{1/4} X_b
///   0 = X₂[(1 + iΔ/κ₂) + B(X₂)] + i(v₂/κ₂)(n₁/n₂)^{1/4} X_b
///   0 = (1 + iΔ/κ_b) X_b + i(v₁/κ_b)(n₁/n₂)^{1/4} X₁
///                        + i(v₂/κ_b)(n₂/n₁)^{1/4} X₂ + i y_b
///
/// with all couplings taken real.
fn residual(x: &[f64; 6], y_b: f64, rates: &ModelRates, p: &SaturationParams) -> [f64; 6] {
    let i = Complex64::I;
    let x1 = Complex64::new(x[0], x[1]);
    let x2 = Complex64::new(x[2], x[3]);
    let xb = Complex64::new(x[4], x[5]);
    let r21 = (p.n_sat_2 / p.n_sat_1).powf(0.25);
    let r12 = 1.0 / r21;
    let b1 = bracket_term(x1.norm_sqr(), p.delta_a, p.coop_1, p.a_geom);
    let b2 = bracket_term(x2.norm_sqr(), p.delta_a, p.coop_2, p.a_geom);
    let f1 =
        x1 * (Complex64::new(1.0, p.delta_1) + b1) + i * (rates.v1 / rates.kappa_1()) * r21 * xb;
    let f2 =
        x2 * (Complex64::new(1.0, p.delta_2) + b2) + i * (rates.v2 / rates.kappa_2()) * r12 * xb;
    let fb = Complex64::new(1.0, p.delta_b) * xb
        + i * (rates.v1 / rates.kappa_b()) * r12 * x1
        + i * (rates.v2 / rates.kappa_b()) * r21 * x2
        + i * y_b;
    [f1.re, f1.im, f2.re, f2.im, fb.re, fb.im]
}

fn max_abs(r: &[f64; 6]) -> f64 {
    r.iter().fold(0.0_f64, |m, &v| m.max(v.abs()))
}

/// One damped Newton solve from the given starting point; Jacobian by
/// forward differences on the six real unknowns.
fn newton_solve(
    mut x: [f64; 6],
    y_b: f64,
    rates: &ModelRates,
    p: &SaturationParams,
    tol: f64,
    max_iter: usize,
) -> Result<([f64; 6], f64, usize)> {
    use nalgebra::{SMatrix, SVector};
    let mut r = residual(&x, y_b, rates, p);
    let mut rn = max_abs(&r);
    for it in 0..max_iter {
        if rn < tol {
            return Ok((x, rn, it));
        }
        let mut jac = SMatrix::<f64, 6, 6>::zeros();
        for j in 0..6 {
            let h = 1e-7 * (1.0 + x[j].abs());
            let mut xp = x;
            xp[j] += h;
            let rp = residual(&xp, y_b, rates, p);
            for i in 0..6 {
                jac[(i, j)] = (rp[i] - r[i]) / h;
            }
        }
        let rhs = SVector::<f64, 6>::from_row_slice(&r);
        let step = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("saturation Jacobian".into()))?;
        // backtracking line search on the residual norm
        let mut lambda = 1.0;
        loop {
            let mut xt = x;
            for i in 0..6 {
                xt[i] -= lambda * step[i];
            }
            let rt = residual(&xt, y_b, rates, p);
            let rtn = max_abs(&rt);
            if rtn < rn || lambda < 1e-6 {
                x = xt;
                r = rt;
                rn = rtn;
                break;
            }
            lambda *= 0.5;
        }
    }
    if rn < tol {
        Ok((x, rn, max_iter))
    } else {
        Err(Error::NoConvergence {
            y_b,
            residual: rn,
            iterations: max_iter,
        })
    }
}

/// Absolute tolerance used by the continuation solver, scaled to the
/// drive.
fn solver_tol(y_b: f64) -> f64 {
    1e-12 * (1.0 + y_b)
}

/// Solves the saturated steady state at normalized drive `y_b`,
/// continuing from low power in geometric steps to stay on the branch
/// connected to the linear response.
pub fn solve_saturated_state(
    rates: &ModelRates,
    params: &SaturationParams,
    y_b: f64,
) -> Result<SaturationState> {
    params.validate()?;
    if !(y_b >= 0.0) || !y_b.is_finite() {
        return Err(Error::InvalidParameter(format!("y_b must be >= 0, got {y_b}")));
    }
    if y_b == 0.0 {
        return Ok(SaturationState {
            y_b,
            x1: Complex64::ZERO,
            x2: Complex64::ZERO,
            xb: Complex64::ZERO,
            converged: true,
            residual: 0.0,
            iterations: 0,
            bistable_flag: false,
        });
    }
    let tol = solver_tol(y_b);
    // continuation ladder in y_b starting deep in the linear regime
    let y_start = (0.01_f64).min(y_b);
    let n_steps = ((y_b / y_start).ln() / std::f64::consts::LN_2).ceil().max(1.0) as usize;
    let mut x = [0.0_f64; 6];
    let mut prev_y = 0.0_f64;
    let mut total_iters = 0;
    let mut prev_norm = 0.0_f64;
    let mut bistable_flag = false;
    for k in 0..=n_steps {
        let y = y_start * (y_b / y_start).powf(k as f64 / n_steps as f64);
        // predictor: amplitudes scale roughly linearly with y within a step
        if prev_y > 0.0 {
            let scale = y / prev_y;
            for v in &mut x {
                *v *= scale;
            }
        }
        let (xs, _, iters) = newton_solve(x, y, rates, params, solver_tol(y), 60)?;
        x = xs;
        prev_y = y;
        total_iters += iters;
        let norm = (x[4] * x[4] + x[5] * x[5]).sqrt();
        if k > 0 && norm < prev_norm * (1.0 - 1e-9) {
            // |X_b| dropped while the drive grew: a fold along the branch
            bistable_flag = true;
        }
        prev_norm = norm;
    }
    let r_final = residual(&x, y_b, rates, params);
    let rn = max_abs(&r_final);
    Ok(SaturationState {
        y_b,
        x1: Complex64::new(x[0], x[1]),
        x2: Complex64::new(x[2], x[3]),
        xb: Complex64::new(x[4], x[5]),
        converged: rn < tol * 10.0,
        residual: rn,
        iterations: total_iters,
        bistable_flag,
    })
}

/// Converts an optical input power (watts) at the beam-splitter port to
/// the normalized drive amplitude y_b by inverting
///
///   P_in = (κ_b² / 2κ_b,bs) · (2πħ c/λ) · √(n_sat,1 n_sat,2) · y_b²,
///
/// with the rates converted to rad/s and the vacuum speed of light in the
/// photon energy 2πħc/λ = hc/λ.
pub fn power_to_yb(
    power_w: f64,
    rates: &ModelRates,
    params: &SaturationParams,
    lambda: f64,
) -> Result<f64> {
    if !(power_w >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "power must be >= 0, got {power_w}"
        )));
    }
    Ok((power_w / power_scale(rates, params, lambda)).sqrt())
}

/// Inverse of [`power_to_yb`].
pub fn yb_to_power(y_b: f64, rates: &ModelRates, params: &SaturationParams, lambda: f64) -> f64 {
    power_scale(rates, params, lambda) * y_b * y_b
}

fn power_scale(rates: &ModelRates, params: &SaturationParams, lambda: f64) -> f64 {
    let to_rad = crate::rates::two_pi_mhz_to_rad_per_s;
    let kb = to_rad(rates.kappa_b());
    let kbs = to_rad(rates.kappa_b_bs);
    let photon_energy = H_PLANCK * C0 / lambda;
    kb * kb / (2.0 * kbs) * photon_energy * (params.n_sat_1 * params.n_sat_2).sqrt()
}

/// One point of a saturation curve.
#[derive(Debug, Clone, Serialize)]
pub struct SaturationPoint {
    pub power_w: f64,
    pub y_b: f64,
    /// On-resonance tap flux divided by the average of the two bright-mode
    /// peak fluxes of the same (nonlinear) spectrum.
    pub norm_transmission: f64,
    /// Absolute tap output flux at Δ = 0, photons per 2π·MHz⁻¹ time unit.
    pub flux0: f64,
    /// Average of the two bright-mode peak fluxes.
    pub bright_avg: f64,
    pub converged: bool,
    pub bistable_flag: bool,
}

/// Tap (port C) output flux implied by a saturated state:
/// 2κ_b,bs |⟨b⟩|² with ⟨b⟩ = X_b (n_sat,1 n_sat,2)^{1/4} y-normalized.
pub fn tap_flux(rates: &ModelRates, params: &SaturationParams, state: &SaturationState) -> f64 {
    let sb = (params.n_sat_1 * params.n_sat_2).sqrt().sqrt();
    2.0 * rates.kappa_b_bs * (state.xb * sb).norm_sqr()
}

/// Nonlinear C→C spectrum at fixed drive: tap flux at each detuning on the
/// grid, each point solved by its own continuation from zero drive.
pub fn nonlinear_tap_spectrum(
    rates: &ModelRates,
    params: &SaturationParams,
    y_b: f64,
    detunings: &[f64],
) -> Result<(Vec<f64>, bool, bool)> {
    let mut flux = Vec::with_capacity(detunings.len());
    let mut converged = true;
    let mut bistable = false;
    for &delta in detunings {
        let p = params.with_detuning(rates, delta);
        let st = solve_saturated_state(rates, &p, y_b).map_err(|e| Error::AtDetuning {
            delta,
            source: Box::new(e),
        })?;
        converged &= st.converged;
        bistable |= st.bistable_flag;
        flux.push(tap_flux(rates, &p, &st));
    }
    Ok((flux, converged, bistable))
}

/// Quadratic refinement of the maximum of `values` restricted to indices
/// where `keep` holds; returns the interpolated peak value.
fn side_peak(detunings: &[f64], values: &[f64], keep: impl Fn(f64) -> bool) -> f64 {
    let mut imax = None;
    for (i, (&d, &v)) in detunings.iter().zip(values).enumerate() {
        if keep(d) && imax.is_none_or(|j: usize| v > values[j]) {
            imax = Some(i);
        }
    }
    let i = imax.expect("side of the grid is non-empty");
    if i == 0 || i + 1 >= values.len() {
        return values[i];
    }
    let (ym, y0, yp) = (values[i - 1], values[i], values[i + 1]);
    let denom = ym - 2.0 * y0 + yp;
    if denom.abs() < f64::EPSILON * y0.abs() {
        return y0;
    }
    let t = 0.5 * (ym - yp) / denom;
    y0 - 0.25 * (ym - yp) * t
}

/// Sweeps the normalized dark-mode transmission over input powers: for
/// each power the full nonlinear C→C spectrum is computed on `detunings`,
/// and the Δ = 0 flux is divided by the average of the two bright-mode
/// peak fluxes (quadratically refined grid maxima on each side of Δ = 0).
pub fn saturation_curve(
    rates: &ModelRates,
    params: &SaturationParams,
    powers_w: &[f64],
    detunings: &[f64],
    lambda: f64,
) -> Result<Vec<SaturationPoint>> {
    params.validate()?;
    if detunings.len() < 5 {
        return Err(Error::InvalidParameter(
            "detuning grid too coarse for peak extraction".into(),
        ));
    }
    let i0 = detunings
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .expect("grid is non-empty");
    if detunings[i0].abs() > 1e-9 {
        return Err(Error::InvalidParameter(
            "detuning grid must contain Δ = 0".into(),
        ));
    }
    let mut out = Vec::with_capacity(powers_w.len());
    for &pw in powers_w {
        let y_b = power_to_yb(pw, rates, params, lambda)?;
        let (flux, converged, bistable) =
            nonlinear_tap_spectrum(rates, params, y_b, detunings).map_err(|e| {
                Error::AtPower {
                    power_w: pw,
                    source: Box::new(e),
                }
            })?;
        let left = side_peak(detunings, &flux, |d| d < 0.0);
        let right = side_peak(detunings, &flux, |d| d > 0.0);
        let bright_avg = 0.5 * (left + right);
        out.push(SaturationPoint {
            power_w: pw,
            y_b,
            norm_transmission: if bright_avg > 0.0 { flux[i0] / bright_avg } else { 0.0 },
            flux0: flux[i0],
            bright_avg,
            converged,
            bistable_flag: bistable,
        });
    }
    Ok(out)
}
