//! Normal modes of the resonant closed system.
//!
//! The single-excitation coupling matrix in the basis (σ₁⁻, σ₂⁻, a₁, a₂, b)
//! is real symmetric with spectrum {0, ±G, ±Z}. Modes are available both
//! from the analytic diagonalization (general, asymmetric couplings) and
//! from a numeric eigendecomposition used as a cross-check.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rates::{AtomEnsembleParams, ModelRates};

/// Auxiliary squared-rate combinations entering the general normal modes.
#[derive(Debug, Clone, Serialize)]
pub struct ModeAlgebra {
    pub g_bar2: f64,
    pub g_tilde2: f64,
    pub v_bar2: f64,
    pub v_tilde2: f64,
    pub delta2: f64,
    pub big_g: f64,
    pub big_z: f64,
    pub big_n: f64,
    pub big_w: f64,
    pub v_plus: f64,
    pub v_minus: f64,
}

/// Mode labels for the five-oscillator network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ModeLabel {
    CavityDark,
    FiberDarkPlus,
    FiberDarkMinus,
    BrightPlus,
    BrightMinus,
    /// Fallback for degenerate couplings (g1 = 0 xor g2 = 0) where the
    /// five-mode labels do not apply; index is the frequency order.
    Generic(usize),
}

impl std::fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModeLabel::CavityDark => write!(f, "cavity_dark"),
            ModeLabel::FiberDarkPlus => write!(f, "fiber_dark_plus"),
            ModeLabel::FiberDarkMinus => write!(f, "fiber_dark_minus"),
            ModeLabel::BrightPlus => write!(f, "bright_plus"),
            ModeLabel::BrightMinus => write!(f, "bright_minus"),
            ModeLabel::Generic(i) => write!(f, "mode_{i}"),
        }
    }
}

/// One normal mode: frequency relative to ω₀ and a unit-norm vector over
/// (σ₁⁻, σ₂⁻, a₁, a₂, b).
#[derive(Debug, Clone, Serialize)]
pub struct NormalMode {
    pub label: ModeLabel,
    /// 2π·MHz, relative to the common resonance.
    pub frequency: f64,
    pub vector: [f64; 5],
}

impl NormalMode {
    /// Fraction of the mode weight carried by the fiber component.
    pub fn fiber_weight(&self) -> f64 {
        self.vector[4] * self.vector[4]
    }

    /// Fraction of the mode weight carried by the two cavity components.
    pub fn cavity_weight(&self) -> f64 {
        self.vector[2] * self.vector[2] + self.vector[3] * self.vector[3]
    }
}

/// The five normal modes, sorted by frequency.
#[derive(Debug, Clone, Serialize)]
pub struct NormalModeSet {
    pub modes: Vec<NormalMode>,
}

impl NormalModeSet {
    pub fn by_label(&self, label: ModeLabel) -> Option<&NormalMode> {
        self.modes.iter().find(|m| m.label == label)
    }
}

/// The single-excitation coupling matrix in basis (σ₁⁻, σ₂⁻, a₁, a₂, b).
pub fn coupling_matrix(g1: f64, g2: f64, v1: f64, v2: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(
        5,
        5,
        &[
            0.0, 0.0, g1, 0.0, 0.0, //
            0.0, 0.0, 0.0, g2, 0.0, //
            g1, 0.0, 0.0, 0.0, v1, //
            0.0, g2, 0.0, 0.0, v2, //
            0.0, 0.0, v1, v2, 0.0,
        ],
    )
}

/// Evaluates the auxiliary quantities G, Z, N, W, V±, δ² and the barred /
/// tilded squared rates.
pub fn mode_algebra(g1: f64, g2: f64, v1: f64, v2: f64) -> Result<ModeAlgebra> {
    for (name, x) in [("g1", g1), ("g2", g2)] {
        if !(x >= 0.0) {
            return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {x}")));
        }
    }
    for (name, x) in [("v1", v1), ("v2", v2)] {
        if !(x > 0.0) {
            return Err(Error::InvalidParameter(format!("{name} must be > 0, got {x}")));
        }
    }
    if g1 == 0.0 && g2 == 0.0 {
        // g_bar = 0 is allowed; the caller decides whether the analytic
        // five-mode basis applies (it does not).
    }
    let g_tilde2 = (g1 * g1 - g2 * g2) / 2.0;
    let g_bar2 = (g1 * g1 + g2 * g2) / 2.0;
    let v_tilde2 = (v1 * v1 - v2 * v2) / 2.0;
    let v_bar2 = (v1 * v1 + v2 * v2) / 2.0;
    let delta2 = ((g_tilde2 + v_tilde2).powi(2) + v1 * v1 * v2 * v2).sqrt();
    // Clamp tiny negative round-off under the square roots; all four
    // radicands are provably >= 0.
    let s = |x: f64| x.max(0.0).sqrt();
    Ok(ModeAlgebra {
        g_bar2,
        g_tilde2,
        v_bar2,
        v_tilde2,
        delta2,
        big_g: s(g_bar2 + v_bar2 - delta2),
        big_z: s(g_bar2 + v_bar2 + delta2),
        big_n: s(g_tilde2 - v_bar2 + delta2),
        big_w: s(-g_tilde2 + v_bar2 + delta2),
        v_plus: s(delta2 + (g_tilde2 + v_tilde2)),
        v_minus: s(delta2 - (g_tilde2 + v_tilde2)),
    })
}

/// Sign convention: σ₁ component real and >= 0, tie-break on the next
/// nonzero component.
fn fix_sign(v: &mut [f64; 5]) {
    for &c in v.iter() {
        if c.abs() > 1e-12 {
            if c < 0.0 {
                for x in v.iter_mut() {
                    *x = -*x;
                }
            }
            return;
        }
    }
}

fn normalized(raw: [f64; 5]) -> [f64; 5] {
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut v = raw.map(|x| x / norm);
    fix_sign(&mut v);
    v
}

/// The five normal modes from the analytic diagonalization.
///
/// Requires both atomic couplings nonzero; for g1 = 0 or g2 = 0 the
/// five-mode basis degenerates and [`numeric_modes`] must be used instead.
/// The cavity-dark vector has exactly zero a₁, a₂ components by
/// construction, for any positive couplings.
pub fn analytic_modes(g1: f64, g2: f64, v1: f64, v2: f64) -> Result<NormalModeSet> {
    if !(g1 > 0.0) || !(g2 > 0.0) {
        return Err(Error::InvalidParameter(
            "analytic_modes requires g1 > 0 and g2 > 0; use numeric_modes".into(),
        ));
    }
    let alg = mode_algebra(g1, g2, v1, v2)?;
    let (g, z, vp, vm) = (alg.big_g, alg.big_z, alg.v_plus, alg.v_minus);
    // The vector formulas need the signed squares N² and W²; N² can be
    // negative for strongly asymmetric couplings (where big_n is clamped
    // to zero as a frequency-like quantity).
    let n_sq = alg.g_tilde2 - alg.v_bar2 + alg.delta2;
    let w_sq = -alg.g_tilde2 + alg.v_bar2 + alg.delta2;

    // Component ratios from the operator expansions; overall prefactors
    // dropped and vectors normalized numerically.
    let dark = normalized([g2 * v1, g1 * v2, 0.0, 0.0, -g1 * g2]);
    let fiber = |s: f64| {
        normalized([
            g1 * vm,
            -g2 * vp,
            s * g * vm,
            -s * g * vp,
            -(n_sq / vp) * v2,
        ])
    };
    let bright = |s: f64| {
        normalized([
            g1 * vp,
            g2 * vm,
            s * z * vp,
            s * z * vm,
            (w_sq / vm) * v2,
        ])
    };

    let mut modes = vec![
        NormalMode {
            label: ModeLabel::BrightMinus,
            frequency: -z,
            vector: bright(-1.0),
        },
        NormalMode {
            label: ModeLabel::FiberDarkMinus,
            frequency: -g,
            vector: fiber(-1.0),
        },
        NormalMode {
            label: ModeLabel::CavityDark,
            frequency: 0.0,
            vector: dark,
        },
        NormalMode {
            label: ModeLabel::FiberDarkPlus,
            frequency: g,
            vector: fiber(1.0),
        },
        NormalMode {
            label: ModeLabel::BrightPlus,
            frequency: z,
            vector: bright(1.0),
        },
    ];
    modes.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
    Ok(NormalModeSet { modes })
}

/// The five normal modes from a numeric eigendecomposition of the
/// real-symmetric coupling matrix. Labels are assigned by matching
/// frequencies to {0, ±G, ±Z} and component-magnitude fingerprints when
/// both g's are positive; otherwise by frequency order.
pub fn numeric_modes(g1: f64, g2: f64, v1: f64, v2: f64) -> Result<NormalModeSet> {
    for (name, x) in [("g1", g1), ("g2", g2), ("v1", v1), ("v2", v2)] {
        if !(x >= 0.0) {
            return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {x}")));
        }
    }
    let h = coupling_matrix(g1, g2, v1, v2);
    let eig = h.symmetric_eigen();
    let mut pairs: Vec<(f64, [f64; 5])> = (0..5)
        .map(|i| {
            let col = eig.eigenvectors.column(i);
            let mut v = [col[0], col[1], col[2], col[3], col[4]];
            fix_sign(&mut v);
            (eig.eigenvalues[i], v)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let labeled = if g1 > 0.0 && g2 > 0.0 && v1 > 0.0 && v2 > 0.0 {
        let alg = mode_algebra(g1, g2, v1, v2)?;
        let scale = alg.big_z.max(1.0);
        pairs
            .into_iter()
            .map(|(w, v)| {
                let reltol = 1e-8 * scale;
                let label = if w.abs() < reltol && v[2].abs() < 1e-8 && v[3].abs() < 1e-8 {
                    ModeLabel::CavityDark
                } else if (w.abs() - alg.big_g).abs() < reltol {
                    if w > 0.0 {
                        ModeLabel::FiberDarkPlus
                    } else {
                        ModeLabel::FiberDarkMinus
                    }
                } else if (w.abs() - alg.big_z).abs() < reltol {
                    if w > 0.0 {
                        ModeLabel::BrightPlus
                    } else {
                        ModeLabel::BrightMinus
                    }
                } else if w.abs() < reltol {
                    ModeLabel::CavityDark
                } else {
                    ModeLabel::Generic(0)
                };
                NormalMode {
                    label,
                    frequency: w,
                    vector: v,
                }
            })
            .collect()
    } else {
        pairs
            .into_iter()
            .enumerate()
            .map(|(i, (w, v))| NormalMode {
                label: ModeLabel::Generic(i),
                frequency: w,
                vector: v,
            })
            .collect()
    };
    Ok(NormalModeSet { modes: labeled })
}

/// Eigenvalues of the linear drift matrix H − i·diag(γ⊥, γ⊥, κ₁, κ₂, κ_b):
/// real parts are mode frequencies, imaginary parts are (negative) mode
/// half-linewidths. At zero damping this reduces to the closed-system
/// spectrum.
pub fn complex_mode_frequencies(rates: &ModelRates, atoms: &AtomEnsembleParams) -> Vec<Complex64> {
    let h = coupling_matrix(atoms.g_eff_1, atoms.g_eff_2, rates.v1, rates.v2);
    let damp = [
        rates.gamma_perp(),
        rates.gamma_perp(),
        rates.kappa_1(),
        rates.kappa_2(),
        rates.kappa_b(),
    ];
    // Real 10x10 embedding of the complex matrix M = H - i*diag(damp):
    // [[Re M, -Im M], [Im M, Re M]] has spectrum eig(M) U conj(eig(M)).
    let mut emb = DMatrix::<f64>::zeros(10, 10);
    for i in 0..5 {
        for j in 0..5 {
            emb[(i, j)] = h[(i, j)];
            emb[(i + 5, j + 5)] = h[(i, j)];
        }
        // Im M = -diag(damp)
        emb[(i, i + 5)] = damp[i];
        emb[(i + 5, i)] = -damp[i];
    }
    let all: DVector<Complex64> = emb.complex_eigenvalues();
    // Select one eigenvalue per conjugate pair, preferring Im <= 0 (damped
    // modes decay). Greedy pairing is adequate: pairs are exact conjugates
    // up to round-off.
    let mut vals: Vec<Complex64> = all.iter().copied().collect();
    let mut out = Vec::with_capacity(5);
    while let Some(lam) = vals.pop() {
        let conj = lam.conj();
        let (k, _) = vals
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - conj).norm().total_cmp(&(b.1 - conj).norm()))
            .expect("conjugate partner exists");
        let partner = vals.swap_remove(k);
        out.push(if lam.im <= partner.im { lam } else { partner });
    }
    out.sort_by(|a, b| a.re.total_cmp(&b.re));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::Preset;
    use approx::assert_relative_eq;

    fn dot(a: &[f64; 5], b: &[f64; 5]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn symmetric_algebra_hand_values() {
        // g1=g2=5, v1=v2=9: G=5, Z=sqrt(25+162), V±=9, δ=9, N=0, W=9√2.
        let a = mode_algebra(5.0, 5.0, 9.0, 9.0).unwrap();
        assert_relative_eq!(a.big_g, 5.0, max_relative = 1e-14);
        assert_relative_eq!(a.big_z, 187.0_f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(a.v_plus, 9.0, max_relative = 1e-14);
        assert_relative_eq!(a.v_minus, 9.0, max_relative = 1e-14);
        assert_relative_eq!(a.delta2, 81.0, max_relative = 1e-14);
        assert!(a.big_n.abs() < 1e-7);
        assert_relative_eq!(a.big_w, 9.0 * 2.0_f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn equal_g_pins_fiber_dark_frequency() {
        // g1=g2 makes g_tilde=0, so δ² = v_bar² and G = g_bar exactly.
        let a = mode_algebra(5.0, 5.0, 10.16, 6.70).unwrap();
        assert_relative_eq!(a.big_g, 5.0, max_relative = 1e-12);
    }

    #[test]
    fn algebra_z_g_identity() {
        let a = mode_algebra(3.0, 7.0, 11.0, 4.0).unwrap();
        assert_relative_eq!(
            a.big_z * a.big_z + a.big_g * a.big_g,
            2.0 * (a.g_bar2 + a.v_bar2),
            max_relative = 1e-13
        );
        assert!(a.big_z >= a.big_g);
        assert!(a.delta2 >= (a.g_tilde2 + a.v_tilde2).abs());
    }

    #[test]
    fn analytic_modes_symmetric_limit() {
        let set = analytic_modes(5.0, 5.0, 9.0, 9.0).unwrap();
        let zeta = 187.0_f64.sqrt();
        let cd = set.by_label(ModeLabel::CavityDark).unwrap();
        assert_eq!(cd.frequency, 0.0);
        // (v, v, 0, 0, -g)/norm
        let n = (2.0 * 81.0 + 25.0_f64).sqrt();
        assert_relative_eq!(cd.vector[0], 9.0 / n, max_relative = 1e-13);
        assert_relative_eq!(cd.vector[4], -5.0 / n, max_relative = 1e-13);
        assert_eq!(cd.vector[2], 0.0);
        assert_eq!(cd.vector[3], 0.0);

        let fd = set.by_label(ModeLabel::FiberDarkPlus).unwrap();
        assert_relative_eq!(fd.frequency, 5.0, max_relative = 1e-13);
        for (i, expect) in [(0, 0.5), (1, -0.5), (2, 0.5), (3, -0.5)] {
            assert_relative_eq!(fd.vector[i], expect, max_relative = 1e-7);
        }
        assert!(fd.vector[4].abs() < 1e-7);

        let bp = set.by_label(ModeLabel::BrightPlus).unwrap();
        // (g, g, ζ, ζ, 2v)/norm
        let norm = (25.0 + 25.0 + 187.0 + 187.0 + 4.0 * 81.0_f64).sqrt();
        assert_relative_eq!(bp.frequency, zeta, max_relative = 1e-13);
        assert_relative_eq!(bp.vector[0], 5.0 / norm, max_relative = 1e-10);
        assert_relative_eq!(bp.vector[2], zeta / norm, max_relative = 1e-10);
        assert_relative_eq!(bp.vector[4], 18.0 / norm, max_relative = 1e-10);
    }

    #[test]
    fn analytic_modes_are_orthonormal_eigenvectors() {
        let cases = [
            (5.0, 5.0, 9.0, 9.0),
            (6.0, 7.0, 7.93, 4.90),
            (0.7, 14.0, 2.0, 18.0),
        ];
        for (g1, g2, v1, v2) in cases {
            let set = analytic_modes(g1, g2, v1, v2).unwrap();
            let h = coupling_matrix(g1, g2, v1, v2);
            for m in &set.modes {
                // eigen residual
                for i in 0..5 {
                    let hv: f64 = (0..5).map(|j| h[(i, j)] * m.vector[j]).sum();
                    assert!(
                        (hv - m.frequency * m.vector[i]).abs() < 1e-10 * (1.0 + m.frequency.abs()),
                        "residual for ({g1},{g2},{v1},{v2})"
                    );
                }
                assert_relative_eq!(dot(&m.vector, &m.vector), 1.0, max_relative = 1e-12);
            }
            for (i, a) in set.modes.iter().enumerate() {
                for b in set.modes.iter().skip(i + 1) {
                    assert!(dot(&a.vector, &b.vector).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn numeric_matches_analytic() {
        let set_a = analytic_modes(6.0, 7.0, 7.93, 4.90).unwrap();
        let set_n = numeric_modes(6.0, 7.0, 7.93, 4.90).unwrap();
        for (a, n) in set_a.modes.iter().zip(&set_n.modes) {
            assert_relative_eq!(a.frequency, n.frequency, epsilon = 1e-10);
            for i in 0..5 {
                assert!((a.vector[i] - n.vector[i]).abs() < 1e-8);
            }
            assert_eq!(a.label, n.label);
        }
    }

    #[test]
    fn empty_cavities_three_photonic_modes() {
        // g=0, v1=v2=v: photonic modes at {0, ±√2 v}; the zero-frequency
        // vector has no fiber component.
        let set = numeric_modes(0.0, 0.0, 9.0, 9.0).unwrap();
        let freqs: Vec<f64> = set
            .modes
            .iter()
            .map(|m| m.frequency)
            .filter(|w| {
                // drop the two decoupled atomic modes at 0 with pure sigma content
                true && *w == *w
            })
            .collect();
        let s2v = 2.0_f64.sqrt() * 9.0;
        assert_relative_eq!(freqs[0], -s2v, epsilon = 1e-10);
        assert_relative_eq!(freqs[4], s2v, epsilon = 1e-10);
        // the zero-frequency photonic mode is fiber-dark
        let zero_modes: Vec<&NormalMode> = set
            .modes
            .iter()
            .filter(|m| m.frequency.abs() < 1e-10)
            .collect();
        assert_eq!(zero_modes.len(), 3); // 1 photonic + 2 decoupled atoms
        for m in zero_modes {
            assert!(m.vector[4].abs() < 1e-10);
        }
    }

    #[test]
    fn single_loaded_cavity_four_split_modes() {
        // g1=5, g2=0: four nonzero-frequency modes plus one zero mode
        // localized on sigma_2.
        let set = numeric_modes(5.0, 0.0, 9.0, 9.0).unwrap();
        let nonzero: Vec<&NormalMode> = set
            .modes
            .iter()
            .filter(|m| m.frequency.abs() > 1e-10)
            .collect();
        assert_eq!(nonzero.len(), 4);
        let zero: Vec<&NormalMode> = set
            .modes
            .iter()
            .filter(|m| m.frequency.abs() <= 1e-10)
            .collect();
        assert_eq!(zero.len(), 1);
        assert_relative_eq!(zero[0].vector[1].abs(), 1.0, max_relative = 1e-10);
    }

    #[test]
    fn fig2_fiber_dark_weight_below_1e5() {
        let rates = Preset::Fig2.rates().with_v_scaling(1.075).unwrap();
        let set = analytic_modes(5.0, 5.0, rates.v1, rates.v2).unwrap();
        for label in [ModeLabel::FiberDarkPlus, ModeLabel::FiberDarkMinus] {
            let m = set.by_label(label).unwrap();
            assert!(m.fiber_weight() < 1e-5, "fiber weight {}", m.fiber_weight());
        }
    }

    #[test]
    fn complex_frequencies_lossless_limit() {
        let mut r = Preset::Fig2.rates();
        r.kappa_1l = 0.0;
        r.kappa_1r = 0.0;
        r.kappa_2l = 0.0;
        r.kappa_2r = 0.0;
        r.kappa_1loss = 0.0;
        r.kappa_2loss = 0.0;
        r.kappa_b_bs = 0.0;
        r.kappa_b_loss = 0.0;
        r.gamma_par = 0.0;
        r.gamma_las = 0.0;
        let atoms = AtomEnsembleParams::from_g_eff(5.0, 5.0);
        let freqs = complex_mode_frequencies(&r, &atoms);
        let numeric = numeric_modes(5.0, 5.0, r.v1, r.v2).unwrap();
        for (c, m) in freqs.iter().zip(&numeric.modes) {
            assert!(c.im.abs() < 1e-9);
            assert_relative_eq!(c.re, m.frequency, epsilon = 1e-9);
        }
    }

    #[test]
    fn fig2_dark_mode_has_smallest_cavity_loss() {
        // The cavity-dark eigenvalue's damping is set by gamma_perp and
        // kappa_b only; compare dampings after subtracting the atomic and
        // fiber contributions predicted by mode weights.
        let rates = Preset::Fig2.rates().with_v_scaling(1.075).unwrap();
        let atoms = AtomEnsembleParams::from_g_eff(5.0, 5.0);
        let freqs = complex_mode_frequencies(&rates, &atoms);
        // the zero-real-part eigenvalue is the dark mode
        let dark = freqs
            .iter()
            .min_by(|a, b| a.re.abs().total_cmp(&b.re.abs()))
            .unwrap();
        // predicted: weights from the closed-system dark vector, which has
        // no cavity components at all.
        let set = analytic_modes(5.0, 5.0, rates.v1, rates.v2).unwrap();
        let cd = set.by_label(ModeLabel::CavityDark).unwrap();
        let predicted = -(cd.vector[0].powi(2) + cd.vector[1].powi(2)) * rates.gamma_perp()
            - cd.fiber_weight() * rates.kappa_b();
        assert!((dark.im - predicted).abs() / predicted.abs() < 0.05);
    }

    #[test]
    fn perturbative_dark_mode_damping() {
        // symmetric toy, splittings >> dampings: dark damping ≈
        // (2v²γ⊥ + g²κ_b)/ζ² at first order.
        let g = 50.0;
        let v = 90.0;
        let mut r = Preset::Fig2.rates();
        r.v1 = v;
        r.v2 = v;
        r.kappa_1l = 0.4;
        r.kappa_1r = 0.0;
        r.kappa_1loss = 0.0;
        r.kappa_2r = 0.4;
        r.kappa_2l = 0.0;
        r.kappa_2loss = 0.0;
        r.kappa_b_bs = 0.2;
        r.kappa_b_loss = 0.0;
        r.gamma_par = 0.6;
        r.gamma_las = 0.0;
        let atoms = AtomEnsembleParams::from_g_eff(g, g);
        let freqs = complex_mode_frequencies(&r, &atoms);
        let dark = freqs
            .iter()
            .min_by(|a, b| a.re.abs().total_cmp(&b.re.abs()))
            .unwrap();
        let zeta2 = g * g + 2.0 * v * v;
        let predicted = (2.0 * v * v * r.gamma_perp() + g * g * r.kappa_b()) / zeta2;
        assert_relative_eq!(-dark.im, predicted, max_relative = 0.01);
    }
}
