//! Independent verification machinery.
//!
//! Two oracles validate the main model without sharing its code paths:
//! a truncated-Fock-space Lindblad master equation (one two-level atom
//! per cavity) whose weak-drive steady state must reproduce the
//! linearized five-oscillator solve, and a brute-force discrete-ensemble
//! sum that must converge to the closed-form saturable bracket term.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rates::ModelRates;
use crate::response::DriveSpec;

/// Hard ceiling on the truncated Hilbert-space dimension.
pub const DIMENSION_GUARD: usize = 4096;

/// Superoperator dimension above which the steady state is found by
/// long-time propagation instead of a direct linear solve.
const DIRECT_SOLVE_MAX_DIM: usize = 40;

/// Truncated Hilbert space: one two-level atom per cavity plus three
/// photonic modes with the given Fock cutoffs. Subsystem order is
/// (atom 1, atom 2, cavity 1, cavity 2, fiber).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TruncatedHilbertSpec {
    pub n1_max: usize,
    pub n2_max: usize,
    pub nb_max: usize,
}

impl TruncatedHilbertSpec {
    pub fn new(n1_max: usize, n2_max: usize, nb_max: usize) -> Result<Self> {
        let spec = Self {
            n1_max,
            n2_max,
            nb_max,
        };
        if spec.dim() > DIMENSION_GUARD {
            return Err(Error::DimensionGuard {
                dim: spec.dim(),
                guard: DIMENSION_GUARD,
            });
        }
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        4 * (self.n1_max + 1) * (self.n2_max + 1) * (self.nb_max + 1)
    }

    fn subsystem_dims(&self) -> [usize; 5] {
        [2, 2, self.n1_max + 1, self.n2_max + 1, self.nb_max + 1]
    }
}

fn kron(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    a.kronecker(b)
}

/// Largest entry modulus of a complex matrix.
fn max_modulus(m: &DMatrix<Complex64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, c| acc.max(c.norm()))
}

/// Annihilation operator on a Fock space of dimension `d`.
fn annihilation(d: usize) -> DMatrix<Complex64> {
    let mut m = DMatrix::<Complex64>::zeros(d, d);
    for n in 1..d {
        m[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    m
}

/// Embeds `op` at subsystem position `pos` in the full tensor product.
fn embed(spec: &TruncatedHilbertSpec, op: &DMatrix<Complex64>, pos: usize) -> DMatrix<Complex64> {
    let dims = spec.subsystem_dims();
    let mut out = DMatrix::<Complex64>::identity(1, 1);
    for (k, &d) in dims.iter().enumerate() {
        let factor = if k == pos {
            op.clone()
        } else {
            DMatrix::identity(d, d)
        };
        out = kron(&out, &factor);
    }
    out
}

/// The five lowering operators (σ₁⁻, σ₂⁻, a₁, a₂, b) on the full space.
fn lowering_ops(spec: &TruncatedHilbertSpec) -> [DMatrix<Complex64>; 5] {
    let dims = spec.subsystem_dims();
    [
        embed(spec, &annihilation(2), 0),
        embed(spec, &annihilation(2), 1),
        embed(spec, &annihilation(dims[2]), 2),
        embed(spec, &annihilation(dims[3]), 3),
        embed(spec, &annihilation(dims[4]), 4),
    ]
}

/// Expectation values from the master-equation steady state, plus the
/// diagnostics required by the weak-drive preconditions.
#[derive(Debug, Clone, Serialize)]
pub struct LindbladExpectations {
    pub sigma1: Complex64,
    pub sigma2: Complex64,
    pub a1: Complex64,
    pub a2: Complex64,
    pub b: Complex64,
    /// Photon-number expectations ⟨a₁†a₁⟩, ⟨a₂†a₂⟩, ⟨b†b⟩.
    pub n1: f64,
    pub n2: f64,
    pub nb: f64,
    pub trace: f64,
    pub hermiticity_defect: f64,
    /// False when a photon expectation exceeds a tenth of its cutoff,
    /// signalling an untrustworthy truncation.
    pub cutoff_ok: bool,
}

struct Channel {
    op: DMatrix<Complex64>,
    op_dag: DMatrix<Complex64>,
    num: DMatrix<Complex64>,
    rate: f64,
}

struct Lindbladian {
    h: DMatrix<Complex64>,
    /// Collapse channels in the 2OρO† − O†Oρ − ρO†O convention
    /// (amplitude decay rate = rate).
    channels: Vec<Channel>,
}

fn build_lindbladian(
    spec: &TruncatedHilbertSpec,
    rates: &ModelRates,
    g1: f64,
    g2: f64,
    drive: &DriveSpec,
) -> Lindbladian {
    let [s1, s2, a1, a2, b] = lowering_ops(spec);
    let dag = |m: &DMatrix<Complex64>| m.adjoint();
    let num = |m: &DMatrix<Complex64>| dag(m) * m;
    let re = |x: f64| Complex64::new(x, 0.0);

    // rotating frame at the drive: H = Δ Σ n̂ + couplings + drive
    let mut h = (num(&s1) + num(&s2) + num(&a1) + num(&a2) + num(&b)) * re(drive.detuning);
    h += (dag(&a1) * &b + dag(&b) * &a1) * re(rates.v1);
    h += (dag(&a2) * &b + dag(&b) * &a2) * re(rates.v2);
    h += (dag(&a1) * &s1 + dag(&s1) * &a1) * re(g1);
    h += (dag(&a2) * &s2 + dag(&s2) * &a2) * re(g2);
    let driven = match drive.port {
        crate::response::Port::A => &a1,
        crate::response::Port::B => &a2,
        crate::response::Port::C => &b,
    };
    h += (driven + &dag(driven)) * re(drive.amplitude);

    // bare photonic decay κ' = κ_total − γ_las; dephasing restores the
    // totals on the linearized level
    let glas = rates.gamma_las;
    let channels = vec![
        (a1.clone(), rates.kappa_1() - glas),
        (a2.clone(), rates.kappa_2() - glas),
        (b.clone(), rates.kappa_b() - glas),
        (s1.clone(), rates.gamma_par / 2.0),
        (s2.clone(), rates.gamma_par / 2.0),
        // pure dephasing, projector convention: D[O†O] with rate γ_las
        // dephases each coherence at γ_las
        (num(&a1), glas),
        (num(&a2), glas),
        (num(&b), glas),
        (num(&s1), glas),
        (num(&s2), glas),
    ]
    .into_iter()
    .filter(|(_, rate)| *rate != 0.0)
    .map(|(op, rate)| {
        let op_dag = op.adjoint();
        let num = &op_dag * &op;
        Channel {
            op,
            op_dag,
            num,
            rate,
        }
    })
    .collect();
    Lindbladian { h, channels }
}

/// Applies the Lindbladian to a density matrix:
/// Lρ = −i[H,ρ] + Σ r (2OρO† − O†Oρ − ρO†O).
fn apply_lindbladian(l: &Lindbladian, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let i = Complex64::I;
    let mut out = (&l.h * rho - rho * &l.h) * (-i);
    for c in &l.channels {
        out += (&c.op * rho * &c.op_dag * Complex64::new(2.0, 0.0)
            - &c.num * rho
            - rho * &c.num)
            * Complex64::new(c.rate, 0.0);
    }
    out
}

/// Builds the row-major-vectorized superoperator; vec(AρB) = (A⊗Bᵀ)vec(ρ).
fn superoperator(l: &Lindbladian, n: usize) -> DMatrix<Complex64> {
    let i = Complex64::I;
    let id = DMatrix::<Complex64>::identity(n, n);
    let mut sup = (kron(&l.h, &id) - kron(&id, &l.h.transpose())) * (-i);
    for c in &l.channels {
        let term = kron(&c.op, &c.op_dag.transpose()) * Complex64::new(2.0, 0.0)
            - kron(&c.num, &id)
            - kron(&id, &c.num.transpose());
        sup += term * Complex64::new(c.rate, 0.0);
    }
    sup
}

/// Steady state by replacing one superoperator row with the trace
/// condition and solving Lρ = 0, tr ρ = 1 by LU decomposition.
fn steady_state_direct(l: &Lindbladian, n: usize) -> Result<DMatrix<Complex64>> {
    let mut sup = superoperator(l, n);
    for j in 0..n * n {
        sup[(0, j)] = Complex64::ZERO;
    }
    for k in 0..n {
        sup[(0, k * n + k)] = Complex64::ONE;
    }
    let mut rhs = DVector::<Complex64>::zeros(n * n);
    rhs[0] = Complex64::ONE;
    let sol = sup
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("vectorized Liouvillian".into()))?;
    Ok(DMatrix::from_fn(n, n, |r, c| sol[r * n + c]))
}

/// Steady state by fixed-step fourth-order propagation from the vacuum,
/// run until the Liouvillian defect stalls below tolerance.
fn steady_state_propagation(l: &Lindbladian, n: usize) -> Result<DMatrix<Complex64>> {
    let mut rho = DMatrix::<Complex64>::zeros(n, n);
    rho[(0, 0)] = Complex64::ONE;
    // RK4 stability: |λ| dt ≲ 2.8 for the dominant (oscillatory)
    // eigenvalues; bound the spectral radius of the Liouvillian by
    // 2‖H‖_F + Σ 4 r ‖O†O‖_F
    let l_bound = 2.0 * l.h.norm()
        + l.channels
            .iter()
            .map(|c| 4.0 * c.rate * c.num.norm())
            .sum::<f64>();
    let dt = Complex64::new(1.5 / l_bound.max(1e-12), 0.0);
    let half = dt * Complex64::new(0.5, 0.0);
    let sixth = dt / Complex64::new(6.0, 0.0);
    for step in 0..2_000_000_usize {
        let k1 = apply_lindbladian(l, &rho);
        if step % 64 == 0 && max_modulus(&k1) < 1e-11 {
            // re-Hermitize and normalize accumulated drift
            let herm = (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
            let tr: Complex64 = (0..n).map(|k| herm[(k, k)]).sum();
            return Ok(herm / tr);
        }
        let k2 = apply_lindbladian(l, &(&rho + &k1 * half));
        let k3 = apply_lindbladian(l, &(&rho + &k2 * half));
        let k4 = apply_lindbladian(l, &(&rho + &k3 * dt));
        rho += (k1 + k2 * Complex64::new(2.0, 0.0) + k3 * Complex64::new(2.0, 0.0) + k4) * sixth;
    }
    Err(Error::NoConvergence {
        y_b: 0.0,
        residual: max_modulus(&apply_lindbladian(l, &rho)),
        iterations: 2_000_000,
    })
}

fn expectation(rho: &DMatrix<Complex64>, op: &DMatrix<Complex64>) -> Complex64 {
    (rho * op).trace()
}

/// Computes the steady state of the full master equation on the truncated
/// space and reports the mode expectations.
pub fn lindblad_steady_state(
    spec: &TruncatedHilbertSpec,
    rates: &ModelRates,
    g1: f64,
    g2: f64,
    drive: &DriveSpec,
) -> Result<LindbladExpectations> {
    let n = spec.dim();
    if n > DIMENSION_GUARD {
        return Err(Error::DimensionGuard {
            dim: n,
            guard: DIMENSION_GUARD,
        });
    }
    let l = build_lindbladian(spec, rates, g1, g2, drive);
    let rho = if n <= DIRECT_SOLVE_MAX_DIM {
        steady_state_direct(&l, n)?
    } else {
        steady_state_propagation(&l, n)?
    };
    let [s1, s2, a1, a2, b] = lowering_ops(spec);
    let nexp = |op: &DMatrix<Complex64>| expectation(&rho, &(op.adjoint() * op)).re;
    let (n1, n2, nb) = (nexp(&a1), nexp(&a2), nexp(&b));
    let cutoff_ok = n1 < 0.1 * spec.n1_max.max(1) as f64
        && n2 < 0.1 * spec.n2_max.max(1) as f64
        && nb < 0.1 * spec.nb_max.max(1) as f64;
    Ok(LindbladExpectations {
        sigma1: expectation(&rho, &s1),
        sigma2: expectation(&rho, &s2),
        a1: expectation(&rho, &a1),
        a2: expectation(&rho, &a2),
        b: expectation(&rho, &b),
        n1,
        n2,
        nb,
        trace: rho.trace().re,
        hermiticity_defect: max_modulus(&(&rho - rho.adjoint())),
        cutoff_ok,
    })
}

/// A finite sample of atoms at axial phases θ_j, coupling
/// g_j² = g₀²·(A + (1−A)cos²θ_j).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleSample {
    pub thetas: Vec<f64>,
    pub g0: f64,
}

impl EnsembleSample {
    pub fn new(thetas: Vec<f64>, g0: f64) -> Result<Self> {
        if thetas.is_empty() {
            return Err(Error::InvalidParameter("ensemble must have M >= 1 atoms".into()));
        }
        Ok(Self { thetas, g0 })
    }

    /// M atoms at uniform random phases, reproducible from the seed.
    pub fn uniform_random(m: usize, g0: f64, seed: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("ensemble must have M >= 1 atoms".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let thetas = (0..m)
            .map(|_| rng.gen_range(0.0..std::f64::consts::PI))
            .collect();
        Ok(Self { thetas, g0 })
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }
}

/// Brute-force discrete-ensemble susceptibility, scaled into the same
/// normalized units as [`crate::saturation::bracket_term`]:
///
///   (1 − iΔ̃) · (2C/(1+A)) · (1/M) Σ_j w_j / (1 + Δ̃² + w_j |X|²),
///
/// with w_j = A + (1−A)cos²θ_j. Converges to the bracket term as M → ∞
/// for uniform θ.
pub fn discrete_susceptibility_sum(
    sample: &EnsembleSample,
    x_abs2: f64,
    delta_a: f64,
    coop: f64,
    a_geom: f64,
) -> Complex64 {
    let d2 = 1.0 + delta_a * delta_a;
    let mut acc = 0.0;
    for &theta in &sample.thetas {
        let w = a_geom + (1.0 - a_geom) * theta.cos().powi(2);
        acc += w / (d2 + w * x_abs2);
    }
    acc /= sample.len() as f64;
    Complex64::new(1.0, -delta_a) * (2.0 * coop / (1.0 + a_geom)) * acc
}

/// Residual of the closed-form angular average underpinning the bracket
/// term: |(1/π)∫₀^π dθ/(a + b cos²θ) − 1/√(a(a+b))|. The integrand is
/// π-periodic and smooth, so the midpoint rule converges spectrally.
pub fn average_identity_check(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0) || !(a + b > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "require a > 0 and a + b > 0, got a={a}, b={b}"
        )));
    }
    let n = 4096;
    let mut acc = 0.0;
    for k in 0..n {
        let theta = std::f64::consts::PI * (k as f64 + 0.5) / n as f64;
        acc += 1.0 / (a + b * theta.cos().powi(2));
    }
    acc /= n as f64;
    Ok((acc - 1.0 / (a * (a + b)).sqrt()).abs())
}
