//! Drude material algebra and the closed-form plasmonic resonances.
//!
//! Frequencies are angular (rad/s). The corrected 2D resonances follow the
//! two-stage scheme: static root first, frozen inside `log(Omega delta / c)`,
//! then an exact solve of the resulting quadratic.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrudeMaterial {
    pub eps0: f64,
    pub mu0: f64,
    pub omega_p: f64,
    /// Collision time T (s).
    pub t_collision: f64,
    /// Background permittivity.
    pub eps_m: f64,
}

impl Default for DrudeMaterial {
    fn default() -> Self {
        DrudeMaterial {
            eps0: 8.854_187_128e-12,
            mu0: 4.0 * PI * 1e-7,
            omega_p: 2e15,
            t_collision: 1e-14,
            eps_m: 8.854_187_128e-12,
        }
    }
}

impl DrudeMaterial {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eps0", self.eps0),
            ("mu0", self.mu0),
            ("omega_p", self.omega_p),
            ("t_collision", self.t_collision),
            ("eps_m", self.eps_m),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Invalid(format!("material constant {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Background light speed 1/sqrt(eps_m mu0).
    pub fn c(&self) -> f64 {
        1.0 / (self.eps_m * self.mu0).sqrt()
    }

    fn require_vacuum(&self) -> Result<()> {
        if ((self.eps_m - self.eps0) / self.eps0).abs() > 1e-12 {
            return Err(Error::Invalid("closed-form resonances assume a vacuum background (eps_m = eps0)".into()));
        }
        Ok(())
    }

    /// Dimensionless size parameter (omega_p delta / c)^2.
    pub fn size_parameter(&self, delta: f64) -> f64 {
        (self.omega_p * delta / self.c()).powi(2)
    }
}

/// eps_c(omega) = eps0 (1 - omega_p^2 / (omega^2 + i omega / T)).
pub fn permittivity(mat: &DrudeMaterial, omega: C64) -> Result<C64> {
    let den = omega * omega + C64::i() * omega / mat.t_collision;
    if den.norm() <= 1e-300 || den.norm() < 1e-14 * (omega.norm() * (omega.norm() + 1.0 / mat.t_collision)) {
        return Err(Error::Domain(format!("Drude permittivity has a pole at omega = {omega}")));
    }
    Ok(mat.eps0 * (1.0 - mat.omega_p * mat.omega_p / den))
}

/// lambda(omega) = (eps_m + eps_c) / (2 (eps_m - eps_c)).
pub fn contrast(mat: &DrudeMaterial, omega: C64) -> Result<C64> {
    let ec = permittivity(mat, omega)?;
    contrast_from_permittivity(mat.eps_m, ec)
}

pub fn contrast_from_permittivity(eps_m: f64, eps_c: C64) -> Result<C64> {
    let den = 2.0 * (eps_m - eps_c);
    if den.norm() <= 1e-15 * eps_m {
        return Err(Error::Domain("contrast undefined when eps_c = eps_m".into()));
    }
    Ok((eps_m + eps_c) / den)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StaticRoots {
    pub plus: C64,
    pub minus: C64,
    /// omega_p^2 (lambda + 1/2) < 1/(4 T^2): both roots purely imaginary.
    pub overdamped: bool,
}

pub fn static_resonances(mat: &DrudeMaterial, lambda: f64) -> Result<StaticRoots> {
    mat.require_vacuum()?;
    if !(lambda > -0.5 && lambda < 0.5 + 1e-12) {
        return Err(Error::Invalid(format!("lambda_j = {lambda} outside (-1/2, 1/2]")));
    }
    let t = mat.t_collision;
    let rad = mat.omega_p * mat.omega_p * (lambda + 0.5) - 1.0 / (4.0 * t * t);
    let damp = C64::new(0.0, -1.0 / (2.0 * t));
    let (root, overdamped) = if rad >= 0.0 { (C64::new(rad.sqrt(), 0.0), false) } else { (C64::new(0.0, (-rad).sqrt()), true) };
    Ok(StaticRoots { plus: root + damp, minus: -root + damp, overdamped })
}

/// How `log(Omega delta / c)` is continued to the Omega^- family (Re < 0).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBranch {
    /// Omega^- = -conj(Omega^+): the reflection of the + family, which keeps
    /// the time-domain field real.
    Mirror,
    /// Principal log evaluated at the Omega^- static root.
    Principal,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FamilyRoot {
    pub omega: C64,
    /// Other root of the same frozen-log quadratic.
    pub companion: C64,
    /// 1 + alpha (omega_p delta / c)^2 log(Omega_s delta / c).
    pub beta: C64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrectedPair {
    pub plus: FamilyRoot,
    pub minus: FamilyRoot,
}

fn frozen_root(mat: &DrudeMaterial, lambda: f64, alpha: f64, delta: f64, omega_s: C64) -> Result<FamilyRoot> {
    let c = mat.c();
    let arg = omega_s * delta / c;
    if arg.norm() == 0.0 {
        return Err(Error::Domain("log(Omega_s delta / c) undefined at zero".into()));
    }
    let beta = 1.0 + alpha * mat.size_parameter(delta) * arg.ln();
    if beta.norm() < 1e-8 {
        return Err(Error::Numerical(format!("corrected resonance bracket vanishes (beta = {beta})")));
    }
    let it = C64::new(0.0, 1.0 / mat.t_collision);
    let disc = (4.0 * beta * mat.omega_p * mat.omega_p * (lambda + 0.5) - 1.0 / mat.t_collision.powi(2)).sqrt();
    let r1 = (-it + disc) / (2.0 * beta);
    let r2 = (-it - disc) / (2.0 * beta);
    // keep the root on the side of the static root it continues
    let (omega, companion) = if (r1 - omega_s).norm() <= (r2 - omega_s).norm() { (r1, r2) } else { (r2, r1) };
    Ok(FamilyRoot { omega, companion, beta })
}

/// First-order corrected 2D resonances for one mode.
pub fn corrected_resonances_2d(
    mat: &DrudeMaterial,
    lambda: f64,
    alpha: f64,
    delta: f64,
    branch: LogBranch,
) -> Result<CorrectedPair> {
    if !(delta > 0.0) {
        return Err(Error::Invalid(format!("delta must be positive, got {delta}")));
    }
    let s = static_resonances(mat, lambda)?;
    let plus = frozen_root(mat, lambda, alpha, delta, s.plus)?;
    let minus = match branch {
        LogBranch::Principal => frozen_root(mat, lambda, alpha, delta, s.minus)?,
        LogBranch::Mirror => FamilyRoot {
            omega: -plus.omega.conj(),
            companion: -plus.companion.conj(),
            beta: plus.beta.conj(),
        },
    };
    Ok(CorrectedPair { plus, minus })
}

/// Residual of the full transcendental resonance condition at `omega`.
pub fn resonance_residual_2d(mat: &DrudeMaterial, lambda: f64, alpha: f64, delta: f64, omega: C64) -> C64 {
    let k = omega * delta / mat.c();
    (omega * omega + C64::i() * omega / mat.t_collision) / mat.omega_p.powi(2) - 0.5 - lambda + k * k * k.ln() * alpha
}

/// Newton polish of the transcendental condition starting from `start`.
pub fn polish_root_2d(mat: &DrudeMaterial, lambda: f64, alpha: f64, delta: f64, start: C64) -> Result<C64> {
    let dc = delta / mat.c();
    let mut w = start;
    for _ in 0..50 {
        let f = resonance_residual_2d(mat, lambda, alpha, delta, w);
        let k = w * dc;
        let df = (2.0 * w + C64::i() / mat.t_collision) / mat.omega_p.powi(2) + alpha * dc * k * (2.0 * k.ln() + 1.0);
        let step = f / df;
        w -= step;
        if step.norm() <= 1e-15 * w.norm() {
            return Ok(w);
        }
    }
    Err(Error::Numerical(format!("root polish did not converge from {start}")))
}

/// First-order corrected 3D resonances (Omega^+, Omega^-).
pub fn corrected_resonances_3d(mat: &DrudeMaterial, lambda: f64, alpha: f64, delta: f64) -> Result<(C64, C64)> {
    mat.require_vacuum()?;
    if (lambda + 0.5).abs() <= 1e-2 {
        return Err(Error::Invalid(format!("3D formula needs |lambda_j + 1/2| > 1e-2, got lambda = {lambda}")));
    }
    let g = 1.0 + mat.size_parameter(delta) * alpha;
    let t = mat.t_collision;
    let re2 = mat.omega_p.powi(2) * (lambda + 0.5) / g - 1.0 / (4.0 * t * t * g * g);
    let re = C64::new(re2, 0.0).sqrt();
    let im = C64::new(0.0, -1.0 / (2.0 * t * g));
    let (p, m) = (re + im, -re + im);
    let bound = 2.0 * (1.0 / (t * g.abs())).max(mat.omega_p * (lambda + 0.5).sqrt() / g.abs().sqrt());
    if p.norm() > bound || m.norm() > bound {
        return Err(Error::Numerical("3D resonance exceeds its a-priori bound".into()));
    }
    Ok((p, m))
}

/// eps0 (Omega^2 + i Omega / T - omega_p^2) / (beta (Omega - Omega')), the residue
/// at Omega of 1/tau_j with the frozen logarithm; Omega' is the companion root.
pub fn residue_constant_2d(mat: &DrudeMaterial, root: &FamilyRoot) -> Result<C64> {
    let gap = root.omega - root.companion;
    if gap.norm() <= 1e-12 * root.omega.norm() {
        return Err(Error::Numerical("coincident resonances: residue undefined".into()));
    }
    let w = root.omega;
    Ok(mat.eps0 * (w * w + C64::i() * w / mat.t_collision - mat.omega_p.powi(2)) / (root.beta * gap))
}

/// 1/tau_j(omega) with the logarithm frozen at `beta` (the function whose
/// residues [`residue_constant_2d`] returns).
pub fn inverse_tau_frozen(mat: &DrudeMaterial, lambda: f64, beta: C64, omega: C64) -> Result<C64> {
    let lam_w = contrast(mat, omega)?;
    let ec = permittivity(mat, omega)?;
    let fac = 1.0 / ec - 1.0 / mat.eps_m;
    // lambda_j(omega delta) = lambda_j - alpha s log(.) (omega/omega_p)^2, folded into beta
    let shifted = lam_w - lambda + (beta - 1.0) * omega * omega / mat.omega_p.powi(2);
    Ok(1.0 / (fac * shifted))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeResonance {
    pub j: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub static_roots: StaticRoots,
    pub corrected: CorrectedPair,
    pub c_plus: C64,
    pub c_minus: C64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResonanceSet {
    pub delta: f64,
    pub branch: LogBranch,
    pub modes: Vec<ModeResonance>,
    pub radius: f64,
    pub ratio: f64,
    /// Largest |residual| of the transcendental condition over returned roots.
    pub max_residual: f64,
}

/// Builds resonances for modes j = 1.. from (lambda_j, alpha_j) pairs.
pub fn resonance_set_2d(
    mat: &DrudeMaterial,
    lambdas: &[f64],
    alphas: &[f64],
    delta: f64,
    branch: LogBranch,
    polish: bool,
) -> Result<ResonanceSet> {
    mat.validate()?;
    if lambdas.len() != alphas.len() {
        return Err(Error::Invalid("lambda and alpha lists differ in length".into()));
    }
    let mut modes = Vec::with_capacity(lambdas.len());
    let mut max_residual: f64 = 0.0;
    for (idx, (&lambda, &alpha)) in lambdas.iter().zip(alphas).enumerate() {
        let static_roots = static_resonances(mat, lambda)?;
        let mut corrected = corrected_resonances_2d(mat, lambda, alpha, delta, branch)?;
        if polish {
            corrected.plus.omega = polish_root_2d(mat, lambda, alpha, delta, corrected.plus.omega)?;
            corrected.minus.omega = match branch {
                LogBranch::Mirror => -corrected.plus.omega.conj(),
                LogBranch::Principal => polish_root_2d(mat, lambda, alpha, delta, corrected.minus.omega)?,
            };
        }
        for r in [corrected.plus.omega, corrected.minus.omega] {
            if !(r.im < 0.0) {
                return Err(Error::Numerical(format!("mode {}: resonance {r} not in the lower half plane", idx + 1)));
            }
        }
        max_residual = max_residual.max(resonance_residual_2d(mat, lambda, alpha, delta, corrected.plus.omega).norm());
        let c_plus = residue_constant_2d(mat, &corrected.plus)?;
        let c_minus = residue_constant_2d(mat, &corrected.minus)?;
        modes.push(ModeResonance { j: idx + 1, lambda, alpha, static_roots, corrected, c_plus, c_minus });
    }
    let radius = resonance_radius_2d(mat, &modes);
    Ok(ResonanceSet { delta, branch, radius, ratio: radius * delta / mat.c(), modes, max_residual })
}

/// max over modes and both families of 2/(T|beta|) and 2 omega_p sqrt(lambda+1/2)/|beta|^{1/2}.
pub fn resonance_radius_2d(mat: &DrudeMaterial, modes: &[ModeResonance]) -> f64 {
    let mut r: f64 = 0.0;
    for m in modes {
        for beta in [m.corrected.plus.beta, m.corrected.minus.beta] {
            let b = beta.norm();
            r = r.max(2.0 / (mat.t_collision * b));
            r = r.max(2.0 * mat.omega_p * (m.lambda + 0.5).sqrt() / b.sqrt());
        }
    }
    r
}

/// 3D counterpart with beta = 1 + (omega_p delta / c)^2 alpha_j.
pub fn resonance_radius_3d(mat: &DrudeMaterial, lambdas: &[f64], alphas: &[f64], delta: f64) -> (f64, f64) {
    let s = mat.size_parameter(delta);
    let mut r: f64 = 0.0;
    for (&l, &a) in lambdas.iter().zip(alphas) {
        let b = (1.0 + s * a).abs();
        r = r.max(2.0 / (mat.t_collision * b)).max(2.0 * mat.omega_p * (l + 0.5).sqrt() / b.sqrt());
    }
    (r, r * delta / mat.c())
}
