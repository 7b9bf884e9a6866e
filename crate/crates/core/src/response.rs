//! Effective mechanical response: susceptibility, self-energy, force-noise
//! transfer, optical spring and optomechanical damping.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::SystemParams;
use crate::steady_state::SteadyBranch;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Denominators below this (in units of κ²) mark a parametric threshold.
pub const DIVERGENCE_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseEval {
    pub omega: f64,
    pub chi_m_inv: Complex64,
    pub chi_c_inv: Complex64,
    pub chi_c_tilde_inv: Complex64,
    /// Ξ(ω)
    pub xi_self_energy: Complex64,
    /// Λ(ω)
    pub lambda_force: Complex64,
    /// Λ(−ω), carried along for the symmetrised back-action spectrum.
    pub lambda_force_neg: Complex64,
    pub chi_eff: Complex64,
    pub omega_eff: f64,
    pub gamma_eff: f64,
    /// λ(ω) = κ̃² + Δ̃² − ω² − 4Ũ²
    pub lam: f64,
    pub mu: f64,
    pub nu: f64,
}

impl ResponseEval {
    /// χ_eff rebuilt from the (ω_eff, γ_eff) parametrisation.
    pub fn chi_eff_from_shifts(&self, omega_m: f64) -> Complex64 {
        let w = self.omega;
        omega_m
            / Complex64::new(
                self.omega_eff.powi(2) - w * w,
                -w * self.gamma_eff,
            )
    }

    /// Square of the effective frequency; can go negative past a static instability.
    pub fn omega_eff_sq(&self) -> f64 {
        self.omega_eff.signum() * self.omega_eff.powi(2)
    }
}

struct Cavity {
    kt: f64,
    dt: f64,
    ut: f64,
    pump: Complex64,
}

impl Cavity {
    fn new(b: &SteadyBranch) -> Self {
        Cavity {
            kt: b.kappa_tilde,
            dt: b.delta_tilde,
            ut: b.u_tilde,
            pump: 2.0 * I * b.u_tilde * Complex64::from_polar(1.0, -b.phi),
        }
    }

    /// χ_c⁻¹(ω) = κ̃ − i(ω + Δ̃)
    fn chi_inv(&self, w: f64) -> Complex64 {
        Complex64::new(self.kt, -(w + self.dt))
    }

    /// χ̃_c⁻¹(ω) = χ_c⁻¹(ω) + 2iŨe^{−iφ}
    fn chi_tilde_inv(&self, w: f64) -> Complex64 {
        self.chi_inv(w) + self.pump
    }

    fn denominator(&self, w: f64) -> Complex64 {
        self.chi_inv(w) * self.chi_inv(-w).conj() - 4.0 * self.ut * self.ut
    }
}

pub fn evaluate(params: &SystemParams, b: &SteadyBranch, omega: f64) -> Result<ResponseEval> {
    let cav = Cavity::new(b);
    let (wm, gm, g) = (params.omega_m, params.gamma_m, params.g);
    let w = omega;
    let sp = b.p_l.sqrt();
    let g2 = g * g;

    let den_pos = cav.denominator(w);
    let den_neg = cav.denominator(-w);
    let floor = DIVERGENCE_FLOOR * params.kappa * params.kappa;
    if den_pos.norm() < floor || den_neg.norm() < floor {
        return Err(Error::DivergentDenominator { omega });
    }

    let chi_m_inv = Complex64::new(wm * wm - w * w, -w * gm) / wm;
    let chi_c_inv = cav.chi_inv(w);
    let chi_c_tilde_inv = cav.chi_tilde_inv(w);
    let zeta = b.zeta;

    let xi_self_energy = -I * sp * g2
        * (chi_c_tilde_inv * zeta - (cav.chi_tilde_inv(-w) * zeta).conj())
        / den_pos;

    let force = |w: f64, den: Complex64| {
        I * (g / (2.0 * params.kappa).sqrt())
            * (sp * (params.kappa + b.kappa_tilde) * cav.chi_tilde_inv(w) / den - b.c_bar.conj())
    };
    let lambda_force = force(w, den_pos);
    let lambda_force_neg = force(-w, den_neg);

    let chi_eff = 1.0 / (chi_m_inv + xi_self_energy);

    let kt = b.kappa_tilde;
    let lam = kt * kt + b.delta_tilde.powi(2) - w * w - 4.0 * b.u_tilde.powi(2);
    let im0 = (cav.chi_tilde_inv(0.0) * zeta).im;
    let mu = -2.0 * im0 * lam + 4.0 * w * w * kt * b.c_i;
    let nu = -2.0 * lam * b.c_i - 4.0 * kt * im0;
    let norm = lam * lam + 4.0 * w * w * kt * kt;
    let omega_eff_sq = wm * wm - g2 * sp * wm * mu / norm;
    let gamma_eff = gm + g2 * sp * wm * nu / norm;

    Ok(ResponseEval {
        omega,
        chi_m_inv,
        chi_c_inv,
        chi_c_tilde_inv,
        xi_self_energy,
        lambda_force,
        lambda_force_neg,
        chi_eff,
        omega_eff: omega_eff_sq.signum() * omega_eff_sq.abs().sqrt(),
        gamma_eff,
        lam,
        mu,
        nu,
    })
}

/// Evaluate on a sorted grid; output order follows the grid.
pub fn response_curve(
    params: &SystemParams,
    b: &SteadyBranch,
    omega_grid: &[f64],
) -> Result<Vec<ResponseEval>> {
    if omega_grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidAxis("omega grid must be sorted".into()));
    }
    omega_grid
        .par_iter()
        .map(|&w| evaluate(params, b, w))
        .collect()
}

/// Location and width of the mechanical resonance of |χ_eff|², from the
/// self-consistent condition ω_p = ω_eff(ω_p).
pub fn mechanical_peak(params: &SystemParams, b: &SteadyBranch) -> Result<(f64, f64)> {
    let mut w = params.omega_m;
    for _ in 0..8 {
        let r = evaluate(params, b, w)?;
        if !(r.omega_eff > 0.0) {
            break;
        }
        w = r.omega_eff;
    }
    let r = evaluate(params, b, w)?;
    Ok((w, r.gamma_eff.abs().max(params.gamma_m * 1e-3)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{Config, OperatingPoint};
    use crate::steady_state::solve_selfconsistent;

    fn room() -> (SystemParams, OperatingPoint) {
        Config::preset("room_temp_membrane").unwrap().normalize().unwrap()
    }

    fn upper(p: &SystemParams, pt: &OperatingPoint) -> SteadyBranch {
        *solve_selfconsistent(p, pt).unwrap().branches.last().unwrap()
    }

    #[test]
    fn uncoupled_limit() {
        let (p, pt) = room();
        let p = p.with_g(0.0);
        let b = upper(&p, &pt);
        for w in [-3e6, 0.0, 1e5, p.omega_m] {
            let r = evaluate(&p, &b, w).unwrap();
            assert_eq!(r.xi_self_energy, Complex64::new(0.0, 0.0));
            assert_eq!(r.lambda_force, Complex64::new(0.0, 0.0));
            assert_eq!(r.omega_eff, p.omega_m);
            assert_eq!(r.gamma_eff, p.gamma_m);
            assert!((r.chi_eff * r.chi_m_inv - 1.0).norm() < 1e-15);
        }
    }

    #[test]
    fn susceptibility_consistency_and_evenness() {
        let (p, pt) = room();
        for (uhz, det) in [(50.0, 1.43), (100.0, 2.51), (150.0, 3.68), (200.0, 4.87)] {
            let pt = pt.with_kerr(uhz * 1e-6).with_detuning(det * p.kappa);
            let b = upper(&p, &pt);
            for k in -50..=50 {
                let w = k as f64 * 0.004 * p.kappa;
                let r = evaluate(&p, &b, w).unwrap();
                let m = evaluate(&p, &b, -w).unwrap();
                assert!((r.chi_eff * (r.chi_m_inv + r.xi_self_energy) - 1.0).norm() < 1e-12);
                assert_eq!(r.lam, m.lam);
                assert_eq!(r.mu, m.mu);
                assert_eq!(r.nu, m.nu);
                assert_eq!(r.omega_eff, m.omega_eff);
                assert_eq!(r.gamma_eff, m.gamma_eff);
                assert!((r.chi_eff.norm() / m.chi_eff.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn self_energy_scales_with_g_squared() {
        let (p, pt) = room();
        let pt = pt.with_kerr(100e-6).with_detuning(2.51 * p.kappa);
        let b = upper(&p, &pt);
        let weak = p.with_g(p.g / 10.0);
        let xi = evaluate(&p, &b, p.omega_m).unwrap().xi_self_energy;
        let xiw = evaluate(&weak, &b, p.omega_m).unwrap().xi_self_energy;
        assert!((xi / xiw - 100.0).norm() < 1e-10);
    }

    #[test]
    fn curve_rejects_unsorted_grid_and_handles_single_point() {
        let (p, pt) = room();
        let b = upper(&p, &pt);
        assert!(response_curve(&p, &b, &[1.0, 0.0]).is_err());
        let one = response_curve(&p, &b, &[0.0]).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one[0].chi_eff.norm().is_finite());
    }
}
